"""Invariant suite run by ``auctionlab run-suite``: one small seeded check per property."""
from __future__ import annotations

import itertools
import random
from typing import Callable, NamedTuple

from .core import (
    Value,
    ValuationProfile,
    check_monotone_normalized,
    full_bundle,
    is_subset,
    welfare,
)
from .families import (
    SelectorPair,
    instantiate_collection,
    is_l_sparse,
    random_width_family,
)
from .instances import (
    random_set_cover_valuation,
    random_single_minded,
    random_sparse_collection,
    random_xos,
)
from .lowerbound import (
    bad_tuple_welfare_dichotomy,
    default_bad_tuple,
    diagonal_cover_check,
    four_tuple_bound,
    full_revelation_map,
    rectangle_check,
    sqrt3_dichotomy_formula,
)
from .mechanisms import (
    VCG,
    FiniteDomain,
    Menu,
    check_truthful,
    extract_menu,
    monotonize_menu,
    precision_align,
    replay_menu,
)
from .valuations import (
    BXOSValuation,
    SingleMindedValuation,
    SingleMStarValuation,
    TableValuation,
    check_subadditive,
)
from .welfare import (
    blackbox_reduction,
    exact_protocol,
    optimal_welfare,
    simultaneous_threshold_protocol,
)

MODULES = ("core", "valuations", "families", "welfare", "mechanisms", "lowerbound")


class CheckResult(NamedTuple):
    module: str
    check: str
    passed: bool
    detail: str


_CHECKS: list[tuple[str, str, Callable]] = []


def _check(module: str):
    def deco(fn):
        _CHECKS.append((module, fn.__name__.removeprefix("check_"), fn))
        return fn
    return deco


def _fail(msg):
    return False, msg


# core ----------------------------------------------------------------------


@_check("core")
def check_exact_arithmetic(rng):
    for _ in range(200):
        k = rng.randint(0, 40)
        a, b = Value(rng.getrandbits(60), k), Value(rng.getrandbits(60), k)
        if (a - b) + b != a:
            return _fail(f"({a} - {b}) + {b} != {a}")
    return True, "200 pairs"


@_check("core")
def check_welfare_permutation(rng):
    for _ in range(30):
        m = rng.randint(1, 6)
        vals = [random_xos(m, rng) for _ in range(3)]
        owner = [rng.randrange(4) for _ in range(m)]
        alloc = [sum(1 << j for j in range(m) if owner[j] == i) for i in range(3)]
        perm = rng.sample(range(3), 3)
        w1 = welfare(ValuationProfile(vals, m), alloc)
        w2 = welfare(ValuationProfile([vals[p] for p in perm], m), [alloc[p] for p in perm])
        if w1 != w2:
            return _fail(f"welfare changed under permutation {perm}")
    return True, "30 profiles"


@_check("core")
def check_monotone_fixture(rng, broken=False):
    values = {0b01: 3, 0b11: 2} if broken else {0b01: 2, 0b11: 3}
    v = TableValuation(values, 2, validate=False)
    bad = check_monotone_normalized(v, 2)
    if bad:
        return _fail(f"non-monotone fixture: v({bad[0][0]:b}) > v({bad[0][1]:b})")
    return True, "fixture monotone"


# valuations ----------------------------------------------------------------


@_check("valuations")
def check_xos_subadditive(rng):
    for _ in range(10):
        m = rng.randint(1, 6)
        v = random_xos(m, rng)
        bad = check_subadditive(v, m, limit=1)
        if bad:
            return _fail(f"XOS violation at {bad[0]}")
    return True, "10 random XOS, m <= 6"


@_check("valuations")
def check_bxos_matches_xos(rng):
    for _ in range(10):
        m = rng.randint(1, 8)
        coll = [rng.getrandbits(m) for _ in range(rng.randint(1, 4))]
        v = BXOSValuation(coll)
        if list(v.table(m).nums) != list(v.as_xos(m).table(m).nums):
            return _fail(f"BXOS and indicator XOS differ on {coll}")
    return True, "10 collections"


@_check("valuations")
def check_single_minded_complementarity(rng):
    for _ in range(10):
        m = rng.randint(2, 6)
        T = 0
        while T.bit_count() < 2:
            T = rng.getrandbits(m)
        v = SingleMindedValuation(rng.randint(1, 9), T)
        low = T & -T
        if not check_subadditive(v, m, limit=1) or v(low) + v(T ^ low) >= v(T):
            return _fail(f"no complementarity witness for T={T:b}")
    return True, "10 valuations"


@_check("valuations")
def check_single_m_star_agrees(rng):
    for _ in range(5):
        F = random_width_family(6, 2, rng)
        for i in range(2):
            v = SingleMStarValuation(F, i, rng.randint(0, 1), rng.randint(1, 9))
            w = v.as_single_minded()
            if any(v(S) != w(S) for S in range(64)):
                return _fail("SingleM* disagrees with its single-minded form")
    return True, "5 families"


# families ------------------------------------------------------------------


@_check("families")
def check_set_cover_properties(rng):
    for _ in range(8):
        m, ell = rng.randint(3, 8), rng.choice((3, 4, 5))
        v = random_set_cover_valuation(m, ell, rng)
        full = full_bundle(m)
        if check_monotone_normalized(v, m) or check_subadditive(v, m, limit=1):
            return _fail(f"set-cover property fails for {v.collection}")
        if any(v(X) + v(full ^ X) != ell for X in range(1 << m)):
            return _fail("complement identity fails")
        if any(v(S) != 1 or v(full ^ S) != ell - 1 for S in v.collection if S):
            return _fail("member identities fail")
    return True, "8 collections, m <= 8"


@_check("families")
def check_instantiation_structure(rng):
    for _ in range(20):
        F = random_width_family(rng.randint(2, 12), rng.randint(1, 3), rng)
        sel = SelectorPair.from_index(rng.getrandbits(F.k + F.k * F.k), F.k)
        c = instantiate_collection(F, sel)
        if c != instantiate_collection(F, sel):
            return _fail("instantiation is not deterministic")
        for i in range(F.k):
            base = F.G[i] if sel.b[i] == 0 else full_bundle(F.m) & ~F.G[i]
            if not all(is_subset(base, S) for S in c.sets[i]):
                return _fail(f"row {i} misses its base set")
    return True, "20 families"


@_check("families")
def check_sparsity_monotone_in_ell(rng):
    for _ in range(20):
        m = rng.randint(3, 10)
        coll = random_sparse_collection(m, rng.randint(1, 6), 4, rng)
        for ell in (2, 3, 4):
            if not is_l_sparse(coll, ell, m).sparse:
                return _fail(f"4-sparse collection not {ell}-sparse")
    return True, "20 collections"


# welfare -------------------------------------------------------------------


@_check("welfare")
def check_optimum_dominates(rng):
    for _ in range(10):
        m = rng.randint(1, 6)
        prof = ValuationProfile([random_xos(m, rng) for _ in range(3)], m)
        best, _ = optimal_welfare(prof)
        for _ in range(10):
            owner = [rng.randrange(4) for _ in range(m)]
            alloc = [sum(1 << j for j in range(m) if owner[j] == i) for i in range(3)]
            if welfare(prof, alloc) > best:
                return _fail("random allocation beats the oracle")
    return True, "10 profiles x 10 allocations"


@_check("welfare")
def check_reduction_exact(rng):
    for _ in range(10):
        m = rng.randint(2, 6)
        vals = [random_single_minded(m, rng) if rng.random() < 0.5
                else random_set_cover_valuation(m, 3, rng) for _ in range(3)]
        prof = ValuationProfile(vals, m)
        out = blackbox_reduction(exact_protocol, prof)
        if welfare(prof, out.allocation) != optimal_welfare(prof)[0]:
            return _fail("reduction misses the optimum")
    return True, "10 profiles, m <= 6"


@_check("welfare")
def check_threshold_two_messages(rng):
    for _ in range(10):
        m = rng.randint(1, 6)
        out = simultaneous_threshold_protocol(random_single_minded(m, rng), random_xos(m, rng), m)
        if len(out.ledger.messages) != 2:
            return _fail("threshold protocol used more than two messages")
    return True, "10 runs"


# mechanisms ----------------------------------------------------------------


@_check("mechanisms")
def check_vcg_truthful(rng):
    for _ in range(3):
        m = rng.randint(1, 3)
        dom = FiniteDomain([[random_xos(m, rng) for _ in range(3)] for _ in range(2)], m)
        bad = check_truthful(VCG(), dom, limit=1)
        if bad:
            return _fail(f"VCG violation {bad[0]}")
    return True, "3 domains"


@_check("mechanisms")
def check_monotonized_menu(rng):
    for _ in range(5):
        m = rng.randint(1, 4)
        v2 = random_xos(m, rng)
        probes = [SingleMindedValuation(w, T) for T in range(1, 1 << m) for w in (1, 5, 9)]
        mono = monotonize_menu(extract_menu(VCG(), 0, [v2], probes, m))
        pr = mono.priced()
        if pr.get(0) != 0:
            return _fail("menu not normalized")
        for S, T in itertools.combinations(pr, 2):
            if is_subset(S, T) and pr[S] > pr[T]:
                return _fail("menu not monotone")
        if replay_menu(mono):
            return _fail("replay lost a winner")
    return True, "5 menus"


@_check("mechanisms")
def check_precision_align(rng):
    for _ in range(10):
        prices = {S: Value(rng.randint(0, 1 << 12), 8) for S in range(8)}
        once = precision_align(Menu(prices, 3))
        if precision_align(once).entries != once.entries:
            return _fail("alignment not idempotent")
        for S, T in itertools.product(prices, repeat=2):
            if prices[S] <= prices[T] and once.entries[S] > once.entries[T]:
                return _fail("alignment not order-preserving")
    return True, "10 menus"


# lowerbound ----------------------------------------------------------------


@_check("lowerbound")
def check_sqrt3_sweep(rng):
    for ell in range(3, 2001):
        low, high, bound = sqrt3_dichotomy_formula(ell)
        if max(low, high) >= bound:
            return _fail(f"bound fails at ell={ell}")
    return True, "ell in 3..2000"


@_check("lowerbound")
def check_concrete_dichotomy(rng):
    for ell in range(3, 8):
        if not bad_tuple_welfare_dichotomy(default_bad_tuple(ell)).holds:
            return _fail(f"concrete dichotomy fails at ell={ell}")
    return True, "ell in 3..7"


@_check("lowerbound")
def check_diagonal_cover(rng):
    for K in (1, 2, 3):
        tau = full_revelation_map(K)
        if rectangle_check(tau) or not diagonal_cover_check(tau, K).passed:
            return _fail(f"full revelation rejected at K={K}")
    return True, "K in 1..3"


@_check("lowerbound")
def check_four_tuple_linear(rng):
    one = four_tuple_bound(1)
    if any(four_tuple_bound(K) != one * K for K in range(20)):
        return _fail("bound not linear in K")
    return True, "K < 20"


def run_suite(seed: int = 0, only: str | None = None, inject_broken: bool = False) -> list[CheckResult]:
    """Run every registered check (or one module's) with a per-check seeded RNG."""
    out = []
    for n, (module, name, fn) in enumerate(_CHECKS):
        if only is not None and module != only:
            continue
        rng = random.Random(seed * 1_000_003 + n)
        try:
            if name == "monotone_fixture":
                ok, detail = fn(rng, broken=inject_broken)
            else:
                ok, detail = fn(rng)
        except Exception as exc:  # a crash is a failed check, reported with its cause
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(module, name, ok, detail))
    return out
