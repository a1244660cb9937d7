"""Mechanisms, truthfulness checks, menus and taxation complexity, payment bounds."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .core import (
    ZERO,
    Bundle,
    LabError,
    UsageError,
    Valuation,
    ValuationProfile,
    Value,
    check_budget,
    full_bundle,
    get_precision,
    int_array,
    items_of,
)
from .valuations import SingleMindedValuation
from .welfare import ProtocolOutcome, optimal_welfare


class TaxationViolation(LabError):
    """Two reports gave bidder i the same bundle at different prices."""

    def __init__(self, bundle: Bundle, first, second):
        super().__init__(f"bundle {items_of(bundle)} sold at {first[1]} and at {second[1]}")
        self.bundle = bundle
        self.first = first
        self.second = second


# ---------------------------------------------------------------------------
# Mechanisms
# ---------------------------------------------------------------------------


class Mechanism:
    """Allocation plus payments. Subclasses implement :meth:`run`."""

    name = "mechanism"

    def run(self, profile: ValuationProfile) -> tuple[tuple, tuple]:
        raise NotImplementedError

    def __call__(self, profile):
        return self.run(profile)


class VCG(Mechanism):
    """Welfare-maximizing allocation with Clarke pivot payments."""

    name = "vcg"

    def __init__(self, budget: int | None = None):
        self.budget = budget

    def run(self, profile):
        opt, alloc = optimal_welfare(profile, budget=self.budget)
        payments = []
        for i in range(profile.n):
            others = opt - profile[i].value(alloc[i])
            without, _ = optimal_welfare(profile.without(i), budget=self.budget)
            payments.append(without - others)
        return alloc, tuple(payments)


class GrandBundleSecondPrice(Mechanism):
    """All items to the highest grand-bundle bid (lowest index on ties) at the second-highest bid."""

    name = "gb2p"

    def run(self, profile):
        universe = full_bundle(profile.m)
        bids = [v.value(universe) for v in profile.valuations]
        n = len(bids)
        alloc = [0] * n
        pay = [ZERO] * n
        if n:
            w = max(range(n), key=lambda i: (bids[i], -i))
            alloc[w] = universe
            rest = bids[:w] + bids[w + 1:]
            pay[w] = max(rest) if rest else ZERO
        return tuple(alloc), tuple(pay)


class FirstPriceGrandBundle(GrandBundleSecondPrice):
    """Same allocation, but the winner pays its own bid. Not truthful."""

    name = "gb1p"

    def run(self, profile):
        alloc, pay = super().run(profile)
        universe = full_bundle(profile.m)
        pay = tuple(profile[i].value(universe) if alloc[i] else ZERO
                    for i in range(profile.n))
        return alloc, pay


class ConstantMechanism(Mechanism):
    """Ignores reports."""

    name = "constant"

    def __init__(self, allocation: Sequence[Bundle], payments: Sequence | None = None):
        self.allocation = tuple(allocation)
        self.payments = tuple(Value.of(p) for p in payments) if payments else (ZERO,) * len(self.allocation)

    def run(self, profile):
        if profile.n != len(self.allocation):
            raise UsageError("constant mechanism built for a different bidder count")
        return self.allocation, self.payments


class PostedPriceMechanism(Mechanism):
    """Each bidder picks its favourite bundle from a fixed personal price list.

    Price lists must use pairwise-disjoint item regions so choices never
    collide; the empty bundle is always available at price 0. Ties go to
    the numerically smallest bundle.
    """

    name = "posted"

    def __init__(self, prices: Sequence[dict]):
        self.prices = [{int(S): Value.of(p) for S, p in P.items()} for P in prices]
        regions = [0] * len(self.prices)
        for i, P in enumerate(self.prices):
            for S in P:
                regions[i] |= S
        for a, b in itertools.combinations(range(len(regions)), 2):
            if regions[a] & regions[b]:
                raise UsageError("posted price lists must use disjoint items")

    def run(self, profile):
        if profile.n != len(self.prices):
            raise UsageError("price lists do not match the bidder count")
        alloc, pay = [], []
        for v, P in zip(profile.valuations, self.prices):
            offers = {0: ZERO, **P}
            best = min(offers, key=lambda S: (-(v.value(S) - offers[S]).as_fraction(), S))
            alloc.append(best)
            pay.append(offers[best])
        return tuple(alloc), tuple(pay)


class GrovesMechanism(VCG):
    """VCG with a constant added to each bidder's payment; still truthful."""

    name = "groves"

    def __init__(self, offsets: Sequence, budget: int | None = None):
        super().__init__(budget)
        self.offsets = tuple(Value.of(x) for x in offsets)

    def run(self, profile):
        alloc, pay = super().run(profile)
        return alloc, tuple(p + self.offsets[i] for i, p in enumerate(pay))


class ProtocolMechanism(Mechanism):
    """Wraps an allocation protocol; every payment is zero."""

    def __init__(self, protocol: Callable[[ValuationProfile], ProtocolOutcome], name: str = "protocol"):
        self.protocol = protocol
        self.name = name

    def run(self, profile):
        out = self.protocol(profile)
        return tuple(out.allocation), (ZERO,) * profile.n


class PrecisionAlignedMechanism(Mechanism):
    """Floors every payment of ``base`` to a multiple of ``grid``."""

    def __init__(self, base: Mechanism, grid=1):
        self.base = base
        self.grid = Value.of(grid)
        self.name = f"aligned-{base.name}"

    def run(self, profile):
        alloc, pay = self.base.run(profile)
        return alloc, tuple(p.floor_to(self.grid) for p in pay)


# ---------------------------------------------------------------------------
# Truthfulness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteDomain:
    """Per-bidder candidate valuations on a common item set."""

    domains: tuple
    m: int

    def __post_init__(self):
        object.__setattr__(self, "domains", tuple(tuple(d) for d in self.domains))
        if not self.domains or any(not d for d in self.domains):
            raise UsageError("every bidder needs a non-empty domain")

    @property
    def n(self) -> int:
        return len(self.domains)

    def profile(self, idx: Sequence[int]) -> ValuationProfile:
        return ValuationProfile(tuple(self.domains[i][j] for i, j in enumerate(idx)), self.m)


class TruthViolation(NamedTuple):
    bidder: int
    truth: int      # index of the true valuation in the bidder's domain
    lie: int        # index of the profitable misreport
    others: tuple   # domain indices of the other bidders
    gain: Value     # utility of lying minus utility of truth


def check_truthful(mech: Mechanism, domain: FiniteDomain, budget: int | None = None,
                   limit: int | None = None) -> list[TruthViolation]:
    """Exhaustive deviation sweep; an empty list means truthful on the domain."""
    sizes = [len(d) for d in domain.domains]
    check_budget(math.prod(sizes) * max(sizes), budget, "truthfulness sweep")
    cache: dict = {}

    def outcome(idx):
        if idx not in cache:
            cache[idx] = mech.run(domain.profile(idx))
        return cache[idx]

    out = []
    for idx in itertools.product(*(range(s) for s in sizes)):
        for i in range(domain.n):
            v = domain.domains[i][idx[i]]
            alloc, pay = outcome(idx)
            honest = v.value(alloc[i]) - pay[i]
            for lie in range(sizes[i]):
                if lie == idx[i]:
                    continue
                dev = idx[:i] + (lie,) + idx[i + 1:]
                a2, p2 = outcome(dev)
                gain = v.value(a2[i]) - p2[i] - honest
                if gain > 0:
                    out.append(TruthViolation(i, idx[i], lie, idx[:i] + idx[i + 1:], gain))
                    if limit is not None and len(out) >= limit:
                        return out
    return out


# ---------------------------------------------------------------------------
# Menus
# ---------------------------------------------------------------------------

UNATTAINABLE = None


@dataclass
class Menu:
    """Price per bundle for one bidder. ``None`` marks an unattainable bundle."""

    entries: dict
    m: int
    canonical: bool = False
    probes: list = field(default_factory=list, compare=False, repr=False)

    def price(self, S: Bundle):
        return self.entries.get(S, UNATTAINABLE)

    def priced(self) -> dict:
        return {S: p for S, p in self.entries.items() if p is not UNATTAINABLE}

    def key(self) -> tuple:
        """Hashable canonical form for counting distinct menus."""
        return tuple(sorted((S, p.as_fraction()) for S, p in self.priced().items()))

    def to_json(self) -> dict:
        return {"entries": [{"bundle": items_of(S), "price": str(p)}
                            for S, p in sorted(self.priced().items())],
                "canonical": self.canonical}


def extract_menu(mech: Mechanism, i: int, v_minus_i: Sequence[Valuation],
                 domain_i: Sequence[Valuation], m: int) -> Menu:
    """Probe bidder i with every valuation of ``domain_i`` against fixed others.

    Raises :class:`TaxationViolation` if one bundle appears at two prices.
    """
    others = list(v_minus_i)
    seen: dict = {}
    probes = []
    for v in domain_i:
        prof = ValuationProfile(tuple(others[:i] + [v] + others[i:]), m)
        alloc, pay = mech.run(prof)
        S, p = alloc[i], pay[i]
        probes.append((v, S, p))
        if S in seen and seen[S][1] != p:
            raise TaxationViolation(S, seen[S], (v, p))
        seen.setdefault(S, (v, p))
    return Menu({S: vp[1] for S, vp in seen.items()}, m, False, probes)


def monotonize_menu(menu: Menu) -> Menu:
    """Total, non-decreasing, normalized version of a menu.

    Each bundle takes the cheapest price among priced supersets; the result
    is shifted so the empty bundle costs 0. Bundles with no priced superset
    stay unattainable.
    """
    m = menu.m
    priced = menu.priced()
    if not priced:
        raise UsageError("cannot monotonize an empty menu")
    p = max(x.precision for x in priced.values())
    nums = {S: x.scaled(p) for S, x in priced.items()}
    lo = min(nums.values())
    shifted = {S: x - lo for S, x in nums.items()}  # keeps numbers non-negative
    top = max(shifted.values()) + 1
    best = int_array([top] * (1 << m))
    for S, x in shifted.items():
        best[S] = x
    masks = np.arange(1 << m, dtype=np.int64)
    for j in range(m):
        bit = 1 << j
        low = masks[(masks & bit) == 0]
        best[low] = np.minimum(best[low], best[low | bit])
    base = int(best[0])
    entries = {}
    for S in range(1 << m):
        x = int(best[S])
        entries[S] = UNATTAINABLE if x == top else Value(x - base, p)
    return Menu(entries, m, True, list(menu.probes))


def replay_menu(menu: Menu, probes=None) -> list:
    """Probes whose allocated bundle is not a utility maximizer under ``menu``.

    Each probe is ``(valuation, bundle, price)``; an empty list means every
    original winner is still a best response to the menu.
    """
    probes = menu.probes if probes is None else probes
    priced = menu.priced()
    bad = []
    for v, S, _ in probes:
        if S not in priced:
            bad.append((v, S, "bundle unpriced"))
            continue
        best = max((v.value(T) - x).as_fraction() for T, x in priced.items())
        if (v.value(S) - priced[S]).as_fraction() != best:
            bad.append((v, S, best))
    return bad


def precision_align(menu: Menu, grid=1) -> Menu:
    """Floor every price to a multiple of ``grid`` (integers by default)."""
    g = Value.of(grid)
    return Menu({S: (p if p is UNATTAINABLE else p.floor_to(g)) for S, p in menu.entries.items()},
                menu.m, menu.canonical, list(menu.probes))


class TaxationReport(NamedTuple):
    counts: tuple          # distinct canonical menus per bidder
    tax: float             # max over bidders of log2(count)


def taxation_complexity(mech: Mechanism, domain: FiniteDomain,
                        budget: int | None = None) -> TaxationReport:
    counts = []
    sizes = [len(d) for d in domain.domains]
    check_budget(math.prod(sizes) * domain.n, budget, "taxation complexity sweep")
    for i in range(domain.n):
        other_domains = domain.domains[:i] + domain.domains[i + 1:]
        menus = set()
        for others in itertools.product(*other_domains):
            menu = extract_menu(mech, i, others, domain.domains[i], domain.m)
            menus.add(monotonize_menu(menu).key())
        counts.append(len(menus))
    return TaxationReport(tuple(counts), max(math.log2(c) for c in counts))


# ---------------------------------------------------------------------------
# Payment bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PaymentBoundValuations:
    """Single-minded probes on S whose weights bracket bidder 1's price for S.

    ``upper_exact`` and ``lower_exact`` are the exact rational weights (the
    lower one before clamping at 0 is ``lower_unclamped``); the valuations
    round them outward to the working precision.
    """

    alpha: Fraction
    eps: Fraction
    S: Bundle
    grand: Fraction
    rest: Fraction
    upper: SingleMindedValuation
    lower: SingleMindedValuation

    @property
    def upper_exact(self) -> Fraction:
        return self.grand / self.alpha - self.rest + self.eps

    @property
    def lower_unclamped(self) -> Fraction:
        return self.alpha * self.grand - self.rest - self.eps

    @property
    def lower_exact(self) -> Fraction:
        return max(self.lower_unclamped, Fraction(0))


def payment_bound_valuations(v2: Valuation, alpha, eps, S: Bundle, m: int,
                             precision: int | None = None) -> PaymentBoundValuations:
    alpha, eps = Fraction(alpha), Fraction(eps)
    if not 0 < alpha <= 1:
        raise UsageError("alpha must lie in (0, 1]")
    if eps <= 0:
        raise UsageError("epsilon must be positive")
    if S == 0 or S & ~full_bundle(m):
        raise UsageError("S must be a non-empty subset of [m]")
    k = get_precision() if precision is None else precision
    universe = full_bundle(m)
    grand = v2.value(universe).as_fraction()
    rest = v2.value(universe & ~S).as_fraction()
    up = grand / alpha - rest + eps
    low = max(alpha * grand - rest - eps, Fraction(0))
    return PaymentBoundValuations(
        alpha, eps, S, grand, rest,
        SingleMindedValuation(Value.rounded(up, k, "ceil"), S),
        SingleMindedValuation(Value.rounded(low, k, "floor"), S),
    )


class SandwichReport(NamedTuple):
    status: str                 # "pass", "fail" or "inconclusive"
    delta: Fraction | None      # monotonized Menu(S) - Menu(empty)
    upper: Fraction
    lower: Fraction
    detail: str


def payment_sandwich_check(mech: Mechanism, v2: Valuation, S: Bundle, eps, m: int,
                           alpha=1, precision: int | None = None,
                           extra_probes: Sequence[Valuation] = ()) -> SandwichReport:
    """Bidder 1's menu price for S, against the two payment bounds.

    The menu is extracted by probing with the upper and lower valuations
    (plus ``extra_probes``) and then monotonized; when no probed bundle
    contains S the result is inconclusive.
    """
    pb = payment_bound_valuations(v2, alpha, eps, S, m, precision)
    menu = extract_menu(mech, 0, [v2], [pb.upper, pb.lower, *extra_probes], m)
    mono = monotonize_menu(menu)
    hi, lo = pb.upper_exact, pb.lower_unclamped
    pS, p0 = mono.price(S), mono.price(0)
    if pS is UNATTAINABLE or p0 is UNATTAINABLE:
        return SandwichReport("inconclusive", None, hi, lo, "no probed bundle contains S")
    delta = (pS - p0).as_fraction()
    ok = lo <= delta <= hi
    return SandwichReport("pass" if ok else "fail", delta, hi, lo,
                          f"{lo} <= {delta} <= {hi}")
