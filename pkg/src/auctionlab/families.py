"""Hard-instance set families and the modified set-cover valuations built on them."""
from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    Bundle,
    LabError,
    UsageError,
    Valuation,
    Value,
    ValueTable,
    bundle,
    check_budget,
    complement,
    full_bundle,
    is_subset,
    items_of,
)

SET_COVER_M_LIMIT = 16


class NotSparse(UsageError):
    """A set-cover valuation was requested for a collection that is not ell-sparse."""


class NotWellDefined(LabError):
    """Two rules assigned different values to the same bundle during table fill."""


class GenerationFailed(LabError):
    """A randomized generator ran out of retries."""


def _rng(rng) -> random.Random:
    if isinstance(rng, random.Random):
        return rng
    if rng is None:
        raise UsageError("a seed or random.Random instance is required")
    return random.Random(rng)


# ---------------------------------------------------------------------------
# Width families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KWidthFamily:
    """Top-level sets ``G[i]`` plus two k-by-k layers inside each G_i and its complement."""

    m: int
    k: int
    G: tuple
    H0: tuple
    H1: tuple

    def __post_init__(self):
        object.__setattr__(self, "G", tuple(self.G))
        object.__setattr__(self, "H0", tuple(tuple(r) for r in self.H0))
        object.__setattr__(self, "H1", tuple(tuple(r) for r in self.H1))
        k, universe = self.k, full_bundle(self.m)
        if len(self.G) != k or len(self.H0) != k or len(self.H1) != k:
            raise UsageError("width family layers must have k rows")
        for i in range(k):
            if len(self.H0[i]) != k or len(self.H1[i]) != k:
                raise UsageError("width family second layer must be k x k")
            if self.G[i] & ~universe:
                raise UsageError(f"G[{i}] has items outside [m]")
            Gbar = complement(self.G[i], self.m)
            for j in range(k):
                if not is_subset(self.H0[i][j], Gbar):
                    raise UsageError(f"H0[{i}][{j}] is not inside the complement of G[{i}]")
                if not is_subset(self.H1[i][j], self.G[i]):
                    raise UsageError(f"H1[{i}][{j}] is not inside G[{i}]")

    def cell_variants(self, i: int, j: int) -> tuple:
        """The four possible sets of cell (i, j), indexed by ``2 * b[i] + C[i][j]``."""
        G = self.G[i]
        Gbar = complement(G, self.m)
        h0, h1 = self.H0[i][j], self.H1[i][j]
        return (G | h0, G | (Gbar & ~h0), Gbar | h1, Gbar | (G & ~h1))


@dataclass(frozen=True)
class SelectorPair:
    b: tuple
    C: tuple

    def __post_init__(self):
        object.__setattr__(self, "b", tuple(int(x) for x in self.b))
        object.__setattr__(self, "C", tuple(tuple(int(x) for x in row) for row in self.C))
        if any(x not in (0, 1) for x in self.b) or any(x not in (0, 1) for r in self.C for x in r):
            raise UsageError("selector entries must be bits")

    @property
    def k(self) -> int:
        return len(self.b)

    @classmethod
    def from_index(cls, idx: int, k: int) -> "SelectorPair":
        """Decode ``idx`` in [0, 2**(k + k*k)): the low k bits are b, the rest C row-major."""
        b = [idx >> i & 1 for i in range(k)]
        rest = idx >> k
        C = [[rest >> (i * k + j) & 1 for j in range(k)] for i in range(k)]
        return cls(tuple(b), tuple(tuple(r) for r in C))

    def to_json(self) -> dict:
        return {"b": list(self.b), "C": [list(r) for r in self.C]}


@dataclass(frozen=True)
class InstantiatedCollection:
    sets: tuple
    family: KWidthFamily
    selector: SelectorPair

    def flat(self) -> list[Bundle]:
        return [S for row in self.sets for S in row]

    def to_json(self) -> dict:
        return {"family": family_to_json(self.family), **self.selector.to_json(),
                "sets": [[items_of(S) for S in row] for row in self.sets]}


def instantiate_collection(F: KWidthFamily, sel: SelectorPair) -> InstantiatedCollection:
    if sel.k != F.k or any(len(r) != F.k for r in sel.C) or len(sel.C) != F.k:
        raise UsageError(f"selector dimensions do not match width {F.k}")
    sets = tuple(
        tuple(F.cell_variants(i, j)[2 * sel.b[i] + sel.C[i][j]] for j in range(F.k))
        for i in range(F.k)
    )
    return InstantiatedCollection(sets, F, sel)


class SparsityCheck(NamedTuple):
    sparse: bool
    witness: tuple | None  # positions in the collection whose union is [m]


def is_l_sparse(collection: Sequence[Bundle], ell: int, m: int,
                budget: int | None = None) -> SparsityCheck:
    """No ``ell - 1`` members of the collection cover [m].

    Distinct subsets of size 1..ell-1 are tried by increasing size, so the
    witness is the lexicographically first smallest cover.
    """
    universe = full_bundle(m)
    d = len(collection)
    if ell <= 1:
        # zero sets never cover a non-empty universe
        return SparsityCheck(True, None) if m > 0 else SparsityCheck(False, ())
    top = min(ell - 1, d)
    check_budget(sum(math.comb(d, t) for t in range(1, top + 1)), budget, "sparsity check")
    total = 0
    for S in collection:
        total |= S
    if total != universe:
        return SparsityCheck(True, None)
    for t in range(1, top + 1):
        for combo in itertools.combinations(range(d), t):
            u = 0
            for c in combo:
                u |= collection[c]
            if u == universe:
                return SparsityCheck(False, combo)
    return SparsityCheck(True, None)


class IndependenceCheck(NamedTuple):
    independent: bool
    mode: str
    checked: int
    selector: SelectorPair | None
    witness: tuple | None  # positions into the flattened collection


def is_l_independent(F: KWidthFamily, ell: int, mode: str = "exhaustive", rng=None,
                     trials: int = 1000, budget: int | None = None) -> IndependenceCheck:
    """Check every (exhaustive) or randomly drawn (sampled) selector pair for ell-sparsity.

    In sampled mode ``independent=True`` only means no violation was found
    in ``checked`` trials.
    """
    k = F.k
    variants = [[F.cell_variants(i, j) for j in range(k)] for i in range(k)]
    universe = full_bundle(F.m)

    def violation(sel: SelectorPair):
        coll = [variants[i][j][2 * sel.b[i] + sel.C[i][j]] for i in range(k) for j in range(k)]
        if ell == 2:  # fast path: a single set equal to [m]
            for pos, S in enumerate(coll):
                if S == universe:
                    return (pos,)
            return None
        res = is_l_sparse(coll, ell, F.m)
        return None if res.sparse else res.witness

    if mode == "exhaustive":
        total = 1 << (k + k * k)
        check_budget(total, budget, "exhaustive independence check")
        for idx in range(total):
            sel = SelectorPair.from_index(idx, k)
            w = violation(sel)
            if w is not None:
                return IndependenceCheck(False, mode, idx + 1, sel, w)
        return IndependenceCheck(True, mode, total, None, None)
    if mode == "sampled":
        r = _rng(rng)
        for t in range(trials):
            sel = SelectorPair.from_index(r.getrandbits(k + k * k), k)
            w = violation(sel)
            if w is not None:
                return IndependenceCheck(False, mode, t + 1, sel, w)
        return IndependenceCheck(True, mode, trials, None, None)
    raise UsageError(f"unknown mode {mode!r}")


def random_width_family(m: int, k: int, rng) -> KWidthFamily:
    """Two-layer random family: every item joins G_i w.p. 1/2, and each H
    cell keeps each item of its parent region w.p. 1/2."""
    r = _rng(rng)
    universe = full_bundle(m)
    G = [r.getrandbits(m) & universe if m else 0 for _ in range(k)]
    H0 = [[(r.getrandbits(m) if m else 0) & universe & ~G[i] for _ in range(k)] for i in range(k)]
    H1 = [[(r.getrandbits(m) if m else 0) & G[i] for _ in range(k)] for i in range(k)]
    return KWidthFamily(m, k, tuple(G), tuple(map(tuple, H0)), tuple(map(tuple, H1)))


def generate_independent_family(m: int, k: int, ell: int, rng, retries: int = 50,
                                mode: str = "exhaustive", budget: int | None = None):
    """Draw width families until one is ell-independent. Returns ``(family, check, attempts)``."""
    r = _rng(rng)
    last = None
    for attempt in range(1, retries + 1):
        F = random_width_family(m, k, r)
        last = is_l_independent(F, ell, mode=mode, rng=r, budget=budget)
        if last.independent:
            return F, last, attempt
    raise GenerationFailed(f"no {ell}-independent family in {retries} attempts (last: {last})")


def asymptotic_scale_parameters(m: int) -> dict:
    """The asymptotic choice ell = log2(m)/4, k = exp(2 sqrt(m) / log2 m), for reference only."""
    lg = math.log2(m)
    return {"m": m, "ell": lg / 4, "k": math.exp(2 * math.sqrt(m) / lg)}


# ---------------------------------------------------------------------------
# Set-cover valuations
# ---------------------------------------------------------------------------


def sigma(collection: Sequence[Bundle], ell: int, X: Bundle, budget: int | None = None) -> int:
    """Fewest members of the collection covering X; ``max(ell, d)`` when none can."""
    d = len(collection)
    if X == 0:
        return 0
    total = 0
    for S in collection:
        total |= S
    if not is_subset(X, total):
        return max(ell, d)
    for t in range(1, d + 1):
        check_budget(math.comb(d, t), budget, "sigma subset search")
        for combo in itertools.combinations(collection, t):
            u = 0
            for S in combo:
                u |= S
            if is_subset(X, u):
                return t
    raise AssertionError("unreachable: X is inside the union")


def sigma_table(collection: Sequence[Bundle], ell: int, m: int) -> np.ndarray:
    """sigma for every bundle at once.

    Breadth-first over unions reachable with t sets gives the cheapest exact
    union; a superset-minimum sweep then extends it to every covered bundle.
    """
    n = 1 << m
    d = len(collection)
    big = max(ell, d)
    best = np.full(n, big + 1, dtype=np.int64)
    best[0] = 0
    frontier = {0}
    seen = {0}
    t = 0
    while frontier and t < d:
        t += 1
        nxt = set()
        for u in frontier:
            for S in collection:
                w = u | S
                if w not in seen:
                    seen.add(w)
                    best[w] = t
                    nxt.add(w)
        frontier = nxt
    masks = np.arange(n, dtype=np.int64)
    for j in range(m):
        bit = 1 << j
        lo = masks[(masks & bit) == 0]
        best[lo] = np.minimum(best[lo], best[lo | bit])
    best[best > big] = big
    return best


class SetCoverValuation(Valuation):
    """Modified set-cover valuation of an ell-sparse collection.

    Bundles with sigma(X) < ell/2 get sigma(X) and their complements get
    ``ell - sigma(X)``; every other bundle gets ell/2. The full 2**m table is
    built at construction and any conflicting assignment raises
    :class:`NotWellDefined`. Values are stored in half units (precision 1).
    """

    kind = "set-cover"

    def __init__(self, collection: Sequence[Bundle], ell: int, m: int, budget: int | None = None):
        if m > SET_COVER_M_LIMIT:
            raise UsageError(f"set-cover tables are limited to m <= {SET_COVER_M_LIMIT}")
        if ell < 1:
            raise UsageError("ell must be positive")
        self.collection = tuple(collection)
        self.ell = ell
        self.m = m
        check = is_l_sparse(self.collection, ell, m, budget=budget)
        if not check.sparse:
            raise NotSparse(f"collection is not {ell}-sparse: sets {check.witness} cover [m]")
        sig = sigma_table(self.collection, ell, m)
        self._nums = _fill_table(sig, ell, m)

    def value(self, mask: Bundle) -> Value:
        return Value(int(self._nums[mask]), 1)

    def _build_table(self, m: int) -> ValueTable:
        if m != self.m:
            raise UsageError(f"set-cover valuation is defined on m={self.m}, not {m}")
        return ValueTable(self._nums, 1)


def _fill_table(sig: np.ndarray, ell: int, m: int) -> np.ndarray:
    full = (1 << m) - 1
    low = np.flatnonzero(2 * sig < ell)
    targets = np.concatenate([low, full ^ low])
    halves = np.concatenate([2 * sig[low], 2 * (ell - sig[low])])
    order = np.argsort(targets, kind="stable")
    t, h = targets[order], halves[order]
    same = t[1:] == t[:-1]
    clash = same & (h[1:] != h[:-1])
    if clash.any():
        X = int(t[1:][clash][0])
        raise NotWellDefined(f"bundle {items_of(X)} assigned two different values")
    out = np.full(1 << m, ell, dtype=np.int64)  # ell/2 in half units
    out[t] = h
    return out


def build_set_cover_valuation(collection: Sequence[Bundle], ell: int, m: int) -> SetCoverValuation:
    return SetCoverValuation(collection, ell, m)


def check_value_identities(F: KWidthFamily, ell: int, sel: SelectorPair) -> list[str]:
    """Evaluate the per-cell identities of a SubAdd* valuation; returns failures."""
    coll = instantiate_collection(F, sel)
    v = SetCoverValuation(coll.flat(), ell, F.m)
    m = F.m
    want_hi = Value(ell - 1)
    failures = []
    for i in range(F.k):
        G = F.G[i]
        Gbar = complement(G, m)
        if sel.b[i] == 0 and v(G) != 1:
            failures.append(f"v(G_{i}) = {v(G)} but b[{i}] = 0")
        if sel.b[i] == 1 and v(Gbar) != 1:
            failures.append(f"v(complement G_{i}) = {v(Gbar)} but b[{i}] = 1")
        for j in range(F.k):
            case = (sel.b[i], sel.C[i][j])
            target = {
                (0, 0): Gbar & ~F.H0[i][j],
                (0, 1): F.H0[i][j],
                (1, 0): G & ~F.H1[i][j],
                (1, 1): F.H1[i][j],
            }[case]
            if v(target) != want_hi:
                failures.append(f"cell ({i},{j}) case {case}: value {v(target)} != {ell - 1}")
    return failures


# ---------------------------------------------------------------------------
# Average-intersection collections
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AvgIntersectionFamily:
    m: int
    b: Fraction
    sets: tuple

    def __post_init__(self):
        object.__setattr__(self, "b", Fraction(self.b))
        object.__setattr__(self, "sets", tuple(self.sets))
        size = self.b * self.m
        if size.denominator != 1:
            raise UsageError("b*m must be an integer")
        if any(S.bit_count() != size or S >> self.m for S in self.sets):
            raise UsageError(f"every set must be a {size}-subset of [{self.m}]")
        if len(set(self.sets)) != len(self.sets):
            raise UsageError("sets must be distinct")
        worst = self.worst_intersection()
        if worst > self.cap:
            raise UsageError(f"pairwise intersection {worst} exceeds {self.cap}")

    @property
    def size(self) -> int:
        return int(self.b * self.m)

    @property
    def cap(self) -> Fraction:
        return 2 * self.b * self.b * self.m

    def worst_intersection(self) -> int:
        return max((a & c).bit_count() for a, c in itertools.combinations(self.sets, 2)) \
            if len(self.sets) > 1 else 0


def random_avg_intersection_family(m: int, b, target_size: int, rng,
                                   max_retries: int = 50) -> AvgIntersectionFamily:
    """Uniform random ``b*m``-subsets; sets in violating pairs are redrawn.

    One retry is one redraw round over all currently violating sets.
    """
    b = Fraction(b)
    size = b * m
    if size.denominator != 1 or not 0 < size <= m:
        raise UsageError("b*m must be an integer in 1..m")
    size = int(size)
    cap = 2 * b * b * m
    r = _rng(rng)

    # plain int masks: these families never need 2^m tables, so m may exceed one word
    def draw() -> int:
        return sum(1 << j for j in r.sample(range(m), size))

    sets = [draw() for _ in range(target_size)]
    worst = 0
    for _ in range(max_retries + 1):
        bad = set()
        worst = 0
        for a, c in itertools.combinations(range(len(sets)), 2):
            inter = (sets[a] & sets[c]).bit_count()
            worst = max(worst, inter)
            if inter > cap or sets[a] == sets[c]:
                bad.add(c)
        if not bad:
            return AvgIntersectionFamily(m, b, tuple(sets))
        for c in sorted(bad):
            sets[c] = draw()
    raise GenerationFailed(f"retries exhausted; worst intersection {worst} > {cap}")


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def family_to_json(F: KWidthFamily) -> dict:
    return {"m": F.m, "k": F.k,
            "G": [items_of(G) for G in F.G],
            "H0": [[items_of(h) for h in row] for row in F.H0],
            "H1": [[items_of(h) for h in row] for row in F.H1]}


def family_from_json(d: dict) -> KWidthFamily:
    return KWidthFamily(
        int(d["m"]), int(d["k"]),
        tuple(bundle(G) for G in d["G"]),
        tuple(tuple(bundle(h) for h in row) for row in d["H0"]),
        tuple(tuple(bundle(h) for h in row) for row in d["H1"]),
    )


def load_example_family() -> tuple[KWidthFamily, SelectorPair]:
    """The 6-item, width-2 worked example family and its example selector."""
    text = resources.files("auctionlab").joinpath("data/example_family.json").read_text()
    d = json.loads(text)
    return family_from_json(d["family"]), SelectorPair(d["b"], d["C"])
