"""Verifiers for the lower-bound arguments: welfare dichotomies, ratio formulas, transcript checks."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Hashable, NamedTuple, Sequence

from .core import (
    Bundle,
    UsageError,
    Value,
    ValuationProfile,
    bundle,
    complement,
    golden_ratio_conjugate,
    is_feasible_allocation,
    items_of,
    sqrt3_minus_1,
    sqrt3_minus_1_times,
    welfare,
)
from .families import (
    AvgIntersectionFamily,
    KWidthFamily,
    SelectorPair,
    SetCoverValuation,
    instantiate_collection,
)
from .valuations import BXOSValuation, SingleMStarValuation

FORMULA_BITS = 64
SLACK = Fraction(1, 1 << 60)


# ---------------------------------------------------------------------------
# Bad 4-tuple dichotomy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BadTupleSpec:
    family: KWidthFamily
    ell: int
    selectors: tuple  # four SelectorPairs
    i_star: int
    j1: int
    j2: int

    def __post_init__(self):
        object.__setattr__(self, "selectors", tuple(self.selectors))
        if len(self.selectors) != 4:
            raise UsageError("a bad tuple has four selector pairs")
        s1, s2, s3, s4 = self.selectors
        i, j1, j2 = self.i_star, self.j1, self.j2
        k = self.family.k
        if not (0 <= i < k and 0 <= j1 < k and 0 <= j2 < k):
            raise UsageError("indices outside the family width")
        ok = (s1.b[i] == 0 and s2.b[i] == 0 and s3.b[i] == 1 and s4.b[i] == 1
              and s1.C[i][j1] == 0 and s2.C[i][j1] == 1
              and s3.C[i][j2] == 0 and s4.C[i][j2] == 1)
        if not ok:
            raise UsageError("selectors violate the structural bad-tuple conditions")


def default_bad_tuple(ell: int) -> BadTupleSpec:
    """Width-1 family on 6 items whose four instantiations are sparse for every ell."""
    G = bundle([1, 2, 3])
    F = KWidthFamily(6, 1, (G,), ((bundle([4]),),), ((bundle([1]),),))
    sels = tuple(SelectorPair((b,), ((c,),)) for b, c in ((0, 0), (0, 1), (1, 0), (1, 1)))
    return BadTupleSpec(F, ell, sels, 0, 0, 0)


class DichotomyReport(NamedTuple):
    low_ratio: Fraction
    high_ratio: Fraction
    bound: Fraction
    holds: bool
    low_cap: Value
    low_benchmark: Value
    high_cap: Value
    high_benchmark: Value
    low_allocation: tuple
    high_allocation: tuple
    transcript_conditions: str

    def to_json(self) -> dict:
        d = {}
        for k, v in self._asdict().items():
            if isinstance(v, tuple):
                d[k] = [items_of(x) for x in v]
            elif isinstance(v, (Fraction, Value)):
                d[k] = str(v)
            else:
                d[k] = v
        d["lowRatioApprox"] = float(self.low_ratio)
        d["highRatioApprox"] = float(self.high_ratio)
        return d


def sqrt3_bound(ell: int, bits: int = FORMULA_BITS) -> Fraction:
    """(sqrt(3) - 1)/2 + 3/ell with the constant at ``bits`` fractional bits."""
    return sqrt3_minus_1(bits).as_fraction() / 2 + Fraction(3, ell)


def bad_tuple_welfare_dichotomy(spec: BadTupleSpec, bits: int = FORMULA_BITS) -> DichotomyReport:
    """Welfare caps and benchmarks of the two price scenarios, on constructed valuations.

    Low price: the perturbed single-minded bidder takes the complement of
    G_i*, so welfare is at most its value plus the two set-cover values of
    G_i*, against the benchmark that splits the complement between the
    first two set-cover bidders. High price: the welfare is at most ell
    against the benchmark that gives the complement to the single-minded
    bidder and splits G_i* between the last two.
    """
    ell = spec.ell
    if ell < 3:
        raise UsageError("the dichotomy needs ell >= 3")
    F, i = spec.family, spec.i_star
    m = F.m
    vals = [SetCoverValuation(instantiate_collection(F, s).flat(), ell, m) for s in spec.selectors]
    a0 = SingleMStarValuation(F, i, 0, ell, bits)
    a1 = SingleMStarValuation(F, i, 1, ell, bits)
    G = F.G[i]
    Gbar = complement(G, m)
    h0 = F.H0[i][spec.j1]
    h1 = F.H1[i][spec.j2]

    if vals[0](G) != 1 or vals[1](G) != 1:
        raise AssertionError("set-cover value of G_i* is not 1 for the b=0 selectors")
    low_alloc = (0, Gbar & ~h0, h0)
    high_alloc = (Gbar, G & ~h1, h1)
    assert is_feasible_allocation(low_alloc, m) and is_feasible_allocation(high_alloc, m)

    low_cap = a1(Gbar) + vals[0](G) + vals[1](G)
    low_bench = welfare(ValuationProfile((a1, vals[0], vals[1]), m), low_alloc)
    high_cap = Value(ell)
    high_bench = welfare(ValuationProfile((a0, vals[2], vals[3]), m), high_alloc)
    low = low_cap.as_fraction() / low_bench.as_fraction()
    high = high_cap.as_fraction() / high_bench.as_fraction()
    bound = sqrt3_bound(ell, bits)
    return DichotomyReport(low, high, bound, max(low, high) < bound - SLACK,
                           low_cap, low_bench, high_cap, high_bench, low_alloc, high_alloc,
                           "not checked (no protocol transcript supplied)")


def sqrt3_dichotomy_formula(ell: int, bits: int = FORMULA_BITS) -> tuple[Fraction, Fraction, Fraction]:
    """The two scenario ratios and the bound, evaluated symbolically in ell."""
    if ell < 3:
        raise UsageError("the dichotomy needs ell >= 3")
    rho_ell = sqrt3_minus_1_times(ell, bits).as_fraction()
    low = (rho_ell + 3) / (2 * (ell - 1))
    high = Fraction(ell) / (rho_ell + 2 * (ell - 1))
    return low, high, sqrt3_bound(ell, bits)


# ---------------------------------------------------------------------------
# XOS collision and three-bidder formulas
# ---------------------------------------------------------------------------


def _inv_cbrt(m: int, bits: int) -> Fraction:
    """m**(-1/3), exact for perfect cubes and rounded down to ``bits`` bits otherwise."""
    r = round(m ** (1 / 3))
    for c in (r - 1, r, r + 1):
        if c > 0 and c ** 3 == m:
            return Fraction(1, c)
    # largest x with x^3 * m <= 2^(3*bits)
    target = (1 << (3 * bits)) // m
    lo, hi = 0, 1 << bits
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if mid ** 3 <= target:
            lo = mid
        else:
            hi = mid - 1
    return Fraction(lo, 1 << bits)


def sqrt5_bound(m: int, bits: int = FORMULA_BITS) -> Fraction:
    return golden_ratio_conjugate(bits).as_fraction() + 3 * _inv_cbrt(m, bits)


def xos_collision_formula(m: int, b=None, alpha=None,
                          bits: int = FORMULA_BITS) -> tuple[Fraction, Fraction, Fraction]:
    """Both scenario ratios and the bound; defaults b = m^(-1/3) and alpha = 0.618.. * b * m."""
    b = _inv_cbrt(m, bits) if b is None else Fraction(b)
    bm = b * m
    alpha = golden_ratio_conjugate(bits).as_fraction() * bm if alpha is None else Fraction(alpha)
    low = ((alpha + 1) + 2 * b * b * m) / bm
    high = bm / (alpha + bm)
    return low, high, sqrt5_bound(m, bits)


class CollisionReport(NamedTuple):
    witness: Bundle
    low_ratio: Fraction
    high_ratio: Fraction
    bound: Fraction
    holds: bool


def xos_collision_dichotomy(family: AvgIntersectionFamily, H: Sequence[Bundle], H2: Sequence[Bundle],
                            alpha=None, bits: int = FORMULA_BITS) -> CollisionReport:
    """Scenario ratios when two binary-XOS bidders would share one menu.

    ``H`` and ``H2`` are sub-collections of the family. The distinguishing
    set is the smallest member of one but not the other (H's side first).
    Actual binary-XOS values replace the intersection bound of the argument.
    """
    fam = set(family.sets)
    if not set(H) <= fam or not set(H2) <= fam:
        raise UsageError("sub-collections must come from the family")
    only1 = sorted(set(H) - set(H2))
    only2 = sorted(set(H2) - set(H))
    if not only1 and not only2:
        raise UsageError("identical sub-collections have no distinguishing set")
    if not only1:
        H, H2, only1 = H2, H, only2
    if not H2:
        raise UsageError("the collection missing the witness must be non-empty")
    w = only1[0]
    m = family.m
    universe = (1 << m) - 1
    vB, vB2 = BXOSValuation(H), BXOSValuation(H2)
    bm = vB(universe).as_fraction()
    alpha = golden_ratio_conjugate(bits).as_fraction() * family.b * m if alpha is None else Fraction(alpha)
    low = ((alpha + 1) + vB2(w).as_fraction()) / vB2(universe).as_fraction()
    high = bm / (alpha + vB(w).as_fraction())
    bound = golden_ratio_conjugate(bits).as_fraction() + 3 * _inv_cbrt(m, bits)
    return CollisionReport(w, low, high, bound, max(low, high) < bound - SLACK)


def _sqrt_fraction(x: Fraction, bits: int) -> Fraction:
    """sqrt(x) rounded down to ``bits`` fractional bits."""
    scale = 1 << (2 * bits)
    return Fraction(math.isqrt(x.numerator * scale // x.denominator), 1 << bits)


class ThreeBidderReport(NamedTuple):
    ratio: Fraction | None       # at the given alpha, if one was given
    alpha_star: Fraction         # minimizing alpha (per unit m)
    min_ratio: Fraction


def threebidder_attempt_ratio(b, alpha=None, m=1, bits: int = FORMULA_BITS) -> ThreeBidderReport:
    """max{(alpha + 2b^2 m)/(bm), (b - b^2/4) m/(alpha + bm)} and its minimum over alpha >= 0.

    The first term grows and the second shrinks in alpha, so the minimum sits
    at their crossing (a quadratic in alpha), or at alpha = 0 when the
    crossing is negative. The minimum does not depend on m.
    """
    b = Fraction(b)
    if not 0 < b <= 1:
        raise UsageError("b must lie in (0, 1]")

    def value(a, mm):
        return max((a + 2 * b * b * mm) / (b * mm), (b - b * b / 4) * mm / (a + b * mm))

    ratio = None if alpha is None else value(Fraction(alpha), Fraction(m))
    c, d, e = 2 * b * b, b, b - b * b / 4
    p, q = c + d, c * d - e * d
    disc = p * p - 4 * q
    x = (-p + _sqrt_fraction(disc, bits)) / 2
    x = max(x, Fraction(0))
    return ThreeBidderReport(ratio, x, value(x, Fraction(1)))


# ---------------------------------------------------------------------------
# Transcript maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TranscriptMap:
    """Finite map from input pairs (x, y) to transcript identifiers."""

    table: dict

    @classmethod
    def from_function(cls, xs, ys, f) -> "TranscriptMap":
        return cls({(x, y): f(x, y) for x in xs for y in ys})

    @classmethod
    def from_json(cls, d: dict) -> "TranscriptMap":
        inputs = [tuple(x) if isinstance(x, list) else x for x in d["inputs"]]
        return cls({(inputs[i], inputs[j]): t for i, j, t in d["map"]})

    def to_json(self) -> dict:
        inputs = sorted({x for x, _ in self.table} | {y for _, y in self.table}, key=repr)
        pos = {x: i for i, x in enumerate(inputs)}
        return {"inputs": [list(x) if isinstance(x, tuple) else x for x in inputs],
                "map": [[pos[x], pos[y], t] for (x, y), t in sorted(self.table.items(), key=repr)]}


class RectangleViolation(NamedTuple):
    transcript: Hashable
    pair: tuple         # a crossed input pair
    found: Hashable     # its transcript


def rectangle_check(tau: TranscriptMap) -> list[RectangleViolation]:
    """Every transcript's preimage must be the full product of its rows and columns.

    Crossed pairs outside the map's domain are ignored.
    """
    rows: dict = {}
    cols: dict = {}
    for (x, y), t in tau.table.items():
        rows.setdefault(t, []).append(x)
        cols.setdefault(t, []).append(y)
    out = []
    for t in sorted(rows, key=repr):
        for x in dict.fromkeys(rows[t]):
            for y in dict.fromkeys(cols[t]):
                got = tau.table.get((x, y), t)
                if got != t:
                    out.append(RectangleViolation(t, (x, y), got))
    return out


class CoverReport(NamedTuple):
    per_transcript: dict   # transcript -> (|I(T)|, per-index cell sets)
    max_I: int
    bound: int             # 3^K
    transcript_count: int
    lower_bound: Fraction  # (4/3)^K
    full_cells: list       # (transcript, index) pairs whose cell set is all of {1,2,3,4}
    passed: bool


def diagonal_cover_check(tau: TranscriptMap, K: int) -> CoverReport:
    """Per-transcript diagonal sets I(T) over strings in {1,2,3,4}^K.

    Each index of I(T) must miss at least one symbol, which caps |I(T)| at
    3^K and forces at least (4/3)^K distinct transcripts on the diagonal.
    """
    groups: dict = {}
    for s in itertools.product((1, 2, 3, 4), repeat=K):
        if (s, s) not in tau.table:
            raise UsageError(f"diagonal input {s} missing from the transcript map")
        groups.setdefault(tau.table[(s, s)], []).append(s)
    per, full = {}, []
    for t, strings in groups.items():
        cells = [frozenset(s[i] for s in strings) for i in range(K)]
        per[t] = (len(strings), cells)
        full.extend((t, i) for i, c in enumerate(cells) if len(c) == 4)
    max_I = max(n for n, _ in per.values())
    lower = Fraction(4 ** K, 3 ** K)
    passed = not full and max_I <= 3 ** K and len(groups) >= lower
    return CoverReport(per, max_I, 3 ** K, len(groups), lower, full, passed)


def full_revelation_map(K: int) -> TranscriptMap:
    """One side writes its whole input."""
    xs = list(itertools.product((1, 2, 3, 4), repeat=K))
    return TranscriptMap.from_function(xs, xs, lambda x, y: x)


def both_reveal_map(K: int) -> TranscriptMap:
    xs = list(itertools.product((1, 2, 3, 4), repeat=K))
    return TranscriptMap.from_function(xs, xs, lambda x, y: (x, y))


def constant_map(K: int) -> TranscriptMap:
    xs = list(itertools.product((1, 2, 3, 4), repeat=K))
    return TranscriptMap.from_function(xs, xs, lambda x, y: "T")


# ---------------------------------------------------------------------------
# Counting bounds
# ---------------------------------------------------------------------------


def _log2_4_3(bits: int) -> Value:
    with localcontext() as ctx:
        ctx.prec = bits // 3 + 30
        x = 2 - Decimal(3).ln() / Decimal(2).ln()
        return Value(int((x * (1 << bits)).to_integral_value()), bits)


def four_tuple_bound(K: int, bits: int = FORMULA_BITS) -> Value:
    """K * log2(4/3) bits, with log2(4/3) rounded to nearest at ``bits`` fractional bits."""
    if K < 0:
        raise UsageError("K must be non-negative")
    return _log2_4_3(bits) * K


def counting_bound(k: int, cc_sw: int) -> float:
    """log2(2^(k+k^2) / (2^k + 2^cc_sw)^k): the menu-counting lower bound in bits."""
    return k + k * k - k * math.log2((1 << k) + (1 << cc_sw))
