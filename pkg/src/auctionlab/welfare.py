"""Welfare oracle, approximation ratios, and simple allocation protocols with bit accounting."""
from __future__ import annotations

import itertools
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
    allocation_to_json,
    check_budget,
    common_tables,
    full_bundle,
    get_precision,
    golden_ratio_conjugate,
    is_feasible_allocation,
    items_of,
)
from .valuations import SingleMindedValuation, SingleMStarValuation

AUCTIONEER = "auctioneer"


# ---------------------------------------------------------------------------
# Bit accounting
# ---------------------------------------------------------------------------


def bundle_bits(mask: Bundle, m: int) -> str:
    """Bundle as an m-character bit string, item 1 first."""
    return "".join("1" if mask >> j & 1 else "0" for j in range(m))


def value_bits(v: Value, precision: int | None = None) -> str:
    """Fixed-point encoding: k integer bits then k fractional bits.

    ``k`` is raised to the value's own precision when that is finer.
    """
    v = Value.of(v)
    k = max(get_precision() if precision is None else precision, v.precision)
    num = v.scaled(k)
    width = max(2 * k, 1)
    if num < 0 or num.bit_length() > width:
        raise UsageError(f"{v} does not fit a {width}-bit fixed-point field")
    return format(num, f"0{width}b")


@dataclass
class TranscriptLedger:
    """Append-only blackboard log; ``total_bits`` is the sum of payload lengths."""

    messages: list = field(default_factory=list)
    total_bits: int = 0

    def post(self, speaker, payload: str) -> None:
        if any(c not in "01" for c in payload):
            raise UsageError("payload must be a bit string")
        self.messages.append((speaker, payload))
        self.total_bits += len(payload)

    def extend(self, other: "TranscriptLedger") -> None:
        for speaker, payload in other.messages:
            self.post(speaker, payload)

    def transcript(self) -> tuple:
        return tuple(self.messages)


@dataclass
class ProtocolOutcome:
    allocation: tuple
    ledger: TranscriptLedger
    info: dict = field(default_factory=dict)

    def to_json(self, messages: bool = False) -> dict:
        d = {"allocation": allocation_to_json(self.allocation), "totalBits": self.ledger.total_bits}
        if messages:
            d["messages"] = [[str(s), p] for s, p in self.ledger.messages]
        d.update({k: v for k, v in self.info.items() if isinstance(v, (int, str, list))})
        return d


# ---------------------------------------------------------------------------
# Optimal welfare
# ---------------------------------------------------------------------------


def _assignment_bundles(n: int, item_bits: Sequence[int]) -> list[np.ndarray]:
    """Per-bidder bundle arrays over all n**len(item_bits) assignments.

    Assignment vectors are ordered lexicographically with the first listed
    item as the most significant digit.
    """
    bundles = [np.zeros(1, dtype=np.int64) for _ in range(n)]
    for bit in reversed(item_bits):
        bundles = [np.concatenate([b + (bit if d == i else 0) for d in range(n)])
                   for i, b in enumerate(bundles)]
    return bundles


def optimal_welfare(profile: ValuationProfile, items: Bundle | None = None,
                    budget: int | None = None) -> tuple[Value, tuple]:
    """Best welfare over allocations of ``items`` (default all of [m]).

    By monotonicity only full assignments (every item to some bidder) are
    searched; ties go to the lexicographically smallest assignment vector.
    Cost n**|items|.
    """
    n, m = profile.n, profile.m
    universe = full_bundle(m)
    items = universe if items is None else items
    if items & ~universe:
        raise UsageError("items outside [m]")
    if n == 0:
        return ZERO, ()
    bits = [1 << (j - 1) for j in items_of(items)]
    check_budget(n ** len(bits), budget, "optimal welfare enumeration")
    tabs, p = common_tables(profile.valuations, m)
    bundles = _assignment_bundles(n, bits)
    total = tabs[0][bundles[0]]
    for i in range(1, n):
        total = total + tabs[i][bundles[i]]
    best = int(np.argmax(total))
    alloc = tuple(int(b[best]) for b in bundles)
    return Value(int(total[best]), p), alloc


class RatioReport(NamedTuple):
    achieved: Value
    optimal: Value
    ratio: Fraction | None  # None when the optimum is 0

    @property
    def optimal_zero(self) -> bool:
        return self.ratio is None


def approx_ratio(outcome_welfare: Value, profile: ValuationProfile,
                 optimum: Value | None = None) -> RatioReport:
    opt = optimal_welfare(profile)[0] if optimum is None else optimum
    if opt == 0:
        return RatioReport(outcome_welfare, opt, None)
    return RatioReport(outcome_welfare, opt,
                       outcome_welfare.as_fraction() / opt.as_fraction())


# ---------------------------------------------------------------------------
# Protocols
# ---------------------------------------------------------------------------

# An inner protocol takes a profile and the set of items it may hand out.
InnerProtocol = Callable[[ValuationProfile, Bundle], ProtocolOutcome]


def exact_protocol(profile: ValuationProfile, items: Bundle | None = None,
                   precision: int | None = None) -> ProtocolOutcome:
    """Every bidder reveals its value for each sub-bundle of ``items``; the oracle allocates."""
    m = profile.m
    items = full_bundle(m) if items is None else items
    ledger = TranscriptLedger()
    subs = _sub_bundles(items)
    for i, v in enumerate(profile.valuations):
        ledger.post(i, "".join(value_bits(v.value(S), precision) for S in subs))
    _, alloc = optimal_welfare(profile, items)
    ledger.post(AUCTIONEER, "".join(bundle_bits(b, m) for b in alloc))
    return ProtocolOutcome(alloc, ledger)


def _sub_bundles(items: Bundle) -> list[Bundle]:
    out = [0]
    for j in items_of(items):
        bit = 1 << (j - 1)
        out += [S | bit for S in out]
    return out


def grand_bundle_to_best(profile: ValuationProfile, items: Bundle | None = None,
                         precision: int | None = None) -> ProtocolOutcome:
    """All available items to the bidder valuing them most; ties to the lowest index."""
    m = profile.m
    items = full_bundle(m) if items is None else items
    ledger = TranscriptLedger()
    vals = []
    for i, v in enumerate(profile.valuations):
        x = v.value(items)
        ledger.post(i, value_bits(x, precision))
        vals.append(x)
    alloc = [0] * profile.n
    if vals:
        winner = max(range(len(vals)), key=lambda i: (vals[i], -i))
        alloc[winner] = items
    return ProtocolOutcome(tuple(alloc), ledger)


def simultaneous_threshold_protocol(v1: SingleMindedValuation, v2: Valuation, m: int,
                                    precision: int | None = None) -> ProtocolOutcome:
    """Two simultaneous messages: bidder 1 posts (desired set, weight), bidder 2 posts v2([m]).

    Bidder 1 gets its desired set (bidder 2 the rest) when its weight is
    positive and at least the golden-ratio conjugate times v2([m]); otherwise
    bidder 2 gets everything. ``precision`` controls the rounding of the
    constant only.
    """
    if isinstance(v1, SingleMStarValuation):
        v1 = v1.as_single_minded()
    if not isinstance(v1, SingleMindedValuation):
        raise UsageError("bidder 1 must be single-minded")
    k = get_precision() if precision is None else precision
    universe = full_bundle(m)
    S = v1.desired
    grand = v2.value(universe)
    wire = max(k, v1.weight.precision, grand.precision)
    ledger = TranscriptLedger()
    ledger.post(0, bundle_bits(S, m) + value_bits(v1.weight, wire))
    ledger.post(1, value_bits(grand, wire))
    threshold = golden_ratio_conjugate(k) * grand
    if v1.weight > 0 and v1.weight >= threshold:
        alloc = (S, universe & ~S)
    else:
        alloc = (0, universe)
    return ProtocolOutcome(alloc, ledger, {"threshold": str(threshold)})


class ReductionError(LabError):
    """An inner protocol failed while the reduction was handling a particular K."""

    def __init__(self, K, cause):
        super().__init__(f"inner protocol failed for K={list(K)}: {cause}")
        self.K = tuple(K)
        self.cause = cause


def _as_single_minded(v: Valuation):
    if isinstance(v, SingleMStarValuation):
        return v.as_single_minded()
    if isinstance(v, SingleMindedValuation):
        return v
    return None


def feasible_single_minded_sets(desired: dict) -> list[tuple]:
    """Subsets K of single-minded bidders with pairwise-disjoint desired sets.

    Ordered by size, then lexicographically.
    """
    ids = sorted(desired)
    out = []
    for r in range(len(ids) + 1):
        for K in itertools.combinations(ids, r):
            used = 0
            ok = True
            for i in K:
                if desired[i] & used:
                    ok = False
                    break
                used |= desired[i]
            if ok:
                out.append(K)
    return out


def blackbox_reduction(inner: InnerProtocol, profile: ValuationProfile,
                       precision: int | None = None) -> ProtocolOutcome:
    """Extend an inner protocol to profiles that also contain single-minded bidders.

    Each bidder declares whether it is single-minded; single-minded bidders
    post (desired set, weight). For every feasible K the members of K get
    their desired sets, the other single-minded bidders get nothing, and the
    inner protocol splits the remaining items among the other bidders. Every
    bidder then reports its value for its candidate bundle, and the best
    candidate (first in enumeration order on ties) is returned.
    """
    n, m = profile.n, profile.m
    universe = full_bundle(m)
    ledger = TranscriptLedger()
    sm = {}
    for i, v in enumerate(profile.valuations):
        s = _as_single_minded(v)
        ledger.post(i, "1" if s is not None else "0")
        if s is not None:
            sm[i] = s
    wire = max([precision if precision is not None else get_precision()]
               + [s.weight.precision for s in sm.values()])
    for i, s in sm.items():
        ledger.post(i, bundle_bits(s.desired, m) + value_bits(s.weight, wire))
    others = [i for i in range(n) if i not in sm]
    sub_profile = ValuationProfile(tuple(profile[i] for i in others), m)

    best, best_alloc, best_K = None, None, None
    feasible = feasible_single_minded_sets({i: s.desired for i, s in sm.items()})
    inner_bits = []
    wire_used = wire
    for K in feasible:
        alloc = [0] * n
        used = 0
        for i in K:
            alloc[i] = sm[i].desired
            used |= sm[i].desired
        rest = universe & ~used
        try:
            sub = inner(sub_profile, rest)
        except LabError as exc:
            raise ReductionError(K, exc) from exc
        if len(sub.allocation) != len(others) or any(b & ~rest for b in sub.allocation):
            raise ReductionError(K, "inner protocol allocated unavailable items")
        ledger.extend(sub.ledger)
        inner_bits.append(sub.ledger.total_bits)
        for i, b in zip(others, sub.allocation):
            alloc[i] = b
        total = ZERO
        for i in range(n):
            x = profile[i].value(alloc[i])
            wire_used = max(wire_used, x.precision)
            ledger.post(i, value_bits(x, max(wire, x.precision)))
            total = total + x
        if best is None or total > best:
            best, best_alloc, best_K = total, tuple(alloc), K
    assert is_feasible_allocation(best_alloc, m)
    info = {"K": list(best_K), "feasibleK": len(feasible),
            "innerBitsMax": max(inner_bits), "welfare": str(best), "wire": wire_used,
            "singleMinded": len(sm)}
    return ProtocolOutcome(best_alloc, ledger, info)


def reduction_bit_bound(feasible_k: int, inner_bits_max: int, n: int, n_single: int,
                        m: int, wire: int) -> int:
    """Communication bound of the reduction: declarations, single-minded
    reports, then per K one inner run plus n value reports."""
    value_width = max(2 * wire, 1)
    return feasible_k * (inner_bits_max + n * value_width) + n + n_single * (m + value_width)
