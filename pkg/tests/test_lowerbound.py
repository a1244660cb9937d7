import itertools
import random
from fractions import Fraction

import pytest

from auctionlab.core import UsageError, Value, ValuationProfile, golden_ratio_conjugate, sqrt3_minus_1_times
from auctionlab.families import (
    AvgIntersectionFamily,
    SelectorPair,
    SetCoverValuation,
    instantiate_collection,
    load_example_family,
    random_avg_intersection_family,
)
from auctionlab.lowerbound import (
    BadTupleSpec,
    TranscriptMap,
    bad_tuple_welfare_dichotomy,
    both_reveal_map,
    constant_map,
    counting_bound,
    default_bad_tuple,
    diagonal_cover_check,
    four_tuple_bound,
    full_revelation_map,
    rectangle_check,
    sqrt3_dichotomy_formula,
    threebidder_attempt_ratio,
    xos_collision_dichotomy,
    xos_collision_formula,
)
from auctionlab.valuations import SingleMStarValuation
from auctionlab.welfare import optimal_welfare

GOLDEN = 0.6180339887498949


# --- sqrt(3) dichotomy --------------------------------------------------------


def test_dichotomy_formula_reference_values():
    # frozen from a 300-bit evaluation
    low, high, bound = sqrt3_dichotomy_formula(100)
    assert abs(float(max(low, high)) - 0.384874145236807) < 1e-12
    assert abs(float(high) - 0.3687) < 1e-4
    assert max(low, high) < bound
    low, high, _ = sqrt3_dichotomy_formula(10 ** 4)
    assert abs(float(max(low, high)) - 0.366212024986937) < 1e-12


def test_dichotomy_formula_below_bound_on_sampled_ells():
    for ell in itertools.chain(range(3, 200), range(200, 10 ** 4 + 1, 97), [10 ** 4]):
        low, high, bound = sqrt3_dichotomy_formula(ell)
        assert max(low, high) < bound


def test_dichotomy_rejects_small_ell():
    with pytest.raises(UsageError):
        sqrt3_dichotomy_formula(2)
    F, _ = load_example_family()
    sels = [SelectorPair((b, 0), ((c, 0), (c, 0))) for b, c in ((0, 0), (0, 1), (1, 0), (1, 1))]
    with pytest.raises(UsageError):
        bad_tuple_welfare_dichotomy(BadTupleSpec(F, 2, sels, 0, 0, 0))


def test_bad_tuple_structure_is_validated():
    spec = default_bad_tuple(4)
    s = list(spec.selectors)
    with pytest.raises(UsageError):
        BadTupleSpec(spec.family, 4, [s[1], s[0], s[2], s[3]], 0, 0, 0)
    with pytest.raises(UsageError):
        BadTupleSpec(spec.family, 4, s[:3], 0, 0, 0)


@pytest.mark.parametrize("ell", [3, 4, 5, 10, 50])
def test_constructed_dichotomy_matches_formula(ell):
    rep = bad_tuple_welfare_dichotomy(default_bad_tuple(ell))
    assert rep.holds
    assert (rep.low_ratio, rep.high_ratio) == sqrt3_dichotomy_formula(ell)[:2]
    rho = sqrt3_minus_1_times(ell, 64)
    assert rep.low_cap == rho + 3 and rep.low_benchmark == 2 * (ell - 1)
    assert rep.high_benchmark == rho + 2 * (ell - 1)
    assert "not checked" in rep.transcript_conditions


def test_high_scenario_optimum_reaches_benchmark():
    ell = 4
    spec = default_bad_tuple(ell)
    rep = bad_tuple_welfare_dichotomy(spec)
    F = spec.family
    vals = [SetCoverValuation(instantiate_collection(F, s).flat(), ell, F.m) for s in spec.selectors[2:]]
    prof = ValuationProfile((SingleMStarValuation(F, 0, 0, ell, 64), *vals), F.m)
    assert optimal_welfare(prof)[0] >= rep.high_benchmark


def test_dichotomy_report_json():
    d = bad_tuple_welfare_dichotomy(default_bad_tuple(5)).to_json()
    assert d["holds"] is True
    assert d["low_allocation"] == [[], [5, 6], [4]]
    assert d["high_allocation"] == [[4, 5, 6], [2, 3], [1]]


# --- sqrt(5) collision ------------------------------------------------------


@pytest.mark.parametrize("m,value,bound", [
    (10 ** 3, 0.828, 0.918),
    (10 ** 6, 0.638, 0.648),
    (10 ** 9, 0.620035, 0.621034),
])
def test_collision_formula_rows(m, value, bound):
    low, high, bnd = xos_collision_formula(m)
    top = max(low, high)
    assert top < bnd
    assert abs(float(top) - value) < 1e-3 and abs(float(bnd) - bound) < 1e-3


def test_collision_formula_tends_to_golden_ratio():
    low, high, _ = xos_collision_formula(10 ** 9)
    assert abs(float(max(low, high)) - GOLDEN) < 1e-2


def test_collision_formula_example_with_explicit_alpha():
    low, high, _ = xos_collision_formula(1000, Fraction(1, 10), Fraction(618, 10))
    assert low == Fraction(828, 1000) and high == Fraction(100, 1618) * 10


def test_collision_dichotomy_on_generated_family():
    fam = random_avg_intersection_family(64, Fraction(1, 4), 6, random.Random(5))
    H, H2 = fam.sets[:4], fam.sets[1:4]
    rep = xos_collision_dichotomy(fam, H, H2)
    assert rep.witness == fam.sets[0]
    alpha = golden_ratio_conjugate(64).as_fraction() * 16
    assert rep.high_ratio == 16 / (alpha + 16)
    with pytest.raises(UsageError):
        xos_collision_dichotomy(fam, H, H)


def test_collision_rejects_foreign_sets():
    fam = AvgIntersectionFamily(8, Fraction(1, 2), (0b1111, 0b11110000))
    with pytest.raises(UsageError):
        xos_collision_dichotomy(fam, [0b1111], [0b111])


# --- three-bidder attempt -----------------------------------------------------


def test_three_bidder_substitution():
    assert threebidder_attempt_ratio(1, 0, m=5).ratio == 2


@pytest.mark.parametrize("b,expected", [
    (Fraction(1, 2), 1.0),
    (Fraction(1, 10), 0.665363787633126),
    (Fraction(1, 100), 0.622474718813870),
])
def test_three_bidder_minimum(b, expected):
    # expected values: crossing point found by 250-step bisection at 60 digits
    rep = threebidder_attempt_ratio(b)
    assert abs(float(rep.min_ratio) - expected) < 1e-8


def test_three_bidder_minimum_decreases_toward_golden_ratio():
    mins = [threebidder_attempt_ratio(Fraction(1, d)).min_ratio for d in (2, 10, 100, 1000)]
    assert all(a >= b for a, b in zip(mins, mins[1:]))
    assert abs(float(mins[-1]) - GOLDEN) < 1e-2
    small = threebidder_attempt_ratio(Fraction(1, 100), alpha=GOLDEN * 0.01 * 1000, m=1000)
    assert abs(float(small.ratio) - GOLDEN) < 0.03


def test_three_bidder_minimum_beats_a_grid():
    b = Fraction(1, 10)
    rep = threebidder_attempt_ratio(b)
    for a in range(0, 400):
        r = threebidder_attempt_ratio(b, Fraction(a, 1000)).ratio
        assert r >= rep.min_ratio - Fraction(1, 2 ** 50)


def test_three_bidder_rejects_bad_b():
    with pytest.raises(UsageError):
        threebidder_attempt_ratio(0)


# --- transcripts ---------------------------------------------------------------


def test_rectangle_examples():
    xs = [1, 2, 3]
    assert rectangle_check(TranscriptMap.from_function(xs, xs, lambda x, y: x)) == []
    assert rectangle_check(TranscriptMap.from_function(xs, xs, lambda x, y: 0)) == []
    bad = TranscriptMap({(1, 1): "A", (2, 2): "A", (1, 2): "B", (2, 1): "C"})
    found = rectangle_check(bad)
    assert {v.pair for v in found} == {(1, 2), (2, 1)}


def test_rectangle_holds_for_real_protocol_transcripts():
    # two-round protocol: x reveals its parity, then y reveals y mod 3
    xs, ys = range(6), range(6)
    tau = TranscriptMap.from_function(xs, ys, lambda x, y: (x % 2, y % 3))
    assert rectangle_check(tau) == []


def test_transcript_map_json_round_trip():
    tau = both_reveal_map(1)
    assert TranscriptMap.from_json(tau.to_json()) == tau


@pytest.mark.parametrize("K", [1, 2, 3])
def test_full_revelation_passes_cover_check(K):
    rep = diagonal_cover_check(full_revelation_map(K), K)
    assert rep.passed and rep.max_I == 1 and rep.transcript_count == 4 ** K
    assert rectangle_check(full_revelation_map(K)) == []


def test_constant_map_fails_cover_check():
    rep = diagonal_cover_check(constant_map(1), 1)
    assert not rep.passed and rep.full_cells == [("T", 0)]


def test_cover_check_needs_whole_diagonal():
    with pytest.raises(UsageError):
        diagonal_cover_check(TranscriptMap({((1,), (1,)): 0}), 1)


def test_cover_check_on_a_three_symbol_merge():
    # symbols 1 and 2 share a transcript, so each cell set has at most three symbols
    xs = list(itertools.product((1, 2, 3, 4), repeat=2))
    tau = TranscriptMap.from_function(xs, xs, lambda x, y: tuple(1 if c == 2 else c for c in x))
    rep = diagonal_cover_check(tau, 2)
    assert rep.passed and rep.max_I == 4 and rep.transcript_count == 9


# --- counting --------------------------------------------------------------------


def test_four_tuple_bound_values():
    assert four_tuple_bound(0) == 0
    assert four_tuple_bound(10) == Value(76560905301892445120, 64)
    assert four_tuple_bound(10) == four_tuple_bound(1) * 10
    assert abs(float(four_tuple_bound(1)) - 0.415037499) < 1e-9
    with pytest.raises(UsageError):
        four_tuple_bound(-1)


def test_counting_bound_is_positive_when_the_welfare_protocol_is_cheap():
    assert counting_bound(10, 1) > 0
    assert counting_bound(4, 20) < 0
