"""Seeded random instances shared by the invariant suite and the tests."""
from __future__ import annotations

import random

from .core import UsageError, Value
from .families import GenerationFailed, SetCoverValuation, is_l_sparse
from .valuations import SingleMindedValuation, XOSValuation


def random_mask(m: int, rng: random.Random, density: float = 0.5) -> int:
    return sum(1 << j for j in range(m) if rng.random() < density)


def random_sparse_collection(m: int, d: int, ell: int, rng: random.Random,
                             density: float | None = None, tries: int = 1000) -> list[int]:
    """d random sets, redrawn until no ell - 1 of them cover [m]."""
    if density is None:
        density = 0.5 if ell <= 3 else 1.0 / (ell - 1)
    for _ in range(tries):
        coll = [random_mask(m, rng, density) for _ in range(d)]
        if is_l_sparse(coll, ell, m).sparse:
            return coll
    raise GenerationFailed(f"no {ell}-sparse collection of {d} sets on {m} items")


def random_set_cover_valuation(m: int, ell: int, rng: random.Random, d: int | None = None):
    d = rng.randint(1, 5) if d is None else d
    return SetCoverValuation(random_sparse_collection(m, d, ell, rng), ell, m)


def random_xos(m: int, rng: random.Random, clauses: int | None = None,
               max_weight: int = 8, precision: int = 0) -> XOSValuation:
    clauses = rng.randint(1, 4) if clauses is None else clauses
    top = max_weight << precision
    return XOSValuation([[Value(rng.randint(0, top), precision) for _ in range(m)]
                         for _ in range(clauses)])


def random_single_minded(m: int, rng: random.Random, max_weight: int = 16,
                         precision: int = 0) -> SingleMindedValuation:
    if m < 1:
        raise UsageError("need at least one item")
    T = 0
    while T == 0:
        T = random_mask(m, rng)
    return SingleMindedValuation(Value(rng.randint(0, max_weight << precision), precision), T)


def random_additive(m: int, rng: random.Random, max_weight: int = 8) -> XOSValuation:
    return random_xos(m, rng, clauses=1, max_weight=max_weight)


def random_subbundle(mask: int, rng: random.Random) -> int:
    return mask & rng.getrandbits(max(mask.bit_length(), 1))


