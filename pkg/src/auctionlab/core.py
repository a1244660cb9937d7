"""Items, bundles, exact dyadic values, the valuation interface and welfare.

Items are numbered 1..m. A bundle is an ``int`` bit set where item ``j``
lives in bit ``j - 1``; allocations are tuples of bundles, one per bidder.
"""
from __future__ import annotations

import contextlib
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence

import numpy as np

MAX_ITEMS = 63
MONOTONE_CHECK_LIMIT = 16
DEFAULT_PRECISION = 20
DEFAULT_BUDGET = 5_000_000

_precision = DEFAULT_PRECISION
_budget = DEFAULT_BUDGET


class LabError(Exception):
    """Base class for errors raised by this package."""


class UsageError(LabError, ValueError):
    """Bad arguments: dimension mismatch, out-of-range parameter, etc."""


class BudgetExceeded(UsageError):
    """An exhaustive enumeration would exceed its configured cap."""


def get_precision() -> int:
    return _precision


def set_precision(k: int) -> None:
    global _precision
    if k < 0:
        raise UsageError(f"precision must be non-negative, got {k}")
    _precision = k


@contextlib.contextmanager
def precision(k: int):
    """Temporarily change the global fixed-point precision."""
    old = get_precision()
    set_precision(k)
    try:
        yield
    finally:
        set_precision(old)


def get_budget() -> int:
    return _budget


def set_budget(limit: int) -> None:
    """Default cap on exhaustive enumerations when a call passes no explicit budget."""
    global _budget
    if limit <= 0:
        raise UsageError("budget must be positive")
    _budget = limit


def check_budget(count: int, limit: int | None, what: str) -> None:
    limit = _budget if limit is None else limit
    if count > limit:
        raise BudgetExceeded(f"{what}: {count} cases exceeds budget {limit}")


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


class Value:
    """An exact dyadic rational ``numerator / 2**precision``.

    Arithmetic aligns operands to the larger precision, so sums, differences
    and integer multiples are exact. Equality and hashing are numeric:
    ``Value(1, 0) == Value(2, 1)``.
    """

    __slots__ = ("numerator", "precision")

    def __init__(self, numerator: int, precision: int = 0):
        if precision < 0:
            raise UsageError("precision must be non-negative")
        self.numerator = int(numerator)
        self.precision = int(precision)

    # construction -----------------------------------------------------
    @classmethod
    def of(cls, x, precision: int | None = None) -> "Value":
        """Exact conversion; raises if ``x`` is not a dyadic rational."""
        if isinstance(x, Value):
            return x if precision is None else x.at(precision)
        if isinstance(x, str):
            return cls.parse(x) if precision is None else cls.parse(x).at(precision)
        if isinstance(x, float):
            x = Fraction(x)
        fr = Fraction(x)
        den = fr.denominator
        if den & (den - 1):
            raise UsageError(f"{x} is not a dyadic rational")
        k = den.bit_length() - 1
        val = cls(fr.numerator, k)
        return val if precision is None else val.at(precision)

    @classmethod
    def rounded(cls, x, precision: int | None = None, mode: str = "nearest") -> "Value":
        """Round a rational to the grid of ``2**-precision``.

        ``mode`` is one of ``nearest`` (ties away from zero), ``floor``, ``ceil``.
        """
        k = get_precision() if precision is None else precision
        fr = Fraction(x) * (1 << k)
        if mode == "floor":
            n = math.floor(fr)
        elif mode == "ceil":
            n = math.ceil(fr)
        elif mode == "nearest":
            n = math.floor(fr + Fraction(1, 2)) if fr >= 0 else -math.floor(-fr + Fraction(1, 2))
        else:
            raise UsageError(f"unknown rounding mode {mode!r}")
        return cls(n, k)

    @classmethod
    def parse(cls, text: str) -> "Value":
        """Parse ``"n/2^k"`` (or a bare integer)."""
        text = text.strip()
        if "/2^" in text:
            num, k = text.split("/2^")
            return cls(int(num), int(k))
        return cls(int(text), 0)

    # conversion -------------------------------------------------------
    def at(self, precision: int) -> "Value":
        """Re-express at another precision; refuses to lose bits."""
        if precision >= self.precision:
            return Value(self.numerator << (precision - self.precision), precision)
        shift = self.precision - precision
        if self.numerator & ((1 << shift) - 1):
            raise UsageError(f"{self} is not representable at precision {precision}")
        return Value(self.numerator >> shift, precision)

    def scaled(self, precision: int) -> int:
        """Numerator at ``precision`` (which must not lose bits)."""
        return self.at(precision).numerator

    def as_fraction(self) -> Fraction:
        return Fraction(self.numerator, 1 << self.precision)

    def floor_to(self, grid: "Value") -> "Value":
        """Largest multiple of ``grid`` not exceeding self."""
        p = max(self.precision, grid.precision)
        a, g = self.scaled(p), grid.scaled(p)
        if g <= 0:
            raise UsageError("grid must be positive")
        return Value((a // g) * g, p)

    def __float__(self) -> float:
        return float(self.as_fraction())

    def __str__(self) -> str:
        return f"{self.numerator}/2^{self.precision}"

    def __repr__(self) -> str:
        return f"Value({self.numerator}, {self.precision})"

    # arithmetic -------------------------------------------------------
    def _pair(self, other):
        if isinstance(other, int):
            other = Value(other, 0)
        elif not isinstance(other, Value):
            return None
        p = max(self.precision, other.precision)
        return self.scaled(p), other.scaled(p), p

    def __add__(self, other):
        t = self._pair(other)
        if t is None:
            return NotImplemented
        return Value(t[0] + t[1], t[2])

    __radd__ = __add__

    def __sub__(self, other):
        t = self._pair(other)
        if t is None:
            return NotImplemented
        return Value(t[0] - t[1], t[2])

    def __rsub__(self, other):
        t = self._pair(other)
        if t is None:
            return NotImplemented
        return Value(t[1] - t[0], t[2])

    def __neg__(self):
        return Value(-self.numerator, self.precision)

    def __mul__(self, other):
        if isinstance(other, int):
            return Value(self.numerator * other, self.precision)
        if isinstance(other, Value):
            return Value(self.numerator * other.numerator, self.precision + other.precision)
        return NotImplemented

    __rmul__ = __mul__

    def _cmp(self, other):
        t = self._pair(other)
        if t is None:
            if isinstance(other, Fraction):
                a = self.as_fraction()
                return (a > other) - (a < other)
            return NotImplemented
        return (t[0] > t[1]) - (t[0] < t[1])

    def __eq__(self, other):
        c = self._cmp(other)
        return NotImplemented if c is NotImplemented else c == 0

    def __lt__(self, other):
        c = self._cmp(other)
        return NotImplemented if c is NotImplemented else c < 0

    def __le__(self, other):
        c = self._cmp(other)
        return NotImplemented if c is NotImplemented else c <= 0

    def __gt__(self, other):
        c = self._cmp(other)
        return NotImplemented if c is NotImplemented else c > 0

    def __ge__(self, other):
        c = self._cmp(other)
        return NotImplemented if c is NotImplemented else c >= 0

    def __hash__(self):
        return hash(self.as_fraction())


ZERO = Value(0, 0)


def _nearest_sqrt(n: int) -> int:
    """Integer nearest to sqrt(n) for a non-square n."""
    r = math.isqrt(n)
    return r + 1 if (2 * r + 1) ** 2 < 4 * n else r


def sqrt3_minus_1(precision: int | None = None) -> Value:
    """sqrt(3) - 1 rounded to the nearest multiple of 2**-precision."""
    k = get_precision() if precision is None else precision
    return Value(_nearest_sqrt(3 << (2 * k)) - (1 << k), k)


def sqrt3_minus_1_times(ell: int, precision: int | None = None) -> Value:
    """(sqrt(3) - 1) * ell rounded once, to the nearest multiple of 2**-precision."""
    k = get_precision() if precision is None else precision
    if ell == 0:
        return Value(0, k)
    return Value(_nearest_sqrt((3 * ell * ell) << (2 * k)) - (ell << k), k)


def golden_ratio_conjugate(precision: int | None = None) -> Value:
    """(sqrt(5) - 1) / 2 rounded to the nearest multiple of 2**-precision."""
    k = get_precision() if precision is None else precision
    if k == 0:
        return Value(1, 0)
    # (sqrt5 - 1)/2 * 2^k = sqrt(5 * 4^(k-1)) - 2^(k-1)
    return Value(_nearest_sqrt(5 << (2 * (k - 1))) - (1 << (k - 1)), k)


# ---------------------------------------------------------------------------
# Bundles and allocations
# ---------------------------------------------------------------------------

Bundle = int
Allocation = tuple


def bundle(items: Iterable[int]) -> Bundle:
    mask = 0
    for j in items:
        if j < 1 or j > MAX_ITEMS:
            raise UsageError(f"item {j} outside 1..{MAX_ITEMS}")
        mask |= 1 << (j - 1)
    return mask


def items_of(mask: Bundle) -> list[int]:
    out = []
    j = 1
    while mask:
        if mask & 1:
            out.append(j)
        mask >>= 1
        j += 1
    return out


def full_bundle(m: int) -> Bundle:
    if m < 0 or m > MAX_ITEMS:
        raise UsageError(f"m must be in 0..{MAX_ITEMS}, got {m}")
    return (1 << m) - 1


def complement(mask: Bundle, m: int) -> Bundle:
    return full_bundle(m) & ~mask


def is_subset(a: Bundle, b: Bundle) -> bool:
    return a & ~b == 0


def is_feasible_allocation(alloc: Sequence[Bundle], m: int) -> bool:
    """True iff bundles are pairwise disjoint and within [m]."""
    seen = 0
    universe = full_bundle(m)
    for b in alloc:
        if b < 0 or b & ~universe or b & seen:
            return False
        seen |= b
    return True


def bundle_to_json(mask: Bundle) -> list[int]:
    return items_of(mask)


def allocation_to_json(alloc: Sequence[Bundle]) -> list[list[int]]:
    return [items_of(b) for b in alloc]


# ---------------------------------------------------------------------------
# Valuations
# ---------------------------------------------------------------------------


class ValueTable(NamedTuple):
    """All 2**m values of a valuation, as numerators at one precision."""

    nums: np.ndarray
    precision: int

    def at(self, precision: int) -> "ValueTable":
        if precision == self.precision:
            return self
        if precision < self.precision:
            raise UsageError("cannot lower table precision")
        return ValueTable(int_array(self.nums, shift=precision - self.precision), precision)

    def value(self, mask: Bundle) -> Value:
        return Value(int(self.nums[mask]), self.precision)


# int64 tables keep this much headroom so sums over bidders cannot overflow
_INT64_BITS = 56


def int_array(values, shift: int = 0) -> np.ndarray:
    """Integer array shifted left by ``shift``: int64 when small, object otherwise."""
    arr = np.asarray(values)
    if arr.dtype != object:
        arr = arr.astype(np.int64, copy=False)
        peak = int(np.abs(arr).max()) if arr.size else 0
        if peak.bit_length() + shift < _INT64_BITS:
            return arr << shift if shift else arr
    flat = [int(x) << shift for x in arr.ravel()]
    peak = max((abs(x) for x in flat), default=0)
    if peak.bit_length() < _INT64_BITS:
        return np.array(flat, dtype=np.int64).reshape(arr.shape)
    out = np.empty(len(flat), dtype=object)
    out[:] = flat
    return out.reshape(arr.shape)


def all_masks(m: int) -> np.ndarray:
    if m > 26:
        raise BudgetExceeded(f"2^{m} bundle table is too large")
    return np.arange(1 << m, dtype=np.int64)


class Valuation(ABC):
    """A value oracle over bundles.

    Subclasses implement :meth:`value`; :meth:`table` materializes all 2**m
    values and is cached per ``m``.
    """

    kind = "abstract"

    @abstractmethod
    def value(self, mask: Bundle) -> Value:
        ...

    def _build_table(self, m: int) -> ValueTable:
        vals = [self.value(S) for S in range(1 << m)]
        p = max((v.precision for v in vals), default=0)
        return ValueTable(int_array([v.scaled(p) for v in vals]), p)

    def table(self, m: int) -> ValueTable:
        cache = self.__dict__.setdefault("_table_cache", {})
        if m not in cache:
            if m > 26:
                raise BudgetExceeded(f"2^{m} bundle table is too large")
            cache[m] = self._build_table(m)
        return cache[m]

    def __call__(self, mask: Bundle) -> Value:
        return self.value(mask)


def common_tables(valuations: Sequence[Valuation], m: int) -> tuple[list[np.ndarray], int]:
    """Tables of several valuations lifted to a shared precision."""
    tabs = [v.table(m) for v in valuations]
    p = max((t.precision for t in tabs), default=0)
    return [t.at(p).nums for t in tabs], p


@dataclass(frozen=True)
class ValuationProfile:
    valuations: tuple
    m: int

    def __post_init__(self):
        object.__setattr__(self, "valuations", tuple(self.valuations))
        if self.m < 0 or self.m > MAX_ITEMS:
            raise UsageError(f"m must be in 0..{MAX_ITEMS}")

    @property
    def n(self) -> int:
        return len(self.valuations)

    def __len__(self):
        return len(self.valuations)

    def __getitem__(self, i):
        return self.valuations[i]

    def replace(self, i: int, v: Valuation) -> "ValuationProfile":
        vals = list(self.valuations)
        vals[i] = v
        return ValuationProfile(tuple(vals), self.m)

    def without(self, i: int) -> "ValuationProfile":
        return ValuationProfile(self.valuations[:i] + self.valuations[i + 1:], self.m)


def welfare(profile: ValuationProfile, alloc: Sequence[Bundle]) -> Value:
    """Sum of each bidder's value for their bundle."""
    if len(alloc) != profile.n:
        raise UsageError(f"allocation has {len(alloc)} bundles for {profile.n} bidders")
    if not is_feasible_allocation(alloc, profile.m):
        raise UsageError("allocation is not feasible")
    total = ZERO
    for v, b in zip(profile.valuations, alloc):
        total = total + v.value(b)
    return total


def check_monotone_normalized(v: Valuation, m: int) -> list[tuple[int, int]]:
    """Exhaustive sweep over one-item extensions.

    Returns violating pairs ``(S, S | {j})`` with ``v(S) > v(S | {j})``; a
    non-zero ``v(empty)`` is reported as the pair ``(0, 0)``. Cost 2**m * m.
    """
    if m > MONOTONE_CHECK_LIMIT:
        raise UsageError(f"exhaustive monotonicity check is limited to m <= {MONOTONE_CHECK_LIMIT}")
    nums = v.table(m).nums
    out = []
    if nums[0] != 0:
        out.append((0, 0))
    masks = all_masks(m)
    for j in range(m):
        bit = 1 << j
        lo = masks[(masks & bit) == 0]
        bad = lo[nums[lo] > nums[lo | bit]]
        out.extend((int(s), int(s) | bit) for s in bad)
    out.sort()
    return out
