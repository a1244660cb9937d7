"""Concrete valuation classes and class-membership checkers."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .core import (
    Bundle,
    UsageError,
    Valuation,
    Value,
    ValueTable,
    all_masks,
    bundle,
    check_monotone_normalized,
    complement,
    get_precision,
    int_array,
    is_subset,
    items_of,
    sqrt3_minus_1_times,
)

SUBADDITIVE_CHECK_LIMIT = 12


class SingleMindedValuation(Valuation):
    """``w`` if the bundle contains ``desired``, else 0."""

    kind = "single-minded"

    def __init__(self, weight, desired: Bundle):
        w = Value.of(weight)
        if w < 0:
            raise UsageError("single-minded weight must be non-negative")
        if desired == 0 and w > 0:
            raise UsageError("empty desired set with positive weight breaks normalization")
        self.weight = w
        self.desired = desired

    def value(self, mask: Bundle) -> Value:
        return self.weight if is_subset(self.desired, mask) else Value(0, self.weight.precision)

    def _build_table(self, m: int) -> ValueTable:
        masks = all_masks(m)
        hit = (masks & self.desired) == self.desired
        w = self.weight.numerator
        if w.bit_length() < 56:
            nums = np.where(hit, np.int64(w), np.int64(0))
        else:
            nums = int_array([w if h else 0 for h in hit])
        return ValueTable(nums, self.weight.precision)

    def __repr__(self):
        return f"SingleMindedValuation(w={self.weight}, T={items_of(self.desired)})"


def single_minded_value(v: SingleMindedValuation, S: Bundle) -> Value:
    return v.value(S)


def _additive_sums(coeffs: Sequence[int], m: int) -> np.ndarray:
    """Sum of coefficients over every bundle, by doubling on each item."""
    t = int_array([0])
    for j in range(m):
        c = coeffs[j] if j < len(coeffs) else 0
        t = np.concatenate([t, t + c])
    return t


class XOSValuation(Valuation):
    """Pointwise maximum of additive clauses.

    ``clauses[c][j]`` is the weight of item ``j + 1`` in clause ``c``.
    """

    kind = "xos"

    def __init__(self, clauses: Sequence[Sequence]):
        if not clauses:
            raise UsageError("XOS valuation needs at least one clause")
        rows = [[Value.of(x) for x in row] for row in clauses]
        if any(x < 0 for row in rows for x in row):
            raise UsageError("XOS clause weights must be non-negative")
        self.precision = max((x.precision for row in rows for x in row), default=0)
        self.clauses = tuple(tuple(x.scaled(self.precision) for x in row) for row in rows)

    def value(self, mask: Bundle) -> Value:
        best = 0
        for row in self.clauses:
            s = sum(c for j, c in enumerate(row) if mask >> j & 1)
            best = max(best, s)
        return Value(best, self.precision)

    def _build_table(self, m: int) -> ValueTable:
        best = None
        for row in self.clauses:
            t = _additive_sums(row, m)
            best = t if best is None else np.maximum(best, t)
        return ValueTable(int_array(best), self.precision)

    def __repr__(self):
        return f"XOSValuation({len(self.clauses)} clauses)"


def xos_value(v: XOSValuation, S: Bundle) -> Value:
    return v.value(S)


class BXOSValuation(Valuation):
    """Largest intersection of the bundle with a set of the collection."""

    kind = "bxos"

    def __init__(self, collection: Sequence[Bundle]):
        if not collection:
            raise UsageError("binary XOS valuation needs a non-empty collection")
        self.collection = tuple(collection)

    def value(self, mask: Bundle) -> Value:
        return Value(max((mask & G).bit_count() for G in self.collection), 0)

    def _build_table(self, m: int) -> ValueTable:
        masks = all_masks(m)
        best = np.zeros(len(masks), dtype=np.int64)
        for G in self.collection:
            np.maximum(best, np.bitwise_count(masks & G).astype(np.int64), out=best)
        return ValueTable(best, 0)

    def as_xos(self, m: int) -> XOSValuation:
        """The same function written with 0/1 indicator clauses."""
        return XOSValuation([[1 if G >> j & 1 else 0 for j in range(m)] for G in self.collection])

    def __repr__(self):
        return f"BXOSValuation({len(self.collection)} sets)"


def bxos_value(v: BXOSValuation, S: Bundle) -> Value:
    return v.value(S)


class TableValuation(Valuation):
    """Explicit value table over all 2**m bundles; unlisted bundles are worth 0.

    Monotonicity and normalization are validated at construction unless
    ``validate=False`` (used to build counterexamples).
    """

    kind = "table"

    def __init__(self, values: Mapping[Bundle, object] | Sequence, m: int, validate: bool = True):
        self.m = m
        if isinstance(values, Mapping):
            vals = {int(k): Value.of(x) for k, x in values.items()}
        else:
            if len(values) != 1 << m:
                raise UsageError(f"expected {1 << m} table entries, got {len(values)}")
            vals = {S: Value.of(x) for S, x in enumerate(values)}
        if any(S >> m for S in vals):
            raise UsageError("table contains a bundle outside [m]")
        self.precision = max((x.precision for x in vals.values()), default=0)
        nums = [0] * (1 << m)
        for S, x in vals.items():
            nums[S] = x.scaled(self.precision)
        if any(x < 0 for x in nums):
            raise UsageError("table values must be non-negative")
        self._nums = int_array(nums)
        if validate:
            bad = check_monotone_normalized(self, m)
            if bad:
                raise UsageError(f"table valuation is not monotone/normalized, e.g. at {bad[0]}")

    def value(self, mask: Bundle) -> Value:
        return Value(int(self._nums[mask]), self.precision)

    def _build_table(self, m: int) -> ValueTable:
        if m != self.m:
            raise UsageError(f"table valuation is defined on m={self.m}, not {m}")
        return ValueTable(self._nums, self.precision)


# registry for families referenced by string id
_FAMILIES: dict[str, object] = {}


def register_family(ref: str, family) -> str:
    _FAMILIES[ref] = family
    return ref


def resolve_family(ref):
    if isinstance(ref, str):
        try:
            return _FAMILIES[ref]
        except KeyError:
            raise UsageError(f"dangling family reference {ref!r}") from None
    return ref


class SingleMStarValuation(Valuation):
    """Single-minded on the complement of ``G_i`` of a width family.

    Worth ``round((sqrt(3) - 1) * ell) + delta`` on bundles containing the
    complement of ``G_i``. The constant is rounded once, at construction.
    """

    kind = "single-minded"

    def __init__(self, family, index: int, delta: int, ell: int, precision: int | None = None):
        if delta not in (0, 1):
            raise UsageError("delta must be 0 or 1")
        if ell < 1:
            raise UsageError("ell must be positive")
        self.family_ref = family
        self.index = index
        self.delta = delta
        self.ell = ell
        k = get_precision() if precision is None else precision
        self.weight = sqrt3_minus_1_times(ell, k) + delta
        fam = resolve_family(family)
        if not 0 <= index < fam.k:
            raise UsageError(f"index {index} outside the family's width {fam.k}")

    @property
    def desired(self) -> Bundle:
        fam = resolve_family(self.family_ref)
        return complement(fam.G[self.index], fam.m)

    def value(self, mask: Bundle) -> Value:
        return self.weight if is_subset(self.desired, mask) else Value(0, self.weight.precision)

    def as_single_minded(self) -> SingleMindedValuation:
        return SingleMindedValuation(self.weight, self.desired)

    def _build_table(self, m: int) -> ValueTable:
        return self.as_single_minded().table(m)


def single_m_star_value(v: SingleMStarValuation, X: Bundle) -> Value:
    return v.value(X)


def check_subadditive(v: Valuation, m: int, limit: int | None = 1000) -> list[tuple[int, int]]:
    """Pairs ``(S, T)``, ``S <= T`` numerically, with ``v(S | T) > v(S) + v(T)``.

    Exhaustive over 4**m pairs (vectorized per S); stops after ``limit``
    violations when a limit is given.
    """
    if m > SUBADDITIVE_CHECK_LIMIT:
        raise UsageError(f"exhaustive subadditivity check is limited to m <= {SUBADDITIVE_CHECK_LIMIT}")
    nums = v.table(m).nums
    masks = all_masks(m)
    out = []
    for S in range(1 << m):
        T = masks[S:]
        bad = T[nums[S | T] > nums[S] + nums[T]]
        out.extend((S, int(t)) for t in bad)
        if limit is not None and len(out) >= limit:
            return out[:limit]
    return out


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def valuation_to_json(v: Valuation, m: int | None = None) -> dict:
    if isinstance(v, SingleMStarValuation):
        v = v.as_single_minded()
    if isinstance(v, SingleMindedValuation):
        return {"kind": "single-minded", "w": str(v.weight), "T": items_of(v.desired)}
    if isinstance(v, XOSValuation):
        return {"kind": "xos",
                "clauses": [[str(Value(c, v.precision)) for c in row] for row in v.clauses]}
    if isinstance(v, BXOSValuation):
        return {"kind": "bxos", "collection": [items_of(G) for G in v.collection]}
    if m is None:
        m = getattr(v, "m", None)
    if m is None:
        raise UsageError("m is required to serialize a table valuation")
    tab = v.table(m)
    return {"kind": "table", "m": m,
            "values": {",".join(map(str, items_of(S))): str(tab.value(S))
                       for S in range(1 << m) if tab.nums[S] != 0}}


def valuation_from_json(d: dict) -> Valuation:
    kind = d.get("kind")
    if kind == "single-minded":
        return SingleMindedValuation(Value.parse(str(d["w"])), bundle(d["T"]))
    if kind == "xos":
        return XOSValuation([[Value.parse(str(x)) for x in row] for row in d["clauses"]])
    if kind == "bxos":
        return BXOSValuation([bundle(G) for G in d["collection"]])
    if kind == "table":
        vals = {}
        for key, x in d["values"].items():
            items = [int(t) for t in key.split(",") if t.strip()]
            vals[bundle(items)] = Value.parse(str(x))
        return TableValuation(vals, int(d["m"]))
    raise UsageError(f"unknown valuation kind {kind!r}")
