"""Constrained evaluation layer for ciphertext-semantics integer tensors.

Everything the training circuit does to "encrypted" data goes through a
:class:`GadgetVM`: linear operations (add, sub, mul) and table lookups, the
latter standing in for TFHE programmable bootstrapping.  The VM enforces the
8-bit limit on every intermediate and counts operations for the cost model.

Values are numpy integer arrays; an operation on an ``(a, b)`` tensor counts
``a * b`` element operations.  Unsigned values live in ``[0, 255]``, signed
ones in ``[-128, 127]``.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

UNSIGNED_RANGE = (0, 255)
SIGNED_RANGE = (-128, 127)
# union of both interpretations of an 8-bit word; table outputs may use either
TABLE_OUTPUT_RANGE = (-128, 255)


class GuardViolation(ArithmeticError):
    """An intermediate value left the 8-bit range: the circuit is illegal."""

    def __init__(self, gadget: str, value: int):
        self.gadget = gadget
        self.value = int(value)
        super().__init__(f"8-bit guard violated in {gadget!r}: value {self.value}")


class DomainError(ValueError):
    """Lookup input outside the table's declared domain."""


def _as_int(a) -> np.ndarray:
    arr = np.asarray(a)
    if arr.dtype.kind not in "iub":
        raise TypeError(f"gadget operands must be integers, got dtype {arr.dtype}")
    return arr.astype(np.int64, copy=False)


@dataclass(frozen=True, eq=False)
class LookupTable:
    """Univariate table over the input domain ``[offset, offset + len - 1]``."""

    entries: np.ndarray
    offset: int = 0
    name: str = "lut"

    def __post_init__(self):
        entries = _as_int(self.entries)
        if entries.ndim != 1 or not 1 <= entries.size <= 256:
            raise ValueError("table must be 1-D with at most 256 entries")
        lo, hi = TABLE_OUTPUT_RANGE
        if entries.min() < lo or entries.max() > hi:
            raise ValueError(f"table {self.name!r} has entries outside 8 bit")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_function(cls, fn: Callable[[int], int], lo: int, hi: int, name: str = "lut"):
        return cls(np.array([fn(v) for v in range(lo, hi + 1)], dtype=np.int64), lo, name)

    @property
    def input_bitwidth(self) -> int:
        return max(1, math.ceil(math.log2(self.entries.size)))

    @property
    def domain(self) -> tuple[int, int]:
        return self.offset, self.offset + self.entries.size - 1

    def __call__(self, a) -> np.ndarray:
        a = _as_int(a)
        lo, hi = self.domain
        if a.size and (a.min() < lo or a.max() > hi):
            bad = a[(a < lo) | (a > hi)].flat[0]
            raise DomainError(f"input {bad} outside domain [{lo}, {hi}] of table {self.name!r}")
        return self.entries[a - lo]


@dataclass(frozen=True, eq=False)
class BivariateLookupTable:
    """Two-input table; ``entries[u - u_offset, v - v_offset]``."""

    entries: np.ndarray
    u_offset: int = 0
    v_offset: int = 0
    name: str = "lut2"

    def __post_init__(self):
        entries = _as_int(self.entries)
        if entries.ndim != 2 or max(entries.shape) > 256:
            raise ValueError("bivariate table must be 2-D with both axes <= 256")
        lo, hi = TABLE_OUTPUT_RANGE
        if entries.min() < lo or entries.max() > hi:
            raise ValueError(f"table {self.name!r} has entries outside 8 bit")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_function(cls, fn, u_range: tuple[int, int], v_range: tuple[int, int], name="lut2"):
        us = np.arange(u_range[0], u_range[1] + 1)
        vs = np.arange(v_range[0], v_range[1] + 1)
        entries = np.array([[fn(int(u), int(v)) for v in vs] for u in us], dtype=np.int64)
        return cls(entries, u_range[0], v_range[0], name)

    def __call__(self, u, v) -> np.ndarray:
        u, v = np.broadcast_arrays(_as_int(u), _as_int(v))
        for arr, off, n, axis in ((u, self.u_offset, self.entries.shape[0], "u"),
                                  (v, self.v_offset, self.entries.shape[1], "v")):
            if arr.size and (arr.min() < off or arr.max() >= off + n):
                raise DomainError(f"{axis} input outside domain of table {self.name!r}")
        return self.entries[u - self.u_offset, v - self.v_offset]


@dataclass
class OpStats:
    """Lookup (PBS proxy) and linear-op counters with a per-gadget breakdown."""

    lookup_count: int = 0
    linear_op_count: int = 0
    per_gadget: dict[str, tuple[int, int]] = field(default_factory=dict)

    def record(self, gadget: str, lookups: int = 0, linear: int = 0) -> None:
        self.lookup_count += lookups
        self.linear_op_count += linear
        lk, ln = self.per_gadget.get(gadget, (0, 0))
        self.per_gadget[gadget] = (lk + lookups, ln + linear)

    def merge(self, other: "OpStats") -> "OpStats":
        out = OpStats(self.lookup_count + other.lookup_count,
                      self.linear_op_count + other.linear_op_count,
                      dict(self.per_gadget))
        for name, (lk, ln) in other.per_gadget.items():
            a, b = out.per_gadget.get(name, (0, 0))
            out.per_gadget[name] = (a + lk, b + ln)
        return out

    __add__ = merge

    def __eq__(self, other):
        if not isinstance(other, OpStats):
            return NotImplemented
        return (self.lookup_count, self.linear_op_count, self.per_gadget) == (
            other.lookup_count, other.linear_op_count, other.per_gadget)

    def to_dict(self) -> dict:
        return {
            "lookup_count": self.lookup_count,
            "linear_op_count": self.linear_op_count,
            "per_gadget": {k: list(v) for k, v in sorted(self.per_gadget.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OpStats":
        return cls(d["lookup_count"], d["linear_op_count"],
                   {k: tuple(v) for k, v in d.get("per_gadget", {}).items()})


def merge_stats(a: OpStats, b: OpStats) -> OpStats:
    return a.merge(b)


class GadgetVM:
    """Guarded, counting evaluator.

    Use one VM per circuit; ``with vm.gadget("name"):`` attributes the enclosed
    operations to ``name`` in the per-gadget breakdown.
    """

    def __init__(self):
        self.stats = OpStats()
        self._scope = ["circuit"]

    @contextmanager
    def gadget(self, name: str) -> Iterator[None]:
        self._scope.append(name)
        try:
            yield
        finally:
            self._scope.pop()

    @property
    def current_gadget(self) -> str:
        return self._scope[-1]

    def _guard(self, result: np.ndarray, signed: bool) -> np.ndarray:
        if result.size:
            lo, hi = SIGNED_RANGE if signed else UNSIGNED_RANGE
            rmin, rmax = result.min(), result.max()
            if rmin < lo:
                raise GuardViolation(self.current_gadget, rmin)
            if rmax > hi:
                raise GuardViolation(self.current_gadget, rmax)
        return result

    def _linear(self, result: np.ndarray, signed: bool) -> np.ndarray:
        self._guard(result, signed)
        self.stats.record(self.current_gadget, linear=result.size)
        return result

    # -- linear operations ------------------------------------------------
    def add(self, a, b, signed: bool = False) -> np.ndarray:
        return self._linear(_as_int(a) + _as_int(b), signed)

    def sub(self, a, b, signed: bool = False) -> np.ndarray:
        return self._linear(_as_int(a) - _as_int(b), signed)

    def mul(self, a, b, signed: bool = False) -> np.ndarray:
        return self._linear(_as_int(a) * _as_int(b), signed)

    def sum(self, a, axis: int, signed: bool = False, keepdims: bool = False) -> np.ndarray:
        """Sequential summation along ``axis``; every partial sum is guarded."""
        a = _as_int(a)
        n = a.shape[axis]
        if n == 0:
            raise ValueError("cannot sum an empty axis")
        partial = np.cumsum(a, axis=axis)
        self._guard(partial, signed)
        self.stats.record(self.current_gadget, linear=(n - 1) * (a.size // n))
        return np.take(partial, [n - 1] if keepdims else n - 1, axis=axis)

    # -- lookups ------------------------------------------------------------
    def lookup(self, table: LookupTable, a) -> np.ndarray:
        out = table(a)
        self.stats.record(self.current_gadget, lookups=out.size)
        return out

    def lookup2(self, table: BivariateLookupTable, a, b) -> np.ndarray:
        out = table(a, b)
        self.stats.record(self.current_gadget, lookups=out.size)
        return out

    def extract_bits(self, a, lo: int, hi: int) -> np.ndarray:
        if not 0 <= lo <= hi <= 7:
            raise ValueError("bit indices must satisfy 0 <= lo <= hi <= 7")
        return self.lookup(bits_table(lo, hi), a)

    def max(self, a) -> np.ndarray:
        """Tensor-wide maximum as a chain of pairwise-max lookups."""
        a = _as_int(a)
        if a.size == 0:
            raise ValueError("max of empty tensor")
        self._guard(a, signed=bool(a.min() < 0))
        self.stats.record(self.current_gadget, lookups=a.size - 1)
        return a.max()


def bits_table(lo: int, hi: int) -> LookupTable:
    mask = (1 << (hi - lo + 1)) - 1
    return cached_table(("bits", lo, hi), lambda v: (v >> lo) & mask, 0, 255)


_TABLES: dict = {}


def cached_table(key, fn, lo, hi, name=None) -> LookupTable:
    table = _TABLES.get(key)
    if table is None:
        table = _TABLES[key] = LookupTable.from_function(fn, lo, hi, name or str(key[0]))
    return table


def cached_table2(key, fn, u_range, v_range, name=None) -> BivariateLookupTable:
    table = _TABLES.get(key)
    if table is None:
        table = _TABLES[key] = BivariateLookupTable.from_function(
            fn, u_range, v_range, name or str(key[0]))
    return table


def const_mul_mod_table(constant: int, modulus: int, lo: int = 0, hi: int | None = None) -> LookupTable:
    """``a -> (constant * a) mod modulus`` as one lookup over ``[lo, hi]``."""
    hi = modulus - 1 if hi is None else hi
    return cached_table(("cmulmod", constant, modulus, lo, hi),
                         lambda v: (constant * v) % modulus, lo, hi, f"mul{constant}mod{modulus}")


def mod_table(modulus: int, lo: int = 0, hi: int = 255) -> LookupTable:
    return const_mul_mod_table(1, modulus, lo, hi)
