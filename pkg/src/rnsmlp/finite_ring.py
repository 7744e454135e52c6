"""Signed ring encoding, RNS base catalog, RNS/MRNS tensors and the
RNS sign / absolute-value gadgets.

Tensors keep the residue axis first: an RNS tensor of logical shape
``(a, b)`` over a base with ``k`` moduli stores digits of shape ``(k, a, b)``.
Digit 0 belongs to the first modulus, which is also the least significant
radix after mixed-radix conversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, reduce

import numpy as np

from .gadget_vm import GadgetVM, cached_table, cached_table2, const_mul_mod_table


class CapacityError(ValueError):
    """No catalog base is wide enough for the requested bitwidth."""


class RangeError(ValueError):
    """A value is not representable in the signed ring of a base."""


@dataclass(frozen=True)
class RnsBase:
    moduli: tuple[int, ...]
    width: int

    def __post_init__(self):
        moduli = tuple(int(m) for m in self.moduli)
        object.__setattr__(self, "moduli", moduli)
        if len(moduli) < 1:
            raise ValueError("empty base")
        for i, a in enumerate(moduli):
            if not 2 <= a < 2 ** self.width:
                raise ValueError(f"modulus {a} does not fit in {self.width} bits")
            for b in moduli[i + 1:]:
                if math.gcd(a, b) != 1:
                    raise ValueError(f"moduli {a} and {b} are not coprime")
        if moduli[-1] % 2:
            raise ValueError("the most significant modulus must be even for sign extraction")

    @property
    def k(self) -> int:
        return len(self.moduli)

    @cached_property
    def cardinality(self) -> int:
        return reduce(lambda x, y: x * y, self.moduli, 1)

    @property
    def max_bitwidth(self) -> float:
        return math.log2(self.cardinality)

    @cached_property
    def inverse_tables(self) -> dict[tuple[int, int], int]:
        """``(i, j) -> moduli[i]^-1 mod moduli[j]`` for ``j > i``."""
        return {(i, j): pow(self.moduli[i], -1, self.moduli[j])
                for i in range(self.k) for j in range(i + 1, self.k)}

    @cached_property
    def radix_weights(self) -> tuple[int, ...]:
        """Positional weight of each mixed-radix digit."""
        weights, acc = [], 1
        for m in self.moduli:
            weights.append(acc)
            acc *= m
        return tuple(weights)

    @property
    def signed_range(self) -> tuple[int, int]:
        half = (self.cardinality + 1) // 2
        return half - self.cardinality, half - 1

    def __str__(self):
        return "{" + ", ".join(map(str, self.moduli)) + "}"


BASES_4BIT = tuple(RnsBase(m, 4) for m in (
    (15, 14),
    (13, 15, 14),
    (11, 13, 15, 14),
    (7, 11, 13, 15, 8),
    (5, 7, 9, 11, 13, 8),
))

BASES_5BIT = tuple(RnsBase(m, 5) for m in (
    (31, 30),
    (29, 31, 30),
    (27, 29, 31, 28),
    (25, 27, 29, 31, 28),
    (23, 25, 27, 29, 31, 28),
))

CATALOG = {4: BASES_4BIT, 5: BASES_5BIT}

# Worked conversion example base; not part of the run-time catalog.
EXAMPLE_BASE = RnsBase((5, 7, 8), 4)


def select_rns_base(required_bits: float, width: int = 4) -> RnsBase:
    """Smallest catalog base of ``width``-bit moduli offering ``required_bits``."""
    if required_bits <= 0:
        raise ValueError("required_bits must be positive")
    try:
        catalog = CATALOG[width]
    except KeyError:
        raise ValueError(f"no catalog for {width}-bit moduli") from None
    for base in catalog:
        if base.max_bitwidth >= required_bits:
            return base
    raise CapacityError(
        f"{required_bits:.2f} bits exceed the largest {width}-bit base "
        f"({catalog[-1].max_bitwidth:.2f} bits)")


def encode_signed(x, modulus: int):
    """Positives to the lower half of Z_M, negatives to the upper half."""
    return np.mod(x, modulus)


def decode_signed(r, modulus: int):
    r = np.asarray(r, dtype=np.int64)
    return np.where(r < (modulus + 1) // 2, r, r - modulus)


@dataclass
class RnsTensor:
    base: RnsBase
    digits: np.ndarray

    def __post_init__(self):
        self.digits = np.asarray(self.digits, dtype=np.int64)
        if self.digits.shape[0] != self.base.k:
            raise ValueError("leading axis must be the residue axis")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.digits.shape[1:]

    def plane(self, i: int) -> np.ndarray:
        return self.digits[i]


@dataclass
class MrnsTensor:
    radices: tuple[int, ...]
    digits: np.ndarray

    @property
    def shape(self) -> tuple[int, ...]:
        return self.digits.shape[1:]

    def reconstruct(self) -> np.ndarray:
        """Unsigned ring element ``x1 + x2*r1 + x3*r1*r2 + ...``."""
        out = np.zeros(self.shape, dtype=np.int64)
        weight = 1
        for r, d in zip(self.radices, self.digits):
            out += d * weight
            weight *= r
        return out


def _residue_table(m: int):
    return cached_table(("residue", m), lambda v: v % m, -128, 127, f"mod{m}")


def to_rns(x, base: RnsBase, vm: GadgetVM | None = None) -> RnsTensor:
    """Signed integers to residues.

    With a VM the conversion is one lookup per element and modulus, so inputs
    must be signed 8-bit; without one it is plain arithmetic on any
    representable value.
    """
    x = np.asarray(x, dtype=np.int64)
    lo, hi = base.signed_range
    if x.size and (x.min() < lo or x.max() > hi):
        raise RangeError(f"values outside [{lo}, {hi}] for base {base}")
    if vm is None:
        digits = np.stack([np.mod(x, m) for m in base.moduli])
    else:
        with vm.gadget("to_rns"):
            digits = np.stack([vm.lookup(_residue_table(m), x) for m in base.moduli])
    return RnsTensor(base, digits)


def rns_ring_element(x: RnsTensor) -> np.ndarray:
    """Chinese-remainder reconstruction to the unsigned ring element."""
    M = x.base.cardinality
    acc = np.zeros(x.shape, dtype=np.int64)
    for m, d in zip(x.base.moduli, x.digits):
        Mi = M // m
        acc = (acc + d * ((Mi * pow(Mi, -1, m)) % M)) % M
    return acc


def rns_reconstruct(x: RnsTensor) -> np.ndarray:
    return decode_signed(rns_ring_element(x), x.base.cardinality)


def _sub_mul_table(inv: int, m: int, lo: int):
    return const_mul_mod_table(inv, m, lo, m - 1)


def rns2mrns(x: RnsTensor, vm: GadgetVM | None = None) -> MrnsTensor:
    """Digit-by-digit RNS to associated mixed-radix conversion."""
    vm = vm or GadgetVM()
    base = x.base
    y = [x.digits[i] for i in range(base.k)]
    with vm.gadget("rns2mrns"):
        for i in range(1, base.k):
            prev = y[i - 1]
            m_prev = base.moduli[i - 1]
            for j in range(i, base.k):
                diff = vm.sub(y[j], prev, signed=True)
                # the modular reduction of the difference is folded into the
                # constant-multiplication table
                table = _sub_mul_table(base.inverse_tables[i - 1, j], base.moduli[j], 1 - m_prev)
                y[j] = vm.lookup(table, diff)
    return MrnsTensor(base.moduli, np.stack(y))


def _sign_table(r_top: int, max_sum: int, outputs: tuple[int, int, int]):
    n, z, p = outputs
    half = r_top // 2

    def fn(top, total):
        if top >= half:
            return n
        return z if total == 0 else p

    return cached_table2(("sign", r_top, max_sum, outputs), fn, (0, r_top - 1), (0, max_sum))


def sign_mrns(y: MrnsTensor, outputs=(-1, 0, 1), vm: GadgetVM | None = None) -> np.ndarray:
    vm = vm or GadgetVM()
    r_top = y.radices[-1]
    if r_top % 2:
        raise ValueError("sign extraction needs an even most significant radix")
    with vm.gadget("sign"):
        total = vm.sum(y.digits, axis=0)
        table = _sign_table(r_top, sum(r - 1 for r in y.radices), tuple(outputs))
        return vm.lookup2(table, y.digits[-1], total)


def sign_rns(x: RnsTensor, outputs=(-1, 0, 1), vm: GadgetVM | None = None) -> np.ndarray:
    """Element-wise ``n`` / ``z`` / ``p`` for negative / zero / positive."""
    vm = vm or GadgetVM()
    return sign_mrns(rns2mrns(x, vm), outputs, vm)


def _negate_table(m: int):
    return cached_table2(("signmul", m), lambda s, d: (s * d) % m, (-1, 1), (0, m - 1), f"signmul{m}")


def abs_rns(x: RnsTensor, vm: GadgetVM | None = None) -> tuple[RnsTensor, np.ndarray]:
    """Magnitudes in RNS plus the sign tensor (zero counts as +1)."""
    vm = vm or GadgetVM()
    s = sign_rns(x, (-1, 1, 1), vm)
    with vm.gadget("abs"):
        digits = np.stack([vm.lookup2(_negate_table(m), s, d)
                           for m, d in zip(x.base.moduli, x.digits)])
    return RnsTensor(x.base, digits), s
