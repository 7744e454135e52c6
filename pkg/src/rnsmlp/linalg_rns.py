"""Overflow-free integer matrix multiplication in RNS.

``matmul_rns`` works on 4-bit moduli: residue products stay below 15*15 and
sums are reduced every 15 summands.  ``matmul_highres_rns`` admits 5-bit
moduli by splitting the left operand's residues into a 2-bit high and a 3-bit
low chunk, and reduces every 7 summands.  Both are exact; every intermediate
stays within 8 bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .finite_ring import RnsBase, RnsTensor, to_rns
from .gadget_vm import GadgetVM, const_mul_mod_table, mod_table

BLOCK_LEN = {4: 15, 5: 7}


@dataclass(frozen=True)
class MatmulPlan:
    base: RnsBase
    block_len: int
    dims: tuple[int, int, int]

    @classmethod
    def make(cls, base: RnsBase, a: int, b: int, c: int) -> "MatmulPlan":
        n = min(BLOCK_LEN[base.width], b)
        top = max(base.moduli) - 1
        if top + n * top > 255:
            raise ValueError(f"block length {n} overflows 8 bit for base {base}")
        return cls(base, n, (a, b, c))


def _reduce(vm: GadgetVM, arr: np.ndarray, moduli) -> np.ndarray:
    return np.stack([vm.lookup(mod_table(m), arr[i]) for i, m in enumerate(moduli)])


def _block_sum(vm: GadgetVM, partial: np.ndarray, plan: MatmulPlan) -> np.ndarray:
    """Sum ``partial`` (k, a, b, c) over axis 2 in reduced blocks of ``n``."""
    moduli = plan.base.moduli
    n, b = plan.block_len, plan.dims[1]
    with vm.gadget("block_sum"):
        y = _reduce(vm, vm.sum(partial[:, :, :n, :], axis=2), moduli)
        for i in range(n, b, n):
            block = vm.sum(partial[:, :, i:min(i + n, b), :], axis=2)
            y = _reduce(vm, vm.add(y, block), moduli)
    return y


def _operands(X, W, base: RnsBase, vm: GadgetVM):
    X = np.asarray(X, dtype=np.int64)
    W = np.asarray(W, dtype=np.int64)
    if X.ndim != 2 or W.ndim != 2 or X.shape[1] != W.shape[0]:
        raise ValueError(f"incompatible shapes {X.shape} and {W.shape}")
    plan = MatmulPlan.make(base, X.shape[0], X.shape[1], W.shape[1])
    return to_rns(X, base, vm).digits, to_rns(W, base, vm).digits, plan


def matmul_rns(X, W, base: RnsBase, vm: GadgetVM | None = None) -> RnsTensor:
    """``X @ W`` for signed 8-bit ``X`` (a x b) and ``W`` (b x c), 4-bit base."""
    if base.width != 4:
        raise ValueError("matmul_rns needs a 4-bit base; use matmul_highres_rns")
    vm = vm or GadgetVM()
    with vm.gadget("matmul"):
        xr, wr, plan = _operands(X, W, base, vm)
        with vm.gadget("partial_products"):
            prod = vm.mul(xr[:, :, :, None], wr[:, None, :, :])
            prod = _reduce(vm, prod, base.moduli)
        y = _block_sum(vm, prod, plan)
    return RnsTensor(base, y)


def matmul_highres_rns(X, W, base: RnsBase, vm: GadgetVM | None = None) -> RnsTensor:
    """Like :func:`matmul_rns` but for 5-bit moduli via bit-split residues."""
    if base.width != 5:
        raise ValueError("matmul_highres_rns needs a 5-bit base")
    vm = vm or GadgetVM()
    with vm.gadget("matmul"):
        xr, wr, plan = _operands(X, W, base, vm)
        with vm.gadget("partial_products"):
            hi = vm.extract_bits(xr, 3, 4)[:, :, :, None]
            lo = vm.extract_bits(xr, 0, 2)[:, :, :, None]
            w = wr[:, None, :, :]
            y_lo = _reduce(vm, vm.mul(lo, w), base.moduli)
            y_hi = vm.mul(hi, w)
            # (hi * w) * 8 mod m in one table: the raw product would overflow
            y_hi = np.stack([vm.lookup(const_mul_mod_table(8, m, 0, 255), y_hi[i])
                             for i, m in enumerate(base.moduli)])
            prod = _reduce(vm, vm.add(y_lo, y_hi), base.moduli)
        y = _block_sum(vm, prod, plan)
    return RnsTensor(base, y)


def matmul(X, W, base: RnsBase, vm: GadgetVM | None = None) -> RnsTensor:
    """Dispatch on the base's modulus width."""
    if base.width == 5:
        return matmul_highres_rns(X, W, base, vm)
    return matmul_rns(X, W, base, vm)
