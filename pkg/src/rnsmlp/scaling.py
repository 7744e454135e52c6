"""Block scaling of RNS tensors to their most significant bits.

The approximate gadgets read the mixed-radix digits of a tensor as if each
digit were a ``w``-bit chunk of a binary number, find the highest set bit
over the whole tensor, and shift every digit so that this bit lands at
position ``gamma``.  ``exact_block_scale`` is the reference they are compared
against; it reconstructs the integers and is not guard-constrained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .finite_ring import MrnsTensor, RnsTensor, abs_rns, rns2mrns, rns_reconstruct
from .gadget_vm import GadgetVM, cached_table, cached_table2


@dataclass
class ScaleResult:
    values: np.ndarray
    shift: int


@dataclass(frozen=True)
class ScaleErrorRecord:
    tag: str
    batch: int
    mean_abs_error: float
    max_abs_error: int
    count: int


def _bit_position_table(position: int, w: int, radix: int):
    # a zero digit has no set bit and must not raise the maximum
    def fn(d):
        return 0 if d == 0 else d.bit_length() + position * w

    return cached_table(("bitpos", position, w, radix), fn, 0, radix - 1)


def _lshift_table(radix: int, gamma: int):
    # saturated cells are unreachable: bit_length(digit) + lshift <= gamma
    return cached_table2(("lshift", radix, gamma), lambda d, s: min(d << s, 255),
                         (0, radix - 1), (0, gamma - 1))


def _rshift_table(max_shift: int):
    return cached_table2(("rshift", max_shift), lambda d, s: d >> s, (0, 255), (0, max_shift))


def shift_mrns(y: MrnsTensor, w: int, gamma: int, vm: GadgetVM | None = None) -> ScaleResult:
    """Scale non-negative mixed-radix digits to ``gamma`` bits (steps 2-6)."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    vm = vm or GadgetVM()
    k = len(y.radices)
    max_bits = k * w
    with vm.gadget("shift2msbs"):
        u = np.stack([vm.lookup(_bit_position_table(i, w, r), y.digits[i])
                      for i, r in enumerate(y.radices)])
        max_bit = vm.max(np.concatenate([[0], u.ravel()]))

        any_shift = vm.lookup(cached_table(("gt", w, max_bits), lambda v: int(v > w), 0, max_bits),
                              max_bit)
        clamp = cached_table(("clamp", gamma), lambda v: min(max(v, 0), gamma - 1), -128, 127)
        relu_neg = cached_table(("reluneg",), lambda v: max(-v, 0), -127, 127)
        shifted = []
        for i, r in enumerate(y.radices):
            digit_shift = vm.mul(vm.sub(gamma + w * i, max_bit, signed=True), any_shift, signed=True)
            lshift = vm.lookup(clamp, digit_shift)
            rshift = vm.lookup(relu_neg, digit_shift)
            d = vm.lookup2(_lshift_table(r, gamma), y.digits[i], lshift)
            shifted.append(vm.lookup2(_rshift_table(max_bits), d, rshift))
        values = vm.sum(np.stack(shifted), axis=0)
        shift = vm.sub(max_bit, gamma, signed=True)
    return ScaleResult(values, int(shift))


def shift2msbs_pos(x: RnsTensor, w: int, gamma: int, vm: GadgetVM | None = None) -> ScaleResult:
    """Approximate block scaling of a non-negative RNS tensor to ``gamma`` bits."""
    vm = vm or GadgetVM()
    return shift_mrns(rns2mrns(x, vm), w, gamma, vm)


def shift2msbs_signed(x: RnsTensor, w: int, Gamma: int, vm: GadgetVM | None = None) -> ScaleResult:
    """Signed variant: scale magnitudes to ``Gamma - 1`` bits, reapply the sign."""
    if Gamma < 2:
        raise ValueError("signed output needs Gamma >= 2")
    vm = vm or GadgetVM()
    magnitude, s = abs_rns(x, vm)
    res = shift2msbs_pos(magnitude, w, Gamma - 1, vm)
    with vm.gadget("shift2msbs"):
        values = vm.mul(s, res.values, signed=True)
    return ScaleResult(values, res.shift)


def exact_block_scale(x, gamma: int) -> ScaleResult:
    """Exact block scaling: shift by ``bit_length(max|x|) - gamma``, rounding toward zero."""
    values = rns_reconstruct(x) if isinstance(x, RnsTensor) else np.asarray(x, dtype=np.int64)
    mag = np.abs(values)
    top = int(mag.max()) if mag.size else 0
    shift = max(top.bit_length() - gamma, 0)
    return ScaleResult(np.sign(values) * (mag >> shift), shift)


def scale_error(approx: np.ndarray, exact: np.ndarray, tag: str = "", batch: int = 0) -> ScaleErrorRecord:
    err = np.abs(np.asarray(approx, dtype=np.int64) - np.asarray(exact, dtype=np.int64))
    return ScaleErrorRecord(tag, batch, float(err.mean()) if err.size else 0.0,
                            int(err.max()) if err.size else 0, int(err.size))
