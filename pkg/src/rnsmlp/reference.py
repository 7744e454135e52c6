"""Plain-integer training step used as an oracle for the gadget circuit.

Nothing here touches residues or lookup tables: matmuls are int64 products,
mixed-radix digits are taken positionally and bit lengths come from Python
integers.  A circuit step and a reference step on the same inputs must agree
bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

from .nn import MlpModel, forward_base
from .scaling import exact_block_scale

_BITLEN = np.array([v.bit_length() for v in range(1024)])


def approx_block_scale(z, radices, w: int, gamma: int) -> np.ndarray:
    """Digit-wise scaling of ``|z|`` with the sign reapplied."""
    z = np.asarray(z, dtype=np.int64)
    sign = np.where(z < 0, -1, 1)
    mag = np.abs(z)
    digits, weight = [], 1
    for r in radices:
        digits.append((mag // weight) % r)
        weight *= r
    positions = [np.where(d > 0, _BITLEN[d] + i * w, 0) for i, d in enumerate(digits)]
    max_bit = max(int(p.max(initial=0)) for p in positions)
    out = np.zeros_like(mag)
    for i, d in enumerate(digits):
        shift = gamma + i * w - max_bit if max_bit > w else 0
        out += (d << min(max(shift, 0), gamma - 1)) >> max(-shift, 0)
    return sign * out


def _round_half_even(num: int, den: int) -> int:
    q, r = divmod(num, den)
    if 2 * r > den or (2 * r == den and q % 2):
        q += 1
    return q


def loss_sign(logits, labels, kappa: int, Gamma: int) -> np.ndarray:
    gamma = Gamma - 1
    top = 2 ** gamma - 1
    e = [[round(math.exp(max(int(v), 0) - top) * 2 ** kappa) for v in row]
         for row in np.asarray(logits)]
    out = np.zeros(np.shape(logits), dtype=np.int64)
    for b, row in enumerate(e):
        s = sum(row)
        normed = [_round_half_even(v * 2 ** kappa + 1, s + 1) for v in row]
        total = sum(normed)
        for j, v in enumerate(normed):
            out[b, j] = np.sign(v - labels[b][j] * total)
    return out


def reference_forward(model: MlpModel, A0, scaling: str = "approx") -> list[np.ndarray]:
    """Activations of every layer, the last entry being the logits."""
    hp = model.hp
    A = np.asarray(A0, dtype=np.int64)
    acts = [A]
    for l, W in enumerate(model.weights, start=1):
        if scaling == "exact":
            A = exact_block_scale(A @ W.T, hp.gamma).values
        else:
            A = approx_block_scale(A @ W.T, forward_base(model, l).moduli, hp.width, hp.gamma)
        if l < model.n_layers:
            A = np.clip(A, 0, hp.relu_cap)
        acts.append(A)
    return acts


def reference_step(model: MlpModel, A0, labels,
                   scaling: str = "approx") -> tuple[MlpModel, list[np.ndarray]]:
    """One training step; returns the new model and the activations."""
    hp = model.hp
    acts = reference_forward(model, A0, scaling)
    E = loss_sign(acts[-1], np.asarray(labels), hp.kappa, hp.Gamma)
    lo, hi = hp.weight_range
    weights = list(model.weights)
    for l in range(model.n_layers, 0, -1):
        W, A_prev = model.weights[l - 1], acts[l - 1]
        G = np.sign(E.T @ A_prev)
        if l > 1:
            E = np.sign(E @ W) * (A_prev > 0)
        weights[l - 1] = np.clip(W - G, lo, hi)
    return MlpModel(model.dims, weights, hp), acts
