"""Low-bitwidth integer MLP training on top of the guarded gadgets.

One training step is split into circuits, each evaluated on its own
:class:`GadgetVM` so its operation counts can be reported separately:
``forward_l`` (matmul, block scaling, capped ReLU), ``loss``, ``gradient_l``
(weight-gradient matmul and sign), ``error_l`` (error propagation for
``l > 1``) and ``update_l`` (clipped sign step).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .finite_ring import RnsBase, select_rns_base, sign_rns
from .gadget_vm import GadgetVM, OpStats, cached_table, cached_table2
from .linalg_rns import matmul
from .scaling import ScaleErrorRecord, exact_block_scale, scale_error, shift2msbs_signed

MODEL_FORMAT = "rnsmlp-model"
MODEL_VERSION = 1


class ConfigError(ValueError):
    """Hyperparameters or architecture violate a circuit precondition."""


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    alpha: int = 8
    beta: int = 4
    Gamma: int = 7
    relu_cap: int = 14
    kappa: int = 4
    width: int = 4

    def validate(self) -> None:
        if not 2 <= self.alpha <= 8:
            raise ConfigError("alpha must be in [2, 8]")
        if not 1 <= self.beta <= 8:
            raise ConfigError("beta must be in [1, 8]")
        if not 2 <= self.Gamma <= 8:
            raise ConfigError("Gamma must be in [2, 8]")
        if not 0 <= self.relu_cap <= 2 ** (self.Gamma - 1) - 1:
            raise ConfigError("relu_cap must lie in [0, 2^(Gamma-1) - 1]")
        if not 0 <= self.kappa <= 6:
            raise ConfigError("kappa must be in [0, 6]")
        if self.width not in (4, 5):
            raise ConfigError("moduli width must be 4 or 5")

    @property
    def gamma(self) -> int:
        return self.Gamma - 1

    @property
    def weight_range(self) -> tuple[int, int]:
        return -(2 ** (self.alpha - 1)), 2 ** (self.alpha - 1) - 1

    @property
    def input_range(self) -> tuple[int, int]:
        return -(2 ** (self.beta - 1)), 2 ** (self.beta - 1) - 1


def max_output_classes(kappa: int) -> int:
    return min(16, 255 // 2 ** kappa)


@dataclass
class MlpModel:
    """Bias-free MLP; ``weights[l - 1]`` has shape ``(dims[l], dims[l - 1])``."""

    dims: tuple[int, ...]
    weights: list[np.ndarray]
    hp: Hyperparams

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.weights = [np.asarray(w, dtype=np.int64) for w in self.weights]
        self.validate()

    @classmethod
    def initialize(cls, dims: Iterable[int], hp: Hyperparams, seed: int = 0) -> "MlpModel":
        dims = tuple(dims)
        rng = np.random.default_rng([seed, 0])
        bound = 2 ** (hp.alpha - 1) - 1
        weights = [rng.integers(-bound, bound + 1, size=(dims[l], dims[l - 1]))
                   for l in range(1, len(dims))]
        return cls(dims, weights, hp)

    def validate(self) -> None:
        self.hp.validate()
        if len(self.dims) < 2 or min(self.dims) < 1:
            raise ConfigError("need at least an input and an output layer")
        o = self.dims[-1]
        if o > max_output_classes(self.hp.kappa):
            raise ConfigError(
                f"{o} output classes exceed the loss limit min(16, 255/2^kappa) "
                f"= {max_output_classes(self.hp.kappa)}")
        if len(self.weights) != len(self.dims) - 1:
            raise ConfigError("one weight matrix per layer expected")
        lo, hi = self.hp.weight_range
        for l, w in enumerate(self.weights, start=1):
            if w.shape != (self.dims[l], self.dims[l - 1]):
                raise ConfigError(f"layer {l} weights have shape {w.shape}")
            if w.size and (w.min() < lo or w.max() > hi):
                raise ConfigError(f"layer {l} weights exceed {self.hp.alpha} bit")
        for l in range(1, self.n_layers + 1):
            forward_base(self, l)
            error_base(self, l)

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    def copy(self) -> "MlpModel":
        return MlpModel(self.dims, [w.copy() for w in self.weights], self.hp)

    def equals(self, other: "MlpModel") -> bool:
        return (self.dims == other.dims and self.hp == other.hp
                and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights)))

    def to_text(self) -> str:
        hp = self.hp
        lines = [f"{MODEL_FORMAT} {MODEL_VERSION}",
                 f"alpha {hp.alpha}", f"beta {hp.beta}", f"Gamma {hp.Gamma}",
                 f"relu_cap {hp.relu_cap}", f"kappa {hp.kappa}", f"width {hp.width}",
                 "dims " + " ".join(map(str, self.dims))]
        for l, w in enumerate(self.weights, start=1):
            lines.append(f"layer {l} {w.shape[0]} {w.shape[1]}")
            lines.extend(" ".join(map(str, row)) for row in w.tolist())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MlpModel":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        if head[0] != MODEL_FORMAT or int(head[1]) != MODEL_VERSION:
            raise ValueError(f"not a version-{MODEL_VERSION} model file")
        fields, i = {}, 1
        while not lines[i].startswith("layer"):
            key, *vals = lines[i].split()
            fields[key] = vals
            i += 1
        hp = Hyperparams(**{k: int(fields[k][0]) for k in
                            ("alpha", "beta", "Gamma", "relu_cap", "kappa", "width")})
        dims = tuple(int(v) for v in fields["dims"])
        weights = []
        while i < len(lines):
            _, _, rows, cols = lines[i].split()
            rows, cols = int(rows), int(cols)
            block = [list(map(int, ln.split())) for ln in lines[i + 1:i + 1 + rows]]
            weights.append(np.array(block, dtype=np.int64).reshape(rows, cols))
            i += 1 + rows
        return cls(dims, weights, hp)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "MlpModel":
        with open(path) as fh:
            return cls.from_text(fh.read())


# -- public base selection (plaintext table lookups on public shapes) -------

def forward_bits(model: MlpModel, l: int) -> float:
    hp, b = model.hp, model.dims[l - 1]
    if l == 1:
        return math.log2(b * 2 ** hp.beta * 2 ** hp.alpha + 1)
    return math.log2(b * hp.relu_cap * 2 ** hp.alpha + 1)


def gradient_bits(model: MlpModel, l: int, batch: int) -> float:
    hp = model.hp
    if l == 1:
        return math.log2(batch * 2 ** hp.beta + 1)
    return math.log2(batch * 2 * hp.relu_cap + 1)


def error_bits(model: MlpModel, l: int) -> float:
    return math.log2(model.dims[l] * 2 ** model.hp.alpha + 1)


def _select(bits: float, width: int) -> RnsBase:
    try:
        return select_rns_base(bits, width)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def forward_base(model: MlpModel, l: int) -> RnsBase:
    return _select(forward_bits(model, l), model.hp.width)


def gradient_base(model: MlpModel, l: int, batch: int) -> RnsBase:
    return _select(gradient_bits(model, l, batch), model.hp.width)


def error_base(model: MlpModel, l: int) -> RnsBase:
    return _select(error_bits(model, l), model.hp.width)


# -- gadgets ------------------------------------------------------------------

def _relu_cap_table(cap: int):
    return cached_table(("relu_cap", cap), lambda v: min(max(v, 0), cap), -128, 127, f"relu{cap}")


def relu_cap(a, cap: int, vm: GadgetVM | None = None) -> np.ndarray:
    """``min(max(a, 0), cap)`` as a single lookup."""
    if cap < 0:
        raise ValueError("cap must be non-negative")
    vm = vm or GadgetVM()
    with vm.gadget("relu"):
        return vm.lookup(_relu_cap_table(cap), a)


def exp_approx(v: int, gamma: int, kappa: int) -> int:
    """``round(e^v / e^(2^gamma - 1) * 2^kappa)``, ties to even."""
    return round(math.exp(v - (2 ** gamma - 1)) * 2 ** kappa)


def _exp_table(gamma: int, kappa: int):
    return cached_table(("exp", gamma, kappa), lambda v: exp_approx(v, gamma, kappa),
                        0, 2 ** gamma - 1, f"exp_k{kappa}")


def _normalize_table(kappa: int):
    # cells with u > v are unreachable (the row sum includes u); saturate them
    return cached_table2(("norm", kappa), lambda u, v: min(round((u * 2 ** kappa + 1) / (v + 1)), 255),
                         (0, 2 ** kappa), (0, 255), f"norm_k{kappa}")


def _check_one_hot(labels: np.ndarray, shape) -> None:
    if labels.shape != shape:
        raise ShapeError(f"labels have shape {labels.shape}, logits {shape}")
    if not np.isin(labels, (0, 1)).all() or not (labels.sum(axis=1) == 1).all():
        raise ShapeError("label rows must be one-hot")


def int_ce_loss_deriv(logits, labels, kappa: int = 4, Gamma: int = 7,
                      vm: GadgetVM | None = None) -> np.ndarray:
    """Sign of the integer softmax cross-entropy derivative, in {-1, 0, 1}."""
    logits = np.asarray(logits, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    _check_one_hot(labels, logits.shape)
    o = logits.shape[1]
    if o > max_output_classes(kappa):
        raise ConfigError(f"{o} outputs exceed min(16, 255/2^{kappa})")
    gamma = Gamma - 1
    vm = vm or GadgetVM()
    with vm.gadget("loss"):
        e = vm.lookup(cached_table(("relu", Gamma), lambda v: max(v, 0),
                                   -(2 ** gamma), 2 ** gamma - 1), logits)
        e = vm.lookup(_exp_table(gamma, kappa), e)
        s = vm.sum(e, axis=1, keepdims=True)
        e = vm.lookup2(_normalize_table(kappa), e, s)
        target = vm.mul(labels, vm.sum(e, axis=1, keepdims=True))
        e = vm.sub(e, target, signed=True)
        return vm.lookup(cached_table(("sign",), lambda v: (v > 0) - (v < 0), -128, 127), e)


def _mask_table(cap: int):
    return cached_table2(("mask", cap), lambda e, a: e if a > 0 else 0, (-1, 1), (0, cap))


def _update_table(lo: int, hi: int):
    return cached_table2(("update", lo, hi), lambda w, g: min(max(w - g, lo), hi),
                         (lo, hi), (-1, 1), "clip_update")


# -- training pass ------------------------------------------------------------

@dataclass
class MatmulRecord:
    circuit: str
    base: RnsBase
    max_abs: int  # true accumulator magnitude, from a plaintext oracle


@dataclass
class BatchTrace:
    activations: list[np.ndarray] = field(default_factory=list)
    errors: dict[int, np.ndarray] = field(default_factory=dict)
    gradient_signs: dict[int, np.ndarray] = field(default_factory=dict)
    op_stats: dict[str, OpStats] = field(default_factory=dict)
    scale_errors: list[ScaleErrorRecord] = field(default_factory=list)
    matmuls: list[MatmulRecord] = field(default_factory=list)

    @property
    def logits(self) -> np.ndarray:
        return self.activations[-1]

    @property
    def total_stats(self) -> OpStats:
        total = OpStats()
        for s in self.op_stats.values():
            total = total.merge(s)
        return total


def _traced_matmul(trace: BatchTrace, name: str, X, W, base: RnsBase, vm: GadgetVM):
    trace.matmuls.append(MatmulRecord(name, base, int(np.abs(X @ W).max(initial=0))))
    return matmul(X, W, base, vm)


def forward_pass(model: MlpModel, A0, scaling: str = "approx", batch_index: int = 0,
                 record_errors: bool = True) -> BatchTrace:
    """Forward pass; ``scaling="exact"`` swaps in the exact block-scaling oracle."""
    if scaling not in ("approx", "exact"):
        raise ValueError("scaling must be 'approx' or 'exact'")
    hp = model.hp
    A = np.asarray(A0, dtype=np.int64)
    lo, hi = hp.input_range
    if A.ndim != 2 or A.shape[1] != model.dims[0]:
        raise ShapeError(f"batch of shape {A.shape} does not match input dim {model.dims[0]}")
    if A.size and (A.min() < lo or A.max() > hi):
        raise ValueError(f"inputs outside the signed {hp.beta}-bit range")
    trace = BatchTrace(activations=[A])
    for l, W in enumerate(model.weights, start=1):
        name = f"forward_{l}"
        vm = GadgetVM()
        y = _traced_matmul(trace, name, A, W.T, forward_base(model, l), vm)
        exact = exact_block_scale(y, hp.gamma)
        if scaling == "approx":
            A = shift2msbs_signed(y, hp.width, hp.Gamma, vm).values
            if record_errors:
                trace.scale_errors.append(scale_error(A, exact.values, f"layer_{l}", batch_index))
        else:
            A = exact.values
        if l < model.n_layers:
            A = relu_cap(A, hp.relu_cap, vm)
        trace.activations.append(A)
        trace.op_stats[name] = vm.stats
    return trace


def backward_and_update(model: MlpModel, trace: BatchTrace, error) -> MlpModel:
    """Sign backpropagation and clipped sign-step update; returns a new model."""
    hp = model.hp
    E = np.asarray(error, dtype=np.int64)
    batch = E.shape[0]
    lo, hi = hp.weight_range
    new_weights = list(model.weights)
    for l in range(model.n_layers, 0, -1):
        W = model.weights[l - 1]
        A_prev = trace.activations[l - 1]
        trace.errors[l] = E

        vm = GadgetVM()
        g = _traced_matmul(trace, f"gradient_{l}", E.T, A_prev, gradient_base(model, l, batch), vm)
        G = sign_rns(g, (-1, 0, 1), vm)
        trace.gradient_signs[l] = G
        trace.op_stats[f"gradient_{l}"] = vm.stats

        if l > 1:
            vm = GadgetVM()
            e = _traced_matmul(trace, f"error_{l}", E, W, error_base(model, l), vm)
            E = sign_rns(e, (-1, 0, 1), vm)
            with vm.gadget("relu_mask"):
                E = vm.lookup2(_mask_table(hp.relu_cap), E, A_prev)
            trace.op_stats[f"error_{l}"] = vm.stats

        vm = GadgetVM()
        with vm.gadget("update"):
            new_weights[l - 1] = vm.lookup2(_update_table(lo, hi), W, G)
        trace.op_stats[f"update_{l}"] = vm.stats
    return MlpModel(model.dims, new_weights, hp)


def train_step(model: MlpModel, A0, labels, scaling: str = "approx",
               batch_index: int = 0) -> tuple[MlpModel, BatchTrace]:
    trace = forward_pass(model, A0, scaling, batch_index)
    vm = GadgetVM()
    E = int_ce_loss_deriv(trace.logits, labels, model.hp.kappa, model.hp.Gamma, vm)
    trace.op_stats["loss"] = vm.stats
    return backward_and_update(model, trace, E), trace


def predict(model: MlpModel, X, batch_size: int = 8, scaling: str = "approx",
            engine: str = "circuit") -> np.ndarray:
    """Argmax of the logits, evaluated in batches; ties go to the lowest class.

    ``engine="plain"`` runs the bit-identical plain-integer forward pass,
    which is much faster and is what training uses for monitoring.
    """
    X = np.asarray(X, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("cannot predict on an empty dataset")
    if engine == "plain":
        from .reference import reference_forward

        logits = [reference_forward(model, X[i:i + batch_size], scaling)[-1]
                  for i in range(0, len(X), batch_size)]
    elif engine == "circuit":
        logits = [forward_pass(model, X[i:i + batch_size], scaling, record_errors=False).logits
                  for i in range(0, len(X), batch_size)]
    else:
        raise ValueError("engine must be 'circuit' or 'plain'")
    return np.concatenate([np.argmax(z, axis=1) for z in logits])


def evaluate(model: MlpModel, X, labels, batch_size: int = 8, scaling: str = "approx",
             engine: str = "circuit") -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    target = labels.argmax(axis=1) if labels.ndim == 2 else labels
    return float(np.mean(predict(model, X, batch_size, scaling, engine) == target))


@dataclass
class EpochRecord:
    epoch: int
    train_accuracy: float
    test_accuracy: float


@dataclass
class TrainResult:
    model: MlpModel
    history: list[EpochRecord]
    scale_errors: list[ScaleErrorRecord]
    batch_stats: dict[str, OpStats]
    batches_run: int
    best_test_accuracy: float = float("nan")
    best_step: int = 0  # batches trained when the best test accuracy was seen


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled full batches; a trailing partial batch is dropped."""
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n - batch_size + 1, batch_size)]


def train(model: MlpModel, X_train, Y_train, X_test=None, Y_test=None, epochs: int = 1,
          batch_size: int = 8, seed: int = 0, scaling: str = "approx",
          max_batches: int | None = None, eval_every: str = "batch") -> TrainResult:
    """Repeat the single-batch training pass over shuffled batches.

    Train and test accuracy are recorded after every epoch.  The best test
    accuracy is tracked after every batch (``eval_every="batch"``) or only at
    epoch ends.
    """
    if eval_every not in ("batch", "epoch"):
        raise ValueError("eval_every must be 'batch' or 'epoch'")
    X_train = np.asarray(X_train, dtype=np.int64)
    Y_train = np.asarray(Y_train, dtype=np.int64)
    if len(X_train) < batch_size:
        raise ValueError("training set smaller than one batch")
    has_test = X_test is not None and len(X_test) > 0
    if scaling not in ("approx", "exact"):
        raise ValueError("scaling must be 'approx' or 'exact'")

    def test_accuracy():
        return evaluate(model, X_test, Y_test, batch_size, scaling, "plain") if has_test else float("nan")

    rng = np.random.default_rng([seed, 1])
    history, errors, stats = [], [], {}
    step, best, best_step = 0, float("nan"), 0
    for epoch in range(1, epochs + 1):
        for idx in epoch_batches(len(X_train), batch_size, rng):
            if max_batches is not None and step >= max_batches:
                break
            model, trace = train_step(model, X_train[idx], Y_train[idx], scaling, step)
            errors.extend(trace.scale_errors)
            if not stats:
                stats = trace.op_stats
            step += 1
            if eval_every == "batch" and has_test:
                acc = test_accuracy()
                if not acc <= best:
                    best, best_step = acc, step
        train_acc = evaluate(model, X_train, Y_train, batch_size, scaling, "plain")
        test_acc = test_accuracy()
        history.append(EpochRecord(epoch, train_acc, test_acc))
        if has_test and not test_acc <= best:
            best, best_step = test_acc, step
    return TrainResult(model, history, errors, stats, step, best, best_step)


def with_hyperparams(model: MlpModel, **changes) -> MlpModel:
    return MlpModel(model.dims, model.weights, replace(model.hp, **changes))
