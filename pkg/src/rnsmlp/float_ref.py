"""Float32 MLP baseline: bias-free, ReLU, softmax cross-entropy, Adam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import epoch_batches


@dataclass
class FloatResult:
    weights: list[np.ndarray]
    train_accuracy: list[float]
    test_accuracy: list[float]
    initial_test_accuracy: float
    best_test_accuracy: float = float("nan")


def _forward(weights, X):
    acts = [X]
    for i, W in enumerate(weights):
        z = acts[-1] @ W
        acts.append(np.maximum(z, 0) if i < len(weights) - 1 else z)
    return acts


def float_accuracy(weights, X, Y) -> float:
    if len(X) == 0:
        return float("nan")
    logits = _forward(weights, np.asarray(X, dtype=np.float32))[-1]
    return float(np.mean(logits.argmax(1) == np.asarray(Y).argmax(1)))


def float_reference_train(X_train, Y_train, X_test, Y_test, hidden=(), epochs: int = 1,
                          batch_size: int = 8, seed: int = 0, lr: float = 1e-3,
                          betas=(0.9, 0.999), eps: float = 1e-8,
                          eval_every: str = "batch") -> FloatResult:
    """Adam-trained float32 baseline; best test accuracy tracked like the integer run."""
    X_train = np.asarray(X_train, dtype=np.float32)
    Y_train = np.asarray(Y_train, dtype=np.float32)
    dims = [X_train.shape[1], *hidden, Y_train.shape[1]]
    rng = np.random.default_rng([seed, 2])
    weights = []
    for a, b in zip(dims[:-1], dims[1:]):
        bound = 1 / np.sqrt(a)
        weights.append(rng.uniform(-bound, bound, size=(a, b)).astype(np.float32))
    m = [np.zeros_like(w) for w in weights]
    v = [np.zeros_like(w) for w in weights]
    b1, b2 = np.float32(betas[0]), np.float32(betas[1])
    lr, eps = np.float32(lr), np.float32(eps)
    shuffle = np.random.default_rng([seed, 1])
    t = 0
    init_acc = float_accuracy(weights, X_test, Y_test)
    result = FloatResult(weights, [], [], init_acc, init_acc)
    for _ in range(epochs):
        for idx in epoch_batches(len(X_train), batch_size, shuffle):
            acts = _forward(weights, X_train[idx])
            z = acts[-1] - acts[-1].max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            delta = (p - Y_train[idx]) / np.float32(len(idx))
            t += 1
            for i in range(len(weights) - 1, -1, -1):
                grad = acts[i].T @ delta
                if i:
                    delta = (delta @ weights[i].T) * (acts[i] > 0)
                m[i] = b1 * m[i] + (1 - b1) * grad
                v[i] = b2 * v[i] + (1 - b2) * grad * grad
                m_hat = m[i] / (1 - b1 ** t)
                v_hat = v[i] / (1 - b2 ** t)
                weights[i] = (weights[i] - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(np.float32)
            if eval_every == "batch":
                result.best_test_accuracy = max(result.best_test_accuracy,
                                                float_accuracy(weights, X_test, Y_test))
        result.train_accuracy.append(float_accuracy(weights, X_train, Y_train))
        result.test_accuracy.append(float_accuracy(weights, X_test, Y_test))
        result.best_test_accuracy = max(result.best_test_accuracy, result.test_accuracy[-1])
    return result
