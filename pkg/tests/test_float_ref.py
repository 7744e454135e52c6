import numpy as np

from rnsmlp.float_ref import float_accuracy, float_reference_train


def toy():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(64, 2)).astype(np.float32)
    Y = np.eye(2, dtype=np.float32)[(X[:, 0] + X[:, 1] > 0).astype(int)]
    return X, Y


def test_separable_reaches_full_train_accuracy():
    X, Y = toy()
    res = float_reference_train(X, Y, X, Y, hidden=(), epochs=60, seed=1, lr=1e-2)
    assert res.train_accuracy[-1] == 1.0


def test_zero_epochs_is_init_accuracy():
    X, Y = toy()
    res = float_reference_train(X, Y, X, Y, hidden=(4,), epochs=0, seed=3)
    assert res.test_accuracy == [] and res.best_test_accuracy == res.initial_test_accuracy
    assert res.initial_test_accuracy == float_accuracy(res.weights, X, Y)


def test_float32_and_no_bias():
    X, Y = toy()
    res = float_reference_train(X, Y, X, Y, hidden=(5,), epochs=1)
    assert [w.shape for w in res.weights] == [(2, 5), (5, 2)]
    assert all(w.dtype == np.float32 for w in res.weights)


def test_deterministic():
    X, Y = toy()
    a = float_reference_train(X, Y, X, Y, hidden=(4,), epochs=3, seed=2)
    b = float_reference_train(X, Y, X, Y, hidden=(4,), epochs=3, seed=2)
    assert all(np.array_equal(p, q) for p, q in zip(a.weights, b.weights))
