import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rnsmlp.finite_ring import BASES_4BIT, BASES_5BIT, rns_reconstruct
from rnsmlp.gadget_vm import GadgetVM
from rnsmlp.linalg_rns import BLOCK_LEN, MatmulPlan, matmul, matmul_highres_rns, matmul_rns
from rnsmlp.verify import random_matmul_case


def test_small_example():
    X = np.array([[1, 2], [3, 4]])
    W = np.array([[5, 6], [7, 8]])
    assert rns_reconstruct(matmul_rns(X, W, BASES_4BIT[1])).tolist() == [[19, 22], [43, 50]]


def test_negative_entries():
    X = np.array([[-1, 2]])
    W = np.array([[3], [-4]])
    assert rns_reconstruct(matmul_rns(X, W, BASES_4BIT[1]))[0, 0] == -11


def test_inner_dim_longer_than_block():
    # 16 summands forces a second reduced block at n = 15
    X = np.full((1, 16), 1)
    W = np.full((16, 1), 1)
    vm = GadgetVM()
    assert rns_reconstruct(matmul_rns(X, W, BASES_4BIT[0], vm))[0, 0] == 16
    assert "block_sum" in vm.stats.per_gadget


def test_width_dispatch():
    X, W = np.array([[3]]), np.array([[4]])
    with pytest.raises(ValueError):
        matmul_rns(X, W, BASES_5BIT[0])
    with pytest.raises(ValueError):
        matmul_highres_rns(X, W, BASES_4BIT[0])
    assert rns_reconstruct(matmul(X, W, BASES_5BIT[0]))[0, 0] == 12


def test_shape_mismatch():
    with pytest.raises(ValueError):
        matmul_rns(np.zeros((2, 3), int), np.zeros((2, 3), int), BASES_4BIT[0])


def test_block_lengths_keep_8_bit():
    for width, bases in ((4, BASES_4BIT), (5, BASES_5BIT)):
        n = BLOCK_LEN[width]
        for base in bases:
            top = max(base.moduli) - 1
            assert top + n * top <= 255
            assert MatmulPlan.make(base, 1, 100, 1).block_len == n


@pytest.mark.parametrize("base", BASES_4BIT + BASES_5BIT, ids=str)
def test_random_against_int_oracle(base, rng):
    for _ in range(40):
        X, W = random_matmul_case(base, rng, max_dim=20)
        got = rns_reconstruct(matmul(X, W, base, GadgetVM()))
        assert np.array_equal(got, X @ W)


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_highres_property(data):
    base = data.draw(st.sampled_from(BASES_5BIT))
    seed = data.draw(st.integers(0, 2 ** 32 - 1))
    X, W = random_matmul_case(base, np.random.default_rng(seed), max_dim=10)
    assert np.array_equal(rns_reconstruct(matmul_highres_rns(X, W, base, GadgetVM())), X @ W)
