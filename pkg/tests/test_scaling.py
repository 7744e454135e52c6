import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rnsmlp.finite_ring import BASES_4BIT, BASES_5BIT, to_rns
from rnsmlp.gadget_vm import GadgetVM
from rnsmlp.reference import approx_block_scale
from rnsmlp.scaling import (exact_block_scale, scale_error, shift2msbs_pos, shift2msbs_signed)

BASE = BASES_4BIT[1]  # {13, 15, 14}


def test_worked_example():
    vm = GadgetVM()
    res = shift2msbs_pos(to_rns(np.array([611, 353, 19]), BASE), 4, 5, vm)
    assert res.values.tolist() == [25, 14, 0]
    assert res.shift == 5


def test_worked_example_exact_reference():
    res = exact_block_scale(np.array([611, 353, 19]), 5)
    assert res.values.tolist() == [19, 11, 0]
    assert res.shift == 5


def test_signed_example():
    res = shift2msbs_signed(to_rns(np.array([-611, -353, -19]), BASE), 4, 6)
    assert res.values.tolist() == [-25, -14, 0]
    assert res.shift == 5


def test_small_tensor_is_not_shifted():
    res = shift2msbs_pos(to_rns(np.array([5]), BASE), 4, 5)
    assert res.values.tolist() == [5]
    assert res.shift == -2


def test_zero_tensor():
    res = shift2msbs_signed(to_rns(np.zeros(4, dtype=int), BASE), 4, 7)
    assert res.values.tolist() == [0, 0, 0, 0]


def test_gamma_validation():
    with pytest.raises(ValueError):
        shift2msbs_signed(to_rns(np.array([1]), BASE), 4, 1)
    with pytest.raises(ValueError):
        shift2msbs_pos(to_rns(np.array([1]), BASE), 4, 0)


@pytest.mark.parametrize("x,gamma,values,shift", [
    ([1000, -3], 6, [62, 0], 4),
    ([7, 0], 6, [7, 0], 0),
    ([-64], 6, [-32], 1),
])
def test_exact_block_scale(x, gamma, values, shift):
    res = exact_block_scale(np.array(x), gamma)
    assert res.values.tolist() == values and res.shift == shift


def test_scale_error_record():
    rec = scale_error(np.array([25, 14, 0]), np.array([19, 11, 0]), "l1", 3)
    assert rec.max_abs_error == 6
    assert rec.mean_abs_error == pytest.approx(3.0)
    assert (rec.tag, rec.batch, rec.count) == ("l1", 3, 3)


def test_lookup_counts_are_shape_determined(rng):
    counts = set()
    for _ in range(5):
        vm = GadgetVM()
        shift2msbs_signed(to_rns(rng.integers(-1300, 1300, size=(4, 5)), BASE), 4, 7, vm)
        counts.add((vm.stats.lookup_count, vm.stats.linear_op_count))
    assert len(counts) == 1


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(BASES_4BIT + BASES_5BIT), st.integers(5, 7), st.data())
def test_matches_plain_reference_and_bounds(base, Gamma, data):
    half = base.cardinality // 2
    xs = data.draw(st.lists(st.integers(-half + 1, half - 1), min_size=1, max_size=12))
    x = np.array(xs)
    got = shift2msbs_signed(to_rns(x, base), base.width, Gamma, GadgetVM())
    want = approx_block_scale(x, base.moduli, base.width, Gamma - 1)
    assert np.array_equal(got.values, want)
    assert np.abs(got.values).max() < 2 ** (Gamma - 1)
    # sign is preserved (or the value vanishes)
    assert np.all((np.sign(got.values) == np.sign(x)) | (got.values == 0))
