import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import central_diff
from uavsplit.channel import ChannelSpec, Link, apply, mask_gradient, sample_mask
from uavsplit.errors import ContractViolation


def test_degenerate_probabilities(rng):
    assert np.all(sample_mask(rng, 0.0, (4, 5)) == 1.0)
    assert np.all(sample_mask(rng, 1.0, (4, 5)) == 0.0)


def test_erasure_rate_close_to_p():
    mask = sample_mask(np.random.default_rng(0), 0.4, (100_000,))
    rate = 1.0 - mask.mean()
    assert 0.39 <= rate <= 0.41
    assert set(np.unique(mask)) <= {0.0, 1.0}


def test_mask_deterministic_given_generator():
    a = sample_mask(np.random.default_rng(9), 0.3, (20, 10))
    b = sample_mask(np.random.default_rng(9), 0.3, (20, 10))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("p", [-0.1, 1.5, float("nan")])
def test_probability_out_of_range(rng, p):
    with pytest.raises(ContractViolation):
        sample_mask(rng, p, (3,))
    with pytest.raises(ContractViolation):
        ChannelSpec(Link.EDGE_DRONE, p)


def test_apply_examples():
    np.testing.assert_array_equal(apply([1.0, -2.0, 3.0], [1, 0, 1]), [1.0, 0.0, 3.0])
    z = np.array([[0.1, -0.7], [0.3, 1e-300]])
    assert apply(z, np.ones_like(z)).tobytes() == z.tobytes()
    assert np.all(apply(z, np.zeros_like(z)) == 0.0)


def test_apply_and_gradient_shape_errors():
    with pytest.raises(ContractViolation):
        apply(np.ones((2, 3)), np.ones((3, 2)))
    with pytest.raises(ContractViolation):
        mask_gradient(np.ones(3), np.ones(4))


def test_mask_gradient_examples(rng):
    dz = rng.normal(size=(3, 4))
    assert np.all(mask_gradient(dz, np.zeros_like(dz)) == 0.0)
    assert np.array_equal(mask_gradient(dz, np.ones_like(dz)), dz)


def test_mask_gradient_matches_finite_differences(rng):
    z = rng.normal(size=(2, 3))
    q = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    w = rng.normal(size=(2, 3))
    num = central_diff(lambda: float((apply(z, q) * w).sum()), {"z": z})["z"]
    got = mask_gradient(w, q)
    np.testing.assert_allclose(got, num, rtol=1e-8, atol=1e-10)
    assert np.all(got[q == 0] == 0.0)


@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_idempotent_and_unscaled(seed, p):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(5, 4))
    q = sample_mask(rng, p, z.shape)
    once = apply(z, q)
    assert np.array_equal(apply(once, q), once)
    kept = q == 1.0
    assert np.array_equal(once[kept], z[kept])
    assert np.all(once[~kept] == 0.0)


@pytest.mark.parametrize("p", [0.2, 0.5, 0.9])
def test_rescaled_mask_values_and_mean(p):
    mask = sample_mask(np.random.default_rng(3), p, (200_000,), rescale=True)
    assert set(np.unique(mask)) == {0.0, 1.0 / (1.0 - p)}
    assert abs(mask.mean() - 1.0) < 0.02
    assert abs((mask == 0.0).mean() - p) < 0.01


def test_rescaled_mask_degenerate_probabilities(rng):
    assert np.all(sample_mask(rng, 0.0, (3, 4), rescale=True) == 1.0)
    assert np.all(sample_mask(rng, 1.0, (3, 4), rescale=True) == 0.0)


def test_rescaled_mask_same_erasures_as_plain():
    plain = sample_mask(np.random.default_rng(8), 0.3, (50, 7))
    scaled = sample_mask(np.random.default_rng(8), 0.3, (50, 7), rescale=True)
    np.testing.assert_array_equal(plain == 0.0, scaled == 0.0)


def test_rescaled_apply_and_gradient(rng):
    z = rng.normal(size=(2, 3))
    q = np.array([[2.0, 0.0, 2.0], [0.0, 2.0, 2.0]])
    np.testing.assert_array_equal(apply(z, q), np.where(q > 0, 2.0 * z, 0.0))
    w = rng.normal(size=(2, 3))
    num = central_diff(lambda: float((apply(z, q) * w).sum()), {"z": z})["z"]
    np.testing.assert_allclose(mask_gradient(w, q), num, rtol=1e-8, atol=1e-10)
