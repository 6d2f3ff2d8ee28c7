import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plastiformer.numerics import (QuantSpec, ShapeError, dequantize, quantize,
                                   relu, rmsnorm, softmax, vmm)


def triple_loop_vmm(m, x):
    """Independent scalar oracle for the matrix-vector product."""
    out = [0.0] * m.shape[0]
    for i in range(m.shape[0]):
        for j in range(m.shape[1]):
            out[i] += m[i, j] * x[j]
    return np.array(out)


class TestVmm:
    def test_identity(self):
        np.testing.assert_array_equal(vmm(np.eye(3), np.array([1.0, 2, 3])), [1, 2, 3])

    def test_zeros(self):
        np.testing.assert_array_equal(vmm(np.zeros((2, 3)), np.ones(3)), [0, 0])

    def test_matches_triple_loop_oracle(self):
        # BLAS may reorder the sum; agreement is to the last ulp, not bitwise
        rng = np.random.default_rng(42)
        m = rng.normal(size=(4, 4))
        x = rng.normal(size=4)
        np.testing.assert_allclose(vmm(m, x), triple_loop_vmm(m, x),
                                   rtol=1e-14, atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            vmm(np.zeros((2, 3)), np.zeros(4))

    def test_linearity(self):
        rng = np.random.default_rng(7)
        m = rng.normal(size=(5, 6))
        x, y = rng.normal(size=6), rng.normal(size=6)
        a, b = 1.7, -0.3
        np.testing.assert_allclose(
            vmm(m, a * x + b * y), a * vmm(m, x) + b * vmm(m, y), atol=1e-9
        )


class TestRmsnorm:
    def test_constant_vector_normalizes_to_one(self):
        out = rmsnorm(np.full(4, 3.0), eps=1e-15)
        np.testing.assert_allclose(out, np.ones(4), atol=1e-7)

    def test_zero_is_fixed_point(self):
        np.testing.assert_array_equal(rmsnorm(np.zeros(5)), np.zeros(5))

    def test_direct_formula_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=16)
        gain = rng.normal(size=16)
        eps = 1e-6
        expected = gain * x / np.sqrt(np.mean(x**2) + eps)
        np.testing.assert_allclose(rmsnorm(x, gain, eps), expected, atol=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=8)
        a = rmsnorm(x, eps=1e-12)
        b = rmsnorm(2.5 * x, eps=1e-12)
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError):
            rmsnorm(np.ones(3), eps=0.0)


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros(4)), np.full(4, 0.25))

    def test_singleton(self):
        np.testing.assert_allclose(softmax(np.array([3.7])), [1.0])

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=9)
        np.testing.assert_allclose(softmax(a), softmax(a + 123.456), atol=1e-12)

    def test_is_distribution(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            p = softmax(rng.normal(scale=10, size=rng.integers(1, 30)))
            assert abs(p.sum() - 1) < 1e-6
            assert np.all(p >= 0) and np.all(p <= 1)


def test_relu():
    np.testing.assert_array_equal(relu(np.array([-1.0, 0, 2])), [0, 0, 2])
    np.testing.assert_array_equal(relu(np.array([-5.0, -0.1])), [0, 0])
    x = np.array([0.0, 1, 4])
    np.testing.assert_array_equal(relu(x), x)


class TestQuantize:
    def test_zero(self):
        qt = quantize(np.zeros(3), QuantSpec(8, True, -6))
        assert np.all(qt.codes == 0)
        assert np.all(dequantize(qt) == 0)

    def test_saturation(self):
        spec = QuantSpec(8, True, -4)
        qt = quantize(np.array([1000.0]), spec)
        assert qt.codes[0] == 127
        assert qt.saturated == 1
        assert dequantize(qt)[0] == 127 * 2**-4

    def test_error_bound_random(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(-1, 1, size=500)
        spec = QuantSpec.covering(x, 8)
        qt = quantize(x, spec)
        assert qt.saturated == 0
        assert np.max(np.abs(dequantize(qt) - x)) <= spec.scale / 2

    def test_idempotent(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=64)
        spec = QuantSpec.covering(x, 8)
        once = quantize(x, spec)
        twice = quantize(dequantize(once), spec)
        np.testing.assert_array_equal(once.codes, twice.codes)

    def test_round_half_to_even(self):
        spec = QuantSpec(8, True, 0)
        qt = quantize(np.array([0.5, 1.5, 2.5, -0.5]), spec)
        np.testing.assert_array_equal(qt.codes, [0, 2, 2, 0])

    def test_covering_scale_is_minimal(self):
        spec = QuantSpec.covering(np.array([3.0]), 8)
        assert 127 * spec.scale >= 3.0
        assert 127 * spec.scale / 2 < 3.0

    def test_bitwidth_validation(self):
        with pytest.raises(ValueError):
            QuantSpec(1, True, 0)
        with pytest.raises(ValueError):
            QuantSpec(33, True, 0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=32),
    st.integers(2, 16),
)
def test_quantize_error_bound_property(values, bits):
    x = np.array(values)
    spec = QuantSpec.covering(x, bits)
    qt = quantize(x, spec)
    assert qt.saturated == 0
    assert np.max(np.abs(dequantize(qt) - x)) <= spec.scale / 2 + 1e-12
