from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adcs.errors import EmptyHistogram, InvalidBound
from adcs.estimate import build_histogram, estimate_mse_static
from adcs.quantize import (
    UNPREDICTABLE,
    dequantize,
    equalprob_spec,
    linear_spec,
    log_pattern,
    log_spec,
    quantize,
)


def test_linear_example():
    spec = linear_spec(0.5, 3)
    assert np.allclose(spec.boundaries, [-1.5, -0.5, 0.5, 1.5])
    assert np.allclose(spec.midpoints, [-1, 0, 1])
    q = quantize([0.4], spec)
    assert q.codes[0] == spec.center == 2
    assert dequantize(q, spec)[0] == 0.0


@pytest.mark.parametrize("eb", [0.0, -1.0, np.inf])
def test_linear_rejects_bad_bound(eb):
    with pytest.raises(InvalidBound):
        linear_spec(eb, 3)


def test_even_bin_count_rejected():
    with pytest.raises(InvalidBound):
        linear_spec(1.0, 4)


def test_log_pattern_example():
    assert np.allclose(log_pattern(2.0, 3), [2, 1, 4, 1, 2])


def test_log_spec_symmetric_and_covering():
    spec = log_spec(7.5, 31)
    w = spec.bin_sizes
    assert np.allclose(w, w[::-1])
    assert np.isclose(spec.boundaries[0], -7.5) and np.isclose(spec.boundaries[-1], 7.5)
    assert abs(spec.midpoints[spec.center - 1]) < 1e-12


def test_log_center_bin_holds_plus_minus_b():
    # with max_abs = b + b^(n-1) - 1 the pattern needs no rescaling
    b, n = 2.0, 3
    spec = log_spec(b + b ** (n - 1) - 1, 2 * n - 1, base=b)
    q = quantize(np.linspace(-b, b - 1e-9, 50), spec)
    assert np.all(q.codes == spec.center)


def test_log_beats_linear_on_gaussian(rng):
    s = rng.standard_normal(100_000)
    hist = build_histogram(s)
    a = np.abs(s).max()
    assert estimate_mse_static(hist, log_spec(a, 31)) <= estimate_mse_static(hist, linear_spec(a / 31, 31))


def test_equalprob_uniform_quantiles(rng):
    hist = build_histogram(rng.uniform(0, 1, 400_000), 4001)
    spec = equalprob_spec(hist, 5)
    assert np.allclose(spec.boundaries[1:-1], [0.2, 0.4, 0.6, 0.8], atol=5e-3)


def test_equalprob_point_mass_rejected():
    with pytest.raises(EmptyHistogram):
        equalprob_spec(build_histogram(np.zeros(100)), 5)


def test_equalprob_bin_masses(rng):
    data = rng.standard_normal(200_000)
    spec = equalprob_spec(build_histogram(data), 63)
    counts = np.bincount(quantize(data, spec).codes, minlength=64)[1:]
    expected = data.size / 63
    assert counts.max() <= 1.5 * expected and counts.min() >= expected / 1.5


def test_boundary_ties_and_midpoints():
    spec = linear_spec(0.5, 3)
    q = quantize([-0.5, 0.5, -1.5, 1.5, 1.0], spec)
    # [s_i, s_i+1): a value on s_i belongs to bin i
    assert list(q.codes) == [2, 3, 1, UNPREDICTABLE, 3]
    assert dequantize(q, spec)[4] == 1.0


def test_unpredictable_restored_exactly():
    spec = linear_spec(0.5, 3)
    x = np.array([0.1, 17.25, -3.0])
    q = quantize(x, spec)
    assert list(q.unpredictable_index) == [1, 2]
    assert np.array_equal(dequantize(q, spec)[1:], x[1:])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=200))
def test_linear_error_bound(values):
    spec = linear_spec(1e-3, 2001)
    x = np.array(values)
    err = np.abs(dequantize(quantize(x, spec), spec) - x)
    assert err.max() <= 1e-3 * (1 + 1e-9)


def test_uniform_in_bin_mse(rng):
    spec = linear_spec(0.05, 21)
    x = rng.uniform(-1.0, 1.0, 400_000)
    mse = np.mean((dequantize(quantize(x, spec), spec) - x) ** 2)
    assert abs(mse / (0.1**2 / 12) - 1) < 0.02


def test_quantize_order_independent(rng):
    spec = linear_spec(0.01, 101)
    x = rng.normal(scale=0.3, size=1000)
    perm = rng.permutation(x.size)
    assert np.array_equal(quantize(x[perm], spec).codes, quantize(x, spec).codes[perm])


def test_quantized_error_bound_delta_half(rng):
    from adcs.transform import lorenzo_errors, lorenzo_reconstruct

    x = np.cumsum(rng.normal(size=(8, 9)), axis=0)
    delta = 0.05
    errs = lorenzo_errors(x, lambda e: delta * np.floor(e / delta + 0.5))
    assert np.abs(lorenzo_reconstruct(errs) - x).max() <= delta / 2 + 1e-12
