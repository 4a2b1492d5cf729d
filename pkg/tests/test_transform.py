from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.fft
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adcs.errors import ParameterOutOfRange
from adcs.transform import (
    T_DCT2,
    T_HAAR,
    T_HIGH_CORRELATION,
    T_SLANT,
    T_WALSH_HADAMARD,
    bot_forward,
    bot_forward_batch,
    bot_inverse,
    bot_inverse_batch,
    lorenzo_diff,
    lorenzo_errors,
    lorenzo_integrate,
    lorenzo_reconstruct,
    lorenzo_stencil,
    make_bot_matrix,
)

NAMED = [T_HAAR, T_DCT2, T_SLANT, T_HIGH_CORRELATION, T_WALSH_HADAMARD]


@pytest.mark.parametrize("t", NAMED)
def test_orthogonal(t):
    m = make_bot_matrix(t).T
    assert np.abs(m @ m.T - np.eye(4)).max() < 1e-12


def test_dct_member_matches_scipy():
    oracle = scipy.fft.dct(np.eye(4), norm="ortho", axis=0)
    assert np.allclose(make_bot_matrix(T_DCT2).T, oracle, atol=1e-15)


def test_walsh_hadamard_entries():
    assert np.allclose(np.abs(make_bot_matrix(T_WALSH_HADAMARD).T), 0.5)


def test_parameter_range():
    with pytest.raises(ParameterOutOfRange):
        make_bot_matrix(-0.1)
    with pytest.raises(ParameterOutOfRange):
        make_bot_matrix(1.5)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_forward_inverse_and_batch(n, rng):
    T = make_bot_matrix(T_SLANT)
    blocks = rng.normal(size=(5,) + (4,) * n)
    batch = bot_forward_batch(blocks, T)
    for b, c in zip(blocks, batch):
        assert np.allclose(bot_forward(b, T), c, atol=1e-13)
        assert np.allclose(bot_inverse(c, T), b, atol=1e-13)
    assert np.allclose(bot_inverse_batch(batch, T), blocks, atol=1e-13)


def test_separable_oracle_2d(rng):
    T = make_bot_matrix(T_DCT2).T
    b = rng.normal(size=(4, 4))
    # applying T along axis 1 then axis 2 of a matrix is T @ B @ T^t
    assert np.allclose(bot_forward(b, make_bot_matrix(T_DCT2)), T @ b @ T.T, atol=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), arrays(np.float64, (4, 4, 4), elements=st.floats(-1e6, 1e6)))
def test_l2_preserved(t, block):
    T = make_bot_matrix(t)
    out = bot_forward(block, T)
    norm = np.linalg.norm(block)
    assert abs(np.linalg.norm(out) - norm) <= 1e-10 * max(norm, 1e-300)


@pytest.mark.parametrize(
    "n,expected",
    [
        (1, {(1,): 1}),
        (2, {(0, 1): 1, (1, 0): 1, (1, 1): -1}),
        (3, {(0, 0, 1): 1, (0, 1, 0): 1, (1, 0, 0): 1, (0, 1, 1): -1, (1, 0, 1): -1, (1, 1, 0): -1, (1, 1, 1): 1}),
    ],
)
def test_lorenzo_stencil(n, expected):
    assert dict(lorenzo_stencil(n)) == expected


def test_lorenzo_exact_on_additive_fields():
    i, j = np.meshgrid(np.arange(6.0), np.arange(7.0), indexing="ij")
    x = 3.0 + 2.0 * i - 0.5 * j**2
    errs = lorenzo_errors(x)
    # interior points of g(i) + h(j) have zero mixed difference
    assert np.allclose(errs.values[1:, 1:], 0.0)


@pytest.mark.parametrize("shape", [(9,), (5, 6), (3, 4, 5)])
def test_lossless_round_trip(shape, rng):
    x = rng.normal(size=shape)
    errs = lorenzo_errors(x)
    assert np.allclose(lorenzo_reconstruct(errs), x, atol=1e-12)


@pytest.mark.parametrize("shape", [(9,), (5, 6), (3, 4, 5)])
def test_integer_residual_matches_sequential_predictor(shape, rng):
    k = rng.integers(-50, 50, size=shape)
    errs = lorenzo_errors(k.astype(float))
    assert np.array_equal(lorenzo_diff(k), errs.values.astype(np.int64))
    assert np.array_equal(lorenzo_integrate(lorenzo_diff(k)), k)


def test_quantized_error_equality(rng):
    x = rng.normal(size=(6, 7))
    q = lambda e: 0.1 * math.floor(e / 0.1 + 0.5)  # noqa: E731
    errs = lorenzo_errors(x, q)
    recon = lorenzo_reconstruct(errs)
    assert np.abs((x - recon) - (errs.values - errs.reconstructed)).max() < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.floats(0, 1))
def test_error_preserved_in_coefficient_space(seed, n, t):
    rng = np.random.default_rng(seed)
    T = make_bot_matrix(t)
    block = rng.normal(size=(4,) * n)
    coeffs = bot_forward(block, T)
    noisy = coeffs + rng.normal(scale=1e-3, size=coeffs.shape)
    approx = bot_inverse(noisy, T)
    assert np.linalg.norm(block - approx) == pytest.approx(np.linalg.norm(coeffs - noisy), rel=1e-10)


def test_haar_member_on_constant_row():
    assert np.allclose(bot_forward(np.ones(4), make_bot_matrix(T_HAAR)), [2, 0, 0, 0])
    assert np.array_equal(bot_forward(np.zeros((4, 4)), make_bot_matrix(T_HAAR)), np.zeros((4, 4)))
    assert np.allclose(make_bot_matrix(T_HAAR).entries[1], 0.5 * np.array([math.sqrt(2), 0, 0, -math.sqrt(2)]))


def test_spec_lorenzo_examples():
    assert np.array_equal(lorenzo_errors(np.full(4, 2.5)).values, [2.5, 0, 0, 0])
    i, j = np.meshgrid(np.arange(5.0), np.arange(5.0), indexing="ij")
    assert np.all(lorenzo_errors(i + j).values[1:, 1:] == 0)
    # zero errors rebuild the pure prediction cascade, which is all zeros
    assert np.array_equal(lorenzo_reconstruct(lorenzo_errors(np.zeros((3, 3)))), np.zeros((3, 3)))
