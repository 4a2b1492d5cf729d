from __future__ import annotations

import math

import numpy as np
import pytest

from adcs import synth
from adcs.codec import TRANSFORM, CodecParams, compress
from adcs.encode import huffman_encode
from adcs.errors import EmptySample
from adcs.estimate import (
    bin_masses,
    build_histogram,
    delta_from_psnr,
    entropy_bitrate,
    estimate_ec,
    estimate_equalprob,
    estimate_mse_static,
    estimate_predictor,
    estimate_sz_bitrate,
    estimate_sz_psnr,
    psnr_from_eb,
    sample_field_blocks,
    sz_prediction_samples,
)
from adcs.field import Field, SamplingConfig
from adcs.quantize import equalprob_spec, linear_spec, quantize


def test_zero_samples_single_spike():
    hist = build_histogram(np.zeros(1000))
    mass = bin_masses(hist, linear_spec(0.5, 5))
    assert mass[2] == pytest.approx(1.0) and mass.sum() == pytest.approx(1.0)


def test_empty_samples_rejected():
    with pytest.raises(EmptySample):
        build_histogram([])


def test_gaussian_histogram_mean(rng):
    hist = build_histogram(rng.standard_normal(100_000))
    assert abs(hist.mean()) < 0.02


@pytest.mark.parametrize(
    "counts,expected",
    [((500, 500, 0), 1.0), ((0, 1000, 0), 0.0), ((2000, 7000, 1000), -sum(p * math.log2(p) for p in (0.7, 0.2, 0.1)))],
)
def test_entropy_bitrate(counts, expected):
    samples = np.repeat([-1.0, 0.0, 1.0], counts)
    assert entropy_bitrate(build_histogram(samples), linear_spec(0.5, 3)) == pytest.approx(expected, abs=1e-9)
    if counts == (2000, 7000, 1000):
        assert expected == pytest.approx(1.1568, abs=1e-4)


def test_sz_bitrate_zero_errors():
    assert estimate_sz_bitrate(build_histogram(np.zeros(100)), 0.1) == pytest.approx(0.5)


def test_sz_bitrate_four_bins(rng):
    delta = 0.2
    samples = rng.uniform(-1.5 * delta, 2.5 * delta, 400_000)
    assert estimate_sz_bitrate(build_histogram(samples), delta) == pytest.approx(2.5, abs=0.01)


def test_sz_bitrate_against_huffman(rng):
    delta = 0.01
    samples = rng.normal(scale=delta, size=200_000)
    codes = quantize(samples, linear_spec(delta / 2, 65535)).codes
    _, nbits, _ = huffman_encode(codes)
    actual = nbits / samples.size
    est = estimate_sz_bitrate(build_histogram(samples, 4001), delta, offset=0.0)
    assert abs(est - actual) / actual <= 0.10


def test_psnr_examples():
    assert psnr_from_eb(1e-4) == pytest.approx(84.77, abs=5e-3)
    assert estimate_sz_psnr(1.0, 2e-4) == pytest.approx(84.77, abs=5e-3)
    assert estimate_sz_psnr(3.0, 3.0) == pytest.approx(10.79, abs=5e-3)


def test_delta_inversion():
    assert delta_from_psnr(1.0, 80 + 10 * math.log10(3)) == pytest.approx(2e-4, rel=1e-12)
    assert delta_from_psnr(5.0, 10 * math.log10(12)) == pytest.approx(5.0, rel=1e-12)
    for d in (1e-9, 1e-4, 0.3):
        assert delta_from_psnr(2.0, estimate_sz_psnr(2.0, d)) == pytest.approx(d, rel=1e-12)


def test_mse_static_uniform(rng):
    hist = build_histogram(rng.uniform(-1, 1, 500_000), 4000)
    delta = 0.1
    assert estimate_mse_static(hist, linear_spec(delta / 2, 19)) == pytest.approx(delta**2 / 12, rel=1e-3)


def test_mse_static_monotone(rng):
    hist = build_histogram(rng.standard_normal(100_000))
    mses = [estimate_mse_static(hist, linear_spec(a / n, n)) for a, n in [(4.0, 9), (4.0, 33), (4.0, 129), (4.0, 513)]]
    assert all(b < a for a, b in zip(mses, mses[1:]))


def test_equalprob_rate():
    spec = linear_spec(1.0, 255)
    assert estimate_equalprob(255, spec).br == 8.0


def test_equalprob_mse_matches_oracle(rng):
    data = rng.uniform(0, 1, 200_000)
    spec = equalprob_spec(build_histogram(data), 31)
    q = quantize(data, spec)
    mse = float(np.mean((spec.midpoints[q.codes - 1] - data) ** 2))
    assert estimate_equalprob(31, spec).mse == pytest.approx(mse, rel=0.05)


def test_ec_all_zero_blocks():
    cfg = SamplingConfig()
    est, stats = estimate_ec(np.zeros((6, 4, 4)), cfg, 1e-3, 1.0)
    assert stats.mean_nsb == 0.0 and est.psnr == 999.0
    # only the per-block exponent byte remains
    assert est.br == pytest.approx(stats.overhead_bits)


@pytest.mark.parametrize("k", [1, 3, 9])
def test_ec_uniform_nsb(k):
    # pre-transformed block whose coefficients all sit on the top plane
    block = np.full((1, 4, 4, 4), 1.5)
    # per-coefficient budget 2^(1-k) keeps exactly k planes below e_max = 0
    eb = 2.0 ** (1 - k) * 8.0
    _, stats = estimate_ec(block, SamplingConfig(), eb, 1.0, transformed=True)
    assert np.allclose(stats.sampled_nsb, k)
    assert stats.mean_nsb == pytest.approx(k)


def test_ec_smooth_field_rate():
    f = synth.generate("smooth-sine", (128, 128), seed=7)
    eb = 1e-4 * f.vr
    _, values, padded = sample_field_blocks(f, SamplingConfig(0.05))
    est, _ = estimate_ec((values, padded), SamplingConfig(0.05), eb, f.vr)
    actual = compress(f, CodecParams(TRANSFORM, eb)).bit_rate
    assert abs(est.br - actual) / actual <= 0.15


def test_prediction_samples_match_sequential_oracle(rng):
    x = np.cumsum(rng.normal(size=(9, 11)), axis=1).astype(np.float32)
    f = Field.from_array("x", x)
    delta = 0.05
    xd = x.astype(np.float64)
    grid = delta * np.floor(xd / delta + 0.5)
    expected = np.zeros_like(xd)
    for i in range(9):
        for j in range(11):
            a = grid[i - 1, j] if i else 0.0
            b = grid[i, j - 1] if j else 0.0
            c = grid[i - 1, j - 1] if i and j else 0.0
            expected[i, j] = xd[i, j] - (a + b - c)
    got = sz_prediction_samples(f, np.arange(9), delta)
    # blocks are visited in raster order of the 3 x 3 block grid
    pts = [(bi * 4 + u, bj * 4 + v) for bi in range(3) for bj in range(3) for u in range(4) for v in range(4)]
    pts = [p for p in pts if p[0] < 9 and p[1] < 11]
    assert np.allclose(got, [expected[p] for p in pts])


def test_predictor_estimate_psnr():
    f = synth.generate("turbulence-mix", (64, 64), seed=3)
    idx, _, _ = sample_field_blocks(f, SamplingConfig(0.05))
    est = estimate_predictor(f, idx, 1e-4 * f.vr)
    assert est.psnr == pytest.approx(84.77, abs=5e-3)


def test_entropy_at_most_log_bins(rng):
    spec = linear_spec(0.05, 21)
    for scale in (0.01, 0.2, 1.0):
        hist = build_histogram(rng.normal(scale=scale, size=20_000))
        assert entropy_bitrate(hist, spec) <= math.log2(21) + 1e-12
    flat = build_histogram(rng.uniform(-1.05, 1.05, 2_000_000), 21 * 50)
    assert entropy_bitrate(flat, spec) == pytest.approx(math.log2(21), abs=1e-3)


def test_estimate_is_shannon_floor(rng):
    for i in range(50):
        scale = 10.0 ** rng.uniform(-3, 0)
        data = rng.laplace(scale=scale, size=5000) if i % 2 else rng.normal(scale=scale, size=5000)
        delta = 10.0 ** rng.uniform(-3, -1)
        _, nbits, _ = huffman_encode(quantize(data, linear_spec(delta / 2, 65535)).codes)
        est = estimate_sz_bitrate(build_histogram(data), delta, offset=0.0)
        assert est <= nbits / data.size + 1e-9


def test_mse_static_exact_for_uniform_density():
    from adcs.estimate import ErrorHistogram

    edges = np.linspace(-1.0, 1.0, 2001)
    hist = ErrorHistogram(edges, np.full(2000, 7), 14000)
    delta = 0.1
    assert estimate_mse_static(hist, linear_spec(delta / 2, 19)) == pytest.approx(delta**2 / 12, rel=1e-12)


def test_equalprob_matches_linear_on_uniform_density(rng):
    hist = build_histogram(rng.uniform(-1.0, 1.0, 2_000_000), 20_000)
    spec = equalprob_spec(hist, 41)
    assert np.allclose(spec.bin_sizes, 2.0 / 41, rtol=0.02)
    linear_psnr = estimate_sz_psnr(2.0, 2.0 / 41)
    assert estimate_equalprob(41, spec, vr=2.0).psnr == pytest.approx(linear_psnr, abs=0.05)


def test_equalprob_entropy_coding_gains_nothing(rng):
    data = rng.normal(size=500_000)
    spec = equalprob_spec(build_histogram(data), 255)
    _, nbits, _ = huffman_encode(quantize(data, spec).codes)
    assert nbits / data.size >= estimate_equalprob(255, spec).br - 0.05
