"""Sampling-based bit-rate and PSNR estimation for both codec families.

Predictor side: a fine histogram of sampled prediction errors stands in for
their density; the bit-rate is the entropy of the mass that lands in each
quantization bin and the PSNR follows from the bin width alone.

Transform side: a few coefficients per sampled block are run through the
same exponent alignment and plane cut as the codec.  Their significant-bit
counts are interpolated over the block to get the mean spend per value,
and their truncation errors give the MSE directly (the transform is
orthogonal, so coefficient-domain MSE equals point-domain MSE).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import encode
from .codec import block_exponents, escape_classes, sequency_order
from .errors import EmptySample
from .field import Block, Field, SamplingConfig, sampled_block_indices
from .quantize import DEFAULT_BIN_COUNT, QuantizerSpec
from .transform import DEFAULT_T, bot_forward_batch, lorenzo_stencil, make_bot_matrix

DEFAULT_PDF_BINS = 65535
# Gap between the entropy of the bin indices and what the predictor codec
# actually spends per value (tables, outliers, Huffman's integer lengths).
SZ_BITRATE_OFFSET = 0.5
PSNR_SENTINEL = 999.0


# ---------------------------------------------------------------------------
# histogram


@dataclass(frozen=True)
class ErrorHistogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int

    @property
    def n_pdf(self) -> int:
        return self.counts.size

    @property
    def half_range(self) -> float:
        return float(self.edges[-1])

    @property
    def bin_width(self) -> float:
        return 2.0 * self.half_range / self.n_pdf

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.total

    def cdf(self, x) -> np.ndarray:
        """Piecewise-linear CDF (uniform density inside each histogram bin)."""
        c = np.concatenate([[0.0], np.cumsum(self.counts)]) / self.total
        return np.interp(x, self.edges, c, left=0.0, right=1.0)

    def mean(self) -> float:
        mids = 0.5 * (self.edges[:-1] + self.edges[1:])
        return float(np.dot(mids, self.probabilities))


def build_histogram(samples, n_pdf: int = DEFAULT_PDF_BINS) -> ErrorHistogram:
    s = np.asarray(samples, dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise EmptySample("cannot build a histogram from zero samples")
    if n_pdf < 1:
        raise ValueError("n_pdf must be positive")
    a = float(np.abs(s).max())
    if a == 0.0:
        a = 1e-300
    edges = np.linspace(-a, a, n_pdf + 1)
    idx = np.clip(np.floor((s + a) / (2.0 * a) * n_pdf).astype(np.int64), 0, n_pdf - 1)
    counts = np.bincount(idx, minlength=n_pdf)
    return ErrorHistogram(edges, counts, int(s.size))


def bin_masses(hist: ErrorHistogram, spec: QuantizerSpec) -> np.ndarray:
    """Histogram mass per quantizer bin; mass outside the bins joins the end bins."""
    cdf = hist.cdf(spec.boundaries)
    mass = np.diff(cdf)
    mass[0] += cdf[0]
    mass[-1] += 1.0 - cdf[-1]
    return np.clip(mass, 0.0, None)


def _entropy(mass: np.ndarray) -> float:
    p = mass[mass > 0]
    p = p / p.sum()
    return float(max(0.0, -(p * np.log2(p)).sum()))


def entropy_bitrate(hist: ErrorHistogram, spec: QuantizerSpec) -> float:
    return _entropy(bin_masses(hist, spec))


# ---------------------------------------------------------------------------
# predictor family


@dataclass(frozen=True)
class QualityEstimate:
    family: str
    br: float
    psnr: float
    mse: float
    element_bits: int = 32

    @property
    def compression_ratio(self) -> float:
        return self.element_bits / self.br if self.br > 0 else math.inf


def estimate_sz_bitrate(
    hist: ErrorHistogram,
    delta: float,
    offset: float = SZ_BITRATE_OFFSET,
    bin_count: int = DEFAULT_BIN_COUNT,
) -> float:
    """Entropy of the predictor codec's symbols plus the fixed offset.

    Mass inside the bin range is split per bin.  Mass beyond it is split by
    escape class, each of which also pays its raw low bits.
    """
    if not delta > 0:
        raise ValueError(f"bin size must be positive, got {delta}")
    radius = bin_count // 2
    reach = hist.half_range / delta + 1.0
    # bins past the samples' reach hold no mass, so only the reachable ones are evaluated
    m = min(radius, math.ceil(reach) + 1)
    cdf = hist.cdf((np.arange(-m, m + 2) - 0.5) * delta)
    masses = [np.diff(cdf)]
    extra = 0.0
    for b, lo, hi in escape_classes(radius):
        if lo - 0.5 > reach:
            break
        pos = hist.cdf((hi + 0.5) * delta) - hist.cdf((lo - 0.5) * delta)
        neg = hist.cdf(-(lo - 0.5) * delta) - hist.cdf(-(hi + 0.5) * delta)
        masses.append(np.array([pos, neg]))
        extra += (pos + neg) * (b - 1)
    return _entropy(np.clip(np.concatenate(masses), 0.0, None)) + extra + offset


def estimate_sz_psnr(vr: float, delta: float) -> float:
    if not (vr > 0 and delta > 0):
        raise ValueError("VR and bin size must be positive")
    return 20.0 * math.log10(vr / delta) + 10.0 * math.log10(12.0)


def psnr_from_eb(eb_rel: float) -> float:
    if not eb_rel > 0:
        raise ValueError("relative bound must be positive")
    return -20.0 * math.log10(eb_rel) + 10.0 * math.log10(3.0)


def delta_from_psnr(vr: float, psnr_target: float) -> float:
    if not (vr > 0 and math.isfinite(psnr_target)):
        raise ValueError("need VR > 0 and a finite PSNR target")
    return vr * math.sqrt(12.0) * 10.0 ** (-psnr_target / 20.0)


def psnr_from_mse(mse: float, vr: float) -> float:
    if mse <= 0 or vr <= 0:
        return PSNR_SENTINEL
    return min(PSNR_SENTINEL, -10.0 * math.log10(mse) + 20.0 * math.log10(vr))


def estimate_mse_static(hist: ErrorHistogram, spec: QuantizerSpec) -> float:
    """(1/12) sum δ_i^3 P(m_i), with P(m_i) the histogram density over bin i."""
    widths = spec.bin_sizes
    density = bin_masses(hist, spec) / widths
    return float(np.sum(widths**3 * density) / 12.0)


def estimate_equalprob(bin_count: int, spec: QuantizerSpec, vr: float = 1.0, element_bits: int = 32) -> QualityEstimate:
    """Equal-mass bins: fixed-length codes, and MSE from the bin widths alone."""
    n = (bin_count + 1) // 2
    br = 1.0 + math.log2(n)
    mse = float(np.sum(spec.bin_sizes**2)) / (12.0 * (2 * n - 1))
    return QualityEstimate("equal-prob", br, psnr_from_mse(mse, vr), mse, element_bits)


def auto_pdf_bins(samples, cap: int = DEFAULT_PDF_BINS) -> int:
    """Histogram bin count matched to the sample size (Freedman-Diaconis).

    A fixed fine grid starves each bin when only a few thousand points are
    sampled, and the entropy of a starved histogram saturates near
    log2(sample count).  Wider bins with a linear CDF inside them keep the
    estimate honest for wide error distributions.
    """
    s = np.asarray(samples, dtype=np.float64).reshape(-1)
    a = np.abs(s).max() if s.size else 0.0
    q75, q25 = np.percentile(s, [75, 25]) if s.size else (0.0, 0.0)
    width = 2.0 * (q75 - q25) * s.size ** (-1.0 / 3.0)
    if not (width > 0 and a > 0):
        return cap
    n = int(min(cap, math.ceil(2.0 * a / width)))
    return max(1, n | 1)


def _halo_blocks(f: Field, block_indices) -> tuple[np.ndarray, np.ndarray]:
    """Sampled blocks grown by one point towards the origin on every axis.

    Returns values of shape ``(B, 5, ..., 5)`` with zeros outside the field,
    and the mask of the real (in-field) points of the 4^n block interiors.
    """
    n = f.ndim
    dims = np.array(f.dims)
    grid = tuple(-(-d // 4) for d in f.dims)
    idx = np.asarray(block_indices, dtype=np.int64)
    origins = np.stack(np.unravel_index(idx, grid), axis=1) * 4 - 1
    local = np.indices((5,) * n).reshape(n, -1).T
    pts = origins[:, None, :] + local[None, :, :]
    valid = ((pts >= 0) & (pts < dims)).all(axis=2)
    pts = np.clip(pts, 0, dims - 1)
    values = f.array[tuple(np.moveaxis(pts, 2, 0))].astype(np.float64)
    values[~valid] = 0.0
    shape = (len(idx),) + (5,) * n
    inner = (slice(None),) + (slice(1, None),) * n
    real = valid.reshape(shape)[inner]
    if not real.any():
        raise EmptySample("no points in the sampled blocks")
    return values.reshape(shape), real


def _lorenzo_on_halo(values: np.ndarray, delta: float) -> np.ndarray:
    """Prediction errors at block interiors from grid-rounded neighbours."""
    n = values.ndim - 1
    grid = delta * np.floor(values / delta + 0.5)
    inner = (slice(None),) + (slice(1, None),) * n
    pred = np.zeros(values[inner].shape)
    for off, w in lorenzo_stencil(n):
        sl = (slice(None),) + tuple(slice(1 - o, 5 - o) for o in off)
        pred += w * grid[sl]
    return values[inner] - pred


def sz_prediction_samples(f: Field, block_indices, delta: float) -> np.ndarray:
    """Lorenzo prediction errors at the real points of the given blocks.

    Neighbours are replaced by their decoder-side values (rounded onto the
    ``delta`` grid), so the errors are the ones the predictor codec quantizes.
    """
    values, real = _halo_blocks(f, block_indices)
    return _lorenzo_on_halo(values, delta)[real]


def _fixup_fraction(x: np.ndarray, delta: float, dtype) -> float:
    recon = (delta * np.floor(x / delta + 0.5)).astype(dtype).astype(np.float64)
    return float(np.mean(np.abs(x - recon) > delta / 2.0))


def sz_fixup_fraction(f: Field, block_indices, delta: float) -> float:
    """Share of sampled points whose grid value breaks the bound once cast."""
    values, real = _halo_blocks(f, block_indices)
    n = f.ndim
    inner = (slice(None),) + (slice(1, None),) * n
    return _fixup_fraction(values[inner][real], delta, f.dtype)


# ---------------------------------------------------------------------------
# transform family


@dataclass(frozen=True)
class EcStats:
    positions: np.ndarray
    sampled_nsb: np.ndarray
    interpolated_nsb: np.ndarray
    mean_nsb: float
    mse_sp: float
    overhead_bits: float


def ec_sample_positions(ndim: int, cfg: SamplingConfig) -> np.ndarray:
    size = 4**ndim
    count = cfg.points_per_block(ndim)
    return np.unique(np.round(np.linspace(0, size - 1, count)).astype(np.int64))


def _interp_weights(pos: np.ndarray, size: int) -> np.ndarray:
    """Matrix mapping values at ``pos`` to their linear interpolant on 0..size-1."""
    return np.stack([np.interp(np.arange(size), pos, row) for row in np.eye(pos.size)])


def _as_block_stack(blocks) -> tuple[np.ndarray, np.ndarray | None]:
    if isinstance(blocks, tuple):
        return np.asarray(blocks[0], dtype=np.float64), np.asarray(blocks[1], dtype=bool)
    if isinstance(blocks, np.ndarray):
        return np.asarray(blocks, dtype=np.float64), None
    blocks = list(blocks)
    if not blocks:
        raise EmptySample("no blocks to estimate from")
    if isinstance(blocks[0], Block):
        values = np.stack([b.values for b in blocks]).astype(np.float64)
        padded = np.stack([b.padded for b in blocks])
        return values, padded
    return np.stack(blocks).astype(np.float64), None


def estimate_ec(
    blocks,
    cfg: SamplingConfig,
    eb_abs: float,
    vr: float,
    t: float = DEFAULT_T,
    element_bits: int = 32,
    transformed: bool = False,
) -> tuple[QualityEstimate, EcStats]:
    """Estimate the transform codec from a sample of raw 4^n blocks.

    ``blocks`` is a list of :class:`Block`, a ``(values, padded)`` pair of
    stacks, or a bare stack of block values.
    """
    values, padded = _as_block_stack(blocks)
    if values.shape[0] == 0:
        raise EmptySample("no blocks to estimate from")
    n = values.ndim - 1
    size = 4**n
    coeffs = values if transformed else bot_forward_batch(values, make_bot_matrix(t))
    coeffs = coeffs.reshape(coeffs.shape[0], -1)[:, sequency_order(n)]

    eb_c = encode.coefficient_bound(eb_abs, n)
    max_abs, e_max = block_exponents(coeffs)
    planes = encode.planes_for(e_max, eb_c, max_abs).astype(np.int64)

    pos = ec_sample_positions(n, cfg)
    sub = coeffs[:, pos]
    mags, signs = encode.fixed_point(sub, e_max, planes)
    nsb = encode._bit_length(mags).astype(np.float64)
    weights = _interp_weights(pos, size)
    interp = nsb @ weights
    # A coefficient is sent from the plane where it or any later one turns
    # significant, so its spend follows the staircase from the right.
    stair = np.maximum.accumulate(interp[:, ::-1], axis=1)[:, ::-1]
    mean_nsb = float(stair.mean())

    # On top of that the coder pays a sign per significant coefficient, a
    # group test per plane and per newly significant coefficient, and one
    # exponent byte per block.
    sig_frac = float(((nsb > 0) @ weights).mean())
    overhead = 2.0 * sig_frac + (8.0 + planes.mean()) / size
    spread = 1.0
    if padded is not None:
        real = (~padded).sum()
        spread = padded.size / real if real else 1.0
    br = (mean_nsb + overhead) * spread

    recon = encode.from_fixed_point(mags, signs, e_max, planes)
    mse = float(np.mean((sub - recon) ** 2))
    est = QualityEstimate("transform", br, psnr_from_mse(mse, vr), mse, element_bits)
    return est, EcStats(pos, nsb, stair, mean_nsb, mse, overhead)


def sample_field_blocks(f: Field, cfg: SamplingConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Indices, values and padding masks of the evenly strided block sample.

    Only the sampled blocks are touched, so the cost scales with ``r_sp``.
    Partial blocks are edge-padded exactly as the codec pads them.
    """
    x = f.array
    n = f.ndim
    grid = tuple(-(-d // 4) for d in f.dims)
    idx = sampled_block_indices(math.prod(grid), cfg.r_sp)
    origins = np.stack(np.unravel_index(idx, grid), axis=1) * 4
    local = np.indices((4,) * n).reshape(n, -1).T
    pts = origins[:, None, :] + local[None, :, :]
    dims = np.array(f.dims)
    padded = np.any(pts >= dims, axis=2)
    pts = np.minimum(pts, dims - 1)
    values = x[tuple(np.moveaxis(pts, 2, 0))].astype(np.float64)
    shape = (len(idx),) + (4,) * n
    return idx, values.reshape(shape), padded.reshape(shape)


def estimate_predictor(
    f: Field,
    block_indices,
    eb_abs: float,
    offset: float = SZ_BITRATE_OFFSET,
    bin_count: int = DEFAULT_BIN_COUNT,
) -> QualityEstimate:
    """Predictor codec at ``eb_abs`` from the points of the sampled blocks."""
    delta = 2.0 * eb_abs
    values, real = _halo_blocks(f, block_indices)
    samples = _lorenzo_on_halo(values, delta)[real]
    hist = build_histogram(samples, auto_pdf_bins(samples))
    br = estimate_sz_bitrate(hist, delta, offset, bin_count)
    # points the codec must store verbatim cost an index and a raw value
    inner = (slice(None),) + (slice(1, None),) * f.ndim
    br += _fixup_fraction(values[inner][real], delta, f.dtype) * (64 + f.bits_per_value)
    mse = delta * delta / 12.0
    psnr = estimate_sz_psnr(f.vr, delta) if f.vr > 0 else PSNR_SENTINEL
    return QualityEstimate("predictor", br, psnr, mse, f.bits_per_value)
