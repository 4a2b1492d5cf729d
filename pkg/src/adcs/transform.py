"""Lossless stage-I transforms.

Two families live here:

* the block orthogonal transform (BOT): a 4x4 orthogonal matrix from a
  one-parameter family applied along every axis of a 4^n block;
* the Lorenzo prediction transform: each point is predicted from its
  already-reconstructed preceding neighbours (1, 3 or 7 of them for 1D, 2D,
  3D) and replaced by the prediction error.

All arithmetic is float64 regardless of the field precision.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterOutOfRange
from .field import Field, fold, unfold

# Named members of the parametric family.
T_HAAR = 0.0
T_DCT2 = 0.25
T_SLANT = 2.0 / math.pi * math.atan(1.0 / 3.0)
T_HIGH_CORRELATION = 2.0 / math.pi * math.atan(0.5)
T_WALSH_HADAMARD = 0.5
DEFAULT_T = T_DCT2


@dataclass(frozen=True)
class BotMatrix:
    t: float
    entries: np.ndarray

    @property
    def T(self) -> np.ndarray:  # noqa: N802
        return self.entries


def make_bot_matrix(t: float = DEFAULT_T) -> BotMatrix:
    if not 0.0 <= t <= 1.0:
        raise ParameterOutOfRange(f"transform parameter t={t} outside [0, 1]")
    s = math.sqrt(2.0) * math.sin(math.pi * t / 2.0)
    c = math.sqrt(2.0) * math.cos(math.pi * t / 2.0)
    m = 0.5 * np.array(
        [
            [1.0, 1.0, 1.0, 1.0],
            [c, s, -s, -c],
            [1.0, -1.0, -1.0, 1.0],
            [s, -c, c, -s],
        ]
    )
    m.setflags(write=False)
    return BotMatrix(float(t), m)


def bot_forward(block: np.ndarray, T: BotMatrix) -> np.ndarray:
    """Apply T along axes 1..n of a single 4^n block via unfold/fold."""
    x = np.asarray(block, dtype=np.float64)
    for k in range(1, x.ndim + 1):
        x = fold(T.entries @ unfold(x, k), k)
    return x


def bot_inverse(block: np.ndarray, T: BotMatrix) -> np.ndarray:
    x = np.asarray(block, dtype=np.float64)
    for k in range(x.ndim, 0, -1):
        x = fold(T.entries.T @ unfold(x, k), k)
    return x


def _apply_axes(blocks: np.ndarray, m: np.ndarray, axes) -> np.ndarray:
    x = np.asarray(blocks, dtype=np.float64)
    for ax in axes:
        x = np.moveaxis(np.moveaxis(x, ax, -1) @ m.T, -1, ax)
    return x


def bot_forward_batch(blocks: np.ndarray, T: BotMatrix) -> np.ndarray:
    """Forward BOT of a stack of blocks shaped ``(m,) + (4,)*n``."""
    n = blocks.ndim - 1
    return _apply_axes(blocks, T.entries, range(1, n + 1))


def bot_inverse_batch(blocks: np.ndarray, T: BotMatrix) -> np.ndarray:
    n = blocks.ndim - 1
    return _apply_axes(blocks, T.entries.T, range(n, 0, -1))


# ---------------------------------------------------------------------------
# Lorenzo prediction


def lorenzo_stencil(ndim: int) -> list[tuple[tuple[int, ...], int]]:
    """(offset, weight) pairs of the Lorenzo predictor; inclusion-exclusion."""
    terms = []
    for subset in itertools.product((0, 1), repeat=ndim):
        order = sum(subset)
        if order:
            terms.append((subset, 1 if order % 2 else -1))
    return terms


@dataclass(frozen=True)
class PredictionErrors:
    dims: tuple[int, ...]
    values: np.ndarray
    reconstructed: np.ndarray


def _as_array(f) -> np.ndarray:
    if isinstance(f, Field):
        return f.array.astype(np.float64)
    return np.asarray(f, dtype=np.float64)


def lorenzo_errors(f, reconstruct: Callable[[float], float] | None = None) -> PredictionErrors:
    """Sequential prediction transform with a per-point lossy callback.

    ``reconstruct(err)`` returns the decoder-side value of a prediction
    error (identity when None).  Predictions always read the reconstructed
    neighbours, so decompression reproduces them exactly.
    """
    x = _as_array(f)
    dims = x.shape
    stencil = lorenzo_stencil(x.ndim)
    recon = np.zeros(dims)
    errs = np.zeros(dims)
    rec_errs = np.zeros(dims)
    flat_x = x.reshape(-1)
    for flat, idx in enumerate(np.ndindex(*dims)):
        pred = 0.0
        for off, w in stencil:
            nb = tuple(i - o for i, o in zip(idx, off))
            if min(nb) >= 0:
                pred += w * recon[nb]
        e = flat_x[flat] - pred
        e_rec = e if reconstruct is None else float(reconstruct(e))
        errs[idx] = e
        rec_errs[idx] = e_rec
        recon[idx] = pred + e_rec
    return PredictionErrors(tuple(dims), errs, rec_errs)


def lorenzo_reconstruct(errs, dims=None) -> np.ndarray:
    """Inverse prediction transform: rebuild the field from decoded errors."""
    if isinstance(errs, PredictionErrors):
        e = errs.reconstructed
        dims = errs.dims
    else:
        e = np.asarray(errs, dtype=np.float64).reshape(dims)
    stencil = lorenzo_stencil(e.ndim)
    out = np.zeros(e.shape)
    for idx in np.ndindex(*e.shape):
        pred = 0.0
        for off, w in stencil:
            nb = tuple(i - o for i, o in zip(idx, off))
            if min(nb) >= 0:
                pred += w * out[nb]
        out[idx] = pred + e[idx]
    return out


# Integer form used by the predictor codec.  With every point pre-rounded to
# the bin grid, the Lorenzo residual of the integers equals the quantization
# code that the sequential loop would produce, so both directions vectorize.


def lorenzo_diff(k: np.ndarray) -> np.ndarray:
    d = np.asarray(k)
    for ax in range(d.ndim):
        d = np.diff(d, axis=ax, prepend=0)
    return d


def lorenzo_integrate(d: np.ndarray) -> np.ndarray:
    k = np.asarray(d)
    for ax in range(k.ndim):
        k = np.cumsum(k, axis=ax)
    return k
