"""Field data model, 4^n block access and the fold/unfold index maps.

A :class:`Field` is an immutable n-dimensional (1 <= n <= 3) float32/float64
array stored as a flat row-major buffer.  Everything block-based in the
toolkit (the transform codec, block sampling for estimation) goes through
:func:`blockify`, which pads partial blocks by edge replication and keeps a
mask of which slots hold real data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .errors import AxisOutOfRange, NonFiniteValue, ParameterOutOfRange, SizeMismatch

BLOCK_EDGE = 4
MAX_DIMS = 3

# Per-block point-sampling counts used by the embedded-coding estimator.
DEFAULT_EC_POINTS = {1: 3, 2: 9, 3: 16}
DEFAULT_RSP = 0.05

_DTYPES = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
}


def parse_dtype(dtype) -> np.dtype:
    """Accept 'f32'/'f64', numpy dtypes or anything numpy understands."""
    if isinstance(dtype, str) and dtype.lower() in _DTYPES:
        return _DTYPES[dtype.lower()]
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported element type {dt}; expected float32 or float64")
    return dt.newbyteorder("<")


def dtype_tag(dtype: np.dtype) -> str:
    return "f32" if np.dtype(dtype).itemsize == 4 else "f64"


@dataclass(frozen=True)
class Field:
    name: str
    dtype: np.dtype
    dims: tuple[int, ...]
    data: np.ndarray
    vmin: float
    vmax: float

    @property
    def vr(self) -> float:
        return self.vmax - self.vmin

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def bits_per_value(self) -> int:
        return 8 * self.dtype.itemsize

    @property
    def array(self) -> np.ndarray:
        """Read-only n-d view of the data."""
        return self.data.reshape(self.dims)

    @classmethod
    def from_array(cls, name: str, values, dtype=None) -> "Field":
        arr = np.asarray(values)
        dt = parse_dtype(dtype if dtype is not None else arr.dtype)
        dims = tuple(int(d) for d in arr.shape)
        if not 1 <= len(dims) <= MAX_DIMS:
            raise ValueError(f"fields must have 1..{MAX_DIMS} dimensions, got {len(dims)}")
        if any(d < 1 for d in dims):
            raise SizeMismatch(f"non-positive extent in dims {dims}")
        flat = np.ascontiguousarray(arr, dtype=dt).reshape(-1).copy()
        if not np.all(np.isfinite(flat)):
            raise NonFiniteValue(f"field {name!r} contains NaN or Inf")
        flat.setflags(write=False)
        return cls(name, dt, dims, flat, float(flat.min()), float(flat.max()))


def ingest_raw(raw: bytes, dims: Sequence[int], dtype="f32", name: str = "field") -> Field:
    """Build a Field from a headerless little-endian IEEE-754 buffer."""
    dt = parse_dtype(dtype)
    dims = tuple(int(d) for d in dims)
    if not 1 <= len(dims) <= MAX_DIMS or any(d < 1 for d in dims):
        raise SizeMismatch(f"invalid dims {dims}")
    expected = math.prod(dims) * dt.itemsize
    if len(raw) != expected:
        raise SizeMismatch(f"{name}: got {len(raw)} bytes, dims {dims} x {dt.itemsize} needs {expected}")
    values = np.frombuffer(raw, dtype=dt).reshape(dims)
    return Field.from_array(name, values, dt)


@dataclass(frozen=True)
class Block:
    origin: tuple[int, ...]
    values: np.ndarray
    padded: np.ndarray

    @property
    def ndim(self) -> int:
        return self.values.ndim


@dataclass(frozen=True)
class SamplingConfig:
    r_sp: float = DEFAULT_RSP
    ec_points: dict = dc_field(default_factory=lambda: dict(DEFAULT_EC_POINTS))

    def __post_init__(self):
        if not 0.0 < self.r_sp <= 1.0:
            raise ParameterOutOfRange(f"r_sp must lie in (0, 1], got {self.r_sp}")
        for n, count in self.ec_points.items():
            if not 1 <= count <= BLOCK_EDGE**n:
                raise ParameterOutOfRange(f"{count} sample points do not fit a {n}D block")

    def points_per_block(self, ndim: int) -> int:
        return self.ec_points[ndim]


# ---------------------------------------------------------------------------
# block grid


def block_grid(dims: Sequence[int]) -> tuple[int, ...]:
    return tuple(-(-d // BLOCK_EDGE) for d in dims)


def blockify(array: np.ndarray) -> tuple[np.ndarray, np.ndarray, tuple[int, ...]]:
    """Split an n-d array into edge-padded 4^n blocks.

    Returns ``(blocks, real_mask, grid)`` where ``blocks`` has shape
    ``(nblocks,) + (4,)*n`` in row-major block order.
    """
    arr = np.asarray(array, dtype=np.float64)
    n = arr.ndim
    grid = block_grid(arr.shape)
    pad = [(0, g * BLOCK_EDGE - d) for g, d in zip(grid, arr.shape)]
    padded = np.pad(arr, pad, mode="edge") if any(p[1] for p in pad) else arr
    mask = np.zeros(padded.shape, dtype=bool)
    mask[tuple(slice(0, d) for d in arr.shape)] = True
    return _split(padded, grid, n), _split(mask, grid, n), grid


def _split(arr: np.ndarray, grid, n: int) -> np.ndarray:
    shape = []
    for g in grid:
        shape += [g, BLOCK_EDGE]
    order = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    return arr.reshape(shape).transpose(order).reshape((-1,) + (BLOCK_EDGE,) * n)


def unblockify(blocks: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`blockify`; drops padded slots."""
    n = len(dims)
    grid = block_grid(dims)
    arr = np.asarray(blocks).reshape(tuple(grid) + (BLOCK_EDGE,) * n)
    order = []
    for k in range(n):
        order += [k, n + k]
    full = arr.transpose(order).reshape(tuple(g * BLOCK_EDGE for g in grid))
    return full[tuple(slice(0, d) for d in dims)]


def block_origin(index: int, grid: Sequence[int]) -> tuple[int, ...]:
    pos = np.unravel_index(index, tuple(grid))
    return tuple(int(p) * BLOCK_EDGE for p in pos)


def sampled_block_indices(nblocks: int, r_sp: float) -> np.ndarray:
    """Evenly strided block indices, ``ceil(nblocks * r_sp)`` of them."""
    if not 0.0 < r_sp <= 1.0:
        raise ParameterOutOfRange(f"r_sp must lie in (0, 1], got {r_sp}")
    count = min(nblocks, max(1, math.ceil(nblocks * r_sp - 1e-9)))
    return (np.arange(count, dtype=np.int64) * nblocks) // count


def sample_blocks(f: Field, cfg: SamplingConfig) -> list[Block]:
    blocks, mask, grid = blockify(f.array)
    out = []
    for idx in sampled_block_indices(len(blocks), cfg.r_sp):
        values = blocks[idx].copy()
        padded = ~mask[idx]
        values.setflags(write=False)
        padded.setflags(write=False)
        out.append(Block(block_origin(int(idx), grid), values, padded))
    return out


# ---------------------------------------------------------------------------
# fold / unfold
#
# Unfolding along axis k (1-based) sends block element (a_1, ..., a_n)
# (0-based a_l indexes array axis l-1) to matrix entry (a_k, j) with
#   j = sum_{l<k} 4^(l-1) a_l + sum_{l>k} 4^(l-2) a_l,
# i.e. the remaining indices with a_1 varying fastest.


def _check_axis(ndim: int, k: int) -> None:
    if not 1 <= k <= ndim:
        raise AxisOutOfRange(f"axis {k} outside 1..{ndim}")


def unfold(block, k: int) -> np.ndarray:
    values = block.values if isinstance(block, Block) else np.asarray(block)
    _check_axis(values.ndim, k)
    moved = np.moveaxis(values, k - 1, 0)
    return moved.reshape(BLOCK_EDGE, -1, order="F")


def fold(matrix: np.ndarray, k: int) -> np.ndarray:
    m = np.asarray(matrix)
    cols = m.shape[1]
    n = 1 + round(math.log(cols, BLOCK_EDGE)) if cols > 1 else 1
    if m.shape[0] != BLOCK_EDGE or BLOCK_EDGE ** (n - 1) != cols:
        raise SizeMismatch(f"matrix shape {m.shape} is not 4 x 4^(n-1)")
    _check_axis(n, k)
    moved = m.reshape((BLOCK_EDGE,) * n, order="F")
    return np.moveaxis(moved, 0, k - 1)
