"""Deterministic synthetic fields standing in for simulation output."""

from __future__ import annotations

import numpy as np

from .field import Field

KINDS = ("smooth-sine", "ramp", "gaussian-noise", "turbulence-mix", "piecewise-constant")


def _grid(dims):
    return np.meshgrid(*[np.linspace(0.0, 1.0, d) for d in dims], indexing="ij")


def smooth_sine(dims, rng) -> np.ndarray:
    axes = _grid(dims)
    out = np.zeros(dims)
    for _ in range(3):
        freq = rng.uniform(0.5, 3.0, len(dims))
        phase = rng.uniform(0, 2 * np.pi)
        out += np.sin(sum(2 * np.pi * k * a for k, a in zip(freq, axes)) + phase)
    return out


def ramp(dims, rng) -> np.ndarray:
    axes = _grid(dims)
    slope = rng.uniform(-2.0, 2.0, len(dims))
    return rng.uniform(-1, 1) + sum(s * a for s, a in zip(slope, axes))


def gaussian_noise(dims, rng) -> np.ndarray:
    return rng.standard_normal(dims)


def spectral_noise(dims, rng, beta: float) -> np.ndarray:
    """Gaussian random field with power spectrum ~ |k|^-beta."""
    white = np.fft.rfftn(rng.standard_normal(dims))
    freqs = [np.fft.fftfreq(d) for d in dims[:-1]] + [np.fft.rfftfreq(dims[-1])]
    k2 = sum(g**2 for g in np.meshgrid(*freqs, indexing="ij"))
    k2.flat[0] = np.inf
    out = np.fft.irfftn(white * k2 ** (-beta / 4.0), s=dims, axes=tuple(range(len(dims))))
    return out / out.std()


def turbulence_mix(dims, rng) -> np.ndarray:
    """Power-law turbulence plus a large-scale mode and some white noise.

    The spectral slope and noise level are drawn per field, so a corpus
    spans very smooth fields (transform-friendly) through rough ones.
    """
    beta = rng.uniform(2.0, 6.0)
    field = spectral_noise(dims, rng, beta)
    field += rng.uniform(0.0, 2.0) * smooth_sine(dims, rng)
    field += 10.0 ** rng.uniform(-5.0, -1.0) * rng.standard_normal(dims)
    return field


def piecewise_constant(dims, rng) -> np.ndarray:
    levels = rng.normal(size=8)
    cuts = spectral_noise(dims, rng, 4.0)
    idx = np.digitize(cuts, np.quantile(cuts, np.linspace(0, 1, 9)[1:-1]))
    return levels[idx]


_MAKERS = {
    "smooth-sine": smooth_sine,
    "ramp": ramp,
    "gaussian-noise": gaussian_noise,
    "turbulence-mix": turbulence_mix,
    "piecewise-constant": piecewise_constant,
}


def generate(kind: str, dims, seed: int = 0, dtype="f32", name: str | None = None) -> Field:
    if kind not in _MAKERS:
        raise ValueError(f"unknown kind {kind!r}; choose from {', '.join(KINDS)}")
    dims = tuple(int(d) for d in dims)
    rng = np.random.default_rng(seed)
    values = _MAKERS[kind](dims, rng)
    return Field.from_array(name or f"{kind}-{seed}", values, dtype)


CORPUS_SHAPES = ((128, 128), (256, 256), (32, 32, 32), (48, 48, 48))


def corpus(count: int = 20, seed: int = 0, dtype="f32") -> list[Field]:
    """Turbulence-mix fields cycling through 2D and 3D shapes."""
    out = []
    for i in range(count):
        dims = CORPUS_SHAPES[i % len(CORPUS_SHAPES)]
        out.append(generate("turbulence-mix", dims, seed=seed * 1000 + i, dtype=dtype, name=f"tm{i:02d}"))
    return out
