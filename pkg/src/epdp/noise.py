"""Seedable random primitives.

Every draw goes through :class:`RandomSource`, a thin wrapper over numpy's
PCG64 bit generator. Uniform doubles come from ``Generator.random``, whose
stream numpy keeps stable for a given seed, and the Laplace sampler is an
explicit inverse CDF on top of them, so results do not depend on numpy's
distribution code.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

STOCHASTIC = "stochastic"
ZERO_NOISE = "zero-noise"

_U64 = (1 << 64) - 1


def derive_seed(master_seed: int, *keys) -> int:
    """Mix ``master_seed`` with arbitrary labels into a 64-bit seed.

    Uses BLAKE2b over the ``repr`` of the inputs, so the mapping is stable
    across processes and Python versions (unlike ``hash``).
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(repr((int(master_seed) & _U64,) + tuple(keys)).encode())
    return int.from_bytes(h.digest(), "little")


class RandomSource:
    """Single-owner source of uniforms, Laplace, Gaussian and Bernoulli draws.

    In zero-noise mode Laplace and Gaussian draws are exactly 0 and
    ``bernoulli(p)`` is true iff ``p >= 1``.
    """

    def __init__(self, seed: int = 0, zero_noise: bool = False):
        self.seed = int(seed) & _U64
        self.mode = ZERO_NOISE if zero_noise else STOCHASTIC
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @property
    def zero_noise(self) -> bool:
        return self.mode == ZERO_NOISE

    def spawn(self, *keys) -> "RandomSource":
        """Independent child source keyed on ``keys``."""
        return RandomSource(derive_seed(self.seed, *keys), zero_noise=self.zero_noise)

    def uniform(self, size=None):
        """Uniform draws on ``[0, 1)``; these are drawn even in zero-noise mode."""
        return self._gen.random(size)

    def laplace(self, scale: float, size=None):
        scale = _check_scale(scale)
        if self.zero_noise:
            return 0.0 if size is None else np.zeros(size)
        u = self._gen.random(size) - 0.5
        # u == -0.5 maps to log(0); redraw those (probability 2**-53 each).
        if size is None:
            while u == -0.5:
                u = self._gen.random() - 0.5
            # same numpy arithmetic as the vector path, so draws agree bit for bit
            return float(np.sign(u) * scale * np.log1p(-2.0 * np.abs(u)))
        bad = u == -0.5
        while bad.any():
            u[bad] = self._gen.random(int(bad.sum())) - 0.5
            bad = u == -0.5
        return np.sign(u) * scale * np.log1p(-2.0 * np.abs(u))

    def gaussian(self, stddev: float, size=None):
        stddev = float(stddev)
        if not stddev >= 0 or not math.isfinite(stddev):
            raise ValueError(f"invalid stddev {stddev!r}")
        if self.zero_noise or stddev == 0:
            return 0.0 if size is None else np.zeros(size)
        return stddev * self._gen.standard_normal(size)

    def bernoulli(self, p, size=None):
        p_arr = np.asarray(p, dtype=np.float64)
        if np.any(~((p_arr >= 0) & (p_arr <= 1))):
            raise ValueError(f"probability outside [0, 1]: {p!r}")
        if self.zero_noise:
            out = np.broadcast_to(p_arr >= 1, np.shape(p_arr) if size is None else size)
            return bool(out) if out.ndim == 0 else out.copy()
        shape = np.shape(p_arr) if size is None else size
        out = (self._gen.random(shape) < p_arr) | (p_arr >= 1)
        return bool(out) if np.ndim(out) == 0 else out

    def integers(self, high: int, size=None):
        return self._gen.integers(0, high, size=size)

    def shuffle(self, items) -> None:
        self._gen.shuffle(items)


def _check_scale(scale) -> float:
    scale = float(scale)
    if not (scale > 0 and math.isfinite(scale)):
        raise ValueError(f"invalid scale {scale!r}")
    return scale


def laplace_sample(scale: float, rng: RandomSource) -> float:
    """One draw from Laplace(0, scale); 0.0 in zero-noise mode."""
    return rng.laplace(scale)


def bernoulli(p: float, rng: RandomSource) -> bool:
    return rng.bernoulli(p)


def gaussian_sample(stddev: float, rng: RandomSource) -> float:
    return rng.gaussian(stddev)
