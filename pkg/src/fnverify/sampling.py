"""Seeded randomness: reproducible uniform streams, exponential waiting times,
and the truncated discretized exponential distribution on {0, d, ..., K*d}.

The generator is Philox4x32-10 (see _kernels); a stream is addressed by
(master_seed, stream_id) and replays identically across runs, platforms, and
the numba/pure-python paths. One 128-bit counter block yields two 53-bit
uniforms; sample index i lives in block i//2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

GENERATOR_NAME = "philox4x32-10"

_U64_MAX = 2 ** 64 - 1
_M32 = 0xFFFFFFFF


def _split64(v: int, what: str) -> tuple[np.uint64, np.uint64]:
    if not (0 <= v <= _U64_MAX):
        raise ValueError(f"{what} must be an unsigned 64-bit integer, got {v!r}")
    return np.uint64(v & _M32), np.uint64(v >> 32)


class RngStream:
    """Single-owner sample stream: identical (master_seed, stream_id) pairs
    reproduce identical sequences; distinct stream ids are independent."""

    def __init__(self, master_seed: int, stream_id: int = 0):
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self._key0, self._key1 = _split64(self.master_seed, "master_seed")
        self._sid_lo, self._sid_hi = _split64(self.stream_id, "stream_id")
        self._index = 0

    def __repr__(self):
        return (f"RngStream(master_seed={self.master_seed}, "
                f"stream_id={self.stream_id}, drawn={self._index})")

    def uniform(self) -> float:
        """Next 53-bit-precision uniform variate in [0, 1)."""
        u = _kernels.stream_uniform(self._key0, self._key1,
                                    self._sid_lo, self._sid_hi,
                                    np.uint64(self._index))
        self._index += 1
        return float(u)

    def waiting_time(self, rate: float) -> float:
        """Exponential variate ln(1/u)/rate; u = 0 is resampled."""
        if not rate > 0.0:
            raise ValueError(f"rate must be positive, got {rate!r}")
        u = self.uniform()
        while u == 0.0:
            u = self.uniform()
        return -math.log(u) / rate


@dataclass(frozen=True)
class DiscExpParams:
    """Parameters of the truncated discretized exponential distribution:
    support {k*delta : k=0..K}, Pr(w >= k*delta) = exp(-lam*k*delta)."""

    K: int
    delta: float
    lam: float

    def __post_init__(self):
        if not (isinstance(self.K, (int, np.integer)) and self.K >= 1):
            raise ValueError(f"K must be a positive integer, got {self.K!r}")
        if not self.delta > 0.0:
            raise ValueError(f"delta must be positive, got {self.delta!r}")
        if not self.lam > 0.0:
            raise ValueError(f"lam must be positive, got {self.lam!r}")

    def pmf(self, k: int) -> float:
        if k < 0 or k > self.K:
            return 0.0
        if k == self.K:
            return math.exp(-self.lam * k * self.delta)
        return (math.exp(-self.lam * k * self.delta)
                - math.exp(-self.lam * (k + 1) * self.delta))

    def tail(self, k: int) -> float:
        """Pr(w >= k*delta) = exp(-lam*k*delta) for k in 0..K."""
        if k <= 0:
            return 1.0
        if k > self.K:
            return 0.0
        return math.exp(-self.lam * k * self.delta)


def disc_exp_index(u: float, params: DiscExpParams) -> int:
    """Inverse-CDF map: k = min(K, floor(-ln(u)/(lam*delta))); a deterministic
    monotone non-increasing function of u, with u = 0 mapping to K."""
    if u == 0.0:
        return params.K
    ratio = -math.log(u) / (params.lam * params.delta)
    if ratio < params.K:
        return int(ratio)
    return params.K


def sample_uniform(rng: RngStream) -> float:
    return rng.uniform()


def sample_waiting_time(rng: RngStream, rate: float) -> float:
    return rng.waiting_time(rate)


def sample_disc_exp(rng: RngStream, params: DiscExpParams) -> float:
    """Draw a grid point k*delta with the distribution's exact probabilities."""
    return disc_exp_index(rng.uniform(), params) * params.delta
