"""Keyed random streams and the correlated Brownian increment pairs (dW, dZ).

Every trajectory gets its own stream, derived from a ``StreamKey``
``(master_seed, trajectory_index, substream_tag)``.  The key triple is hashed
by ``numpy.random.SeedSequence`` into the key of a Philox4x64 counter-based
generator; normals come from numpy's ziggurat sampler.  Both choices are fixed,
so the same key always produces the same variates.

Per step, ``xi`` (d values) is drawn before ``eta`` (d values) and the pair is

    dW = sqrt(h) * xi
    dZ = h**1.5 * (xi / 2 + eta / (2 * sqrt(3)))

which has E[dW^2] = h, E[dZ^2] = h^3/3 and E[dW dZ] = h^2/2 per coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PATH_NOISE = 0
INITIAL_STATE = 1

_UINT64_MAX = 2**64 - 1
_INV_2_SQRT3 = 1.0 / (2.0 * np.sqrt(3.0))


@dataclass(frozen=True)
class StreamKey:
    master_seed: int
    trajectory_index: int
    substream_tag: int = PATH_NOISE

    def __post_init__(self):
        for name in ("master_seed", "trajectory_index", "substream_tag"):
            value = getattr(self, name)
            if not 0 <= int(value) <= _UINT64_MAX:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")


def derive_stream(key: StreamKey) -> np.random.Generator:
    """Return an independent standard-normal source for ``key``.

    A returned generator must stay confined to one worker; generators for
    distinct keys can be advanced concurrently.
    """
    seq = np.random.SeedSequence(
        [int(key.master_seed), int(key.trajectory_index), int(key.substream_tag)]
    )
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class IncrementPair:
    """Brownian increment ``dw`` and its time integral ``dz`` over a step of length ``h``.

    ``dw`` and ``dz`` may carry leading batch axes; the last axis is the
    state dimension.
    """

    dw: np.ndarray
    dz: np.ndarray
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"step length must be positive, got {self.h}")
        if np.shape(self.dw) != np.shape(self.dz):
            raise ValueError(
                f"dw and dz shapes differ: {np.shape(self.dw)} vs {np.shape(self.dz)}"
            )
        if np.ndim(self.dw) == 0 or np.shape(self.dw)[-1] < 1:
            raise ValueError("increments need a trailing dimension d >= 1")

    @property
    def dimension(self) -> int:
        return np.shape(self.dw)[-1]


def increment_from_normals(xi, eta, h: float) -> IncrementPair:
    """Map standard normals ``xi``, ``eta`` to the pair (dW, dZ) over a step ``h``."""
    if not h > 0:
        raise ValueError(f"step length must be positive, got {h}")
    xi = np.asarray(xi, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    return IncrementPair(
        dw=np.sqrt(h) * xi, dz=h**1.5 * (0.5 * xi + _INV_2_SQRT3 * eta), h=float(h)
    )


def sample_increment_pair(stream: np.random.Generator, h: float, d: int) -> IncrementPair:
    if not h > 0:
        raise ValueError(f"step length must be positive, got {h}")
    if d < 1:
        raise ValueError(f"dimension must be at least 1, got {d}")
    xi = stream.standard_normal(d)
    eta = stream.standard_normal(d)
    return increment_from_normals(xi, eta, h)


def draw_step_normals(stream: np.random.Generator, n_steps: int, d: int) -> np.ndarray:
    """Draw the normals for ``n_steps`` consecutive steps in one call.

    Returns shape ``(n_steps, 2, d)`` with ``[:, 0]`` = xi and ``[:, 1]`` = eta;
    the values equal ``n_steps`` successive ``sample_increment_pair`` draws.
    """
    return stream.standard_normal(n_steps * 2 * d).reshape(n_steps, 2, d)


def aggregate_coarse_pair(fine_pairs: Sequence[IncrementPair]) -> IncrementPair:
    """Combine consecutive fine-step pairs into the pair for the whole interval.

    dW adds up; dZ picks up, for each fine step, its own dZ plus its length
    times the Brownian displacement accumulated before it.
    """
    if len(fine_pairs) == 0:
        raise ValueError("need at least one fine increment pair")
    shape = np.shape(fine_pairs[0].dw)
    if any(np.shape(p.dw) != shape for p in fine_pairs):
        raise ValueError("fine increment pairs have mismatched dimensions")
    if len(fine_pairs) == 1:
        return fine_pairs[0]

    dw = np.zeros(shape)
    dz = np.zeros(shape)
    h = 0.0
    for pair in fine_pairs:
        dz = dz + (pair.dz + pair.h * dw)
        dw = dw + pair.dw
        h += pair.h
    return IncrementPair(dw=dw, dz=dz, h=h)


def aggregate_uniform(dw: np.ndarray, dz: np.ndarray, h_fine: float, ratio: int):
    """Vectorised aggregation of equal fine steps, ``ratio`` at a time, along axis 0.

    ``dw`` and ``dz`` have shape ``(n_fine, ...)`` with ``n_fine`` a multiple
    of ``ratio``; returns coarse ``(dw, dz)`` of shape ``(n_fine // ratio, ...)``.
    """
    if ratio == 1:
        return dw, dz
    n = dw.shape[0]
    if n % ratio:
        raise ValueError(f"{n} fine steps do not split into groups of {ratio}")
    dw = dw.reshape(n // ratio, ratio, *dw.shape[1:])
    dz = dz.reshape(n // ratio, ratio, *dz.shape[1:])
    before = np.cumsum(dw, axis=1) - dw
    return dw.sum(axis=1), (dz + h_fine * before).sum(axis=1)
