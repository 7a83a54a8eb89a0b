"""Trajectory driver, ensembles and common-path coupling across step sizes.

Ensembles are processed in fixed blocks of ``BLOCK_ROWS`` trajectories.  Row
``i`` always draws from ``StreamKey(master_seed, i, PATH_NOISE)`` (and its
random initial state, if any, from ``StreamKey(master_seed, i, INITIAL_STATE)``),
so a result does not depend on how blocks are spread over workers.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from multiprocessing import get_context
from typing import Callable, Sequence

import numpy as np

from .potentials import Potential
from .rng import (
    INITIAL_STATE,
    PATH_NOISE,
    IncrementPair,
    StreamKey,
    aggregate_uniform,
    derive_stream,
    draw_step_normals,
    increment_from_normals,
)
from .schemes import LMC, RkCoefficients, Scheme, one_step, stepsize_bound

BLOCK_ROWS = 256
CHUNK_STEPS = 256
DIVERGENCE_NORM = 1e12
GRID_TOL = 1e-12


class DivergenceError(RuntimeError):
    """A trajectory left the finite range (non-finite entry or norm above 1e12)."""

    def __init__(self, scheme: str, h: float, failures: Sequence[tuple[int, int]]):
        self.scheme = scheme
        self.h = h
        self.failures = sorted(failures)
        shown = ", ".join(f"trajectory {row} at step {step}" for row, step in self.failures[:5])
        more = f" (+{len(self.failures) - 5} more)" if len(self.failures) > 5 else ""
        super().__init__(f"{scheme} with h={h!r} diverged: {shown}{more}")


@dataclass(frozen=True, eq=False)
class SimulationSpec:
    """One scheme on one model over ``n_steps`` steps of length ``h``.

    ``x0`` is ``"zero"``, ``"normal"`` (standard normal per trajectory) or an
    explicit state vector.  ``regularity`` optionally carries
    ``(mu, mu_prime, L1, L1_prime)``; when given, runs warn if ``h`` exceeds
    the step-size bound of the non-asymptotic error estimate.
    """

    scheme: Scheme
    model: Potential
    h: float
    n_steps: int
    x0: object = "zero"
    record_path: bool = False
    regularity: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"step length must be positive, got {self.h}")
        if self.n_steps < 1:
            raise ValueError(f"need at least one step, got {self.n_steps}")
        if isinstance(self.x0, str):
            if self.x0 not in ("zero", "normal"):
                raise ValueError(f"unknown initial state rule {self.x0!r}")
        else:
            x0 = np.array(self.x0, dtype=np.float64)
            if x0.shape != (self.model.dimension,):
                raise ValueError(f"initial state shape {x0.shape} does not match d={self.model.dimension}")
            object.__setattr__(self, "x0", x0)
        self.model.require(*self.scheme.required_capabilities())

    @classmethod
    def until(cls, scheme: Scheme, model: Potential, T: float, h: float, **kwargs) -> "SimulationSpec":
        return cls(scheme, model, h, steps_to(T, h), **kwargs)

    @property
    def terminal_time(self) -> float:
        return self.n_steps * self.h

    def digest(self) -> str:
        x0 = self.x0 if isinstance(self.x0, str) else ",".join(repr(float(v)) for v in self.x0)
        parts = [
            self.scheme.kind,
            self.scheme.label,
            repr(self.scheme.coefficients),
            self.model.name,
            str(self.model.dimension),
            repr(self.h),
            str(self.n_steps),
            x0,
        ]
        return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


@dataclass
class SampleBatch:
    states: np.ndarray
    master_seed: int
    spec_digest: str
    paths: np.ndarray | None = None

    @property
    def M(self) -> int:
        return self.states.shape[0]


@dataclass
class CoupledResult:
    """Terminal states of the fine reference and of every (scheme, coarse h) cell."""

    reference: np.ndarray
    terminals: dict[tuple[str, float], np.ndarray]
    schemes: list[str]
    coarse_hs: list[float]
    fine_h: float
    T: float
    master_seed: int
    reference_scheme: str = "lmc"
    provenance: dict = field(default_factory=dict)


def steps_to(T: float, h: float) -> int:
    """Number of steps of length ``h`` that reach ``T``; rejects non-dividing ``h``."""
    if not (T > 0 and h > 0):
        raise ValueError("terminal time and step length must be positive")
    n = int(round(T / h))
    if n < 1 or abs(n * h - T) > GRID_TOL * max(1.0, abs(T)):
        raise ValueError(f"step {h!r} does not divide terminal time {T!r}")
    return n


def warn_if_above_bound(scheme: Scheme, h: float, regularity) -> None:
    if regularity is None or scheme.kind == "telmc":
        return
    coeffs = scheme.coefficients or RkCoefficients(0, 0, 0, 0, 0, 0, 0)
    bound = stepsize_bound(coeffs, *regularity)
    if h > bound:
        warnings.warn(
            f"{scheme.label}: h={h!r} exceeds the provable step-size bound {bound!r}",
            RuntimeWarning,
            stacklevel=3,
        )


def _diverged_rows(y: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        norm2 = np.sum(y * y, axis=-1)
    return np.flatnonzero(~(norm2 <= DIVERGENCE_NORM**2))


class _Divergence:
    """First divergence step of each row of one block; diverged rows are parked at zero."""

    def __init__(self, label: str, h: float, row_ids):
        self.label, self.h, self.row_ids = label, h, row_ids
        self.failures: list[tuple[int, int]] = []
        self.dead = np.zeros(len(row_ids), dtype=bool)

    def check(self, y: np.ndarray, step: int) -> None:
        bad = _diverged_rows(y)
        if bad.size:
            fresh = bad[~self.dead[bad]]
            self.failures.extend((int(self.row_ids[b]), step) for b in fresh)
            self.dead[bad] = True
            y[bad] = 0.0

    def error(self) -> DivergenceError | None:
        return DivergenceError(self.label, self.h, self.failures) if self.failures else None


def _normals_chunk(streams, k: int, d: int):
    """Normals for ``k`` steps of every stream: xi, eta each of shape (k, rows, d)."""
    block = np.stack([draw_step_normals(s, k, d) for s in streams], axis=1)
    return block[:, :, 0], block[:, :, 1]


def _initial_states(spec: SimulationSpec, init_streams) -> np.ndarray:
    d = spec.model.dimension
    rows = len(init_streams)
    if isinstance(spec.x0, str):
        if spec.x0 == "zero":
            return np.zeros((rows, d))
        return np.stack([s.standard_normal(d) for s in init_streams])
    return np.broadcast_to(spec.x0, (rows, d)).copy()


def _simulate(spec: SimulationSpec, streams, y: np.ndarray, row_ids):
    d = spec.model.dimension
    path = [y.copy()] if spec.record_path else None
    watch = _Divergence(spec.scheme.label, spec.h, row_ids)
    step = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while step < spec.n_steps:
            k = min(CHUNK_STEPS, spec.n_steps - step)
            xi, eta = _normals_chunk(streams, k, d)
            inc = increment_from_normals(xi, eta, spec.h)
            for j in range(k):
                y = one_step(spec.scheme, spec.model, y, IncrementPair(inc.dw[j], inc.dz[j], spec.h))
                step += 1
                watch.check(y, step)
                if path is not None:
                    path.append(y.copy())
    if watch.failures:
        raise watch.error()
    return y, (np.stack(path) if path is not None else None)


def run_trajectory(spec: SimulationSpec, stream: np.random.Generator, init_stream=None):
    """Run one trajectory; returns ``(terminal_state, path_or_None)``.

    With a random initial state the start is drawn from ``init_stream`` (or,
    if omitted, from ``stream`` before any path noise).
    """
    warn_if_above_bound(spec.scheme, spec.h, spec.regularity)
    y0 = _initial_states(spec, [init_stream if init_stream is not None else stream])
    y, path = _simulate(spec, [stream], y0, [0])
    return y[0], (path[:, 0] if path is not None else None)


def _ensemble_block(args):
    spec, rows, master_seed = args
    streams = [derive_stream(StreamKey(master_seed, i, PATH_NOISE)) for i in rows]
    inits = [derive_stream(StreamKey(master_seed, i, INITIAL_STATE)) for i in rows]
    try:
        return _simulate(spec, streams, _initial_states(spec, inits), list(rows))
    except DivergenceError as exc:
        return exc


def _blocks(M: int):
    return [range(start, min(start + BLOCK_ROWS, M)) for start in range(0, M, BLOCK_ROWS)]


def _map(fn: Callable, tasks: list, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks)), mp_context=get_context("fork")) as ex:
        return list(ex.map(fn, tasks))


def _raise_collected(results) -> None:
    errors = [r for r in results if isinstance(r, DivergenceError)]
    if errors:
        first = errors[0]
        failures = [f for e in errors if (e.scheme, e.h) == (first.scheme, first.h) for f in e.failures]
        raise DivergenceError(first.scheme, first.h, failures)


def run_ensemble(spec: SimulationSpec, M: int, master_seed: int, workers: int = 1) -> SampleBatch:
    if M < 1:
        raise ValueError(f"ensemble size must be positive, got {M}")
    warn_if_above_bound(spec.scheme, spec.h, spec.regularity)
    results = _map(_ensemble_block, [(spec, rows, master_seed) for rows in _blocks(M)], workers)
    _raise_collected(results)
    states = np.concatenate([r[0] for r in results])
    paths = np.concatenate([r[1] for r in results], axis=1) if spec.record_path else None
    return SampleBatch(states, master_seed, spec.digest(), paths)


def _coupled_block(args):
    schemes, model, fine_h, coarse_hs, ratios, n_fine, x0, reference, master_seed, rows = args
    d = model.dimension
    streams = [derive_stream(StreamKey(master_seed, i, PATH_NOISE)) for i in rows]
    spec0 = SimulationSpec(reference, model, fine_h, n_fine, x0=x0)
    inits = [derive_stream(StreamKey(master_seed, i, INITIAL_STATE)) for i in rows]
    y_ref = _initial_states(spec0, inits)
    ys = {(s.label, h): y_ref.copy() for s in schemes for h in coarse_hs}
    y_ref = y_ref.copy()

    watches = {key: _Divergence(key[0], key[1], rows) for key in ys}
    ref_watch = _Divergence(f"reference {reference.label}", fine_h, rows)
    lcm = math.lcm(*ratios)
    chunk = lcm * max(1, CHUNK_STEPS // lcm)
    done = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while done < n_fine:
            k = min(chunk, n_fine - done)
            xi, eta = _normals_chunk(streams, k, d)
            inc = increment_from_normals(xi, eta, fine_h)
            for j in range(k):
                y_ref = one_step(reference, model, y_ref, IncrementPair(inc.dw[j], inc.dz[j], fine_h))
                ref_watch.check(y_ref, done + j + 1)
            for h, r in zip(coarse_hs, ratios):
                cdw, cdz = aggregate_uniform(inc.dw, inc.dz, fine_h, r)
                first = done // r
                for s in schemes:
                    y = ys[(s.label, h)]
                    for j in range(k // r):
                        y = one_step(s, model, y, IncrementPair(cdw[j], cdz[j], h))
                        watches[(s.label, h)].check(y, first + j + 1)
                    ys[(s.label, h)] = y
            done += k
    for watch in [ref_watch, *watches.values()]:
        if watch.failures:
            return watch.error()
    return y_ref, ys


def run_coupled(
    schemes: Sequence[Scheme],
    model: Potential,
    fine_h: float,
    coarse_hs: Sequence[float],
    T: float,
    M: int,
    master_seed: int,
    x0="zero",
    reference: Scheme = LMC,
    workers: int = 1,
) -> CoupledResult:
    """Drive every scheme at every coarse step from one shared fine Brownian path.

    The fine increments of each trajectory are generated once; the reference
    solution runs ``reference`` on the fine grid and each coarse step consumes
    the exact aggregate of the fine pairs it spans.
    """
    if M < 1:
        raise ValueError(f"ensemble size must be positive, got {M}")
    n_fine = steps_to(T, fine_h)
    ratios = []
    for h in coarse_hs:
        r = int(round(h / fine_h))
        if r < 1 or abs(r * fine_h - h) > GRID_TOL * max(1.0, h):
            raise ValueError(f"coarse step {h!r} is not a multiple of the fine step {fine_h!r}")
        if n_fine % r:
            raise ValueError(f"coarse step {h!r} does not divide terminal time {T!r}")
        ratios.append(r)
    for s in list(schemes) + [reference]:
        model.require(*s.required_capabilities())
    labels = [s.label for s in schemes]
    if len(set(labels)) != len(labels):
        raise ValueError("scheme labels must be distinct")

    tasks = [
        (list(schemes), model, fine_h, list(coarse_hs), ratios, n_fine, x0, reference, master_seed, rows)
        for rows in _blocks(M)
    ]
    results = _map(_coupled_block, tasks, workers)
    _raise_collected(results)
    reference_states = np.concatenate([r[0] for r in results])
    terminals = {key: np.concatenate([r[1][key] for r in results]) for key in results[0][1]}
    return CoupledResult(
        reference=reference_states,
        terminals=terminals,
        schemes=labels,
        coarse_hs=list(coarse_hs),
        fine_h=fine_h,
        T=T,
        master_seed=master_seed,
        reference_scheme=reference.label,
        provenance={"M": M, "model": model.name, "d": model.dimension},
    )
