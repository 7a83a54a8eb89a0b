"""Finite-difference oracles and fast invariant checks (used by ``selftest`` and ``gradcheck``)."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .potentials import HESSIAN_VECTOR, LAPLACIAN_GRADIENT, Potential, QuadraticPotential
from .rng import StreamKey, derive_stream, increment_from_normals, sample_increment_pair
from .schemes import PRESETS, TELMC, check_order_conditions, is_admissible, one_step, rklmc

GRAD_TOL = 1e-5
HVP_TOL = 1e-5
LAPLACIAN_GRAD_TOL = 1e-3


def relative_error(approx, exact, floor: float = 1.0) -> float:
    """``|approx - exact| / max(|exact|, floor)``; the floor keeps near-zero vectors meaningful."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    return float(np.linalg.norm(approx - exact) / max(np.linalg.norm(exact), floor))


def fd_gradient(f, x, eps: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        out[i] = (f(x + e) - f(x - e)) / (2 * eps)
    return out


def fd_hessian_vector(grad, x, v, eps: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return (grad(x + eps * v) - grad(x - eps * v)) / (2 * eps)


def fd_laplacian(f, x, eps: float = 1e-3) -> float:
    x = np.asarray(x, dtype=np.float64)
    f0 = f(x)
    total = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        total += (f(x + e) - 2 * f0 + f(x - e)) / eps**2
    return total


def fd_laplacian_gradient(f, x, eps: float = 1e-3, delta: float = 1e-2) -> np.ndarray:
    return fd_gradient(lambda z: fd_laplacian(f, z, eps), x, delta)


def probe_points(rng: np.random.Generator, d: int, n: int, scale: float = 1.0, radius: float = 10.0) -> np.ndarray:
    """``n`` Gaussian probes of the given scale, shrunk onto the ball of ``radius`` where needed."""
    pts = scale * rng.standard_normal((n, d))
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    return np.where(norms > radius, pts * (radius / np.maximum(norms, 1e-300)), pts)


@dataclass
class DerivativeReport:
    gradient: float
    hessian_vector: float | None
    laplacian_gradient: float | None

    @property
    def passed(self) -> bool:
        ok = self.gradient < GRAD_TOL
        if self.hessian_vector is not None:
            ok &= self.hessian_vector < HVP_TOL
        if self.laplacian_gradient is not None:
            ok &= self.laplacian_gradient < LAPLACIAN_GRAD_TOL
        return bool(ok)


def derivative_errors(model: Potential, probes: np.ndarray, rng: np.random.Generator) -> DerivativeReport:
    """Worst relative error of each analytic oracle against finite differences over ``probes``."""
    grad_err = hvp_err = lap_err = 0.0
    has_hvp = HESSIAN_VECTOR in model.capabilities
    has_lap = LAPLACIAN_GRADIENT in model.capabilities
    for x in probes:
        grad_err = max(grad_err, relative_error(model.gradient(x), fd_gradient(model.value, x)))
        if has_hvp:
            v = rng.standard_normal(x.size)
            hvp_err = max(hvp_err, relative_error(model.hessian_vector(x, v), fd_hessian_vector(model.gradient, x, v)))
        if has_lap:
            lap_err = max(lap_err, relative_error(model.laplacian_gradient(x), fd_laplacian_gradient(model.value, x)))
    return DerivativeReport(grad_err, hvp_err if has_hvp else None, lap_err if has_lap else None)


def increment_moment_zscores(h: float, M: int, seed: int = 0, d: int = 1) -> tuple[float, float, float]:
    """z-scores of the sample moments E[dw^2], E[dz^2], E[dw dz] against h, h^3/3, h^2/2."""
    stream = derive_stream(StreamKey(seed, 0, 0))
    pairs = [sample_increment_pair(stream, h, d) for _ in range(M)]
    dw = np.concatenate([p.dw for p in pairs])
    dz = np.concatenate([p.dz for p in pairs])
    return moment_zscores(dw, dz, h)


def moment_zscores(dw, dz, h: float) -> tuple[float, float, float]:
    out = []
    for sample, target in ((dw * dw, h), (dz * dz, h**3 / 3), (dw * dz, h**2 / 2)):
        se = np.std(sample, ddof=1) / np.sqrt(sample.size)
        out.append(float((np.mean(sample) - target) / se))
    return tuple(out)


def random_symmetric(rng: np.random.Generator, d: int, max_norm: float = 2.0) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * rng.uniform(-max_norm, max_norm, d)) @ q.T


def quadratic_exactness_gap(coefficients, trials: int = 200, d: int = 4, seed: int = 0) -> float:
    """Largest |RKLMC - TELMC| one-step difference over random quadratic potentials."""
    rng = np.random.default_rng(seed)
    scheme = rklmc(coefficients)
    worst = 0.0
    for _ in range(trials):
        model = QuadraticPotential(random_symmetric(rng, d))
        h = rng.uniform(1e-3, 1.0)
        y = rng.standard_normal(d)
        inc = sample_increment_pair(rng, h, d)
        gap = np.max(np.abs(one_step(scheme, model, y, inc) - one_step(TELMC, model, y, inc)))
        worst = max(worst, float(gap))
    return worst


def one_step_gaps(coefficients, hs, M: int = 10_000, d: int = 10, seed: int = 0) -> list[float]:
    """RMS one-step gap between RKLMC and TELMC on the two-mode GMM, per step size.

    Every ``h`` reuses the same underlying normals and the same fixed start,
    so the gaps differ only through ``h``.
    """
    from .potentials import make_two_mode_gmm

    model = make_two_mode_gmm(d)
    normals = derive_stream(StreamKey(seed, 0, 0)).standard_normal((2, M, d))
    y = np.tile(np.linspace(-1.0, 1.0, d), (M, 1))
    scheme = rklmc(coefficients)
    gaps = []
    for h in hs:
        inc = increment_from_normals(normals[0], normals[1], h)
        diff = one_step(scheme, model, y, inc) - one_step(TELMC, model, y, inc)
        gaps.append(float(np.sqrt(np.mean(np.sum(diff**2, axis=1)))))
    return gaps


def perturbed_presets(eps: float) -> dict:
    return {name: replace(c, b2=c.b2 + eps) for name, c in PRESETS.items()}


def run_selftest(perturb: float = 0.0, emit=print) -> bool:
    """Fast invariant suite; prints one verdict line per check and returns overall success."""
    from .potentials import blr_synthesize, make_blr, make_eight_mode_gmm, make_quadratic, make_two_mode_gmm

    results = []

    def verdict(name, ok, detail):
        results.append(ok)
        emit(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")

    presets = perturbed_presets(perturb) if perturb else PRESETS
    for name, c in presets.items():
        r = check_order_conditions(c)
        verdict(f"order-conditions[{name}]", is_admissible(c), "residuals " + " ".join(f"{v:.3g}" for v in r))

    for seed, h in enumerate((0.5, 2.0**-6)):
        z = increment_moment_zscores(h, 10_000, seed=seed)
        verdict(f"increment-moments[h={h:g}]", max(abs(v) for v in z) < 5.0, "z " + " ".join(f"{v:+.2f}" for v in z))

    rng = np.random.default_rng(5)
    models = [
        make_quadratic(3),
        make_two_mode_gmm(5),
        make_eight_mode_gmm(),
        make_blr(blr_synthesize(3, 40, 4)),
    ]
    for model in models:
        scale = 4.0 if model.name == "gmm8" else 1.0
        report = derivative_errors(model, probe_points(rng, model.dimension, 10, scale), rng)
        verdict(f"derivatives[{model.name}]", report.passed, describe(report))

    for name in ("rklmc-2g", "rklmc-3g-b"):
        gap = quadratic_exactness_gap(presets[name], trials=50)
        verdict(f"quadratic-exactness[{name}]", gap <= 1e-12, f"max gap {gap:.2e}")
    return all(results)


def describe(report: DerivativeReport) -> str:
    parts = [f"grad {report.gradient:.1e}"]
    if report.hessian_vector is not None:
        parts.append(f"hvp {report.hessian_vector:.1e}")
    if report.laplacian_gradient is not None:
        parts.append(f"lapgrad {report.laplacian_gradient:.1e}")
    return ", ".join(parts)
