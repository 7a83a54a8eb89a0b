"""Target potentials U with analytic derivative oracles.

All oracles accept states with arbitrary leading batch axes, ``x.shape == (..., d)``.
Capabilities:

* ``gradient``            grad U(x)
* ``hessian_vector``      Hess U(x) @ v
* ``laplacian_gradient``  grad(Laplacian U)(x)

TELMC needs all three; the Runge-Kutta schemes and LMC only need the gradient.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, logsumexp, softmax

GRADIENT = "gradient"
HESSIAN_VECTOR = "hessian_vector"
LAPLACIAN_GRADIENT = "laplacian_gradient"
ALL_CAPABILITIES = frozenset({GRADIENT, HESSIAN_VECTOR, LAPLACIAN_GRADIENT})


class CapabilityError(RuntimeError):
    """A scheme asked a potential for a derivative it does not provide."""


class Potential:
    """Base class; subclasses set ``dimension``/``capabilities`` and override oracles."""

    name = "potential"
    dimension: int
    capabilities: frozenset = frozenset({GRADIENT})

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian_vector(self, x, v):
        raise CapabilityError(f"{self.name} does not provide Hessian-vector products")

    def laplacian_gradient(self, x):
        raise CapabilityError(f"{self.name} does not provide the gradient of its Laplacian")

    def require(self, *capabilities: str) -> None:
        missing = set(capabilities) - set(self.capabilities)
        if missing:
            raise CapabilityError(f"{self.name} lacks {', '.join(sorted(missing))}")


@dataclass(frozen=True, eq=False)
class QuadraticPotential(Potential):
    """U(x) = x^T A x / 2 for a symmetric matrix A."""

    matrix: np.ndarray
    name: str = "quadratic"
    capabilities: frozenset = ALL_CAPABILITIES

    def __post_init__(self):
        a = np.array(self.matrix, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("quadratic potential needs a square matrix")
        if not np.allclose(a, a.T):
            raise ValueError("quadratic potential needs a symmetric matrix")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        return 0.5 * np.einsum("...i,...i->...", x, x @ self.matrix)

    def gradient(self, x):
        return np.asarray(x, dtype=np.float64) @ self.matrix

    def hessian_vector(self, x, v):
        return np.asarray(v, dtype=np.float64) @ self.matrix

    def laplacian_gradient(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))


def make_quadratic(d: int) -> QuadraticPotential:
    """Standard Gaussian target, U(x) = |x|^2 / 2."""
    if d < 1:
        raise ValueError(f"dimension must be at least 1, got {d}")
    return QuadraticPotential(np.eye(d))


def _log_cosh(s):
    a = np.abs(s)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


@dataclass(frozen=True, eq=False)
class TwoModeGMM(Potential):
    """Equal-weight mixture of N(mu, I) and N(-mu, I).

    U(x) = (|x|^2 + |mu|^2)/2 - log cosh(<x, mu>), which is exactly
    -log(e^{-|x-mu|^2/2}/2 + e^{-|x+mu|^2/2}/2).
    """

    mean: np.ndarray
    name: str = "gmm2"
    capabilities: frozenset = ALL_CAPABILITIES

    def __post_init__(self):
        mu = np.array(self.mean, dtype=np.float64)
        mu.setflags(write=False)
        object.__setattr__(self, "mean", mu)

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]

    def _proj(self, x):
        return np.asarray(x, dtype=np.float64) @ self.mean

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        s = x @ self.mean
        return 0.5 * (np.sum(x * x, axis=-1) + self.mean @ self.mean) - _log_cosh(s)

    def gradient(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x - np.tanh(x @ self.mean)[..., None] * self.mean

    def hessian_vector(self, x, v):
        v = np.asarray(v, dtype=np.float64)
        sech2 = 1.0 - np.tanh(self._proj(x)) ** 2
        return v - (sech2 * (v @ self.mean))[..., None] * self.mean

    def laplacian_gradient(self, x):
        s = self._proj(x)
        t = np.tanh(s)
        coeff = 2.0 * (self.mean @ self.mean) * (1.0 - t * t) * t
        return coeff[..., None] * self.mean

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Exact draws from the target mixture."""
        signs = np.where(rng.random(size) < 0.5, 1.0, -1.0)
        return signs[:, None] * self.mean + rng.standard_normal((size, self.dimension))


def make_two_mode_gmm(d: int) -> TwoModeGMM:
    """Modes at +-(2/sqrt(d))(1, ..., 1), so |mu| = 2 in every dimension."""
    if d < 1:
        raise ValueError(f"dimension must be at least 1, got {d}")
    return TwoModeGMM(np.full(d, 2.0 / np.sqrt(d)))


@dataclass(frozen=True, eq=False)
class MixturePotential(Potential):
    """Equal-weight isotropic Gaussian mixture; gradient only."""

    centers: np.ndarray
    variance: float
    name: str = "mixture"
    capabilities: frozenset = frozenset({GRADIENT})

    def __post_init__(self):
        c = np.array(self.centers, dtype=np.float64)
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)

    @property
    def dimension(self) -> int:
        return self.centers.shape[1]

    def _logits(self, x):
        diff = np.asarray(x, dtype=np.float64)[..., None, :] - self.centers
        return -np.sum(diff * diff, axis=-1) / (2.0 * self.variance)

    def value(self, x):
        k = self.centers.shape[0]
        return -(logsumexp(self._logits(x), axis=-1) - np.log(k))

    def gradient(self, x):
        x = np.asarray(x, dtype=np.float64)
        w = softmax(self._logits(x), axis=-1)
        return (x - w @ self.centers) / self.variance

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Exact draws from the target mixture."""
        which = rng.integers(0, self.centers.shape[0], size)
        noise = rng.standard_normal((size, self.dimension))
        return self.centers[which] + np.sqrt(self.variance) * noise


EIGHT_MODE_RADIUS = 10.0
EIGHT_MODE_VARIANCE = 0.7


def eight_mode_centers() -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(8) / 8
    return EIGHT_MODE_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def make_eight_mode_gmm() -> MixturePotential:
    """Eight modes on the circle of radius 10 in the plane, covariance 0.7 I."""
    return MixturePotential(eight_mode_centers(), EIGHT_MODE_VARIANCE, name="gmm8")


@dataclass(frozen=True, eq=False)
class BlrDataset:
    X: np.ndarray
    Y: np.ndarray
    alpha_prior: float = 0.5
    theta_true: np.ndarray | None = None
    cov: np.ndarray = field(init=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        Y = np.array(self.Y, dtype=np.float64)
        if X.ndim != 2 or Y.shape != (X.shape[0],):
            raise ValueError("need X of shape (n, d) and Y of shape (n,)")
        if not np.all((Y == 0) | (Y == 1)):
            raise ValueError("responses must be 0 or 1")
        if not self.alpha_prior > 0:
            raise ValueError("prior strength must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "cov", X.T @ X / X.shape[0])

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x_{j + 1}" for j in range(self.d)] + ["y"])
            for xi, yi in zip(self.X, self.Y):
                writer.writerow([repr(float(v)) for v in xi] + [int(yi)])

    @classmethod
    def from_csv(cls, path, alpha_prior: float = 0.5) -> "BlrDataset":
        with open(Path(path), newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        d = len(header) - 1
        if header != [f"x_{j + 1}" for j in range(d)] + ["y"]:
            raise ValueError(f"unexpected BLR header: {header}")
        data = np.array([[float(v) for v in row] for row in body])
        return cls(data[:, :d], data[:, d], alpha_prior=alpha_prior)


def blr_synthesize(seed: int, n: int = 100, d: int = 10, alpha_prior: float = 0.5) -> BlrDataset:
    """Synthetic logistic-regression data with theta_true = (1, ..., 1)/sqrt(d)."""
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    rng = np.random.default_rng(seed)
    theta = np.full(d, 1.0 / np.sqrt(d))
    X = rng.standard_normal((n, d))
    return BlrDataset(X, logistic_responses(rng, X, theta), alpha_prior=alpha_prior, theta_true=theta)


def logistic_responses(rng: np.random.Generator, X, theta) -> np.ndarray:
    """Y_i ~ Bernoulli(1 / (1 + exp(-x_i^T theta)))."""
    return (rng.random(len(X)) < expit(np.asarray(X) @ theta)).astype(np.float64)


@dataclass(frozen=True, eq=False)
class LogisticPosterior(Potential):
    """U(theta) = -Y^T X theta + sum_i log(1 + e^{-theta^T x_i}) + (alpha/2) theta^T Sigma_X theta."""

    data: BlrDataset
    name: str = "blr"
    capabilities: frozenset = ALL_CAPABILITIES

    def __post_init__(self):
        object.__setattr__(self, "_xty", self.data.X.T @ self.data.Y)
        object.__setattr__(self, "_row_norm2", np.sum(self.data.X**2, axis=1))

    @property
    def dimension(self) -> int:
        return self.data.d

    def _margins(self, theta):
        return np.asarray(theta, dtype=np.float64) @ self.data.X.T

    def value(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        t = self._margins(theta)
        prior = 0.5 * self.data.alpha_prior * np.einsum("...i,...i->...", theta, theta @ self.data.cov)
        return -(theta @ self._xty) + np.sum(np.logaddexp(0.0, -t), axis=-1) + prior

    def gradient(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        t = self._margins(theta)
        return -self._xty - expit(-t) @ self.data.X + self.data.alpha_prior * (theta @ self.data.cov)

    def hessian_vector(self, theta, v):
        v = np.asarray(v, dtype=np.float64)
        s = expit(self._margins(theta))
        weights = s * (1.0 - s) * (v @ self.data.X.T)
        return weights @ self.data.X + self.data.alpha_prior * (v @ self.data.cov)

    def laplacian_gradient(self, theta):
        s = expit(self._margins(theta))
        second = s * (1.0 - s) * (1.0 - 2.0 * s)
        return (second * self._row_norm2) @ self.data.X


def make_blr(dataset: BlrDataset) -> LogisticPosterior:
    return LogisticPosterior(dataset)


class GradientCounter(Potential):
    """Wraps a potential and counts gradient calls (one per state, batch or not)."""

    def __init__(self, inner: Potential):
        self.inner = inner
        self.name = f"counted-{inner.name}"
        self.dimension = inner.dimension
        self.capabilities = inner.capabilities
        self.calls = 0

    def value(self, x):
        return self.inner.value(x)

    def gradient(self, x):
        self.calls += 1
        return self.inner.gradient(x)

    def hessian_vector(self, x, v):
        return self.inner.hessian_vector(x, v)

    def laplacian_gradient(self, x):
        return self.inner.laplacian_gradient(x)
