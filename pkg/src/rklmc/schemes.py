"""One-step maps for LMC, TELMC and the three-stage Runge-Kutta family (RKLMC).

RKLMC with coefficients (alpha, beta, a11, a21, a22, b1, b2):

    Phi1 = y - a11 h g(y) + sqrt(2) b1 dz/h
    Phi2 = y - a21 h g(y) - a22 h g(Phi1) + sqrt(2) b2 dz/h
    y'   = y - h [(1-alpha-beta) g(y) + alpha g(Phi1) + beta g(Phi2)] + sqrt(2) dw

with g = grad U.  Strong order 1.5 needs

    alpha a11 + beta (a21 + a22) = 1/2
    alpha b1  + beta b2          = 1
    alpha b1^2 + beta b2^2       = 3/2
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from fractions import Fraction

import numpy as np

from .potentials import GRADIENT, HESSIAN_VECTOR, LAPLACIAN_GRADIENT, Potential
from .rng import IncrementPair

ORDER_TOL = 1e-12
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class RkCoefficients:
    alpha: float
    beta: float
    a11: float
    a21: float
    a22: float
    b1: float
    b2: float

    def __post_init__(self):
        for f in fields(self):
            value = float(getattr(self, f.name))
            if not math.isfinite(value):
                raise ValueError(f"coefficient {f.name} must be finite, got {value}")
            object.__setattr__(self, f.name, value)

    @property
    def weights(self) -> tuple[float, float, float]:
        return (1.0 - self.alpha - self.beta, self.alpha, self.beta)

    @property
    def first_stage_trivial(self) -> bool:
        """Phi1 coincides with y, so grad U(Phi1) can reuse grad U(y)."""
        return self.a11 == 0.0 and self.b1 == 0.0

    def to_text(self) -> str:
        return "\n".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self)) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RkCoefficients":
        """Parse ``key=value`` pairs separated by newlines or whitespace.

        Values may be decimals or fractions such as ``2/3``.
        """
        values = {}
        for token in text.replace(",", " ").split():
            if "=" not in token:
                raise ValueError(f"expected key=value, got {token!r}")
            key, raw = token.split("=", 1)
            key = key.strip()
            if key not in {f.name for f in fields(cls)}:
                raise ValueError(f"unknown coefficient {key!r}")
            if key in values:
                raise ValueError(f"coefficient {key!r} given twice")
            try:
                values[key] = float(Fraction(raw.strip()))
            except (ValueError, ZeroDivisionError) as exc:
                raise ValueError(f"cannot parse {key}={raw!r}") from exc
        missing = {f.name for f in fields(cls)} - set(values)
        if missing:
            raise ValueError(f"missing coefficients: {', '.join(sorted(missing))}")
        return cls(**values)


RKLMC_2G = RkCoefficients(alpha=0.0, beta=2 / 3, a11=0.0, a21=3 / 4, a22=0.0, b1=0.0, b2=3 / 2)
RKLMC_3G_A = RkCoefficients(alpha=1 / 4, beta=1 / 2, a11=0.0, a21=1 / 2, a22=1 / 2, b1=2.0, b2=1.0)
RKLMC_3G_B = RkCoefficients(alpha=2 / 3, beta=1 / 3, a11=1 / 2, a21=1 / 2, a22=0.0, b1=1 / 2, b2=2.0)

PRESETS = {
    "rklmc-2g": RKLMC_2G,
    "rklmc-3g-a": RKLMC_3G_A,
    "rklmc-3g-b": RKLMC_3G_B,
}


def check_order_conditions(c: RkCoefficients) -> tuple[float, float, float]:
    r1 = c.alpha * c.a11 + c.beta * (c.a21 + c.a22) - 0.5
    r2 = c.alpha * c.b1 + c.beta * c.b2 - 1.0
    r3 = c.alpha * c.b1**2 + c.beta * c.b2**2 - 1.5
    return (r1, r2, r3)


def is_admissible(c: RkCoefficients, tol: float = ORDER_TOL) -> bool:
    return all(abs(r) <= tol for r in check_order_conditions(c))


def solve_two_gradient() -> RkCoefficients:
    """Solve the order conditions with a11 = b1 = 0, a22 = 0, alpha = 0.

    With Phi1 = y the conditions reduce to beta*a21 = 1/2, beta*b2 = 1 and
    beta*b2^2 = 3/2, whose only solution is b2 = 3/2, beta = 2/3, a21 = 3/4.
    """
    first_moment, second_moment, drift_target = Fraction(1), Fraction(3, 2), Fraction(1, 2)
    b2 = second_moment / first_moment
    beta = first_moment / b2
    a21 = drift_target / beta
    c = RkCoefficients(alpha=0.0, beta=float(beta), a11=0.0, a21=float(a21), a22=0.0, b1=0.0, b2=float(b2))
    if not is_admissible(c):
        raise ArithmeticError(f"two-gradient solution violates the order conditions: {check_order_conditions(c)}")
    return c


def compute_kappa1(c: RkCoefficients) -> float:
    return 4 * c.alpha**2 * c.a11**2 + c.beta**2 * (
        6 * c.a21**2 + 18 * c.a22**2 + 9 * (c.a11 * c.a22) ** 2
    )


def _ratio(num: float, den: float) -> float:
    return math.inf if den == 0 else num / den


def stepsize_bound(c: RkCoefficients, mu: float, mu_prime: float, L1: float, L1_prime: float) -> float:
    """Largest uniform step covered by the non-asymptotic W2 error estimate.

    Terms whose denominator vanishes (L1_prime = 0 or kappa1 = 0) are treated as +inf.
    ``mu_prime`` does not enter the bound; it is accepted so callers can pass
    the full set of dissipativity constants.
    """
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if not L1 > 0:
        raise ValueError(f"L1 must be positive, got {L1}")
    if mu_prime < 0 or L1_prime < 0:
        raise ValueError("mu_prime and L1_prime must be nonnegative")
    k1 = compute_kappa1(c)
    return min(
        1.0,
        _ratio(1.0, 2 * L1_prime),
        1.0 / (2 * L1),
        4.0 / mu,
        mu / (32 * L1**2),
        _ratio(mu, 4 * k1 * L1**2),
        _ratio(mu**2, 8 * k1 * L1**3),
    )


@dataclass(frozen=True)
class Scheme:
    """``kind`` is one of "lmc", "telmc", "rklmc"; RKLMC carries its coefficients."""

    kind: str
    coefficients: RkCoefficients | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("lmc", "telmc", "rklmc"):
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if (self.kind == "rklmc") != (self.coefficients is not None):
            raise ValueError("coefficients are required for rklmc and only for rklmc")
        if not self.label:
            object.__setattr__(self, "label", self.kind)

    def required_capabilities(self) -> tuple[str, ...]:
        if self.kind == "telmc":
            return (GRADIENT, HESSIAN_VECTOR, LAPLACIAN_GRADIENT)
        return (GRADIENT,)

    def gradients_per_step(self) -> int:
        if self.kind != "rklmc":
            return 1
        c = self.coefficients
        needs_phi1 = not c.first_stage_trivial and (c.alpha != 0.0 or (c.beta != 0.0 and c.a22 != 0.0))
        return 1 + int(needs_phi1) + int(c.beta != 0.0)


LMC = Scheme("lmc")
TELMC = Scheme("telmc")


def rklmc(coefficients: RkCoefficients, label: str = "rklmc") -> Scheme:
    return Scheme("rklmc", coefficients, label)


def scheme_from_name(name: str) -> Scheme:
    key = name.strip().lower()
    if key == "lmc":
        return LMC
    if key == "telmc":
        return TELMC
    if key in PRESETS:
        return rklmc(PRESETS[key], key)
    raise ValueError(f"unknown scheme {name!r}; choose from lmc, telmc, {', '.join(PRESETS)}")


def one_step(scheme: Scheme, model: Potential, y, inc: IncrementPair) -> np.ndarray:
    """Advance ``y`` (shape ``(..., d)``) by one step of length ``inc.h``."""
    y = np.asarray(y, dtype=np.float64)
    h = inc.h
    if scheme.kind == "lmc":
        return y - model.gradient(y) * h + SQRT2 * inc.dw

    if scheme.kind == "telmc":
        model.require(*scheme.required_capabilities())
        g = model.gradient(y)
        return (
            y
            - g * h
            + SQRT2 * inc.dw
            + 0.5 * model.hessian_vector(y, g) * h**2
            - 0.5 * model.laplacian_gradient(y) * h**2
            - SQRT2 * model.hessian_vector(y, inc.dz)
        )

    c = scheme.coefficients
    g0 = model.gradient(y)
    noise = SQRT2 * inc.dz / h
    g1 = None
    if c.first_stage_trivial:
        g1 = g0
    elif c.alpha != 0.0 or (c.beta != 0.0 and c.a22 != 0.0):
        phi1 = y - c.a11 * g0 * h + c.b1 * noise
        g1 = model.gradient(phi1)

    drift = (1.0 - c.alpha - c.beta) * g0
    if c.alpha != 0.0:
        drift = drift + c.alpha * g1
    if c.beta != 0.0:
        phi2 = y - c.a21 * g0 * h + c.b2 * noise
        if c.a22 != 0.0:
            phi2 = phi2 - c.a22 * g1 * h
        drift = drift + c.beta * model.gradient(phi2)
    return y - drift * h + SQRT2 * inc.dw
