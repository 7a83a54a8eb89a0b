import math
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rklmc.checks import one_step_gaps, quadratic_exactness_gap
from rklmc.metrics import fit_loglog_slope
from rklmc.potentials import (
    GRADIENT,
    CapabilityError,
    GradientCounter,
    Potential,
    make_eight_mode_gmm,
    make_quadratic,
    make_two_mode_gmm,
)
from rklmc.rng import IncrementPair, increment_from_normals
from rklmc.schemes import (
    LMC,
    PRESETS,
    RKLMC_2G,
    RKLMC_3G_A,
    RKLMC_3G_B,
    TELMC,
    RkCoefficients,
    check_order_conditions,
    compute_kappa1,
    is_admissible,
    one_step,
    rklmc,
    scheme_from_name,
    solve_two_gradient,
    stepsize_bound,
)

ZERO = RkCoefficients(0, 0, 0, 0, 0, 0, 0)


@dataclass(frozen=True, eq=False)
class FlatPotential(Potential):
    d: int = 3
    capabilities = frozenset({GRADIENT})
    name = "flat"

    @property
    def dimension(self) -> int:
        return self.d

    def value(self, x):
        return np.zeros(np.shape(x)[:-1])

    def gradient(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))


@pytest.mark.parametrize("name", list(PRESETS))
def test_presets_satisfy_order_conditions(name):
    assert max(abs(r) for r in check_order_conditions(PRESETS[name])) <= 1e-12
    assert is_admissible(PRESETS[name])


def test_zero_coefficients_residuals():
    assert check_order_conditions(ZERO) == (-0.5, -1.0, -1.5)
    assert not is_admissible(ZERO)


def test_solved_two_gradient_matches_preset():
    c = solve_two_gradient()
    for a, b in zip(np.array(list(vars(c).values())), np.array(list(vars(RKLMC_2G).values()))):
        assert a == pytest.approx(b, abs=1e-14)


def test_kappa1_values():
    assert compute_kappa1(RKLMC_2G) == pytest.approx(1.5, abs=1e-15)
    assert compute_kappa1(RKLMC_3G_B) == pytest.approx(11 / 18, abs=1e-15)
    assert compute_kappa1(ZERO) == 0.0


def test_stepsize_bound_examples():
    assert stepsize_bound(RKLMC_2G, 1.0, 0.0, 1.0, 0.0) == pytest.approx(1 / 32, abs=1e-15)
    assert stepsize_bound(RKLMC_3G_B, 1.0, 0.0, 1.0, 0.0) == pytest.approx(1 / 32, abs=1e-15)
    # kappa1 = 0 removes the last two terms
    assert stepsize_bound(ZERO, 1.0, 0.0, 1.0, 0.0) == pytest.approx(1 / 32)


def test_stepsize_bound_large_mu():
    # 4/mu binds long before the 1/2 term does
    assert stepsize_bound(RKLMC_2G, 1e6, 1.0, 1.0, 1.0) == pytest.approx(4e-6, rel=1e-15)


@pytest.mark.parametrize("mu,L1", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
def test_stepsize_bound_rejects_nonpositive(mu, L1):
    with pytest.raises(ValueError):
        stepsize_bound(RKLMC_2G, mu, 0.0, L1, 0.0)


def test_lmc_one_step_hand_value():
    model = make_quadratic(2)
    inc = IncrementPair(np.array([0.1, 0.0]), np.array([0.0, 0.0]), 0.5)
    y = one_step(LMC, model, np.array([1.0, 0.0]), inc)
    np.testing.assert_allclose(y, [0.6414213562373096, 0.0], rtol=0, atol=1e-15)


def test_telmc_and_2g_hand_value():
    model = make_quadratic(2)
    inc = IncrementPair(np.array([0.1, 0.0]), np.array([0.05, 0.0]), 0.5)
    y = np.array([1.0, 0.0])
    expected = [0.6957106781186548, 0.0]
    np.testing.assert_allclose(one_step(TELMC, model, y, inc), expected, rtol=0, atol=1e-14)
    np.testing.assert_allclose(one_step(rklmc(RKLMC_2G), model, y, inc), expected, rtol=0, atol=1e-14)


@pytest.mark.parametrize("scheme", [LMC, rklmc(RKLMC_2G), rklmc(RKLMC_3G_A), rklmc(RKLMC_3G_B)], ids=lambda s: s.label)
def test_flat_potential_is_pure_noise(scheme):
    rng = np.random.default_rng(0)
    inc = increment_from_normals(rng.standard_normal(3), rng.standard_normal(3), 0.2)
    y = rng.standard_normal(3)
    np.testing.assert_allclose(one_step(scheme, FlatPotential(), y, inc), y + math.sqrt(2) * inc.dw, rtol=0, atol=0)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3),
    st.floats(1e-3, 1.0), st.integers(0, 2**32 - 1),
)
def test_zero_weights_reduce_to_lmc(a21, a22, b2, h, seed):
    c = RkCoefficients(0.0, 0.0, 0.3, a21, a22, 1.0, b2)
    rng = np.random.default_rng(seed)
    model = make_two_mode_gmm(4)
    y = rng.standard_normal(4)
    inc = increment_from_normals(rng.standard_normal(4), rng.standard_normal(4), h)
    assert np.array_equal(one_step(rklmc(c), model, y, inc), one_step(LMC, model, y, inc))


@pytest.mark.parametrize("coeffs", [RKLMC_2G, RKLMC_3G_B], ids=["2g", "3g-b"])
def test_quadratic_exactness(coeffs):
    assert quadratic_exactness_gap(coeffs, trials=200, d=4, seed=11) <= 1e-12


def test_3g_a_is_not_quadratic_exact():
    # the a22 stage adds an h^2 A^2 dz term, so exactness is a property of the coefficients
    assert quadratic_exactness_gap(RKLMC_3G_A, trials=20, d=3, seed=2) > 1e-6


@pytest.mark.parametrize("name", list(PRESETS))
def test_one_step_gap_to_telmc_is_second_order(name):
    hs = [2.0**-k for k in range(8, 3, -1)]
    gaps = one_step_gaps(PRESETS[name], hs, seed=77)
    slope, _, _ = fit_loglog_slope(hs, gaps)
    assert slope >= 1.9


@pytest.mark.parametrize("scheme,count", [(LMC, 1), (rklmc(RKLMC_2G), 2), (rklmc(RKLMC_3G_A), 3), (rklmc(RKLMC_3G_B), 3)])
def test_gradient_evaluations_per_step(scheme, count):
    model = GradientCounter(make_two_mode_gmm(3))
    inc = increment_from_normals(np.ones(3), np.ones(3), 0.1)
    one_step(scheme, model, np.zeros(3), inc)
    assert model.calls == count == scheme.gradients_per_step()


def test_telmc_requires_higher_order_oracles():
    inc = increment_from_normals(np.ones(2), np.ones(2), 0.1)
    with pytest.raises(CapabilityError):
        one_step(TELMC, make_eight_mode_gmm(), np.zeros(2), inc)
    # RKLMC only needs the gradient
    assert np.all(np.isfinite(one_step(rklmc(RKLMC_3G_A), make_eight_mode_gmm(), np.zeros(2), inc)))


def test_batched_step_matches_rows():
    rng = np.random.default_rng(6)
    model = make_two_mode_gmm(5)
    y = rng.standard_normal((4, 5))
    inc = increment_from_normals(rng.standard_normal((4, 5)), rng.standard_normal((4, 5)), 0.05)
    for scheme in (LMC, TELMC, rklmc(RKLMC_3G_B)):
        out = one_step(scheme, model, y, inc)
        for i in range(4):
            row = one_step(scheme, model, y[i], IncrementPair(inc.dw[i], inc.dz[i], inc.h))
            np.testing.assert_allclose(out[i], row, rtol=1e-14, atol=1e-15)


def test_coefficient_text_round_trip():
    for c in PRESETS.values():
        assert RkCoefficients.from_text(c.to_text()) == c
    parsed = RkCoefficients.from_text("alpha=0 beta=2/3 a11=0 a21=3/4 a22=0 b1=0 b2=3/2")
    assert is_admissible(parsed)


@pytest.mark.parametrize(
    "text",
    ["alpha=0 beta=1", "alpha=0 alpha=0 beta=0 a11=0 a21=0 a22=0 b1=0 b2=0", "gamma=1", "alpha=x beta=0 a11=0 a21=0 a22=0 b1=0 b2=0"],
)
def test_coefficient_text_rejects_bad_input(text):
    with pytest.raises(ValueError):
        RkCoefficients.from_text(text)


def test_nonfinite_coefficients_rejected():
    with pytest.raises(ValueError):
        RkCoefficients(math.nan, 0, 0, 0, 0, 0, 0)


def test_scheme_names():
    assert scheme_from_name("LMC") is LMC
    assert scheme_from_name("rklmc-3g-b").coefficients == RKLMC_3G_B
    with pytest.raises(ValueError):
        scheme_from_name("euler")
