import math
from dataclasses import dataclass

import numpy as np
import pytest

from rklmc.potentials import GRADIENT, Potential, QuadraticPotential, make_quadratic, make_two_mode_gmm
from rklmc.rng import IncrementPair, StreamKey, aggregate_coarse_pair, derive_stream, draw_step_normals, increment_from_normals
from rklmc.schemes import LMC, RKLMC_2G, RKLMC_3G_A, one_step, rklmc
from rklmc.simulator import (
    BLOCK_ROWS,
    DivergenceError,
    SimulationSpec,
    run_coupled,
    run_ensemble,
    run_trajectory,
    steps_to,
)

TWO_G = rklmc(RKLMC_2G, "rklmc-2g")


@dataclass(frozen=True, eq=False)
class FlatPotential(Potential):
    d: int = 2
    capabilities = frozenset({GRADIENT})
    name = "flat"

    @property
    def dimension(self) -> int:
        return self.d

    def value(self, x):
        return np.zeros(np.shape(x)[:-1])

    def gradient(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))


def test_flat_model_accumulates_brownian_increments():
    h, d = 0.25, 2
    spec = SimulationSpec(LMC, FlatPotential(d), h, 4)
    y, _ = run_trajectory(spec, derive_stream(StreamKey(5, 0, 0)))
    normals = draw_step_normals(derive_stream(StreamKey(5, 0, 0)), 4, d)
    dw = math.sqrt(h) * normals[:, 0]
    np.testing.assert_allclose(y, math.sqrt(2) * dw.sum(axis=0), rtol=1e-14, atol=1e-15)


def test_single_lmc_step_from_explicit_state():
    spec = SimulationSpec(LMC, make_quadratic(2), 0.5, 1, x0=[1.0, 0.0])
    stream_normals = draw_step_normals(derive_stream(StreamKey(0, 0, 0)), 1, 2)
    inc = increment_from_normals(stream_normals[0, 0], stream_normals[0, 1], 0.5)
    y, _ = run_trajectory(spec, derive_stream(StreamKey(0, 0, 0)))
    np.testing.assert_allclose(y, 0.5 * np.array([1.0, 0.0]) + math.sqrt(2) * inc.dw, rtol=1e-15)
    # forced increments reproduce the hand value
    forced = one_step(LMC, make_quadratic(2), np.array([1.0, 0.0]), IncrementPair(np.array([0.1, 0.0]), np.zeros(2), 0.5))
    np.testing.assert_allclose(forced, [0.6414213562373096, 0.0], atol=1e-15)


def test_same_seed_is_bit_identical():
    spec = SimulationSpec.until(TWO_G, make_two_mode_gmm(3), 1.0, 0.125)
    a = run_ensemble(spec, 40, master_seed=3)
    b = run_ensemble(spec, 40, master_seed=3)
    assert np.array_equal(a.states, b.states)
    assert a.spec_digest == b.spec_digest


def test_single_member_ensemble_is_trajectory_zero():
    spec = SimulationSpec.until(TWO_G, make_two_mode_gmm(3), 1.0, 0.125, x0="normal")
    batch = run_ensemble(spec, 1, master_seed=9)
    y, _ = run_trajectory(spec, derive_stream(StreamKey(9, 0, 0)), derive_stream(StreamKey(9, 0, 1)))
    assert np.array_equal(batch.states[0], y)


def test_rows_do_not_depend_on_ensemble_size():
    spec = SimulationSpec.until(LMC, make_two_mode_gmm(2), 0.5, 0.125)
    small = run_ensemble(spec, 3, master_seed=1).states
    large = run_ensemble(spec, BLOCK_ROWS + 5, master_seed=1).states
    assert np.array_equal(small, large[:3])


def test_worker_count_does_not_change_results():
    M = 2 * BLOCK_ROWS + 17
    spec = SimulationSpec.until(TWO_G, make_two_mode_gmm(4), 0.5, 0.0625, record_path=True)
    one = run_ensemble(spec, M, master_seed=2, workers=1)
    many = run_ensemble(spec, M, master_seed=2, workers=3)
    assert np.array_equal(one.states, many.states)
    assert np.array_equal(one.paths, many.paths)
    coupled1 = run_coupled([TWO_G], make_two_mode_gmm(4), 2.0**-5, [2.0**-3, 2.0**-2], 0.5, M, 4, workers=1)
    coupled3 = run_coupled([TWO_G], make_two_mode_gmm(4), 2.0**-5, [2.0**-3, 2.0**-2], 0.5, M, 4, workers=3)
    assert np.array_equal(coupled1.reference, coupled3.reference)
    for key in coupled1.terminals:
        assert np.array_equal(coupled1.terminals[key], coupled3.terminals[key])


def test_recorded_path_ends_at_terminal_state():
    spec = SimulationSpec(LMC, make_quadratic(2), 0.1, 7, record_path=True)
    batch = run_ensemble(spec, 3, master_seed=0)
    assert batch.paths.shape == (8, 3, 2)
    assert np.array_equal(batch.paths[-1], batch.states)
    assert np.all(batch.paths[0] == 0)


@pytest.mark.slow
def test_quadratic_stationary_variance():
    spec = SimulationSpec.until(LMC, make_quadratic(2), 20.0, 0.01)
    states = run_ensemble(spec, 5000, master_seed=17).states
    var = states.var(axis=0, ddof=1)
    assert np.all((0.9 <= var) & (var <= 1.1))


def test_coupled_identical_grid_reproduces_reference():
    res = run_coupled([LMC], make_two_mode_gmm(3), 0.125, [0.125], 1.0, 30, master_seed=6)
    assert np.array_equal(res.terminals[("lmc", 0.125)], res.reference)


def test_coupled_coarse_step_uses_aggregated_increments():
    fine_h, M = 0.5, 4
    model = make_quadratic(1)
    res = run_coupled([TWO_G], model, fine_h, [1.0], 1.0, M, master_seed=8)
    for i in range(M):
        normals = draw_step_normals(derive_stream(StreamKey(8, i, 0)), 2, 1)
        fine = [increment_from_normals(normals[k, 0], normals[k, 1], fine_h) for k in range(2)]
        coarse = aggregate_coarse_pair(fine)
        expected = one_step(TWO_G, model, np.zeros(1), coarse)
        np.testing.assert_allclose(res.terminals[("rklmc-2g", 1.0)][i], expected, rtol=1e-14, atol=1e-15)


def test_two_fine_step_hand_value():
    fine = [
        IncrementPair(np.array([1.0]), np.array([0.3]), 1.0),
        IncrementPair(np.array([-1.0]), np.array([0.1]), 1.0),
    ]
    coarse = aggregate_coarse_pair(fine)
    # dw = 0, dz = 1.4, h = 2: Phi2 = -1/2 + 1.05 sqrt(2), y' = 1 - 2 (1/3 + 2/3 Phi2)
    y = one_step(TWO_G, make_quadratic(1), np.array([1.0]), coarse)
    assert y[0] == pytest.approx(1.0 - 1.4 * math.sqrt(2), abs=1e-14)


def test_grid_nesting_matches_direct_sampling_in_distribution():
    model = make_quadratic(1)
    M = 10_000
    nested = run_coupled([TWO_G], model, 1 / 32, [0.25], 1.0, M, master_seed=30).terminals[("rklmc-2g", 0.25)][:, 0]
    direct = run_ensemble(SimulationSpec.until(TWO_G, model, 1.0, 0.25), M, master_seed=31).states[:, 0]
    for f in (lambda x: x, lambda x: x * x):
        a, b = f(nested), f(direct)
        se = math.sqrt(a.var(ddof=1) / M + b.var(ddof=1) / M)
        assert abs(a.mean() - b.mean()) < 5 * se


def test_non_nesting_grids_rejected():
    model = make_quadratic(1)
    with pytest.raises(ValueError):
        run_coupled([LMC], model, 0.1, [0.25], 1.0, 2, master_seed=0)
    with pytest.raises(ValueError):
        run_coupled([LMC], model, 0.25, [0.75], 1.0, 2, master_seed=0)
    with pytest.raises(ValueError):
        run_coupled([LMC, LMC], model, 0.25, [0.5], 1.0, 2, master_seed=0)


def test_steps_to_requires_exact_division():
    assert steps_to(2.0, 2.0**-12) == 8192
    with pytest.raises(ValueError):
        steps_to(1.0, 0.3)


def test_stiff_quadratic_divergence_is_reported():
    stiff = QuadraticPotential(50.0 * np.eye(2))
    spec = SimulationSpec(LMC, stiff, 0.1, 200)
    with pytest.raises(DivergenceError) as info:
        run_ensemble(spec, 3, master_seed=0)
    rows = sorted(row for row, _ in info.value.failures)
    assert rows == [0, 1, 2]
    assert all(0 < step < 200 for _, step in info.value.failures)
    with pytest.raises(DivergenceError):
        run_coupled([LMC], stiff, 0.05, [0.1], 20.0, 2, master_seed=0)


def test_warns_above_stepsize_bound():
    spec = SimulationSpec(TWO_G, make_quadratic(1), 0.1, 2, regularity=(1.0, 0.0, 1.0, 0.0))
    with pytest.warns(RuntimeWarning):
        run_ensemble(spec, 1, master_seed=0)


def test_second_moment_does_not_explode():
    d = 10
    model = make_two_mode_gmm(d)
    bound = 4 * (d + model.mean @ model.mean)
    for T in (1.0, 2.0, 4.0, 8.0):
        for scheme in (TWO_G, rklmc(RKLMC_3G_A, "rklmc-3g-a")):
            states = run_ensemble(SimulationSpec.until(scheme, model, T, 2.0**-6), 300, master_seed=11).states
            assert np.mean(np.sum(states**2, axis=1)) <= bound


def test_spec_validation():
    model = make_quadratic(2)
    with pytest.raises(ValueError):
        SimulationSpec(LMC, model, 0.0, 1)
    with pytest.raises(ValueError):
        SimulationSpec(LMC, model, 0.1, 0)
    with pytest.raises(ValueError):
        SimulationSpec(LMC, model, 0.1, 1, x0=[1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        SimulationSpec(LMC, model, 0.1, 1, x0="uniform")
