import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import simpson
from scipy.optimize import brentq

from yosida_fde.errors import ConfigError, DomainError, StabilityMarginError
from yosida_fde.grid import DelayGeometry, HistorySegment, TimeGrid, Trajectory
from yosida_fde.operators import cubic_delay, linear_delay, resolvent_omega
from yosida_fde.oracles import LinearDelayOracle
from yosida_fde.scheme import (LambdaSchedule, SolverConfig, blend_history, default_start,
                               double_limit_solve, exp_convolution, factorial_constant,
                               halfline_solve, inner_solve, outer_recursion, yosida_derivative,
                               yosida_derivative_series)
from yosida_fde.timefunctions import TimeFunction

GEOM = DelayGeometry.finite(1.0)


def _traj(f, T=1.0, h=1e-3, phi=None):
    grid = TimeGrid.for_geometry(GEOM, T, h)
    phi = phi or HistorySegment.from_function(GEOM, f, h)
    return Trajectory.from_function(grid, f, phi)


def _config(h, lam0, levels=1, T=1.0, **kw):
    return SolverConfig(h=h, horizon=T, schedule=LambdaSchedule(lam0, 0.5, levels), **kw)


# -- schedule and config ------------------------------------------------------

def test_schedule_levels_and_validation():
    sch = LambdaSchedule(0.5, 0.5, 3)
    assert sch.levels == [0.5, 0.25, 0.125]
    assert sch.smallest == 0.125
    with pytest.raises(DomainError):
        LambdaSchedule(1.0).validate(1.0)
    with pytest.raises(ConfigError):
        LambdaSchedule(1.0, ratio=1.0)


def test_solver_config_validation():
    with pytest.raises(ConfigError):
        _config(0.1, 0.1, inner_mode="gauss")
    with pytest.raises(ConfigError):
        _config(0.1, 0.1, T=2.0, windows=(1.0, 1.5))
    assert _config(0.1, 0.05).resolution_warning is not None
    assert _config(0.05, 0.1).resolution_warning is None


# -- Yosida derivative ----------------------------------------------------------

def test_exp_convolution_constant():
    tr = _traj(lambda t: np.array([2.0]))
    lam = 0.2
    assert exp_convolution(tr, lam, 0.7)[0] == pytest.approx(2.0 * (1 - math.exp(-0.7 / lam)),
                                                             abs=1e-13)


def test_exp_convolution_linear_closed_form():
    tr = _traj(lambda t: np.array([t]))
    val = exp_convolution(tr, 0.1, 1.0)[0]
    assert val == pytest.approx(0.9 + 0.1 * math.exp(-10.0), abs=1e-12)
    assert 0.1 * math.exp(-10.0) == pytest.approx(4.54e-6, rel=1e-3)


def test_exp_convolution_against_simpson(rng):
    h, lam = 0.05, 0.3
    knots = rng.normal(size=41)
    kt = h * np.arange(41) - 1.0
    tr = _traj(lambda t: np.array([np.interp(t, kt, knots)]), T=1.0, h=h)
    t = 1.0
    fine = np.linspace(0, t, 100 * round(t / h) + 1)
    integrand = np.exp(-fine / lam) / lam * np.interp(t - fine, kt, knots)
    assert exp_convolution(tr, lam, t)[0] == pytest.approx(simpson(integrand, x=fine), abs=1e-10)


def test_yosida_derivative_constant_is_zero():
    tr = _traj(lambda t: np.array([1.5]))
    np.testing.assert_allclose(yosida_derivative_series(tr, 0.1), 0.0, atol=1e-13)


def test_yosida_derivative_linear():
    tr = _traj(lambda t: np.array([t]))
    for t in (0.1, 0.5, 1.0):
        assert yosida_derivative(tr, 0.05, t)[0] == pytest.approx(1 - math.exp(-t / 0.05),
                                                                  abs=1e-12)


def test_yosida_derivative_sin_first_order():
    tr = _traj(lambda t: np.array([np.sin(t)]), T=1.0, h=1e-5)
    errs = [abs(yosida_derivative(tr, lam, 1.0)[0] - math.cos(1.0))
            for lam in (0.02, 0.01, 0.005, 0.0025)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios >= 1.7) & (ratios <= 2.3))


# -- blended history --------------------------------------------------------------

def test_blend_fixed_point_reproduces_phi():
    op = cubic_delay(c=0.0)
    phi = HistorySegment.from_function(GEOM, lambda s: np.array([np.sin(3 * s)]), 0.01)
    grid = TimeGrid.for_geometry(GEOM, 1.0, 0.01)
    seg = blend_history(phi, default_start(phi, grid), 0.005, op)
    np.testing.assert_allclose(seg(phi.times), phi.states, atol=1e-14)


def test_blend_cubic_midpoint():
    op = cubic_delay(c=0.5)
    phi = HistorySegment.constant(GEOM, [1.0], h=0.25)
    psi = default_start(phi, TimeGrid.for_geometry(GEOM, 1.0, 0.25))
    # J_1(0, psi_0) 1 solves x + x^3 = 1 + 0.5
    root = brentq(lambda x: x + x ** 3 - 1.5, 0, 2, xtol=1e-15)
    seg = blend_history(phi, psi, 1.0, op)
    assert seg(-0.5)[0] == pytest.approx(0.5 * 1.0 + 0.5 * root, abs=1e-13)


def test_blend_equi_lipschitz(rng):
    op = cubic_delay(c=0.5, forcing=TimeFunction.sin())
    phi = HistorySegment.from_function(GEOM, lambda s: np.array([1 + 0.5 * s]), 0.01)
    grid = TimeGrid.for_geometry(GEOM, 1.0, 0.01)
    L_phi = phi.discrete_lipschitz()
    worst_excess = -np.inf
    for _ in range(50):
        psi_hist = HistorySegment(GEOM, phi.times, rng.uniform(-1, 1, size=(phi.times.size, 1)))
        psi = default_start(psi_hist, grid)
        A0 = abs(op.apply(0.0, psi_hist, phi.value_at_zero())[0])
        for lam in (0.5, 0.1, 0.02):
            seg = blend_history(phi, psi, lam, op)
            worst_excess = max(worst_excess, seg.discrete_lipschitz() - (L_phi + A0))
    assert worst_excess <= 1e-9


# -- inner fixed point ---------------------------------------------------------------

def test_inner_solve_zero_operator_keeps_constants():
    op = linear_delay(a=0.0, c=0.0)
    phi = HistorySegment.constant(GEOM, [0.7])
    grid = TimeGrid.for_geometry(GEOM, 2.0, 0.01)
    u = inner_solve(op, default_start(phi, grid), phi, 0.05)
    np.testing.assert_allclose(u.forward_states, 0.7, atol=1e-13)


def test_inner_march_agrees_with_picard():
    op = cubic_delay(c=0.5, r=0.125)
    geom = op.geometry
    phi = HistorySegment.constant(geom, [1.0])
    grid = TimeGrid.for_geometry(geom, 2.0, 2 ** -8)
    cfg = _config(2 ** -8, 2 ** -6, T=2.0, tol_fix=1e-12, max_sweeps=5000)
    psi = default_start(phi, grid)
    a = inner_solve(op, psi, phi, 2 ** -6, config=cfg, mode="march")
    b = inner_solve(op, psi, phi, 2 ** -6, config=cfg, mode="picard")
    assert np.max(np.abs(a.states - b.states)) <= 10 * cfg.tol_fix


def test_inner_solve_on_oracle_history_is_close_to_oracle():
    ex = LinearDelayOracle(-2.0, 0.5, 1.0)
    op = linear_delay()
    phi = HistorySegment.constant(GEOM, [1.0])
    h = 2 ** -10
    grid = TimeGrid.for_geometry(GEOM, 3.0, h)
    psi = Trajectory.from_function(grid, lambda t: np.array([ex(t)]), phi)
    u = inner_solve(op, psi, phi, h)
    ref = ex(grid.forward_times)
    assert np.max(np.abs(u.forward_states[:, 0] - ref)) <= 5e-3


# -- outer recursion ----------------------------------------------------------------

def test_outer_history_free_one_step():
    op = cubic_delay(c=0.0, forcing=TimeFunction.sin())
    phi = HistorySegment.constant(GEOM, [1.0])
    cfg = _config(0.01, 0.01, T=2.0)
    iterates, rec = outer_recursion(op, phi, default_start(phi, TimeGrid.for_geometry(
        GEOM, 2.0, 0.01)), 0.01, cfg)
    assert rec.distances[1] == 0.0
    np.testing.assert_array_equal(iterates[0].states, iterates[1].states)


def test_outer_cubic_factorial_ratios_and_start_independence():
    op = cubic_delay(c=0.5, r=0.125)
    phi = HistorySegment.constant(op.geometry, [1.0])
    h = 2 ** -7
    cfg = _config(h, h, T=2.0, tol_n=1e-12)
    grid = TimeGrid.for_geometry(op.geometry, 2.0, h)
    it1, rec = outer_recursion(op, phi, default_start(phi, grid), h, cfg)
    d = np.array(rec.distances)
    C = factorial_constant(d)
    n = np.arange(3, d.size - 1)
    assert np.all(d[n + 1] / d[n] <= C / (n + 1) * (1 + 1e-12))
    assert rec.converged
    other = Trajectory(grid, np.where(grid.times[:, None] > 0, -2.0 + np.sin(grid.times)[:, None],
                                      phi(np.minimum(grid.times, 0.0))), phi)
    it2, rec2 = outer_recursion(op, phi, other, h, cfg)
    assert np.max(np.abs(it1[-1].states - it2[-1].states)) <= 10 * cfg.tol_n


def test_factorial_constant_needs_enough_points():
    assert math.isnan(factorial_constant([1.0, 0.5, 0.1]))
    d = [1.0, 1.0, 1.0, 1.0, 0.5, 0.25 / 3]
    # n = 3: 4 * 0.5; n = 4: 5 * (1/6)
    assert factorial_constant(d) == pytest.approx(2.0)


# -- double limit ------------------------------------------------------------------

def test_double_limit_linear_oracle_and_refinement():
    ex = LinearDelayOracle(-2.0, 0.5, 1.0)
    op = linear_delay()
    phi = HistorySegment.constant(GEOM, [1.0])
    errors = []
    for k in (7, 8, 9, 10):
        lam = 2.0 ** -k
        traj, _ = double_limit_solve(op, phi, _config(lam, lam, T=3.0, tol_lambda=1.0))
        errors.append(np.max(np.abs(traj.forward_states[:, 0] - ex(traj.grid.forward_times))))
    assert errors[-1] <= 5e-3
    ratios = np.array(errors[:-1]) / np.array(errors[1:])
    assert np.all((ratios >= 1.6) & (ratios <= 2.4))


@pytest.mark.parametrize("omega", [-0.7, 0.4])
def test_omega_shift_consistency(omega):
    op = cubic_delay(c=0.5, omega=omega, forcing=TimeFunction.cos())
    phi = HistorySegment.constant(GEOM, [0.5])
    cfg = _config(2 ** -8, 2 ** -7, levels=2, T=2.0, tol_lambda=1e-2)
    a, _ = double_limit_solve(op, phi, cfg)
    b, _ = double_limit_solve(op.shifted(omega), phi, cfg)
    assert b.states.shape == a.states.shape
    assert np.max(np.abs(a.states - b.states)) <= 10 * cfg.tol_lambda


def test_constant_equilibrium():
    # -2 x + 0.5 x + 1.5 = 0 at x = 1
    op = linear_delay(forcing=TimeFunction.constant(1.5))
    phi = HistorySegment.constant(GEOM, [1.0])
    traj, rep = double_limit_solve(op, phi, _config(0.01, 0.02, levels=2, T=2.0))
    np.testing.assert_allclose(traj.states, 1.0, atol=1e-10)
    assert rep.converged


def test_double_limit_raises_with_report_on_tight_lambda_tolerance():
    from yosida_fde.errors import ConvergenceError
    op = linear_delay()
    phi = HistorySegment.constant(GEOM, [1.0])
    with pytest.raises(ConvergenceError) as info:
        double_limit_solve(op, phi, _config(2 ** -6, 2 ** -5, levels=2, T=1.0, tol_lambda=1e-8))
    assert info.value.report is not None and info.value.trajectory is not None
    assert "[lambda-level]" in str(info.value)


# -- half-line ----------------------------------------------------------------------

def test_halfline_rate_and_history_free():
    op = cubic_delay(c=0.5, omega=-1.0, forcing=TimeFunction.exp_decay())
    phi = HistorySegment.constant(GEOM, [1.0])
    h = 2 ** -5
    cfg = SolverConfig(h=h, horizon=20.0, schedule=LambdaSchedule(h), tol_lambda=1e-3,
                       windows=(20.0,))
    _, rep = halfline_solve(op, phi, cfg)
    d = np.array(rep.levels[-1].distances)[:11]
    assert np.all(d[1:] / d[:-1] <= 0.55)
    free = cubic_delay(c=0.0, omega=-1.0, forcing=TimeFunction.exp_decay())
    _, rep0 = halfline_solve(free, phi, cfg)
    assert rep0.levels[-1].distances[1] == 0.0


def test_halfline_window_extension_prefix():
    op = cubic_delay(c=0.5, omega=-1.0, forcing=TimeFunction.exp_decay())
    phi = HistorySegment.constant(GEOM, [1.0])
    h = 2 ** -5
    cfg = SolverConfig(h=h, horizon=100.0, schedule=LambdaSchedule(h), tol_n=1e-12,
                       tol_lambda=1e-3, windows=(50.0, 100.0))
    _, rep = halfline_solve(op, phi, cfg)
    assert rep.rate["prefix_changes"][0] <= 1e-6
    assert rep.rate["prefix_stable"]


def test_halfline_margin_violation():
    op = cubic_delay(c=1.0, omega=0.5)
    cfg = SolverConfig(h=0.1, horizon=1.0, schedule=LambdaSchedule(0.1))
    with pytest.raises(StabilityMarginError, match="stability margin violated"):
        halfline_solve(op, HistorySegment.constant(GEOM, [1.0]), cfg)


@given(st.floats(0.05, 1.0), st.floats(-2.0, 0.9))
def test_blend_value_matches_resolvent(lam, omega):
    op = cubic_delay(c=0.5, omega=omega)
    phi = HistorySegment.constant(GEOM, [0.8])
    psi = default_start(phi, TimeGrid.for_geometry(GEOM, 1.0, 0.05))
    seg = blend_history(phi, psi, lam, op)
    expected = resolvent_omega(op, lam, 0.0, phi, np.array([0.8]))
    np.testing.assert_allclose(seg.value_at_zero(), expected, atol=1e-13)
