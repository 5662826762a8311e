import numpy as np
import pytest

from pathclosure.errors import BoundaryMinimumError, InvalidParameterError
from pathclosure.geometry import ClosedFormProvider, harmonic_surrogate
from pathclosure.lagrangian import LagrangianContext, Path, discrete_action
from pathclosure.models import OscillatorModel, TbhModel
from pathclosure.paths import classical_closure, el_lowered, el_residual, solve_extremal

SECH1 = 0.648054273663885400
SECH5 = 0.013475282221304557
B_11 = 0.731058578630004879  # (e - 1) / (2 sinh 1)
A_11 = 0.268941421369995121
MID_11 = 0.886818883970073909


@pytest.fixture(scope="module")
def harmonic():
    return LagrangianContext(harmonic_surrogate(1.0), 1.0)


def test_harmonic_extremal(harmonic):
    sol = solve_extremal(harmonic, [1.0], [1.0], 1.0, 2000)
    t = sol.path.times
    assert sol.converged
    assert np.max(np.abs(sol.path.points[:, 0] - (A_11 * np.exp(t) + B_11 * np.exp(-t)))) < 1e-4
    assert abs(sol.path(0.5)[0] - MID_11) < 1e-4


def test_force_sign_pinned(harmonic):
    t = np.linspace(0, 1, 5)
    u = np.cosh(t)[:, None]
    assert np.allclose(el_lowered(harmonic, u, np.sinh(t)[:, None], np.cosh(t)[:, None])[0], 0, atol=1e-9)
    # an oscillating path would solve the opposite sign
    bad = el_lowered(harmonic, np.cos(t)[:, None], -np.sin(t)[:, None], -np.cos(t)[:, None])[0]
    assert np.max(np.abs(bad)) > 0.5


def test_oscillator_force_sign():
    ctx = LagrangianContext(ClosedFormProvider(OscillatorModel(), 1.0), 1.0)
    t = np.linspace(0, 1, 6)
    lam = np.c_[np.cos(t), -np.sin(t)]
    vel = np.c_[-np.sin(t), -np.cos(t)]
    acc = -lam
    assert np.allclose(el_lowered(ctx, lam, vel, acc)[0], 0, atol=1e-9)


def test_gibbs_point_constant(harmonic):
    sol = solve_extremal(harmonic, [0.0], [0.0], 2.0, 50)
    assert np.allclose(sol.path.points, 0) and sol.action == 0
    ctx = LagrangianContext(ClosedFormProvider(OscillatorModel(), 1.0), 1.0)
    sol = solve_extremal(ctx, [0, 0], [0, 0], 1.0, 20)
    assert np.allclose(sol.path.points, 0) and sol.action == 0


def test_oscillator_reversible_flow_is_zero_action_extremal():
    ctx = LagrangianContext(ClosedFormProvider(OscillatorModel(), 1.0), 1.0)
    T = 0.5
    sol = solve_extremal(ctx, [1.0, 0.0], [np.cos(T), -np.sin(T)], T, 1000)
    t = sol.path.times
    assert sol.converged
    assert np.max(np.abs(sol.path.points - np.c_[np.cos(t), -np.sin(t)])) < 1e-3
    assert abs(sol.action) < 1e-6


def _bump_perturbations(path, rng, count=20, amp=1e-2):
    t = path.times
    T = t[-1]
    for _ in range(count):
        shape = np.zeros((t.size, path.points.shape[1]))
        for k in range(1, 4):
            shape += np.outer(np.sin(k * np.pi * t / T), rng.normal(size=path.points.shape[1]))
        shape *= amp / np.max(np.abs(shape))
        yield Path(t, path.points + shape)


def test_extremal_minimality(harmonic, rng):
    for ctx, a, b, T in [(harmonic, [1.0], [0.3], 2.0),
                         (LagrangianContext(ClosedFormProvider(TbhModel(3, 2), 1.0), 1.0),
                          [0.3, -0.2, 0.1, 0.4], [0.1, 0.2, -0.3, 0.0], 0.5)]:
        sol = solve_extremal(ctx, a, b, T, 200)
        assert sol.converged
        S = discrete_action(ctx, sol.path)
        for p in _bump_perturbations(sol.path, rng):
            assert discrete_action(ctx, p) > S


def test_grid_convergence(harmonic):
    res = [solve_extremal(harmonic, [1.0], [0.2], 2.0, n).el_residual for n in (50, 100, 200)]
    assert res[0] / res[1] >= 3 and res[1] / res[2] >= 3


def test_fig3_separation(harmonic):
    sol = solve_extremal(harmonic, [1.0], [SECH5], 5.0, 2000)
    t = sol.path.times
    assert np.max(np.abs(sol.path.points[:, 0] - 1 / np.cosh(t))) > 0.05
    assert sol.action < discrete_action(harmonic, Path(t, 1 / np.cosh(t)))


def test_not_converged_reports_best_iterate():
    ctx = LagrangianContext(ClosedFormProvider(TbhModel(3, 2), 1.0), 1.0)
    sol = solve_extremal(ctx, [0.3, -0.2, 0.1, 0.4], [0.1, 0.2, -0.3, 0.0], 0.5, 50, max_iter=1)
    assert not sol.converged and sol.iterations == 1
    assert np.all(np.isfinite(sol.path.points))


def test_solver_preconditions(harmonic):
    with pytest.raises(InvalidParameterError):
        solve_extremal(harmonic, [1.0], [1.0], 1.0, 5)
    with pytest.raises(InvalidParameterError):
        solve_extremal(harmonic, [1.0], [1.0], 0.0, 50)


def test_closure_sech(harmonic):
    res = classical_closure(harmonic, [1.0], 1.0, [np.linspace(0.3, 1.0, 15)], n_nodes=200)
    assert abs(res.lam_opt[0] - SECH1) < 1e-4
    res = classical_closure(harmonic, [0.0], 1.0, [np.linspace(-0.5, 0.5, 11)], n_nodes=100)
    assert abs(res.lam_opt[0]) < 1e-12
    res = classical_closure(harmonic, [1.0], 5.0, [np.linspace(-0.05, 0.05, 11)], n_nodes=400)
    assert abs(res.lam_opt[0] - SECH5) < 1e-4


def test_closure_boundary_error(harmonic):
    with pytest.raises(BoundaryMinimumError) as exc:
        classical_closure(harmonic, [1.0], 1.0, [np.linspace(0.7, 1.0, 7)], n_nodes=100)
    assert np.isclose(exc.value.argmin[0], 0.7)


def test_closure_tie_break_smallest_norm(harmonic):
    # u0 = 0 with a symmetric grid whose centre is missing: +-0.05 tie exactly
    axis = np.array([-0.25, -0.15, -0.05, 0.05, 0.15, 0.25])
    res = classical_closure(harmonic, [0.0], 1.0, [axis], n_nodes=60)
    assert res.argmin_index == (2,)
