"""
Gauge transformation and the weak-noise (large Delta t) reduction.

Near an attracting fixed point ``alpha*`` with ``M(alpha*) = 0`` and
``phi(alpha*) = 0`` the stationary Hamilton-Jacobi equation

    1/2 (grad f + M)^T g^-1 (grad f + M) = phi / 2

is solved by a quadratic ``f_s = 1/2 d^T G d`` (``d = lam - alpha*``) where
``G`` satisfies ``(G + A_M)^T g^-1 (G + A_M) = Phi2`` with ``M ~ A_M d`` and
``phi ~ d^T Phi2 d``. Writing ``X = -G`` this is a continuous algebraic Riccati
equation whose stabilizing solution makes the drift ``g^-1 (G + A_M)`` Hurwitz.

The drift ODE ``lam_dot = g^-1 (grad f_s + M)`` gives ``alpha(t)``; Gaussian
fluctuations about it are Ornstein-Uhlenbeck with stationary covariance
``sigma``, and the thermodynamical path takes the form
``lam_hat = alpha - sigma grad f_s(lam_hat)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur, solve_continuous_lyapunov
from scipy.optimize import brentq

from .errors import (BranchSelectionError, DegenerateCorrectionError, FixedPointError,
                     InvalidParameterError, WrongBranchError)
from .geometry import check_metric
from .lagrangian import LagrangianContext, Path, hj_residual

FD_STEP = 1e-3


def _fields1(provider, lam):
    g, M, phi = provider.fields(np.atleast_2d(lam))
    return g[0], M[0], float(phi[0])


def _stacked_residual(provider, lam, step):
    """``[M(lam); grad(phi)/2]``, zero exactly at an admissible fixed point."""
    m = lam.size
    _, M, _ = _fields1(provider, lam)
    pts = np.concatenate([lam + step * np.eye(m), lam - step * np.eye(m)])
    _, _, phi = provider.fields(pts)
    grad = (phi[:m] - phi[m:]) / (2 * step)
    return np.concatenate([M, 0.5 * grad])


def find_fixed_point(provider, guess, step=FD_STEP, tol=1e-10, max_iter=50):
    """Damped Gauss-Newton on ``[M; grad(phi)/2] = 0``.

    ``M`` alone is not enough: on many geometries (the harmonic benchmark
    among them) ``M`` vanishes identically and its Jacobian is singular.
    """
    lam = np.atleast_1d(np.asarray(guess, dtype=float)).copy()
    m = lam.size
    r = _stacked_residual(provider, lam, step)
    for _ in range(max_iter):
        if np.max(np.abs(r)) < tol:
            break
        J = np.empty((2 * m, m))
        for j in range(m):
            e = np.zeros(m)
            e[j] = step
            J[:, j] = (_stacked_residual(provider, lam + e, step) - _stacked_residual(provider, lam - e, step)) / (2 * step)
        dx, *_ = np.linalg.lstsq(J, -r, rcond=None)
        alpha = 1.0
        while alpha > 1e-6:
            trial = lam + alpha * dx
            rt = _stacked_residual(provider, trial, step)
            if np.linalg.norm(rt) < np.linalg.norm(r):
                break
            alpha *= 0.5
        else:
            break
        lam, r = trial, rt
    if np.max(np.abs(r)) >= tol * 100:
        raise FixedPointError(f"no fixed point with M = 0 and grad(phi) = 0 near {np.ravel(guess).tolist()}; "
                              f"residual {np.max(np.abs(r)):.3e}")
    return lam


def local_expansion(provider, alpha, step=FD_STEP):
    """``g(alpha)``, ``A_M = dM/dlam`` and ``Phi2 = Hessian(phi)/2`` by central differences."""
    m = alpha.size
    g, _, phi0 = _fields1(provider, alpha)
    E = step * np.eye(m)
    _, Mp, _ = provider.fields(alpha + E)
    _, Mm, _ = provider.fields(alpha - E)
    A_M = ((Mp - Mm) / (2 * step)).T
    H = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            pts = np.array([alpha + E[i] + E[j], alpha + E[i] - E[j], alpha - E[i] + E[j], alpha - E[i] - E[j]])
            _, _, p = provider.fields(pts)
            H[i, j] = H[j, i] = (p[0] - p[1] - p[2] + p[3]) / (4 * step * step)
    return g, A_M, 0.5 * H


def solve_care_schur(a, r, q):
    """Stabilizing solution of ``a^T X + X a - X r^-1 X + q = 0`` by ordered Schur.

    Raises ``BranchSelectionError`` when the Hamiltonian matrix does not have
    exactly ``m`` eigenvalues in the open left half-plane.
    """
    m = a.shape[0]
    rinv = np.linalg.inv(r)
    ham = np.block([[a, -rinv], [-q, -a.T]])
    T, Z, sdim = schur(ham, output="real", sort="lhp")
    if sdim != m:
        ev = np.linalg.eigvals(ham)
        raise BranchSelectionError(
            f"no stabilizing branch: {sdim} of {m} required stable Hamiltonian eigenvalues "
            f"(eigenvalues {np.round(ev, 10).tolist()})")
    U1, U2 = Z[:m, :m], Z[m:, :m]
    if np.linalg.cond(U1) > 1e12:
        raise BranchSelectionError("stable invariant subspace is not a graph; no stabilizing solution")
    X = np.linalg.solve(U1.T, U2.T).T
    return 0.5 * (X + X.T)


@dataclass
class GaugeSolution:
    alpha_star: np.ndarray
    G: np.ndarray
    drift_lin: np.ndarray
    g: np.ndarray
    A_M: np.ndarray
    Phi2: np.ndarray
    provider: object

    @property
    def m(self):
        return self.alpha_star.size

    def f_s(self, lam):
        d = np.asarray(lam, dtype=float) - self.alpha_star
        return 0.5 * np.einsum("...i,ij,...j->...", d, self.G, d)

    def grad_f(self, lam):
        return (np.asarray(lam, dtype=float) - self.alpha_star) @ self.G.T

    def velocity(self, lam):
        """Drift ``g^-1 (grad f_s + M)`` with the provider's ``g`` and ``M``."""
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        g, M, _ = _fields1(self.provider, lam)
        return np.linalg.solve(g, self.grad_f(lam) + M)

    def hj_probe(self, lam, delta_t=1.0):
        """Stationary HJ residual of the quadratic gauge at ``lam``."""
        ctx = LagrangianContext(self.provider, delta_t)
        return hj_residual(ctx, self.grad_f(lam), 0.0, lam)

    @property
    def drift_eigenvalues(self):
        return np.linalg.eigvals(self.drift_lin)


def stationary_hj_quadratic(provider, alpha_star_guess, step=FD_STEP, hj_tol=1e-8):
    """Quadratic stationary HJ solution about the fixed point near ``alpha_star_guess``."""
    alpha = find_fixed_point(provider, alpha_star_guess, step)
    g, A_M, Phi2 = local_expansion(provider, alpha, step)
    check_metric(g, alpha)
    ginv_A = np.linalg.solve(g, A_M)
    q = Phi2 - A_M.T @ ginv_A
    X = solve_care_schur(ginv_A, g, 0.5 * (q + q.T))
    G = -X
    drift = np.linalg.solve(g, G + A_M)
    ev = np.linalg.eigvals(drift)
    if np.max(ev.real) >= -1e-12:
        raise BranchSelectionError(f"quadratic gauge drift is not Hurwitz (eigenvalues {ev.tolist()})")
    lhs = (G + A_M).T @ np.linalg.solve(g, G + A_M)
    if np.max(np.abs(0.5 * (lhs + lhs.T) - Phi2)) > hj_tol * max(1.0, np.max(np.abs(Phi2))):
        raise BranchSelectionError("Riccati solution fails the quadratic HJ condition")
    return GaugeSolution(alpha, G, drift, g, A_M, Phi2, provider)


def _rk4(f, y0, T, dt):
    n = max(1, int(round(T / dt)))
    h = T / n
    ys = np.empty((n + 1, y0.size))
    ys[0] = y0
    y = y0
    for k in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        ys[k + 1] = y
    return h * np.arange(n + 1), ys


def drift_ode_solve(gauge, lam0, T, dt=1e-3, validity_tol=1e-3):
    """Integrate ``lam_dot = g^-1 (grad f_s + M)`` by fixed-step RK4.

    Warns if the quadratic gauge's HJ residual at ``lam0`` (relative to
    ``phi``) exceeds ``validity_tol``; raises ``WrongBranchError`` if the
    distance to ``alpha*`` grows beyond ten times its initial value.
    """
    if not T > 0 or not dt > 0:
        raise InvalidParameterError("T and dt must be positive")
    lam0 = np.atleast_1d(np.asarray(lam0, dtype=float))
    r0 = np.linalg.norm(lam0 - gauge.alpha_star)
    if r0 > 0:
        _, _, phi = _fields1(gauge.provider, lam0)
        res = abs(gauge.hj_probe(lam0))
        if res > validity_tol * max(phi, 1e-300):
            warnings.warn(f"lam0 is outside the region where the quadratic gauge is accurate "
                          f"(HJ residual {res:.2e})", RuntimeWarning)
    n = max(1, int(round(T / dt)))
    h = T / n
    ys = np.empty((n + 1, lam0.size))
    ys[0] = lam0
    y = lam0
    f = gauge.velocity
    limit = 10 * r0
    for k in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)) or (r0 > 0 and np.linalg.norm(y - gauge.alpha_star) > limit):
            raise WrongBranchError(f"drift ODE diverged at t={h * (k + 1):.4g}; the gauge branch is not attracting")
        ys[k + 1] = y
    return Path(h * np.arange(n + 1), ys)


def _require_hurwitz(drift):
    ev = np.linalg.eigvals(drift)
    if np.max(ev.real) >= 0:
        raise BranchSelectionError(f"drift is not Hurwitz (eigenvalues {ev.tolist()})")


def stationary_covariance(gauge, delta_t):
    """Solve ``D sigma + sigma D^T + (Delta t g)^-1 = 0`` for the OU covariance."""
    if not delta_t > 0:
        raise InvalidParameterError("delta_t must be positive")
    drift = gauge.drift_lin
    _require_hurwitz(drift)
    noise = np.linalg.inv(delta_t * gauge.g)
    sigma = solve_continuous_lyapunov(drift, -noise)
    return 0.5 * (sigma + sigma.T)


def lyapunov_kron(drift, noise):
    """Reference Lyapunov solve through the Kronecker-sum linear system."""
    m = drift.shape[0]
    I = np.eye(m)
    L = np.kron(I, drift) + np.kron(drift, I)
    return np.linalg.solve(L, -noise.reshape(-1, order="F")).reshape(m, m, order="F")


def euler_maruyama_covariance(drift, noise, dt, n_steps, seed, burn=1000):
    """Empirical stationary covariance of ``dx = D x dt + chol(noise) dW``."""
    rng = np.random.default_rng(seed)
    m = drift.shape[0]
    C = np.linalg.cholesky(noise)
    step = np.eye(m) + dt * drift
    x = np.zeros(m)
    out = np.empty((n_steps, m))
    sq = np.sqrt(dt)
    kicks = rng.standard_normal((n_steps + burn, m)) @ C.T * sq
    for k in range(burn):
        x = step @ x + kicks[k]
    for k in range(n_steps):
        x = step @ x + kicks[burn + k]
        out[k] = x
    return out


@dataclass
class WeakNoiseResult:
    alpha_path: Path
    sigma: np.ndarray
    thermo_path: Path


def ottinger_path(gauge, sigma, lam0, T, dt=1e-3):
    """Thermodynamical path ``lam_hat`` with ``lam_hat = alpha - sigma grad f_s(lam_hat)``.

    For a quadratic gauge this is ``(I + sigma G)^-1 (alpha + sigma G alpha*)``,
    i.e. ``(I + sigma G)^-1 alpha`` when ``alpha* = 0``.
    """
    corr = np.eye(gauge.m) + sigma @ gauge.G
    if np.linalg.cond(corr) > 1e12:
        raise DegenerateCorrectionError("I + sigma G is singular; the Ottinger correction is undefined")
    alpha = drift_ode_solve(gauge, lam0, T, dt)
    shift = sigma @ gauge.G @ gauge.alpha_star
    lam_hat = np.linalg.solve(corr, (alpha.points + shift).T).T
    return WeakNoiseResult(alpha, sigma, Path(alpha.times, lam_hat))


def weak_noise(gauge, lam0, T, delta_t, dt=1e-3):
    return ottinger_path(gauge, stationary_covariance(gauge, delta_t), lam0, T, dt)


@dataclass
class OmReport:
    argmax: float
    expected: float
    argmax_error: float
    backward_path: Path
    extremal_path: Path
    path_error: float
    passed: bool


def ou_transition(spec, T):
    """Mean and variance of the exact OU transition for ``u_dot = -kappa u``."""
    k = spec.kappa
    mean = spec.u0 * np.exp(-k * T)
    var = -np.expm1(-2 * k * T) / (2 * k * spec.delta_t)
    return mean, var


def om_argmax(gauge, spec, T):
    """Argmax over ``uT`` of ``exp(-Delta t f_s(uT)) K_OM(u0, uT)``."""
    mean, var = ou_transition(spec, T)
    G = float(gauge.G[0, 0])
    a = float(gauge.alpha_star[0])

    def dlog(u):
        return -(u - mean) / var - spec.delta_t * G * (u - a)

    width = 10 * (abs(mean) + abs(a) + np.sqrt(var) + 1)
    lo, hi = mean - width, mean + width
    while dlog(lo) <= 0:
        lo -= width
    while dlog(hi) >= 0:
        hi += width
    return brentq(dlog, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def backward_hj_path(gauge, lam0, T, dt=1e-3):
    """Path steered by the time-dependent quadratic gauge with zero terminal cost.

    ``C(t)`` solves ``C_dot = Phi2 - (C + A_M)^T g^-1 (C + A_M)`` backward from
    ``C(T) = 0`` and the path follows ``lam_dot = g^-1 (C + A_M)(lam - alpha*)``.
    """
    g, A, P = gauge.g, gauge.A_M, gauge.Phi2
    m = gauge.m

    def riccati(c):
        C = c.reshape(m, m)
        rhs = P - (C + A).T @ np.linalg.solve(g, C + A)
        return -rhs.ravel()  # integrate in reversed time s = T - t

    n = max(1, int(round(T / dt)))
    _, cs = _rk4(riccati, np.zeros(m * m), T, T / (2 * n))
    cs = cs[::-1].reshape(-1, m, m)  # now indexed by t on a half-step grid
    h = T / n
    ys = np.empty((n + 1, m))
    y = np.atleast_1d(np.asarray(lam0, dtype=float)) - gauge.alpha_star
    ys[0] = y
    for k in range(n):
        C0, Ch, C1 = cs[2 * k], cs[2 * k + 1], cs[2 * k + 2]
        f = lambda C, x: np.linalg.solve(g, (C + A) @ x)
        k1 = f(C0, y)
        k2 = f(Ch, y + 0.5 * h * k1)
        k3 = f(Ch, y + 0.5 * h * k2)
        k4 = f(C1, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        ys[k + 1] = y
    return Path(h * np.arange(n + 1), ys + gauge.alpha_star)


def om_decomposition_check(gauge, spec, T, n_nodes=1000, argmax_tol=1e-8, path_tol=1e-4):
    """Check the gauge decomposition on the harmonic benchmark.

    The endpoint weight ``exp(-Delta t f_s) K_OM`` must peak at
    ``u0 sech(kappa T)``, and the backward-HJ path must coincide with the
    extremal between its own endpoints.
    """
    from .paths import solve_extremal

    if gauge.m != 1 or not np.isclose(gauge.Phi2[0, 0], spec.kappa ** 2, rtol=1e-6):
        raise InvalidParameterError("om_decomposition_check needs the harmonic gauge with matching kappa")
    if not T > 0:
        raise InvalidParameterError("T must be positive")
    arg = om_argmax(gauge, spec, T)
    expected = spec.u0 / np.cosh(spec.kappa * T)
    err = abs(arg - expected)
    back = backward_hj_path(gauge, [spec.u0], T, T / (n_nodes - 1))
    ctx = LagrangianContext(gauge.provider, spec.delta_t)
    sol = solve_extremal(ctx, back.points[0], back.points[-1], T, n_nodes)
    path_err = float(np.max(np.abs(sol.path.points - back.points)))
    return OmReport(float(arg), float(expected), float(err), back, sol.path, path_err,
                    bool(err <= argmax_tol * max(1.0, abs(expected)) and path_err <= path_tol))
