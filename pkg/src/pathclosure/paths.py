"""
Extremal paths of the information-loss action and the classical closure.

Extremals solve the forced-geodesic Euler-Lagrange system

    g (lam_dd + Gamma(lam_d, lam_d)) = (J_M - J_M^T) lam_d + grad U / 2

where ``J_M[i, k] = dM_i/dlam_k`` and ``U = M^T g^-1 M + w_rev (phi - M^T g^-1 M)``.
All derivatives of the geometry are central finite differences of the
provider, so Monte Carlo and tabulated providers work unchanged.

The two-point problem is discretized by second-order central differences on a
uniform grid and solved with damped Newton; the Jacobian is block tridiagonal
and is assembled by finite differences with a three-colour node partition.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BoundaryMinimumError, InvalidParameterError, SingularCollocationError, PathClosureError
from .geometry import check_metric_batch
from .lagrangian import Path, discrete_action

GEOMETRY_STEP = 1e-3


@dataclass
class BvpSolution:
    path: Path
    el_residual: float
    converged: bool
    iterations: int
    collocation_residual: float = np.nan
    action: float = np.nan


def geometry_derivatives(ctx, lams, step=GEOMETRY_STEP):
    """Metric, its gradient, the Jacobian of M and grad U at each row of ``lams``.

    Returns ``g (n,m,m)``, ``dg (n,m,m,m)`` with ``dg[:, j] = dg/dlam_j``,
    ``JM (n,m,m)`` and ``gradU (n,m)``.
    """
    lams = np.atleast_2d(np.asarray(lams, dtype=float))
    n, m = lams.shape
    shifts = np.concatenate([np.zeros((1, m)), step * np.eye(m), -step * np.eye(m)])
    pts = (lams[:, None, :] + shifts[None, :, :]).reshape(-1, m)
    g, M, phi = ctx.provider.fields(pts)
    g = g.reshape(n, 2 * m + 1, m, m)
    M = M.reshape(n, 2 * m + 1, m)
    phi = phi.reshape(n, 2 * m + 1)
    check_metric_batch(g[:, 0], lams)
    mgm = np.einsum("...i,...i->...", M, np.linalg.solve(g, M[..., None])[..., 0])
    U = mgm + ctx.w_rev * (phi - mgm)
    plus, minus = slice(1, m + 1), slice(m + 1, 2 * m + 1)
    dg = (g[:, plus] - g[:, minus]) / (2 * step)
    JM = np.swapaxes((M[:, plus] - M[:, minus]) / (2 * step), 1, 2)
    gradU = (U[:, plus] - U[:, minus]) / (2 * step)
    return g[:, 0], dg, JM, gradU


def el_lowered(ctx, lams, vel, acc, step=GEOMETRY_STEP):
    """Euler-Lagrange residual with the index lowered (multiplied by g)."""
    g, dg, JM, gradU = geometry_derivatives(ctx, lams, step)
    # Gamma_{i,jk} v_j v_k = dg_j[i,k] v_j v_k - 1/2 dg_i[j,k] v_j v_k
    gamma = (np.einsum("njik,nj,nk->ni", dg, vel, vel)
             - 0.5 * np.einsum("nijk,nj,nk->ni", dg, vel, vel))
    force = np.einsum("nik,nk->ni", JM - np.swapaxes(JM, 1, 2), vel) + 0.5 * gradU
    return np.einsum("nij,nj->ni", g, acc) + gamma - force, g


def el_raised(ctx, lams, vel, acc, step=GEOMETRY_STEP):
    low, g = el_lowered(ctx, lams, vel, acc, step)
    return np.linalg.solve(g, low[..., None])[..., 0]


def el_residual(ctx, path, step=GEOMETRY_STEP):
    """Max-norm Euler-Lagrange residual measured with fourth-order stencils.

    The collocation equations are second order, so this audit residual is the
    truncation error of the discrete solution and shrinks like ``h^2``.
    """
    x = path.points
    h = np.diff(path.times)
    if not np.allclose(h, h[0], rtol=1e-9):
        raise InvalidParameterError("el_residual needs a uniform time grid")
    h = h[0]
    if x.shape[0] < 5:
        raise InvalidParameterError("el_residual needs at least five nodes")
    c = x[2:-2]
    vel = (-x[4:] + 8 * x[3:-1] - 8 * x[1:-3] + x[:-4]) / (12 * h)
    acc = (-x[4:] + 16 * x[3:-1] - 30 * c + 16 * x[1:-3] - x[:-4]) / (12 * h * h)
    return float(np.max(np.abs(el_raised(ctx, c, vel, acc, step)))) if c.size else 0.0


def _collocation(ctx, full, h, step):
    vel = (full[2:] - full[:-2]) / (2 * h)
    acc = (full[2:] - 2 * full[1:-1] + full[:-2]) / (h * h)
    low, _ = el_lowered(ctx, full[1:-1], vel, acc, step)
    return low


def _jacobian(ctx, full, h, base, step, fd):
    """Sparse block-tridiagonal Jacobian of the collocation system."""
    n_int = full.shape[0] - 2
    m = full.shape[1]
    rows, cols, vals = [], [], []
    for colour in range(3):
        nodes = np.arange(colour, n_int, 3)
        for j in range(m):
            bumped = full.copy()
            delta = fd * np.maximum(1.0, np.abs(full[1 + nodes, j]))
            bumped[1 + nodes, j] += delta
            diff = _collocation(ctx, bumped, h, step) - base
            for off in (-1, 0, 1):
                eq = nodes + off
                ok = (eq >= 0) & (eq < n_int)
                eq, src = eq[ok], nodes[ok]
                for i in range(m):
                    rows.append(eq * m + i)
                    cols.append(src * m + j)
                    vals.append(diff[eq, i] / delta[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.csc_matrix((vals, (rows, cols)), shape=(n_int * m, n_int * m))


def solve_extremal(ctx, lam0, lamT, T, n_nodes, tol=1e-4, newton_tol=1e-9, max_iter=50,
                   step=GEOMETRY_STEP, fd=1e-7, initial=None):
    """Solve the Euler-Lagrange boundary-value problem between fixed endpoints.

    Parameters
    ----------
    ctx : LagrangianContext
    lam0, lamT : array_like
        Endpoints at ``t = 0`` and ``t = T``.
    T : float
    n_nodes : int
        Number of grid nodes including both endpoints (at least 8).
    tol : float
        Threshold on the fourth-order audit residual for ``converged``.
    newton_tol : float
        Stop when the Newton update falls below this in max norm.
    initial : array_like, optional
        Starting iterate ``(n_nodes, m)``; the straight line by default.

    Returns
    -------
    BvpSolution
        The best iterate; ``converged`` is False if Newton stalls or the
        audit residual exceeds ``tol``.
    """
    if not T > 0:
        raise InvalidParameterError("T must be positive")
    if n_nodes < 8:
        raise InvalidParameterError("n_nodes must be at least 8")
    lam0 = np.atleast_1d(np.asarray(lam0, dtype=float))
    lamT = np.atleast_1d(np.asarray(lamT, dtype=float))
    if lam0.shape != (ctx.m,) or lamT.shape != (ctx.m,):
        raise InvalidParameterError(f"endpoints must have {ctx.m} components")
    times = np.linspace(0.0, T, n_nodes)
    h = times[1] - times[0]
    if initial is None:
        full = lam0 + (lamT - lam0) * (times / T)[:, None]
    else:
        full = np.array(initial, dtype=float).reshape(n_nodes, ctx.m)
        full[0], full[-1] = lam0, lamT

    F = _collocation(ctx, full, h, step)
    norm = np.linalg.norm(F)
    newton_ok = False
    it = 0
    for it in range(1, max_iter + 1):
        J = _jacobian(ctx, full, h, F, step, fd)
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                dx = spla.spsolve(J, -F.ravel())
            except (spla.MatrixRankWarning, RuntimeError) as exc:
                raise SingularCollocationError(
                    f"singular collocation Jacobian ({exc}); try a finer grid (more n_nodes)") from exc
        if not np.all(np.isfinite(dx)):
            raise SingularCollocationError("singular collocation Jacobian; try a finer grid (more n_nodes)")
        dx = dx.reshape(-1, ctx.m)
        alpha = 1.0
        while True:
            trial = full.copy()
            trial[1:-1] += alpha * dx
            try:
                Ft = _collocation(ctx, trial, h, step)
                nt = np.linalg.norm(Ft)
            except PathClosureError:
                nt = np.inf
            if nt <= (1 - 1e-4 * alpha) * norm or alpha < 1e-4:
                break
            alpha *= 0.5
        if not np.isfinite(nt):
            break
        full, F, norm = trial, Ft, nt
        if alpha * np.max(np.abs(dx)) < newton_tol * max(1.0, np.max(np.abs(full))):
            newton_ok = True
            break
        if alpha < 1e-4:
            break

    path = Path(times, full)
    audit = el_residual(ctx, path, step)
    F_raised = float(np.max(np.abs(F))) if F.size else 0.0
    return BvpSolution(path=path, el_residual=audit, converged=bool(newton_ok and audit < tol),
                       iterations=it, collocation_residual=F_raised,
                       action=discrete_action(ctx, path))


@dataclass
class ClosureResult:
    lam_opt: np.ndarray
    table: np.ndarray
    axes: list
    valid: np.ndarray
    argmin_index: tuple


def _grid_axes(endpoint_grid, m):
    axes = getattr(endpoint_grid, "axes", endpoint_grid)
    if m == 1 and np.ndim(axes) == 1 and not isinstance(axes[0], (list, tuple, np.ndarray)):
        axes = [axes]
    axes = [np.asarray(a, dtype=float) for a in axes]
    if len(axes) != m:
        raise InvalidParameterError("endpoint grid needs one axis per coordinate")
    for a in axes:
        if a.size < 3 or np.any(np.diff(a) <= 0):
            raise InvalidParameterError("endpoint axes need at least 3 increasing points")
    return axes


def _parabolic_offset(fm, f0, fp):
    """Vertex offset (in grid steps) of the parabola through three values."""
    denom = fm - 2 * f0 + fp
    if not np.isfinite(denom) or denom <= 0:
        return 0.0
    return float(np.clip(0.5 * (fm - fp) / denom, -0.5, 0.5))


def classical_closure(ctx, lam0, T, endpoint_grid, n_nodes=200, **bvp_kw):
    """Minimize the extremal action over endpoints on a grid.

    Each grid endpoint gets its own boundary-value solve; cells whose solve
    fails are marked invalid (NaN in the table). The grid argmin is refined by
    a per-axis parabolic fit. Ties are broken by the smallest ``|lam_T|``.

    Returns
    -------
    ClosureResult
    """
    m = ctx.m
    lam0 = np.atleast_1d(np.asarray(lam0, dtype=float))
    axes = _grid_axes(endpoint_grid, m)
    shape = tuple(a.size for a in axes)
    table = np.full(shape, np.nan)
    for idx in np.ndindex(shape):
        lamT = np.array([axes[d][idx[d]] for d in range(m)])
        try:
            sol = solve_extremal(ctx, lam0, lamT, T, n_nodes, **bvp_kw)
        except PathClosureError:
            continue
        if sol.converged:
            table[idx] = sol.action
    valid = np.isfinite(table)
    if not valid.any():
        raise PathClosureError("no endpoint boundary-value problem converged")
    best = np.nanmin(table)
    ties = np.argwhere(valid & (table <= best + 1e-12 * max(1.0, abs(best))))
    norms = [np.linalg.norm([axes[d][i[d]] for d in range(m)]) for i in ties]
    idx = tuple(ties[int(np.argmin(norms))])
    point = np.array([axes[d][idx[d]] for d in range(m)])
    if any(i == 0 or i == n - 1 for i, n in zip(idx, shape)):
        raise BoundaryMinimumError(
            f"action minimum at grid boundary lambda_T={point.tolist()}; enlarge the endpoint grid",
            argmin=point)
    for d in range(m):
        lo, hi = list(idx), list(idx)
        lo[d] -= 1
        hi[d] += 1
        fm, fp = table[tuple(lo)], table[tuple(hi)]
        off = _parabolic_offset(fm, table[idx], fp)
        step = axes[d][idx[d] + 1] - axes[d][idx[d]] if off > 0 else axes[d][idx[d]] - axes[d][idx[d] - 1]
        point[d] += off * step
    return ClosureResult(lam_opt=point, table=table, axes=axes, valid=valid, argmin_index=idx)
