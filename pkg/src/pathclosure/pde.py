"""
Schrodinger-type (imaginary time) evolution of consistency distributions.

With ``Q = g^-1`` the evolution is

    psi_t = 1/(2 Delta t) d_i d_j (Q_ij psi) - d_k (K_k psi) + W psi

    K_k = Q_kj M_j + (1/Delta t) 1/2 |g|^-1/2 d_j (|g|^1/2 Q_kj)
    W   = 1/2 |g|^-1/2 d_k (|g|^1/2 Q_kl M_l) + Delta t (-phi/2 + M^T Q M / 2)

and the scalar curvature term vanishes in the supported cases (one dimension,
or constant metric). For the harmonic benchmark this is the imaginary-time
oscillator ``psi_t = psi''/(2 Delta t) - Delta t kappa^2 u^2 psi / 2`` whose
ground state has variance ``1/(Delta t kappa)`` and decays like ``exp(-kappa t/2)``.

Spatial derivatives are second-order central differences, time stepping is
explicit Euler and the boundary is absorbing (``psi = 0``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, StabilityError, UnsupportedCurvatureError
from .geometry import check_metric_batch
from .transfer import ConsistencyField, build_transfer, gaussian_field, propagate, steady_state


@dataclass
class PdeCoefficients:
    """Coefficient fields on the grid, stored split by their power of Delta t.

    ``Kdrift(dt) = K_flow + K_metric / dt`` and ``V(dt) = V_div + dt * V_pot``.
    """

    grid: object
    Q: np.ndarray
    K_flow: np.ndarray
    K_metric: np.ndarray
    V_div: np.ndarray
    V_pot: np.ndarray
    R_scalar: np.ndarray
    notes: list = field(default_factory=list)

    def Kdrift(self, delta_t):
        return self.K_flow + self.K_metric / delta_t

    def V(self, delta_t):
        return self.V_div + delta_t * self.V_pot


def _grad(arr, grid, axis):
    """Central difference along a grid axis for arrays shaped ``grid.shape + (...)``."""
    return np.gradient(arr, grid.spacing[axis], axis=axis, edge_order=2)


def graham_coefficients(provider, grid, const_tol=1e-12):
    """Evaluate the evolution coefficients from the provider's geometry.

    Raises ``UnsupportedCurvatureError`` for ``m >= 2`` with a non-constant
    metric, where the curvature term would be needed.
    """
    if provider.m != grid.dim:
        raise InvalidParameterError("provider and grid dimensions differ")
    nodes = grid.nodes()
    g, M, phi = provider.fields(nodes)
    check_metric_batch(g, nodes)
    m = grid.dim
    constant = np.max(np.abs(g - g[0])) <= const_tol * max(1.0, np.max(np.abs(g)))
    if m >= 2 and not constant:
        raise UnsupportedCurvatureError(
            "non-constant metric in two or more dimensions needs the curvature term; "
            "only one-dimensional or constant-metric geometries are supported")
    Q = np.linalg.inv(g)
    K_flow = np.einsum("nij,nj->ni", Q, M)
    sqrt_det = np.sqrt(np.linalg.det(g))
    shp = grid.shape
    Qs = (sqrt_det[:, None, None] * Q).reshape(shp + (m, m))
    Ks = (sqrt_det[:, None] * K_flow).reshape(shp + (m,))
    K_metric = np.zeros((nodes.shape[0], m))
    div = np.zeros(nodes.shape[0])
    if not constant:
        for j in range(m):
            K_metric += _grad(Qs[..., :, j], grid, j).reshape(-1, m)
        K_metric *= 0.5 / sqrt_det[:, None]
    for k in range(m):
        div += _grad(Ks[..., k], grid, k).ravel()
    V_div = 0.5 * div / sqrt_det
    V_pot = -0.5 * phi + 0.5 * np.einsum("ni,ni->n", M, K_flow)
    note = "curvature term omitted: " + ("one-dimensional manifold" if m == 1 else "constant metric")
    return PdeCoefficients(grid, Q, K_flow, K_metric, V_div, V_pot, np.zeros(nodes.shape[0]), [note])


def stable_dt(coeffs, delta_t, safety=1.0):
    """Largest explicit step allowed by the diffusion, advection and reaction limits."""
    grid = coeffs.grid
    h = np.array(grid.spacing)
    diag = np.einsum("nii->ni", coeffs.Q)
    bound_diff = delta_t / (2 * np.max(np.sum(diag / h ** 2, axis=1)))
    K = coeffs.Kdrift(delta_t)
    adv = np.max(np.sum(np.abs(K) / h, axis=1))
    W = np.max(np.abs(coeffs.V(delta_t)))
    bounds = [bound_diff]
    if adv > 0:
        bounds.append(1.0 / adv)
    if W > 0:
        bounds.append(0.5 / W)
    return safety * min(bounds)


def _rhs(psi, QF, K, W, grid, delta_t):
    m = grid.dim
    h = grid.spacing
    shp = grid.shape
    p = psi.reshape(shp)
    out = np.zeros(shp)
    inner = tuple(slice(1, -1) for _ in range(m))
    for i in range(m):
        for j in range(m):
            F = QF[..., i, j] * p
            if i == j:
                sl_p = list(inner)
                sl_m = list(inner)
                sl_p[i] = slice(2, None)
                sl_m[i] = slice(None, -2)
                d2 = (F[tuple(sl_p)] - 2 * F[inner] + F[tuple(sl_m)]) / h[i] ** 2
            else:
                def sh(a, b):
                    s = list(inner)
                    s[i] = slice(1 + a, shp[i] - 1 + a)
                    s[j] = slice(1 + b, shp[j] - 1 + b)
                    return tuple(s)
                d2 = (F[sh(1, 1)] - F[sh(1, -1)] - F[sh(-1, 1)] + F[sh(-1, -1)]) / (4 * h[i] * h[j])
            out[inner] += d2 / (2 * delta_t)
    for k in range(m):
        F = K[..., k] * p
        sl_p = list(inner)
        sl_m = list(inner)
        sl_p[k] = slice(2, None)
        sl_m[k] = slice(None, -2)
        out[inner] -= (F[tuple(sl_p)] - F[tuple(sl_m)]) / (2 * h[k])
    out[inner] += W[inner] * p[inner]
    return out.ravel()


def _zero_boundary(v, grid):
    v = v.reshape(grid.shape)
    for d in range(grid.dim):
        idx = [slice(None)] * grid.dim
        idx[d] = 0
        v[tuple(idx)] = 0.0
        idx[d] = -1
        v[tuple(idx)] = 0.0
    return v.ravel()


def evolve_pde(coeffs, psi0, T, dt_pde, delta_t, snapshots=None):
    """Explicit evolution of ``psi0`` to time ``T``.

    The step is shrunk so an integer number of steps lands on ``T`` (and on
    each snapshot time). Raises ``StabilityError`` with a suggested step if
    ``dt_pde`` violates the explicit stability bound.

    Returns
    -------
    ConsistencyField, or a list of fields at ``snapshots`` if given.
    """
    if not (T >= 0 and dt_pde > 0 and delta_t > 0):
        raise InvalidParameterError("T >= 0, dt_pde > 0 and delta_t > 0 required")
    grid = coeffs.grid
    if psi0.grid != grid:
        raise InvalidParameterError("initial field lives on a different grid")
    limit = stable_dt(coeffs, delta_t)
    if dt_pde > limit:
        raise StabilityError(f"dt_pde={dt_pde:.3g} exceeds the explicit stability bound {limit:.3g}",
                             suggested_dt=0.9 * limit)
    shp = grid.shape
    m = grid.dim
    QF = coeffs.Q.reshape(shp + (m, m))
    K = coeffs.Kdrift(delta_t).reshape(shp + (m,))
    W = coeffs.V(delta_t).reshape(shp)
    times = [T] if snapshots is None else sorted(snapshots)
    v = _zero_boundary(psi0.values.copy(), grid)
    t = 0.0
    out = []
    for target in times:
        span = target - t
        n = int(np.ceil(span / dt_pde - 1e-9)) if span > 0 else 0
        if n:
            h = span / n
            for _ in range(n):
                v = v + h * _rhs(v, QF, K, W, grid, delta_t)
                v = _zero_boundary(v, grid)
        t = target
        out.append(ConsistencyField(grid, np.maximum(v, 0.0)))
    return out[0] if snapshots is None else out


def pde_decay_rate(coeffs, delta_t, dt_pde, settle=10.0, window=1.0, psi0=None):
    """Per-unit-time mass ratio after the evolution has relaxed to its ground state."""
    grid = coeffs.grid
    if psi0 is None:
        psi0 = gaussian_field(grid, np.zeros(grid.dim), np.eye(grid.dim))
    a, b = evolve_pde(coeffs, psi0, settle + window, dt_pde, delta_t, snapshots=[settle, settle + window])
    return (b.mass() / a.mass()) ** (1.0 / window), b.normalized()


@dataclass
class PdeComparison:
    n_subs: list
    sub_dts: np.ndarray
    l1_gaps: np.ndarray
    order: float
    pde_rate: float
    transfer_rate: float
    rate_rel_error: float


def empirical_order(steps, errors):
    """Least-squares slope of ``log(error)`` against ``log(step)``."""
    return float(np.polyfit(np.log(steps), np.log(errors), 1)[0])


def compare_transfer_pde(provider, grid, delta_t, psi0, T, n_subs=(10, 20, 40), dt_pde=None,
                         steady_n_sub=50, w_rev=1.0):
    """L1 gap between transfer and PDE evolution versus sub-step size, and decay rates."""
    if abs(T / delta_t - round(T / delta_t)) > 1e-9:
        raise InvalidParameterError("T must be a whole number of Delta t steps")
    coeffs = graham_coefficients(provider, grid)
    if dt_pde is None:
        dt_pde = 0.5 * stable_dt(coeffs, delta_t)
    ref = evolve_pde(coeffs, psi0, T, dt_pde, delta_t)
    gaps = []
    for n in n_subs:
        op = build_transfer(provider, grid, delta_t, n, w_rev)
        gaps.append(propagate(op, psi0, int(round(T / delta_t))).l1_distance(ref))
    sub_dts = delta_t / np.asarray(n_subs, dtype=float)
    order = empirical_order(sub_dts, gaps)
    rate, _ = pde_decay_rate(coeffs, delta_t, dt_pde)
    ss = steady_state(build_transfer(provider, grid, delta_t, steady_n_sub, w_rev))
    tr = ss.rate_per_unit_time
    return PdeComparison(list(n_subs), sub_dts, np.asarray(gaps), order, float(rate), tr,
                         float(abs(rate - tr) / tr))
