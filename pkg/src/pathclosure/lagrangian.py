"""
Information-loss Lagrangian, its reversible/irreversible split, the discrete
path action, the Freidlin-Wentzell Hamiltonian and Hamilton-Jacobi residuals.

With ``v = g^-1 M`` the Lagrangian at weight ``w_rev`` is

    L = 1/2 (lam_dot - v)^T g (lam_dot - v) + w_rev/2 (phi - M^T g^-1 M)

which equals ``1/2 (lam_dot^T g lam_dot - 2 lam_dot^T M + phi)`` at ``w_rev = 1``.
The path action is ``Delta t * int L dt``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .geometry import GeometryProvider, check_metric, check_metric_batch


@dataclass(frozen=True)
class LagrangianContext:
    provider: GeometryProvider
    delta_t: float = 1.0
    w_rev: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.delta_t) and self.delta_t > 0):
            raise InvalidParameterError("delta_t must be positive")
        if not (np.isfinite(self.w_rev) and self.w_rev >= 0):
            raise InvalidParameterError("w_rev must be non-negative")

    @property
    def m(self):
        return self.provider.m


@dataclass
class Path:
    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        self.points = pts
        if self.times.ndim != 1 or self.times.size != pts.shape[0]:
            raise InvalidParameterError("times and points must have matching length")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidParameterError("path times must be strictly increasing")
        if not np.all(np.isfinite(pts)):
            raise InvalidParameterError("path points must be finite")

    @property
    def n_nodes(self):
        return self.times.size

    def __call__(self, t):
        """Linear interpolation of each coordinate at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        out = np.stack([np.interp(t, self.times, self.points[:, i]) for i in range(self.points.shape[1])], axis=-1)
        return out


def _local(ctx, lam):
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    g, M, phi = ctx.provider.fields(lam[None, :])
    check_metric(g[0], lam)
    return g[0], M[0], float(phi[0])


def _pieces(g, M, phi, lam_dot):
    """Batched ``(il_irr, il_rev)`` without the ``Delta t^2/2`` factor, doubled."""
    v = np.linalg.solve(g, M[..., None])[..., 0]
    mgm = np.einsum("...i,...i->...", M, v)
    dv = lam_dot - v
    irr = np.einsum("...i,...ij,...j->...", dv, g, dv)
    return irr, phi - mgm


def lagrangian_value(ctx, lam, lam_dot):
    """Information-loss Lagrangian at ``(lam, lam_dot)``."""
    g, M, phi = _local(ctx, lam)
    irr, rev = _pieces(g, M, phi, np.atleast_1d(np.asarray(lam_dot, dtype=float)))
    return float(0.5 * irr + 0.5 * ctx.w_rev * rev)


def lagrangian_batch(ctx, lams, lam_dots):
    lams = np.atleast_2d(np.asarray(lams, dtype=float))
    lam_dots = np.atleast_2d(np.asarray(lam_dots, dtype=float))
    g, M, phi = ctx.provider.fields(lams)
    check_metric_batch(g, lams)
    irr, rev = _pieces(g, M, phi, lam_dots)
    return 0.5 * irr + 0.5 * ctx.w_rev * rev


def il_decompose(ctx, lam, lam_dot):
    """Return ``(il, il_rev, il_irr)``.

    ``il_rev = (Delta t^2/2)(phi - M^T g^-1 M)`` and
    ``il_irr = (Delta t^2/2)(lam_dot - g^-1 M)^T g (lam_dot - g^-1 M)``; ``il`` is
    their sum. None of the three depend on ``w_rev``.
    """
    g, M, phi = _local(ctx, lam)
    irr, rev = _pieces(g, M, phi, np.atleast_1d(np.asarray(lam_dot, dtype=float)))
    c = 0.5 * ctx.delta_t ** 2
    il_rev, il_irr = float(c * rev), float(c * irr)
    return il_rev + il_irr, il_rev, il_irr


def il_direct(ctx, lam, lam_dot):
    """``(Delta t^2/2)(lam_dot^T g lam_dot - 2 lam_dot^T M + phi)`` without the split."""
    g, M, phi = _local(ctx, lam)
    lam_dot = np.atleast_1d(np.asarray(lam_dot, dtype=float))
    return float(0.5 * ctx.delta_t ** 2 * (lam_dot @ g @ lam_dot - 2 * lam_dot @ M + phi))


def decomposition_audit(ctx, inputs, seed, scale=1.0):
    """Largest relative gap between ``il`` and ``il_direct`` over random inputs.

    ``lam`` and ``lam_dot`` are drawn standard normal times ``scale``.
    """
    if inputs < 1:
        raise InvalidParameterError("inputs must be positive")
    rng = np.random.default_rng(seed)
    m = ctx.provider.m
    worst = 0.0
    for _ in range(inputs):
        lam, dot = scale * rng.standard_normal(m), scale * rng.standard_normal(m)
        il, _, _ = il_decompose(ctx, lam, dot)
        ref = il_direct(ctx, lam, dot)
        worst = max(worst, abs(il - ref) / max(1.0, abs(ref)))
    return worst


def discrete_action(ctx, path):
    """Midpoint-rule action ``Delta t * sum_k dt_k L(lam_mid_k, dlam_k/dt_k)``."""
    if path.n_nodes < 2:
        raise InvalidParameterError("a path needs at least two nodes")
    dt = np.diff(path.times)
    vel = np.diff(path.points, axis=0) / dt[:, None]
    mid = 0.5 * (path.points[1:] + path.points[:-1])
    return float(ctx.delta_t * np.sum(dt * lagrangian_batch(ctx, mid, vel)))


def fw_hamiltonian(ctx, p, lam):
    """``1/2 (p + M)^T g^-1 (p + M) - phi/2``."""
    g, M, phi = _local(ctx, lam)
    q = np.atleast_1d(np.asarray(p, dtype=float)) + M
    return float(0.5 * q @ np.linalg.solve(g, q) - 0.5 * phi)


def conjugate_momentum(ctx, lam, lam_dot):
    """``p = g lam_dot - M``, the Legendre partner of ``lam_dot`` at ``w_rev = 1``."""
    g, M, _ = _local(ctx, lam)
    return g @ np.atleast_1d(np.asarray(lam_dot, dtype=float)) - M


def hj_residual(ctx, f_grad, f_t, lam):
    """Hamilton-Jacobi residual ``H(grad f, lam) + f_t``."""
    return fw_hamiltonian(ctx, f_grad, lam) + float(f_t)
