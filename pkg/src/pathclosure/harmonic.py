"""
Closed forms for the exactly solvable one-dimensional benchmark.

The geometry is ``g = 1, M = 0, phi = kappa^2 u^2`` so the Lagrangian is
``(u_dot^2 + kappa^2 u^2)/2``. Extremals are combinations of ``exp(+-kappa t)``,
the extremal action is the textbook Euclidean-oscillator value, and the
consistency distribution started from a point is a Gaussian in the endpoint
whose maximum traces ``u0 sech(kappa t)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, OverflowGuardError
from .lagrangian import Path

OVERFLOW_LIMIT = 700.0


@dataclass(frozen=True)
class HarmonicSpec:
    kappa: float = 1.0
    u0: float = 1.0
    delta_t: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise InvalidParameterError("kappa must be positive")
        if not (np.isfinite(self.delta_t) and self.delta_t > 0):
            raise InvalidParameterError("delta_t must be positive")
        if not np.isfinite(self.u0):
            raise InvalidParameterError("u0 must be finite")


def _guard(spec, T, asymptotic):
    if not T > 0:
        raise InvalidParameterError("T must be positive")
    if spec.kappa * T >= OVERFLOW_LIMIT and not asymptotic:
        raise OverflowGuardError(
            f"kappa*T = {spec.kappa * T:g} >= {OVERFLOW_LIMIT:g} overflows the hyperbolic forms; "
            "pass asymptotic=True to use the exponentially scaled evaluation")


def _sinh_ratio(kappa, a, T):
    """``sinh(kappa a) / sinh(kappa T)`` for ``0 <= a <= T`` without overflow."""
    num = -np.expm1(-2 * kappa * a)
    den = -np.expm1(-2 * kappa * T)
    return np.exp(-kappa * (T - a)) * num / den


def extremal_closed(spec, uT, T, t, asymptotic=False):
    """Extremal path ``A e^{kappa t} + B e^{-kappa t}`` through ``(0, u0)`` and ``(T, uT)``.

    ``B = (u0 e^{kappa T} - uT) / (2 sinh(kappa T))`` and ``A = u0 - B``. With
    ``asymptotic=True`` the same function is evaluated in an exponentially
    scaled form that is safe for any ``kappa T``.
    """
    _guard(spec, T, asymptotic)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > T):
        raise InvalidParameterError("t must lie in [0, T]")
    k = spec.kappa
    if asymptotic:
        out = spec.u0 * _sinh_ratio(k, T - t, T) + uT * _sinh_ratio(k, t, T)
    else:
        B = 0.5 * (spec.u0 * np.exp(k * T) - uT) / np.sinh(k * T)
        A = spec.u0 - B
        out = A * np.exp(k * t) + B * np.exp(-k * t)
    return out if out.ndim else float(out)


def extremal_action_closed(spec, uT, T, asymptotic=False):
    """``(kappa/2)[coth(kappa T)(u0^2 + uT^2) - 2 u0 uT csch(kappa T)]``."""
    _guard(spec, T, asymptotic)
    k, u0 = spec.kappa, spec.u0
    uT = np.asarray(uT, dtype=float)
    x = k * T
    if asymptotic:
        e = np.exp(-2 * x)
        coth = (1 + e) / (1 - e)
        csch = 2 * np.exp(-x) / (1 - e)
    else:
        coth, csch = 1 / np.tanh(x), 1 / np.sinh(x)
    out = 0.5 * k * (coth * (u0 ** 2 + uT ** 2) - 2 * u0 * uT * csch)
    return out if out.ndim else float(out)


def thermo_path(spec, t):
    """Thermodynamical path ``u0 sech(kappa t)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidParameterError("t must be non-negative")
    out = spec.u0 / np.cosh(spec.kappa * t)
    return out if out.ndim else float(out)


def thermo_rate(spec, t):
    """Time-dependent dissipation ``u_dot = -kappa tanh(kappa t) u``."""
    t = np.asarray(t, dtype=float)
    return -spec.kappa * np.tanh(spec.kappa * t) * thermo_path(spec, t)


def kernel_params(spec, T, asymptotic=False):
    """Mean and precision of the Gaussian kernel in ``uT``."""
    _guard(spec, T, asymptotic)
    x = spec.kappa * T
    if asymptotic:
        e = np.exp(-2 * x)
        coth, sech = (1 + e) / (1 - e), 2 * np.exp(-x) / (1 + e)
    else:
        coth, sech = 1 / np.tanh(x), 1 / np.cosh(x)
    return spec.u0 * sech, spec.delta_t * spec.kappa * coth


def kernel_closed(spec, uT, T, asymptotic=False):
    """``exp(-Delta t S_e(u0, uT; T))`` normalized to unit integral over ``uT``."""
    mean, prec = kernel_params(spec, T, asymptotic)
    uT = np.asarray(uT, dtype=float)
    out = np.sqrt(prec / (2 * np.pi)) * np.exp(-0.5 * prec * (uT - mean) ** 2)
    return out if out.ndim else float(out)


def kernel_argmax(spec, T, asymptotic=False):
    return float(kernel_params(spec, T, asymptotic)[0])


def _uniform_times(start, stop, step):
    n = int(round((stop - start) / step))
    return start + step * np.arange(n + 1)


def restart_experiment(spec, t_restart, horizon, step=0.01):
    """Thermodynamical path from ``(0, u0)`` and the one relaunched at ``t_restart``.

    The relaunched path starts from the original's value at ``t_restart`` and
    again has zero slope there.

    Returns
    -------
    original, restarted : Path
    """
    if not 0 < t_restart < horizon:
        raise InvalidParameterError("need 0 < t_restart < horizon")
    t = _uniform_times(0.0, horizon, step)
    original = Path(t, thermo_path(spec, t))
    tr = _uniform_times(t_restart, horizon, step)
    u_r = thermo_path(spec, t_restart)
    restarted = Path(tr, u_r / np.cosh(spec.kappa * (tr - t_restart)))
    return original, restarted


def restart_value(spec, t_restart, t):
    """Value of the relaunched path at time ``t >= t_restart``."""
    return float(thermo_path(spec, t_restart) / np.cosh(spec.kappa * (t - t_restart)))


def fig2_restart_table(spec, t_restart, horizon, step=0.01):
    """Rows ``(t, u_original, u_restarted)``; NaN before the restart."""
    original, restarted = restart_experiment(spec, t_restart, horizon, step)
    u_r = np.full(original.times.size, np.nan)
    k0 = int(round(t_restart / step))
    u_r[k0:k0 + restarted.times.size] = restarted.points[:, 0]
    return np.column_stack([original.times, original.points[:, 0], u_r])


def fig2_weight_table(spec, times, u_grid):
    """Rows ``(T, uT, psi)`` of unit-mass kernel slices."""
    rows = []
    for T in times:
        rows.append(np.column_stack([np.full(len(u_grid), T), u_grid, kernel_closed(spec, u_grid, T)]))
    return np.vstack(rows)


def fig3_table(spec, T, step=0.01):
    """Rows ``(t, u_thermo, u_extremal)`` with the extremal ending on ``u0 sech(kappa T)``."""
    t = _uniform_times(0.0, T, step)
    t[-1] = T
    uT = thermo_path(spec, T)
    return np.column_stack([t, thermo_path(spec, t), extremal_closed(spec, uT, T, t)])
