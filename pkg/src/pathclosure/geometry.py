"""
Local geometry of the trial-density manifold.

At a point ``lam`` the information-loss Lagrangian needs

    a     = <A>                         (Legendre-dual coordinates)
    g     = Cov(A)                      (Fisher metric)
    M     = <LA>                        (reversible drift numerator)
    kmat  = <LA LA^T>
    h     = <(A - a) LA^T>
    phi   = lam^T kmat lam

all expectations under the trial density. Providers compute these by closed
form (Gaussian moment formulas), by Monte Carlo over exact trial draws, from a
precomputed table, or from a prescribed linear-Gaussian surrogate.

Providers expose two entry points: ``geometry_at`` returns a full
``GeometryPoint``; ``fields`` returns ``(g, M, phi)`` for a batch of points and
is what the path, transfer and PDE code call in their inner loops.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import DegenerateGeometryError, InvalidParameterError, ProviderInconsistencyError
from .moments import quadratic_form_moments

N_BATCHES = 20


@dataclass(frozen=True)
class TrialCoordinates:
    lam: np.ndarray
    beta: float = 1.0

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        object.__setattr__(self, "lam", lam)
        if not np.all(np.isfinite(lam)):
            raise InvalidParameterError("lambda must be finite")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise InvalidParameterError("beta must be positive")


@dataclass
class GeometryPoint:
    lam: np.ndarray
    a: np.ndarray
    g: np.ndarray
    M: np.ndarray
    kmat: np.ndarray
    h: np.ndarray
    phi: float
    se: dict | None = None
    provenance: str = "closed"

    @property
    def m(self):
        return self.lam.size

    @property
    def g_inv(self):
        return np.linalg.inv(self.g)

    @property
    def reversible_velocity(self):
        return np.linalg.solve(self.g, self.M)

    @property
    def m_ginv_m(self):
        return float(self.M @ np.linalg.solve(self.g, self.M))

    def reversible_gap(self, nsigma=3.0):
        """``phi - M^T g^-1 M`` and its tolerance.

        The tolerance is ``nsigma`` standard errors of the gap itself for
        Monte Carlo points (``se["rev"]``, which accounts for the sampling
        error of ``phi``, ``M`` and ``g`` together) and a scaled 1e-12 for
        closed-form points.
        """
        gap = self.phi - self.m_ginv_m
        floor = 1e-12 * max(1.0, abs(self.phi), self.m_ginv_m)
        if self.se is None:
            return float(gap), floor
        if "rev" in self.se:
            se = self.se["rev"]
        else:
            v = self.reversible_velocity
            se = np.sqrt(self.se["phi"] ** 2 + np.sum((2 * v * self.se["M"]) ** 2))
        return float(gap), float(max(nsigma * se, floor))

    def invariant_violations(self):
        """Names of violated invariants (empty when all hold).

        Closed-form points use an absolute slack of 1e-12 (scaled); Monte Carlo
        points use three combined standard errors.
        """
        bad = []
        if np.linalg.eigvalsh(self.g)[0] <= 0:
            bad.append("g not positive definite")
        scale = max(1.0, abs(self.phi), self.m_ginv_m)
        _, tol_phi = self.reversible_gap()
        if self.se is None:
            tol_order1 = 1e-12 * scale
        else:
            tol_order1 = max(3 * self.se["lamM"], 1e-12 * scale)
        if self.phi < -tol_phi:
            bad.append("phi < 0")
        if self.phi - self.m_ginv_m < -tol_phi:
            bad.append("phi < M^T g^-1 M")
        if abs(self.lam @ self.M) > tol_order1:
            bad.append("lam^T M != 0")
        return bad


def check_metric(g, lam=None, ratio=1e-10):
    """Raise ``DegenerateGeometryError`` if ``g`` is numerically singular."""
    w, v = np.linalg.eigh(0.5 * (g + g.T))
    if w[-1] <= 0 or w[0] < ratio * w[-1]:
        where = "" if lam is None else f" at lambda={np.round(lam, 6).tolist()}"
        raise DegenerateGeometryError(
            f"degenerate Fisher metric{where}: eigenvalues {w.tolist()}, "
            f"offending direction {np.round(v[:, 0], 6).tolist()}",
            direction=v[:, 0],
        )


def check_metric_batch(g, lams=None, ratio=1e-10):
    w = np.linalg.eigvalsh(0.5 * (g + np.swapaxes(g, -1, -2)))
    bad = (w[..., -1] <= 0) | (w[..., 0] < ratio * w[..., -1])
    if np.any(bad):
        i = int(np.flatnonzero(bad.ravel())[0])
        check_metric(g.reshape(-1, *g.shape[-2:])[i], None if lams is None else lams.reshape(-1, lams.shape[-1])[i], ratio)


class GeometryProvider:
    """Maps manifold coordinates to local geometry."""

    m: int
    beta: float = 1.0
    name = "provider"
    quadratic_phi = False

    def geometry_at(self, lam) -> GeometryPoint:
        raise NotImplementedError

    def fields(self, lams):
        """Return ``(g, M, phi)`` with shapes ``(n, m, m)``, ``(n, m)``, ``(n,)``."""
        lams = np.atleast_2d(np.asarray(lams, dtype=float))
        pts = [self.geometry_at(l) for l in lams]
        return (np.array([p.g for p in pts]), np.array([p.M for p in pts]),
                np.array([p.phi for p in pts]))

    def _coords(self, lam):
        if isinstance(lam, TrialCoordinates):
            if not np.isclose(lam.beta, self.beta):
                raise InvalidParameterError(
                    f"provider is fixed at beta={self.beta}, got coordinates with beta={lam.beta}")
            lam = lam.lam
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if lam.shape != (self.m,):
            raise InvalidParameterError(f"expected {self.m} coordinates, got shape {lam.shape}")
        if not np.all(np.isfinite(lam)):
            raise InvalidParameterError("lambda must be finite")
        return lam


def geometry_at(provider, lam) -> GeometryPoint:
    """Evaluate and validate the geometry at ``lam``.

    Raises ``DegenerateGeometryError`` for a singular metric and
    ``ProviderInconsistencyError`` if an invariant fails beyond tolerance.
    """
    point = provider.geometry_at(lam)
    check_metric(point.g, point.lam)
    bad = point.invariant_violations()
    if bad:
        raise ProviderInconsistencyError(f"{provider.name} at {point.lam.tolist()}: {', '.join(bad)}")
    return point


class ClosedFormProvider(GeometryProvider):
    """Exact moments for models whose ``A`` is linear and ``LA`` at most quadratic."""

    quadratic_phi = False

    def __init__(self, model, beta=1.0):
        if not beta > 0:
            raise InvalidParameterError("beta must be positive")
        self.model = model
        self.beta = float(beta)
        self.m = model.m
        self.name = f"closed[{model.name}]"
        self._S = model.resolved_matrix()
        self._B, self._c = model.liouville_quadratic()
        self._cov = model.trial_cov(self.beta)
        self._g = self._S @ self._cov @ self._S.T
        self.quadratic_phi = not np.any(self._B)

    def _moments(self, lams):
        mean = self.model.trial_mean(lams, self.beta)
        M, kmat, cross = quadratic_form_moments(mean, self._cov, self._B, self._c)
        kmat = 0.5 * (kmat + np.swapaxes(kmat, -1, -2))
        h = np.einsum("ia,...aj->...ij", self._S, cross)
        a = mean @ self._S.T
        phi = np.einsum("...i,...ij,...j->...", lams, kmat, lams)
        return a, M, kmat, h, phi

    def geometry_at(self, lam):
        lam = self._coords(lam)
        a, M, kmat, h, phi = self._moments(lam)
        return GeometryPoint(lam, a, self._g.copy(), M, kmat, h, float(phi), None, "closed")

    def fields(self, lams):
        lams = np.atleast_2d(np.asarray(lams, dtype=float))
        _, M, _, _, phi = self._moments(lams)
        g = np.broadcast_to(self._g, (lams.shape[0],) + self._g.shape).copy()
        return g, M, phi


def _batch_se(values, batches=N_BATCHES):
    """Standard error of the mean by non-overlapping batch means (axis 0)."""
    n = values.shape[0]
    size = n // batches
    if size < 1:
        raise InvalidParameterError(f"need at least {batches} samples for batch means")
    trimmed = values[: size * batches].reshape((batches, size) + values.shape[1:])
    return trimmed.mean(axis=1).std(axis=0, ddof=1) / np.sqrt(batches)


def mean_and_se(values, batches=N_BATCHES):
    values = np.asarray(values, dtype=float)
    return values.mean(axis=0), _batch_se(values, batches)


class MonteCarloProvider(GeometryProvider):
    """Sample moments over exact trial draws; the same seed is reused at every point."""

    def __init__(self, model, beta=1.0, count=100_000, seed=0, batches=N_BATCHES):
        if count < batches:
            raise InvalidParameterError("count must be at least the number of batches")
        self.model = model
        self.beta = float(beta)
        self.count = int(count)
        self.seed = seed
        self.batches = batches
        self.m = model.m
        self.name = f"montecarlo[{model.name}]"
        self._z = model.standard_normals(self.count, seed)

    def samples(self, lam):
        return self.model.transform_normals(self._z, lam, self.beta)

    def geometry_at(self, lam):
        lam = self._coords(lam)
        x = self.samples(lam)
        A = self.model.resolved(x)
        LA = self.model.liouville(x)
        a, se_a = mean_and_se(A, self.batches)
        dA = A - a
        outer_g = dA[:, :, None] * dA[:, None, :]
        g, se_g = mean_and_se(outer_g, self.batches)
        g = 0.5 * (g + g.T)
        M, se_M = mean_and_se(LA, self.batches)
        kmat, se_k = mean_and_se(LA[:, :, None] * LA[:, None, :], self.batches)
        kmat = 0.5 * (kmat + kmat.T)
        h, se_h = mean_and_se(dA[:, :, None] * LA[:, None, :], self.batches)
        y = LA @ lam
        phi, se_phi = mean_and_se(y * y, self.batches)
        _, se_lamM = mean_and_se(y, self.batches)
        # phi - M^T g^-1 M is the minimum over u of phi - 2 u.M + u^T g u, so with
        # u frozen at g^-1 M these per-sample terms carry its first-order error
        v = np.linalg.solve(g, M)
        _, se_rev = mean_and_se(y * y - 2 * (LA @ v) + (dA @ v) ** 2, self.batches)
        se = {"a": se_a, "g": se_g, "M": se_M, "kmat": se_k, "h": se_h,
              "phi": float(se_phi), "lamM": float(se_lamM), "rev": float(se_rev)}
        return GeometryPoint(lam, a, g, M, kmat, h, float(phi), se, "montecarlo")


class LinearSurrogateProvider(GeometryProvider):
    """Prescribed geometry ``g`` constant, ``M = A_M lam``, ``phi = lam^T Phi2 lam``.

    ``A_M`` must be antisymmetric, which keeps ``lam^T M = 0`` and
    ``M = -h lam`` with ``h = -A_M``; ``Phi2 - A_M^T g^-1 A_M`` must be positive
    semidefinite so that IL_rev >= 0.
    """

    quadratic_phi = True

    def __init__(self, g, A_M, Phi2, name="linear", beta=1.0):
        self.g = np.atleast_2d(np.asarray(g, dtype=float))
        self.A_M = np.atleast_2d(np.asarray(A_M, dtype=float))
        self.Phi2 = np.atleast_2d(np.asarray(Phi2, dtype=float))
        self.m = self.g.shape[0]
        self.name = name
        self.beta = beta
        if self.A_M.shape != (self.m, self.m) or self.Phi2.shape != (self.m, self.m):
            raise InvalidParameterError("g, A_M and Phi2 must share shape (m, m)")
        if not np.allclose(self.A_M, -self.A_M.T):
            raise InvalidParameterError("A_M must be antisymmetric")
        check_metric(self.g)
        if not np.allclose(self.Phi2, self.Phi2.T):
            raise InvalidParameterError("Phi2 must be symmetric")
        il_rev = self.Phi2 - self.A_M.T @ np.linalg.solve(self.g, self.A_M)
        if np.linalg.eigvalsh(0.5 * (il_rev + il_rev.T))[0] < -1e-12:
            raise ProviderInconsistencyError("Phi2 - A_M^T g^-1 A_M must be positive semidefinite")

    def geometry_at(self, lam):
        lam = self._coords(lam)
        M = self.A_M @ lam
        return GeometryPoint(lam, self.g @ lam, self.g.copy(), M, self.Phi2.copy(),
                             -self.A_M.copy(), float(lam @ self.Phi2 @ lam), None, self.name)

    def fields(self, lams):
        lams = np.atleast_2d(np.asarray(lams, dtype=float))
        n = lams.shape[0]
        g = np.broadcast_to(self.g, (n, self.m, self.m)).copy()
        M = lams @ self.A_M.T
        phi = np.einsum("ni,ij,nj->n", lams, self.Phi2, lams)
        return g, M, phi


def harmonic_surrogate(kappa=1.0):
    """One-dimensional exactly solvable geometry: ``g = 1, M = 0, phi = kappa^2 u^2``."""
    if not kappa > 0:
        raise InvalidParameterError("kappa must be positive")
    return LinearSurrogateProvider([[1.0]], [[0.0]], [[kappa ** 2]], name=f"harmonic[kappa={kappa}]")


def free_surrogate(m=1):
    """Pure Wiener geometry: ``g = I, M = 0, phi = 0`` (no confinement)."""
    return LinearSurrogateProvider(np.eye(m), np.zeros((m, m)), np.zeros((m, m)), name="free")


def rotation_surrogate(kappa=1.0, omega=1.0):
    """Damped rotation in two dimensions.

    ``g = I``, ``M = omega J lam`` and ``phi = (kappa^2 + omega^2)|lam|^2`` so
    that IL_rev is ``kappa^2 |lam|^2`` times ``Delta t^2 / 2``.
    """
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return LinearSurrogateProvider(np.eye(2), omega * J, (kappa ** 2 + omega ** 2) * np.eye(2),
                                   name=f"rotation[kappa={kappa},omega={omega}]")


class TabulatedProvider(GeometryProvider):
    """Multilinear interpolation of a base provider over a rectangular grid.

    ``g`` is interpolated entrywise and re-symmetrized.
    """

    def __init__(self, base, axes):
        self.base = base
        self.m = base.m
        self.beta = getattr(base, "beta", 1.0)
        self.name = f"tabulated[{base.name}]"
        self.axes = [np.asarray(ax, dtype=float) for ax in axes]
        if len(self.axes) != self.m:
            raise InvalidParameterError("one axis per manifold coordinate is required")
        mesh = np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)
        shape = mesh.shape[:-1]
        pts = [base.geometry_at(l) for l in mesh.reshape(-1, self.m)]
        m = self.m
        table = {
            "a": np.array([p.a for p in pts]).reshape(shape + (m,)),
            "g": np.array([p.g for p in pts]).reshape(shape + (m, m)),
            "M": np.array([p.M for p in pts]).reshape(shape + (m,)),
            "kmat": np.array([p.kmat for p in pts]).reshape(shape + (m, m)),
            "h": np.array([p.h for p in pts]).reshape(shape + (m, m)),
            "phi": np.array([p.phi for p in pts]).reshape(shape),
        }
        self._interp = {k: RegularGridInterpolator(self.axes, v, method="linear") for k, v in table.items()}

    def _eval(self, key, lams):
        return self._interp[key](lams)

    def geometry_at(self, lam):
        lam = self._coords(lam)
        q = lam[None, :]
        g = self._eval("g", q)[0]
        g = 0.5 * (g + g.T)
        kmat = self._eval("kmat", q)[0]
        return GeometryPoint(lam, self._eval("a", q)[0], g, self._eval("M", q)[0],
                             0.5 * (kmat + kmat.T), self._eval("h", q)[0],
                             float(self._eval("phi", q)[0]), None, "tabulated")

    def fields(self, lams):
        lams = np.atleast_2d(np.asarray(lams, dtype=float))
        g = self._eval("g", lams)
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        return g, self._eval("M", lams), self._eval("phi", lams)


# ---------------------------------------------------------------------------
# Liouville residual and identity checks
# ---------------------------------------------------------------------------

def liouville_residual_samples(model, lam, lam_dot, count, seed, beta=1.0):
    """Draw ``R = lam_dot . (A - a) + lam . LA`` on exact trial samples.

    ``a`` is the exact trial mean of ``A``.
    """
    lam = np.asarray(lam, dtype=float)
    lam_dot = np.asarray(lam_dot, dtype=float)
    x = model.sample_trial(lam, beta, count, seed)
    a = model.trial_mean(lam, beta) @ model.resolved_matrix().T
    return (model.resolved(x) - a) @ lam_dot + model.liouville(x) @ lam


@dataclass
class IdentityCheck:
    name: str
    index: str
    mean: float
    se: float
    passed: bool


@dataclass
class IdentityReport:
    model: str
    lam: np.ndarray
    count: int
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, name, values, nsigma=3.0, slack=1e-10):
        """Record checks that per-sample ``values`` have zero mean."""
        mean, se = mean_and_se(values)
        mean, se = np.atleast_1d(mean), np.atleast_1d(se)
        scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
        for idx in np.ndindex(mean.shape):
            ok = abs(mean[idx]) <= nsigma * se[idx] + slack * scale
            label = ",".join(str(i + 1) for i in idx) if mean.shape != (1,) or values.ndim > 1 else ""
            self.checks.append(IdentityCheck(name, label, float(mean[idx]), float(se[idx]), bool(ok)))

    def failures(self):
        return [c for c in self.checks if not c.passed]


def identity_suite(model, lam, beta=1.0, count=100_000, seed=0, lam_dot=None, lam_ddot=None,
                   fd_step=1e-3, time_step=1e-3):
    """Monte Carlo check of the exponential-family Liouville identities at ``lam``.

    Every identity is turned into a per-sample quantity whose expectation
    vanishes; each is judged by a three-standard-error criterion (batch means).

    Checks: ``<R> = 0``; ``lam . <LA> = 0``; ``M_i = -h_ij lam_j``;
    ``<L^2 A_j> = -lam_i <LA_i LA_j>``; ``dM_i/dlam_j = h_ji`` (central
    difference in lambda on common random numbers); and
    ``<(T + L) R> = -<R^2>`` along ``lam(t) = lam + t lam_dot + t^2 lam_ddot / 2``
    with ``T R`` by a central difference in time.
    """
    if count < 10_000:
        raise InvalidParameterError("identity_suite needs count >= 1e4")
    lam = np.asarray(lam, dtype=float)
    m = model.m
    rng = np.random.default_rng([seed, 7])
    if lam_dot is None:
        lam_dot = rng.uniform(-0.5, 0.5, m)
    if lam_ddot is None:
        lam_ddot = rng.uniform(-0.5, 0.5, m)
    lam_dot = np.asarray(lam_dot, dtype=float)
    lam_ddot = np.asarray(lam_ddot, dtype=float)

    S = model.resolved_matrix()
    z = model.standard_normals(count, seed)
    x = model.transform_normals(z, lam, beta)
    A = model.resolved(x)
    LA = model.liouville(x)
    a = model.trial_mean(lam, beta) @ S.T
    dA = A - a
    y = LA @ lam

    report = IdentityReport(model=getattr(model, "name", "model"), lam=lam, count=count)
    R = dA @ lam_dot + y
    report.add("<R>=0", R)
    report.add("lam.<LA>=0", y)
    # M_i + h_ij lam_j = < LA_i + (A_i - a_i)(lam . LA) >
    report.add("M=-h.lam", LA + dA * y[:, None])
    L2A = model.liouville2(x)
    report.add("<L2A>=-kmat.lam", L2A + LA * y[:, None])

    # dM_i/dlam_j - h_ji on common random numbers
    diffs = np.empty((count, m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = fd_step
        lp = model.liouville(model.transform_normals(z, lam + e, beta))
        lm = model.liouville(model.transform_normals(z, lam - e, beta))
        diffs[:, :, j] = (lp - lm) / (2 * fd_step) - LA * dA[:, j:j + 1]
    report.add("dM/dlam=h^T", diffs)

    # <(T + L) R> + <R^2> along a prescribed path through lam at t = 0
    def residual_at(t):
        lt = lam + t * lam_dot + 0.5 * t * t * lam_ddot
        vt = lam_dot + t * lam_ddot
        at = model.trial_mean(lt, beta) @ S.T
        return (A - at) @ vt + LA @ lt

    TR = (residual_at(time_step) - residual_at(-time_step)) / (2 * time_step)
    LR = LA @ lam_dot + L2A @ lam
    report.add("<(T+L)R>=-<R2>", TR + LR + R * R)
    return report
