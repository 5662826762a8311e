"""
Time-transfer operator acting on consistency distributions over a grid.

One sub-step of length ``dt = Delta t / n_sub`` maps ``psi`` to

    (K psi)(lam) = int N(kap) exp[-(Delta t / (2 dt)) (lam - kap - dt v)^T g (lam - kap - dt v)
                                  - w_rev (dt / Delta t) IL_rev(kap)] psi(kap) dkap

with ``v = g^-1 M`` and all geometry taken at the backward point ``kap``.
``N(kap) = (2 pi)^{-m/2} sqrt(det g) (Delta t / dt)^{m/2}`` makes the Gaussian
factor a probability density in ``lam``, so without absorption mass is
conserved. ``n_sub = 1`` is the single-step operator; ``n_sub`` sub-steps make
one full step of length ``Delta t``. Integrals use trapezoid weights, which are
folded into the columns of the dense sub-step matrix.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import GridMismatchError, InvalidParameterError, ProviderInconsistencyError
from .geometry import check_metric_batch

MIN_POINTS = 16


@dataclass(frozen=True)
class GridSpec:
    lower: tuple
    upper: tuple
    points: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lower))
        hi = tuple(float(x) for x in np.atleast_1d(self.upper))
        n = tuple(int(x) for x in np.atleast_1d(self.points))
        if not (len(lo) == len(hi) == len(n)):
            raise InvalidParameterError("lower, upper and points need one entry per dimension")
        if len(lo) not in (1, 2):
            raise InvalidParameterError("only one- and two-dimensional grids are supported")
        for a, b, k in zip(lo, hi, n):
            if not (np.isfinite(a) and np.isfinite(b) and a < b):
                raise InvalidParameterError("grid bounds must be finite with lower < upper")
            if k < MIN_POINTS:
                raise InvalidParameterError(f"need at least {MIN_POINTS} points per dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "points", n)

    @classmethod
    def from_spacing(cls, lower, upper, spacing):
        lower, upper = np.atleast_1d(lower), np.atleast_1d(upper)
        spacing = np.broadcast_to(np.atleast_1d(spacing), lower.shape)
        pts = [int(round((b - a) / h)) + 1 for a, b, h in zip(lower, upper, spacing)]
        return cls(tuple(lower), tuple(upper), tuple(pts))

    @property
    def dim(self):
        return len(self.points)

    @property
    def spacing(self):
        return tuple((b - a) / (k - 1) for a, b, k in zip(self.lower, self.upper, self.points))

    @property
    def axes(self):
        return [np.linspace(a, b, k) for a, b, k in zip(self.lower, self.upper, self.points)]

    @property
    def shape(self):
        return self.points

    @property
    def size(self):
        return int(np.prod(self.points))

    def nodes(self):
        """Node coordinates ``(size, dim)`` in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([x.ravel() for x in mesh], axis=-1)

    def weights(self):
        """Trapezoid quadrature weights per node."""
        ws = []
        for h, k in zip(self.spacing, self.points):
            w = np.full(k, h)
            w[[0, -1]] = 0.5 * h
            ws.append(w)
        out = ws[0]
        for w in ws[1:]:
            out = np.multiply.outer(out, w)
        return out.ravel()

    def central_mask(self, fraction=0.8):
        """Nodes inside the central box holding ``fraction`` of each axis."""
        mask = np.ones(self.shape, dtype=bool)
        for d, ax in enumerate(self.axes):
            mid = 0.5 * (ax[0] + ax[-1])
            half = 0.5 * fraction * (ax[-1] - ax[0])
            inside = np.abs(ax - mid) <= half + 1e-12
            shape = [1] * self.dim
            shape[d] = -1
            mask &= inside.reshape(shape)
        return mask.ravel()

    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for d in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[d] = 0
            mask[tuple(idx)] = True
            idx[d] = -1
            mask[tuple(idx)] = True
        return mask.ravel()


@dataclass
class ConsistencyField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != self.grid.size:
            raise GridMismatchError(f"field has {v.size} values, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("consistency field must be finite")
        if np.any(v < 0):
            raise InvalidParameterError("consistency field must be non-negative")
        self.values = v

    def mass(self):
        """L1 norm by trapezoid quadrature."""
        return float(self.grid.weights() @ self.values)

    def normalized(self):
        m = self.mass()
        if m <= 0:
            raise InvalidParameterError("cannot normalize a field with zero mass")
        return ConsistencyField(self.grid, self.values / m)

    def as_array(self):
        return self.values.reshape(self.grid.shape)

    def argmax(self, refine=True):
        """Grid argmax, refined per axis by a parabola through log values."""
        arr = self.as_array()
        idx = np.unravel_index(int(np.argmax(arr)), arr.shape)
        point = np.array([ax[i] for ax, i in zip(self.grid.axes, idx)])
        if not refine:
            return point
        for d in range(self.grid.dim):
            i = idx[d]
            if i == 0 or i == arr.shape[d] - 1:
                continue
            lo, hi = list(idx), list(idx)
            lo[d], hi[d] = i - 1, i + 1
            vals = np.array([arr[tuple(lo)], arr[idx], arr[tuple(hi)]])
            if np.any(vals <= 0):
                continue
            fm, f0, fp = np.log(vals)
            denom = fm - 2 * f0 + fp
            if denom < 0:
                point[d] += 0.5 * (fm - fp) / denom * self.grid.spacing[d]
        return point

    def moments(self):
        """Mean vector and covariance matrix of the normalized field."""
        w = self.grid.weights() * self.values
        w = w / w.sum()
        x = self.grid.nodes()
        mean = w @ x
        d = x - mean
        return mean, (d * w[:, None]).T @ d

    def l1_distance(self, other):
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")
        return float(self.grid.weights() @ np.abs(self.values - other.values))


def delta_field(grid, point):
    """Unit-mass discrete delta, split multilinearly over the enclosing cell."""
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if point.size != grid.dim:
        raise GridMismatchError("point dimension does not match the grid")
    vals = np.zeros(grid.shape)
    corners = [[]]
    for d, ax in enumerate(grid.axes):
        if not ax[0] <= point[d] <= ax[-1]:
            raise InvalidParameterError("delta location lies outside the grid")
        s = (point[d] - ax[0]) / grid.spacing[d]
        i = min(int(np.floor(s)), ax.size - 2)
        f = s - i
        corners = [c + [(i, 1 - f)] for c in corners] + [c + [(i + 1, f)] for c in corners]
    for c in corners:
        idx = tuple(i for i, _ in c)
        vals[idx] += np.prod([f for _, f in c])
    w = grid.weights().reshape(grid.shape)
    vals = np.where(vals > 0, vals / w, 0.0)
    return ConsistencyField(grid, vals)


def gaussian_field(grid, mean, cov):
    mean = np.atleast_1d(mean)
    cov = np.atleast_2d(cov)
    d = grid.nodes() - mean
    q = np.einsum("ni,ij,nj->n", d, np.linalg.inv(cov), d)
    return ConsistencyField(grid, np.exp(-0.5 * q)).normalized()


@dataclass
class TransferOperator:
    """Dense sub-step kernel; one application of the operator is ``n_sub`` sub-steps."""

    grid: GridSpec
    sub_kernel: np.ndarray
    delta_t: float
    n_sub: int
    w_rev: float
    il_rev: np.ndarray
    provider_name: str = ""
    _full: np.ndarray | None = field(default=None, repr=False)

    @property
    def sub_dt(self):
        return self.delta_t / self.n_sub

    @property
    def kernel(self):
        """Full one-step matrix ``K[out, in]`` (computed on first use)."""
        if self._full is None:
            self._full = np.linalg.matrix_power(self.sub_kernel, self.n_sub)
        return self._full

    def apply_values(self, values, substeps=None):
        v = np.asarray(values, dtype=float)
        for _ in range(self.n_sub if substeps is None else substeps):
            v = self.sub_kernel @ v
        return v

    def apply(self, psi):
        self._check(psi)
        return ConsistencyField(self.grid, self.apply_values(psi.values))

    def _check(self, psi):
        if psi.grid != self.grid:
            raise GridMismatchError("field grid does not match the operator grid")


def build_transfer(provider, grid, delta_t=1.0, n_sub=1, w_rev=1.0, il_tol=1e-10):
    """Assemble the sub-step kernel on ``grid``.

    Raises ``ProviderInconsistencyError`` if IL_rev is negative beyond
    ``il_tol`` (relative) at any node, and warns when the sub-step Gaussian is
    narrower than the grid spacing (quadrature then no longer conserves mass).
    """
    if n_sub < 1:
        raise InvalidParameterError("n_sub must be at least 1")
    if not delta_t > 0:
        raise InvalidParameterError("delta_t must be positive")
    if w_rev < 0:
        raise InvalidParameterError("w_rev must be non-negative")
    if provider.m != grid.dim:
        raise GridMismatchError(f"provider has {provider.m} coordinates, grid has {grid.dim}")
    nodes = grid.nodes()
    g, M, phi = provider.fields(nodes)
    check_metric_batch(g, nodes)
    v = np.linalg.solve(g, M[..., None])[..., 0]
    rev = phi - np.einsum("ni,ni->n", M, v)
    scale = max(1.0, float(np.max(np.abs(phi))))
    if np.min(rev) < -il_tol * scale:
        k = int(np.argmin(rev))
        raise ProviderInconsistencyError(
            f"negative IL_rev {rev[k]:.3e} at lambda={nodes[k].tolist()}")
    rev = np.maximum(rev, 0.0)
    il_rev = 0.5 * delta_t ** 2 * rev

    dt = delta_t / n_sub
    ratio = delta_t / dt
    m = grid.dim
    sd_min = np.sqrt(1.0 / (ratio * np.max(np.linalg.eigvalsh(g))))
    if sd_min < min(grid.spacing):
        warnings.warn(f"sub-step kernel width {sd_min:.3g} is below the grid spacing "
                      f"{min(grid.spacing):.3g}; quadrature will not conserve mass", RuntimeWarning)
    centres = nodes + dt * v
    # (x_o - c_i)^T g_i (x_o - c_i) expanded so no (out, in, m) temporary is formed
    xx = np.einsum("od,ok->odk", nodes, nodes).reshape(len(nodes), -1)
    gc = np.einsum("idk,ik->id", g, centres)
    quad = xx @ g.reshape(len(nodes), -1).T - 2 * nodes @ gc.T + np.einsum("id,id->i", centres, gc)[None, :]
    quad = np.maximum(quad, 0.0)
    logdet = np.linalg.slogdet(g)[1]
    log_norm = -0.5 * m * np.log(2 * np.pi) + 0.5 * logdet + 0.5 * m * np.log(ratio)
    expo = -0.5 * ratio * quad + (log_norm - w_rev * (dt / delta_t) * il_rev)[None, :]
    sub = np.exp(expo) * grid.weights()[None, :]
    return TransferOperator(grid, sub, float(delta_t), int(n_sub), float(w_rev), il_rev,
                            getattr(provider, "name", ""))


def propagate(op, psi0, steps):
    """Apply the operator ``steps`` times (each a full ``Delta t``)."""
    op._check(psi0)
    if steps < 0:
        raise InvalidParameterError("steps must be non-negative")
    v = psi0.values
    for _ in range(steps):
        v = op.apply_values(v)
    return ConsistencyField(op.grid, v)


def trajectory(op, psi0, n_substeps):
    """Fields after every sub-step; returns ``(times, [ConsistencyField])`` including t=0."""
    op._check(psi0)
    out = [psi0]
    v = psi0.values
    for _ in range(n_substeps):
        v = op.sub_kernel @ v
        out.append(ConsistencyField(op.grid, v))
    return op.sub_dt * np.arange(n_substeps + 1), out


@dataclass
class SteadyState:
    eigenvalue: float
    field: ConsistencyField
    iterations: int
    converged: bool
    gap: float
    delta_t: float
    confinement_ok: bool = True
    notes: list = field(default_factory=list)

    @property
    def rate_per_unit_time(self):
        """Eigenvalue per unit time, ``eigenvalue ** (1 / Delta t)``."""
        return float(self.eigenvalue ** (1.0 / self.delta_t))


def confinement_check(op, factor=2.0):
    """True if IL_rev at every boundary node exceeds ``factor`` times its grid median."""
    edge = op.il_rev[op.grid.boundary_mask()]
    med = float(np.median(op.il_rev))
    return bool(np.min(edge) > 0 and np.min(edge) > factor * med), float(np.min(edge)), med


def steady_state(op, tol=1e-12, max_iter=10_000, seed=0, confinement_factor=2.0):
    """Power iteration with L1 renormalization from a positive random start.

    Returns a ``SteadyState``; if ``max_iter`` is reached ``converged`` is
    False and ``gap`` holds the last L1 change. The confinement condition
    (IL_rev growing at the grid edge) is checked and recorded, not enforced.
    """
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    rng = np.random.default_rng(seed)
    w = op.grid.weights()
    v = rng.uniform(0.5, 1.5, op.grid.size)
    v /= w @ v
    lam = np.nan
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        nv = op.apply_values(v)
        mass = w @ nv
        if not mass > 0:
            raise ProviderInconsistencyError("operator annihilated the iterate (zero mass)")
        nv /= mass
        gap = float(w @ np.abs(nv - v))
        v, lam = nv, float(mass)
        if gap < tol:
            break
    ok, edge, med = confinement_check(op, confinement_factor)
    notes = [] if ok else [
        f"confinement condition unmet: boundary IL_rev {edge:.3g} vs median {med:.3g}; "
        "the grid edge, not IL_rev, is confining"]
    return SteadyState(lam, ConsistencyField(op.grid, np.maximum(v, 0.0)), it, gap < tol, gap,
                       op.delta_t, ok, notes)


def top_spectrum(op, k=5):
    """Largest ``k`` eigenvalue magnitudes of the full one-step operator."""
    n = op.grid.size
    if n <= k + 2:
        vals = np.linalg.eigvals(op.kernel)
    else:
        lin = spla.LinearOperator((n, n), matvec=op.apply_values, dtype=float)
        vals = spla.eigs(lin, k=k, which="LM", return_eigenvectors=False, tol=1e-10)
    return np.sort(np.abs(vals))[::-1][:k]


@dataclass
class AppendixBReport:
    max_l1_ratio: float
    contraction_ok: bool
    min_value: float
    positivity_ok: bool
    tail_fraction: float
    tail_warning: bool
    translation_modulus: float
    confinement_ok: bool
    boundary_il_rev: float
    median_il_rev: float
    trials: int

    def rows(self):
        return [
            ("max_l1_ratio", self.max_l1_ratio, self.contraction_ok),
            ("min_value", self.min_value, self.positivity_ok),
            ("tail_fraction", self.tail_fraction, not self.tail_warning),
            ("translation_modulus", self.translation_modulus, True),
            ("boundary_il_rev", self.boundary_il_rev, self.confinement_ok),
            ("median_il_rev", self.median_il_rev, True),
        ]


def random_fields(grid, trials, seed, support=0.5):
    """Random non-negative unit-mass fields supported in the central box.

    ``support`` is the fraction of each axis carrying mass.
    """
    rng = np.random.default_rng(seed)
    mask = grid.central_mask(support)
    out = []
    for _ in range(trials):
        v = np.where(mask, rng.uniform(0.0, 1.0, grid.size), 0.0)
        out.append(ConsistencyField(grid, v).normalized())
    return out


def appendix_b_diagnostics(op, trials=50, seed=0, support=0.5, tail_threshold=1e-3,
                           confinement_factor=2.0, tol=1e-6):
    """Numerical proxies of the compactness and positivity properties of the operator.

    (i) largest ``|K psi|_1`` over random unit-mass ``psi``; (ii) fraction of
    ``K psi`` mass outside the central 80% box; (iii) L1 modulus of
    translation by one grid step; (iv) boundary IL_rev against its median.
    """
    if trials < 10:
        raise InvalidParameterError("appendix_b_diagnostics needs trials >= 10")
    grid = op.grid
    w = grid.weights()
    outer = ~grid.central_mask(0.8)
    ratios, mins, tails, mods = [], [], [], []
    for psi in random_fields(grid, trials, seed, support):
        out = op.apply_values(psi.values)
        ratios.append(w @ out)
        mins.append(out.min())
        total = w @ out
        tails.append((w[outer] @ out[outer]) / total if total > 0 else 0.0)
        arr = out.reshape(grid.shape)
        shifts = []
        for d in range(grid.dim):
            diff = np.abs(np.diff(arr, axis=d))
            sl = [slice(None)] * grid.dim
            sl[d] = slice(1, None)
            wd = w.reshape(grid.shape)[tuple(sl)]
            shifts.append(float(np.sum(wd * diff)))
        mods.append(max(shifts))
    ok, edge, med = confinement_check(op, confinement_factor)
    max_ratio = float(np.max(ratios))
    return AppendixBReport(max_ratio, max_ratio <= 1 + tol, float(np.min(mins)), bool(np.min(mins) > 0),
                           float(np.max(tails)), bool(np.max(tails) > tail_threshold),
                           float(np.max(mods)), ok, edge, med, trials)
