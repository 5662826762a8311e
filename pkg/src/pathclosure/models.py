"""
Fine-grained Hamiltonian systems.

Each model supplies the resolved variables ``A(x)``, their Liouville images
``LA(x) = {A, H}``, the conserved energy ``E(x)`` and an exact sampler for the
exponential-family trial density

    p(x) ~ exp(lam . A(x) - beta * E(x)).

Both shipped models have linear ``A`` and quadratic ``E``, so the trial
densities are Gaussian and can be drawn exactly. States are arrays whose last
axis is the fine-grained coordinate; all evaluators broadcast over leading axes.

Two systems are provided:

* ``OscillatorModel`` -- a single harmonic oscillator, H = (q^2 + p^2)/2.
* ``TbhModel`` -- the spectrally truncated Burgers-Hopf (TBH) Galerkin system
  with modes ``u_k``, ``1 <= k <= Lambda``. Its Hamiltonian is the cubic
  ``(1/6) sum_{p+q+r=0} u_p u_q u_r`` with the non-canonical Poisson matrix
  ``da_k/dt = (k/2) dH/db_k``, ``db_k/dt = -(k/2) dH/da_k`` for
  ``u_k = a_k + i b_k``; the energy ``sum |u_k|^2`` is a conserved quantity.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidParameterError, NonFiniteEvaluationError


class HamiltonianModel:
    """Base class for models whose trial densities are Gaussian.

    Subclasses implement ``resolved``, ``liouville``, ``energy``,
    ``hamiltonian``, ``poisson_matrix``, ``trial_mean`` and ``trial_cov``.
    """

    n_fine: int
    m: int
    name = "model"

    # -- evaluators -------------------------------------------------------
    def resolved(self, x):
        raise NotImplementedError

    def liouville(self, x):
        raise NotImplementedError

    def energy(self, x):
        raise NotImplementedError

    def hamiltonian(self, x):
        raise NotImplementedError

    def poisson_matrix(self):
        raise NotImplementedError

    def tendency(self, x):
        raise NotImplementedError

    def liouville2(self, x, eps=1e-4):
        """L^2 A by a nested bracket: the directional derivative of LA along the flow."""
        x = np.asarray(x, dtype=float)
        f = self.tendency(x)
        return (self.liouville(x + eps * f) - self.liouville(x - eps * f)) / (2 * eps)

    # -- trial density ----------------------------------------------------
    def trial_mean(self, lam, beta):
        raise NotImplementedError

    def trial_cov(self, beta):
        raise NotImplementedError

    def resolved_matrix(self):
        """Matrix ``S`` with ``A(x) = S x``."""
        return self.resolved(np.eye(self.n_fine)).T

    def liouville_quadratic(self):
        """Coefficients ``(B, c)`` with ``LA_i(x) = x^T B_i x + c_i^T x``.

        Recovered by polarization, which is exact for quadratic ``LA``.
        """
        n = self.n_fine
        eye = np.eye(n)
        zero = self.liouville(np.zeros(n))
        plus = self.liouville(eye)
        minus = self.liouville(-eye)
        c = ((plus - minus) / 2).T
        diag = (plus + minus) / 2 - zero
        B = np.zeros((self.m, n, n))
        for a in range(n):
            B[:, a, a] = diag[a]
            for b in range(a + 1, n):
                both = self.liouville(eye[a] + eye[b])
                B[:, a, b] = B[:, b, a] = (both - plus[a] - plus[b] + zero) / 2
        return B, c

    def _check_trial_args(self, lam, beta):
        if not np.isfinite(beta) or beta <= 0:
            raise InvalidParameterError(
                f"beta must be positive (got {beta}); the trial density is not normalizable"
            )
        lam = np.asarray(lam, dtype=float)
        if lam.shape[-1] != self.m:
            raise InvalidParameterError(f"lambda must have {self.m} components, got {lam.shape}")
        if not np.all(np.isfinite(lam)):
            raise InvalidParameterError("lambda must be finite")
        return lam

    def standard_normals(self, count, seed):
        if count < 1:
            raise InvalidParameterError("count must be >= 1")
        return np.random.default_rng(seed).standard_normal((int(count), self.n_fine))

    def transform_normals(self, z, lam, beta):
        """Map standard normals to trial-density draws (common random numbers)."""
        lam = self._check_trial_args(lam, beta)
        chol = np.linalg.cholesky(self.trial_cov(beta))
        return self.trial_mean(lam, beta) + z @ chol.T

    def sample_trial(self, lam, beta, count, seed):
        """Exact draws from the trial density, shape ``(count, n_fine)``."""
        self._check_trial_args(lam, beta)
        return self.transform_normals(self.standard_normals(count, seed), lam, beta)


class OscillatorModel(HamiltonianModel):
    """One harmonic oscillator; ``A = (q, p)``, ``E = H``."""

    n_fine = 2
    m = 2
    name = "oscillator"

    def resolved(self, x):
        return np.asarray(x, dtype=float)

    def liouville(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([x[..., 1], -x[..., 0]], axis=-1)

    def liouville2(self, x, eps=None):
        return -np.asarray(x, dtype=float)

    def energy(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * x, axis=-1)

    hamiltonian = energy

    def poisson_matrix(self):
        return np.array([[0.0, 1.0], [-1.0, 0.0]])

    def tendency(self, x):
        return self.liouville(x)

    def trial_mean(self, lam, beta):
        return np.asarray(lam, dtype=float) / beta

    def trial_cov(self, beta):
        return np.eye(2) / beta


class TbhModel(HamiltonianModel):
    """Truncated Burgers-Hopf Galerkin model.

    Parameters
    ----------
    Lambda : int
        Spectral truncation, modes ``1 <= k <= Lambda``.
    k_res : int
        Resolved modes are ``Re u_k, Im u_k`` for ``k <= k_res``.

    The fine state is ordered ``(a_1, b_1, ..., a_Lambda, b_Lambda)`` with
    ``u_k = a_k + i b_k``; the resolved vector is its first ``2 k_res`` entries.
    """

    name = "tbh"

    def __init__(self, Lambda=3, k_res=1):
        Lambda, k_res = int(Lambda), int(k_res)
        if Lambda < 1 or Lambda > 16:
            raise InvalidParameterError("Lambda must be in [1, 16]")
        if not 1 <= k_res <= Lambda:
            raise InvalidParameterError("k_res must be in [1, Lambda]")
        self.Lambda = Lambda
        self.k_res = k_res
        self.n_fine = 2 * Lambda
        self.m = 2 * k_res
        self._k = np.arange(1, Lambda + 1)

    def __repr__(self):
        return f"TbhModel(Lambda={self.Lambda}, k_res={self.k_res})"

    # complex mode helpers
    def modes(self, x):
        """Full spectrum ``u_{-Lambda..Lambda}`` along the last axis (reality enforced)."""
        x = np.asarray(x, dtype=float)
        pos = x[..., 0::2] + 1j * x[..., 1::2]
        zero = np.zeros(x.shape[:-1] + (1,), dtype=complex)
        return np.concatenate([np.conj(pos[..., ::-1]), zero, pos], axis=-1)

    def _to_real(self, pos):
        out = np.empty(pos.shape[:-1] + (2 * pos.shape[-1],))
        out[..., 0::2] = pos.real
        out[..., 1::2] = pos.imag
        return out

    def _convolve(self, u, v):
        """``sum_{p+q=k} u_p v_q`` for ``k = 1..Lambda`` with |p|, |q| <= Lambda."""
        L = self.Lambda
        out = np.zeros(u.shape[:-1] + (L,), dtype=complex)
        for k in range(1, L + 1):
            for p in range(k - L, L + 1):
                out[..., k - 1] += u[..., p + L] * v[..., k - p + L]
        return out

    def tendency_modes(self, x):
        u = self.modes(x)
        return -0.5j * self._k * self._convolve(u, u)

    def tendency(self, x):
        return self._to_real(self.tendency_modes(x))

    def resolved(self, x):
        return np.asarray(x, dtype=float)[..., : self.m]

    def liouville(self, x):
        return self.tendency(x)[..., : self.m]

    def liouville2(self, x, eps=None):
        """Exact second Liouville image, ``-i k sum_{p+q=k} u_p (du/dt)_q``."""
        u = self.modes(x)
        fpos = self.tendency_modes(x)
        zero = np.zeros(fpos.shape[:-1] + (1,), dtype=complex)
        f = np.concatenate([np.conj(fpos[..., ::-1]), zero, fpos], axis=-1)
        return self._to_real(-1j * self._k * self._convolve(u, f))[..., : self.m]

    def energy(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(x * x, axis=-1)

    def hamiltonian(self, x):
        u = self.modes(x)
        L = self.Lambda
        total = np.zeros(u.shape[:-1], dtype=complex)
        for p in range(-L, L + 1):
            for q in range(-L, L + 1):
                r = -p - q
                if -L <= r <= L:
                    total += u[..., p + L] * u[..., q + L] * u[..., r + L]
        return total.real / 6.0

    def poisson_matrix(self):
        J = np.zeros((self.n_fine, self.n_fine))
        for k in self._k:
            i = 2 * (k - 1)
            J[i, i + 1] = k / 2
            J[i + 1, i] = -k / 2
        return J

    def trial_mean(self, lam, beta):
        mean = np.zeros(np.shape(lam)[:-1] + (self.n_fine,))
        mean[..., : self.m] = np.asarray(lam, dtype=float) / (2 * beta)
        return mean

    def trial_cov(self, beta):
        return np.eye(self.n_fine) / (2 * beta)


def _gradient(fn, x, eps):
    x = np.asarray(x, dtype=float)
    n = x.size
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = eps
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * eps))
    return np.stack(cols, axis=-1)


def poisson_bracket(model, fa, fb, x, eps=1e-5):
    """``(grad fa)^T J grad fb`` by central finite differences."""
    grad_a = np.atleast_2d(_gradient(fa, x, eps))
    grad_b = np.atleast_1d(_gradient(fb, x, eps))
    return grad_a @ model.poisson_matrix() @ grad_b


def poisson_bracket_check(model, x, tol=1e-6, eps=1e-5):
    """Compare the analytic ``LA(x)`` with ``{A, H}`` from finite differences.

    Returns True or False on agreement within ``tol`` (max norm). A non-finite
    evaluation raises ``NonFiniteEvaluationError`` instead of returning False.
    """
    if tol <= 0:
        raise InvalidParameterError("tol must be positive")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidParameterError("state must be finite")
    analytic = np.asarray(model.liouville(x), dtype=float)
    numeric = poisson_bracket(model, model.resolved, model.hamiltonian, x, eps)
    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        raise NonFiniteEvaluationError(f"non-finite bracket evaluation at x={x}")
    return bool(np.max(np.abs(analytic - numeric)) <= tol)


def energy_bracket(model, x, eps=1e-5):
    """``{E, H}`` by finite differences; zero for a conserved energy."""
    return float(poisson_bracket(model, model.energy, model.hamiltonian, x, eps)[0])


def integrate_fine(model, x0, duration, step=1e-3):
    """Classical fourth-order Runge-Kutta on the fine-grained flow (checks only)."""
    x = np.array(x0, dtype=float)
    n = int(round(duration / step))
    f = model.tendency
    for _ in range(n):
        k1 = f(x)
        k2 = f(x + 0.5 * step * k1)
        k3 = f(x + 0.5 * step * k2)
        k4 = f(x + step * k3)
        x = x + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def sample_trial(model, lam, beta, count, seed):
    return model.sample_trial(lam, beta, count, seed)


def build_model(name, **params):
    if name == "oscillator":
        return OscillatorModel()
    if name == "tbh":
        return TbhModel(params.get("Lambda", 3), params.get("k_res", 1))
    raise InvalidParameterError(f"unknown model {name!r}")
