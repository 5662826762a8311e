"""
Gaussian moments of linear and quadratic forms.

Two independent routes are kept on purpose:

* ``isserlis_moment`` enumerates pair partitions (Isserlis/Wick) for products of
  coordinates of a non-central Gaussian. It is slow but obviously correct.
* ``quadratic_form_moments`` uses the closed trace formulas for quadratic forms
  ``Q_i(x) = x^T B_i x + c_i^T x`` and is what the closed-form geometry uses.
"""
from __future__ import annotations

import numpy as np


def _pairings(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for i, other in enumerate(rest):
        remaining = rest[:i] + rest[i + 1:]
        for tail in _pairings(remaining):
            yield [(first, other)] + tail


def isserlis_moment(mean, cov, indices):
    """``E[prod_k x_{indices[k]}]`` for ``x ~ N(mean, cov)``.

    Each factor is split into its mean and a centred part; centred parts are
    paired by Isserlis' theorem.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    indices = list(indices)
    n = len(indices)
    total = 0.0
    for mask in range(1 << n):
        centred = [indices[k] for k in range(n) if mask >> k & 1]
        if len(centred) % 2:
            continue
        mean_part = 1.0
        for k in range(n):
            if not mask >> k & 1:
                mean_part *= mean[indices[k]]
        if mean_part == 0.0:
            continue
        pair_sum = 0.0
        for pairing in _pairings(centred):
            term = 1.0
            for a, b in pairing:
                term *= cov[a, b]
            pair_sum += term
        total += mean_part * pair_sum
    return total


def quadratic_form_moments(mean, cov, B, c):
    """Moments of ``Q_i(x) = x^T B_i x + c_i^T x`` under ``N(mean, cov)``.

    ``mean`` may carry leading batch axes; ``cov`` is shared.

    Returns
    -------
    first : (..., m)
        ``E[Q_i]``.
    second : (..., m, m)
        ``E[Q_i Q_j]``.
    cross : (..., n, m)
        ``E[(x - mean) Q_j]``.
    """
    mean = np.asarray(mean, dtype=float)
    B = 0.5 * (B + np.swapaxes(B, -1, -2))
    grad = 2 * np.einsum("iab,...b->...ia", B, mean) + c
    first = (np.einsum("iab,ba->i", B, cov)
             + np.einsum("...a,iab,...b->...i", mean, B, mean)
             + np.einsum("ia,...a->...i", c, mean))
    BC = np.einsum("iab,bc->iac", B, cov)
    trace_term = 2 * np.einsum("iab,jba->ij", BC, BC)
    covariance = trace_term + np.einsum("...ia,ab,...jb->...ij", grad, cov, grad)
    second = covariance + first[..., :, None] * first[..., None, :]
    cross = np.einsum("ab,...jb->...aj", cov, grad)
    return first, second, cross


def quadratic_form_moments_isserlis(mean, cov, B, c):
    """Reference version of ``quadratic_form_moments`` by explicit enumeration."""
    mean = np.asarray(mean, dtype=float)
    n = mean.size
    m = B.shape[0]
    E2 = np.array([[isserlis_moment(mean, cov, (a, b)) for b in range(n)] for a in range(n)])
    E3 = np.zeros((n, n, n))
    E4 = np.zeros((n, n, n, n))
    for a in range(n):
        for b in range(n):
            for d in range(n):
                E3[a, b, d] = isserlis_moment(mean, cov, (a, b, d))
                for e in range(n):
                    E4[a, b, d, e] = isserlis_moment(mean, cov, (a, b, d, e))
    first = np.einsum("iab,ab->i", B, E2) + c @ mean
    second = (np.einsum("iab,jde,abde->ij", B, B, E4)
              + np.einsum("iab,jd,abd->ij", B, c, E3)
              + np.einsum("jab,id,abd->ij", B, c, E3)
              + np.einsum("ia,jb,ab->ij", c, c, E2))
    # E[(x_a - mean_a) Q_j]
    cross = (np.einsum("jbd,abd->aj", B, E3) + np.einsum("jb,ab->aj", c, E2)
             - mean[:, None] * first[None, :])
    return first, second, cross
