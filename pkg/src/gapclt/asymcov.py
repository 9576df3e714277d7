"""Closed-form asymptotic covariance of pooled ReLU outputs.

For a one-layer ReLU network ``g(x) = ReLU(W x)`` fed a Gaussian AR(1)
series, the long-run covariance of the GAP output reduces to sums of the
arc-cosine transform

    Phi(rho) = sqrt(1 - rho^2) + rho (pi - arccos rho) - 1,

evaluated on the lag correlations of the pre-activations.  The general
weighted long-run covariance for arbitrary lag covariances and weight limits
is provided by :func:`sigma_from_lag_series`.
"""
from dataclasses import dataclass
import math
import warnings

import numpy as np

from .exceptions import DegenerateError, DomainError, StructureError, TruncationWarning

CLAMP_WINDOW = 1e-12


def _clamp_corr(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) > 1 + CLAMP_WINDOW) or np.any(np.isnan(rho)):
        raise DomainError("correlation outside [-1, 1]")
    return np.clip(rho, -1.0, 1.0)


def phi(rho):
    """Arc-cosine transform ``Phi``; equals ``2 pi Cov(ReLU(U), ReLU(V))``."""
    r = _clamp_corr(rho)
    return np.sqrt(1.0 - r * r) + r * (np.pi - np.arccos(r)) - 1.0


def relu_gauss_cov(rho):
    """``Cov(ReLU(U), ReLU(V))`` for standard Gaussians with correlation ``rho``."""
    out = phi(rho) / (2.0 * np.pi)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class LimitConstants:
    c0: float   # theta = 0, opposite-sign channels
    c1: float   # theta -> 1, opposite-sign channels


def limit_constants():
    return LimitConstants(-1.0 / (math.pi - 1.0),
                          (math.log(2.0) - 2.0) / (math.pi + math.log(2.0) - 2.0))


@dataclass(frozen=True)
class SeriesTail:
    """Truncation control for the infinite lag sums.

    If ``h_max`` is None the cutoff is derived from ``tail_tol``.
    """
    tail_tol: float = 1e-10
    h_max: int = None


def _filter_matrix(W):
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W.reshape(-1, 1)
    if W.ndim != 2:
        raise StructureError("filter matrix must be (m_1, k_1)")
    return W


def _ar1_pow(theta, e):
    # theta**|e| with 0**0 = 1
    return np.where(e == 0, 1.0, float(theta) ** np.abs(e).astype(float))


def _cross_sums(W, theta, lags):
    """``sum_{r,s} W[j,r] W[l,s] theta^|h+s-r|`` for each lag: shape (H, m, m)."""
    m, k = W.shape
    lags = np.asarray(lags)
    out = np.zeros((lags.size, m, m))
    for r in range(k):
        for s in range(k):
            out += _ar1_pow(theta, lags + s - r)[:, None, None] * np.outer(W[:, r], W[:, s])
    return out


def _variance_sums(W, theta):
    v = np.diagonal(_cross_sums(W, theta, [0])[0]).copy()
    if np.any(v <= 0):
        bad = int(np.argmin(v))
        raise DegenerateError(f"channel {bad} has zero pre-activation variance")
    return v


def rho_filter(W, theta, h, j, l):
    """``Corr((W X_1)_j, (W X_{1+h})_l)`` for a unit AR(1) input.

    ``W`` has one row per channel and one column per filter tap.
    """
    W = _filter_matrix(W)
    if not abs(theta) < 1:
        raise DomainError("AR(1) parameter must satisfy |theta| < 1")
    v = _variance_sums(W, theta)
    c = _cross_sums(W, theta, [h])[0, j, l]
    return float(np.clip(c / math.sqrt(v[j] * v[l]), -1.0, 1.0))


def rho_lags(W, theta, lags):
    """Lag correlation matrices ``rho_{j,l}(h)`` stacked over ``lags``."""
    W = _filter_matrix(W)
    v = _variance_sums(W, theta)
    return np.clip(_cross_sums(W, theta, lags) / np.sqrt(np.outer(v, v)), -1.0, 1.0)


@dataclass(frozen=True)
class PhiSeries:
    """Symmetrized long-run sums ``Phi(0) + sum_{h>=1} (Phi(h) + Phi(h)^T)``."""
    sums: np.ndarray
    h_max: int
    tail_bound: float
    variance_sums: np.ndarray


def _envelope(W, v):
    # |rho_{j,l}(h)| <= C a^(h-k+1) for h >= k-1
    absW = np.abs(W)
    return float(np.max(np.outer(absW.sum(1), absW.sum(1)) / np.sqrt(np.outer(v, v))))


def _tail_after(C, a, k, H):
    """Bound on ``sum_{h>H} |Phi(h) + Phi(h)^T|`` using ``|Phi(rho)| <= pi |rho|``."""
    if a == 0:
        return 0.0 if H >= k - 1 else math.inf
    return 2.0 * math.pi * C * a ** max(H - k + 2, 0) / (1 - a)


def phi_series(W, theta, tail=None, chunk=4096):
    W = _filter_matrix(W)
    tail = tail or SeriesTail()
    if not 0 <= theta < 1:
        raise DomainError("theta must lie in [0, 1) for the one-layer closed form")
    v = _variance_sums(W, theta)
    k = W.shape[1]
    C = _envelope(W, v)
    if tail.h_max is not None:
        H = int(tail.h_max)
    elif theta == 0:
        H = k - 1
    else:
        H = k - 1
        if _tail_after(C, theta, k, H) > tail.tail_tol:
            H = k - 2 + math.ceil(math.log(tail.tail_tol * (1 - theta) / (2 * math.pi * C))
                                  / math.log(theta))
            while _tail_after(C, theta, k, H) > tail.tail_tol:
                H += 1
    norm = np.sqrt(np.outer(v, v))
    S = phi(np.clip(_cross_sums(W, theta, [0])[0] / norm, -1, 1))
    for start in range(1, H + 1, chunk):
        lags = np.arange(start, min(start + chunk, H + 1))
        P = phi(np.clip(_cross_sums(W, theta, lags) / norm, -1, 1)).sum(axis=0)
        S = S + P + P.T
    return PhiSeries(S, H, _tail_after(C, theta, k, H), v)


def corr_gap_onelayer(W, theta, tail=None):
    """Long-run correlation matrix of ``GAP(ReLU(W x))`` for Gaussian AR(1) input."""
    S = phi_series(W, theta, tail).sums
    d = np.sqrt(np.diagonal(S))
    R = S / np.outer(d, d)
    np.fill_diagonal(R, 1.0)
    return R


def sigma_gap_onelayer(W, theta, sigma=1.0, tail=None):
    """Un-normalized long-run covariance matrix of the one-layer GAP output."""
    ps = phi_series(W, theta, tail)
    pref = sigma * sigma / (2.0 * math.pi * (1.0 - theta * theta))
    return pref * np.sqrt(np.outer(ps.variance_sums, ps.variance_sums)) * ps.sums


def sigma_gap_entry_onelayer(W, theta, sigma, j, l, tail=None):
    return float(sigma_gap_onelayer(W, theta, sigma, tail)[j, l])


def relu_lagcov_onelayer(W, theta, sigma, lags):
    """``Cov(g_j(X_1), g_l(X_{1+h}))`` for ``g = ReLU(W .)`` on Gaussian AR(1).

    Built from :func:`relu_gauss_cov` and :func:`rho_filter`; shape ``(H, m, m)``.
    """
    W = _filter_matrix(W)
    v = _variance_sums(W, theta)
    sd = sigma * np.sqrt(v / (1.0 - theta * theta))
    return np.outer(sd, sd)[None] * relu_gauss_cov(rho_lags(W, theta, lags))


def sigma_from_lag_series(lagcov, G=None, h_max=None, certified=False):
    """Weighted long-run covariance from lag covariances.

    Parameters
    ----------
    lagcov : callable or array
        ``lagcov(h)`` returns the ``m x m`` matrix ``Cov(f(X_1), f(X_{1+h}))``;
        alternatively a ``(H+1, m, m)`` stack for ``h = 0..H``.
    G : None, float, or callable
        Weight limit ``G(h)``; scalar per lag or an ``m x m`` matrix per lag.
        ``None`` means ``G = 1`` (plain GAP).
    h_max : int
        Last lag included; required when ``lagcov`` is callable.
    certified : bool
        Set when the caller has bounded the omitted tail.  Otherwise a
        :class:`TruncationWarning` is issued.

    Returns
    -------
    ndarray
        Symmetric matrix ``G(0) C(0) + sum_{h>=1} [G(h) C(h) + (G(h) C(h))^T]``.
    """
    if callable(lagcov):
        if h_max is None:
            raise DomainError("h_max is required for a callable lagcov")
        get = lagcov
    else:
        stack = np.asarray(lagcov, dtype=float)
        if stack.ndim == 1:
            stack = stack.reshape(-1, 1, 1)
        h_max = stack.shape[0] - 1 if h_max is None else min(h_max, stack.shape[0] - 1)
        get = lambda h: stack[h]
    if G is None:
        weight = lambda h: 1.0
    elif callable(G):
        weight = G
    else:
        weight = lambda h: G

    C0 = np.atleast_2d(np.asarray(get(0), dtype=float))
    if C0.shape[0] != C0.shape[1]:
        raise StructureError("lag-0 covariance must be square")
    if not np.allclose(C0, C0.T, rtol=1e-10, atol=1e-14):
        raise StructureError("lag-0 covariance must be symmetric")
    if not certified:
        warnings.warn(f"long-run sum truncated at lag {h_max} without a tail bound",
                      TruncationWarning, stacklevel=2)
    S = np.asarray(weight(0)) * C0
    for h in range(1, int(h_max) + 1):
        T = np.asarray(weight(h)) * np.atleast_2d(get(h))
        S = S + T + T.T
    return 0.5 * (S + S.T)
