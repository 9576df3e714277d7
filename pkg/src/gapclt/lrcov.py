"""Kernel (HAC) estimation of the long-run covariance of a vector series.

Given an output series ``Y`` of shape ``(m, T)``, e.g. the window outputs
``g_L(X_t, ..., X_{t+K_L-1})`` for ``t = 1..n-K_L+1``, the estimator is

    Sigma_hat = Gamma(0) + sum_{h>=1} k(h / b) (Gamma(h) + Gamma(h)^T)

with full-sample-mean centering and a single ``1/T`` denominator, which keeps
the Bartlett-weighted estimate positive semidefinite.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .exceptions import DegenerateError, DomainError, StructureError
from .fcn import PoolingWeights, weight_limit_G  # noqa: F401  (re-exported)
from .io import write_matrix_csv, write_metadata

KERNELS = ("bartlett",)


def bartlett(x):
    x = np.abs(np.asarray(x, dtype=float))
    return np.where(x <= 1.0, 1.0 - x, 0.0)


@dataclass(frozen=True)
class KernelSpec:
    bandwidth: float
    kind: str = "bartlett"

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise DomainError(f"unsupported kernel {self.kind!r}")
        if not self.bandwidth >= 1:
            raise DomainError("bandwidth must be >= 1")

    def __call__(self, x):
        return bartlett(x)

    def max_lag(self, T):
        # weights vanish for h >= bandwidth
        return int(min(T - 1, math.ceil(self.bandwidth) - 1))


@dataclass(frozen=True)
class LongRunCovEstimate:
    sigma_hat: np.ndarray
    gammas: list = field(repr=False)
    bandwidth: float = None
    T: int = None
    kernel: str = "bartlett"

    @property
    def n_lags(self):
        return len(self.gammas) - 1

    def corr(self):
        return cov_to_corr(self.sigma_hat)


def _as_output_series(Y):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(1, -1)
    if Y.ndim != 2:
        raise StructureError("series must be (m, T)")
    return Y


def sample_lag_cov(Y, h):
    """Sample lag-``h`` covariance with denominator ``T``.

    ``Gamma(h)[i, j]`` estimates ``Cov(Y_{i,t}, Y_{j,t+h})``; negative ``h``
    returns the transpose of the positive lag.
    """
    Y = _as_output_series(Y)
    T = Y.shape[1]
    h = int(h)
    if abs(h) >= T:
        raise DomainError(f"lag {h} requires a series longer than {T}")
    if h < 0:
        return sample_lag_cov(Y, -h).T
    D = Y - Y.mean(axis=1, keepdims=True)
    return D[:, :T - h] @ D[:, h:].T / T


def default_bandwidth(T, const=1.5):
    """``floor(const * T**(1/3))``."""
    if T < 8:
        raise DomainError("default bandwidth needs T >= 8")
    b = const * T ** (1.0 / 3.0)
    # guard against floating error just below an integer
    return float(math.floor(b + 1e-9))


def lr_cov_estimate(Y, kernel=None):
    """Bartlett long-run covariance estimate of an ``(m, T)`` series."""
    Y = _as_output_series(Y)
    T = Y.shape[1]
    if T < 2:
        raise DomainError("need at least two observations")
    if kernel is None:
        kernel = KernelSpec(default_bandwidth(T))
    elif not isinstance(kernel, KernelSpec):
        kernel = KernelSpec(float(kernel))
    D = Y - Y.mean(axis=1, keepdims=True)
    gammas = [D @ D.T / T]
    S = gammas[0].copy()
    for h in range(1, kernel.max_lag(T) + 1):
        G = D[:, :T - h] @ D[:, h:].T / T
        gammas.append(G)
        S += kernel(h / kernel.bandwidth) * (G + G.T)
    S = 0.5 * (S + S.T)
    return LongRunCovEstimate(S, gammas, kernel.bandwidth, T, kernel.kind)


def cov_to_corr(S):
    S = np.asarray(S, dtype=float)
    d = np.diagonal(S)
    if np.any(d <= 0):
        raise DegenerateError(f"channel {int(np.argmin(d))} has zero long-run variance")
    sd = np.sqrt(d)
    R = S / np.outer(sd, sd)
    np.fill_diagonal(R, 1.0)
    return R


def export_estimate(est, path, meta_path=None, extra=None):
    """Write the matrix CSV and a ``key = value`` metadata sidecar."""
    write_matrix_csv(path, est.sigma_hat)
    meta = {"kernel": est.kernel, "bandwidth": est.bandwidth, "T": est.T,
            "lags": est.n_lags}
    meta.update(extra or {})
    write_metadata(meta_path or str(path) + ".meta", meta)
