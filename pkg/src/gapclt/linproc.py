"""Short-range dependent linear processes.

A linear process is ``X_t = sum_j A_j Z_{t-j}`` with i.i.d. centered
innovations ``Z`` and absolutely summable coefficient norms.  Three
parameterizations are supported: scalar AR(1), scalar MA(1) and an explicit
finite list of ``k x k`` coefficient matrices.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.signal import lfilter

from .exceptions import DomainError, ResourceError, StructureError
from .io import write_csv

LAWS = ("gaussian", "uniform", "laplace")

# refuse to allocate more than this many innovation draws in one call
MAX_DRAWS = 2 * 10**9


@dataclass(frozen=True)
class InnovationSpec:
    """Law of the i.i.d. innovations ``Z_t``.

    With ``normalize=True`` each component has unit variance.  Otherwise
    ``scale`` is the half-width ``c`` of the uniform law or the scale ``b``
    of the Laplace law (ignored for the Gaussian).
    """
    dim: int = 1
    law: str = "gaussian"
    normalize: bool = True
    scale: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError("innovation dimension must be positive")
        if self.law not in LAWS:
            raise DomainError(f"unknown innovation law {self.law!r}; "
                              f"expected one of {LAWS}")
        if not self.scale > 0:
            raise DomainError("innovation scale must be positive")

    @property
    def variance(self):
        """Per-component variance of ``Z_t``."""
        if self.normalize or self.law == "gaussian":
            return 1.0
        if self.law == "uniform":
            return self.scale**2 / 3.0
        return 2.0 * self.scale**2

    def draw(self, rng, size):
        if self.law == "gaussian":
            return rng.standard_normal(size)
        if self.law == "uniform":
            c = math.sqrt(3.0) if self.normalize else self.scale
            return rng.uniform(-c, c, size)
        b = 1.0 / math.sqrt(2.0) if self.normalize else self.scale
        return rng.laplace(0.0, b, size)


def default_truncation(theta, tol=1e-12):
    """Smallest ``L`` with ``|theta|**(L+1) / (1-|theta|) < tol``."""
    a = abs(theta)
    if a == 0:
        return 0
    L = math.ceil(math.log(tol * (1 - a)) / math.log(a)) - 1
    L = max(L, 0)
    while a ** (L + 1) / (1 - a) >= tol:
        L += 1
    while L > 0 and a**L / (1 - a) < tol:
        L -= 1
    return L


@dataclass(frozen=True)
class LinearProcessSpec:
    kind: str
    theta: float = 0.0
    sigma: float = 1.0
    coeffs: tuple = ()
    innovations: InnovationSpec = field(default_factory=InnovationSpec)
    truncation_order: int = 0

    @property
    def dim(self):
        return self.innovations.dim

    def coefficients(self):
        """Coefficient matrices ``A_0..A_L`` as a ``(L+1, k, k)`` array.

        For AR(1) the infinite expansion is cut at ``truncation_order``.
        """
        if self.kind == "ar1":
            j = np.arange(self.truncation_order + 1)
            return (self.sigma * self.theta**j).reshape(-1, 1, 1)
        if self.kind == "ma1":
            return np.array([self.sigma, self.theta * self.sigma]).reshape(2, 1, 1)
        return np.array(self.coeffs, dtype=float)

    def tail_bound(self):
        """Bound on ``sum_{j>L} ||A_j||`` for the truncated representation."""
        if self.kind != "ar1":
            return 0.0
        a = abs(self.theta)
        return self.sigma * a ** (self.truncation_order + 1) / (1 - a)

    def coefficient_norm_sum(self):
        A = self.coefficients()
        return float(sum(np.linalg.norm(Aj, 2) for Aj in A)) + self.tail_bound()


def make_ar1(theta, sigma=1.0, innovations=None, truncation_order=None):
    """Scalar AR(1) ``X_t = theta X_{t-1} + sigma Z_t``."""
    if not abs(theta) < 1:
        raise DomainError(f"AR(1) requires |theta| < 1, got {theta}")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    innovations = innovations or InnovationSpec()
    if innovations.dim != 1:
        raise StructureError("AR(1) is scalar; innovation dim must be 1")
    if truncation_order is None:
        truncation_order = default_truncation(theta)
    return LinearProcessSpec("ar1", float(theta), float(sigma), (),
                             innovations, int(truncation_order))


def make_ma1(theta, sigma=1.0, innovations=None):
    """Scalar MA(1) ``X_t = sigma (Z_t + theta Z_{t-1})``."""
    if not math.isfinite(theta):
        raise DomainError("theta must be finite")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    innovations = innovations or InnovationSpec()
    if innovations.dim != 1:
        raise StructureError("MA(1) is scalar; innovation dim must be 1")
    return LinearProcessSpec("ma1", float(theta), float(sigma), (),
                             innovations, 1)


def make_linear(coeffs, innovations=None):
    """Process with explicit coefficient matrices ``A_0, ..., A_L``.

    ``coeffs`` may be a list of ``k x k`` arrays or scalars (``k = 1``).
    """
    A = np.asarray(coeffs, dtype=float)
    if A.ndim == 1:
        A = A.reshape(-1, 1, 1)
    if A.ndim != 3 or A.shape[1] != A.shape[2] or A.shape[0] == 0:
        raise StructureError("coefficients must be a nonempty list of square matrices")
    if not np.all(np.isfinite(A)):
        raise DomainError("coefficients must be finite")
    innovations = innovations or InnovationSpec(dim=A.shape[1])
    if innovations.dim != A.shape[1]:
        raise StructureError(f"innovation dim {innovations.dim} does not match "
                             f"coefficient size {A.shape[1]}")
    coeffs = tuple(tuple(tuple(row) for row in Aj) for Aj in A)
    return LinearProcessSpec("explicit", 0.0, 1.0, coeffs, innovations,
                             A.shape[0] - 1)


def autocov(spec, h):
    """Exact lag-``h`` autocovariance ``Cov(X_t, X_{t+h})`` as a ``k x k`` matrix."""
    h = int(h)
    if h < 0:
        return autocov(spec, -h).T
    var_z = spec.innovations.variance
    if spec.kind == "ar1":
        th, s = spec.theta, spec.sigma
        return np.array([[var_z * s * s * th**h / (1 - th * th)]])
    A = spec.coefficients()
    k = spec.dim
    out = np.zeros((k, k))
    for j in range(A.shape[0] - h):
        out += A[j] @ A[j + h].T
    return var_z * out


def simulate(spec, n, seed):
    """Draw a stationary path of length ``n``; returns a ``(k, n)`` array.

    AR(1) paths start from the stationary law (exact Gaussian draw for
    Gaussian innovations, otherwise the truncated moving-average expansion),
    so no burn-in is needed.
    """
    n = int(n)
    if n < 1:
        raise DomainError("series length must be at least 1")
    k = spec.dim
    L = spec.truncation_order
    if (n + L + 1) * k > MAX_DRAWS:
        raise ResourceError(f"n={n} would need {(n + L + 1) * k} innovation draws")
    rng = np.random.default_rng(seed)
    inn = spec.innovations

    if spec.kind == "ar1":
        th, s = spec.theta, spec.sigma
        if inn.law == "gaussian":
            x0 = rng.standard_normal() * s / math.sqrt(1 - th * th)
        else:
            past = inn.draw(rng, L + 1)      # Z_0, Z_{-1}, ..., Z_{-L}
            x0 = s * float(np.dot(th ** np.arange(L + 1), past))
        e = s * inn.draw(rng, n)
        x, _ = lfilter([1.0], [1.0, -th], e, zi=[th * x0])
        return x.reshape(1, n)

    A = spec.coefficients()
    Z = inn.draw(rng, (k, n + L))
    X = np.zeros((k, n))
    for j in range(L + 1):
        X += A[j] @ Z[:, L - j:L - j + n]
    return X


def write_series_csv(path, X):
    """Export a ``(k, n)`` series as CSV with header ``x1,...,xk``."""
    X = np.atleast_2d(X)
    write_csv(path, [f"x{i + 1}" for i in range(X.shape[0])], X.T)


def read_series_csv(path):
    X = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return X.T.copy()
