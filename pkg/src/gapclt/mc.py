"""Monte Carlo checks of the Gaussian limit of pooled network outputs.

A network is drawn once and held fixed; each replicate simulates an
independent input path, runs the network and pools the last layer.  The
replicate stream is then standardized and compared with the standard normal.
"""
from concurrent.futures import ThreadPoolExecutor
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import fcn, linproc, lrcov
from .exceptions import DegenerateError, DomainError
from .io import ensure_dir, write_csv, write_matrix_csv, write_metadata
from .seeding import STREAM_NETWORK, STREAM_REPLICATE, derive_seed


@dataclass(frozen=True)
class ExperimentConfig:
    process: linproc.LinearProcessSpec
    net: object                 # FcnSpec, or FcnSkeleton drawn with he_init
    n: int
    replicates: int
    seed: int = 0
    pooling: fcn.PoolingWeights = None   # None means GAP
    channel: int = 0
    workers: int = 1

    def network(self):
        if isinstance(self.net, fcn.FcnSpec):
            return self.net
        return fcn.he_init(self.net, derive_seed(self.seed, STREAM_NETWORK))


@dataclass
class McReport:
    outputs: np.ndarray                 # (R, m_L) pooled outputs
    channel: int
    degenerate: bool = False
    reason: str = ""
    standardized: np.ndarray = None
    qq: np.ndarray = None               # (R, 2) theoretical / empirical
    ks: float = None
    skewness: float = None
    excess_kurtosis: float = None
    corr: np.ndarray = None
    permutation: np.ndarray = None
    degenerate_channels: list = field(default_factory=list)


def standardize(samples):
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise DegenerateError("standardization needs at least two samples")
    sd = x.std(ddof=1)
    if not sd > 0 or not np.isfinite(sd):
        raise DegenerateError("samples have zero spread")
    return (x - x.mean()) / sd


def ks_statistic(samples):
    """Sup-distance between the empirical CDF and the standard normal CDF."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    R = x.size
    F = stats.norm.cdf(x)
    i = np.arange(1, R + 1)
    return float(max(np.max(i / R - F), np.max(F - (i - 1) / R)))


def qq_points(samples):
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    R = x.size
    if R < 2:
        raise DomainError("QQ points need at least two samples")
    theo = stats.norm.ppf((np.arange(1, R + 1) - 0.5) / R)
    return np.column_stack([theo, x])


def skew_kurt(samples):
    """Moment-ratio skewness and excess kurtosis (biased estimators)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 4:
        raise DomainError("need at least four samples")
    if not x.std() > 0:
        raise DegenerateError("samples have zero spread")
    return float(stats.skew(x)), float(stats.kurtosis(x))


def empirical_corr(outputs):
    """Pearson correlation across replicates of an ``(R, m)`` array."""
    Y = np.asarray(outputs, dtype=float)
    if Y.shape[0] < 2:
        raise DomainError("need at least two replicates")
    sd = Y.std(axis=0)
    if np.any(sd == 0):
        raise DegenerateError(f"channels {np.flatnonzero(sd == 0).tolist()} are constant")
    C = np.corrcoef(Y, rowvar=False)
    C = np.atleast_2d(C)
    np.fill_diagonal(C, 1.0)
    return C


def reorder_neurons(C, absolute=False):
    """Greedy path ordering that keeps strongly correlated neurons adjacent.

    Starts from the most correlated pair and repeatedly attaches the unvisited
    neuron with the largest correlation to either end of the path.  Ties go
    to the lowest index, and to the tail end before the head end.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DomainError("correlation matrix must be square")
    m = C.shape[0]
    if m <= 1:
        return np.arange(m)
    S = np.abs(C) if absolute else C
    best, pair = -np.inf, (0, 1)
    for i in range(m):
        for j in range(i + 1, m):
            if S[i, j] > best:
                best, pair = S[i, j], (i, j)
    path = list(pair)
    left = [u for u in range(m) if u not in pair]
    while left:
        best, choice = -np.inf, None
        for u in left:
            for end, anchor in (("tail", path[-1]), ("head", path[0])):
                if S[anchor, u] > best:
                    best, choice = S[anchor, u], (u, end)
        u, end = choice
        if end == "tail":
            path.append(u)
        else:
            path.insert(0, u)
        left.remove(u)
    return np.array(path)


def _replicate(net, process, n, seed, r, pooling):
    x = linproc.simulate(process, n, derive_seed(seed, STREAM_REPLICATE, r))
    H = fcn.forward(net, x)
    return fcn.gap(H) if pooling is None else fcn.wgap(H, pooling)


def pooled_outputs(cfg, net=None):
    """``(R, m_L)`` array of pooled outputs, one row per replicate index."""
    if cfg.replicates < 1:
        raise DomainError("need at least one replicate")
    net = net or cfg.network()
    if cfg.n < fcn.receptive_field(net):
        raise DomainError("series length must be at least the receptive field")
    run = lambda r: _replicate(net, cfg.process, cfg.n, cfg.seed, r, cfg.pooling)
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            rows = list(ex.map(run, range(cfg.replicates)))
    else:
        rows = [run(r) for r in range(cfg.replicates)]
    return np.vstack(rows)


def run_clt_experiment(cfg):
    net = cfg.network()
    out = pooled_outputs(cfg, net)
    rep = McReport(outputs=out, channel=cfg.channel)
    try:
        z = standardize(out[:, cfg.channel])
    except DegenerateError as exc:
        rep.degenerate = True
        rep.reason = str(exc)
        return rep
    rep.standardized = z
    rep.qq = qq_points(z)
    rep.ks = ks_statistic(z)
    if z.size >= 4:
        rep.skewness, rep.excess_kurtosis = skew_kurt(z)
    sd = out.std(axis=0)
    rep.degenerate_channels = np.flatnonzero(sd == 0).tolist()
    live = np.flatnonzero(sd > 0)
    if live.size >= 2 and out.shape[0] >= 2:
        C = empirical_corr(out[:, live])
        rep.corr = C
        rep.permutation = live[reorder_neurons(C, absolute=True)]
    return rep


def single_path_corr(process, net, n, seed, bandwidth=None, bandwidth_const=1.5):
    """Long-run output correlation from one long path.

    Uses only the ``n - K_L + 1`` interior windows, estimates the covariance
    with the Bartlett kernel and returns ``(estimate, corr, permutation)``
    where the permutation orders neurons by absolute correlation.
    """
    x = linproc.simulate(process, n, seed)
    K = fcn.receptive_field(net)
    Y = fcn.forward(net, x)[:, :n - K + 1]
    T = Y.shape[1]
    b = bandwidth if bandwidth is not None else lrcov.default_bandwidth(T, bandwidth_const)
    est = lrcov.lr_cov_estimate(Y, lrcov.KernelSpec(b))
    C = est.corr()
    return est, C, reorder_neurons(C, absolute=True)


def export_report(rep, outdir, meta=None):
    """One CSV per diagnostic plus a metadata sidecar."""
    ensure_dir(outdir)
    R, m = rep.outputs.shape
    cols = [f"y{j + 1}" for j in range(m)]
    rows = (list(rep.outputs[i]) + ([rep.standardized[i]] if rep.standardized is not None else [])
            for i in range(R))
    write_csv(os.path.join(outdir, "samples.csv"),
              cols + (["standardized"] if rep.standardized is not None else []), rows)
    if rep.qq is not None:
        write_csv(os.path.join(outdir, "qq.csv"), ["theoretical", "empirical"], rep.qq)
    summary = {"degenerate": rep.degenerate, "channel": rep.channel + 1,
               "replicates": R}
    if not rep.degenerate:
        summary.update(ks=rep.ks, skewness=rep.skewness,
                       excess_kurtosis=rep.excess_kurtosis)
    write_csv(os.path.join(outdir, "summary.csv"), ["statistic", "value"],
              [(k, v) for k, v in summary.items()])
    if rep.corr is not None:
        write_matrix_csv(os.path.join(outdir, "corr.csv"), rep.corr)
        write_csv(os.path.join(outdir, "permutation.csv"), ["position", "neuron"],
                  [(i + 1, int(p) + 1) for i, p in enumerate(rep.permutation)])
    if meta is not None:
        write_metadata(os.path.join(outdir, "metadata.txt"), meta)
