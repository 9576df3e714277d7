"""Training FCN classifiers with GAP, WGAP or penalized WGAP pooling.

Everything is plain numpy with hand-written backpropagation.  The model is

    conv -> [batch norm] -> act (+ skip)  ...  -> sum_t a_t H_t -> dense -> softmax

and the loss is the mean cross-entropy plus ``lam * sum_j (a_{j+1} - a_j)**2``.
Series are zero-extended on the right by ``K_L - 1`` before the first layer,
matching :func:`gapclt.fcn.forward`.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import warnings

import numpy as np

from . import fcn, linproc
from .exceptions import DivergenceError, DomainError, FormatError, StructureError
from .io import fmt, write_csv
from .seeding import STREAM_DATA, STREAM_EPOCH, STREAM_FOLD, STREAM_NETWORK, derive_seed, rng_for

MODES = ("gap", "wgap", "regwgap")
CE_CLAMP = 1e-12
BN_MOMENTUM = 0.9
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def default_lambda_grid():
    return tuple(0.001 * 2.0**k for k in range(16))


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int = 16
    lam: float = 0.0
    grid: tuple = field(default_factory=default_lambda_grid)
    folds: int = 5
    cv_epochs: int = 80
    seed: int = 0
    batch_norm: bool = False
    workers: int = 1

    def __post_init__(self):
        if not self.lr > 0:
            raise DomainError("learning rate must be positive")
        if self.epochs < 1 or self.cv_epochs < 1:
            raise DomainError("epochs must be positive")
        if self.batch_size < 1:
            raise DomainError("batch size must be positive")
        if not self.lam >= 0:
            raise DomainError("lambda must be non-negative")
        if len(self.grid) == 0:
            raise DomainError("lambda grid must be nonempty")
        if self.folds < 2:
            raise DomainError("need at least two folds")


@dataclass
class LabeledDataset:
    """Equal-length series ``X`` of shape ``(N, d, n)`` with labels in ``1..K``."""
    X: np.ndarray
    y: np.ndarray
    n_classes: int = None
    split: str = "train"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 2:
            self.X = self.X[:, None, :]
        if self.X.ndim != 3 or self.X.shape[0] == 0:
            raise StructureError("dataset must hold a nonempty (N, d, n) array")
        self.y = np.asarray(self.y, dtype=int).reshape(-1)
        if self.y.size != self.X.shape[0]:
            raise StructureError("one label per series required")
        if self.n_classes is None:
            self.n_classes = int(self.y.max())
        if self.y.min() < 1 or self.y.max() > self.n_classes:
            raise DomainError(f"labels must lie in 1..{self.n_classes}")

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx, split=None):
        return LabeledDataset(self.X[idx], self.y[idx], self.n_classes, split or self.split)


@dataclass
class ModelState:
    """Trainable parameters plus fixed structure.

    ``params`` maps ``W1, b1, ..., a, A, c`` to arrays; ``residual`` holds the
    fixed skip matrices; ``bn_mean``/``bn_var`` are running statistics
    (``None`` when batch norm is off).
    """
    params: dict
    residual: list
    activation: str = "relu"
    bn_mean: list = None
    bn_var: list = None
    freeze_pooling: bool = False

    @property
    def n_layers(self):
        return len(self.residual)

    @property
    def widths(self):
        return [self.params[f"W{l}"].shape[1] for l in range(1, self.n_layers + 1)]

    def copy(self):
        cp = lambda xs: None if xs is None else [x.copy() for x in xs]
        return ModelState({k: v.copy() for k, v in self.params.items()},
                          list(self.residual), self.activation,
                          cp(self.bn_mean), cp(self.bn_var), self.freeze_pooling)

    def to_spec(self):
        """Inference-mode :class:`~gapclt.fcn.FcnSpec` (running BN statistics)."""
        layers = []
        for l in range(1, self.n_layers + 1):
            bn = None
            if self.bn_mean is not None:
                bn = fcn.BatchNorm(self.bn_mean[l - 1], np.sqrt(self.bn_var[l - 1]))
            layers.append(fcn.ConvLayer(self.params[f"W{l}"], self.params[f"b{l}"],
                                        self.residual[l - 1], bn))
        d = self.params["W1"].shape[2]
        return fcn.FcnSpec(d, layers, self.activation,
                           fcn.Head(self.params["A"], self.params["c"]))

    def pooling(self):
        return fcn.PoolingWeights(self.params["a"])


def init_model(skeleton, n, seed, batch_norm=False, freeze_pooling=False):
    """He-initialized model with pooling weights set to ``1/n``."""
    if not skeleton.n_classes:
        raise StructureError("skeleton needs n_classes for a dense head")
    spec = fcn.he_init(skeleton, seed)
    params = {}
    for l, layer in enumerate(spec.layers, start=1):
        params[f"W{l}"] = np.array(layer.filters)
        params[f"b{l}"] = np.array(layer.bias)
    params["a"] = np.full(int(n), 1.0 / n)
    params["A"] = np.array(spec.head.A)
    params["c"] = np.array(spec.head.b)
    bm = [np.zeros(w) for w in skeleton.widths] if batch_norm else None
    bv = [np.ones(w) for w in skeleton.widths] if batch_norm else None
    return ModelState(params, [np.array(l.residual) for l in spec.layers],
                      skeleton.activation, bm, bv, freeze_pooling)


# ---------------------------------------------------------------------------
# losses

def penalty(a, lam):
    a = a.a if isinstance(a, fcn.PoolingWeights) else np.reshape(a, -1)
    if a.size < 2:
        raise DomainError("penalty needs at least two weights")
    return float(lam * np.sum(np.diff(a) ** 2))


def penalty_grad(a, lam):
    """``2 lam D^T D a`` with ``D`` the first-difference operator."""
    d = np.diff(np.reshape(a, -1))
    g = np.zeros(d.size + 1)
    g[:-1] -= d
    g[1:] += d
    return 2.0 * lam * g


def cross_entropy(p, y, return_flag=False):
    """``-log p_y`` with ``y`` in ``1..K``; ``p_y`` is clamped at 1e-12."""
    p = np.asarray(p, dtype=float)
    py = p[..., int(y) - 1] if np.ndim(y) == 0 else np.take_along_axis(
        p, (np.asarray(y) - 1)[:, None], axis=1)[:, 0]
    saturated = np.asarray(py) < CE_CLAMP
    out = -np.log(np.maximum(py, CE_CLAMP))
    out = float(out) if np.ndim(out) == 0 else out
    return (out, bool(np.any(saturated))) if return_flag else out


# ---------------------------------------------------------------------------
# forward / backward

def _extend(X, K):
    # (B, d, n) -> time-major (B, n + K - 1, d), zero-extended on the right
    H = np.transpose(X, (0, 2, 1))
    return np.concatenate([H, np.zeros((H.shape[0], K - 1, H.shape[2]))], axis=1)


def _im2col(H, k):
    """``cols[b, t, j*m + i] = H[b, t+j, i]``."""
    B, _, m = H.shape
    win = np.lib.stride_tricks.sliding_window_view(H, k, axis=1)   # (B, T, m, k)
    T = win.shape[1]
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(B, T, k * m)


def _wmat(W):
    k, mo, mi = W.shape
    return W.transpose(0, 2, 1).reshape(k * mi, mo)


def _act(name, z):
    return fcn.relu(z) if name == "relu" else fcn.sigmoid(z)


def _act_grad(name, z, out):
    if name == "relu":
        return (z > 0).astype(float)
    return out * (1.0 - out)


def _forward(model, X, training):
    """Returns logits and a cache for :func:`_backward`.

    Internally activations are time-major, ``(B, T, m)``.
    """
    p = model.params
    L = model.n_layers
    ks = [p[f"W{l}"].shape[0] for l in range(1, L + 1)]
    H = _extend(X, fcn.receptive_field(ks))
    cache = []
    for l in range(1, L + 1):
        W, b = p[f"W{l}"], p[f"b{l}"]
        k = W.shape[0]
        cols = _im2col(H, k)
        T = cols.shape[1]
        pre = cols @ _wmat(W) + b
        bn = None
        if model.bn_mean is not None:
            if training:
                mu = pre.mean(axis=(0, 1))
                var = pre.var(axis=(0, 1))
            else:
                mu, var = model.bn_mean[l - 1], model.bn_var[l - 1]
            inv = 1.0 / np.sqrt(var + 1e-5)
            z = (pre - mu) * inv
            bn = (mu, var, inv)
        else:
            z = pre
        s = _act(model.activation, z)
        out = H[:, :T] @ model.residual[l - 1].T + s
        cache.append((H.shape, cols, z, s, bn))
        H = out
    v = np.einsum("btm,t->bm", H, p["a"])          # (B, m_L)
    logits = v @ p["A"].T + p["c"]
    return logits, (cache, H, v)


def _backward(model, cache, dlogits, training):
    p = model.params
    layers, HL, v = cache
    g = {"A": dlogits.T @ v, "c": dlogits.sum(axis=0)}
    dv = dlogits @ p["A"]                           # (B, m_L)
    g["a"] = np.einsum("bm,btm->t", dv, HL)
    dH = p["a"][None, :, None] * dv[:, None, :]
    for l in range(model.n_layers, 0, -1):
        shape, cols, z, s, bn = layers[l - 1]
        W = p[f"W{l}"]
        k, mo, mi = W.shape
        B, T = z.shape[:2]
        dHin = np.zeros(shape)
        dHin[:, :T] += dH @ model.residual[l - 1]
        dz = dH * _act_grad(model.activation, z, s)
        if bn is not None:
            mu, var, inv = bn
            if training:
                # batch-norm backward without affine parameters
                dpre = inv * (dz - dz.mean(axis=(0, 1))
                              - z * (dz * z).mean(axis=(0, 1)))
            else:
                dpre = dz * inv
        else:
            dpre = dz
        g[f"b{l}"] = dpre.sum(axis=(0, 1))
        d2 = dpre.reshape(B * T, mo)
        gW = cols.reshape(B * T, k * mi).T @ d2
        g[f"W{l}"] = gW.reshape(k, mi, mo).transpose(0, 2, 1).copy()
        dcols = (d2 @ _wmat(W).T).reshape(B, T, k, mi)
        for j in range(k):
            dHin[:, j:j + T] += dcols[:, :, j]
        dH = dHin
    return g


def _batch_loss(model, X, y, lam, training):
    with np.errstate(invalid="ignore", over="ignore"):
        logits, cache = _forward(model, X, training)
    if not np.all(np.isfinite(logits)):
        raise DivergenceError("non-finite network output")
    P = fcn.softmax(logits)
    ce, saturated = cross_entropy(P, y, return_flag=True)
    loss = float(np.mean(ce)) + penalty(model.params["a"], lam)
    return loss, P, cache, saturated


def _loss_grad_stats(model, X, y, lam, training):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.shape[0] == 0:
        raise DomainError("batch must be nonempty")
    loss, P, cache, _ = _batch_loss(model, X, y, lam, training)
    B = X.shape[0]
    dlogits = P.copy()
    dlogits[np.arange(B), y - 1] -= 1.0
    py = P[np.arange(B), y - 1]
    dlogits[py < CE_CLAMP] = 0.0
    dlogits /= B
    grads = _backward(model, cache, dlogits, training)
    grads["a"] = grads["a"] + penalty_grad(model.params["a"], lam)
    if not all(np.all(np.isfinite(v)) for v in grads.values()):
        raise DivergenceError("non-finite gradient")
    stats = [c[4] for c in cache[0]]
    return loss, grads, stats


def loss_and_grad(model, X, y, lam=0.0, training=True):
    """Mean cross-entropy plus penalty and its exact gradient.

    Returns ``(loss, grads)`` where ``grads`` has the keys of
    ``model.params``.  Samples whose clamped probability is saturated
    contribute zero gradient.
    """
    loss, grads, _ = _loss_grad_stats(model, X, y, lam, training)
    return loss, grads


def _update_bn(model, stats):
    if model.bn_mean is None:
        return
    for l, (mu, var, _) in enumerate(stats):
        model.bn_mean[l] = BN_MOMENTUM * model.bn_mean[l] + (1 - BN_MOMENTUM) * mu
        model.bn_var[l] = BN_MOMENTUM * model.bn_var[l] + (1 - BN_MOMENTUM) * var


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0


def adam_init(params):
    return AdamState({k: np.zeros_like(v) for k, v in params.items()},
                     {k: np.zeros_like(v) for k, v in params.items()}, 0)


def adam_step(params, grads, state, lr=1e-3, frozen=()):
    """One Adam update; returns new ``(params, state)`` without mutating inputs."""
    b1, b2 = ADAM_BETAS
    t = state.t + 1
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        if k in frozen or k not in grads:
            new_p[k], new_m[k], new_v[k] = p.copy(), state.m[k].copy(), state.v[k].copy()
            continue
        if grads[k].shape != p.shape:
            raise StructureError(f"gradient for {k} has shape {grads[k].shape}, expected {p.shape}")
        m = b1 * state.m[k] + (1 - b1) * grads[k]
        v = b2 * state.v[k] + (1 - b2) * grads[k] ** 2
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        new_p[k] = p - lr * mhat / (np.sqrt(vhat) + ADAM_EPS)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)


# ---------------------------------------------------------------------------
# training

def predict_proba(model, X):
    logits, _ = _forward(model, np.asarray(X, dtype=float), False)
    return fcn.softmax(logits)


def predict(model, X):
    # argmax returns the first maximum, i.e. the smallest class index on ties
    return np.argmax(predict_proba(model, X), axis=1) + 1


def evaluate(model, data):
    return float(np.mean(predict(model, data.X) == data.y))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float


def _check_mode(mode):
    mode = mode.lower().replace("_", "")
    if mode not in MODES:
        raise DomainError(f"unknown pooling mode {mode!r}; expected one of {MODES}")
    return mode


def train(skeleton, data, cfg, mode="regwgap", val=None, freeze_pooling=False,
          model=None, track=True):
    """Train a classifier and return ``(model, log)``.

    ``mode`` is ``gap`` (weights frozen at ``1/n``), ``wgap`` (learned,
    ``lam`` ignored) or ``regwgap`` (learned with the difference penalty).
    ``val`` is an optional held-out set whose accuracy is logged.  With
    ``track=False`` the per-epoch accuracies are skipped (logged as NaN).
    """
    mode = _check_mode(mode)
    lam = cfg.lam if mode == "regwgap" else 0.0
    frozen = mode == "gap" or freeze_pooling
    if skeleton.input_dim != data.X.shape[1]:
        raise StructureError("skeleton input_dim does not match the data")
    n = data.X.shape[2]
    if model is None:
        model = init_model(skeleton, n, derive_seed(cfg.seed, STREAM_NETWORK),
                           cfg.batch_norm, frozen)
    state = adam_init(model.params)
    N = len(data)
    log = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng_for(cfg.seed, STREAM_EPOCH, epoch).permutation(N)
        total = 0.0
        for s in range(0, N, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads, stats = _loss_grad_stats(model, data.X[idx], data.y[idx], lam, True)
            params, state = adam_step(model.params, grads, state, cfg.lr,
                                      frozen=("a",) if frozen else ())
            _update_bn(model, stats)
            model.params = params
            total += loss * idx.size
        if not all(np.all(np.isfinite(v)) for v in model.params.values()):
            raise DivergenceError(f"parameters became non-finite in epoch {epoch}")
        nan = float("nan")
        log.append(EpochRecord(epoch, total / N,
                               evaluate(model, data) if track else nan,
                               evaluate(model, val) if track and val is not None else nan))
    return model, log


def write_log(path, log):
    write_csv(path, ["epoch", "train_loss", "train_acc", "val_acc"],
              ((r.epoch, r.train_loss, r.train_acc, r.val_acc) for r in log))


def max_successive_diff(a):
    a = a.a if isinstance(a, fcn.PoolingWeights) else np.reshape(a, -1)
    return float(np.max(np.abs(np.diff(a))))


# ---------------------------------------------------------------------------
# cross-validation

def stratified_folds(y, folds, seed):
    """Fold index per sample; falls back to plain shuffling if a class is too small."""
    y = np.asarray(y)
    rng = rng_for(seed, STREAM_FOLD)
    assign = np.empty(y.size, dtype=int)
    classes, counts = np.unique(y, return_counts=True)
    if np.any(counts < folds):
        warnings.warn(f"a class has fewer than {folds} members; using unstratified folds",
                      UserWarning, stacklevel=2)
        perm = rng.permutation(y.size)
        assign[perm] = np.arange(y.size) % folds
        return assign
    offset = 0
    for c in classes:
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        assign[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size
    return assign


@dataclass
class CvResult:
    best: float
    grid: tuple
    mean_acc: np.ndarray         # (len(grid),)
    fold_acc: np.ndarray         # (len(grid), folds)


def cross_validate_lambda(skeleton, data, cfg, grid=None):
    """Pick ``lam`` by k-fold validation accuracy of ``regwgap`` training.

    Each fold trains for ``cfg.cv_epochs`` epochs; ties go to the smaller
    ``lam``.  Grid points and folds run in ``cfg.workers`` threads with
    seeds derived from ``(cfg.seed, fold)``, so results do not depend on
    the worker count.
    """
    grid = tuple(sorted(float(g) for g in (grid if grid is not None else cfg.grid)))
    if not grid:
        raise DomainError("lambda grid must be nonempty")
    assign = stratified_folds(data.y, cfg.folds, cfg.seed)
    units = [(i, f) for i in range(len(grid)) for f in range(cfg.folds)]

    def run(unit):
        i, f = unit
        fcfg = replace(cfg, lam=grid[i], epochs=cfg.cv_epochs,
                       seed=derive_seed(cfg.seed, STREAM_FOLD, f))
        tr = data.subset(np.flatnonzero(assign != f))
        va = data.subset(np.flatnonzero(assign == f), "val")
        model, _ = train(skeleton, tr, fcfg, "regwgap", track=False)
        return evaluate(model, va)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            accs = list(ex.map(run, units))
    else:
        accs = [run(u) for u in units]
    fold_acc = np.array(accs).reshape(len(grid), cfg.folds)
    mean_acc = fold_acc.mean(axis=1)
    best = grid[int(np.argmax(mean_acc))]      # first maximum = smallest lam
    return CvResult(best, grid, mean_acc, fold_acc)


def write_cv_table(path, res):
    write_csv(path, ["lambda", "mean_val_acc"] + [f"fold{f + 1}" for f in range(res.fold_acc.shape[1])],
              ([lam, m] + list(fa) for lam, m, fa in zip(res.grid, res.mean_acc, res.fold_acc)))


# ---------------------------------------------------------------------------
# data

def load_ucr(path, split="train"):
    """Read a UCR-style file: label first, then the series values.

    The delimiter (tab or comma) is detected from the first nonblank line.
    Labels are mapped to ``1..K`` in order of first appearance.
    """
    with open(path) as fh:
        lines = [(i, ln.strip()) for i, ln in enumerate(fh, start=1) if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: no data rows")
    delim = "\t" if "\t" in lines[0][1] else ","
    labels, rows = [], []
    for lineno, ln in lines:
        fields = ln.split(delim)
        try:
            lab = float(fields[0])
            vals = [float(v) for v in fields[1:]]
        except ValueError as exc:
            raise FormatError(f"{path}: row {lineno}: {exc}") from None
        if lab != int(lab):
            raise FormatError(f"{path}: row {lineno}: label {fields[0]!r} is not an integer")
        if rows and len(vals) != len(rows[0]):
            raise FormatError(f"{path}: row {lineno} has {len(vals)} values, "
                              f"expected {len(rows[0])}")
        if not vals:
            raise FormatError(f"{path}: row {lineno} has no series values")
        labels.append(int(lab))
        rows.append(vals)
    remap = {}
    for lab in labels:
        remap.setdefault(lab, len(remap) + 1)
    y = np.array([remap[l] for l in labels])
    ds = LabeledDataset(np.array(rows)[:, None, :], y, len(remap), split)
    ds.label_map = remap
    return ds


def write_ucr(path, data, delimiter="\t"):
    if data.X.shape[1] != 1:
        raise StructureError("the UCR format holds univariate series only")
    with open(path, "w") as fh:
        for lab, x in zip(data.y, data.X[:, 0, :]):
            fh.write(delimiter.join([str(int(lab))] + [fmt(v) for v in x]) + "\n")


def synthetic_ar1_task(seed, n=128, n_train=200, n_test=200, thetas=(0.2, 0.8)):
    """Two-class task: Gaussian AR(1) paths with different ``theta``.

    Classes are balanced and interleaved before a seeded shuffle.
    Returns ``(train, test)``.
    """
    procs = [linproc.make_ar1(th) for th in thetas]
    K = len(procs)

    def make(count, tag):
        y = np.arange(count) % K + 1
        X = np.stack([linproc.simulate(procs[c - 1], n, derive_seed(seed, STREAM_DATA, tag, i))
                      for i, c in enumerate(y)])
        perm = rng_for(seed, STREAM_DATA, tag, count).permutation(count)
        return LabeledDataset(X[perm], y[perm], K, "train" if tag == 0 else "test")

    return make(n_train, 0), make(n_test, 1)


def save_checkpoint(model, path, extra=None):
    """FCN serialization plus a ``[pooling]`` section holding the weights."""
    sections = {"pooling": {"n": str(model.params["a"].size),
                            "a": " ".join(float(v).hex() for v in model.params["a"])}}
    sections.update(extra or {})
    fcn.save_spec(model.to_spec(), path, sections)


def load_checkpoint(path):
    """Returns ``(FcnSpec, PoolingWeights)``."""
    from configparser import ConfigParser
    cp = ConfigParser(interpolation=None)
    with open(path) as fh:
        cp.read_file(fh)
    spec = fcn.spec_from_config(cp)
    if not cp.has_section("pooling"):
        raise FormatError(f"{path}: missing [pooling] section")
    try:
        a = np.array([float.fromhex(t) for t in cp["pooling"]["a"].split()])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad [pooling] section: {exc}") from None
    return spec, fcn.PoolingWeights(a)
