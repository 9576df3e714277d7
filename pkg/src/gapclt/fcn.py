"""Fixed-parameter fully convolutional networks on (multivariate) series.

Layer ``l`` maps the zero-padded sequence ``H^{(l-1)}`` to

    H^{(l)}_t = I^{(l)} H^{(l-1)}_t + act(b^{(l)} + sum_j W^{(l)}_j H^{(l-1)}_{t+j})

for every ``t >= 1``.  Only the *input* is zero-extended beyond position
``n``; deeper layers are evaluated on that extended input, so that
``H^{(L)}_t`` is exactly a fixed function of the window
``x_t, ..., x_{t+K_L-1}`` (zeros past ``n``) at every position, including
the right boundary.

Arrays follow the ``(channels, time)`` layout.  Filters of a layer are stored
as one ``(k, m_out, m_in)`` array.
"""
from configparser import ConfigParser
from dataclasses import dataclass, field
import math

import numpy as np

from .exceptions import DomainError, FormatError, StructureError

ACTIVATIONS = ("relu", "sigmoid")


def relu(z):
    return np.maximum(z, 0.0)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def activation_fn(name):
    if name == "relu":
        return relu
    if name == "sigmoid":
        return sigmoid
    raise DomainError(f"unknown activation {name!r}")


def activation_lipschitz(name):
    return 1.0 if name == "relu" else 0.25


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def generalized_identity(m_out, m_in):
    """Rectangular matrix with ones on the main diagonal."""
    return np.eye(m_out, m_in)


@dataclass(frozen=True, eq=False)
class BatchNorm:
    """Inference-mode normalization ``z -> (z - mean) / sqrt(std**2 + eps)``."""
    mean: np.ndarray
    std: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "std", _frozen(self.std))
        if not self.eps > 0:
            raise DomainError("batch-norm eps must be positive")
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise StructureError("batch-norm mean/std must be matching vectors")

    @property
    def scale(self):
        return np.sqrt(self.std**2 + self.eps)

    def __call__(self, z):
        return (z - self.mean[:, None]) / self.scale[:, None]


@dataclass(frozen=True, eq=False)
class ConvLayer:
    filters: np.ndarray            # (k, m_out, m_in)
    bias: np.ndarray               # (m_out,)
    residual: np.ndarray = None    # (m_out, m_in); zeros = no skip
    bn: BatchNorm = None

    def __post_init__(self):
        W = np.array(self.filters, dtype=float)
        if W.ndim != 3 or W.shape[0] < 1:
            raise StructureError("filters must have shape (k, m_out, m_in) with k >= 1")
        object.__setattr__(self, "filters", _frozen(W))
        b = np.array(self.bias, dtype=float).reshape(-1)
        if b.shape != (W.shape[1],):
            raise StructureError(f"bias has length {b.size}, expected {W.shape[1]}")
        object.__setattr__(self, "bias", _frozen(b))
        R = (np.zeros(W.shape[1:]) if self.residual is None
             else np.array(self.residual, dtype=float))
        if R.shape != W.shape[1:]:
            raise StructureError(f"residual has shape {R.shape}, expected {W.shape[1:]}")
        object.__setattr__(self, "residual", _frozen(R))
        if self.bn is not None and self.bn.mean.shape != (W.shape[1],):
            raise StructureError("batch-norm parameters do not match layer width")

    @property
    def width(self):
        return self.filters.shape[0]

    @property
    def m_out(self):
        return self.filters.shape[1]

    @property
    def m_in(self):
        return self.filters.shape[2]


@dataclass(frozen=True, eq=False)
class Head:
    """Dense classification head ``y = A v + b``."""
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = _frozen(np.atleast_2d(self.A))
        b = _frozen(np.reshape(self.b, -1))
        if b.shape != (A.shape[0],):
            raise StructureError("head bias length must equal number of classes")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n_classes(self):
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class FcnSpec:
    input_dim: int
    layers: tuple
    activation: str = "relu"
    head: Head = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise StructureError("an FCN needs at least one layer")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")
        m = self.input_dim
        for i, layer in enumerate(self.layers, start=1):
            if layer.m_in != m:
                raise StructureError(f"layer {i} expects {layer.m_in} input channels, "
                                     f"previous width is {m}")
            m = layer.m_out
        if self.head is not None and self.head.A.shape[1] != m:
            raise StructureError(f"head expects {self.head.A.shape[1]} features, "
                                 f"network outputs {m}")

    @property
    def out_dim(self):
        return self.layers[-1].m_out

    @property
    def filter_widths(self):
        return tuple(layer.width for layer in self.layers)


@dataclass(frozen=True)
class FcnSkeleton:
    """Dimensions-only description consumed by :func:`he_init`.

    ``residual`` is ``"none"``, ``"identity"`` (skip on every layer) or a
    tuple of booleans, one per layer.
    """
    input_dim: int
    filter_widths: tuple
    widths: tuple
    activation: str = "relu"
    residual: object = "none"
    n_classes: int = None

    def residual_flags(self):
        if self.residual == "none":
            return (False,) * len(self.widths)
        if self.residual == "identity":
            return (True,) * len(self.widths)
        flags = tuple(bool(f) for f in self.residual)
        if len(flags) != len(self.widths):
            raise StructureError("one residual flag per layer required")
        return flags


def residual_blocks(n_blocks, width=8, filter_widths=(3, 2), input_dim=1,
                    activation="relu", n_classes=None):
    """Skeleton of ``n_blocks`` stacked blocks of two convolutions.

    Within a block the first convolution has no skip and the second carries
    an identity skip connection.
    """
    fw, widths, flags = [], [], []
    for _ in range(n_blocks):
        fw += list(filter_widths)
        widths += [width] * len(filter_widths)
        flags += [False] * (len(filter_widths) - 1) + [True]
    return FcnSkeleton(input_dim, tuple(fw), tuple(widths), activation,
                       tuple(flags), n_classes)


def he_init(skeleton, seed):
    """Draw filters ``N(0, 2 / (k_l m_{l-1}))`` with zero biases."""
    rng = np.random.default_rng(seed)
    if len(skeleton.filter_widths) != len(skeleton.widths):
        raise StructureError("filter_widths and widths must have equal length")
    layers = []
    m_in = skeleton.input_dim
    for k, m_out, skip in zip(skeleton.filter_widths, skeleton.widths,
                              skeleton.residual_flags()):
        fan_in = k * m_in
        W = rng.standard_normal((k, m_out, m_in)) * math.sqrt(2.0 / fan_in)
        R = generalized_identity(m_out, m_in) if skip else None
        layers.append(ConvLayer(W, np.zeros(m_out), R))
        m_in = m_out
    head = None
    if skeleton.n_classes:
        bound = 1.0 / math.sqrt(m_in)
        head = Head(rng.uniform(-bound, bound, (skeleton.n_classes, m_in)),
                    np.zeros(skeleton.n_classes))
    return FcnSpec(skeleton.input_dim, layers, skeleton.activation, head)


def receptive_fields(spec_or_widths):
    """``K_l = sum_{q<=l} k_q - (l - 1)`` for every layer ``l``."""
    widths = (spec_or_widths.filter_widths if isinstance(spec_or_widths, FcnSpec)
              else tuple(spec_or_widths))
    if not widths:
        raise StructureError("at least one layer required")
    return tuple(int(np.sum(widths[:l])) - (l - 1) for l in range(1, len(widths) + 1))


def receptive_field(spec_or_widths):
    return receptive_fields(spec_or_widths)[-1]


def _as_series(spec, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and spec.input_dim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[0] != spec.input_dim:
        raise StructureError(f"input must have shape ({spec.input_dim}, n), got {x.shape}")
    return x


def _layer_valid(layer, H, act):
    """One layer on an already-extended sequence; output length shrinks by k-1."""
    k = layer.width
    T = H.shape[1] - k + 1
    pre = np.broadcast_to(layer.bias[:, None], (layer.m_out, T)).copy()
    for j in range(k):
        pre += layer.filters[j] @ H[:, j:j + T]
    if layer.bn is not None:
        pre = layer.bn(pre)
    return layer.residual @ H[:, :T] + act(pre)


def forward(spec, x):
    """Activations ``H^{(L)}_1..H^{(L)}_n`` as an ``(m_L, n)`` array."""
    x = _as_series(spec, x)
    n = x.shape[1]
    if n < 1:
        raise StructureError("series must have at least one time point")
    act = activation_fn(spec.activation)
    K = receptive_field(spec)
    H = np.concatenate([x, np.zeros((x.shape[0], K - 1))], axis=1)
    for layer in spec.layers:
        H = _layer_valid(layer, H, act)
    return H


def window_apply(spec, window):
    """Evaluate the window map ``g_L`` on one ``(d, K_L)`` block.

    Implemented as the layer-wise composition of window maps: layer ``l``
    at offset ``j`` only reads ``g_{l-1}`` on the sub-window starting at
    ``j``.  Independent of :func:`forward`'s vectorized convolution.
    """
    u = _as_series(spec, window)
    Ks = receptive_fields(spec)
    if u.shape[1] != Ks[-1]:
        raise StructureError(f"window length must be K_L={Ks[-1]}, got {u.shape[1]}")
    act = activation_fn(spec.activation)

    def g(level, start):
        if level == 0:
            return u[:, start]
        layer = spec.layers[level - 1]
        acc = layer.bias.copy()
        for j in range(layer.width):
            acc = acc + layer.filters[j] @ g(level - 1, start + j)
        if layer.bn is not None:
            acc = layer.bn(acc[:, None])[:, 0]
        return layer.residual @ g(level - 1, start) + act(acc)

    return g(len(spec.layers), 0)


def windows(x, K):
    """Zero-extended windows ``x_{t:t+K}`` for ``t = 1..n``; shape ``(n, d, K)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xe = np.concatenate([x, np.zeros((x.shape[0], K - 1))], axis=1)
    return np.stack([xe[:, t:t + K] for t in range(x.shape[1])])


@dataclass(frozen=True, eq=False)
class PoolingWeights:
    a: np.ndarray

    def __post_init__(self):
        a = _frozen(np.reshape(self.a, -1))
        if not np.all(np.isfinite(a)):
            raise DomainError("pooling weights must be finite")
        object.__setattr__(self, "a", a)

    @property
    def n(self):
        return self.a.size

    @classmethod
    def uniform(cls, n):
        return cls(np.full(int(n), 1.0 / n))


def wgap(H, w):
    """Weighted pooling ``sum_t a_t H_t``."""
    H = np.atleast_2d(H)
    a = w.a if isinstance(w, PoolingWeights) else np.reshape(w, -1)
    if a.size != H.shape[1]:
        raise StructureError(f"{a.size} pooling weights for a series of length {H.shape[1]}")
    return H @ a


def gap(H):
    """Global average pooling, computed as uniform-weight pooling."""
    H = np.atleast_2d(H)
    return wgap(H, PoolingWeights.uniform(H.shape[1]))


def softmax(y):
    y = np.asarray(y, dtype=float)
    z = np.exp(y - np.max(y, axis=-1, keepdims=True))
    return z / np.sum(z, axis=-1, keepdims=True)


def dense_softmax(v, head):
    if head is None:
        raise StructureError("network has no dense head")
    return softmax(head.A @ np.asarray(v, dtype=float) + head.b)


def weight_limit_G(a, h, b=None):
    """Finite-n weight autocorrelation ``(1/n) sum_t a_t b_{t+h}``.

    Weights outside ``1..n`` are zero; negative ``h`` is allowed.
    """
    a = a.a if isinstance(a, PoolingWeights) else np.reshape(a, -1)
    b = a if b is None else (b.a if isinstance(b, PoolingWeights) else np.reshape(b, -1))
    if a.size != b.size:
        raise StructureError("weight sequences must share the same length")
    n = a.size
    h = int(h)
    if abs(h) >= n:
        return 0.0
    if h >= 0:
        return float(np.dot(a[:n - h], b[h:]) / n)
    return float(np.dot(a[-h:], b[:n + h]) / n)


@dataclass(frozen=True)
class W2Diagnostic:
    n: int
    max_abs: float
    max_abs_over_sqrt_n: float
    G: tuple = field(default_factory=tuple)


def validate_W2(w, max_lag=5):
    """Finite-n quantities whose limits the weight conditions constrain."""
    a = w.a if isinstance(w, PoolingWeights) else np.reshape(w, -1)
    n = a.size
    mx = float(np.max(np.abs(a))) if n else 0.0
    return W2Diagnostic(n, mx, mx / math.sqrt(n) if n else float("nan"),
                        tuple(weight_limit_G(a, h) for h in range(max_lag + 1)))


def lipschitz_bound(spec):
    """Upper bound on the Lipschitz constant of ``x -> forward(x)`` (Frobenius norms)."""
    L_act = activation_lipschitz(spec.activation)
    C = 1.0
    for layer in spec.layers:
        conv = sum(np.linalg.norm(Wj, 2) for Wj in layer.filters)
        if layer.bn is not None:
            conv /= float(np.min(layer.bn.scale))
        C *= np.linalg.norm(layer.residual, 2) + L_act * conv
    return float(C)


# ---------------------------------------------------------------------------
# serialization

def _hex(values):
    return " ".join(float(v).hex() for v in np.ravel(values))


def _unhex(text, shape, where):
    try:
        vals = [float.fromhex(t) for t in text.split()]
    except ValueError as exc:
        raise FormatError(f"{where}: {exc}") from None
    if len(vals) != int(np.prod(shape)):
        raise FormatError(f"{where}: expected {int(np.prod(shape))} values, got {len(vals)}")
    return np.array(vals, dtype=float).reshape(shape)


def spec_to_config(spec):
    """Build a :class:`ConfigParser` holding every parameter as hex floats."""
    cp = ConfigParser(interpolation=None)
    cp["network"] = {"input_dim": str(spec.input_dim),
                     "n_layers": str(len(spec.layers)),
                     "activation": spec.activation}
    for i, layer in enumerate(spec.layers, start=1):
        sec = {"filter_width": str(layer.width), "in_width": str(layer.m_in),
               "out_width": str(layer.m_out),
               "filters": _hex(layer.filters), "bias": _hex(layer.bias),
               "residual": _hex(layer.residual)}
        if layer.bn is not None:
            sec.update(bn_mean=_hex(layer.bn.mean), bn_std=_hex(layer.bn.std),
                       bn_eps=float(layer.bn.eps).hex())
        cp[f"layer.{i}"] = sec
    if spec.head is not None:
        cp["head"] = {"n_classes": str(spec.head.n_classes),
                      "in_width": str(spec.head.A.shape[1]),
                      "A": _hex(spec.head.A), "b": _hex(spec.head.b)}
    return cp


def spec_from_config(cp):
    try:
        net = cp["network"]
        d = int(net["input_dim"])
        n_layers = int(net["n_layers"])
        layers = []
        for i in range(1, n_layers + 1):
            s = cp[f"layer.{i}"]
            k, mi, mo = int(s["filter_width"]), int(s["in_width"]), int(s["out_width"])
            where = f"[layer.{i}]"
            bn = None
            if "bn_mean" in s:
                bn = BatchNorm(_unhex(s["bn_mean"], (mo,), where),
                               _unhex(s["bn_std"], (mo,), where),
                               float.fromhex(s["bn_eps"]))
            layers.append(ConvLayer(_unhex(s["filters"], (k, mo, mi), where),
                                    _unhex(s["bias"], (mo,), where),
                                    _unhex(s["residual"], (mo, mi), where), bn))
        head = None
        if cp.has_section("head"):
            s = cp["head"]
            K, m = int(s["n_classes"]), int(s["in_width"])
            head = Head(_unhex(s["A"], (K, m), "[head]"), _unhex(s["b"], (K,), "[head]"))
        return FcnSpec(d, layers, net["activation"], head)
    except KeyError as exc:
        raise FormatError(f"missing section or key {exc}") from None


def save_spec(spec, path, extra=None):
    """Write ``spec`` (plus optional extra sections) as key-value text."""
    cp = spec_to_config(spec)
    for name, sec in (extra or {}).items():
        cp[name] = sec
    with open(path, "w") as fh:
        cp.write(fh)


def load_spec(path):
    cp = ConfigParser(interpolation=None)
    with open(path) as fh:
        cp.read_file(fh)
    return spec_from_config(cp)
