"""Fixed-architecture saliency CNN with hand-written backpropagation.

conv1(6,5) - sigmoid - meanpool(2) - conv2(12,5) - sigmoid - meanpool(2) -
conv3(24,3) - sigmoid - fc4(200) - relu - dropout - fc5(2) - softmax

Patches are ``(H, W, C)``; convolution weights are ``(out, kh, kw, in)``;
fully connected weights are ``(out, in)`` and the conv3 output is flattened
in ``(H, W, C)`` order. Output column 1 is the salient class.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError

INPUT_SHAPE = (32, 32, 6)

# name -> shape, in serialization order
PARAM_SHAPES = OrderedDict(
    [
        ("conv1.weight", (6, 5, 5, 6)),
        ("conv1.bias", (6,)),
        ("conv2.weight", (12, 5, 5, 6)),
        ("conv2.bias", (12,)),
        ("conv3.weight", (24, 3, 3, 12)),
        ("conv3.bias", (24,)),
        ("fc4.weight", (200, 216)),
        ("fc4.bias", (200,)),
        ("fc5.weight", (2, 200)),
        ("fc5.bias", (2,)),
    ]
)

LAYERS = ("conv1", "sig1", "pool1", "conv2", "sig2", "pool2", "conv3", "sig3", "fc4", "relu4", "dropout4", "fc5")

# per-sample output shape after every layer
SHAPE_CHAIN = (
    ("conv1", (28, 28, 6)),
    ("pool1", (14, 14, 6)),
    ("conv2", (10, 10, 12)),
    ("pool2", (5, 5, 12)),
    ("conv3", (3, 3, 24)),
    ("flatten", (216,)),
    ("fc4", (200,)),
    ("fc5", (2,)),
)


@dataclass
class Network:
    params: "OrderedDict[str, np.ndarray]"
    layers: tuple = field(default=LAYERS)

    def __getitem__(self, name):
        return self.params[name]

    def astype(self, dtype):
        return Network(OrderedDict((k, v.astype(dtype)) for k, v in self.params.items()))

    def copy(self):
        return self.astype(self.dtype)

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def n_params(self):
        return sum(v.size for v in self.params.values())


def _fans(name, shape):
    if len(shape) == 4:
        out, kh, kw, cin = shape
        return kh * kw * cin, kh * kw * out
    out, cin = shape
    return cin, out


def init_weights(seed=0, dtype=np.float32, sigmoid_gain=1.0):
    """Glorot-uniform weights, zero biases, reproducible from ``seed``.

    ``sigmoid_gain`` widens the bound of the three sigmoid conv layers; 4 is
    the usual logistic-unit correction and keeps the conv stack from
    squashing the between-patch signal to nothing at initialisation.
    """
    rng = np.random.default_rng(seed)
    params = OrderedDict()
    for name, shape in PARAM_SHAPES.items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in, fan_out = _fans(name, shape)
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            if name.startswith("conv"):
                bound *= sigmoid_gain
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Network(params)


def zeros_like(net, dtype=np.float64):
    return OrderedDict((k, np.zeros(v.shape, dtype=dtype)) for k, v in net.params.items())


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def conv_forward(x, w, b):
    """Valid, stride-1 convolution of ``(B, H, W, C)`` by ``(F, k, k, C)``."""
    f, kh, kw, _ = w.shape
    bsz, h, wd, c = x.shape
    ho, wo = h - kh + 1, wd - kw + 1
    out = np.empty((bsz, ho, wo, f), dtype=np.float64)
    out[...] = b
    for dy in range(kh):
        for dx in range(kw):
            out += x[:, dy : dy + ho, dx : dx + wo, :] @ w[:, dy, dx, :].T
    return out


def conv_backward(x, w, dout, need_dx=True):
    f, kh, kw, c = w.shape
    ho, wo = dout.shape[1:3]
    dflat = dout.reshape(-1, f)
    dw = np.empty(w.shape, dtype=np.float64)
    dx = np.zeros(x.shape, dtype=np.float64) if need_dx else None
    for dy in range(kh):
        for dx_ in range(kw):
            xs = x[:, dy : dy + ho, dx_ : dx_ + wo, :]
            dw[:, dy, dx_, :] = dflat.T @ xs.reshape(-1, c)
            if need_dx:
                dx[:, dy : dy + ho, dx_ : dx_ + wo, :] += dout @ w[:, dy, dx_, :]
    return dw, dout.sum(axis=(0, 1, 2)), dx


def pool_forward(x):
    b, h, w, c = x.shape
    return x.reshape(b, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))


def pool_backward(dout):
    return np.repeat(np.repeat(dout, 2, axis=1), 2, axis=2) * 0.25


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape == INPUT_SHAPE:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != INPUT_SHAPE:
        raise ShapeError(f"expected patches of shape {INPUT_SHAPE}, got {x.shape}")
    return x


def forward_batch(net, x, mode="infer", rng=None, keep=0.5, mask=None):
    """Run a batch forward. Returns ``(probs (B, 2), cache)``.

    In ``train`` mode the fc4 activations are dropped with probability
    ``1 - keep`` and survivors scaled by ``1 / keep``; pass ``mask`` to reuse
    a fixed dropout mask instead of drawing one from ``rng``.
    """
    x = _as_batch(x)
    p = {k: v.astype(np.float64, copy=False) for k, v in net.params.items()}
    c = {"x": x}
    c["a1"] = sigmoid(conv_forward(x, p["conv1.weight"], p["conv1.bias"]))
    c["p1"] = pool_forward(c["a1"])
    c["a2"] = sigmoid(conv_forward(c["p1"], p["conv2.weight"], p["conv2.bias"]))
    c["p2"] = pool_forward(c["a2"])
    c["a3"] = sigmoid(conv_forward(c["p2"], p["conv3.weight"], p["conv3.bias"]))
    c["flat"] = c["a3"].reshape(len(x), -1)
    z4 = c["flat"] @ p["fc4.weight"].T + p["fc4.bias"]
    c["h4"] = np.maximum(z4, 0.0)
    if mode == "train":
        if mask is None:
            if rng is None:
                raise ValueError("train mode needs an rng or an explicit dropout mask")
            mask = (rng.random(c["h4"].shape) < keep) / keep
        c["mask"] = np.asarray(mask, dtype=np.float64).reshape(c["h4"].shape)
        c["d4"] = c["h4"] * c["mask"]
    elif mode == "infer":
        c["mask"] = None
        c["d4"] = c["h4"]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    c["logits"] = c["d4"] @ p["fc5.weight"].T + p["fc5.bias"]
    c["probs"] = softmax(c["logits"])
    return c["probs"], c


def forward(net, patch, mode="infer", rng=None, keep=0.5, mask=None):
    """Salient / non-salient probabilities ``(p_sal, p_nonsal)`` for one patch."""
    data = patch.data if hasattr(patch, "data") else patch
    probs, _ = forward_batch(net, data, mode, rng, keep, mask)
    return float(probs[0, 1]), float(probs[0, 0])


def predict_proba(net, x, batch=256):
    """Inference-mode probabilities for a stack of patches, shape ``(n, 2)``."""
    x = np.asarray(x)
    out = [forward_batch(net, x[i : i + batch])[0] for i in range(0, len(x), batch)]
    return np.concatenate(out) if out else np.empty((0, 2))


def shape_chain(cache):
    """Per-sample shapes of the cached activations, in layer order."""
    return (
        ("conv1", cache["a1"].shape[1:]),
        ("pool1", cache["p1"].shape[1:]),
        ("conv2", cache["a2"].shape[1:]),
        ("pool2", cache["p2"].shape[1:]),
        ("conv3", cache["a3"].shape[1:]),
        ("flatten", cache["flat"].shape[1:]),
        ("fc4", cache["h4"].shape[1:]),
        ("fc5", cache["logits"].shape[1:]),
    )


def loss(probs, label):
    """Mean cross-entropy ``-log p_true`` (p_true clamped at 1e-12)."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    label = np.atleast_1d(np.asarray(label, dtype=np.int64))
    p_true = probs[np.arange(len(label)), label]
    return float(-np.log(np.maximum(p_true, 1e-12)).mean())


def backward(net, cache, labels, scale=1.0):
    """Gradients of ``scale * mean cross-entropy`` w.r.t. every parameter (float64)."""
    p = {k: v.astype(np.float64, copy=False) for k, v in net.params.items()}
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n = len(labels)
    g = OrderedDict()

    dlogits = cache["probs"].copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits *= scale / n
    g["fc5.weight"] = dlogits.T @ cache["d4"]
    g["fc5.bias"] = dlogits.sum(axis=0)
    dd4 = dlogits @ p["fc5.weight"]
    dh4 = dd4 * cache["mask"] if cache["mask"] is not None else dd4
    dz4 = dh4 * (cache["h4"] > 0)
    g["fc4.weight"] = dz4.T @ cache["flat"]
    g["fc4.bias"] = dz4.sum(axis=0)
    dflat = dz4 @ p["fc4.weight"]

    a3 = cache["a3"]
    dz3 = dflat.reshape(a3.shape) * a3 * (1.0 - a3)
    g["conv3.weight"], g["conv3.bias"], dp2 = conv_backward(cache["p2"], p["conv3.weight"], dz3)
    a2 = cache["a2"]
    dz2 = pool_backward(dp2) * a2 * (1.0 - a2)
    g["conv2.weight"], g["conv2.bias"], dp1 = conv_backward(cache["p1"], p["conv2.weight"], dz2)
    a1 = cache["a1"]
    dz1 = pool_backward(dp1) * a1 * (1.0 - a1)
    g["conv1.weight"], g["conv1.bias"], _ = conv_backward(cache["x"], p["conv1.weight"], dz1, need_dx=False)
    return OrderedDict((k, g[k]) for k in PARAM_SHAPES)
