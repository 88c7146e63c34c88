"""Parameter containers and forward passes for the four networks.

Covers the coordinate MLPs (spatial, temporal, and the joint oracle
variant), the residual-block feature encoder, and the toy tracker
backbone. Initialization is He fan-in scaling with zero biases,
deterministic per seed.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .numerics import Tensor, add, conv2d, matmul, relu


# ----------------------------------------------------------------------- MLP

@dataclass(frozen=True)
class MlpSpec:
    """Layer dimensions, first to last: len(dims) == n_layers + 1."""
    dims: tuple

    def __post_init__(self):
        if len(self.dims) < 2:
            raise ShapeError("MLP needs at least one layer")


def stir_mlp_spec(in_dim, out_dim, hidden=64, layers=5):
    """Five-layer ReLU MLP shape used by both coordinate networks."""
    return MlpSpec(tuple([in_dim] + [hidden] * (layers - 1) + [out_dim]))


class MlpParams:
    """Weight/bias pairs; ReLU between layers, linear output."""

    def __init__(self, spec, weights, biases):
        self.spec = spec
        self.weights = weights
        self.biases = biases

    @property
    def n_layers(self):
        return len(self.weights)

    def tensors(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


def mlp_forward(params, x):
    """Apply the MLP to a (B, Din) batch."""
    if x.shape[-1] != params.spec.dims[0]:
        raise ShapeError(f"MLP input dim {x.shape[-1]} != {params.spec.dims[0]}")
    h = x
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = add(matmul(h, w), b)
        if i != last:
            h = relu(h)
    return h


# ------------------------------------------------------------------- encoder

@dataclass(frozen=True)
class EncoderSpec:
    in_channels: int = 3
    channels: int = 32
    blocks: int = 4


class EncoderParams:
    """Head conv, residual conv-ReLU-conv blocks with skips, tail conv.

    No up or downsampling anywhere, so output spatial size always equals
    the input's.
    """

    def __init__(self, spec, head, blocks, tail):
        self.spec = spec
        self.head = head        # (w, b)
        self.blocks = blocks    # list of (w1, b1, w2, b2)
        self.tail = tail        # (w, b)

    def tensors(self):
        out = list(self.head)
        for blk in self.blocks:
            out.extend(blk)
        out.extend(self.tail)
        return out


def encoder_forward(params, frame):
    """Encode an (H, W, 3) frame in [0,1] to (H, W, C) features."""
    t = frame if isinstance(frame, Tensor) else Tensor(frame)
    if t.data.ndim != 3 or t.shape[2] != params.spec.in_channels:
        raise ShapeError(f"encoder input shape {t.shape}")
    if not t.requires_grad:
        lo, hi = float(t.data.min()), float(t.data.max())
        if lo < -1e-5 or hi > 1 + 1e-5:
            raise DomainError(f"frame values outside [0,1]: [{lo}, {hi}]")
    h = conv2d(t, *params.head)
    for w1, b1, w2, b2 in params.blocks:
        h = add(conv2d(relu(conv2d(h, w1, b1)), w2, b2), h)
    return conv2d(h, *params.tail)


# ------------------------------------------------------------------- tracker

@dataclass(frozen=True)
class TrackerSpec:
    in_channels: int = 3
    channels: int = 16


class TrackerParams:
    """Two conv-ReLU blocks shared by template and search branches, plus
    a learnable response gain that keeps the correlation logits in a
    range where softmax training and attack gradients stay alive."""

    def __init__(self, spec, convs, gain):
        self.spec = spec
        self.convs = convs  # [(w, b), (w, b)]
        self.gain = gain    # scalar tensor

    def tensors(self):
        out = []
        for w, b in self.convs:
            out.extend([w, b])
        out.append(self.gain)
        return out


def tracker_features(params, patch):
    t = patch if isinstance(patch, Tensor) else Tensor(patch)
    h = t
    for w, b in params.convs:
        h = relu(conv2d(h, w, b))
    return h


# -------------------------------------------------------------------- init

def he_weight(rng, shape, fan_in, requires_grad=True):
    std = np.sqrt(2.0 / fan_in)
    return Tensor(rng.standard_normal(shape, dtype=np.float32) * np.float32(std),
                  requires_grad=requires_grad)


def zero_bias(n, requires_grad=True):
    return Tensor(np.zeros(n, dtype=np.float32), requires_grad=requires_grad)


def _conv_pair(rng, cin, cout):
    return (he_weight(rng, (3, 3, cin, cout), 9 * cin), zero_bias(cout))


def init_params(seed, spec):
    """Deterministic He-initialized parameters for any net spec."""
    rng = np.random.default_rng(seed)
    if isinstance(spec, MlpSpec):
        ws, bs = [], []
        for din, dout in zip(spec.dims[:-1], spec.dims[1:]):
            ws.append(he_weight(rng, (din, dout), din))
            bs.append(zero_bias(dout))
        return MlpParams(spec, ws, bs)
    if isinstance(spec, EncoderSpec):
        c = spec.channels
        head = _conv_pair(rng, spec.in_channels, c)
        blocks = []
        for _ in range(spec.blocks):
            w1, b1 = _conv_pair(rng, c, c)
            w2, b2 = _conv_pair(rng, c, c)
            blocks.append((w1, b1, w2, b2))
        tail = _conv_pair(rng, c, c)
        return EncoderParams(spec, head, blocks, tail)
    if isinstance(spec, TrackerSpec):
        convs = [_conv_pair(rng, spec.in_channels, spec.channels),
                 _conv_pair(rng, spec.channels, spec.channels)]
        gain = Tensor(np.full(1, 10.0, dtype=np.float32), requires_grad=True)
        return TrackerParams(spec, convs, gain)
    raise ShapeError(f"unknown net spec {type(spec).__name__}")


def set_requires_grad(params, flag):
    for t in params.tensors():
        t.requires_grad = bool(flag)


def flatten_params(params):
    return np.concatenate([t.data.ravel() for t in params.tensors()])


def load_flat(params, blob):
    """Write a flat float32 blob back into the parameter tensors."""
    blob = np.asarray(blob, dtype=np.float32)
    off = 0
    for t in params.tensors():
        n = t.data.size
        if off + n > blob.size:
            raise ShapeError("parameter blob too short")
        t.data = blob[off:off + n].reshape(t.data.shape).copy()
        off += n
    if off != blob.size:
        raise ShapeError("parameter blob size mismatch")
    return params
