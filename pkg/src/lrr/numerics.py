"""Dense float32 tensors and a reverse-mode differentiation engine.

The op set is fixed and small: exactly what the encoder, the coordinate
MLPs, the offset predictor, the tracker and the attacks need. There is
no general broadcasting; `add` and `mul` accept equal shapes plus the
two patterns the nets use (a trailing bias vector, a trailing size-1
scale axis). Everything is float32; finite-difference oracles accumulate
in float64.
"""

import numpy as np

from . import kernels
from .errors import NumericError, ShapeError

OP_KINDS = (
    "matmul", "conv2d", "add", "mul", "concat", "relu", "tanh",
    "l1_loss", "mean", "gather_2x2", "clamp", "smul", "reshape",
    "sum", "softmax_xent", "row_gather", "xcorr", "narrow",
)


class Tensor:
    """A float32 ndarray plus the tape hooks for reverse mode.

    Tensors are immutable once built (training code mutates `.data` of
    parameter leaves under exclusive access). Non-finite values are
    rejected at this boundary so ops can assume finite inputs.
    """

    __slots__ = ("data", "requires_grad", "grad", "_op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _op=None, _parents=(), _backward=None):
        arr = np.asarray(data, dtype=np.float32)
        if _op is None and not np.all(np.isfinite(arr)):
            raise NumericError("non-finite values in tensor input")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._op = _op
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def item(self):
        if self.data.size != 1:
            raise ShapeError("item() on non-scalar tensor")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad}, op={self._op})"

    # Small operator sugar used throughout the package.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, smul(other, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return smul(self, other)
        return mul(self, other)

    __rmul__ = __mul__


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, op, backward):
    req = any(p.requires_grad for p in parents)
    if not req:
        return Tensor(data, _op=op)
    return Tensor(data, requires_grad=True, _op=op, _parents=tuple(parents), _backward=backward)


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float32, copy=True)
    else:
        t.grad += g


def _reduce_to(g, shape):
    """Sum a gradient down to `shape` (undo the sanctioned broadcasts)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.astype(np.float32, copy=False)


def _check_broadcast(a, b):
    """Allow: equal shapes, trailing vector, trailing size-1 axes, scalar."""
    sa, sb = a.shape, b.shape
    if sa == sb or sa == () or sb == ():
        return
    small, big = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    tail = big[len(big) - len(small):]
    ok = all(s == t or s == 1 or t == 1 for s, t in zip(small, tail))
    if not ok:
        raise ShapeError(f"shapes {sa} and {sb} not combinable")


# ---------------------------------------------------------------- element ops

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    out = a.data + b.data

    def backward(g):
        _accum(a, _reduce_to(g, a.shape))
        _accum(b, _reduce_to(g, b.shape))

    return _make(out, (a, b), "add", backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    out = a.data * b.data

    def backward(g):
        _accum(a, _reduce_to(g * b.data, a.shape))
        _accum(b, _reduce_to(g * a.data, b.shape))

    return _make(out, (a, b), "mul", backward)


def smul(a, s):
    a = as_tensor(a)
    s = float(s)
    out = a.data * np.float32(s)

    def backward(g):
        _accum(a, g * np.float32(s))

    return _make(out, (a,), "smul", backward)


def relu(a):
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def backward(g):
        _accum(a, g * (a.data > 0))

    return _make(out, (a,), "relu", backward)


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - out * out))

    return _make(out, (a,), "tanh", backward)


def clamp(a, lo, hi):
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)

    def backward(g):
        mask = (a.data >= lo) & (a.data <= hi)
        _accum(a, g * mask)

    return _make(out, (a,), "clamp", backward)


def reshape(a, shape):
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.shape))

    return _make(out, (a,), "reshape", backward)


def concat(tensors, axis=-1):
    ts = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    splits = np.cumsum([t.data.shape[axis] for t in ts])[:-1]

    def backward(g):
        parts = np.split(g, splits, axis=axis)
        for t, p in zip(ts, parts):
            _accum(t, p)

    return _make(out, ts, "concat", backward)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float32)

    def backward(g):
        if axis is None:
            _accum(a, np.broadcast_to(np.float32(g), a.shape))
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(ge, a.shape).astype(np.float32))

    return _make(out, (a,), "sum", backward)


def mean(a):
    a = as_tensor(a)
    out = np.float32(a.data.mean(dtype=np.float64))

    def backward(g):
        _accum(a, np.full(a.shape, g / a.size, dtype=np.float32))

    return _make(out, (a,), "mean", backward)


# ------------------------------------------------------------------ dense ops

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(out, (a, b), "matmul", backward)


def _pad2d(x, p):
    h, w, c = x.shape
    out = np.zeros((h + 2 * p, w + 2 * p, c), dtype=x.dtype)
    out[p:p + h, p:p + w] = x
    return out


def conv2d(x, w, b=None):
    """3x3, stride 1, same-padding convolution on (H, W, C) layout.

    Weights are (3, 3, Cin, Cout); bias (Cout,) optional.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 3 or w.shape[:2] != (3, 3) or w.shape[2] != x.shape[2]:
        raise ShapeError(f"conv2d input {x.shape} weight {w.shape}")
    h, wd, cin = x.shape
    cout = w.shape[3]
    cols = kernels.im2col(_pad2d(x.data, 1), 3, 3)      # (H*W, 9*Cin)
    out = cols @ w.data.reshape(9 * cin, cout)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (cout,):
            raise ShapeError(f"conv2d bias {b.shape}")
        out = out + b.data
    out = out.reshape(h, wd, cout)
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        gf = g.reshape(h * wd, cout)
        if b is not None:
            _accum(b, gf.sum(axis=0))
        if w.requires_grad:
            _accum(w, (cols.T @ gf).reshape(3, 3, cin, cout))
        if x.requires_grad:
            # grad wrt input is the same-pad conv of g with the flipped,
            # channel-transposed kernel
            wflip = np.ascontiguousarray(w.data[::-1, ::-1].transpose(0, 1, 3, 2))
            gcols = kernels.im2col(_pad2d(np.ascontiguousarray(g), 1), 3, 3)
            _accum(x, (gcols @ wflip.reshape(9 * cout, cin)).reshape(h, wd, cin))

    return _make(out, parents, "conv2d", backward)


def xcorr(search, templ):
    """Valid cross-correlation summed over channels: (H,W,C) x (h,w,C) -> (H-h+1, W-w+1)."""
    search, templ = as_tensor(search), as_tensor(templ)
    if search.data.ndim != 3 or templ.data.ndim != 3 or search.shape[2] != templ.shape[2]:
        raise ShapeError(f"xcorr {search.shape} x {templ.shape}")
    hh, ww, c = templ.shape
    ho = search.shape[0] - hh + 1
    wo = search.shape[1] - ww + 1
    if ho < 1 or wo < 1:
        raise ShapeError("template larger than search region")
    cols = kernels.im2col(np.ascontiguousarray(search.data), hh, ww)  # (Ho*Wo, h*w*C)
    out = (cols @ templ.data.reshape(-1)).reshape(ho, wo)

    def backward(g):
        gf = g.reshape(-1)
        if templ.requires_grad:
            cols_b = kernels.im2col(np.ascontiguousarray(search.data), hh, ww)
            _accum(templ, (cols_b.T @ gf).reshape(hh, ww, c))
        if search.requires_grad:
            # full correlation of the padded response grad with the template
            gpad = np.pad(g, ((hh - 1, hh - 1), (ww - 1, ww - 1)))[..., None]
            gcols = kernels.im2col(np.ascontiguousarray(gpad), hh, ww)  # (H*W, h*w)
            kflip = np.ascontiguousarray(templ.data[::-1, ::-1]).reshape(hh * ww, c)
            _accum(search, (gcols @ kflip).reshape(search.shape))

    return _make(out, (search, templ), "xcorr", backward)


# --------------------------------------------------------------- gather ops

def neighbor_sites(coords, h, w):
    """2x2 neighborhood of real (x, y) coords on an h x w grid.

    Returns (sites, frac): sites (Q, 4, 2) int64 in order
    (x0,y0), (x0,y1), (x1,y0), (x1,y1); frac (Q, 2) = coord - site0.
    The base cell is clamped so x0 in [0, h-2] (degenerate 1-wide grids
    clamp to 0 with x1 == x0).
    """
    coords = np.asarray(coords, dtype=np.float32).reshape(-1, 2)
    x0 = np.clip(np.floor(coords[:, 0]), 0, max(h - 2, 0)).astype(np.int64)
    y0 = np.clip(np.floor(coords[:, 1]), 0, max(w - 2, 0)).astype(np.int64)
    x1 = np.minimum(x0 + 1, h - 1)
    y1 = np.minimum(y0 + 1, w - 1)
    sites = np.stack([
        np.stack([x0, y0], axis=1),
        np.stack([x0, y1], axis=1),
        np.stack([x1, y0], axis=1),
        np.stack([x1, y1], axis=1),
    ], axis=1)
    frac = coords - sites[:, 0].astype(np.float32)
    return sites, frac


def gather_2x2(plane, coords):
    """Fetch the 2x2 neighborhood of latent vectors around real coordinates.

    plane: (H, W, D) tensor; coords: (Q, 2) array-like of real (x, y).
    Returns a (Q, 4, D) tensor; site order matches `neighbor_sites`. The
    coordinates are data for this op (site selection has zero gradient
    almost everywhere); differentiable coordinate terms are built by the
    caller from `neighbor_sites`.
    """
    plane = as_tensor(plane)
    if plane.data.ndim != 3:
        raise ShapeError(f"gather_2x2 plane {plane.shape}")
    cd = coords.data if isinstance(coords, Tensor) else np.asarray(coords, dtype=np.float32)
    h, w, _ = plane.shape
    sites, _ = neighbor_sites(cd, h, w)
    out = kernels.gather2x2(np.ascontiguousarray(plane.data), sites)

    def backward(g):
        if plane.requires_grad:
            acc = np.zeros(plane.shape, dtype=np.float32)
            kernels.scatter2x2_add(acc, sites, np.ascontiguousarray(g))
            _accum(plane, acc)

    return _make(out, (plane,), "gather_2x2", backward)


def narrow(t, axis, start, length):
    """Contiguous slice along one axis (inverse piece of concat)."""
    t = as_tensor(t)
    if not 0 <= start <= start + length <= t.shape[axis]:
        raise ShapeError(f"narrow [{start}:{start + length}] on axis {axis} of {t.shape}")
    sl = [slice(None)] * t.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    out = np.ascontiguousarray(t.data[sl])

    def backward(g):
        acc = np.zeros(t.shape, dtype=np.float32)
        acc[sl] = g
        _accum(t, acc)

    return _make(out, (t,), "narrow", backward)


def row_gather(t, idx):
    """Per-row pick along axis 1: (Q, F, D) x (Q,) -> (Q, D)."""
    t = as_tensor(t)
    idx = np.asarray(idx, dtype=np.int64)
    if t.data.ndim != 3 or idx.shape != (t.shape[0],):
        raise ShapeError(f"row_gather {t.shape} with idx {idx.shape}")
    rows = np.arange(t.shape[0])
    out = t.data[rows, idx]

    def backward(g):
        acc = np.zeros(t.shape, dtype=np.float32)
        acc[rows, idx] = g
        _accum(t, acc)

    return _make(out, (t,), "row_gather", backward)


# -------------------------------------------------------------------- losses

def l1_loss(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"l1_loss {a.shape} vs {b.shape}")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    out = np.float32(np.abs(diff).mean())
    sgn = np.sign(diff).astype(np.float32) / a.size

    def backward(g):
        _accum(a, g * sgn)
        _accum(b, -g * sgn)

    return _make(out, (a, b), "l1_loss", backward)


def softmax_xent(logits, target):
    """Cross-entropy of softmax(logits) against a single target index."""
    logits = as_tensor(logits)
    flat = logits.data.reshape(-1)
    target = int(target)
    if not 0 <= target < flat.size:
        raise ShapeError(f"target {target} outside {flat.size} positions")
    m = flat.max()
    ex = np.exp((flat - m).astype(np.float64))
    z = ex.sum()
    out = np.float32(np.log(z) + m - flat[target])
    soft = (ex / z).astype(np.float32)

    def backward(g):
        gl = soft.copy()
        gl[target] -= 1.0
        _accum(logits, (g * gl).reshape(logits.shape))

    return _make(out, (logits,), "softmax_xent", backward)


# ------------------------------------------------------------------ dispatch

_DISPATCH = {
    "matmul": matmul,
    "conv2d": conv2d,
    "add": add,
    "mul": mul,
    "concat": lambda *ts: concat(ts),
    "relu": relu,
    "tanh": tanh,
    "l1_loss": l1_loss,
    "mean": mean,
    "gather_2x2": gather_2x2,
    "clamp": clamp,
    "smul": smul,
    "reshape": reshape,
    "sum": tsum,
    "softmax_xent": softmax_xent,
    "row_gather": row_gather,
    "xcorr": xcorr,
    "narrow": narrow,
}


def forward_op(kind, *inputs, **kw):
    """Uniform entry point over the fixed op set (mainly for property tests)."""
    if kind not in _DISPATCH:
        raise ShapeError(f"unknown op kind {kind!r}")
    return _DISPATCH[kind](*inputs, **kw)


# ------------------------------------------------------------------ backward

class CompGraph:
    """Topologically ordered op records reachable from one output tensor."""

    def __init__(self, nodes):
        self.nodes = nodes  # leaves first, output last

    @classmethod
    def trace(cls, out):
        order, seen = [], set()
        stack = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def backward(self, seed=1.0):
        out = self.nodes[-1]
        for n in self.nodes:
            n.grad = None
        out.grad = np.full(out.shape, seed, dtype=np.float32)
        for n in reversed(self.nodes):
            if n._backward is not None and n.grad is not None:
                n._backward(n.grad)
        leaves = {}
        for n in self.nodes:
            if n.requires_grad and n._op is None:
                leaves[n] = n.grad if n.grad is not None else np.zeros(n.shape, np.float32)
        # release interior closures; the graph is consumed
        for n in self.nodes:
            if n._op is not None:
                n._backward = None
                n._parents = ()
        return leaves


def backward(loss):
    """Run reverse mode from a scalar loss; returns {leaf tensor: grad}."""
    if loss.data.size != 1:
        raise ShapeError("backward() needs a scalar loss")
    return CompGraph.trace(loss).backward()


def grad_check(f, x, h=1e-3):
    """Max relative error between reverse mode and central differences.

    `f` maps a Tensor to a scalar Tensor. Differences are accumulated in
    float64; error is |analytic - fd| / max(1, |analytic|), maxed over
    coordinates.
    """
    if h <= 0:
        raise NumericError("grad_check step must be positive")
    x0 = np.array(x.data, dtype=np.float32)
    xt = Tensor(x0, requires_grad=True)
    grads = backward(f(xt))
    g = np.asarray(grads[xt], dtype=np.float64).reshape(-1)
    worst = 0.0
    flat = x0.reshape(-1)
    for i in range(flat.size):
        for sgn in (+1.0, -1.0):
            bump = flat.copy()
            bump[i] += sgn * h
            val = f(Tensor(bump.reshape(x0.shape))).item()
            if sgn > 0:
                fp = val
            else:
                fm = val
        fd = (np.float64(fp) - np.float64(fm)) / (2.0 * h)
        err = abs(g[i] - fd) / max(1.0, abs(g[i]))
        worst = max(worst, err)
    return worst
