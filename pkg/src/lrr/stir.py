"""Spatial-temporal continuous representation of a short frame sequence.

A sequence is encoded once; afterwards any real (x, y, tau) coordinate
can be queried for an RGB value. Two query paths exist:

* the decomposed path: a spatial stage over the K x K neighboring sites
  (cross-frame features concatenated per site) followed by a temporal
  stage over the frames, costing K^2 + (N+1) MLP evaluations per query;
* the joint path, which feeds every spatio-temporal neighbor to a single
  MLP, costing (N+1) * K^2 evaluations. It is kept as the complexity
  oracle and is not numerically equal to the decomposed path.

Site weights are complementary area ratios of the enclosing cell
(volume ratios for the joint path), which makes both paths continuous
across cell boundaries.
"""

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .errors import DomainError, ShapeError
from .nets import (EncoderSpec, MlpParams, encoder_forward, init_params,
                   mlp_forward, stir_mlp_spec)
from .numerics import Tensor


# ------------------------------------------------------------------- config

@dataclass(frozen=True)
class StirSpec:
    channels: int = 32      # encoder feature channels C
    hidden: int = 64        # MLP hidden width
    blocks: int = 4         # encoder residual blocks
    mlp_layers: int = 5
    history: int = 4        # N; the buffer holds N+1 frames
    k: int = 2              # local ensemble side

    @property
    def n_frames(self):
        return self.history + 1

    def spatial_in(self):
        return self.n_frames * self.channels + 2

    def spatial_out(self):
        return 3 * self.n_frames

    def to_dict(self):
        return {"channels": self.channels, "hidden": self.hidden,
                "blocks": self.blocks, "mlp_layers": self.mlp_layers,
                "history": self.history, "k": self.k}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class StirParams:
    """Encoder plus the three MLPs (spatial, temporal, joint oracle)."""

    def __init__(self, spec, encoder, spatial_mlp, temporal_mlp, joint_mlp):
        if spatial_mlp.spec.dims[0] != spec.spatial_in():
            raise ShapeError("spatial MLP input dim mismatch")
        if spatial_mlp.spec.dims[-1] != spec.spatial_out():
            raise ShapeError("spatial MLP output dim mismatch")
        if temporal_mlp.spec.dims[0] != 4 or temporal_mlp.spec.dims[-1] != 3:
            raise ShapeError("temporal MLP dims must be 4 -> 3")
        self.spec = spec
        self.encoder = encoder
        self.spatial_mlp = spatial_mlp
        self.temporal_mlp = temporal_mlp
        self.joint_mlp = joint_mlp

    def tensors(self):
        return (self.encoder.tensors() + self.spatial_mlp.tensors()
                + self.temporal_mlp.tensors() + self.joint_mlp.tensors())


def init_stir(seed, spec=StirSpec()):
    enc = init_params(seed, EncoderSpec(channels=spec.channels, blocks=spec.blocks))
    sp = init_params(seed + 1, stir_mlp_spec(spec.spatial_in(), spec.spatial_out(),
                                             spec.hidden, spec.mlp_layers))
    tp = init_params(seed + 2, stir_mlp_spec(4, 3, spec.hidden, spec.mlp_layers))
    jt = init_params(seed + 3, stir_mlp_spec(spec.channels + 3, 3,
                                             spec.hidden, spec.mlp_layers))
    return StirParams(spec, enc, sp, tp, jt)


# -------------------------------------------------------------------- types

class SequenceBuffer:
    """The N+1 most recent frames with integer timestamps t-N .. t."""

    def __init__(self, frames, t=None):
        if not frames:
            raise ShapeError("empty sequence")
        shapes = {f.shape for f in frames}
        if len(shapes) != 1 or frames[0].ndim != 3 or frames[0].shape[2] != 3:
            raise ShapeError(f"inconsistent frame shapes {shapes}")
        n = len(frames) - 1
        if not 0 <= n <= 8:
            raise DomainError(f"history length N={n} outside [0, 8]")
        fr = [np.asarray(f, dtype=np.float32) for f in frames]
        for f in fr:
            if not np.all(np.isfinite(f)) or f.min() < 0 or f.max() > 1:
                raise DomainError("frame values must be finite and in [0,1]")
        self.frames = fr
        self.t = n if t is None else int(t)

    @property
    def n(self):
        return len(self.frames) - 1

    @property
    def shape(self):
        return self.frames[0].shape[:2]

    @property
    def t0(self):
        return self.t - self.n

    def newest(self):
        return self.frames[-1]


class FeatureVolume:
    """Cached per-frame feature maps plus their channel concatenation."""

    def __init__(self, slices, t0):
        self.slices = slices
        self.plane = slices[0] if len(slices) == 1 else nm.concat(slices, axis=-1)
        self.t0 = int(t0)

    @property
    def n_frames(self):
        return len(self.slices)

    @property
    def t(self):
        return self.t0 + self.n_frames - 1

    @property
    def shape(self):
        return self.slices[0].shape[:2]

    @property
    def channels(self):
        return self.slices[0].shape[2]


@dataclass
class NeighborWeights:
    """Ensemble sites and their normalized weights around one query."""
    sites: np.ndarray            # (K*K, 2) int64, spatial part
    spatial: np.ndarray = None   # (K*K,) float32, sums to 1
    temporal: np.ndarray = None  # (N+1,) float32, sums to 1


@dataclass
class EvalCounter:
    """Instrumented MLP-evaluation counts (one unit = one MLP application
    to one site/frame of one query)."""
    spatial: int = 0
    temporal: int = 0
    joint: int = 0
    queries: int = 0

    def reset(self):
        self.spatial = self.temporal = self.joint = self.queries = 0

    def per_query(self):
        q = max(self.queries, 1)
        return {"spatial": self.spatial / q, "temporal": self.temporal / q,
                "joint": self.joint / q}


# ------------------------------------------------------------------ weights

def _site_window(coords, h, w, k):
    """K consecutive sites per axis around each real coordinate."""
    coords = np.asarray(coords, dtype=np.float32).reshape(-1, 2)
    half = k // 2 - 1
    x0 = np.clip(np.floor(coords[:, 0]).astype(np.int64) - half, 0, max(h - k, 0))
    y0 = np.clip(np.floor(coords[:, 1]).astype(np.int64) - half, 0, max(w - k, 0))
    dx, dy = np.meshgrid(np.arange(k, dtype=np.int64), np.arange(k, dtype=np.int64),
                         indexing="ij")
    offs = np.stack([dx.ravel(), dy.ravel()], axis=1)  # (k*k, 2)
    sites = np.stack([x0, y0], axis=1)[:, None, :] + offs[None, :, :]
    return sites


def _triangle(vals):
    return np.maximum(0.0, 1.0 - np.abs(vals)).astype(np.float32)


def _check_xy(coords, h, w):
    c = np.asarray(coords, dtype=np.float32).reshape(-1, 2)
    if c[:, 0].min() < 0 or c[:, 0].max() > h - 1 or c[:, 1].min() < 0 or c[:, 1].max() > w - 1:
        raise DomainError("spatial coordinate outside [0, H-1] x [0, W-1]")


def spatial_weights(coord, shape, k=2):
    """Complementary area-ratio weights of the K x K neighbor sites.

    The weight of site q is the area of the rectangle spanned by the
    query and q's diagonally opposite site, over the cell area; for the
    triangle form used here the two are identical and extend to K > 2
    with zero weight beyond the enclosing cell.
    """
    h, w = shape
    _check_xy(coord, h, w)
    sites = _site_window(np.asarray(coord, np.float32).reshape(1, 2), h, w, k)
    rel = np.asarray(coord, np.float32).reshape(1, 1, 2) - sites.astype(np.float32)
    wts = _triangle(rel[..., 0]) * _triangle(rel[..., 1])
    wts = wts / wts.sum(axis=1, keepdims=True)
    return NeighborWeights(sites=sites[0], spatial=wts[0].astype(np.float32))


def temporal_weights(tau, seq):
    """Triangle weights over the integer frames of a sequence buffer."""
    t0, t = seq.t0, seq.t
    tau = float(tau)
    if not t0 <= tau <= t:
        raise DomainError(f"tau {tau} outside [{t0}, {t}]")
    d = tau - (t0 + np.arange(seq.n + 1, dtype=np.float32))
    wts = _triangle(d)
    wts = wts / wts.sum()
    return NeighborWeights(sites=None, temporal=wts.astype(np.float32))


# ----------------------------------------------------------------- encoding

def encode_sequence(params, seq):
    """One encoder pass per frame; the volume caches all repeated queries."""
    slices = [encoder_forward(params.encoder, f) for f in seq.frames]
    return FeatureVolume(slices, seq.t0)


def volume_from_slices(slices, t0):
    """Assemble a volume from already-encoded per-frame features."""
    return FeatureVolume(list(slices), t0)


# ---------------------------------------------------------- decomposed path

def _abs_t(t):
    return nm.add(nm.relu(t), nm.relu(nm.smul(t, -1.0)))


def _tri_t(t):
    return nm.relu(nm.add(nm.smul(_abs_t(t), -1.0), Tensor(np.float32(1.0))))


def spatial_stage(coords_xy, vol, params, counter=None, skip_zero=True):
    """Per-frame colors at (x, y) across all frames: (Q, 3*(N+1)).

    `coords_xy` may be a Tensor (gradients flow into the ensemble
    weights and the relative-offset inputs) or a plain array.
    """
    h, w = vol.shape
    k = params.spec.k
    is_t = isinstance(coords_xy, Tensor)
    cd = coords_xy.data if is_t else np.asarray(coords_xy, dtype=np.float32)
    cd = cd.reshape(-1, 2)
    q = cd.shape[0]
    d = vol.plane.shape[2]
    fdim = params.spec.n_frames * 3

    if k != 2:
        if is_t or vol.plane.requires_grad:
            raise ShapeError("K != 2 supports only non-differentiable queries")
        return _spatial_stage_general(cd, vol, params, counter, k)

    sites, frac = nm.neighbor_sites(cd, h, w)
    on_grid = skip_zero and not is_t and frac.max(initial=0.0) == 0.0

    feats = nm.gather_2x2(vol.plane, cd)                      # (Q, 4, D)
    if on_grid:
        f0 = nm.reshape(nm.narrow(feats, 1, 0, 1), (q, d))
        inp = nm.concat([f0, Tensor(np.zeros((q, 2), np.float32))], axis=1)
        out = mlp_forward(params.spatial_mlp, inp)
        if counter is not None:
            counter.spatial += q
        return out

    sites_f = sites.astype(np.float32)
    if is_t:
        rel = nm.add(nm.reshape(coords_xy, (q, 1, 2)), Tensor(-sites_f))
        tri = _tri_t(rel)
        wsp = nm.mul(nm.narrow(tri, 2, 0, 1), nm.narrow(tri, 2, 1, 1))  # (Q,4,1)
        rel_rows = nm.reshape(rel, (q * 4, 2))
    else:
        rel_np = cd[:, None, :] - sites_f
        wsp_np = (_triangle(rel_np[..., 0]) * _triangle(rel_np[..., 1]))[..., None]
        rel_rows = Tensor(rel_np.reshape(q * 4, 2))
        wsp = Tensor(wsp_np)

    inp = nm.concat([nm.reshape(feats, (q * 4, d)), rel_rows], axis=1)
    out = mlp_forward(params.spatial_mlp, inp)                # (Q*4, 3F)
    out = nm.tsum(nm.mul(nm.reshape(out, (q, 4, fdim)), wsp), axis=1)
    if counter is not None:
        counter.spatial += 4 * q
    return out


def _spatial_stage_general(cd, vol, params, counter, k):
    h, w = vol.shape
    q = cd.shape[0]
    d = vol.plane.shape[2]
    fdim = params.spec.n_frames * 3
    sites = _site_window(cd, h, w, k)                          # (Q, k^2, 2)
    feats = vol.plane.data[sites[..., 0], sites[..., 1]]       # (Q, k^2, D)
    rel = cd[:, None, :] - sites.astype(np.float32)
    wts = _triangle(rel[..., 0]) * _triangle(rel[..., 1])
    wts = wts / np.maximum(wts.sum(axis=1, keepdims=True), 1e-12)
    inp = Tensor(np.concatenate([feats.reshape(q * k * k, d),
                                 rel.reshape(q * k * k, 2)], axis=1))
    out = mlp_forward(params.spatial_mlp, inp)
    out = nm.tsum(nm.mul(nm.reshape(out, (q, k * k, fdim)),
                         Tensor(wts[..., None])), axis=1)
    if counter is not None:
        counter.spatial += k * k * q
    return out


def temporal_stage(taus, per_frame, vol, params, counter=None,
                   literal=False, skip_zero=True):
    """Blend per-frame colors into the final RGB at real tau values."""
    f = vol.n_frames
    q = per_frame.shape[0]
    is_t = isinstance(taus, Tensor)
    td = (taus.data if is_t else np.asarray(taus, dtype=np.float32)).reshape(-1)
    u = td - vol.t0
    if u.min() < 0 or u.max() > f - 1:
        raise DomainError("tau outside the buffered frame range")
    colors = nm.reshape(per_frame, (q, f, 3))

    if literal or f == 1:
        stamps = np.arange(f, dtype=np.float32)
        if is_t:
            dall = nm.add(nm.reshape(taus, (q, 1)),
                          Tensor(-(vol.t0 + stamps)[None, :]))       # (Q, F)
            wtp = nm.reshape(_tri_t(dall), (q, f, 1))
            drows = nm.reshape(dall, (q * f, 1))
        else:
            dnp = u[:, None] - stamps[None, :]
            wtp = Tensor(_triangle(dnp)[..., None])
            drows = Tensor(dnp.reshape(q * f, 1))
        inp = nm.concat([nm.reshape(colors, (q * f, 3)), drows], axis=1)
        out = mlp_forward(params.temporal_mlp, inp)
        out = nm.tsum(nm.mul(nm.reshape(out, (q, f, 3)), wtp), axis=1)
        if counter is not None:
            counter.temporal += f * q
        return out

    on_frame = skip_zero and not is_t and np.all(u == np.round(u))
    if on_frame:
        f0 = u.astype(np.int64)
        c0 = nm.row_gather(colors, f0)
        inp = nm.concat([c0, Tensor(np.zeros((q, 1), np.float32))], axis=1)
        out = mlp_forward(params.temporal_mlp, inp)
        if counter is not None:
            counter.temporal += q
        return out

    f0 = np.clip(np.floor(u), 0, f - 2).astype(np.int64)
    f1 = f0 + 1
    c0, c1 = nm.row_gather(colors, f0), nm.row_gather(colors, f1)
    if is_t:
        d0 = nm.add(nm.reshape(taus, (q, 1)),
                    Tensor(-(vol.t0 + f0.astype(np.float32))[:, None]))
        d1 = nm.add(d0, Tensor(np.float32(-1.0)))
        w0, w1 = _tri_t(d0), _tri_t(d1)
    else:
        d0v = (u - f0)[:, None].astype(np.float32)
        d0, d1 = Tensor(d0v), Tensor(d0v - 1.0)
        w0, w1 = Tensor(_triangle(d0v)), Tensor(_triangle(d0v - 1.0))
    inp = nm.concat([nm.concat([c0, c1], axis=0),
                     nm.concat([d0, d1], axis=0)], axis=1)
    out = mlp_forward(params.temporal_mlp, inp)                # (2Q, 3)
    o0, o1 = nm.narrow(out, 0, 0, q), nm.narrow(out, 0, q, q)
    out = nm.add(nm.mul(o0, w0), nm.mul(o1, w1))
    if counter is not None:
        counter.temporal += 2 * q
    return out


def stir_eval_batch(coords, vol, params, counter=None, literal=False, skip_zero=True):
    """Decomposed evaluation of a (Q, 3) coordinate batch -> (Q, 3) tensor."""
    if isinstance(coords, Tensor):
        q = coords.shape[0]
        xy = nm.narrow(coords, 1, 0, 2)
        tau = nm.narrow(coords, 1, 2, 1)
    else:
        c = np.asarray(coords, dtype=np.float32).reshape(-1, 3)
        q = c.shape[0]
        xy, tau = c[:, :2], c[:, 2]
    if counter is not None:
        counter.queries += q
    per_frame = spatial_stage(xy, vol, params, counter, skip_zero=skip_zero)
    return temporal_stage(tau, per_frame, vol, params, counter,
                          literal=literal, skip_zero=skip_zero)


def stir_eval(coord, vol, params, counter=None, literal=False):
    """Single-point query; rejects out-of-domain coordinates."""
    x, y, tau = (float(v) for v in coord)
    h, w = vol.shape
    _check_xy([x, y], h, w)
    if not vol.t0 <= tau <= vol.t:
        raise DomainError(f"tau {tau} outside [{vol.t0}, {vol.t}]")
    out = stir_eval_batch(np.array([[x, y, tau]], np.float32), vol, params,
                          counter=counter, literal=literal)
    return out.data[0].copy()


# --------------------------------------------------------------- joint path

def stir_eval_joint_batch(coords, vol, params, counter=None):
    """Joint-MLP evaluation over all (N+1)*K^2 spatio-temporal neighbors.

    The weight of each neighbor is the complementary volume ratio of the
    (x, y, tau) cube; frames beyond the enclosing cell get zero weight
    but are still evaluated, which is what makes this the complexity
    oracle.
    """
    c = np.asarray(coords, dtype=np.float32).reshape(-1, 3)
    q = c.shape[0]
    h, w = vol.shape
    k = params.spec.k
    f = vol.n_frames
    ch = vol.channels
    sites = _site_window(c[:, :2], h, w, k)                    # (Q, k^2, 2)
    feats = vol.plane.data[sites[..., 0], sites[..., 1]]       # (Q, k^2, F*C)
    feats = feats.reshape(q, k * k, f, ch)
    rel = c[:, None, :2] - sites.astype(np.float32)            # (Q, k^2, 2)
    u = (c[:, 2] - vol.t0)[:, None]                            # (Q, 1)
    if u.min() < 0 or u.max() > f - 1:
        raise DomainError("tau outside the buffered frame range")
    dtau = u[:, None, :] - np.arange(f, dtype=np.float32)[None, None, :]  # (Q,1,F)
    wts = (_triangle(rel[..., 0]) * _triangle(rel[..., 1]))[:, :, None] * _triangle(dtau)
    wts = wts / np.maximum(wts.reshape(q, -1).sum(axis=1)[:, None, None], 1e-12)

    rel_b = np.broadcast_to(rel[:, :, None, :], (q, k * k, f, 2))
    dtau_b = np.broadcast_to(dtau[..., None], (q, k * k, f, 1))
    rows = np.concatenate([feats, rel_b, dtau_b], axis=3).reshape(q * k * k * f, ch + 3)
    out = mlp_forward(params.joint_mlp, Tensor(np.ascontiguousarray(rows)))
    out = nm.tsum(nm.mul(nm.reshape(out, (q, k * k * f, 3)),
                         Tensor(wts.reshape(q, k * k * f, 1))), axis=1)
    if counter is not None:
        counter.joint += q * k * k * f
        counter.queries += q
    return out


def stir_eval_joint(coord, vol, params, counter=None):
    x, y, tau = (float(v) for v in coord)
    _check_xy([x, y], *vol.shape)
    if not vol.t0 <= tau <= vol.t:
        raise DomainError(f"tau {tau} outside [{vol.t0}, {vol.t}]")
    out = stir_eval_joint_batch(np.array([[x, y, tau]], np.float32), vol, params,
                                counter=counter)
    return out.data[0].copy()


def joint_weights(coord, vol_shape, n_frames, t0, k=2):
    """Normalized volume-ratio weights of the joint path (test hook)."""
    x, y, tau = (float(v) for v in coord)
    sites = _site_window(np.array([[x, y]], np.float32), vol_shape[0], vol_shape[1], k)
    rel = np.array([[x, y]], np.float32)[:, None, :] - sites.astype(np.float32)
    dtau = (tau - t0) - np.arange(n_frames, dtype=np.float32)
    wts = (_triangle(rel[..., 0]) * _triangle(rel[..., 1]))[0][:, None] * _triangle(dtau)[None, :]
    return wts / wts.sum()


# ------------------------------------------------------------------- render

def grid_coords(h, w, tau):
    """All integer pixel coordinates of one frame at a fixed tau."""
    xi, yi = np.meshgrid(np.arange(h, dtype=np.float32),
                         np.arange(w, dtype=np.float32), indexing="ij")
    out = np.stack([xi.ravel(), yi.ravel(),
                    np.full(h * w, tau, dtype=np.float32)], axis=1)
    return out


def clamp_coords(coords, h, w, t0, t):
    c = np.array(coords, dtype=np.float32).reshape(-1, 3)
    c[:, 0] = np.clip(c[:, 0], 0, h - 1)
    c[:, 1] = np.clip(c[:, 1], 0, w - 1)
    c[:, 2] = np.clip(c[:, 2], t0, t)
    return c


def render_frame(vol, params, coords=None, counter=None, literal=False,
                 skip_zero=True, clamp_out=True):
    """Render an (H, W, 3) tensor by querying one coordinate per pixel.

    `coords` defaults to the frame-t grid; offset grids are clamped into
    the domain. Used with Tensor coords by the resampling path.
    """
    h, w = vol.shape
    if coords is None:
        coords = grid_coords(h, w, vol.t)
    if not isinstance(coords, Tensor):
        coords = clamp_coords(coords, h, w, vol.t0, vol.t)
    out = stir_eval_batch(coords, vol, params, counter=counter,
                          literal=literal, skip_zero=skip_zero)
    out = nm.reshape(out, (h, w, 3))
    if clamp_out:
        out = nm.clamp(out, 0.0, 1.0)
    return out


def reconstruct_frame(seq, params, coords=None, counter=None, literal=False,
                      skip_zero=True, vol=None):
    """Encode (or reuse) a volume and render frame t as a numpy array."""
    if vol is None:
        vol = encode_sequence(params, seq)
    return render_frame(vol, params, coords=coords, counter=counter,
                        literal=literal, skip_zero=skip_zero).data.copy()


# ------------------------------------------------------------- loop oracles

def _mlp_vec(params, v):
    """Plain per-vector MLP forward used only by the loop oracles."""
    h = np.asarray(v, dtype=np.float32)
    last = params.n_layers - 1
    for i, (wt, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ wt.data + b.data
        if i != last:
            h = np.maximum(h, 0.0)
    return h


def stir_eval_loop(coord, vol, params, literal=False):
    """Naive per-site / per-frame loop implementation of the decomposed
    path, kept independent of the batched ensemble code."""
    x, y, tau = (float(v) for v in coord)
    h, w = vol.shape
    plane = vol.plane.data
    f = vol.n_frames
    x0 = int(np.clip(np.floor(x), 0, max(h - 2, 0)))
    y0 = int(np.clip(np.floor(y), 0, max(w - 2, 0)))
    x1, y1 = min(x0 + 1, h - 1), min(y0 + 1, w - 1)
    per_frame = np.zeros(3 * f, dtype=np.float32)
    for sx, ox in ((x0, x1), (x1, x0)):
        for sy, oy in ((y0, y1), (y1, y0)):
            # area of the rectangle spanned by the query and the
            # diagonally opposite site, over the unit cell
            area = abs(ox - x) * abs(oy - y)
            feat = plane[sx, sy]
            inp = np.concatenate([feat, np.float32([x - sx, y - sy])])
            per_frame = per_frame + np.float32(area) * _mlp_vec(params.spatial_mlp, inp)
    out = np.zeros(3, dtype=np.float32)
    total = np.float32(0.0)
    for fi in range(f):
        d = np.float32(tau - (vol.t0 + fi))
        wt = np.float32(max(0.0, 1.0 - abs(d)))
        total += wt
        if literal or wt > 0:
            inp = np.concatenate([per_frame[3 * fi:3 * fi + 3], [d]])
            out = out + wt * _mlp_vec(params.temporal_mlp, inp)
    return out / total


def stir_eval_joint_loop(coord, vol, params):
    """Per-neighbor loop oracle for the joint path."""
    x, y, tau = (float(v) for v in coord)
    h, w = vol.shape
    k = params.spec.k
    f = vol.n_frames
    ch = vol.channels
    plane = vol.plane.data
    sites = _site_window(np.array([[x, y]], np.float32), h, w, k)[0]
    out = np.zeros(3, dtype=np.float32)
    total = 0.0
    for sx, sy in sites:
        for fi in range(f):
            d = tau - (vol.t0 + fi)
            wt = max(0.0, 1.0 - abs(x - sx)) * max(0.0, 1.0 - abs(y - sy)) \
                * max(0.0, 1.0 - abs(d))
            feat = plane[sx, sy, fi * ch:(fi + 1) * ch]
            inp = np.concatenate([feat, np.float32([x - sx, y - sy, d])])
            out = out + np.float32(wt) * _mlp_vec(params.joint_mlp, inp)
            total += wt
    return out / np.float32(total)
