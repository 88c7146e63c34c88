"""Minimal differentiable correlation tracker: attack victim and
evaluation subject.

Template features are embedded once at init; each step crops a fixed
search region around the previous box, correlates features and moves
the box to the response argmax. Translation-only: the box size is
carried over. Everything is deterministic given state and frame.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import numerics as nm
from .errors import DomainError, MetricError
from .imageops import bilinear_resize, crop_replicate
from .nets import TrackerSpec, init_params, tracker_features
from .numerics import Tensor


@dataclass
class BBox:
    """Axis-aligned box: center (cx=row, cy=col) and size in pixels."""
    cx: float
    cy: float
    w: float
    h: float

    def corners(self):
        return (self.cx - self.h / 2, self.cy - self.w / 2,
                self.cx + self.h / 2, self.cy + self.w / 2)


def iou(a, b):
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    ix = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    iy = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class TrackerConfig:
    template_size: int = 16
    search_size: int = 48
    context: float = 2.0
    channels: int = 16
    motion_prior: float = 2.5  # additive centered-window bias, logit units


_window_cache = {}


def _center_window(shape):
    """Raised-cosine bump peaked at the response center (the previous
    position), used only at localization time."""
    if shape not in _window_cache:
        hx = np.hanning(shape[0] + 2)[1:-1]
        hy = np.hanning(shape[1] + 2)[1:-1]
        _window_cache[shape] = np.outer(hx, hy).astype(np.float32)
    return _window_cache[shape]


def init_tracker(seed, cfg=TrackerConfig()):
    return init_params(seed, TrackerSpec(channels=cfg.channels))


@dataclass
class PatchMapping:
    """Invertible map between patch pixels and frame coordinates."""
    start_x: int
    start_y: int
    scale: float  # frame pixels per patch pixel

    def to_frame(self, px, py):
        fx = self.start_x + (px + 0.5) * self.scale - 0.5
        fy = self.start_y + (py + 0.5) * self.scale - 0.5
        return fx, fy

    def to_patch(self, fx, fy):
        px = (fx - self.start_x + 0.5) / self.scale - 0.5
        py = (fy - self.start_y + 0.5) / self.scale - 0.5
        return px, py


def crop_search_region(frame, prev, context=2.0, out_size=48):
    """Fixed-size search patch around the previous box, border-replicated."""
    side = max(int(round(context * max(prev.w, prev.h))), 4)
    patch, sx, sy = crop_replicate(frame, prev.cx, prev.cy, side)
    patch = bilinear_resize(patch, out_size, out_size)
    return patch, PatchMapping(sx, sy, side / out_size)


@dataclass
class TrackState:
    template: np.ndarray
    template_features: Tensor
    bbox: BBox
    frame_idx: int = 0


def embed_template(params, tpl):
    """Mean-removed template features: flat regions then correlate to ~0,
    which keeps the response centered regardless of background level."""
    feats = tracker_features(params, Tensor(tpl)).detach()
    centered = feats.data - feats.data.mean()
    return Tensor(centered)


def init_track(params, frame, gt_bbox, cfg=TrackerConfig()):
    """Crop and embed the object template from the first frame."""
    h, w = frame.shape[:2]
    x0, y0, x1, y1 = gt_bbox.corners()
    if not (0 <= x0 and x1 <= h and 0 <= y0 and y1 <= w):
        raise DomainError(f"gt box {gt_bbox} outside {h}x{w} frame")
    tpl, _, _ = crop_replicate(frame, gt_bbox.cx, gt_bbox.cy, cfg.template_size)
    feats = embed_template(params, tpl)
    return TrackState(tpl, feats, BBox(gt_bbox.cx, gt_bbox.cy, gt_bbox.w, gt_bbox.h))


def response_map(params, template_features, patch):
    """Channel-summed cross-correlation of template features over the
    search features, normalized by window size and scaled by the
    learnable gain; differentiable w.r.t. the patch."""
    t = patch if isinstance(patch, Tensor) else Tensor(patch)
    feats = tracker_features(params, t)
    th, tw, c = template_features.shape
    corr = nm.xcorr(feats, template_features)
    return nm.mul(nm.smul(corr, 1.0 / np.sqrt(th * tw * c)), params.gain)


def locate(response):
    """First-occurrence argmax of a response map array."""
    r = response.data if isinstance(response, Tensor) else np.asarray(response)
    idx = int(np.argmax(r))
    return idx // r.shape[1], idx % r.shape[1]


def peak_to_patch(uv, template_size):
    """Patch coordinates of the template center for a response peak."""
    return (uv[0] + (template_size - 1) / 2.0, uv[1] + (template_size - 1) / 2.0)


def patch_to_peak(pxy, template_size, response_shape):
    u = int(round(pxy[0] - (template_size - 1) / 2.0))
    v = int(round(pxy[1] - (template_size - 1) / 2.0))
    return (int(np.clip(u, 0, response_shape[0] - 1)),
            int(np.clip(v, 0, response_shape[1] - 1)))


def track_patch(params, state, patch, mapping, cfg=TrackerConfig(), frame_shape=None):
    """Advance the state one frame using an already-cropped search patch."""
    resp = response_map(params, state.template_features, patch)
    scores = resp.data + cfg.motion_prior * _center_window(resp.shape)
    uv = locate(scores)
    px, py = peak_to_patch(uv, cfg.template_size)
    fx, fy = mapping.to_frame(px, py)
    if frame_shape is not None:
        fx = float(np.clip(fx, 0, frame_shape[0] - 1))
        fy = float(np.clip(fy, 0, frame_shape[1] - 1))
    state.bbox = BBox(fx, fy, state.bbox.w, state.bbox.h)
    state.frame_idx += 1
    return state.bbox, resp


def track_step(params, state, frame, cfg=TrackerConfig()):
    """Crop around the previous box and advance one frame."""
    patch, mapping = crop_search_region(frame, state.bbox, cfg.context, cfg.search_size)
    return track_patch(params, state, patch, mapping, cfg, frame.shape[:2])


def tracker_loss(response, target_pos):
    """Softmax cross-entropy of the response against a target position."""
    r = response if isinstance(response, Tensor) else Tensor(response)
    p, q = r.shape
    u, v = int(target_pos[0]), int(target_pos[1])
    if not (0 <= u < p and 0 <= v < q):
        raise DomainError(f"target {target_pos} outside {r.shape} response")
    return nm.softmax_xent(nm.reshape(r, (p * q,)), u * q + v)


def zncc_response(params, template_features, patch):
    """Zero-normalized cross-correlation oracle: mean-removed, per-window
    unit-normalized. Used by tests as the localization reference."""
    feats = tracker_features(params, Tensor(patch)).data
    tf = np.asarray(template_features.data if isinstance(template_features, Tensor)
                    else template_features, dtype=np.float64)
    th, tw, c = tf.shape
    tvec = (tf - tf.mean()).reshape(-1)
    tn = np.linalg.norm(tvec)
    if tn == 0:
        raise MetricError("flat template features")
    cols = kernels.im2col(np.ascontiguousarray(feats), th, tw).astype(np.float64)
    cols = cols - cols.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(cols, axis=1)
    out = cols @ tvec / (np.maximum(norms, 1e-12) * tn)
    ho = feats.shape[0] - th + 1
    return out.reshape(ho, -1).astype(np.float32)
