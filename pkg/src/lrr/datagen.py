"""Deterministic synthetic videos and training-pair construction.

A textured object moves over a textured background with linear motion
plus Gaussian jitter. Training pairs mirror deployment: per-frame
search regions are cropped around the object, perturbed with one-shot
signed-gradient noise against the desk tracker, and centrally cropped;
the clean crop of the newest frame is kept as the target.
"""

from dataclasses import dataclass, field

import numpy as np

from .attacks import FGSM_TRAIN_EPS, fgsm, make_patch_loss
from .errors import ConfigError
from .imageops import crop_replicate, paste, shift_replicate
from .tracker import (BBox, TrackerConfig, crop_search_region, embed_template,
                      patch_to_peak)

TEXTURE_CLASSES = ("checker", "stripes", "rings", "blob",
                   "dots", "cross", "waves", "grid")


def background(shape, rng):
    """Smooth low-frequency color field.

    High-frequency backgrounds alias against the object textures and
    make correlation peaks ambiguous, so backgrounds stay in a long-
    period regime while objects carry the sharp classes."""
    h, w = shape
    xi, yi = np.meshgrid(np.arange(h, dtype=np.float32),
                         np.arange(w, dtype=np.float32), indexing="ij")
    period = rng.uniform(28.0, 64.0)
    base = 0.5 + 0.25 * (np.sin(xi * 2 * np.pi / period + rng.uniform(0, 6.28))
                         * np.cos(yi * 2 * np.pi / period + rng.uniform(0, 6.28)))
    lo = rng.uniform(0.1, 0.4, size=3).astype(np.float32)
    hi = rng.uniform(0.6, 0.9, size=3).astype(np.float32)
    return (lo + (hi - lo) * base[..., None]).astype(np.float32)


def texture(kind, shape, rng):
    """Procedural texture in [0,1]; colors and phases drawn from rng."""
    h, w = shape
    xi, yi = np.meshgrid(np.arange(h, dtype=np.float32),
                         np.arange(w, dtype=np.float32), indexing="ij")
    phase = rng.uniform(0, 6.28)
    period = rng.uniform(3.0, 6.0)
    if kind == "checker":
        m = ((xi // max(2, int(period // 2)) + yi // max(2, int(period // 2))) % 2)
    elif kind == "stripes":
        m = 0.5 + 0.5 * np.sign(np.sin((xi + yi) * 2 * np.pi / period + phase))
    elif kind == "rings":
        cx, cy = h / 2, w / 2
        r = np.sqrt((xi - cx) ** 2 + (yi - cy) ** 2)
        m = 0.5 + 0.5 * np.sign(np.sin(r * 2 * np.pi / period + phase))
    elif kind == "blob":
        cx, cy = h / 2, w / 2
        m = np.exp(-(((xi - cx) ** 2 + (yi - cy) ** 2) / (0.15 * h * w)))
    elif kind == "dots":
        m = ((xi % period < period / 2.5) & (yi % period < period / 2.5)).astype(np.float32)
    elif kind == "cross":
        m = (((np.abs(xi - h / 2) < h / 6) | (np.abs(yi - w / 2) < w / 6))).astype(np.float32)
    elif kind == "waves":
        m = 0.5 + 0.5 * np.sin(xi * 2 * np.pi / period + np.sin(yi / 2.0) + phase)
    elif kind == "grid":
        m = 1.0 - ((xi % period < 1.5) | (yi % period < 1.5)).astype(np.float32)
    else:
        raise ConfigError(f"unknown texture class {kind!r}")
    lo = rng.uniform(0.0, 0.35, size=3).astype(np.float32)
    hi = rng.uniform(0.65, 1.0, size=3).astype(np.float32)
    m = m.astype(np.float32)[..., None]
    return (lo + (hi - lo) * m).astype(np.float32)


def object_patch(label, size, rng):
    """Object texture under a radial contrast envelope.

    Periodic classes are self-similar under translation; the envelope
    makes the autocorrelation peak unique so correlation trackers do
    not lock half a period off."""
    xi, yi = np.meshgrid(np.arange(size, dtype=np.float32),
                         np.arange(size, dtype=np.float32), indexing="ij")
    c = (size - 1) / 2.0
    r = np.sqrt((xi - c) ** 2 + (yi - c) ** 2) / (c + 1e-6)
    envelope = (1.0 - 0.5 * np.clip(r, 0, 1) ** 2)[..., None].astype(np.float32)
    return texture(label, (size, size), rng) * envelope


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    frame_size: tuple = (64, 64)
    object_size: tuple = (10, 16)
    velocity: float = 2.0    # max |v| per axis, px/frame
    jitter: float = 0.5      # Gaussian jitter std, px
    length: int = 30
    classes: tuple = TEXTURE_CLASSES

    def __post_init__(self):
        if self.frame_size[0] <= 0 or self.frame_size[1] <= 0:
            raise ConfigError("frame size must be positive")
        if self.length < 1:
            raise ConfigError("length must be >= 1")
        if self.object_size[1] >= min(self.frame_size):
            raise ConfigError("object larger than frame")


@dataclass
class SynthVideo:
    frames: list
    boxes: list
    label: str
    seed: int

    def __len__(self):
        return len(self.frames)


def gen_sequence(cfg):
    """One deterministic video: moving textured object over a background."""
    rng = np.random.default_rng(cfg.seed)
    h, w = cfg.frame_size
    label = cfg.classes[rng.integers(0, len(cfg.classes))]
    size = int(rng.integers(cfg.object_size[0], cfg.object_size[1] + 1))
    bg = background((h, w), rng)
    obj = object_patch(label, size, rng)
    vel = rng.uniform(-cfg.velocity, cfg.velocity, size=2)
    half = size / 2.0
    cx = rng.uniform(half + 1, h - half - 1)
    cy = rng.uniform(half + 1, w - half - 1)
    frames, boxes = [], []
    for _ in range(cfg.length):
        frame = bg.copy()
        x0 = int(round(cx - half))
        y0 = int(round(cy - half))
        paste(frame, obj, x0, y0)
        frames.append(frame)
        boxes.append(BBox(x0 + half, y0 + half, float(size), float(size)))
        step = vel + rng.normal(0, cfg.jitter, size=2)
        cx = float(np.clip(cx + step[0], half, h - half))
        cy = float(np.clip(cy + step[1], half, w - half))
    return SynthVideo(frames, boxes, label, cfg.seed)


def random_translate(image, seed, n, max_shift=3):
    """n-frame sequence of integer translations of one image.

    Frame 0 is the original; offsets are recorded so frames can be
    reproduced exactly.
    """
    if n < 1:
        raise ConfigError("need at least one frame")
    rng = np.random.default_rng(seed)
    offsets = [(0, 0)]
    frames = [np.asarray(image, dtype=np.float32).copy()]
    for _ in range(n - 1):
        dx, dy = (int(v) for v in rng.integers(-max_shift, max_shift + 1, size=2))
        offsets.append((dx, dy))
        frames.append(shift_replicate(image, dx, dy))
    return frames, np.array(offsets, dtype=np.int64)


@dataclass
class TrainingPair:
    """One supervised purification sample.

    `seq` holds the N+1 perturbed crops (oldest first); `clean_window`
    the matching clean crops; `clean_target` equals clean_window[-1].
    The template is cropped clean from a frame outside the window.
    """
    seq: list
    template: np.ndarray
    clean_target: np.ndarray
    clean_window: list
    label: str
    window: tuple
    template_frame: int
    eps: float


def make_training_pair(video, gts, tracker_params, n, rng, eps=FGSM_TRAIN_EPS,
                       crop=32, tracker_cfg=TrackerConfig(), center_jitter=1.0):
    """Crop a contiguous N+1 window of search regions, perturb each
    against the tracker, and keep the clean newest crop as the target."""
    frames, boxes = video.frames, gts
    if len(frames) < n + 2:
        raise ConfigError(f"video length {len(frames)} too short for N={n}")
    w0 = int(rng.integers(0, len(frames) - n))
    window = tuple(range(w0, w0 + n + 1))
    outside = [i for i in range(len(frames)) if i not in window]
    tpl_idx = int(outside[rng.integers(0, len(outside))])
    tb = boxes[tpl_idx]
    template, _, _ = crop_replicate(frames[tpl_idx], tb.cx, tb.cy,
                                    tracker_cfg.template_size)
    tpl_feats = embed_template(tracker_params, template)

    s = tracker_cfg.search_size
    c0 = (s - crop) // 2
    seq, clean_window = [], []
    for fi in window:
        gt = boxes[fi]
        jit = rng.normal(0, center_jitter, size=2)
        center = BBox(gt.cx + jit[0], gt.cy + jit[1], gt.w, gt.h)
        patch, mapping = crop_search_region(frames[fi], center,
                                            tracker_cfg.context, s)
        gpx = mapping.to_patch(gt.cx, gt.cy)
        resp_side = s - tracker_cfg.template_size + 1
        uv = patch_to_peak(gpx, tracker_cfg.template_size, (resp_side, resp_side))
        loss = make_patch_loss(tracker_params, tpl_feats, uv)
        attacked = fgsm(patch, loss, eps)
        seq.append(np.ascontiguousarray(attacked[c0:c0 + crop, c0:c0 + crop]))
        clean_window.append(np.ascontiguousarray(patch[c0:c0 + crop, c0:c0 + crop]))
    return TrainingPair(seq=seq, template=template,
                        clean_target=clean_window[-1], clean_window=clean_window,
                        label=video.label, window=window, template_frame=tpl_idx,
                        eps=eps)


def build_corpus(n_pairs, base_seed, tracker_params, n=4, eps=FGSM_TRAIN_EPS,
                 crop=32, frame_size=(64, 64), tracker_cfg=TrackerConfig()):
    """Deterministic corpus: pair i is reproducible from (base_seed, i)."""
    pairs = []
    for i in range(n_pairs):
        cfg = SynthConfig(seed=base_seed + 1000 + i, frame_size=frame_size,
                          length=n + 4)
        video = gen_sequence(cfg)
        rng = np.random.default_rng((base_seed, i))
        pairs.append(make_training_pair(video, video.boxes, tracker_params, n,
                                        rng, eps=eps, crop=crop,
                                        tracker_cfg=tracker_cfg))
    return pairs
