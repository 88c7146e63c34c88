"""Training loops and checkpoint persistence.

The representation and the offset predictor are trained independently
(joint training is deliberately not offered): first the encoder + MLPs
on L1 reconstruction of the clean target, then the offset net against
the same L1 with the representation frozen. Both loops are seeded,
budgeted by wall-clock, and return best-validation parameters.
"""

import json
import struct
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from . import resampler as rs
from . import stir as st
from .datagen import SynthConfig, gen_sequence
from .errors import FormatError, TrainingError
from .guidance import fixture_template_embedding, select_text_embedding
from .imageops import crop_replicate, sample_bilinear
from .nets import (TrackerSpec, flatten_params, init_params, load_flat,
                   set_requires_grad, tracker_features)
from .numerics import Tensor
from .tracker import (BBox, TrackerConfig, crop_search_region, embed_template,
                      patch_to_peak, response_map, tracker_loss)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 8
    epochs: int = 30
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_every: int = 250        # optimizer steps between validation passes
    max_seconds: float = None    # wall-clock budget; None = unlimited
    jitter_prob: float = 0.5     # fraction of samples trained at off-grid coords
    tau_jitter_prob: float = 0.25
    val_subset: int = 64         # pairs used for in-loop validation

    def __post_init__(self):
        if self.lr <= 0:
            raise TrainingError("learning rate must be positive")


class Adam:
    def __init__(self, tensors, cfg):
        self.tensors = list(tensors)
        self.cfg = cfg
        self.m = [np.zeros_like(t.data) for t in self.tensors]
        self.v = [np.zeros_like(t.data) for t in self.tensors]
        self.t = 0

    def step(self, grads):
        c = self.cfg
        self.t += 1
        b1t = 1 - c.beta1 ** self.t
        b2t = 1 - c.beta2 ** self.t
        for i, p in enumerate(self.tensors):
            g = grads.get(p)
            if g is None:
                continue
            self.m[i] = c.beta1 * self.m[i] + (1 - c.beta1) * g
            self.v[i] = c.beta2 * self.v[i] + (1 - c.beta2) * g * g
            p.data = p.data - c.lr * (self.m[i] / b1t) / (np.sqrt(self.v[i] / b2t) + c.adam_eps)


def _accumulate(total, grads, scale):
    for t, g in grads.items():
        if t in total:
            total[t] += g * scale
        else:
            total[t] = g * scale
    return total


# ------------------------------------------------------------------- STIR

def _pair_coords_and_target(pair, rng, cfg):
    """Grid or jittered query coordinates plus the matching clean values."""
    tgt = pair.clean_target
    h, w = tgt.shape[:2]
    n = len(pair.seq) - 1
    grid = st.grid_coords(h, w, n)
    if rng.random() >= cfg.jitter_prob:
        return grid, tgt.reshape(-1, 3)
    coords = grid.copy()
    coords[:, :2] += rng.uniform(-0.5, 0.5, size=(h * w, 2)).astype(np.float32)
    coords[:, 0] = np.clip(coords[:, 0], 0, h - 1)
    coords[:, 1] = np.clip(coords[:, 1], 0, w - 1)
    if n >= 1 and rng.random() < cfg.tau_jitter_prob:
        u = np.float32(rng.uniform(0.0, 1.0))
        coords[:, 2] = n - u
        blend = (1 - u) * pair.clean_window[-1] + u * pair.clean_window[-2]
    else:
        blend = tgt
    target = sample_bilinear(blend, coords[:, :2])
    return coords, target


def _stir_pair_loss(params, pair, coords, target):
    seq = st.SequenceBuffer(pair.seq)
    vol = st.encode_sequence(params, seq)
    out = st.render_frame(vol, params, coords=coords, clamp_out=False)
    q = coords.shape[0]
    return nm.l1_loss(nm.reshape(out, (q * 3,)), Tensor(target.reshape(q * 3)))


def stir_val_l1(params, pairs):
    """Mean L1 between the grid reconstruction and the clean target."""
    set_requires_grad(params.encoder, False)
    for p in (params.spatial_mlp, params.temporal_mlp, params.joint_mlp):
        set_requires_grad(p, False)
    tot = 0.0
    for pair in pairs:
        rec = st.reconstruct_frame(st.SequenceBuffer(pair.seq), params)
        tot += float(np.abs(rec - pair.clean_target).mean())
    return tot / max(len(pairs), 1)


def perturbed_input_l1(pairs):
    """Mean L1 between the perturbed newest frame and the clean target."""
    return float(np.mean([np.abs(p.seq[-1] - p.clean_target).mean() for p in pairs]))


def train_stir(pairs, cfg, spec=None, val_pairs=None, params=None):
    """Adam on L1 reconstruction; returns (best-validation params, history)."""
    if not pairs:
        raise TrainingError("no training pairs")
    spec = spec or st.StirSpec(history=len(pairs[0].seq) - 1)
    params = params or st.init_stir(cfg.seed, spec)
    trainable = (params.encoder.tensors() + params.spatial_mlp.tensors()
                 + params.temporal_mlp.tensors())
    opt = Adam(trainable, cfg)
    rng = np.random.default_rng(cfg.seed)
    val = (val_pairs or pairs)[:cfg.val_subset]
    history = []
    best = (np.inf, flatten_params(params))
    t_start = time.perf_counter()
    stop = False
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        for bstart in range(0, len(order), cfg.batch_size):
            batch = order[bstart:bstart + cfg.batch_size]
            for t in trainable:
                t.requires_grad = True
            total = {}
            loss_sum = 0.0
            for idx in batch:
                pair = pairs[idx]
                coords, target = _pair_coords_and_target(pair, rng, cfg)
                loss = _stir_pair_loss(params, pair, coords, target)
                lv = loss.item()
                if not np.isfinite(lv):
                    raise TrainingError("training loss diverged",
                                        last_good=best[1])
                loss_sum += lv
                _accumulate(total, nm.backward(loss), 1.0 / len(batch))
            opt.step(total)
            step += 1
            elapsed = time.perf_counter() - t_start
            if step % cfg.eval_every == 0 or (cfg.max_seconds and elapsed > cfg.max_seconds):
                vl = stir_val_l1(params, val)
                history.append({"step": step, "epoch": epoch,
                                "train_l1": loss_sum / len(batch),
                                "val_l1": vl, "seconds": elapsed})
                if vl < best[0]:
                    best = (vl, flatten_params(params))
            if cfg.max_seconds and elapsed > cfg.max_seconds:
                stop = True
                break
        if stop:
            break
    if not history:
        vl = stir_val_l1(params, val)
        history.append({"step": step, "epoch": 0, "train_l1": np.nan,
                        "val_l1": vl, "seconds": time.perf_counter() - t_start})
        if vl < best[0]:
            best = (vl, flatten_params(params))
    load_flat(params, best[1])
    return params, history


# -------------------------------------------------------------- offset net

def pair_template_embedding(pair, dim, instance=0):
    return fixture_template_embedding(pair.label, dim=dim, instance=instance)


def train_lresample(pairs, stir_params, bank, cfg, spec=None):
    """Train the offset net against L1 with the representation frozen."""
    if not pairs:
        raise TrainingError("no training pairs")
    set_requires_grad(stir_params.encoder, False)
    for p in (stir_params.spatial_mlp, stir_params.temporal_mlp, stir_params.joint_mlp):
        set_requires_grad(p, False)
    text_dim = bank.dim if bank is not None else 0
    spec = spec or rs.LResampleSpec(feat_channels=stir_params.spec.channels,
                                    text_dim=text_dim)
    params = rs.init_lresample(cfg.seed, spec)
    opt = Adam(params.tensors(), cfg)
    rng = np.random.default_rng(cfg.seed)
    val = pairs[:cfg.val_subset]
    history = []
    best = (np.inf, flatten_params(params))
    t_start = time.perf_counter()

    def defend_loss(pair, i):
        seq = st.SequenceBuffer(pair.seq)
        vol = st.encode_sequence(stir_params, seq)
        if spec.text_dim:
            tpl = pair_template_embedding(pair, spec.text_dim, instance=i)
            ztxt = select_text_embedding(tpl, bank)
        else:
            ztxt = None
        offsets = rs.predict_offsets(vol.slices[-1], ztxt, params)
        coords = rs.resample_coords(offsets, vol.t, *seq.shape, vol.t0)
        out = st.render_frame(vol, stir_params, coords=coords, clamp_out=False)
        h, w = seq.shape
        return nm.l1_loss(nm.reshape(out, (h * w * 3,)),
                          Tensor(pair.clean_target.reshape(-1)))

    def val_l1():
        for t in params.tensors():
            t.requires_grad = False
        tot = 0.0
        for i, pair in enumerate(val):
            out = rs.lrr_defend(st.SequenceBuffer(pair.seq),
                                pair_template_embedding(pair, spec.text_dim, i)
                                if spec.text_dim else None,
                                bank, stir_params, params)
            tot += float(np.abs(out - pair.clean_target).mean())
        return tot / max(len(val), 1)

    step = 0
    stop = False
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        for bstart in range(0, len(order), cfg.batch_size):
            batch = order[bstart:bstart + cfg.batch_size]
            for t in params.tensors():
                t.requires_grad = True
            total = {}
            loss_sum = 0.0
            for idx in batch:
                loss = defend_loss(pairs[idx], int(idx))
                lv = loss.item()
                if not np.isfinite(lv):
                    raise TrainingError("training loss diverged", last_good=best[1])
                loss_sum += lv
                _accumulate(total, nm.backward(loss), 1.0 / len(batch))
            opt.step(total)
            step += 1
            elapsed = time.perf_counter() - t_start
            if step % cfg.eval_every == 0 or (cfg.max_seconds and elapsed > cfg.max_seconds):
                vl = val_l1()
                history.append({"step": step, "epoch": epoch,
                                "train_l1": loss_sum / len(batch),
                                "val_l1": vl, "seconds": elapsed})
                if vl < best[0]:
                    best = (vl, flatten_params(params))
            if cfg.max_seconds and elapsed > cfg.max_seconds:
                stop = True
                break
        if stop:
            break
    if not history:
        vl = val_l1()
        history.append({"step": step, "epoch": 0, "train_l1": np.nan,
                        "val_l1": vl, "seconds": time.perf_counter() - t_start})
        if vl < best[0]:
            best = (vl, flatten_params(params))
    load_flat(params, best[1])
    for t in params.tensors():
        t.requires_grad = False
    return params, history


# ----------------------------------------------------------------- tracker

def pretrain_tracker(cfg, tracker_cfg=TrackerConfig(), steps=400, batch=4,
                     frame_size=(64, 64)):
    """Short supervised run: maximize the response at the true position
    on synthetic template/search pairs."""
    params = init_params(cfg.seed, TrackerSpec(channels=tracker_cfg.channels))
    opt = Adam(params.tensors(), cfg)
    rng = np.random.default_rng(cfg.seed + 7)
    resp_side = tracker_cfg.search_size - tracker_cfg.template_size + 1
    for _ in range(steps):
        total = {}
        for _ in range(batch):
            video = gen_sequence(SynthConfig(seed=int(rng.integers(1 << 31)),
                                             frame_size=frame_size, length=3))
            gt0, gt2 = video.boxes[0], video.boxes[-1]
            tpl, _, _ = crop_replicate(video.frames[0], gt0.cx, gt0.cy,
                                       tracker_cfg.template_size)
            jit = rng.normal(0, 2.0, size=2)
            center = BBox(gt2.cx + jit[0], gt2.cy + jit[1], gt2.w, gt2.h)
            patch, mapping = crop_search_region(video.frames[-1], center,
                                                tracker_cfg.context,
                                                tracker_cfg.search_size)
            for t in params.tensors():
                t.requires_grad = True
            raw = tracker_features(params, Tensor(tpl))
            tpl_feats = nm.add(raw, nm.smul(nm.mean(raw), -1.0))
            resp = response_map(params, tpl_feats, patch)
            uv = patch_to_peak(mapping.to_patch(gt2.cx, gt2.cy),
                               tracker_cfg.template_size, (resp_side, resp_side))
            loss = tracker_loss(resp, uv)
            if not np.isfinite(loss.item()):
                raise TrainingError("tracker pretraining diverged")
            _accumulate(total, nm.backward(loss), 1.0 / batch)
        opt.step(total)
    for t in params.tensors():
        t.requires_grad = False
    return params


# -------------------------------------------------------------- checkpoint

CKPT_MAGIC = b"LRR1"
CKPT_VERSION = 1


@dataclass
class Checkpoint:
    kind: str          # "stir" | "lresample" | "tracker"
    spec: dict
    blob: np.ndarray   # float32 parameter vector
    meta: dict = field(default_factory=dict)


def checkpoint_from_params(kind, params, meta=None):
    if kind == "stir":
        spec = params.spec.to_dict()
    elif kind == "lresample":
        spec = params.spec.to_dict()
    elif kind == "tracker":
        spec = {"in_channels": params.spec.in_channels,
                "channels": params.spec.channels}
    else:
        raise FormatError(f"unknown checkpoint kind {kind!r}")
    return Checkpoint(kind, spec, flatten_params(params).astype(np.float32),
                      dict(meta or {}))


def params_from_checkpoint(ckpt):
    if ckpt.kind == "stir":
        params = st.init_stir(0, st.StirSpec.from_dict(ckpt.spec))
    elif ckpt.kind == "lresample":
        params = rs.init_lresample(0, rs.LResampleSpec.from_dict(ckpt.spec))
    elif ckpt.kind == "tracker":
        params = init_params(0, TrackerSpec(**ckpt.spec))
    else:
        raise FormatError(f"unknown checkpoint kind {ckpt.kind!r}")
    load_flat(params, ckpt.blob)
    for t in params.tensors():
        t.requires_grad = False
    return params


def save_checkpoint(ckpt, path):
    kind = ckpt.kind.encode("utf-8")
    head = json.dumps({"spec": ckpt.spec, "meta": ckpt.meta},
                      sort_keys=True).encode("utf-8")
    blob = np.ascontiguousarray(ckpt.blob, dtype="<f4").tobytes()
    body = (CKPT_MAGIC + struct.pack("<I", CKPT_VERSION)
            + struct.pack("<H", len(kind)) + kind
            + struct.pack("<I", len(head)) + head
            + struct.pack("<I", ckpt.blob.size) + blob)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 18 or data[:4] != CKPT_MAGIC:
        raise FormatError("bad checkpoint magic")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise FormatError("checkpoint CRC mismatch")
    try:
        (version,) = struct.unpack_from("<I", body, 4)
        if version != CKPT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        off = 8
        (klen,) = struct.unpack_from("<H", body, off)
        off += 2
        kind = body[off:off + klen].decode("utf-8")
        off += klen
        (hlen,) = struct.unpack_from("<I", body, off)
        off += 4
        head = json.loads(body[off:off + hlen].decode("utf-8"))
        off += hlen
        (count,) = struct.unpack_from("<I", body, off)
        off += 4
        blob = np.frombuffer(body, dtype="<f4", count=count, offset=off)
        if blob.size != count or off + 4 * count != len(body):
            raise FormatError("checkpoint length mismatch")
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint: {exc}") from exc
    return Checkpoint(kind, head["spec"], blob.copy(), head.get("meta", {}))
