"""Offset prediction and the resampling render.

A small conv net looks at the newest frame's features, broadcast-
concatenated with the selected text embedding, and emits a bounded
(dx, dy, dtau) offset per pixel; the purified frame is the continuous
representation queried at grid + offsets. With the final layer at zero
the whole thing degenerates to the plain grid render.
"""

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from . import stir as st
from .errors import ShapeError
from .guidance import TemplateEmbedding, select_text_embedding
from .nets import he_weight, zero_bias
from .numerics import Tensor


@dataclass(frozen=True)
class LResampleSpec:
    feat_channels: int = 32     # C, must match the encoder
    text_dim: int = 16          # M; 0 builds the text-free variant
    hidden: int = 32
    scale_xy: float = 1.0       # offset bound in pixels
    scale_tau: float = 1.0      # offset bound in frames

    @property
    def in_channels(self):
        return self.feat_channels + self.text_dim

    def to_dict(self):
        return {"feat_channels": self.feat_channels, "text_dim": self.text_dim,
                "hidden": self.hidden, "scale_xy": self.scale_xy,
                "scale_tau": self.scale_tau}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class LResampleParams:
    """Three 3x3 convs (ReLU between, linear out) over [feature | z_txt]."""

    def __init__(self, spec, convs):
        if convs[0][0].shape[2] != spec.in_channels:
            raise ShapeError("offset net input channels != C + M")
        if convs[-1][0].shape[3] != 3:
            raise ShapeError("offset net must emit 3 channels")
        self.spec = spec
        self.convs = convs  # [(w, b)] * 3

    def tensors(self):
        out = []
        for w, b in self.convs:
            out.extend([w, b])
        return out


def init_lresample(seed, spec=LResampleSpec()):
    """He init with a zero final layer, so training starts from the
    plain grid render."""
    rng = np.random.default_rng(seed)
    cin, h = spec.in_channels, spec.hidden
    convs = [
        (he_weight(rng, (3, 3, cin, h), 9 * cin), zero_bias(h)),
        (he_weight(rng, (3, 3, h, h), 9 * h), zero_bias(h)),
        (Tensor(np.zeros((3, 3, h, 3), np.float32), requires_grad=True), zero_bias(3)),
    ]
    return LResampleParams(spec, convs)


@dataclass
class OffsetField:
    """Per-pixel (dx, dy, dtau) offsets, bounded by construction."""
    deltas: Tensor  # (H, W, 3)

    @property
    def shape(self):
        return self.deltas.shape[:2]


def predict_offsets(vol_slice, ztxt, params):
    """Bounded offsets from the frame-t features and the text embedding.

    `vol_slice` is (H, W, C); `ztxt` a TextEmbedding/TemplateEmbedding
    or raw vector, ignored when the spec is text-free.
    """
    spec = params.spec
    if vol_slice.shape[2] != spec.feat_channels:
        raise ShapeError(f"feature channels {vol_slice.shape[2]} != {spec.feat_channels}")
    h, w = vol_slice.shape[:2]
    if spec.text_dim:
        vec = getattr(ztxt, "vector", ztxt)
        vec = np.asarray(vec, dtype=np.float32).reshape(-1)
        if vec.size != spec.text_dim:
            raise ShapeError(f"text dim {vec.size} != {spec.text_dim}")
        zmap = Tensor(np.broadcast_to(vec, (h, w, vec.size)).copy())
        x = nm.concat([vol_slice, zmap], axis=-1)
    else:
        x = vol_slice
    for wgt, b in params.convs[:-1]:
        x = nm.relu(nm.conv2d(x, wgt, b))
    raw = nm.conv2d(x, *params.convs[-1])
    scales = np.array([spec.scale_xy, spec.scale_xy, spec.scale_tau], np.float32)
    return OffsetField(nm.mul(nm.tanh(raw), Tensor(scales)))


def resample_coords(offsets, t, h, w, t0):
    """Grid + offsets as a clamped (H*W, 3) coordinate tensor."""
    grid = st.grid_coords(h, w, t)
    flat = nm.add(nm.reshape(offsets.deltas, (h * w, 3)), Tensor(grid))
    x = nm.clamp(nm.narrow(flat, 1, 0, 1), 0.0, float(h - 1))
    y = nm.clamp(nm.narrow(flat, 1, 1, 1), 0.0, float(w - 1))
    tau = nm.clamp(nm.narrow(flat, 1, 2, 1), float(t0), float(t))
    return nm.concat([x, y, tau], axis=1)


def resample_frame(seq, offsets, stir_params, vol=None, counter=None):
    """Purified frame t: query the representation at grid + offsets."""
    if vol is None:
        vol = st.encode_sequence(stir_params, seq)
    h, w = vol.shape
    if offsets.shape != (h, w):
        raise ShapeError(f"offset field {offsets.shape} != frame {(h, w)}")
    coords = resample_coords(offsets, vol.t, h, w, vol.t0)
    return st.render_frame(vol, stir_params, coords=coords, counter=counter)


def lrr_defend(seq, template, bank, stir_params, lres_params, counter=None,
               vol=None, return_parts=False):
    """Full purification: select z_txt, encode, predict offsets, resample.

    `template` is a TemplateEmbedding (the fixture generator or the
    exporter provide one); deterministic given inputs. Returns the
    (H, W, 3) purified frame as float32 in [0,1].
    """
    if lres_params.spec.text_dim:
        tpl = template if isinstance(template, TemplateEmbedding) else TemplateEmbedding(template)
        ztxt = select_text_embedding(tpl, bank)
    else:
        ztxt = None
    if vol is None:
        vol = st.encode_sequence(stir_params, seq)
    offsets = predict_offsets(vol.slices[-1], ztxt, lres_params)
    out = resample_frame(seq, offsets, stir_params, vol=vol, counter=counter)
    if return_parts:
        return out.data.copy(), offsets, ztxt
    return out.data.copy()
