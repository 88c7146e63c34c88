"""Small image helpers shared by the tracker, data generator and benches.

All functions are plain numpy on (H, W, C) float32 arrays; coordinates
follow the (x=row, y=col) convention used everywhere in this package.
"""

import numpy as np


def bilinear_resize(img, out_h, out_w):
    """Resize with pixel-center alignment; scale 1 is an exact identity."""
    h, w = img.shape[:2]
    if (out_h, out_w) == (h, w):
        return img.astype(np.float32, copy=True)
    xs = (np.arange(out_h, dtype=np.float32) + 0.5) * (h / out_h) - 0.5
    ys = (np.arange(out_w, dtype=np.float32) + 0.5) * (w / out_w) - 0.5
    xs = np.clip(xs, 0, h - 1)
    ys = np.clip(ys, 0, w - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, max(h - 2, 0))
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, max(w - 2, 0))
    fx = (xs - x0)[:, None, None]
    fy = (ys - y0)[None, :, None]
    x1 = np.minimum(x0 + 1, h - 1)
    y1 = np.minimum(y0 + 1, w - 1)
    a = img[np.ix_(x0, y0)]
    b = img[np.ix_(x0, y1)]
    c = img[np.ix_(x1, y0)]
    d = img[np.ix_(x1, y1)]
    out = (a * (1 - fx) * (1 - fy) + b * (1 - fx) * fy
           + c * fx * (1 - fy) + d * fx * fy)
    return out.astype(np.float32)


def sample_bilinear(img, coords_xy):
    """Sample (H, W, C) at real (x, y) points -> (Q, C); coords clamped."""
    h, w = img.shape[:2]
    c = np.asarray(coords_xy, dtype=np.float32).reshape(-1, 2)
    xs = np.clip(c[:, 0], 0, h - 1)
    ys = np.clip(c[:, 1], 0, w - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, max(h - 2, 0))
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, max(w - 2, 0))
    x1 = np.minimum(x0 + 1, h - 1)
    y1 = np.minimum(y0 + 1, w - 1)
    fx = (xs - x0)[:, None]
    fy = (ys - y0)[:, None]
    out = (img[x0, y0] * (1 - fx) * (1 - fy) + img[x0, y1] * (1 - fx) * fy
           + img[x1, y0] * fx * (1 - fy) + img[x1, y1] * fx * fy)
    return out.astype(np.float32)


def crop_replicate(img, center_x, center_y, side):
    """Square side x side crop centered at a real point, replicating borders.

    Returns (patch, start_x, start_y) where start is the frame index of
    patch pixel (0, 0) before clipping.
    """
    h, w = img.shape[:2]
    sx = int(round(center_x - (side - 1) / 2.0))
    sy = int(round(center_y - (side - 1) / 2.0))
    xs = np.clip(np.arange(sx, sx + side), 0, h - 1)
    ys = np.clip(np.arange(sy, sy + side), 0, w - 1)
    return np.ascontiguousarray(img[np.ix_(xs, ys)]), sx, sy


def shift_replicate(img, dx, dy):
    """Integer translate with edge replication; positive dx moves content down."""
    h, w = img.shape[:2]
    xs = np.clip(np.arange(h) - int(dx), 0, h - 1)
    ys = np.clip(np.arange(w) - int(dy), 0, w - 1)
    return np.ascontiguousarray(img[np.ix_(xs, ys)])


def paste(frame, patch, x0, y0):
    """Write `patch` into `frame` at top-left (x0, y0), clipped in place."""
    h, w = frame.shape[:2]
    ph, pw = patch.shape[:2]
    fx0, fy0 = max(x0, 0), max(y0, 0)
    fx1, fy1 = min(x0 + ph, h), min(y0 + pw, w)
    if fx1 <= fx0 or fy1 <= fy0:
        return frame
    frame[fx0:fx1, fy0:fy1] = patch[fx0 - x0:fx1 - x0, fy0 - y0:fy1 - y0]
    return frame
