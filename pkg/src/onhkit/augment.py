"""Training-time augmentation: sampled affine jitter plus random patches.

One affine (flip -> rotate -> shear -> zoom -> shift, composed about the
image center) is sampled per image per epoch; a fresh random patch of the
network input size is taken every iteration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .raster import PixelBox, Raster, crop, resize_bilinear, round_half_up

_DEFAULT_BOUNDS = {
    "rotation_deg": (-10.0, 10.0),
    "shear": (-0.2, 0.2),
    "zoom_frac": (0.0, 0.10),
    "shift_frac": (0.0, 0.10),
}


@dataclass(frozen=True)
class AugmentSpec:
    rotation_deg: tuple = (-10.0, 10.0)
    shear: tuple = (-0.2, 0.2)
    zoom_frac: tuple = (0.0, 0.10)
    hflip_prob: float = 0.5
    shift_frac: tuple = (0.0, 0.10)
    patch_margin_frac: float = 0.10

    def validate(self):
        for name in ("rotation_deg", "shear", "zoom_frac", "shift_frac"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: empty range ({lo}, {hi})")
            d_lo, d_hi = _DEFAULT_BOUNDS[name]
            if lo < d_lo or hi > d_hi:
                warnings.warn(
                    f"{name} range ({lo}, {hi}) is wider than the default "
                    f"({d_lo}, {d_hi})",
                    stacklevel=2,
                )
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ValueError("hflip_prob must lie in [0, 1]")
        if self.patch_margin_frac < 0.0:
            raise ValueError("patch_margin_frac must be non-negative")


@dataclass(frozen=True)
class AffineParams:
    """One sampled draw; dx/dy are fractions of width/height."""

    flip: bool
    angle: float
    shear: float
    zoom: float
    dx: float
    dy: float


def sample_augment(spec: AugmentSpec, rng) -> AffineParams:
    """Draw each parameter uniformly from its range (flip is Bernoulli)."""
    spec.validate()
    return AffineParams(
        angle=float(rng.uniform(*spec.rotation_deg)),
        shear=float(rng.uniform(*spec.shear)),
        zoom=float(rng.uniform(*spec.zoom_frac)),
        dx=float(rng.uniform(*spec.shift_frac)),
        dy=float(rng.uniform(*spec.shift_frac)),
        flip=bool(rng.random() < spec.hflip_prob),
    )


def _sample_bilinear(px, sx, sy):
    h, w = px.shape[:2]
    sx = np.clip(sx, 0.0, w - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)
    # snap almost-integer coordinates so pure flips and shifts stay exact
    sx = np.where(np.abs(sx - np.round(sx)) < 1e-7, np.round(sx), sx)
    sy = np.where(np.abs(sy - np.round(sy)) < 1e-7, np.round(sy), sy)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    fx = (sx - x0)[:, :, None]
    fy = (sy - y0)[:, :, None]
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = px[y0, x0] * (1.0 - fx) + px[y0, x1] * fx
    bot = px[y1, x0] * (1.0 - fx) + px[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def apply_affine(r: Raster, p: AffineParams) -> Raster:
    """Warp with the composed affine; bilinear sampling, edge-clamped reads,
    output dimensions equal to the input."""
    theta = np.deg2rad(p.angle)
    flip = np.array([[-1.0, 0.0], [0.0, 1.0]]) if p.flip else np.eye(2)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    shear = np.array([[1.0, p.shear], [0.0, 1.0]])
    zoom = (1.0 + p.zoom) * np.eye(2)
    fwd = zoom @ shear @ rot @ flip
    inv = np.linalg.inv(fwd)
    tx, ty = p.dx * r.width, p.dy * r.height

    cx, cy = (r.width - 1) / 2.0, (r.height - 1) / 2.0
    xs = np.arange(r.width, dtype=np.float64) - cx
    ys = np.arange(r.height, dtype=np.float64) - cy
    gx, gy = np.meshgrid(xs, ys)
    ux = gx - tx
    uy = gy - ty
    sx = inv[0, 0] * ux + inv[0, 1] * uy + cx
    sy = inv[1, 0] * ux + inv[1, 1] * uy + cy
    out = _sample_bilinear(r.pixels.astype(np.float64), sx, sy)
    return Raster(round_half_up(out).astype(np.uint8))


def random_patch(r: Raster, side: int, rng, margin_frac: float = 0.10) -> Raster:
    """Resize so the short dimension is side*(1+margin_frac), then crop a
    random side x side window; with margin 0 and a square input this is just
    the deterministic full-frame resize."""
    if side < 1:
        raise ValueError("side must be at least 1")
    if margin_frac < 0.0:
        raise ValueError("margin_frac must be non-negative")
    target = int(round_half_up(side * (1.0 + margin_frac)))
    if r.width <= r.height:
        new_w = target
        new_h = int(round_half_up(r.height * target / r.width))
    else:
        new_h = target
        new_w = int(round_half_up(r.width * target / r.height))
    resized = resize_bilinear(r, new_w, new_h)
    x0 = int(rng.integers(0, new_w - side + 1))
    y0 = int(rng.integers(0, new_h - side + 1))
    return crop(resized, PixelBox(x0, y0, side, side))
