"""Synthetic fundus-like image generator with exact ground truth.

Images carry a bright elliptical disc (the screening target) with a brighter
concentric cup, dark vessel curves, a radial vignette, and Gaussian noise.
The cup-to-disc ratio drives the class label, so batches come with a
learnable, geometry-based signal and known crop ground truth.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .raster import PixelBox, Raster, round_half_up, write_pnm

LABEL_WORDS = {0: "normal", 1: "glaucoma"}


@dataclass(frozen=True)
class SynthSpec:
    width: int = 144
    height: int = 144
    disc_radius: tuple = (12.0, 18.0)
    cdr: tuple = (0.2, 0.9)
    cdr_glaucoma_cutoff: float = 0.7
    vessel_count: tuple = (2, 4)
    noise_sigma: float = 6.0
    vignette_strength: float = 0.25
    seed: int = 0

    def validate(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("image too small")
        lo, hi = self.disc_radius
        if not 0 < lo <= hi:
            raise ValueError("invalid disc_radius range")
        if 2 * hi + 4 > min(self.width, self.height) - 1:
            raise ValueError("disc cannot fit inside the image with a 2 px margin")
        c_lo, c_hi = self.cdr
        if not 0.0 < c_lo <= c_hi < 1.0:
            raise ValueError("cdr range must lie strictly inside (0, 1)")
        if self.noise_sigma < 0 or not 0.0 <= self.vignette_strength < 1.0:
            raise ValueError("invalid noise or vignette setting")
        v_lo, v_hi = self.vessel_count
        if not 0 <= v_lo <= v_hi:
            raise ValueError("invalid vessel_count range")


@dataclass(frozen=True)
class SynthTruth:
    onh_box: PixelBox
    disc_center: tuple
    disc_radius: float
    cup_radius: float
    cdr: float
    label: int


def _uniform(rng, rng_pair):
    lo, hi = rng_pair
    return float(rng.uniform(lo, hi))


def _vessel_mask(rng, width, height, cx, cy, r):
    """2 px wide quadratic curve from one border to the opposite one,
    bent through a point near the disc center."""
    theta = rng.uniform(0.0, 2.0 * np.pi)
    reach = float(np.hypot(width, height))
    p0 = np.array([cx + reach * np.cos(theta), cy + reach * np.sin(theta)])
    p2 = np.array([cx - reach * np.cos(theta), cy - reach * np.sin(theta)])
    p1 = np.array(
        [cx + rng.uniform(-0.5, 0.5) * r, cy + rng.uniform(-0.5, 0.5) * r]
    )
    t = np.linspace(0.0, 1.0, 4 * (width + height))[:, None]
    pts = (1 - t) ** 2 * p0 + 2 * t * (1 - t) * p1 + t**2 * p2
    mask = np.zeros((height, width), dtype=bool)
    xi = np.floor(pts[:, 0]).astype(int)
    yi = np.floor(pts[:, 1]).astype(int)
    for dx in (0, 1):
        for dy in (0, 1):
            x = xi + dx
            y = yi + dy
            ok = (x >= 0) & (x < width) & (y >= 0) & (y < height)
            mask[y[ok], x[ok]] = True
    return mask


def _render_one(spec: SynthSpec, rng) -> tuple[Raster, SynthTruth]:
    w, h = spec.width, spec.height
    r = _uniform(rng, spec.disc_radius)
    aspect = float(rng.uniform(0.85, 1.0))
    rx, ry = r, r * aspect
    cx = float(rng.uniform(rx + 2.0, w - 3.0 - rx))
    cy = float(rng.uniform(ry + 2.0, h - 3.0 - ry))
    cdr = _uniform(rng, spec.cdr)
    label = 1 if cdr >= spec.cdr_glaucoma_cutoff else 0

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.empty((h, w, 3), dtype=np.float64)

    # dark reddish background with radial vignette
    base = np.array(
        [rng.uniform(120.0, 150.0), rng.uniform(55.0, 75.0), rng.uniform(35.0, 50.0)]
    )
    d2 = (xs - (w - 1) / 2.0) ** 2 + (ys - (h - 1) / 2.0) ** 2
    falloff = 1.0 - spec.vignette_strength * d2 / d2.max()
    img[:] = base[None, None, :] * falloff[:, :, None]

    # saturated-red disc; the cup is brighter through the G and B channels,
    # keeping red at the ceiling so the brightest-region cropper sees one blob
    disc_g = rng.uniform(140.0, 160.0)
    disc_b = rng.uniform(90.0, 110.0)
    in_disc = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
    img[in_disc] = np.array([255.0, disc_g, disc_b])
    in_cup = ((xs - cx) / (cdr * rx)) ** 2 + ((ys - cy) / (cdr * ry)) ** 2 <= 1.0
    img[in_cup] = np.array([255.0, min(disc_g + 60.0, 255.0), min(disc_b + 60.0, 255.0)])

    n_vessels = int(rng.integers(spec.vessel_count[0], spec.vessel_count[1] + 1))
    for _ in range(n_vessels):
        mask = _vessel_mask(rng, w, h, cx, cy, r)
        img[mask] *= 0.6

    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
    img = np.clip(img, 0.0, 255.0)
    raster = Raster(round_half_up(img).astype(np.uint8))

    x0 = int(np.floor(cx - rx))
    y0 = int(np.floor(cy - ry))
    box = PixelBox(x0, y0, int(np.ceil(cx + rx)) - x0 + 1, int(np.ceil(cy + ry)) - y0 + 1)
    truth = SynthTruth(
        onh_box=box,
        disc_center=(cx, cy),
        disc_radius=r,
        cup_radius=cdr * r,
        cdr=cdr,
        label=label,
    )
    return raster, truth


def generate(spec: SynthSpec, n: int) -> list[tuple[Raster, SynthTruth]]:
    """Render n images; image i depends only on (spec.seed, i)."""
    spec.validate()
    if n < 0:
        raise ValueError("n must be non-negative")
    batch = []
    for i in range(n):
        rng = np.random.default_rng([spec.seed, i])
        batch.append(_render_one(spec, rng))
    return batch


def write_manifest(batch, directory) -> str:
    """Write PPM files plus a manifest CSV; returns the manifest path.

    Columns: filename,label,cx,cy,disc_r,cup_r with geometry at 6 decimals.
    """
    os.makedirs(directory, exist_ok=True)
    lines = ["filename,label,cx,cy,disc_r,cup_r"]
    for i, (raster, truth) in enumerate(batch):
        name = f"img_{i:04d}.ppm"
        write_pnm(os.path.join(directory, name), raster)
        lines.append(
            "{},{},{:.6f},{:.6f},{:.6f},{:.6f}".format(
                name,
                LABEL_WORDS[truth.label],
                truth.disc_center[0],
                truth.disc_center[1],
                truth.disc_radius,
                truth.cup_radius,
            )
        )
    path = os.path.join(directory, "manifest.csv")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
