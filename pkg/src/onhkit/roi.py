"""Optic-nerve-head auto-cropper.

Pipeline: red channel -> contrast stretch -> SLIC superpixels -> per-region
mean image -> threshold -> largest bright region centroid -> square crop
translated to fit. The disc is assumed to be the largest brightest region
of the frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import PixelBox, Raster, contrast_stretch, crop, extract_red, round_half_up


@dataclass(frozen=True)
class RoiConfig:
    num_superpixels: int = 50
    threshold: float = 254.0
    crop_side: int = 80
    slic_compactness: float = 10.0
    slic_iterations: int = 10

    def validate(self):
        if self.num_superpixels < 1:
            raise ValueError("num_superpixels must be at least 1")
        if not 0.0 <= self.threshold <= 255.0:
            raise ValueError("threshold must lie in [0, 255]")
        if self.crop_side < 1:
            raise ValueError("crop_side must be at least 1")
        if self.slic_iterations < 1:
            raise ValueError("slic_iterations must be at least 1")


@dataclass(frozen=True)
class SuperpixelMap:
    """Per-pixel region ids (0..K-1) plus per-region mean intensity and size."""

    labels: np.ndarray
    region_count: int
    region_means: np.ndarray
    region_sizes: np.ndarray


@dataclass(frozen=True)
class CropResult:
    center: tuple
    box: PixelBox
    raster: Raster
    fallback_used: bool


def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


def _row_runs(row_vals, row_mask):
    """Maximal runs of constant value inside the mask: (starts, ends, values)."""
    n = row_vals.shape[0]
    change = np.empty(n, dtype=bool)
    change[0] = True
    change[1:] = (row_vals[1:] != row_vals[:-1]) | (row_mask[1:] != row_mask[:-1])
    starts = np.flatnonzero(change)
    ends = np.append(starts[1:] - 1, n - 1)
    keep = row_mask[starts]
    return starts[keep], ends[keep], row_vals[starts[keep]]


def label_components(values, connectivity=4, mask=None):
    """Connected components of equal values (restricted to mask).

    Component ids are assigned by raster order of each component's first
    pixel. Pixels outside the mask get label -1. Returns (labels, count).
    """
    values = np.asarray(values)
    h, w = values.shape
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    reach = 1 if connectivity == 8 else 0
    parent = []
    all_runs = []
    prev = []
    for y in range(h):
        starts, ends, vals = _row_runs(values[y], mask[y])
        cur = []
        for s, e, v in zip(starts.tolist(), ends.tolist(), vals.tolist()):
            rid = len(parent)
            parent.append(rid)
            cur.append((s, e, v, rid))
            all_runs.append((y, s, e, rid))
            for ps, pe, pv, prid in prev:
                if pv == v and s <= pe + reach and e >= ps - reach:
                    ra, rb = _find(parent, rid), _find(parent, prid)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)
        prev = cur
    order = {}
    final = []
    for rid in range(len(parent)):
        root = _find(parent, rid)
        if root not in order:
            order[root] = len(order)
        final.append(order[root])
    labels = np.full((h, w), -1, dtype=np.int64)
    for y, s, e, rid in all_runs:
        labels[y, s : e + 1] = final[rid]
    return labels, len(order)


def _component_adjacency(comp, ncomp):
    adj = [set() for _ in range(ncomp)]
    for a, b in ((comp[:, :-1], comp[:, 1:]), (comp[:-1, :], comp[1:, :])):
        diff = a != b
        pairs = np.unique(np.stack([a[diff], b[diff]], axis=1), axis=0)
        for u, v in pairs.tolist():
            adj[u].add(v)
            adj[v].add(u)
    return adj


def _enforce_connectivity(cluster_labels):
    """Relabel each stray 4-connected fragment into its largest adjacent
    region; the surviving regions are renumbered in raster order."""
    comp, ncomp = label_components(cluster_labels, connectivity=4)
    flat_comp = comp.ravel()
    sizes = np.bincount(flat_comp, minlength=ncomp).astype(int)
    uniq, first = np.unique(flat_comp, return_index=True)
    comp_cluster = np.empty(ncomp, dtype=np.int64)
    comp_cluster[uniq] = cluster_labels.ravel()[first]

    best = {}
    for c in range(ncomp):
        k = int(comp_cluster[c])
        if k not in best or sizes[c] > sizes[best[k]]:
            best[k] = c
    main = set(best.values())

    adj = _component_adjacency(comp, ncomp)
    parent = list(range(ncomp))
    size = sizes.tolist()
    pending = [c for c in range(ncomp) if c not in main]
    while pending:
        deferred = []
        progressed = False
        for s in pending:
            roots = {_find(parent, n) for n in adj[s]}
            roots.discard(s)
            if not roots:
                deferred.append(s)
                continue
            target = max(roots, key=lambda r: (size[r], -r))
            parent[s] = target
            size[target] += size[s]
            adj[target] |= adj[s]
            progressed = True
        if deferred and not progressed:
            raise RuntimeError("connectivity enforcement stalled")
        pending = deferred

    roots = sorted({_find(parent, c) for c in range(ncomp)})
    region_of_root = {r: i for i, r in enumerate(roots)}
    comp_to_region = np.array([region_of_root[_find(parent, c)] for c in range(ncomp)])
    return comp_to_region[comp], len(roots)


def slic_segment(gray: Raster, k: int, compactness: float = 10.0, iterations: int = 10) -> SuperpixelMap:
    """Localized k-means over (intensity, x, y).

    Cluster centers start on a grid with spacing S = sqrt(W*H/k), each moved
    to the strictly lowest-gradient pixel of its 3x3 neighborhood. Pixels are
    assigned within a 2S x 2S window per center under the distance
    d_intensity + (compactness/S) * d_xy, then centers are re-estimated.
    After the final round stray fragments are folded into their largest
    adjacent region, so the returned region count can differ slightly from k.
    """
    img = gray.plane().astype(np.float64)
    h, w = img.shape
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > w * h:
        raise ValueError(f"k={k} exceeds pixel count {w * h}")
    spacing = float(np.sqrt(w * h / k))
    nx = max(1, int(np.floor(w / spacing + 0.5)))
    ny = max(1, int(np.floor(h / spacing + 0.5)))

    padded = np.pad(img, 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    grad = gx * gx + gy * gy

    centers = []
    for gy_i in range(ny):
        cy = (gy_i + 0.5) * (h / ny) - 0.5
        for gx_i in range(nx):
            cx = (gx_i + 0.5) * (w / nx) - 0.5
            py = min(max(int(np.floor(cy + 0.5)), 0), h - 1)
            px = min(max(int(np.floor(cx + 0.5)), 0), w - 1)
            by, bx, bg = py, px, grad[py, px]
            moved = False
            for yy in range(max(0, py - 1), min(h, py + 2)):
                for xx in range(max(0, px - 1), min(w, px + 2)):
                    if grad[yy, xx] < bg:
                        by, bx, bg = yy, xx, grad[yy, xx]
                        moved = True
            if moved:
                centers.append([float(by), float(bx), img[by, bx]])
            else:
                centers.append([cy, cx, img[py, px]])

    n_centers = len(centers)
    ys_flat = np.repeat(np.arange(h, dtype=np.float64), w)
    xs_flat = np.tile(np.arange(w, dtype=np.float64), h)
    ratio = compactness / spacing
    label = np.zeros((h, w), dtype=np.int64)
    for _ in range(iterations):
        dist = np.full((h, w), np.inf)
        label.fill(-1)
        for idx, (cy, cx, cint) in enumerate(centers):
            y0 = max(0, int(np.floor(cy - spacing)))
            y1 = min(h, int(np.ceil(cy + spacing)) + 1)
            x0 = max(0, int(np.floor(cx - spacing)))
            x1 = min(w, int(np.ceil(cx + spacing)) + 1)
            if y0 >= y1 or x0 >= x1:
                continue
            yy, xx = np.ogrid[y0:y1, x0:x1]
            d = np.abs(img[y0:y1, x0:x1] - cint) + ratio * np.sqrt(
                (yy - cy) ** 2 + (xx - cx) ** 2
            )
            win = dist[y0:y1, x0:x1]
            upd = d < win
            win[upd] = d[upd]
            label[y0:y1, x0:x1][upd] = idx

        missing = label.ravel() < 0
        if missing.any():
            my, mx = ys_flat[missing], xs_flat[missing]
            mv = img.ravel()[missing]
            best_d = np.full(my.shape, np.inf)
            best_c = np.zeros(my.shape, dtype=np.int64)
            for idx, (cy, cx, cint) in enumerate(centers):
                d = np.abs(mv - cint) + ratio * np.hypot(my - cy, mx - cx)
                upd = d < best_d
                best_d[upd] = d[upd]
                best_c[upd] = idx
            label.ravel()[missing] = best_c

        flat = label.ravel()
        counts = np.bincount(flat, minlength=n_centers)
        sum_y = np.bincount(flat, weights=ys_flat, minlength=n_centers)
        sum_x = np.bincount(flat, weights=xs_flat, minlength=n_centers)
        sum_i = np.bincount(flat, weights=img.ravel(), minlength=n_centers)
        for c in range(n_centers):
            if counts[c] > 0:
                centers[c] = [sum_y[c] / counts[c], sum_x[c] / counts[c], sum_i[c] / counts[c]]

    final, count = _enforce_connectivity(label)
    flat = final.ravel()
    sizes = np.bincount(flat, minlength=count)
    means = np.bincount(flat, weights=img.ravel(), minlength=count) / sizes
    return SuperpixelMap(
        labels=final, region_count=count, region_means=means, region_sizes=sizes.astype(int)
    )


def superpixel_mean_image(gray: Raster, sp: SuperpixelMap) -> Raster:
    """Replace every pixel with its region's rounded mean intensity."""
    if sp.labels.shape != (gray.height, gray.width):
        raise ValueError("superpixel map does not match image dimensions")
    coarse = round_half_up(sp.region_means)[sp.labels]
    return Raster.from_array(coarse.astype(np.uint8))


def threshold_regions(coarse: Raster, sp: SuperpixelMap, t: float) -> Raster:
    """Regions with mean >= t become 255, the rest 0 (inclusive comparison,
    so a just-saturated region passes the default threshold of 254)."""
    if not 0.0 <= t <= 255.0:
        raise ValueError("threshold must lie in [0, 255]")
    if sp.labels.shape != (coarse.height, coarse.width):
        raise ValueError("superpixel map does not match image dimensions")
    passed = sp.region_means >= t
    binary = np.where(passed[sp.labels], 255, 0).astype(np.uint8)
    return Raster.from_array(binary)


def largest_region_centroid(binary: Raster) -> tuple[tuple[int, int], int]:
    """Centroid and area of the largest 8-connected 255-region.

    Ties on area go to the region whose first raster-scan pixel comes first.
    Raises on an all-zero image so the caller can fall back.
    """
    plane = binary.plane()
    if not np.isin(plane, (0, 255)).all():
        raise ValueError("binary raster must contain only 0 and 255")
    fg = plane == 255
    if not fg.any():
        raise ValueError("no foreground region")
    comp, ncomp = label_components(plane, connectivity=8, mask=fg)
    areas = np.bincount(comp[fg], minlength=ncomp)
    best = int(np.argmax(areas))
    ys, xs = np.nonzero(comp == best)
    cx = int(round_half_up(xs.mean()))
    cy = int(round_half_up(ys.mean()))
    return (cx, cy), int(areas[best])


def extract_onh(rgb: Raster, cfg: RoiConfig) -> CropResult:
    """Locate the optic nerve head and crop a square of cfg.crop_side.

    When no region passes the threshold the single region with the highest
    mean is used instead and fallback_used is set. The crop box is translated
    (never shrunk) to stay inside the frame.
    """
    cfg.validate()
    if rgb.channels != 3:
        raise ValueError("extract_onh requires an RGB raster")
    if cfg.crop_side > min(rgb.width, rgb.height):
        raise ValueError(
            f"crop_side {cfg.crop_side} exceeds image dimension "
            f"{rgb.width}x{rgb.height}"
        )
    if cfg.num_superpixels > rgb.width * rgb.height:
        raise ValueError("num_superpixels exceeds pixel count")

    stretched = contrast_stretch(extract_red(rgb))
    sp = slic_segment(
        stretched, cfg.num_superpixels, cfg.slic_compactness, cfg.slic_iterations
    )
    coarse = superpixel_mean_image(stretched, sp)
    binary = threshold_regions(coarse, sp, cfg.threshold)
    fallback = not bool((binary.plane() == 255).any())
    if fallback:
        brightest = int(np.argmax(sp.region_means))
        mask = np.where(sp.labels == brightest, 255, 0).astype(np.uint8)
        (cx, cy), _ = largest_region_centroid(Raster.from_array(mask))
    else:
        (cx, cy), _ = largest_region_centroid(binary)

    side = cfg.crop_side
    x0 = min(max(cx - side // 2, 0), rgb.width - side)
    y0 = min(max(cy - side // 2, 0), rgb.height - side)
    box = PixelBox.square(x0, y0, side)
    return CropResult(center=(cx, cy), box=box, raster=crop(rgb, box), fallback_used=fallback)
