"""Dataset assembly and the cross-validated train/score loop that the CLI
drives: manifest-backed image datasets with augmented epoch views, batch
cropping, and per-fold training with pooled ROC output."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .augment import apply_affine, random_patch, sample_augment
from .climbers import ClimberConfig, train
from .evaluation import classify_at, confusion, metrics, roc_auc, venetian_kfold
from .manifest import ManifestError, read_manifest
from .network import forward, freeze_first, init_network
from .raster import read_pnm, resize_bilinear
from .roi import RoiConfig, extract_onh


def worker_count() -> int:
    """Worker cap from ONHKIT_THREADS (0 or unset means auto)."""
    raw = os.environ.get("ONHKIT_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"ONHKIT_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError("ONHKIT_THREADS must be non-negative")
    return n if n > 0 else (os.cpu_count() or 1)


class _AugmentedView:
    """Per-climber epoch view: one affine draw per image (lazily, in first-use
    order), then a fresh random patch every batch."""

    def __init__(self, dataset, rng):
        self._dataset = dataset
        self._rng = rng
        self._warped = {}

    def train_features(self, indices, rng):
        ds = self._dataset
        side = ds.input_side
        out = np.empty((len(indices), side, side, ds.channels))
        for row, i in enumerate(np.asarray(indices)):
            i = int(i)
            warped = self._warped.get(i)
            if warped is None:
                params = sample_augment(ds.augment, self._rng)
                warped = apply_affine(ds.rasters[i], params)
                self._warped[i] = warped
            patch = random_patch(warped, side, rng, margin_frac=ds.augment.patch_margin_frac)
            out[row] = patch.pixels / 255.0
        return out


class ImageDataset:
    """Rasters plus labels; eval features are a deterministic bilinear resize
    to the network input size, scaled to [0, 1]."""

    def __init__(self, rasters, labels, input_side, augment=None):
        self.rasters = list(rasters)
        self.labels = np.asarray(labels, dtype=int)
        if len(self.rasters) != self.labels.shape[0]:
            raise ValueError("rasters and labels must have equal length")
        self.input_side = input_side
        self.channels = self.rasters[0].channels if self.rasters else 3
        self.augment = augment
        self._eval = np.stack(
            [resize_bilinear(r, input_side, input_side).pixels / 255.0 for r in self.rasters]
        ) if self.rasters else np.zeros((0, input_side, input_side, 3))

    def __len__(self):
        return self.labels.shape[0]

    def with_augment(self, augment):
        clone = ImageDataset.__new__(ImageDataset)
        clone.rasters = self.rasters
        clone.labels = self.labels
        clone.input_side = self.input_side
        clone.channels = self.channels
        clone.augment = augment
        clone._eval = self._eval
        return clone

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        clone = ImageDataset.__new__(ImageDataset)
        clone.rasters = [self.rasters[int(i)] for i in indices]
        clone.labels = self.labels[indices]
        clone.input_side = self.input_side
        clone.channels = self.channels
        clone.augment = self.augment
        clone._eval = self._eval[indices]
        return clone

    def epoch_view(self, rng):
        if self.augment is None:
            return self
        return _AugmentedView(self, rng)

    def train_features(self, indices, rng):
        return self._eval[np.asarray(indices, dtype=int)]

    def eval_features(self, indices):
        return self._eval[np.asarray(indices, dtype=int)]


def load_image_dataset(manifest_path, input_side, augment=None) -> ImageDataset:
    entries = read_manifest(manifest_path)
    if not entries:
        raise ManifestError(f"{manifest_path}: no entries")
    base = os.path.dirname(os.path.abspath(manifest_path))
    rasters = [read_pnm(e.resolve(base)) for e in entries]
    labels = [e.label for e in entries]
    return ImageDataset(rasters, labels, input_side, augment=augment)


@dataclass
class CropRecord:
    filename: str
    label: int
    center: tuple | None
    fallback_used: bool
    raster: object
    error: str | None


def crop_batch(entries, base_dir, cfg: RoiConfig) -> list[CropRecord]:
    """Crop every manifest entry; per-file failures are recorded, not raised."""

    def one(entry):
        try:
            raster = read_pnm(entry.resolve(base_dir))
            result = extract_onh(raster, cfg)
            return CropRecord(
                filename=entry.filename,
                label=entry.label,
                center=result.center,
                fallback_used=result.fallback_used,
                raster=result.raster,
                error=None,
            )
        except (OSError, ValueError) as exc:
            return CropRecord(
                filename=entry.filename,
                label=entry.label,
                center=None,
                fallback_used=False,
                raster=None,
                error=str(exc),
            )

    workers = min(worker_count(), max(len(entries), 1))
    if workers <= 1:
        return [one(e) for e in entries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, entries))


def crop_report_csv(records) -> str:
    lines = ["file,cx,cy,fallback_used"]
    for r in records:
        if r.error is None:
            lines.append(f"{r.filename},{r.center[0]},{r.center[1]},{int(r.fallback_used)}")
    return "\n".join(lines) + "\n"


@dataclass
class FoldResults:
    fold_rows: list
    fold_curves: list
    pooled_scores: np.ndarray
    truth: np.ndarray
    pooled_curve: object
    pooled_cm: object
    threshold: float
    histories: list


def score_dataset(net, dataset, indices) -> np.ndarray:
    """Probability of the positive class for the selected samples."""
    return forward(net, dataset.eval_features(indices))[:, 1]


def evaluate_kfold(
    dataset: ImageDataset,
    cfg: ClimberConfig,
    arch,
    freeze_layers: int,
    k: int,
    fold_seed: int,
    threshold: float,
    checkpoint_net=None,
) -> FoldResults:
    """Venetian k-fold: train per fold (or score a fixed checkpoint), then
    pool each fold's held-out scores into one curve and confusion matrix."""
    labels = dataset.labels
    plan = venetian_kfold(labels, k, fold_seed)
    pooled = np.zeros(labels.shape[0])
    fold_rows = []
    fold_curves = []
    histories = []
    for f in range(k):
        test_idx = plan.test_indices(f)
        if checkpoint_net is not None:
            net = checkpoint_net
        else:
            net = init_network(arch, seed=fold_seed * 1000 + f)
            if freeze_layers:
                freeze_first(net, freeze_layers)
            fold_cfg = replace(cfg, seed=cfg.seed + f)
            sub = dataset.subset(plan.train_indices(f))
            _, history = train(net, sub, fold_cfg)
            histories.append(history)
        scores = score_dataset(net, dataset, test_idx)
        pooled[test_idx] = scores
        truth_f = labels[test_idx]
        cm = confusion(classify_at(scores, threshold), truth_f)
        acc, sens, spec = metrics(cm)
        curve = roc_auc(scores, truth_f)
        fold_curves.append(curve)
        fold_rows.append(
            {
                "fold": f,
                "accuracy": acc,
                "sensitivity": sens,
                "specificity": spec,
                "auc": curve.auc,
            }
        )
    pooled_curve = roc_auc(pooled, labels)
    pooled_cm = confusion(classify_at(pooled, threshold), labels)
    return FoldResults(
        fold_rows=fold_rows,
        fold_curves=fold_curves,
        pooled_scores=pooled,
        truth=labels,
        pooled_curve=pooled_curve,
        pooled_cm=pooled_cm,
        threshold=threshold,
        histories=histories,
    )
