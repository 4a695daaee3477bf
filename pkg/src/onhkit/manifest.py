"""Dataset manifest: a CSV of image paths and class labels, optionally with
disc geometry columns as written by the synthetic generator."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

LABELS = {"normal": 0, "glaucoma": 1}

_BASE_HEADER = ["filename", "label"]
_GEOM_HEADER = _BASE_HEADER + ["cx", "cy", "disc_r", "cup_r"]


class ManifestError(ValueError):
    """Raised when a manifest cannot be parsed or its content is unusable."""


@dataclass(frozen=True)
class ManifestEntry:
    filename: str
    label: int
    cx: float | None = None
    cy: float | None = None
    disc_r: float | None = None
    cup_r: float | None = None

    def resolve(self, base_dir: str) -> str:
        return os.path.join(base_dir, self.filename)


def read_manifest(path) -> list[ManifestEntry]:
    with open(path, "r", encoding="ascii", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ManifestError(f"{path}: empty manifest")
    header = rows[0]
    if header not in (_BASE_HEADER, _GEOM_HEADER):
        raise ManifestError(
            f"{path}: line 1: unexpected header {','.join(header)!r}"
        )
    has_geom = header == _GEOM_HEADER
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ManifestError(f"{path}: line {lineno}: expected {len(header)} fields")
        name, word = row[0], row[1]
        if word not in LABELS:
            raise ManifestError(
                f"{path}: line {lineno}: unknown label {word!r} (want normal|glaucoma)"
            )
        geom = {}
        if has_geom:
            try:
                geom = dict(zip(("cx", "cy", "disc_r", "cup_r"), map(float, row[2:])))
            except ValueError:
                raise ManifestError(f"{path}: line {lineno}: malformed geometry") from None
        entries.append(ManifestEntry(filename=name, label=LABELS[word], **geom))
    return entries


def write_basic_manifest(path, names_and_labels) -> None:
    """Write a two-column manifest (filename,label)."""
    lines = ["filename,label"]
    for name, label in names_and_labels:
        lines.append(f"{name},{'glaucoma' if label else 'normal'}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def class_counts(entries) -> tuple[int, int]:
    n_pos = sum(1 for e in entries if e.label == 1)
    return len(entries) - n_pos, n_pos


def read_scores_csv(path):
    """Parse a `score,label` CSV; labels may be class words or 0/1."""
    with open(path, "r", encoding="ascii", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ManifestError(f"{path}: empty file")
    if rows[0] != ["score", "label"]:
        raise ManifestError(
            f"{path}: line 1: expected header 'score,label', got {','.join(rows[0])!r}"
        )
    scores, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ManifestError(f"{path}: line {lineno}: expected 2 fields")
        try:
            scores.append(float(row[0]))
        except ValueError:
            raise ManifestError(f"{path}: line {lineno}: malformed score {row[0]!r}") from None
        word = row[1].strip()
        if word in LABELS:
            labels.append(LABELS[word])
        elif word in ("0", "1"):
            labels.append(int(word))
        else:
            raise ManifestError(f"{path}: line {lineno}: unknown label {word!r}")
    if not scores:
        raise ManifestError(f"{path}: no score rows")
    return scores, labels
