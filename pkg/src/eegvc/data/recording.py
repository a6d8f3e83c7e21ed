"""Recording CSV + JSON manifest I/O.

CSV: one row per channel, first field the channel name, then decimal samples.
Manifest: JSON object with ``subject_id``, ``fs_hz`` and ``tai_score``.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .montage import CANONICAL
from .types import Recording


class RecordingFormatError(ValueError):
    pass


def load_recording(csv_path, manifest_path, expected_fs: float | None = None) -> Recording:
    manifest = json.loads(Path(manifest_path).read_text())
    for key in ("subject_id", "fs_hz", "tai_score"):
        if key not in manifest:
            raise RecordingFormatError(f"{manifest_path}: manifest missing {key!r}")
    fs = float(manifest["fs_hz"])
    if expected_fs is not None and fs != expected_fs:
        raise RecordingFormatError(f"{manifest_path}: fs_hz {fs} does not match expected {expected_fs}")
    rows: dict[str, np.ndarray] = {}
    with open(csv_path, newline="") as fh:
        for r, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            name, cells = row[0].strip(), row[1:]
            vals = np.empty(len(cells))
            for c, cell in enumerate(cells, start=2):
                try:
                    vals[c - 2] = float(cell)
                except ValueError:
                    raise RecordingFormatError(f"{csv_path}: row {r}, column {c}: malformed number {cell!r}") from None
            rows[name] = vals
    missing = [c for c in CANONICAL if c not in rows]
    if missing:
        raise RecordingFormatError(f"{csv_path}: missing montage channel(s) {', '.join(missing)}")
    lengths = {len(rows[c]) for c in CANONICAL}
    if len(lengths) != 1:
        raise RecordingFormatError(f"{csv_path}: channels have unequal lengths {sorted(lengths)}")
    samples = np.stack([rows[c] for c in CANONICAL])
    return Recording(subject_id=str(manifest["subject_id"]), fs_hz=fs, channels=CANONICAL,
                     samples=samples, tai_score=float(manifest["tai_score"]))


def save_recording(rec: Recording, csv_path, manifest_path) -> None:
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for name, row in zip(rec.channels, rec.samples):
            w.writerow([name, *(repr(float(v)) for v in row)])
    Path(manifest_path).write_text(json.dumps(
        {"subject_id": rec.subject_id, "fs_hz": rec.fs_hz, "tai_score": rec.tai_score}, indent=2) + "\n")


def find_recordings(directory) -> list[tuple[Path, Path]]:
    """``(csv, manifest)`` pairs named ``<stem>.csv`` / ``<stem>.json``, sorted by stem."""
    out = []
    for csv_path in sorted(Path(directory).glob("*.csv")):
        manifest = csv_path.with_suffix(".json")
        if manifest.exists():
            out.append((csv_path, manifest))
    return out
