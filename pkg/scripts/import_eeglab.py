"""Convert EEGLAB-style MAT recordings to the eegvc recording format.

Each input file must hold an ``EEG`` struct with ``data`` (channels x samples
[x epochs]), ``srate`` and ``chanlocs(i).labels``. TAI scores come from a CSV
with ``subject_id,tai_score`` columns; the subject id is the file stem.

    python scripts/import_eeglab.py --mat-dir raw_mat/ --tai tai.csv --out recordings/

Not part of the tested surface; check channel labels on a first file before a
full conversion.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
from scipy.io import loadmat

from eegvc.data.montage import CANONICAL
from eegvc.data.recording import save_recording
from eegvc.data.types import Recording

# 10-10 names for the older 10-20 temporal labels
ALIASES = {"T7": "T3", "T8": "T4", "P7": "T5", "P8": "T6"}


def read_eeglab(path: Path) -> tuple[np.ndarray, float, list[str]]:
    eeg = loadmat(path, squeeze_me=True, struct_as_record=False)["EEG"]
    data = np.asarray(eeg.data, dtype=float)
    if data.ndim == 3:  # epoched: concatenate epochs in time
        data = data.reshape(data.shape[0], -1, order="F")
    labels = [str(c.labels).strip() for c in np.atleast_1d(eeg.chanlocs)]
    return data, float(eeg.srate), labels


def convert(path: Path, tai: dict[str, float], out: Path) -> None:
    data, fs, labels = read_eeglab(path)
    names = [ALIASES.get(l, l) for l in labels]
    missing = [c for c in CANONICAL if c not in names]
    if missing:
        raise ValueError(f"{path.name}: missing channels {missing}")
    rows = np.stack([data[names.index(c)] for c in CANONICAL])
    sid = path.stem
    if sid not in tai:
        raise ValueError(f"{path.name}: no TAI score for subject {sid!r}")
    save_recording(Recording(sid, fs, CANONICAL, rows, tai[sid]), out / f"{sid}.csv", out / f"{sid}.json")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--mat-dir", required=True)
    p.add_argument("--tai", required=True)
    p.add_argument("--out", required=True)
    args = p.parse_args(argv)
    with open(args.tai, newline="") as fh:
        tai = {r["subject_id"]: float(r["tai_score"]) for r in csv.DictReader(fh)}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failed = 0
    for path in sorted(Path(args.mat_dir).glob("*.mat")):
        try:
            convert(path, tai, out)
        except (ValueError, KeyError) as exc:
            print(f"skipped: {exc}", file=sys.stderr)
            failed += 1
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
