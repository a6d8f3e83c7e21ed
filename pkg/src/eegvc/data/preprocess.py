"""Recording -> segment pairs: bandpass, detrend, z-score, segment (in that order)."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .. import dsp
from .montage import CANONICAL, SOURCE_INDEX
from .types import Recording, SegmentPair, subject_hash

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PreprocessConfig:
    band_hz: tuple[float, float] = (0.5, 45.0)
    filter_order: int = 4
    seg_len: int = 3000


def clean_channels(rec: Recording, config: PreprocessConfig = PreprocessConfig()) -> tuple[np.ndarray, list[str]]:
    """Filtered, detrended, z-scored ``(17, samples)`` matrix plus degenerate channel names."""
    if tuple(rec.channels) != CANONICAL:
        raise ValueError("recording channels must be in canonical montage order")
    coeffs = dsp.design_butter_bandpass(config.filter_order, *config.band_hz, rec.fs_hz)
    x = dsp.filtfilt(coeffs, rec.samples)
    x = dsp.detrend_linear(x)
    out = np.empty_like(x)
    degenerate = []
    for i, name in enumerate(rec.channels):
        out[i], bad = dsp.zscore(x[i])
        if bad:
            degenerate.append(name)
    if degenerate:
        log.warning("subject %s: degenerate channels %s", rec.subject_id, degenerate)
    return out, degenerate


def preprocess_recording(rec: Recording, config: PreprocessConfig = PreprocessConfig()) -> list[SegmentPair]:
    x, _ = clean_channels(rec, config)
    h = subject_hash(rec.subject_id)
    return [
        SegmentPair(source=block[list(SOURCE_INDEX)].copy(), target=block, subject=h, index=i)
        for i, block in enumerate(dsp.segment(x, config.seg_len))
    ]
