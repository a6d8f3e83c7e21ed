"""Seeded synthetic multi-channel EEG for desk-scale verification."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .montage import CANONICAL
from .types import Recording

BANDS = {"delta": (0.5, 4.0), "theta": (4.0, 8.0), "alpha": (8.0, 14.0), "beta": (14.0, 30.0)}

# Schematic (x, y) grid of the 10-20 subset; only used to make mixing fall off
# with inter-electrode distance.
GRID = {
    "Fp1": (-1, 2), "Fp2": (1, 2),
    "F7": (-2, 1), "F3": (-1, 1), "Fz": (0, 1), "F4": (1, 1), "F8": (2, 1),
    "T3": (-2, 0), "C3": (-1, 0), "Cz": (0, 0), "C4": (1, 0), "T4": (2, 0),
    "T5": (-2, -1), "P3": (-1, -1), "Pz": (0, -1), "P4": (1, -1), "T6": (2, -1),
}


@dataclass
class SyntheticSpec:
    """Parameters for :func:`synth_eeg`.

    ``amplitudes`` maps band name to either one amplitude for every channel or
    a per-channel sequence. ``mixing`` in [0, 1] blends each channel with its
    spatial neighbours (weight ``exp(-d^2 / (2 * mixing_width^2))``).
    """

    amplitudes: dict = field(default_factory=lambda: {"delta": 1.0, "theta": 0.8, "alpha": 1.0, "beta": 0.4})
    pink_noise: float = 0.3
    mixing: float = 0.5
    mixing_width: float = 1.0
    duration_s: float = 60.0
    fs_hz: float = 500.0
    seed: int = 0
    components_per_band: int = 6
    subject_id: str = "synth-000"
    tai_score: float = 30.0
    channels: tuple[str, ...] = CANONICAL

    def __post_init__(self):
        if not 0.0 <= self.mixing <= 1.0:
            raise ValueError(f"mixing must lie in [0, 1], got {self.mixing}")
        for band, amp in self.amplitudes.items():
            if band not in BANDS:
                raise ValueError(f"unknown band {band!r}")
            if np.any(np.asarray(amp) < 0):
                raise ValueError(f"amplitudes must be >= 0 (band {band})")
        if self.pink_noise < 0:
            raise ValueError("pink_noise must be >= 0")


def pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance 1/f noise (zero DC)."""
    spec = rng.normal(size=n // 2 + 1) + 1j * rng.normal(size=n // 2 + 1)
    f = np.arange(n // 2 + 1, dtype=float)
    f[0] = np.inf
    x = np.fft.irfft(spec / np.sqrt(f), n)
    sd = x.std()
    return x / sd if sd > 0 else x


def mixing_matrix(channels, mixing: float, width: float) -> np.ndarray:
    pos = np.array([GRID[c] for c in channels], dtype=float)
    d2 = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1)
    k = np.exp(-d2 / (2.0 * width**2))
    k /= k.sum(axis=1, keepdims=True)
    return (1.0 - mixing) * np.eye(len(channels)) + mixing * k


def synth_eeg(spec: SyntheticSpec) -> Recording:
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration_s * spec.fs_hz))
    n_ch = len(spec.channels)
    t = np.arange(n) / spec.fs_hz
    latent = np.zeros((n_ch, n))
    for band, (lo, hi) in BANDS.items():
        amp = np.broadcast_to(np.asarray(spec.amplitudes.get(band, 0.0), dtype=float), (n_ch,))
        # keep components off the band edges so each band stays inside its filter passband
        margin = 0.15 * (hi - lo)
        for c in range(n_ch):
            freqs = rng.uniform(lo + margin, hi - margin, size=spec.components_per_band)
            phases = rng.uniform(0, 2 * np.pi, size=spec.components_per_band)
            weights = rng.uniform(0.5, 1.0, size=spec.components_per_band)
            weights *= np.sqrt(2.0 / np.sum(weights**2))  # unit RMS per band
            wave = np.sin(2 * np.pi * freqs[:, None] * t[None, :] + phases[:, None])
            latent[c] += amp[c] * (weights @ wave)
    if spec.pink_noise > 0:
        for c in range(n_ch):
            latent[c] += spec.pink_noise * pink_noise(n, rng)
    samples = mixing_matrix(spec.channels, spec.mixing, spec.mixing_width) @ latent
    return Recording(subject_id=spec.subject_id, fs_hz=spec.fs_hz, channels=tuple(spec.channels),
                     samples=samples, tai_score=spec.tai_score)


def synth_cohort(n_subjects: int, alpha_effect: float = 0.0, alpha_sd: float = 0.0, seed: int = 0,
                 **spec_kw) -> Iterator[Recording]:
    """Two-class cohort: subject ``i`` has label ``i % 2`` (TAI 45 vs 30).

    Alpha amplitude on channel ``c`` is ``1 + alpha_sd * (z_c + alpha_effect * label)``
    with ``z_c`` drawn per subject and channel, so ``alpha_effect`` is the class
    shift in units of the between-subject sd on any single channel.
    Remaining keyword arguments go to :class:`SyntheticSpec`.
    """
    rng = np.random.default_rng([seed, 7])
    n_ch = len(spec_kw.get("channels", CANONICAL))
    for i in range(n_subjects):
        label = i % 2
        alpha = np.maximum(0.0, 1.0 + alpha_sd * (rng.normal(size=n_ch) + alpha_effect * label))
        spec = SyntheticSpec(
            amplitudes={"delta": 1.0, "theta": 0.8, "alpha": alpha, "beta": 0.4},
            seed=int(rng.integers(2**31)), subject_id=f"synth-{i:03d}",
            tai_score=45.0 if label else 30.0, **spec_kw,
        )
        yield synth_eeg(spec)
