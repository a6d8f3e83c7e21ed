"""Filtering, detrending, normalisation, segmentation and real-signal spectra."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as _sig

ZSCORE_EPS = 1e-12


class SignalTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class FilterCoeffs:
    """Bandpass IIR filter.

    ``b``/``a`` are the transfer-function polynomials (``a[0] == 1``); ``sos``
    holds the same filter as second-order sections, which is what gets applied.
    ``order`` is the analog lowpass prototype order, so ``len(a) == 2*order + 1``.
    """

    b: np.ndarray
    a: np.ndarray
    sos: np.ndarray
    order: int
    band: tuple[float, float]
    fs_hz: float

    @property
    def padlen(self) -> int:
        """Minimum edge padding; signals must be longer than this."""
        return 3 * max(len(self.a), len(self.b))

    def edge_pad(self, n: int) -> int:
        """Padding used on an ``n``-sample signal: at least one period of the low
        band edge, so slow bands do not ring at the ends, capped at ``n - 1``."""
        return min(n - 1, max(self.padlen, int(np.ceil(self.fs_hz / self.band[0]))))

    def response(self, freqs_hz) -> np.ndarray:
        """Complex frequency response at the given frequencies."""
        _, h = _sig.sosfreqz(self.sos, worN=np.atleast_1d(np.asarray(freqs_hz, dtype=float)), fs=self.fs_hz)
        return h

    def poles(self) -> np.ndarray:
        return _sig.sos2zpk(self.sos)[1]


@dataclass(frozen=True)
class Spectrum:
    """One-sided DFT magnitude, bins ``0..N//2``."""

    freqs_hz: np.ndarray
    magnitude: np.ndarray
    n: int
    fs_hz: float


def design_butter_bandpass(order: int, lo_hz: float, hi_hz: float, fs_hz: float) -> FilterCoeffs:
    """Digital Butterworth bandpass (analog prototype, pre-warped bilinear map)."""
    if order < 2 or order % 2:
        raise ValueError(f"filter order must be even and >= 2, got {order}")
    if not 0 < lo_hz < hi_hz < fs_hz / 2:
        raise ValueError(f"band edges must satisfy 0 < lo < hi < fs/2, got ({lo_hz}, {hi_hz}) at fs={fs_hz}")
    sos = _sig.butter(order, [lo_hz, hi_hz], btype="bandpass", fs=fs_hz, output="sos")
    b, a = _sig.sos2tf(sos)
    b, a = b / a[0], a / a[0]
    return FilterCoeffs(b=b, a=a, sos=sos, order=order, band=(lo_hz, hi_hz), fs_hz=fs_hz)


def filtfilt(coeffs: FilterCoeffs, x) -> np.ndarray:
    """Zero-phase forward/backward filtering with odd-reflection edge padding."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] <= coeffs.padlen:
        raise SignalTooShortError(
            f"signal of length {x.shape[-1]} too short for filtfilt (needs > {coeffs.padlen})")
    pad = coeffs.edge_pad(x.shape[-1])
    return _sig.sosfiltfilt(coeffs.sos, x, axis=-1, padtype="odd", padlen=pad)


def detrend_linear(x) -> np.ndarray:
    """Subtract the least-squares line along the last axis."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n < 2:
        raise ValueError("detrend needs at least 2 samples")
    t = np.arange(n, dtype=float)
    t -= t.mean()
    xc = x - x.mean(axis=-1, keepdims=True)
    slope = (xc @ t) / (t @ t)
    return xc - np.multiply.outer(slope, t) if x.ndim > 1 else xc - slope * t


def zscore(x) -> tuple[np.ndarray, bool]:
    """Population z-score of a 1-D signal. Returns ``(z, degenerate)``.

    A signal with std below 1e-12 maps to zeros and is flagged degenerate.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("zscore needs at least 2 samples")
    sd = x.std()
    if sd < ZSCORE_EPS:
        return np.zeros_like(x), True
    return (x - x.mean()) / sd, False


def segment(x, seg_len: int = 3000) -> list[np.ndarray]:
    """Consecutive non-overlapping windows along the last axis; tail dropped."""
    if seg_len < 1:
        raise ValueError(f"seg_len must be >= 1, got {seg_len}")
    x = np.asarray(x)
    n = x.shape[-1] // seg_len
    return [x[..., i * seg_len : (i + 1) * seg_len].copy() for i in range(n)]


def rdft_magnitude(x, fs_hz: float = 1.0) -> Spectrum:
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n < 1:
        raise ValueError("empty signal")
    mag = np.abs(np.fft.rfft(x))
    return Spectrum(freqs_hz=np.arange(n // 2 + 1) * fs_hz / n, magnitude=mag, n=n, fs_hz=fs_hz)


def _one_sided_weights(n: int) -> np.ndarray:
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w


def band_power(spec: Spectrum, lo_hz: float, hi_hz: float) -> float:
    """Sum of one-sided magnitude^2 over ``lo <= f < hi``.

    The Nyquist bin is included once ``hi`` reaches fs/2 so the full band
    satisfies Parseval.
    """
    nyq = spec.fs_hz / 2
    if not 0 <= lo_hz < hi_hz:
        raise ValueError(f"invalid band ({lo_hz}, {hi_hz})")
    f = spec.freqs_hz
    sel = (f >= lo_hz) & (f < hi_hz)
    if hi_hz >= nyq:
        sel |= (f >= lo_hz) & np.isclose(f, nyq)
    if not sel.any():
        return 0.0
    w = _one_sided_weights(spec.n)
    return float(np.sum(w[sel] * spec.magnitude[sel] ** 2))
