"""Per-channel feature bank (4 subbands x 8 features + 2 spectral) and ANOVA selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import dsp

BAND_ORDER = ("alpha", "beta", "theta", "delta")
BAND_EDGES = {"alpha": (8.0, 14.0), "beta": (14.0, 30.0), "theta": (4.0, 8.0), "delta": (0.5, 4.0)}
BAND_FEATURES = (
    "hjorth_activity", "hjorth_mobility", "hjorth_complexity", "psd_ratio",
    "mean_abs_amplitude", "mean_energy", "approx_entropy", "fuzzy_entropy",
)
SPECTRAL_FEATURES = ("max_energy", "max_energy_freq_hz")
FEATURE_NAMES = tuple(f"{b}_{f}" for b in BAND_ORDER for f in BAND_FEATURES) + SPECTRAL_FEATURES
PEAK_BAND_HZ = (0.5, 45.0)
DEGENERATE_STD = 1e-12


@dataclass(frozen=True)
class SubbandSpec:
    fs_hz: float = 500.0
    order: int = 4
    bands: tuple[tuple[str, tuple[float, float]], ...] = tuple((b, BAND_EDGES[b]) for b in BAND_ORDER)

    def filters(self) -> dict[str, dsp.FilterCoeffs]:
        return {name: dsp.design_butter_bandpass(self.order, lo, hi, self.fs_hz) for name, (lo, hi) in self.bands}


@dataclass
class FeatureVector:
    values: np.ndarray  # (34,), ordered as FEATURE_NAMES
    degenerate: set[str] = field(default_factory=set)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values.tolist()))


def decompose_subbands(x, spec: SubbandSpec = SubbandSpec()) -> dict[str, np.ndarray]:
    x = np.asarray(x, dtype=float)
    return {name: dsp.filtfilt(c, x) for name, c in spec.filters().items()}


def hjorth(x) -> tuple[float, float, float, bool]:
    """``(activity, mobility, complexity, degenerate)``; zero denominators give 0."""
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        raise ValueError("hjorth needs at least 3 samples")
    dx = np.diff(x)
    ddx = np.diff(dx)
    var0, var1, var2 = x.var(), dx.var(), ddx.var()
    degenerate = False
    if var0 > 0:
        mobility = math.sqrt(var1 / var0)
    else:
        mobility, degenerate = 0.0, True
    if var1 > 0 and mobility > 0:
        complexity = math.sqrt(var2 / var1) / mobility
    else:
        complexity, degenerate = 0.0, True
    return float(var0), mobility, complexity, degenerate


def psd_ratio(band_signal, full_signal) -> float:
    """Band energy over total energy, both in the time domain."""
    band_signal = np.asarray(band_signal, dtype=float)
    full_signal = np.asarray(full_signal, dtype=float)
    if band_signal.shape != full_signal.shape:
        raise ValueError("band and full signals must have equal length")
    den = float(full_signal @ full_signal)
    if den < 1e-24:
        return 0.0
    return float(band_signal @ band_signal) / den


def amplitude_energy(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(np.mean(np.abs(x))), float(np.mean(x * x))


def _embed(x: np.ndarray, m: int, count: int) -> np.ndarray:
    return np.lib.stride_tricks.sliding_window_view(x, m)[:count]


def _chebyshev_rows(templates: np.ndarray, i0: int, i1: int) -> np.ndarray:
    """Chebyshev distances from templates[i0:i1] to every template."""
    d = np.abs(templates[i0:i1, None, 0] - templates[None, :, 0])
    for k in range(1, templates.shape[1]):
        np.maximum(d, np.abs(templates[i0:i1, None, k] - templates[None, :, k]), out=d)
    return d


_BLOCK = 256


def _apen_counts(x: np.ndarray, m: int, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Match counts (self included) for template lengths m and m+1 in one sweep."""
    n = x.size - m + 1
    emb = _embed(x, m, n)
    cm = np.empty(n, dtype=np.int64)
    cm1 = np.empty(n - 1, dtype=np.int64)
    for i0 in range(0, n, _BLOCK):
        i1 = min(i0 + _BLOCK, n)
        d = _chebyshev_rows(emb, i0, i1)
        cm[i0:i1] = np.count_nonzero(d <= r, axis=1)
        # extending both templates by one sample only adds one more coordinate to the max
        j1 = min(i1, n - 1)
        if j1 > i0:
            tail = np.abs(x[i0 + m : j1 + m, None] - x[None, m : n - 1 + m])
            d1 = np.maximum(d[: j1 - i0, : n - 1], tail)
            cm1[i0:j1] = np.count_nonzero(d1 <= r, axis=1)
    return cm, cm1


def _std(x: np.ndarray) -> float:
    # exactly rounded sums so r does not depend on numpy's reduction order
    mean = math.fsum(x.tolist()) / x.size
    return math.sqrt(math.fsum(((x - mean) ** 2).tolist()) / x.size)


def _phi(counts: np.ndarray) -> float:
    n = counts.size
    return math.fsum(math.log(c / n) for c in counts.tolist()) / n


def approx_entropy(x, m: int = 2, r_factor: float = 0.2) -> float:
    """ApEn(m, r) with r = r_factor * std(x), Chebyshev distance, self-matches counted."""
    x = np.asarray(x, dtype=float)
    if x.size < 50:
        raise ValueError("approximate entropy needs at least 50 samples")
    sd = _std(x)
    if sd == 0:
        return 0.0
    cm, cm1 = _apen_counts(x, m, r_factor * sd)
    return _phi(cm) - _phi(cm1)


def _running_total(v: np.ndarray) -> np.ndarray:
    # left-to-right summation along the last axis, so results do not depend on
    # numpy's pairwise reduction blocking
    return np.cumsum(v, axis=-1)[..., -1]


def _fuzzy_phi(x: np.ndarray, m: int, r: float, n_exp: float, count: int) -> float:
    emb = _embed(x, m, count).copy()
    emb -= emb.mean(axis=1, keepdims=True)
    row_means = np.empty(count)
    for i0 in range(0, count, _BLOCK):
        i1 = min(i0 + _BLOCK, count)
        d = _chebyshev_rows(emb, i0, i1)
        d /= r
        sim = np.exp(-np.power(d, n_exp))
        sim[np.arange(i1 - i0), np.arange(i0, i1)] = 0.0  # drop self-matches
        row_means[i0:i1] = _running_total(sim) / (count - 1)
    return float(_running_total(row_means)) / count


def fuzzy_entropy(x, m: int = 2, r_factor: float = 0.2, n: float = 2) -> float:
    """FuzzyEn with mean-removed templates and membership exp(-(d/r)^n).

    Both template lengths use the first ``N - m`` start positions. Sums run
    in index order.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 50:
        raise ValueError("fuzzy entropy needs at least 50 samples")
    sd = _std(x)
    if sd == 0:
        return 0.0
    r = r_factor * sd
    count = x.size - m
    phi_m = _fuzzy_phi(x, m, r, n, count)
    phi_m1 = _fuzzy_phi(x, m + 1, r, n, count)
    return math.log(phi_m) - math.log(phi_m1)


def spectral_peak(x, fs_hz: float, band_hz: tuple[float, float] = PEAK_BAND_HZ) -> tuple[float, float]:
    """Largest |X_k|^2 within ``band_hz`` (inclusive) and its frequency; ties go low."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("spectral peak needs at least 2 samples")
    spec = dsp.rdft_magnitude(x, fs_hz)
    sel = np.flatnonzero((spec.freqs_hz >= band_hz[0]) & (spec.freqs_hz <= band_hz[1]))
    if sel.size == 0:
        return 0.0, 0.0
    power = spec.magnitude[sel] ** 2
    k = sel[int(np.argmax(power))]  # argmax returns the first maximum
    return float(spec.magnitude[k] ** 2), float(spec.freqs_hz[k])


def extract_feature_vector(x, fs_hz: float = 500.0, spec: SubbandSpec | None = None) -> FeatureVector:
    x = np.asarray(x, dtype=float)
    spec = spec or SubbandSpec(fs_hz=fs_hz)
    if x.std() < DEGENERATE_STD:
        # filtering a constant leaves only roundoff; report the documented zeros
        values = np.zeros(len(FEATURE_NAMES))
        values[-2:] = spectral_peak(x, fs_hz)
        return FeatureVector(values, {"constant_input"} | {f"{b}_hjorth" for b in BAND_ORDER}
                             | {f"{b}_psd_ratio" for b in BAND_ORDER})
    bands = decompose_subbands(x, spec)
    values = []
    degenerate = set()
    for name in BAND_ORDER:
        b = bands[name]
        act, mob, comp, bad = hjorth(b)
        if bad:
            degenerate.add(f"{name}_hjorth")
        ratio = psd_ratio(b, x)
        mabs, menergy = amplitude_energy(b)
        values += [act, mob, comp, ratio, mabs, menergy, approx_entropy(b), fuzzy_entropy(b)]
    values += list(spectral_peak(x, fs_hz))
    return FeatureVector(np.asarray(values, dtype=float), degenerate)


# ---------------------------------------------------------------- ANOVA


@dataclass
class AnovaResult:
    f_stat: np.ndarray
    p_value: np.ndarray
    selected: np.ndarray
    threshold: float
    fallback: bool = False


def f_sf(f, d1: float, d2: float):
    """Survival function of the F distribution via the regularized incomplete beta."""
    f = np.asarray(f, dtype=float)
    return special.betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


def anova_select(features, labels, p_threshold: float = 0.05) -> AnovaResult:
    """Two-group one-way ANOVA per feature column; keep columns with p < threshold.

    If no column passes, the single lowest-p column is kept.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError("features must be a (samples, dims) matrix with dims >= 1")
    classes = np.unique(y)
    if classes.size != 2:
        raise ValueError(f"exactly two classes required, got {classes.tolist()}")
    groups = [x[y == c] for c in classes]
    if min(len(g) for g in groups) < 2:
        raise ValueError("each class needs at least 2 samples")
    n, k = x.shape[0], 2
    grand = x.mean(axis=0)
    ssb = sum(len(g) * (g.mean(axis=0) - grand) ** 2 for g in groups)
    ssw = sum(((g - g.mean(axis=0)) ** 2).sum(axis=0) for g in groups)
    msb = ssb / (k - 1)
    msw = ssw / (n - k)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(msw > 0, msb / msw, np.where(msb > 0, np.inf, 0.0))
    p = np.where(np.isinf(f), 0.0, f_sf(np.where(np.isinf(f), 0.0, f), k - 1, n - k))
    p = np.clip(p, np.finfo(float).tiny, 1.0)
    selected = p < p_threshold
    fallback = not selected.any()
    if fallback:
        selected[int(np.argmin(p))] = True
    return AnovaResult(f_stat=f, p_value=p, selected=selected, threshold=p_threshold, fallback=fallback)
