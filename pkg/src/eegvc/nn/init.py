"""Deterministic parameter initialisation."""
from __future__ import annotations

import math

import numpy as np

from .layers import ConvSpec


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def conv_fan_in(spec: ConvSpec, in_features: int, transpose: bool = False) -> int:
    kh, kw = spec.kernel
    if not transpose:
        return kh * kw * in_features
    sh, sw = spec.stride
    # inputs that overlap a single output position
    return in_features * math.ceil(kh / sh) * math.ceil(kw / sw)


def init_params(spec: ConvSpec, in_features: int, seed, *, transpose: bool = False,
                fan_in: int | None = None) -> dict[str, np.ndarray]:
    """He-normal weights ``(kh, kw, in, out)`` and zero bias.

    ``seed`` may be an int or a ``numpy.random.Generator`` (drawn from in place).
    """
    rng = _rng(seed)
    kh, kw = spec.kernel
    if fan_in is None:
        fan_in = conv_fan_in(spec, in_features, transpose)
    std = math.sqrt(2.0 / fan_in)
    return {
        "weight": rng.normal(0.0, std, size=(kh, kw, in_features, spec.filters)),
        "bias": np.zeros(spec.filters),
    }


def init_bilstm(input_dim: int, hidden: int, seed) -> dict[str, np.ndarray]:
    """Fan-in scaled normal weights; forget-gate bias 1, other biases 0."""
    rng = _rng(seed)
    params = {}
    for d in ("fw", "bw"):
        params[f"{d}_wx"] = rng.normal(0.0, math.sqrt(1.0 / input_dim), size=(input_dim, 4 * hidden))
        params[f"{d}_wh"] = rng.normal(0.0, math.sqrt(1.0 / hidden), size=(hidden, 4 * hidden))
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        params[f"{d}_b"] = b
    return params
