"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import layers as L

LossFn = Callable[[], tuple[float, dict[str, np.ndarray]]]


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def grad_check(fn: LossFn, arrays: dict[str, np.ndarray], eps: float = 1e-5,
               max_coords: int | None = None, seed: int = 0) -> float:
    """Max relative error between ``fn``'s analytic gradients and central differences.

    ``fn()`` returns ``(loss, grads)`` where ``grads`` is keyed like ``arrays``;
    the arrays are perturbed in place and restored. With ``max_coords`` only a
    seeded random subset of each array's entries is probed.
    """
    _, grads = fn()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, arr in arrays.items():
        g = grads[name]
        flat = arr.reshape(-1)  # must be a view
        if not np.shares_memory(flat, arr):
            raise ValueError(f"array {name!r} is not contiguous; cannot perturb in place")
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            lp, _ = fn()
            flat[i] = orig - eps
            lm, _ = fn()
            flat[i] = orig
            worst = max(worst, relative_error(g.reshape(-1)[i], (lp - lm) / (2 * eps)))
    return worst


def layer_fragment(kind: str, x: np.ndarray, params: dict, spec=None, hidden: int | None = None,
                   seed: int = 0) -> tuple[LossFn, dict[str, np.ndarray]]:
    """Wrap one layer as ``loss = sum(forward(x) * R)`` with a fixed random ``R``.

    Returns the loss function and the dict of arrays it reads (``x`` plus params).
    """
    arrays = {"x": x, **params}
    probe = None

    def forward():
        p = {k: arrays[k] for k in params}
        if kind == "conv2d":
            return L.conv2d_forward(arrays["x"], p, spec)
        if kind == "conv_transpose2d":
            return L.conv_transpose2d_forward(arrays["x"], p, spec)
        if kind == "leaky_relu":
            return L.leaky_relu_forward(arrays["x"], spec if spec is not None else L.DEFAULT_SLOPE)
        if kind == "bilstm":
            return L.bilstm_forward(arrays["x"], p, hidden)
        raise ValueError(f"unknown layer kind {kind!r}")

    def fn():
        nonlocal probe
        y, cache = forward()
        if probe is None:
            probe = np.random.default_rng(seed).normal(size=y.shape)
        dx, grads = L.layer_backward(kind, cache, probe)
        return float(np.sum(y * probe)), {"x": dx, **grads}

    return fn, arrays
