"""Adam with bias correction over a flat ``name -> array`` parameter dict."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import ShapeError


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], **hyper) -> "AdamState":
        state = cls(**hyper)
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
        return state


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Update ``params`` and ``state`` in place; increments ``state.t``."""
    if grads.keys() != params.keys():
        missing = sorted(set(params) ^ set(grads))
        raise ShapeError(f"gradient names differ from parameter names: {missing[:5]}")
    for k, p in params.items():
        if grads[k].shape != p.shape:
            raise ShapeError(f"gradient shape for {k!r}", grads[k].shape, p.shape)
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for k, p in params.items():
        g = grads[k]
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        tmp = g * (1.0 - state.beta1)
        m += tmp
        v *= state.beta2
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - state.beta2
        v += tmp
        # p -= lr * (m / c1) / (sqrt(v / c2) + eps)
        np.multiply(v, 1.0 / c2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += state.epsilon
        np.divide(m, tmp, out=tmp)
        tmp *= state.lr / c1
        p -= tmp
