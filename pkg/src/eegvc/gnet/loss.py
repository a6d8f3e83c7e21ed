"""Composite time/frequency-domain reconstruction loss."""
from __future__ import annotations

import numpy as np

from ..nn.layers import ShapeError


def _as_channels(a: np.ndarray) -> np.ndarray:
    # (B, C, N, 1) or (C, N) -> (B*C, N)
    a = np.asarray(a, dtype=float)
    if a.ndim == 4:
        return a[..., 0].reshape(-1, a.shape[2])
    if a.ndim == 2:
        return a
    raise ShapeError("loss input must be (B, C, N, 1) or (C, N)", a.shape, None)


def time_mse(gen: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    diff = gen - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def freq_mse(gen: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over channels and bins 1..N//2 of squared differences of |DFT|/N.

    ``gen`` and ``target`` are ``(channels, N)``; returns the loss and its
    gradient with respect to ``gen`` (subgradient 0 where |G_k| = 0).
    """
    c, n = gen.shape
    m = n // 2
    if m < 1:
        raise ValueError("frequency loss needs at least 2 samples per channel")
    g_spec = np.fft.rfft(gen, axis=1)[:, 1 : m + 1]
    f_mag = np.abs(np.fft.rfft(target, axis=1)[:, 1 : m + 1]) / n
    g_abs = np.abs(g_spec)
    diff = g_abs / n - f_mag
    loss = float(np.mean(diff * diff))
    unit = np.zeros_like(g_spec)
    nz = g_abs > 0
    unit[nz] = g_spec[nz] / g_abs[nz]
    coef = 2.0 * diff / (c * m * n)
    full = np.zeros((c, n), dtype=complex)
    full[:, 1 : m + 1] = coef * unit
    # d|G_k|/dg_j = Re(conj(u_k) exp(-2 pi i k j / N)), summed over k
    grad = np.real(np.fft.ifft(full, axis=1)) * n
    return loss, grad


def composite_loss(gen: np.ndarray, target: np.ndarray, alpha: float = 1.0,
                   beta: float = 1.0) -> tuple[float, np.ndarray]:
    """``alpha * time MSE + beta * frequency MSE``; gradient has ``gen``'s shape."""
    gen = np.asarray(gen, dtype=float)
    target = np.asarray(target, dtype=float)
    if gen.shape != target.shape:
        raise ShapeError("generated and target shapes differ", gen.shape, target.shape)
    if alpha < 0 or beta < 0 or (alpha == 0 and beta == 0):
        raise ValueError(f"loss weights must be >= 0 and not both zero, got alpha={alpha}, beta={beta}")
    g2, t2 = _as_channels(gen), _as_channels(target)
    loss = 0.0
    grad = np.zeros_like(g2)
    if alpha:
        lt, gt = time_mse(g2, t2)
        loss += alpha * lt
        grad += alpha * gt
    if beta:
        lf, gf = freq_mse(g2, t2)
        loss += beta * lf
        grad += beta * gf
    return loss, grad.reshape(gen.shape)
