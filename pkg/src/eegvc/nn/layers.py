"""Layer primitives with hand-written backward passes.

Every feature map is a rank-4 float64 array laid out as
``(batch, rows, time, features)``. Forward functions return ``(output, cache)``;
the cache carries what the matching backward call needs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_SLOPE = 0.2


class ShapeError(ValueError):
    """Raised when array dimensions are inconsistent with a layer."""

    def __init__(self, message: str, got: tuple | None = None, expected: tuple | None = None):
        if got is not None or expected is not None:
            message = f"{message}: got {got}, expected {expected}"
        super().__init__(message)
        self.got = got
        self.expected = expected


class CacheError(RuntimeError):
    """Raised when a backward call receives a cache it cannot use."""


@dataclass(frozen=True)
class ConvSpec:
    """One convolution row: filters, kernel (kh, kw), stride, padding, activation.

    ``leaky_slope=None`` means no activation.
    """

    filters: int
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    padding: str = "same"
    leaky_slope: float | None = DEFAULT_SLOPE

    def __post_init__(self):
        if self.filters < 1:
            raise ValueError(f"filters must be >= 1, got {self.filters}")
        if min(self.kernel) < 1 or min(self.stride) < 1:
            raise ValueError(f"kernel and stride must be >= 1, got {self.kernel}, {self.stride}")
        if self.padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {self.padding!r}")
        if self.leaky_slope is not None and not 0.0 < self.leaky_slope < 1.0:
            raise ValueError(f"leaky slope must lie in (0, 1), got {self.leaky_slope}")


@dataclass
class Cache:
    kind: str
    out_shape: tuple
    data: dict[str, Any] = field(default_factory=dict)


# ---------------------------------------------------------------- shape algebra

def same_pad(in_len: int, k: int, s: int) -> tuple[int, int, int]:
    """Return ``(out_len, pad_before, pad_after)`` for Same padding."""
    out = -(-in_len // s)
    total = max((out - 1) * s + k - in_len, 0)
    return out, total // 2, total - total // 2


def conv_out_len(in_len: int, k: int, s: int, padding: str) -> int:
    if padding == "same":
        return same_pad(in_len, k, s)[0]
    return (in_len - k) // s + 1


def conv_transpose_out_len(in_len: int, k: int, s: int, padding: str) -> int:
    if padding == "same":
        return in_len * s
    return (in_len - 1) * s + k


def _transpose_crop(in_len: int, k: int, s: int) -> tuple[int, int]:
    # Same-padding transposed conv is the adjoint of a Same conv whose input
    # length is in_len * s, so the crop equals that conv's padding.
    _, before, after = same_pad(in_len * s, k, s)
    return before, after


def _check_input(x: np.ndarray, weight: np.ndarray, spec: ConvSpec, transpose: bool) -> None:
    if x.ndim != 4:
        raise ShapeError("input must be rank 4 (batch, rows, time, features)", x.shape, ("B", "H", "W", "C"))
    kh, kw = spec.kernel
    cin = x.shape[3]
    expected = (kh, kw, cin, spec.filters)
    if weight.shape != expected:
        raise ShapeError("weight shape does not match input/spec", weight.shape, expected)
    if min(x.shape) < 1:
        raise ShapeError("input dims must be positive", x.shape, None)
    if not transpose and spec.padding == "valid":
        if x.shape[1] < kh or x.shape[2] < kw:
            raise ShapeError("input smaller than kernel under valid padding", x.shape[1:3], (kh, kw))


# ---------------------------------------------------------------- activation

def leaky_relu(x: np.ndarray, slope: float = DEFAULT_SLOPE) -> np.ndarray:
    if not 0.0 < slope < 1.0:
        raise ValueError(f"slope must lie in (0, 1), got {slope}")
    y = x * slope
    return np.maximum(x, y, out=y)


def leaky_relu_forward(x: np.ndarray, slope: float = DEFAULT_SLOPE) -> tuple[np.ndarray, Cache]:
    y = leaky_relu(x, slope)
    return y, Cache("leaky_relu", y.shape, {"x": x, "slope": slope})


def leaky_relu_backward(cache: Cache, upstream: np.ndarray) -> tuple[np.ndarray, dict]:
    x = cache.data["x"]
    return np.where(x >= 0, upstream, cache.data["slope"] * upstream), {}


# ---------------------------------------------------------------- convolution

def conv2d_forward(x: np.ndarray, params: dict, spec: ConvSpec) -> tuple[np.ndarray, Cache]:
    """Cross-correlation + bias + optional LeakyReLU."""
    w, b = params["weight"], params["bias"]
    _check_input(x, w, spec, transpose=False)
    kh, kw = spec.kernel
    sh, sw = spec.stride
    bsz, h, wd, cin = x.shape
    if spec.padding == "same":
        ho, pt, pb = same_pad(h, kh, sh)
        wo, pl, pr = same_pad(wd, kw, sw)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    else:
        ho, wo = conv_out_len(h, kh, sh, "valid"), conv_out_len(wd, kw, sw, "valid")
        pt = pl = 0
        xp = x
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, : (ho - 1) * sh + 1 : sh, : (wo - 1) * sw + 1 : sw]
    # (B, Ho, Wo, C, kh, kw) -> (B*Ho*Wo, kh*kw*C), row layout matching weight.reshape
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(bsz * ho * wo, kh * kw * cin)
    z = (cols @ w.reshape(kh * kw * cin, spec.filters)).reshape(bsz, ho, wo, spec.filters) + b
    y = z if spec.leaky_slope is None else leaky_relu(z, spec.leaky_slope)
    cache = Cache("conv2d", y.shape, {
        "cols": cols, "z": z, "w": w, "spec": spec, "x_shape": x.shape,
        "xp_shape": xp.shape, "offset": (pt, pl),
    })
    return y, cache


def _activation_backward(z: np.ndarray, spec: ConvSpec, upstream: np.ndarray) -> np.ndarray:
    if spec.leaky_slope is None:
        return upstream
    g = upstream * spec.leaky_slope
    np.copyto(g, upstream, where=z >= 0)
    return g


def conv2d_backward(cache: Cache, upstream: np.ndarray) -> tuple[np.ndarray, dict]:
    d = cache.data
    spec: ConvSpec = d["spec"]
    kh, kw = spec.kernel
    sh, sw = spec.stride
    bsz, h, wd, cin = d["x_shape"]
    _, ho, wo, f = cache.out_shape
    dz = _activation_backward(d["z"], spec, upstream)
    dz2 = dz.reshape(-1, f)
    grads = {
        "weight": (d["cols"].T @ dz2).reshape(kh, kw, cin, f),
        "bias": dz2.sum(axis=0),
    }
    dcols = (dz2 @ d["w"].reshape(kh * kw * cin, f).T).reshape(bsz, ho, wo, kh, kw, cin)
    dxp = np.zeros(d["xp_shape"])
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + (ho - 1) * sh + 1 : sh, j : j + (wo - 1) * sw + 1 : sw, :] += dcols[:, :, :, i, j, :]
    pt, pl = d["offset"]
    return dxp[:, pt : pt + h, pl : pl + wd, :], grads


def conv_transpose2d_forward(x: np.ndarray, params: dict, spec: ConvSpec) -> tuple[np.ndarray, Cache]:
    """Transposed convolution (adjoint of conv2d) + bias + optional LeakyReLU.

    Weights are stored as ``(kh, kw, in_features, out_features)``.
    """
    w, b = params["weight"], params["bias"]
    _check_input(x, w, spec, transpose=True)
    kh, kw = spec.kernel
    sh, sw = spec.stride
    bsz, h, wd, cin = x.shape
    f = spec.filters
    ho = conv_transpose_out_len(h, kh, sh, spec.padding)
    wo = conv_transpose_out_len(wd, kw, sw, spec.padding)
    if spec.padding == "same":
        ct, cl = _transpose_crop(h, kh, sh)[0], _transpose_crop(wd, kw, sw)[0]
    else:
        ct = cl = 0
    # canvas holds the uncropped output; it is larger than (h-1)*s+k only if k < s
    canvas = (max((h - 1) * sh + kh, ct + ho), max((wd - 1) * sw + kw, cl + wo))
    xs = np.ascontiguousarray(x).reshape(-1, cin)
    full = np.zeros((bsz, *canvas, f))
    for i in range(kh):
        for j in range(kw):
            tap = (xs @ w[i, j]).reshape(bsz, h, wd, f)
            full[:, i : i + (h - 1) * sh + 1 : sh, j : j + (wd - 1) * sw + 1 : sw, :] += tap
    z = full[:, ct : ct + ho, cl : cl + wo, :]
    z += b
    y = z if spec.leaky_slope is None else leaky_relu(z, spec.leaky_slope)
    cache = Cache("conv_transpose2d", y.shape, {
        "xs": xs, "z": z, "w": w, "spec": spec, "x_shape": x.shape,
        "canvas": canvas, "offset": (ct, cl),
    })
    return y, cache


def conv_transpose2d_backward(cache: Cache, upstream: np.ndarray) -> tuple[np.ndarray, dict]:
    d = cache.data
    spec: ConvSpec = d["spec"]
    kh, kw = spec.kernel
    sh, sw = spec.stride
    bsz, h, wd, cin = d["x_shape"]
    _, ho, wo, f = cache.out_shape
    w, xs = d["w"], d["xs"]
    dz = _activation_backward(d["z"], spec, upstream)
    ct, cl = d["offset"]
    dfull = np.zeros((bsz, *d["canvas"], f))
    dfull[:, ct : ct + ho, cl : cl + wo, :] = dz
    dw = np.empty_like(w)
    dx = np.zeros((bsz * h * wd, cin))
    for i in range(kh):
        for j in range(kw):
            tap = dfull[:, i : i + (h - 1) * sh + 1 : sh, j : j + (wd - 1) * sw + 1 : sw, :]
            tap = np.ascontiguousarray(tap).reshape(-1, f)
            dw[i, j] = xs.T @ tap
            dx += tap @ w[i, j].T
    grads = {"weight": dw, "bias": dz.reshape(-1, f).sum(axis=0)}
    return dx.reshape(bsz, h, wd, cin), grads


# ---------------------------------------------------------------- BiLSTM

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _lstm_forward(seq: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray):
    t_len = seq.shape[0]
    hidden = wh.shape[0]
    pre_x = seq @ wx + b
    hs = np.zeros((t_len + 1, hidden))
    cs = np.zeros((t_len + 1, hidden))
    gates = np.empty((t_len, 4 * hidden))
    for t in range(t_len):
        a = pre_x[t] + hs[t] @ wh
        i = _sigmoid(a[:hidden])
        f = _sigmoid(a[hidden : 2 * hidden])
        g = np.tanh(a[2 * hidden : 3 * hidden])
        o = _sigmoid(a[3 * hidden :])
        cs[t + 1] = f * cs[t] + i * g
        hs[t + 1] = o * np.tanh(cs[t + 1])
        gates[t, :hidden], gates[t, hidden : 2 * hidden] = i, f
        gates[t, 2 * hidden : 3 * hidden], gates[t, 3 * hidden :] = g, o
    return hs, cs, gates


def _lstm_backward(seq, wx, wh, hs, cs, gates, dh_out):
    t_len, hidden = dh_out.shape
    da = np.empty((t_len, 4 * hidden))
    dh_next = np.zeros(hidden)
    dc_next = np.zeros(hidden)
    for t in range(t_len - 1, -1, -1):
        i = gates[t, :hidden]
        f = gates[t, hidden : 2 * hidden]
        g = gates[t, 2 * hidden : 3 * hidden]
        o = gates[t, 3 * hidden :]
        tc = np.tanh(cs[t + 1])
        dh = dh_out[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da[t, :hidden] = dc * g * i * (1.0 - i)
        da[t, hidden : 2 * hidden] = dc * cs[t] * f * (1.0 - f)
        da[t, 2 * hidden : 3 * hidden] = dc * i * (1.0 - g * g)
        da[t, 3 * hidden :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = da[t] @ wh.T
    grads = {"wx": seq.T @ da, "wh": hs[:-1].T @ da, "b": da.sum(axis=0)}
    return da @ wx.T, grads


LSTM_KEYS = ("fw_wx", "fw_wh", "fw_b", "bw_wx", "bw_wh", "bw_b")


def bilstm_forward(seq: np.ndarray, params: dict, hidden: int) -> tuple[np.ndarray, Cache]:
    """Run an LSTM forward and over the reversed sequence; concat per-step outputs.

    Gate order inside each ``(.., 4*hidden)`` block is input, forget, cell, output.
    """
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise ShapeError("sequence must be (T, D) with T >= 1", seq.shape, ("T", "D"))
    d = seq.shape[1]
    for p in ("fw", "bw"):
        if params[f"{p}_wx"].shape != (d, 4 * hidden):
            raise ShapeError(f"{p}_wx shape", params[f"{p}_wx"].shape, (d, 4 * hidden))
        if params[f"{p}_wh"].shape != (hidden, 4 * hidden):
            raise ShapeError(f"{p}_wh shape", params[f"{p}_wh"].shape, (hidden, 4 * hidden))
        if params[f"{p}_b"].shape != (4 * hidden,):
            raise ShapeError(f"{p}_b shape", params[f"{p}_b"].shape, (4 * hidden,))
    fw = _lstm_forward(seq, params["fw_wx"], params["fw_wh"], params["fw_b"])
    rev = np.ascontiguousarray(seq[::-1])
    bw = _lstm_forward(rev, params["bw_wx"], params["bw_wh"], params["bw_b"])
    out = np.concatenate([fw[0][1:], bw[0][1:][::-1]], axis=1)
    cache = Cache("bilstm", out.shape, {"seq": seq, "rev": rev, "fw": fw, "bw": bw, "params": params})
    return out, cache


def bilstm_backward(cache: Cache, upstream: np.ndarray) -> tuple[np.ndarray, dict]:
    d = cache.data
    p = d["params"]
    hidden = p["fw_wh"].shape[0]
    dx_fw, g_fw = _lstm_backward(d["seq"], p["fw_wx"], p["fw_wh"], *d["fw"], np.ascontiguousarray(upstream[:, :hidden]))
    dx_bw, g_bw = _lstm_backward(d["rev"], p["bw_wx"], p["bw_wh"], *d["bw"], np.ascontiguousarray(upstream[::-1, hidden:]))
    grads = {f"fw_{k}": v for k, v in g_fw.items()}
    grads.update({f"bw_{k}": v for k, v in g_bw.items()})
    return dx_fw + dx_bw[::-1], grads


# ---------------------------------------------------------------- dispatch

_BACKWARD = {
    "conv2d": conv2d_backward,
    "conv_transpose2d": conv_transpose2d_backward,
    "leaky_relu": leaky_relu_backward,
    "bilstm": bilstm_backward,
}


def layer_backward(kind: str, cache: Cache, upstream: np.ndarray) -> tuple[np.ndarray, dict]:
    """Return ``(input_gradient, parameter_gradients)`` for one layer."""
    if not isinstance(cache, Cache) or cache.kind != kind:
        got = getattr(cache, "kind", type(cache).__name__)
        raise CacheError(f"cache was produced by {got!r}, not {kind!r}")
    if upstream.shape != cache.out_shape:
        raise ShapeError("upstream gradient does not match forward output", upstream.shape, cache.out_shape)
    return _BACKWARD[kind](cache, upstream)


def he_std(fan_in: int) -> float:
    return math.sqrt(2.0 / fan_in)
