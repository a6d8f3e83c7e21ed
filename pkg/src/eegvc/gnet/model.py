"""The parallel spatio-temporal generator: layer inventory, forward and backward."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import layers as L
from ..nn.init import init_bilstm, init_params
from ..nn.layers import ConvSpec, ShapeError


@dataclass(frozen=True)
class GNetArch:
    """Widths and lengths of the generator. Defaults are the full-size network."""

    n_source: int = 4
    n_target: int = 17
    seg_len: int = 3000
    filters: tuple[int, int, int] = (64, 128, 256)
    spatial_out: int = 512
    lstm_hidden: int = 512
    fusion: tuple[int, int, int, int] = (1024, 256, 128, 64)
    leaky_slope: float = 0.2

    @classmethod
    def small(cls, seg_len: int = 64, **kw) -> "GNetArch":
        """Same topology on short segments with narrow encoders, for gradient checks and quick runs.

        The fusion stack stays wide: with narrower decoders the 8-pair overfit
        run stalls well above the target loss at the fixed learning rate.
        """
        base = dict(seg_len=seg_len, filters=(4, 8, 16), spatial_out=256, lstm_hidden=8, fusion=(512, 256, 128, 64))
        base.update(kw)
        return cls(**base)

    def __post_init__(self):
        if self.seg_len % 8:
            raise ValueError(f"seg_len must be divisible by 8, got {self.seg_len}")
        if self.n_source < 3:
            raise ValueError("the spatial branch needs at least 3 source rows")

    def layers(self) -> list[tuple[str, str, object]]:
        """``(name, kind, spec)`` for every learnable layer in forward order."""
        s = self.leaky_slope
        f1, f2, f3 = self.filters
        u1, u2, u3, u4 = self.fusion
        return [
            ("temporal.conv1", "conv2d", ConvSpec(f1, (1, 7), (1, 2), "same", s)),
            ("temporal.conv2", "conv2d", ConvSpec(f2, (1, 5), (1, 2), "same", s)),
            ("temporal.conv3", "conv2d", ConvSpec(f3, (1, 3), (1, 2), "same", s)),
            ("temporal.bilstm", "bilstm", self.lstm_hidden),
            ("spatial.conv1", "conv2d", ConvSpec(f1, (3, 7), (1, 2), "same", s)),
            ("spatial.conv2", "conv2d", ConvSpec(f2, (3, 5), (1, 2), "same", s)),
            ("spatial.conv3", "conv2d", ConvSpec(f3, (3, 3), (1, 2), "same", s)),
            ("spatial.conv4", "conv2d", ConvSpec(self.spatial_out, (self.n_source, 1), (1, 1), "valid", s)),
            ("fusion.deconv1", "conv_transpose2d", ConvSpec(u1, (self.n_target, 1), (1, 1), "valid", s)),
            ("fusion.deconv2", "conv_transpose2d", ConvSpec(u2, (1, 3), (1, 2), "same", s)),
            ("fusion.deconv3", "conv_transpose2d", ConvSpec(u3, (1, 5), (1, 2), "same", s)),
            ("fusion.deconv4", "conv_transpose2d", ConvSpec(u4, (1, 7), (1, 2), "same", s)),
            ("output.conv", "conv2d", ConvSpec(1, (1, 1), (1, 1), "valid", None)),
        ]

    def in_features(self) -> dict[str, int]:
        f1, f2, f3 = self.filters
        u1, u2, u3, u4 = self.fusion
        return {
            "temporal.conv1": 1, "temporal.conv2": f1, "temporal.conv3": f2,
            "temporal.bilstm": self.n_source * f3,
            "spatial.conv1": 1, "spatial.conv2": f1, "spatial.conv3": f2, "spatial.conv4": f3,
            "fusion.deconv1": 2 * self.lstm_hidden + self.spatial_out,
            "fusion.deconv2": u1, "fusion.deconv3": u2, "fusion.deconv4": u3, "output.conv": u4,
        }


def build_gnet(arch: GNetArch, seed: int) -> dict[str, np.ndarray]:
    """Fresh parameters as a flat ``"layer.param" -> array`` dict."""
    rng = np.random.default_rng([seed, 0])
    cin = arch.in_features()
    params: dict[str, np.ndarray] = {}
    for name, kind, spec in arch.layers():
        if kind == "bilstm":
            p = init_bilstm(cin[name], spec, rng)
        else:
            fan_in = None
            if name == "fusion.deconv1":
                fan_in = cin[name]  # a single input row feeds each output row
            p = init_params(spec, cin[name], rng, transpose=kind == "conv_transpose2d", fan_in=fan_in)
        for k, v in p.items():
            params[f"{name}.{k}"] = v
    return params


def layer_params(params: dict[str, np.ndarray], name: str) -> dict[str, np.ndarray]:
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


@dataclass
class ForwardCache:
    caches: dict[str, L.Cache] = field(default_factory=dict)
    shapes: dict[str, tuple] = field(default_factory=dict)
    input_shape: tuple = ()


def gnet_forward(params: dict[str, np.ndarray], x: np.ndarray, arch: GNetArch) -> tuple[np.ndarray, ForwardCache]:
    """Map ``(B, n_source, seg_len, 1)`` to ``(B, n_target, seg_len, 1)``."""
    expected = (arch.n_source, arch.seg_len, 1)
    if x.ndim != 4 or x.shape[1:] != expected or x.shape[0] < 1:
        raise ShapeError("generator input", x.shape, ("batch", *expected))
    specs = {name: (kind, spec) for name, kind, spec in arch.layers()}
    fc = ForwardCache(input_shape=x.shape)

    def run(name, h):
        kind, spec = specs[name]
        fwd = L.conv2d_forward if kind == "conv2d" else L.conv_transpose2d_forward
        y, fc.caches[name] = fwd(h, layer_params(params, name), spec)
        fc.shapes[name] = y.shape
        return y

    t = x
    for name in ("temporal.conv1", "temporal.conv2", "temporal.conv3"):
        t = run(name, t)
    bsz, rows, t_len, feat = t.shape
    lp = layer_params(params, "temporal.bilstm")
    seqs, lstm_caches = [], []
    for b in range(bsz):
        # flatten rows x features per time step
        seq = t[b].transpose(1, 0, 2).reshape(t_len, rows * feat)
        out, c = L.bilstm_forward(seq, lp, arch.lstm_hidden)
        seqs.append(out)
        lstm_caches.append(c)
    temporal = np.stack(seqs)[:, None]
    fc.caches["temporal.bilstm"] = lstm_caches
    fc.shapes["temporal.bilstm"] = temporal.shape

    s = x
    for name in ("spatial.conv1", "spatial.conv2", "spatial.conv3", "spatial.conv4"):
        s = run(name, s)

    h = np.concatenate([temporal, s], axis=3)
    fc.shapes["fusion.concat"] = h.shape
    for name in ("fusion.deconv1", "fusion.deconv2", "fusion.deconv3", "fusion.deconv4", "output.conv"):
        h = run(name, h)
    return h, fc


def gnet_backward(params: dict[str, np.ndarray], fc: ForwardCache, upstream: np.ndarray,
                  arch: GNetArch) -> dict[str, np.ndarray]:
    """Parameter gradients (same keys as ``params``) for upstream dL/d(output)."""
    specs = {name: kind for name, kind, _ in arch.layers()}
    grads: dict[str, np.ndarray] = {}

    def back(name, g):
        dx, pg = L.layer_backward(specs[name], fc.caches[name], g)
        for k, v in pg.items():
            grads[f"{name}.{k}"] = v
        return dx

    g = upstream
    for name in ("output.conv", "fusion.deconv4", "fusion.deconv3", "fusion.deconv2", "fusion.deconv1"):
        g = back(name, g)
    two_h = 2 * arch.lstm_hidden
    g_temporal, g_spatial = g[..., :two_h], g[..., two_h:]

    for name in ("spatial.conv4", "spatial.conv3", "spatial.conv2", "spatial.conv1"):
        g_spatial = back(name, g_spatial)

    bsz, rows, t_len, feat = fc.shapes["temporal.conv3"]
    g_t = np.empty(fc.shapes["temporal.conv3"])
    lstm_grads: dict[str, np.ndarray] = {}
    for b, cache in enumerate(fc.caches["temporal.bilstm"]):
        dseq, pg = L.layer_backward("bilstm", cache, g_temporal[b, 0])
        g_t[b] = dseq.reshape(t_len, rows, feat).transpose(1, 0, 2)
        for k, v in pg.items():
            lstm_grads[k] = lstm_grads[k] + v if k in lstm_grads else v
    for k, v in lstm_grads.items():
        grads[f"temporal.bilstm.{k}"] = v
    for name in ("temporal.conv3", "temporal.conv2", "temporal.conv1"):
        g_t = back(name, g_t)
    return grads


def param_count(params: dict[str, np.ndarray]) -> int:
    return int(sum(v.size for v in params.values()))
