import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eegvc.nn import layers as L
from eegvc.nn.gradcheck import grad_check, layer_fragment, relative_error
from eegvc.nn.init import conv_fan_in, init_bilstm, init_params
from eegvc.nn.layers import CacheError, ConvSpec, ShapeError
from eegvc.nn.optim import AdamState, adam_step


def naive_conv2d(x, w, b, spec):
    """Direct cross-correlation by explicit loops over output positions."""
    kh, kw = spec.kernel
    sh, sw = spec.stride
    bsz, h, wd, cin = x.shape
    if spec.padding == "same":
        ho, pt, _ = L.same_pad(h, kh, sh)
        wo, pl, _ = L.same_pad(wd, kw, sw)
    else:
        ho, wo, pt, pl = (h - kh) // sh + 1, (wd - kw) // sw + 1, 0, 0
    out = np.zeros((bsz, ho, wo, spec.filters))
    for n in range(bsz):
        for r in range(ho):
            for c in range(wo):
                acc = b.copy()
                for i in range(kh):
                    for j in range(kw):
                        rr, cc = r * sh + i - pt, c * sw + j - pl
                        if 0 <= rr < h and 0 <= cc < wd:
                            acc += x[n, rr, cc] @ w[i, j]
                out[n, r, c] = acc
    if spec.leaky_slope is not None:
        out = np.where(out >= 0, out, spec.leaky_slope * out)
    return out


# ---------------------------------------------------------------- shapes


def test_same_pad_matches_definition():
    assert L.same_pad(3000, 7, 2) == (1500, 2, 3)
    assert L.same_pad(375, 3, 1) == (375, 1, 1)
    assert L.same_pad(4, 1, 1) == (4, 0, 0)


@given(n=st.integers(1, 400), k=st.integers(1, 9), s=st.integers(1, 4))
def test_same_pad_properties(n, k, s):
    out, before, after = L.same_pad(n, k, s)
    assert out == math.ceil(n / s)
    total = before + after
    assert total == max((out - 1) * s + k - n, 0)
    assert before == total // 2


@given(n=st.integers(1, 200), k=st.integers(1, 9), s=st.integers(1, 4))
def test_transpose_lengths_invert_conv(n, k, s):
    assert L.conv_transpose_out_len(n, k, s, "same") == n * s
    assert L.conv_out_len(n * s, k, s, "same") == n
    assert L.conv_transpose_out_len(n, k, s, "valid") == (n - 1) * s + k
    assert L.conv_out_len((n - 1) * s + k, k, s, "valid") == n


def test_table_row_shapes():
    x = np.zeros((1, 4, 3000, 1))
    p = {"weight": np.zeros((1, 7, 1, 64)), "bias": np.zeros(64)}
    y, _ = L.conv2d_forward(x, p, ConvSpec(64, (1, 7), (1, 2)))
    assert y.shape == (1, 4, 1500, 64)
    x = np.zeros((1, 1, 2, 3))
    p = {"weight": np.zeros((17, 1, 3, 5)), "bias": np.zeros(5)}
    y, _ = L.conv_transpose2d_forward(x, p, ConvSpec(5, (17, 1), padding="valid"))
    assert y.shape[1] == 17
    x = np.zeros((1, 1, 375, 2))
    p = {"weight": np.zeros((1, 3, 2, 2)), "bias": np.zeros(2)}
    y, _ = L.conv_transpose2d_forward(x, p, ConvSpec(2, (1, 3), (1, 2)))
    assert y.shape[2] == 750


# ---------------------------------------------------------------- forward oracles


def test_conv_identity_kernel():
    x = np.random.default_rng(0).normal(size=(2, 3, 5, 1))
    p = {"weight": np.ones((1, 1, 1, 1)), "bias": np.zeros(1)}
    y, _ = L.conv2d_forward(x, p, ConvSpec(1, (1, 1), leaky_slope=None))
    np.testing.assert_array_equal(y, x)
    y, _ = L.conv_transpose2d_forward(x, p, ConvSpec(1, (1, 1), leaky_slope=None))
    np.testing.assert_array_equal(y, x)


def test_conv_hand_example():
    x = np.array([1.0, 2, 3, 4]).reshape(1, 1, 4, 1)
    p = {"weight": np.array([1.0, 0, -1]).reshape(1, 3, 1, 1), "bias": np.zeros(1)}
    y, _ = L.conv2d_forward(x, p, ConvSpec(1, (1, 3), padding="valid", leaky_slope=None))
    np.testing.assert_array_equal(y.ravel(), [-2.0, -2.0])


@pytest.mark.parametrize("kernel,stride,padding", [
    ((3, 7), (1, 2), "same"), ((1, 5), (1, 2), "same"), ((4, 1), (1, 1), "valid"),
    ((2, 3), (2, 3), "same"), ((3, 3), (2, 2), "valid"), ((1, 1), (1, 1), "same"),
])
def test_conv_matches_naive_loops(kernel, stride, padding):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 5, 11, 3))
    spec = ConvSpec(4, kernel, stride, padding)
    p = init_params(spec, 3, 2)
    p["bias"] = rng.normal(size=4)
    y, _ = L.conv2d_forward(x, p, spec)
    np.testing.assert_allclose(y, naive_conv2d(x, p["weight"], p["bias"], spec), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("kernel,stride,padding,shape", [
    ((1, 3), (1, 2), "same", (6, 12)), ((1, 7), (1, 2), "same", (3, 20)), ((3, 5), (2, 1), "same", (8, 9)),
    ((4, 1), (1, 1), "valid", (7, 5)), ((3, 3), (2, 2), "valid", (7, 9)), ((2, 4), (3, 1), "same", (9, 4)),
])
def test_conv_transpose_is_adjoint_of_conv(kernel, stride, padding, shape):
    # <conv(x), y> == <x, conv_transpose(y)> with the weight's feature axes swapped
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, *shape, 3))
    spec = ConvSpec(4, kernel, stride, padding, leaky_slope=None)
    w = rng.normal(size=(*kernel, 3, 4))
    cx, _ = L.conv2d_forward(x, {"weight": w, "bias": np.zeros(4)}, spec)
    y = rng.normal(size=cx.shape)
    tspec = ConvSpec(3, kernel, stride, padding, leaky_slope=None)
    ty, _ = L.conv_transpose2d_forward(y, {"weight": w.transpose(0, 1, 3, 2).copy(), "bias": np.zeros(3)}, tspec)
    assert ty.shape == x.shape
    assert math.isclose(np.sum(cx * y), np.sum(x * ty), rel_tol=1e-12)


def test_leaky_relu_values():
    out = L.leaky_relu(np.array([2.0, -2.0, 0.0]), 0.2)
    np.testing.assert_array_equal(out, [2.0, -0.4, 0.0])
    with pytest.raises(ValueError):
        L.leaky_relu(np.zeros(2), 1.5)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50), st.floats(0.01, 0.99))
def test_leaky_relu_elementwise(xs, slope):
    x = np.array(xs)
    y = L.leaky_relu(x, slope)
    np.testing.assert_array_equal(y, np.where(x >= 0, x, slope * x))


def test_shape_error_names_both_shapes():
    x = np.zeros((1, 4, 10, 2))
    p = {"weight": np.zeros((1, 3, 5, 4)), "bias": np.zeros(4)}
    with pytest.raises(ShapeError) as exc:
        L.conv2d_forward(x, p, ConvSpec(4, (1, 3)))
    assert exc.value.got == (1, 3, 5, 4) and exc.value.expected == (1, 3, 2, 4)


# ---------------------------------------------------------------- BiLSTM


def test_bilstm_zero_params_zero_output():
    p = {k: np.zeros_like(v) for k, v in init_bilstm(3, 5, 0).items()}
    y, _ = L.bilstm_forward(np.random.default_rng(0).normal(size=(6, 3)), p, 5)
    assert y.shape == (6, 10)
    np.testing.assert_array_equal(y, 0.0)


def test_bilstm_width_and_reverse_symmetry():
    rng = np.random.default_rng(4)
    p = init_bilstm(3, 4, 1)
    p_swapped = {**{f"fw{k[2:]}": v for k, v in p.items() if k.startswith("bw")},
                 **{f"bw{k[2:]}": v for k, v in p.items() if k.startswith("fw")}}
    seq = rng.normal(size=(7, 3))
    y, _ = L.bilstm_forward(seq, p, 4)
    yr, _ = L.bilstm_forward(seq[::-1].copy(), p_swapped, 4)
    # each direction now sees exactly what the other saw before
    np.testing.assert_allclose(yr[:, :4], y[::-1, 4:], rtol=0, atol=1e-14)
    np.testing.assert_allclose(yr[:, 4:], y[::-1, :4], rtol=0, atol=1e-14)


def test_bilstm_reverse_swaps_halves_with_shared_weights():
    rng = np.random.default_rng(5)
    p = init_bilstm(3, 2, 2)
    p.update({k.replace("fw", "bw"): v.copy() for k, v in p.items() if k.startswith("fw")})
    seq = rng.normal(size=(5, 3))
    y, _ = L.bilstm_forward(seq, p, 2)
    yr, _ = L.bilstm_forward(seq[::-1].copy(), p, 2)
    np.testing.assert_allclose(yr[:, :2], y[::-1, 2:], atol=1e-14)
    np.testing.assert_allclose(yr[:, 2:], y[::-1, :2], atol=1e-14)


def test_lstm_matches_scalar_reference():
    rng = np.random.default_rng(6)
    d, h, t = 2, 3, 4
    p = init_bilstm(d, h, 3)
    seq = rng.normal(size=(t, d))
    y, _ = L.bilstm_forward(seq, p, h)
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    hs, cs = [0.0] * h, [0.0] * h
    for step in range(t):
        a = [sum(seq[step, k] * p["fw_wx"][k, j] for k in range(d))
             + sum(hs[k] * p["fw_wh"][k, j] for k in range(h)) + p["fw_b"][j] for j in range(4 * h)]
        new_c = [sig(a[h + u]) * cs[u] + sig(a[u]) * math.tanh(a[2 * h + u]) for u in range(h)]
        hs = [sig(a[3 * h + u]) * math.tanh(new_c[u]) for u in range(h)]
        cs = new_c
        np.testing.assert_allclose(y[step, :h], hs, rtol=1e-12)


# ---------------------------------------------------------------- gradients


def _conv_case(kind, spec, x_shape, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=x_shape)
    p = init_params(spec, x_shape[-1], seed, transpose=kind == "conv_transpose2d")
    p["bias"] = rng.normal(size=spec.filters) * 0.1
    return x, p


GRAD_CASES = [
    ("conv2d", ConvSpec(3, (1, 7), (1, 2)), (1, 2, 13, 2)),
    ("conv2d", ConvSpec(3, (3, 5), (1, 2), leaky_slope=None), (2, 4, 9, 2)),
    ("conv2d", ConvSpec(2, (4, 1), padding="valid"), (1, 4, 6, 3)),
    ("conv_transpose2d", ConvSpec(3, (17, 1), padding="valid"), (1, 1, 4, 2)),
    ("conv_transpose2d", ConvSpec(2, (1, 3), (1, 2)), (1, 2, 5, 3)),
    ("conv_transpose2d", ConvSpec(2, (1, 7), (1, 2), leaky_slope=None), (2, 1, 4, 2)),
]


def _away_from_kink(kind, spec, x, p):
    # resample until no pre-activation sits within 1e-3 of zero
    fwd = L.conv2d_forward if kind == "conv2d" else L.conv_transpose2d_forward
    return spec.leaky_slope is None or np.abs(fwd(x, p, spec)[1].data["z"]).min() > 1e-3


@pytest.mark.parametrize("kind,spec,shape", GRAD_CASES)
def test_conv_gradients_finite_difference(kind, spec, shape):
    for seed in range(50):
        x, p = _conv_case(kind, spec, shape, seed)
        if _away_from_kink(kind, spec, x, p):
            break
    fn, arrays = layer_fragment(kind, x, p, spec, seed=seed)
    assert grad_check(fn, arrays) < 1e-4


def test_leaky_relu_gradient():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(1, 2, 5, 3))
    x[np.abs(x) < 1e-2] = 0.5
    fn, arrays = layer_fragment("leaky_relu", x, {}, 0.2)
    assert grad_check(fn, arrays) < 1e-4


def test_bilstm_gradient_small():
    x = np.random.default_rng(8).normal(size=(4, 3))
    fn, arrays = layer_fragment("bilstm", x, init_bilstm(3, 2, 9), hidden=2)
    assert grad_check(fn, arrays) < 1e-4


def test_linear_fragment_nearly_exact():
    rng = np.random.default_rng(10)
    spec = ConvSpec(2, (2, 3), leaky_slope=None)
    fn, arrays = layer_fragment("conv2d", rng.normal(size=(1, 3, 6, 2)), init_params(spec, 2, 1), spec)
    assert grad_check(fn, arrays) < 1e-8


@pytest.mark.parametrize("kind,spec,shape", GRAD_CASES[:2] + GRAD_CASES[3:5])
def test_backward_is_linear_in_upstream(kind, spec, shape):
    x, p = _conv_case(kind, spec, shape, 0)
    fwd = L.conv2d_forward if kind == "conv2d" else L.conv_transpose2d_forward
    y, cache = fwd(x, p, spec)
    up = np.random.default_rng(1).normal(size=y.shape)
    dx0, g0 = L.layer_backward(kind, cache, np.zeros_like(y))
    assert not dx0.any() and not any(v.any() for v in g0.values())
    dx1, g1 = L.layer_backward(kind, cache, up)
    dx3, g3 = L.layer_backward(kind, cache, 3.0 * up)
    np.testing.assert_allclose(dx3, 3.0 * dx1, rtol=1e-12, atol=1e-14)
    for k in g1:
        np.testing.assert_allclose(g3[k], 3.0 * g1[k], rtol=1e-12, atol=1e-14)


def test_layer_backward_rejects_stale_cache():
    spec = ConvSpec(2, (1, 3))
    x, p = _conv_case("conv2d", spec, (1, 1, 6, 2), 0)
    y, cache = L.conv2d_forward(x, p, spec)
    with pytest.raises(CacheError):
        L.layer_backward("conv_transpose2d", cache, y)
    with pytest.raises(ShapeError):
        L.layer_backward("conv2d", cache, np.zeros((1, 1, 5, 2)))


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-9, 0.0) == pytest.approx(0.1)


# ---------------------------------------------------------------- init


def test_init_deterministic_and_seeded():
    spec = ConvSpec(8, (3, 5))
    a, b, c = init_params(spec, 4, 11), init_params(spec, 4, 11), init_params(spec, 4, 12)
    np.testing.assert_array_equal(a["weight"], b["weight"])
    assert not np.array_equal(a["weight"], c["weight"])
    assert not a["bias"].any()


def test_init_sample_std():
    spec = ConvSpec(100, (1, 5))
    w = init_params(spec, 20, 0)["weight"]
    assert w.size == 10000
    target = math.sqrt(2.0 / conv_fan_in(spec, 20))
    assert abs(w.std() - target) < 0.1 * target


def test_init_lstm_forget_bias():
    p = init_bilstm(3, 4, 0)
    for d in ("fw", "bw"):
        np.testing.assert_array_equal(p[f"{d}_b"], np.r_[np.zeros(4), np.ones(4), np.zeros(8)])


def test_transpose_fan_in():
    assert conv_fan_in(ConvSpec(1, (1, 7), (1, 2)), 10, transpose=True) == 40
    assert conv_fan_in(ConvSpec(1, (17, 1), padding="valid"), 10, transpose=True) == 170


# ---------------------------------------------------------------- Adam


def test_adam_zero_gradient_is_noop():
    p = {"w": np.array([1.0, -2.0])}
    s = AdamState.for_params(p)
    adam_step(p, {"w": np.zeros(2)}, s)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])
    assert s.t == 1


def test_adam_first_step_is_sign():
    p = {"w": np.array([0.5, 0.5, 0.5]), "u": np.zeros(3)}
    s = AdamState.for_params(p, lr=1e-3)
    g = np.array([3.0, -0.2, 7.0])
    adam_step(p, {"w": g, "u": 2 * g}, s)
    np.testing.assert_allclose(p["w"] - 0.5, -1e-3 * np.sign(g), atol=1e-3 * 1e-6)
    np.testing.assert_allclose(np.abs(p["u"]), np.abs(p["w"] - 0.5), rtol=1e-6)


def test_adam_matches_closed_form_recursion():
    rng = np.random.default_rng(0)
    w0 = rng.normal(size=5)
    p = {"w": w0.copy()}
    s = AdamState.for_params(p, lr=0.01)
    m = v = np.zeros(5)
    w = w0.copy()
    for t in range(1, 6):
        g = rng.normal(size=5)
        adam_step(p, {"w": g}, s)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p["w"], w, rtol=1e-12)


@settings(max_examples=30)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8), st.integers(1, 5))
def test_adam_lr_zero_fixed_point(gs, steps):
    w = np.linspace(-1, 1, len(gs))
    p = {"w": w.copy()}
    s = AdamState.for_params(p, lr=0.0)
    for _ in range(steps):
        adam_step(p, {"w": np.array(gs)}, s)
    np.testing.assert_array_equal(p["w"], w)
    assert (s.v["w"] >= 0).all()


def test_adam_shape_mismatch():
    p = {"w": np.zeros(3)}
    with pytest.raises(ShapeError):
        adam_step(p, {"w": np.zeros(4)}, AdamState.for_params(p))
