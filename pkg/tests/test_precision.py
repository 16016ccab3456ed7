import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from axsnn.precision import (
    SCHEMES, QuantScheme, fp16_half_ulp, int8_scale, precision_scale, quant_error_bound, quantize_int8,
    scale_network,
)
from axsnn.snn import init_network

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
layers = arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=finite)


@pytest.mark.parametrize("kind", SCHEMES)
def test_zero_maps_to_zero(kind):
    assert np.all(precision_scale(np.zeros((3, 2)), kind) == 0)


def test_int8_worked_example():
    w = np.array([[1.27, 0.507], [-0.3, 0.0]])
    scheme = QuantScheme.fit(w, "INT8")
    assert scheme.scale == pytest.approx(0.01, rel=1e-15)
    assert quantize_int8(w, scheme)[0, 1] == 51
    assert precision_scale(w, scheme)[0, 1] == pytest.approx(0.51, rel=1e-15)


def test_all_zero_layer_scale_is_one():
    assert int8_scale(np.zeros(5)) == 1.0


def test_fp16_exact_values():
    assert quant_error_bound(np.array([1.0, 0.5, -2.0]), "FP16") == 0.0


def test_fp16_overflow_raises():
    with pytest.raises(OverflowError):
        precision_scale(np.array([1e6]), "FP16")


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        precision_scale(np.array([np.nan]), "INT8")


def test_bad_scheme_rejected():
    with pytest.raises(ValueError):
        QuantScheme("INT4")
    with pytest.raises(ValueError):
        QuantScheme("INT8", scale=0.0)


def test_int8_bound_on_random_layer():
    w = np.random.default_rng(0).uniform(-1.27, 1.27, (64, 64))
    w[0, 0] = 1.27
    assert quant_error_bound(w, "INT8") <= 0.005 + 1e-15


@given(layers)
def test_fp32_is_identity(w):
    out = precision_scale(w, "FP32")
    assert np.array_equal(out, w) and out is not w


@given(layers, st.sampled_from(SCHEMES))
def test_idempotent(w, kind):
    once = precision_scale(w, kind)
    assert np.array_equal(precision_scale(once, kind), once)


@given(layers, st.sampled_from(SCHEMES))
def test_order_preserved(w, kind):
    flat = w.ravel()
    out = precision_scale(w, kind).ravel()
    order = np.argsort(flat, kind="stable")
    assert np.all(np.diff(out[order]) >= 0)


@given(layers)
def test_int8_error_within_half_scale(w):
    s = int8_scale(w)
    err = np.abs(w - precision_scale(w, "INT8"))
    # a few ulps of slack for w / s and q * s rounding
    assert np.all(err <= s / 2 * (1 + 1e-12) + 4 * np.spacing(np.abs(w) + s))


@given(layers)
def test_fp16_error_within_half_ulp(w):
    err = np.abs(w - precision_scale(w, "FP16"))
    assert np.all(err <= fp16_half_ulp(w) * (1 + 1e-12))


def test_scale_network_per_layer():
    net = init_network([6, 4, 3], 4, seed=0)
    scaled, schemes = scale_network(net, "INT8")
    assert [s.kind for s in schemes] == ["INT8", "INT8"]
    for w, s, ws in zip(net.weights, schemes, scaled.weights):
        assert s.scale == int8_scale(w)
        np.testing.assert_array_equal(ws, precision_scale(w, s))
