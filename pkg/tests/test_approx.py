import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from axsnn.approx import (
    AxNetwork, CalibrationError, LayerApproxStats, approximate, axnetwork_from_bytes, axnetwork_to_bytes,
    build_axsnn, calibrate, compute_ath, layer_stats, prune_cutoff, sort_weights,
)
from axsnn.codec import rate_encode_batch
from axsnn.snn import FormatError, forward, init_network


def stats(c=4, ns=2.0, p=0.5, wsum=0.8, n=1):
    return LayerApproxStats(c, np.full(n, ns), np.full(n, wsum), np.full(n, p))


def calib(net, n=16, seed=0):
    imgs = np.random.default_rng(seed).random((n, net.n_inputs))
    return rate_encode_batch(imgs, net.time_steps, seed).astype(float)


@pytest.mark.parametrize("w,expected", [([], []), ([3, 1, 2], [1, 2, 3])])
def test_sort_weights(w, expected):
    assert list(sort_weights(w)) == expected


def test_sort_weights_is_stable():
    w = np.array([2.0, -0.0, 1.0, 0.0])
    order = np.argsort(w, kind="stable")
    assert list(order) == [1, 3, 2, 0]
    assert np.array_equal(np.signbit(sort_weights(w)[:2]), [True, False])


def test_ath_worked_example():
    per, layer = compute_ath(stats(), 8, 1.0)
    assert abs(per[0] - 0.4) <= 1e-12 and abs(layer - 0.4) <= 1e-12


def test_ath_dead_layer_is_zero():
    per, layer = compute_ath(stats(ns=0.0), 8)
    assert per[0] == 0.0 and layer == 0.0
    assert prune_cutoff(stats(ns=0.0), 8, 0.1) == 0.0


def test_ath_probability_cap():
    per, _ = compute_ath(stats(p=1.0), 8)
    assert per[0] == (4 * 2 / 8) * 0.8


def test_layer_stats_caps_membrane_ratio():
    net = init_network([5, 3], 6, v_th=0.5, seed=1, gain=4.0)
    _, traces = forward(net, calib(net))
    st_ = layer_stats(net.weights[0], traces[0], 0.5)
    assert np.all((st_.spike_prob >= 0) & (st_.spike_prob <= 1))
    assert st_.c == 5


def test_missing_calibration_raises():
    with pytest.raises(CalibrationError):
        compute_ath(None, 8)
    with pytest.raises(CalibrationError):
        layer_stats(np.ones((2, 2)), None, 1.0)


def test_invalid_stats_rejected():
    with pytest.raises(ValueError):
        stats(c=0)
    with pytest.raises(ValueError):
        stats(p=1.5)


@given(st.floats(0.01, 100))
def test_ath_linear_in_weights(lam):
    net = init_network([6, 4], 5, seed=2)
    _, traces = forward(net, calib(net))
    base = layer_stats(net.weights[0], traces[0], 1.0)
    scaled = layer_stats(lam * net.weights[0], traces[0], 1.0)
    a, _ = compute_ath(base, 5)
    b, _ = compute_ath(scaled, 5)
    np.testing.assert_allclose(b, lam * a, rtol=1e-12, atol=1e-300)


def test_negative_level_rejected():
    net = init_network([4, 3], 4, seed=0)
    with pytest.raises(ValueError):
        build_axsnn(net, net.weights, calib(net), -0.1)


def test_level_zero_is_identity():
    net = init_network([8, 6, 3], 6, seed=3)
    x = calib(net, seed=5)
    ax = build_axsnn(net, net.weights, x, 0.0)
    assert all(m.all() for m in ax.masks)
    np.testing.assert_array_equal(ax.forward(x)[0], forward(net, x)[0])


def test_fully_pruned_gives_zero_logits():
    net = init_network([4, 3], 4, seed=0)
    st_ = [LayerApproxStats(4, np.full(3, 4.0), np.ones(3), np.ones(3))]
    ax = approximate(net, net.weights, st_, 1e6)
    assert not any(m.any() for m in ax.masks)
    assert np.all(ax.forward(calib(net))[0] == 0)


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_monotone_and_zero_contribution(seed):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(2, 10)), int(rng.integers(2, 8)), int(rng.integers(2, 5))]
    net = init_network(sizes, int(rng.integers(2, 8)), v_th=float(rng.uniform(0.25, 2.0)), seed=seed, gain=2.0)
    x = calib(net, 8, seed)
    stats_ = calibrate(net, x)
    prev = None
    for lvl in (0.0, 0.001, 0.01, 0.1, 1.0, 10.0):
        ax = approximate(net, net.weights, stats_, lvl)
        if prev is not None:
            assert all(np.all(p >= m) for p, m in zip(prev, ax.masks))
        prev = ax.masks
        np.testing.assert_array_equal(ax.forward(x)[0], forward(ax.as_network(), x)[0])


def test_pruned_fraction_and_records():
    net = init_network([8, 5, 3], 6, seed=4, gain=2.0)
    ax = build_axsnn(net, net.weights, calib(net), 1.0)
    assert len(ax.a_th) == 2 and len(ax.cutoffs) == 2
    assert all(0 <= f <= 1 for f in ax.pruned_fraction)


def test_mask_shape_checked():
    net = init_network([4, 3], 4, seed=0)
    with pytest.raises(ValueError):
        AxNetwork(net, (np.ones((3, 4), bool),), (0.0,), 0.0)


def test_serialization_round_trip():
    net = init_network([9, 5, 3], 6, seed=4, gain=2.0)
    ax = build_axsnn(net, net.weights, calib(net), 1.0)
    back = axnetwork_from_bytes(axnetwork_to_bytes(ax))
    assert back.a_lvl == ax.a_lvl and back.a_th == ax.a_th
    for a, b in zip(back.masks, ax.masks):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(back.base.weights, ax.base.weights):
        np.testing.assert_array_equal(a, b)


def test_serialization_truncated():
    net = init_network([9, 5, 3], 6, seed=4)
    data = axnetwork_to_bytes(build_axsnn(net, net.weights, calib(net), 0.1))
    with pytest.raises(FormatError, match="offset"):
        axnetwork_from_bytes(data[:-1])
