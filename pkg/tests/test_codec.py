import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from axsnn.codec import (
    EventStream, ParseError, counter_uniform, events_from_bytes, events_to_bytes, load_events,
    load_idx, rasterize, rate_encode, save_events, save_idx, synth_gesture, synth_images,
)


def test_rate_encode_extremes():
    img = np.array([[0.0, 1.0]])
    s = rate_encode(img, 50, seed=1)
    assert s.shape == (50, 2) and s.dtype == np.uint8
    assert s[:, 0].sum() == 0 and s[:, 1].sum() == 50


def test_rate_encode_law_of_large_numbers():
    s = rate_encode(np.array([0.5]), 10000, seed=12345)
    assert abs(s.mean() - 0.5) < 0.02


def test_rate_encode_is_keyed_by_seed_step_and_neuron():
    small = rate_encode(np.full((1, 3), 0.5), 4, seed=9)
    large = rate_encode(np.full((2, 5), 0.5), 10, seed=9)
    np.testing.assert_array_equal(small, large[:4, :3])
    assert not np.array_equal(rate_encode(np.full(64, 0.5), 8, 1), rate_encode(np.full(64, 0.5), 8, 2))


def test_rate_encode_unbiased_over_seeds():
    pixels = np.array([0.05, 0.3, 0.5, 0.8])
    n = 2000
    mean = np.mean([rate_encode(pixels, 1, seed) for seed in range(n)], axis=0)[0]
    sigma = np.sqrt(pixels * (1 - pixels) / n)
    assert np.all(np.abs(mean - pixels) <= 3 * sigma)


def test_counter_uniform_range():
    u = counter_uniform(0, np.arange(100)[:, None], np.arange(100)[None, :])
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01


def test_rate_encode_rejects_out_of_range():
    with pytest.raises(ValueError):
        rate_encode(np.array([1.2]), 3, 0)
    with pytest.raises(ValueError):
        rate_encode(np.array([0.2]), 0, 0)


def test_rasterize_examples():
    empty = EventStream.empty((4, 5))
    assert rasterize(empty, 3, (0, 10)).sum() == 0
    one = EventStream.from_records([(2, 1, 1, 0.0)], (4, 5))
    r = rasterize(one, 3, (0.0, 10.0))
    assert r.shape == (2, 3, 4, 5) and r[1, 0, 1, 2] == 1 and r.sum() == 1
    two = EventStream.from_records([(0, 0, 0, 0.0), (0, 0, 0, 10.0 - 1e-9)], (4, 5))
    r = rasterize(two, 2, (0.0, 10.0))
    assert r[0, 0, 0, 0] == 1 and r[0, 1, 0, 0] == 1
    with pytest.raises(ValueError):
        rasterize(one, 3, (5.0, 5.0))


@st.composite
def streams(draw, max_events=50, dims=(16, 16)):
    H, W = dims
    n = draw(st.integers(0, max_events))
    xs = draw(st.lists(st.integers(0, W - 1), min_size=n, max_size=n))
    ys = draw(st.lists(st.integers(0, H - 1), min_size=n, max_size=n))
    ps = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    ts = sorted(draw(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=n, max_size=n)))
    return EventStream(xs, ys, ps, ts, dims)


@given(streams(), st.integers(1, 8))
def test_rasterize_never_drops_in_window_events(stream, T):
    window = (0.0, 1e6 + 1)
    r = rasterize(stream, T, window)
    assert (r.sum() >= 1) == (len(stream) >= 1)
    assert r.sum() <= len(stream)


@given(streams())
def test_event_file_round_trip(stream):
    back = events_from_bytes(events_to_bytes(stream))
    assert back.sensor_dims == stream.sensor_dims
    assert back.records() == stream.records()


def test_event_file_layout_and_errors(tmp_path):
    s = EventStream.from_records([(3, 2, 1, 7.5)], (4, 6))
    raw = events_to_bytes(s)
    assert raw[:4] == b"AXEV"
    assert struct.unpack("<IHHQ", raw[4:20]) == (1, 4, 6, 1)
    assert struct.unpack("<HHBd", raw[20:]) == (3, 2, 1, 7.5)
    save_events(s, tmp_path / "e.axev")
    assert load_events(tmp_path / "e.axev").records() == s.records()
    with pytest.raises(ParseError, match="magic"):
        events_from_bytes(b"NOPE" + raw[4:])
    with pytest.raises(ParseError, match="truncated"):
        events_from_bytes(raw[:-1])
    bad = bytearray(raw)
    bad[20:22] = struct.pack("<H", 6)  # x == W
    with pytest.raises(ParseError, match="offset 20"):
        events_from_bytes(bytes(bad))


def test_event_stream_invariants():
    with pytest.raises(ValueError):
        EventStream([0, 0], [0, 0], [0, 0], [5.0, 1.0], (2, 2))
    with pytest.raises(ValueError):
        EventStream([2], [0], [0], [1.0], (2, 2))
    s = EventStream.from_records([(0, 0, 0, 5.0), (1, 1, 1, 1.0), (1, 0, 0, 5.0)], (2, 2))
    assert s.records() == [(1, 1, 1, 1.0), (0, 0, 0, 5.0), (1, 0, 0, 5.0)]


def test_idx_round_trip_and_scaling(tmp_path):
    imgs = np.full((2, 28, 28), 255, dtype=np.uint8)
    imgs[1] = 0
    save_idx(imgs, [3, 7], tmp_path / "i.idx", tmp_path / "l.idx")
    x, y = load_idx(tmp_path / "i.idx", tmp_path / "l.idx")
    assert x.shape == (2, 28, 28) and np.all(x[0] == 1.0) and np.all(x[1] == 0.0)
    np.testing.assert_array_equal(y, [3, 7])
    raw = (tmp_path / "i.idx").read_bytes()
    assert raw[:4] == bytes.fromhex("00000803")


def test_idx_errors(tmp_path):
    save_idx(np.zeros((1, 2, 2), np.uint8), [1], tmp_path / "i.idx", tmp_path / "l.idx")
    raw = (tmp_path / "i.idx").read_bytes()
    (tmp_path / "bad.idx").write_bytes(bytes.fromhex("00000801") + raw[4:])
    with pytest.raises(ParseError, match="magic"):
        load_idx(tmp_path / "bad.idx", tmp_path / "l.idx")
    (tmp_path / "short.idx").write_bytes(raw[:-1])
    with pytest.raises(ParseError, match="truncated"):
        load_idx(tmp_path / "short.idx", tmp_path / "l.idx")


def test_synth_gesture_basic_contracts():
    assert len(synth_gesture(0, 0, 1)) == 0
    a, b = synth_gesture(2, 80, 5), synth_gesture(2, 80, 5)
    assert a.records() == b.records()
    assert len(a) == 80 and a.sensor_dims == (128, 128)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_synth_gesture_directions(seed):
    def mean_vx(stream):
        return np.polyfit(stream.t, stream.x, 1)[0]

    left = synth_gesture(0, 100, seed)
    right = synth_gesture(1, 100, seed)
    assert mean_vx(left) < 0 < mean_vx(right)


def test_synth_images_splits_share_prototypes():
    a, ya = synth_images(50, 3, 8, seed=4, split=0)
    b, yb = synth_images(50, 3, 8, seed=4, split=1)
    assert a.shape == (50, 8, 8) and a.min() >= 0 and a.max() <= 1
    assert not np.array_equal(a, b)
    ca = np.array([a[ya == k].mean(0) for k in range(3)])
    cb = np.array([b[yb == k].mean(0) for k in range(3)])
    assert np.abs(ca - cb).mean() < 0.1
