"""Input encodings, event streams and file formats.

Static images are rate encoded with a counter-based generator so that the
spike at ``(t, n)`` depends only on ``(seed, t, n)`` and the pixel value.
Event streams are column arrays ``x, y, p, t`` on an ``(H, W)`` sensor.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EVENT_MAGIC = b"AXEV"
EVENT_VERSION = 1
IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


class ParseError(ValueError):
    pass


# --- rate coding -------------------------------------------------------------


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def counter_uniform(seed: int, t: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Uniform [0, 1) draws keyed by ``(seed, t, n)``; broadcasting ``t`` and ``n``."""
    with np.errstate(over="ignore"):
        key = _splitmix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0]
        t = np.asarray(t, dtype=np.uint64)
        n = np.asarray(n, dtype=np.uint64)
        z = _splitmix64(key ^ _splitmix64(t * np.uint64(0xD1B54A32D192ED03) + n))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def derive_seed(seed: int, index: int) -> int:
    """Stable per-item seed, e.g. one per test sample."""
    with np.errstate(over="ignore"):
        z = _splitmix64(np.array([(seed * 0x2545F4914F6CDD1D + index) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    return int(z[0])


def check_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(img)) or img.min(initial=0.0) < 0 or img.max(initial=0.0) > 1:
        raise ValueError("image pixels must lie in [0, 1]")
    return img


def rate_encode(img, T: int, seed: int) -> np.ndarray:
    """Bernoulli rate code: ``(T, H*W)`` uint8 spikes, one possible spike per step."""
    if T < 1:
        raise ValueError("T must be >= 1")
    p = check_image(img).ravel()
    u = counter_uniform(seed, np.arange(T)[:, None], np.arange(p.size)[None, :])
    return (u < p).astype(np.uint8)


def rate_encode_batch(images, T: int, seed: int) -> np.ndarray:
    """Encode ``(B, ...)`` images; sample ``i`` uses ``derive_seed(seed, i)``."""
    images = np.asarray(images, dtype=np.float64)
    return np.stack([rate_encode(img, T, derive_seed(seed, i)) for i, img in enumerate(images)])


# --- events ------------------------------------------------------------------


@dataclass(frozen=True)
class EventStream:
    """Events sorted by timestamp; equal timestamps keep their input order."""

    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    t: np.ndarray
    sensor_dims: tuple[int, int] = (128, 128)

    def __post_init__(self):
        H, W = (int(d) for d in self.sensor_dims)
        x = np.asarray(self.x, dtype=np.int64).ravel()
        y = np.asarray(self.y, dtype=np.int64).ravel()
        p = np.asarray(self.p, dtype=np.int64).ravel()
        t = np.asarray(self.t, dtype=np.float64).ravel()
        if not (len(x) == len(y) == len(p) == len(t)):
            raise ValueError("event columns differ in length")
        if len(t):
            if x.min() < 0 or x.max() >= W or y.min() < 0 or y.max() >= H:
                raise ValueError(f"event coordinates outside sensor {H}x{W}")
            if not np.all((p == 0) | (p == 1)):
                raise ValueError("polarity must be 0 or 1")
            if not np.all(np.isfinite(t)) or t.min() < 0:
                raise ValueError("timestamps must be finite and non-negative")
            if np.any(np.diff(t) < 0):
                raise ValueError("events are not sorted by timestamp")
        for arr in (x, y, p, t):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "sensor_dims", (H, W))

    @classmethod
    def from_records(cls, records, sensor_dims=(128, 128)) -> "EventStream":
        """Build from ``(x, y, p, t)`` tuples, stably sorting by timestamp."""
        arr = np.array(list(records), dtype=np.float64).reshape(-1, 4)
        order = np.argsort(arr[:, 3], kind="stable")
        arr = arr[order]
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], sensor_dims)

    @classmethod
    def empty(cls, sensor_dims=(128, 128)) -> "EventStream":
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0), sensor_dims)

    def __len__(self):
        return len(self.t)

    def records(self) -> list[tuple[int, int, int, float]]:
        return [(int(a), int(b), int(c), float(d)) for a, b, c, d in zip(self.x, self.y, self.p, self.t)]

    def select(self, keep) -> "EventStream":
        keep = np.asarray(keep)
        return EventStream(self.x[keep], self.y[keep], self.p[keep], self.t[keep], self.sensor_dims)

    def with_timestamps(self, t) -> "EventStream":
        return EventStream(self.x, self.y, self.p, t, self.sensor_dims)

    def merge(self, other: "EventStream") -> "EventStream":
        """Stable merge by timestamp; on ties events of ``self`` come first."""
        if other.sensor_dims != self.sensor_dims:
            raise ValueError("sensor dimensions differ")
        t = np.concatenate([self.t, other.t])
        order = np.argsort(t, kind="stable")
        cat = lambda a, b: np.concatenate([a, b])[order]  # noqa: E731
        return EventStream(cat(self.x, other.x), cat(self.y, other.y), cat(self.p, other.p), t[order], self.sensor_dims)


def bin_index(t, T: int, window) -> np.ndarray:
    t0, t1 = window
    if not t1 > t0:
        raise ValueError(f"empty rasterization window {window}")
    b = np.floor((np.asarray(t, dtype=np.float64) - t0) / (t1 - t0) * T).astype(np.int64)
    return np.clip(b, 0, T - 1)


def rasterize(stream: EventStream, T: int, window) -> np.ndarray:
    """Binary occupancy raster of shape ``(2, T, H, W)``, indexed by polarity.

    Events before ``t0`` or after ``t1`` are clamped into the first/last bin.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    t0, t1 = window
    if not t1 > t0:
        raise ValueError(f"empty rasterization window {window}")
    H, W = stream.sensor_dims
    out = np.zeros((2, T, H, W), dtype=np.uint8)
    if len(stream):
        b = bin_index(stream.t, T, window)
        out[stream.p, b, stream.y, stream.x] = 1
    return out


def raster_to_input(raster: np.ndarray) -> np.ndarray:
    """``(2, T, H, W)`` raster -> ``(T, 2*H*W)`` spike tensor for a dense SNN."""
    two, T, H, W = raster.shape
    return raster.transpose(1, 0, 2, 3).reshape(T, two * H * W)


def input_to_raster(x: np.ndarray, sensor_dims) -> np.ndarray:
    H, W = sensor_dims
    T = x.shape[0]
    return x.reshape(T, 2, H, W).transpose(1, 0, 2, 3)


# --- IDX ---------------------------------------------------------------------


def _parse_idx(data: bytes, expected_magic: int, name: str):
    if len(data) < 4:
        raise ParseError(f"{name}: truncated header at offset 0")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != expected_magic:
        raise ParseError(f"{name}: bad magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    hdr = 4 + 4 * ndim
    if len(data) < hdr:
        raise ParseError(f"{name}: truncated dimension header at offset 4")
    dims = struct.unpack(f">{ndim}I", data[4:hdr])
    size = int(np.prod(dims))
    if len(data) < hdr + size:
        raise ParseError(f"{name}: truncated payload at offset {len(data)}, expected {hdr + size} bytes")
    if len(data) > hdr + size:
        raise ParseError(f"{name}: trailing bytes at offset {hdr + size}")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=hdr).reshape(dims)


def load_idx(images_path, labels_path):
    """Read an IDX image/label pair into ``(images in [0,1], labels)``."""
    images = _parse_idx(Path(images_path).read_bytes(), IDX_IMAGES, str(images_path))
    labels = _parse_idx(Path(labels_path).read_bytes(), IDX_LABELS, str(labels_path))
    if len(images) != len(labels):
        raise ParseError(f"{len(images)} images but {len(labels)} labels")
    return images.astype(np.float64) / 255.0, labels.astype(np.int64)


def save_idx(images, labels, images_path, labels_path):
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.rint(check_image(images) * 255).astype(np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, h, w = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES, n, h, w) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS, len(labels)) + labels.tobytes())


# --- AXEV --------------------------------------------------------------------

_EVENT_DTYPE = np.dtype([("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("t", "<f8")])
_EVENT_HEADER = struct.Struct("<4sIHHQ")


def events_to_bytes(stream: EventStream) -> bytes:
    H, W = stream.sensor_dims
    rec = np.empty(len(stream), dtype=_EVENT_DTYPE)
    rec["x"], rec["y"], rec["p"], rec["t"] = stream.x, stream.y, stream.p, stream.t
    return _EVENT_HEADER.pack(EVENT_MAGIC, EVENT_VERSION, H, W, len(stream)) + rec.tobytes()


def events_from_bytes(data: bytes) -> EventStream:
    if len(data) < _EVENT_HEADER.size:
        raise ParseError(f"truncated event header at offset {len(data)}")
    magic, version, H, W, count = _EVENT_HEADER.unpack_from(data)
    if magic != EVENT_MAGIC:
        raise ParseError(f"bad magic {magic!r} at offset 0, expected {EVENT_MAGIC!r}")
    if version != EVENT_VERSION:
        raise ParseError(f"unsupported event format version {version} at offset 4")
    need = _EVENT_HEADER.size + count * _EVENT_DTYPE.itemsize
    if len(data) < need:
        raise ParseError(f"truncated event records at offset {len(data)}, expected {need} bytes")
    if len(data) > need:
        raise ParseError(f"trailing bytes at offset {need}")
    rec = np.frombuffer(data, dtype=_EVENT_DTYPE, count=count, offset=_EVENT_HEADER.size)
    for k, name, bound in (("x", "x", W), ("y", "y", H)):
        bad = np.flatnonzero(rec[k] >= bound)
        if bad.size:
            off = _EVENT_HEADER.size + bad[0] * _EVENT_DTYPE.itemsize
            raise ParseError(f"event {bad[0]} at offset {off}: {name}={rec[k][bad[0]]} outside sensor {H}x{W}")
    bad = np.flatnonzero(rec["p"] > 1)
    if bad.size:
        off = _EVENT_HEADER.size + bad[0] * _EVENT_DTYPE.itemsize
        raise ParseError(f"event {bad[0]} at offset {off}: polarity {rec['p'][bad[0]]} not in {{0, 1}}")
    t = rec["t"]
    bad = np.flatnonzero(~np.isfinite(t) | (t < 0))
    if bad.size == 0 and count > 1:
        bad = np.flatnonzero(np.diff(t) < 0) + 1
    if bad.size:
        off = _EVENT_HEADER.size + bad[0] * _EVENT_DTYPE.itemsize
        raise ParseError(f"event {bad[0]} at offset {off}: invalid or unsorted timestamp {t[bad[0]]}")
    return EventStream(rec["x"], rec["y"], rec["p"], t, (H, W))


def save_events(stream: EventStream, path):
    Path(path).write_bytes(events_to_bytes(stream))


def load_events(path) -> EventStream:
    return events_from_bytes(Path(path).read_bytes())


# --- synthetic data ----------------------------------------------------------

GESTURES = ("left_sweep", "right_sweep", "circle", "up_sweep")


def _gesture_path(class_id: int, s: np.ndarray, H: int, W: int, margin: float):
    """Object centre at path parameter ``s`` in [0, 1]."""
    cx, cy = (W - 1) / 2, (H - 1) / 2
    span_x, span_y = (W - 1) / 2 - margin, (H - 1) / 2 - margin
    kind = GESTURES[class_id % len(GESTURES)]
    if kind == "left_sweep":
        return cx + span_x * (1 - 2 * s), cy + 0.3 * span_y * np.sin(np.pi * s)
    if kind == "right_sweep":
        return cx - span_x * (1 - 2 * s), cy - 0.3 * span_y * np.sin(np.pi * s)
    if kind == "circle":
        r = 0.35 * min(span_x, span_y)
        return cx + r * np.cos(2 * np.pi * s), cy + r * np.sin(2 * np.pi * s)
    return cx + 0.3 * span_x * np.sin(np.pi * s), cy + span_y * (1 - 2 * s)


def synth_gesture(class_id: int, n_events: int, seed: int, sensor_dims=(128, 128),
                  dt: float = 10.0, jitter: float = 0.6, margin: int = 4) -> EventStream:
    """A moving blob tracing a class-dependent path, one event per tick of ``dt``.

    Classes cycle through left sweep, right sweep, circle and upward sweep.
    Polarity is 1 on the leading edge of the motion and 0 on the trailing edge.
    """
    H, W = sensor_dims
    if n_events <= 0:
        return EventStream.empty(sensor_dims)
    rng = np.random.default_rng(seed)
    s = np.linspace(0.0, 1.0, n_events)
    px, py = _gesture_path(class_id, s, H, W, margin)
    vx, vy = np.gradient(px), np.gradient(py)
    ox, oy = rng.normal(0.0, jitter, n_events), rng.normal(0.0, jitter, n_events)
    x = np.clip(np.rint(px + ox), 0, W - 1)
    y = np.clip(np.rint(py + oy), 0, H - 1)
    p = (ox * vx + oy * vy >= 0).astype(np.int64)
    t = np.sort(np.arange(n_events) * dt + rng.uniform(0.0, 0.5 * dt, n_events))
    return EventStream(x, y, p, t, (H, W))


def synth_images(n: int, n_classes: int = 4, size: int = 8, seed: int = 0,
                 noise: float = 0.15, split: int = 0):
    """Noisy copies of random class prototypes on a ``size x size`` grid.

    Prototypes depend on ``seed`` only; ``split`` selects an independent
    sample draw, so train and test splits share prototypes.
    """
    proto_rng = np.random.default_rng([seed, 0])
    protos = (proto_rng.random((n_classes, size, size)) < 0.35).astype(np.float64)
    rng = np.random.default_rng([seed, 1, split])
    labels = rng.integers(0, n_classes, n)
    images = protos[labels] * rng.uniform(0.7, 1.0, (n, size, size))
    images = np.clip(images + rng.normal(0.0, noise, images.shape), 0.0, 1.0)
    return images, labels
