"""Discrete-time LIF neurons and layered dense spiking networks.

Inputs are spike tensors of shape ``(T, n_in)`` (or ``(B, T, n_in)`` for a
batch). Each layer integrates ``beta * v + s_prev @ W`` and emits a spike when
the pre-reset potential reaches ``v_th``; spiking neurons are reset to zero.
The readout is the spike count of the last layer over the ``T`` steps.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"AXSN"
FORMAT_VERSION = 1


class NumericalError(ArithmeticError):
    """Raised when a membrane update produces or receives non-finite values."""


class DimensionError(ValueError):
    pass


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class LifParams:
    v_th: float = 1.0
    beta: float = 0.95
    reset: str = "zero"

    def __post_init__(self):
        if not (np.isfinite(self.v_th) and self.v_th > 0):
            raise ValueError(f"v_th must be positive, got {self.v_th}")
        if not (0 < self.beta <= 1):
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.reset != "zero":
            raise ValueError(f"only hard reset to zero is supported, got {self.reset!r}")


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray  # (fan_in, fan_out)
    params: LifParams = field(default_factory=LifParams)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise DimensionError(f"layer weights must be 2-D, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise NumericalError("layer weights contain non-finite values")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]

    def with_weights(self, weights) -> "DenseLayer":
        return DenseLayer(weights, self.params)


@dataclass(frozen=True)
class Network:
    layers: tuple[DenseLayer, ...]
    time_steps: int
    input_dims: tuple[int, ...] = ()

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DimensionError("a network needs at least one layer")
        if int(self.time_steps) < 1:
            raise ValueError(f"time_steps must be >= 1, got {self.time_steps}")
        for a, b in zip(layers, layers[1:]):
            if a.fan_out != b.fan_in:
                raise DimensionError(
                    f"layer shapes do not compose: {a.weights.shape} -> {b.weights.shape}"
                )
        dims = tuple(int(d) for d in self.input_dims) or (layers[0].fan_in,)
        if int(np.prod(dims)) != layers[0].fan_in:
            raise DimensionError(f"input_dims {dims} do not match fan-in {layers[0].fan_in}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "time_steps", int(self.time_steps))
        object.__setattr__(self, "input_dims", dims)

    @property
    def n_inputs(self) -> int:
        return self.layers[0].fan_in

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].fan_out

    @property
    def weights(self) -> list[np.ndarray]:
        return [layer.weights for layer in self.layers]

    def with_weights(self, weights) -> "Network":
        layers = tuple(l.with_weights(w) for l, w in zip(self.layers, weights))
        return Network(layers, self.time_steps, self.input_dims)

    def with_params(self, v_th: float | None = None, beta: float | None = None) -> "Network":
        layers = []
        for l in self.layers:
            p = LifParams(
                v_th=l.params.v_th if v_th is None else v_th,
                beta=l.params.beta if beta is None else beta,
            )
            layers.append(DenseLayer(l.weights, p))
        return Network(tuple(layers), self.time_steps, self.input_dims)


def init_network(sizes, time_steps, v_th=1.0, beta=0.95, seed=0, input_dims=(), gain=1.0):
    """Random dense network with layer sizes ``sizes = [n_in, h1, ..., n_out]``.

    Weights are drawn uniformly with a fan-in scaled bound that grows with
    ``v_th`` so that freshly initialized networks spike at any threshold.
    """
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = gain * v_th * np.sqrt(3.0 / fan_in) * 2.0
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append(DenseLayer(w, LifParams(v_th=v_th, beta=beta)))
    return Network(tuple(layers), time_steps, input_dims)


@dataclass(frozen=True)
class LayerTrace:
    membrane: np.ndarray  # pre-reset potential, (T, n) or (B, T, n)
    spikes: np.ndarray  # uint8, same shape as membrane
    spike_count: np.ndarray  # (n,) or (B, n)


def lif_step(v, input_current, params: LifParams):
    """One LIF update. Returns ``(v_next, spike)``; works on scalars or arrays."""
    v = np.asarray(v, dtype=np.float64)
    i = np.asarray(input_current, dtype=np.float64)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(i))):
        raise NumericalError("non-finite membrane potential or input current")
    v_pre = params.beta * v + i
    spike = v_pre >= params.v_th
    v_next = np.where(spike, 0.0, v_pre)
    if v_next.ndim == 0:
        return float(v_next), int(spike)
    return v_next, spike.astype(np.uint8)


def _as_batch(input_spikes, net: Network):
    x = np.asarray(input_spikes, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3:
        raise DimensionError(f"input spikes must be (T, n) or (B, T, n), got shape {x.shape}")
    if x.shape[1] != net.time_steps or x.shape[2] != net.n_inputs:
        raise DimensionError(
            f"input shape {x.shape[1:]} does not match network (T={net.time_steps}, n={net.n_inputs})"
        )
    return x, single


def _effective_weights(net: Network, masks):
    if masks is None:
        return net.weights
    return [np.where(m, w, 0.0) for w, m in zip(net.weights, masks)]


def forward(net: Network, input_spikes, masks=None):
    """Run the network for ``T`` steps and return ``(logits, traces)``.

    ``logits`` are output spike counts. ``masks`` optionally gives one boolean
    keep-mask per layer; masked connections contribute nothing.
    """
    x, single = _as_batch(input_spikes, net)
    weights = _effective_weights(net, masks)
    B, T, _ = x.shape
    traces = []
    s_in = x
    for w, layer in zip(weights, net.layers):
        p = layer.params
        current = s_in @ w  # (B, T, n_out)
        if not np.all(np.isfinite(current)):
            raise NumericalError("non-finite synaptic current")
        mem = np.empty_like(current)
        spk = np.zeros(current.shape, dtype=np.uint8)
        v = np.zeros((B, w.shape[1]))
        for t in range(T):
            v_pre = p.beta * v + current[:, t]
            s = v_pre >= p.v_th
            mem[:, t] = v_pre
            spk[:, t] = s
            v = np.where(s, 0.0, v_pre)
        counts = spk.sum(axis=1, dtype=np.int64)
        traces.append(LayerTrace(mem, spk, counts))
        s_in = spk.astype(np.float64)
    logits = traces[-1].spike_count.astype(np.float64)
    if single:
        logits = logits[0]
        traces = [LayerTrace(tr.membrane[0], tr.spikes[0], tr.spike_count[0]) for tr in traces]
    return logits, traces


def predict(net: Network, input_spikes, masks=None):
    logits, _ = forward(net, input_spikes, masks)
    return np.argmax(logits, axis=-1)


def mean_membrane(trace: LayerTrace) -> np.ndarray:
    """Per-neuron pre-reset membrane averaged over time (and batch, if any)."""
    m = np.asarray(trace.membrane, dtype=np.float64)
    if m.size == 0:
        raise ValueError("empty trace")
    if not np.all(np.isfinite(m)):
        raise NumericalError("non-finite membrane trace")
    return m.reshape(-1, m.shape[-1]).mean(axis=0)


def spike_probability(trace: LayerTrace, params: LifParams) -> np.ndarray:
    """``min(1, mean V_m / v_th)`` per neuron, floored at 0."""
    return np.clip(mean_membrane(trace) / params.v_th, 0.0, 1.0)


# --- serialization -----------------------------------------------------------


def _write_network(fh, net: Network):
    fh.write(MAGIC)
    fh.write(struct.pack("<II", FORMAT_VERSION, len(net.layers)))
    for layer in net.layers:
        rows, cols = layer.weights.shape
        fh.write(struct.pack("<IIdd", rows, cols, layer.params.v_th, layer.params.beta))
        fh.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
    fh.write(struct.pack("<I", net.time_steps))


def _read_exact(fh, n, what):
    offset = fh.tell()
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file reading {what} at offset {offset}")
    return buf


def _read_network(fh) -> Network:
    magic = _read_exact(fh, 4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    version, n_layers = struct.unpack("<II", _read_exact(fh, 8, "header"))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version} at offset 4")
    layers = []
    for k in range(n_layers):
        rows, cols, v_th, beta = struct.unpack("<IIdd", _read_exact(fh, 24, f"layer {k} header"))
        raw = _read_exact(fh, 8 * rows * cols, f"layer {k} weights")
        w = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).astype(np.float64)
        layers.append(DenseLayer(w, LifParams(v_th=v_th, beta=beta)))
    (T,) = struct.unpack("<I", _read_exact(fh, 4, "time steps"))
    return Network(tuple(layers), T)


def network_to_bytes(net: Network) -> bytes:
    buf = io.BytesIO()
    _write_network(buf, net)
    return buf.getvalue()


def network_from_bytes(data: bytes) -> Network:
    return _read_network(io.BytesIO(data))


def save_network(net: Network, path):
    Path(path).write_bytes(network_to_bytes(net))


def load_network(path) -> Network:
    with open(path, "rb") as fh:
        return _read_network(fh)
