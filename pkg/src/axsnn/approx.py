"""Approximation threshold and connection pruning for approximate SNNs.

For every layer, the threshold is evaluated per output neuron ``n`` as::

    a_th[n] = (c * N_s[n] / T) * min(1, V_m[n] / v_th) * sum_i w^p[i, n]

with ``c`` the fan-in, ``N_s`` the mean spike count per calibration sample,
``V_m`` the mean pre-reset membrane and ``w^p`` the precision-scaled weights.
The layer threshold is the mean over neurons. To prune in weight units the
layer threshold is divided by ``c * mean(N_s) / T`` and multiplied by the
user-facing level ``a_lvl``; connections with ``|w^p|`` below that cutoff are
removed.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .snn import LayerTrace, Network, _read_network, _write_network, forward, mean_membrane, FormatError

APPROX_LEVELS = (0.0, 0.001, 0.01, 0.1, 1.0)
MASK_MAGIC = b"AXMK"
MASK_VERSION = 1


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LayerApproxStats:
    c: int
    spike_count: np.ndarray  # N_s per neuron
    weight_sum: np.ndarray  # m_l^c per neuron
    spike_prob: np.ndarray

    def __post_init__(self):
        if self.c < 1:
            raise ValueError("fan-in c must be >= 1")
        if np.any(np.asarray(self.spike_count) < 0):
            raise ValueError("spike counts must be non-negative")
        p = np.asarray(self.spike_prob)
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("spike probabilities must lie in [0, 1]")


def sort_weights(w) -> np.ndarray:
    """Stable ascending order of the flattened weights."""
    w = np.asarray(w).ravel()
    return w[np.argsort(w, kind="stable")]


def layer_stats(weights_p, trace: LayerTrace | None, v_th: float) -> LayerApproxStats:
    if trace is None:
        raise CalibrationError("no calibration trace; run a calibration forward pass first")
    w = np.asarray(weights_p, dtype=np.float64)
    counts = np.asarray(trace.spike_count, dtype=np.float64)
    counts = counts.reshape(-1, counts.shape[-1]).mean(axis=0)
    prob = np.clip(mean_membrane(trace) / v_th, 0.0, 1.0)
    return LayerApproxStats(w.shape[0], counts, w.sum(axis=0), prob)


def compute_ath(stats: LayerApproxStats | None, T: int, v_th: float | None = None):
    """Per-neuron thresholds and their layer mean.

    ``v_th`` is accepted for symmetry with the formula; the probability term
    is already stored in ``stats``.
    """
    if stats is None:
        raise CalibrationError("no calibration statistics; run a calibration forward pass first")
    if T < 1:
        raise ValueError("T must be >= 1")
    per_neuron = (stats.c * np.asarray(stats.spike_count, dtype=np.float64) / T) \
        * np.asarray(stats.spike_prob, dtype=np.float64) * np.asarray(stats.weight_sum, dtype=np.float64)
    return per_neuron, float(np.mean(per_neuron))


def prune_cutoff(stats: LayerApproxStats, T: int, a_lvl: float) -> float:
    """Weight-magnitude cutoff for one layer at approximation level ``a_lvl``."""
    if a_lvl < 0:
        raise ValueError(f"approximation level must be >= 0, got {a_lvl}")
    _, layer_ath = compute_ath(stats, T)
    rate = stats.c * float(np.mean(stats.spike_count)) / T
    if a_lvl == 0 or rate == 0:
        return 0.0
    return a_lvl * abs(layer_ath) / rate


@dataclass(frozen=True)
class AxNetwork:
    base: Network
    masks: tuple[np.ndarray, ...]
    a_th: tuple[float, ...]
    a_lvl: float
    cutoffs: tuple[float, ...] = ()

    def __post_init__(self):
        masks = tuple(np.asarray(m, dtype=bool) for m in self.masks)
        for m, w in zip(masks, self.base.weights):
            if m.shape != w.shape:
                raise ValueError(f"mask shape {m.shape} differs from weight shape {w.shape}")
        if len(masks) != len(self.base.layers):
            raise ValueError("one mask per layer required")
        object.__setattr__(self, "masks", masks)

    @property
    def pruned_fraction(self) -> list[float]:
        return [1.0 - float(m.mean()) for m in self.masks]

    def forward(self, input_spikes):
        return forward(self.base, input_spikes, masks=self.masks)

    def as_network(self) -> Network:
        """Plain network with pruned weights set to zero."""
        return self.base.with_weights([np.where(m, w, 0.0) for w, m in zip(self.base.weights, self.masks)])


def approximate(net: Network, weights_p, stats, a_lvl: float) -> AxNetwork:
    """Prune ``|w^p| < cutoff`` per layer. ``a_lvl = 0`` keeps every connection."""
    if a_lvl < 0:
        raise ValueError(f"approximation level must be >= 0, got {a_lvl}")
    weights_p = [np.asarray(w, dtype=np.float64) for w in weights_p]
    masks, aths, cutoffs = [], [], []
    for w, st in zip(weights_p, stats):
        cut = prune_cutoff(st, net.time_steps, a_lvl)
        masks.append(np.abs(w) >= cut)
        aths.append(compute_ath(st, net.time_steps)[1])
        cutoffs.append(cut)
    return AxNetwork(net.with_weights(weights_p), tuple(masks), tuple(aths), float(a_lvl), tuple(cutoffs))


def calibrate(net: Network, calib_spikes):
    """Per-layer stats from a forward pass over a calibration batch ``(B, T, n)``."""
    _, traces = forward(net, calib_spikes)
    return [layer_stats(w, tr, layer.params.v_th) for w, tr, layer in zip(net.weights, traces, net.layers)]


def build_axsnn(net: Network, weights_p, calib_spikes, a_lvl: float) -> AxNetwork:
    """Calibrate the precision-scaled network, then prune at ``a_lvl``."""
    scaled = net.with_weights(weights_p)
    return approximate(scaled, weights_p, calibrate(scaled, calib_spikes), a_lvl)


def axnetwork_to_bytes(ax: AxNetwork) -> bytes:
    buf = io.BytesIO()
    _write_network(buf, ax.base)
    buf.write(MASK_MAGIC)
    buf.write(struct.pack("<IId", MASK_VERSION, len(ax.masks), ax.a_lvl))
    for m, a in zip(ax.masks, ax.a_th):
        rows, cols = m.shape
        buf.write(struct.pack("<IId", rows, cols, a))
        buf.write(np.packbits(m.ravel(), bitorder="little").tobytes())
    return buf.getvalue()


def axnetwork_from_bytes(data: bytes) -> AxNetwork:
    fh = io.BytesIO(data)
    base = _read_network(fh)
    off = fh.tell()
    if fh.read(4) != MASK_MAGIC:
        raise FormatError(f"missing mask section magic at offset {off}")
    hdr = fh.read(16)
    if len(hdr) != 16:
        raise FormatError(f"truncated mask header at offset {off + 4}")
    version, n, a_lvl = struct.unpack("<IId", hdr)
    if version != MASK_VERSION or n != len(base.layers):
        raise FormatError(f"bad mask section header at offset {off + 4}")
    masks, aths = [], []
    for k in range(n):
        off = fh.tell()
        h = fh.read(16)
        if len(h) != 16:
            raise FormatError(f"truncated mask {k} header at offset {off}")
        rows, cols, a = struct.unpack("<IId", h)
        nbytes = (rows * cols + 7) // 8
        raw = fh.read(nbytes)
        if len(raw) != nbytes:
            raise FormatError(f"truncated mask {k} at offset {off + 16}")
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[: rows * cols]
        masks.append(bits.reshape(rows, cols).astype(bool))
        aths.append(a)
    return AxNetwork(base, tuple(masks), tuple(aths), a_lvl)
