"""Approximate quantized filter for event streams.

Each event first has its timestamp quantized to the step ``q_t``. It then
stamps its timestamp into the ``(2s+1)^2 - 1`` neighbouring cells of the
last-seen grid ``M`` and bumps their activity counters; any of those cells
whose activity exceeds ``T1`` is flagged as hot by writing ``1`` into ``M``.
Finally the event is dropped if its own cell is hot or if its own cell was
last stamped more than ``T2`` ago. Dropped events still update the state.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import EventStream

HOT = 1.0


@dataclass(frozen=True)
class AqfParams:
    q_t: float = 0.0
    s: int = 2
    T1: int = 5
    T2: float = 50.0

    def __post_init__(self):
        if self.q_t < 0:
            raise ValueError("q_t must be >= 0")
        if self.s < 1:
            raise ValueError("spatial radius s must be >= 1")
        if self.T1 < 0:
            raise ValueError("T1 must be >= 0")
        if not self.T2 > 0:
            raise ValueError("T2 must be > 0")


def quantize_timestamps(t, q_t: float) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if q_t == 0:
        return t.copy()
    return np.round(t / q_t) * q_t


def aqf_mask(stream: EventStream, params: AqfParams = AqfParams()):
    """Keep-mask over the input events and their quantized timestamps."""
    H, W = stream.sensor_dims
    s = params.s
    tq = quantize_timestamps(stream.t, params.q_t)
    M = np.zeros((W, H))
    activity = np.zeros((W, H), dtype=np.int64)
    keep = np.ones(len(stream), dtype=bool)
    for k, (x, y, t) in enumerate(zip(stream.x.tolist(), stream.y.tolist(), tq.tolist())):
        i0, i1 = max(x - s, 0), min(x + s + 1, W)
        j0, j1 = max(y - s, 0), min(y + s + 1, H)
        centre = M[x, y]
        M[i0:i1, j0:j1] = t
        M[x, y] = centre
        activity[i0:i1, j0:j1] += 1
        activity[x, y] -= 1
        win_a = activity[i0:i1, j0:j1]
        hot = win_a > params.T1
        hot[x - i0, y - j0] = False
        M[i0:i1, j0:j1][hot] = HOT
        m = M[x, y]
        if m == HOT or t - m > params.T2:
            keep[k] = False
    return keep, tq


def aqf_filter(stream: EventStream, params: AqfParams = AqfParams()) -> EventStream:
    """Filtered stream with quantized timestamps, in input order."""
    keep, tq = aqf_mask(stream, params)
    return stream.with_timestamps(tq).select(keep) if len(stream) else stream


def aqf_oracle(stream: EventStream, params: AqfParams = AqfParams()) -> EventStream:
    """Plain loop-by-loop transcription of the filter, for cross-checking."""
    H, W = stream.sensor_dims
    M = [[0.0 for _ in range(H)] for _ in range(W)]
    activity = [[0 for _ in range(H)] for _ in range(W)]
    kept = []
    for e in stream.records():
        x_e, y_e, p_e, t_e = e
        if params.q_t > 0:
            t_e = round(t_e / params.q_t) * params.q_t
        touched = []
        for i in range(x_e - params.s, x_e + params.s + 1):
            for j in range(y_e - params.s, y_e + params.s + 1):
                if i < 0 or j < 0 or i >= W or j >= H:
                    continue
                if not (i == x_e and j == y_e):
                    M[i][j] = t_e
                if not (i == x_e and j == y_e):
                    activity[i][j] += 1
                    touched.append((i, j))
        for i, j in touched:
            if activity[i][j] > params.T1:
                M[i][j] = 1
        if M[x_e][y_e] == 1 or t_e - M[x_e][y_e] > params.T2:
            continue
        kept.append((x_e, y_e, p_e, t_e))
    if not kept:
        return EventStream.empty(stream.sensor_dims)
    cols = list(zip(*kept))
    return EventStream(cols[0], cols[1], cols[2], cols[3], stream.sensor_dims)
