"""Weight precision scaling with quantize-dequantize semantics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCHEMES = ("INT8", "FP16", "FP32")
SCHEME_BITS = {"INT8": 8, "FP16": 16, "FP32": 32}


@dataclass(frozen=True)
class QuantScheme:
    kind: str
    scale: float = 1.0
    zero_point: int = 0

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown precision scheme {self.kind!r}; expected one of {SCHEMES}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not -128 <= self.zero_point <= 127:
            raise ValueError("zero point must fit in int8")

    @classmethod
    def fit(cls, weights, kind: str) -> "QuantScheme":
        """Per-layer scheme; INT8 gets a symmetric scale ``max|w| / 127``."""
        if kind != "INT8":
            return cls(kind)
        return cls(kind, int8_scale(weights))


def int8_scale(weights) -> float:
    w = np.asarray(weights, dtype=np.float64)
    m = float(np.max(np.abs(w), initial=0.0))
    if m == 0.0:
        return 1.0
    # Snap to a fixed point of s -> fl(fl(127 s) / 127) so that re-quantizing
    # the dequantized weights reproduces the same scale bit for bit.
    s = m / 127.0
    for _ in range(16):
        nxt = (127.0 * s) / 127.0
        if nxt == s:
            break
        s = nxt
    return s


def precision_scale(weights, scheme) -> np.ndarray:
    """Quantize then dequantize ``weights``; ``scheme`` is a QuantScheme or a kind name."""
    w = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if isinstance(scheme, str):
        scheme = QuantScheme.fit(w, scheme)
    if scheme.kind == "FP32":
        return w.copy()
    if scheme.kind == "FP16":
        with np.errstate(over="ignore"):
            h = w.astype(np.float16)
        if not np.all(np.isfinite(h)):
            raise OverflowError("weights exceed the binary16 range")
        return h.astype(np.float64)
    q = np.clip(np.rint(w / scheme.scale) + scheme.zero_point, -128, 127)
    return (q - scheme.zero_point) * scheme.scale


def quantize_int8(weights, scheme: QuantScheme) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    return np.clip(np.rint(w / scheme.scale) + scheme.zero_point, -128, 127).astype(np.int8)


def quant_error_bound(weights, scheme) -> float:
    """Largest absolute round-trip error ``max |w - w^p|``."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        return 0.0
    return float(np.max(np.abs(w - precision_scale(w, scheme))))


def fp16_half_ulp(w) -> np.ndarray:
    """Half the binary16 spacing at each value (subnormal spacing near 0)."""
    h = np.abs(np.asarray(w, dtype=np.float64)).astype(np.float16)
    return np.spacing(h).astype(np.float64) / 2


def scale_network(net, kind: str):
    """Precision-scale every layer; returns ``(net, per-layer schemes)``."""
    schemes = [QuantScheme.fit(w, kind) for w in net.weights]
    return net.with_weights([precision_scale(w, s) for w, s in zip(net.weights, schemes)]), schemes
