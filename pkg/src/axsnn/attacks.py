"""Adversarial attacks crafted against the accurate SNN.

PGD and BIM operate on pixel images in [0, 1] under an l-infinity budget.
Frame and sparse attacks operate on event streams.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import EventStream, bin_index, rasterize, raster_to_input, input_to_raster
from .snn import Network, predict
from .train import input_gradient, input_spike_gradient

ATTACKS = ("PGD", "BIM", "Sparse", "Frame")


class AttackError(RuntimeError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "PGD"
    epsilon: float = 0.1
    alpha: float | None = None  # defaults to epsilon / 4
    n_iter: int = 10
    seed: int = 0
    k: int = 10  # sparse attack: cells toggled per iteration
    bins: int = 16  # event attacks: raster bins over the window
    window: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in ATTACKS:
            raise ValueError(f"unknown attack {self.kind!r}; expected one of {ATTACKS}")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("step size must be positive")
        if self.n_iter < 0 or self.k < 1 or self.bins < 1:
            raise ValueError("n_iter >= 0, k >= 1 and bins >= 1 required")

    @property
    def step(self) -> float:
        return self.epsilon / 4 if self.alpha is None else self.alpha


def project(x, img, eps):
    """Project onto the eps-ball around ``img`` intersected with [0, 1].

    The result satisfies ``abs(x - img) <= eps`` when evaluated in floating
    point, not just in exact arithmetic.
    """
    x = np.clip(x, img - eps, img + eps)
    while True:
        over = (x - img) > eps
        under = (img - x) > eps
        if not (over.any() or under.any()):
            break
        x = np.where(over, np.nextafter(x, -np.inf), x)
        x = np.where(under, np.nextafter(x, np.inf), x)
    return np.clip(x, 0.0, 1.0)


def _gradient_attack(net, img, label, cfg: AttackConfig, random_start: bool, **grad_kw):
    img = np.asarray(img, dtype=np.float64)
    eps = float(cfg.epsilon)
    if random_start:
        rng = np.random.default_rng(cfg.seed)
        x = project(img + rng.uniform(-eps, eps, img.shape), img, eps)
    else:
        x = img.copy()
    if eps == 0:
        return img.copy()
    for it in range(cfg.n_iter):
        g = input_gradient(net, x, label, seed=cfg.seed + it, **grad_kw)
        x = project(x + cfg.step * np.sign(g), img, eps)
    return x


def pgd(net_acc: Network, img, label, cfg: AttackConfig, **grad_kw):
    """l-inf PGD with a uniform random start. ``img`` may be a batch."""
    return _gradient_attack(net_acc, img, label, cfg, True, **grad_kw)


def bim(net_acc: Network, img, label, cfg: AttackConfig, **grad_kw):
    """PGD without the random start."""
    return _gradient_attack(net_acc, img, label, cfg, False, **grad_kw)


# --- event attacks -------------------------------------------------------------


def default_window(stream: EventStream):
    if len(stream) == 0:
        return (0.0, 1.0)
    return (0.0, float(stream.t[-1]) + 1.0)


def boundary_pixels(H: int, W: int):
    """Sensor border pixels in row-major order as ``(x, y)`` arrays."""
    ys, xs = np.mgrid[0:H, 0:W]
    edge = (xs == 0) | (xs == W - 1) | (ys == 0) | (ys == H - 1)
    return xs[edge], ys[edge]


def frame_attack(stream: EventStream, cfg: AttackConfig, return_mask: bool = False):
    """Inject one event per polarity at every border pixel in every time bin.

    Injected events sit at bin centres; within a bin all polarity-0 events
    precede polarity-1 events. With ``return_mask`` also returns a boolean
    array marking injected events in the output.
    """
    H, W = stream.sensor_dims
    t0, t1 = cfg.window or default_window(stream)
    bx, by = boundary_pixels(H, W)
    centres = t0 + (np.arange(cfg.bins) + 0.5) * (t1 - t0) / cfg.bins
    n_b = len(bx)
    x = np.tile(np.concatenate([bx, bx]), cfg.bins)
    y = np.tile(np.concatenate([by, by]), cfg.bins)
    p = np.tile(np.repeat([0, 1], n_b), cfg.bins)
    t = np.repeat(centres, 2 * n_b)
    injected = EventStream(x, y, p, t, stream.sensor_dims)
    merged = stream.merge(injected)
    if not return_mask:
        return merged
    flags = np.concatenate([np.zeros(len(stream), bool), np.ones(len(injected), bool)])
    order = np.argsort(np.concatenate([stream.t, injected.t]), kind="stable")
    return merged, flags[order]


def stream_input(stream: EventStream, bins: int, window) -> np.ndarray:
    return raster_to_input(rasterize(stream, bins, window)).astype(np.float64)


def sparse_attack(net_acc: Network, stream: EventStream, label: int, cfg: AttackConfig, **grad_kw):
    """Greedy loss-guided toggling of raster cells.

    Each iteration flips up to ``k`` cells with the largest loss gradient
    magnitude among those whose flip increases the loss: empty cells with a
    positive gradient receive an event at the bin centre, occupied cells with a
    negative gradient lose their events. A cell is flipped at most once.
    Stops as soon as the prediction differs from ``label``.
    """
    if cfg.n_iter == 0:
        return stream
    window = cfg.window or default_window(stream)
    t0, t1 = window
    H, W = stream.sensor_dims
    raster = rasterize(stream, cfg.bins, window).astype(bool)
    original = raster.copy()
    touched = np.zeros_like(raster)
    for it in range(cfg.n_iter):
        x = raster_to_input(raster.astype(np.uint8)).astype(np.float64)
        if predict(net_acc, x) != label:
            break
        _, g = input_spike_gradient(net_acc, x, [label], **grad_kw)
        if it == 0 and not np.any(g):
            raise AttackError("loss gradient is identically zero; is the network trained?")
        g = input_to_raster(g, (H, W))
        gain = np.where(raster, -g, g)
        gain[touched] = 0.0
        flat = gain.ravel()
        cand = np.flatnonzero(flat > 0)
        if cand.size == 0:
            break
        top = cand[np.argsort(-flat[cand], kind="stable")[: cfg.k]]
        cells = np.unravel_index(top, raster.shape)
        raster[cells] = ~raster[cells]
        touched[cells] = True
    return _apply_raster(stream, original, raster, cfg.bins, window)


def _apply_raster(stream, original, raster, bins, window):
    """Rebuild a stream whose raster equals ``raster``."""
    t0, t1 = window
    keep = np.ones(len(stream), bool)
    removed = original & ~raster
    if len(stream) and removed.any():
        b = bin_index(stream.t, bins, window)
        keep = ~removed[stream.p, b, stream.y, stream.x]
    added = np.argwhere(raster & ~original)  # (p, bin, y, x)
    centres = t0 + (added[:, 1] + 0.5) * (t1 - t0) / bins
    order = np.argsort(centres, kind="stable")
    added, centres = added[order], centres[order]
    extra = EventStream(added[:, 3], added[:, 2], added[:, 0], centres, stream.sensor_dims)
    return stream.select(keep).merge(extra)
