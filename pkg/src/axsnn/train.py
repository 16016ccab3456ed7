"""Surrogate-gradient BPTT for dense LIF networks.

Two spike nonlinearities are supported:

* ``"boxcar"`` -- Heaviside forward, ``max(0, 1 - k|v - v_th|)`` backward,
  reset treated as a constant in the backward pass. Used for training and
  attacks. ``k=None`` picks ``0.25 / v_th`` per layer, which keeps the
  surrogate window proportional to the threshold.
* ``"sigmoid"`` -- ``sigmoid(k (v - v_th))`` in *both* passes with a soft
  reset ``v (1 - s)``, so the returned gradient is the exact derivative of the
  forward map. Used to check the BPTT code against finite differences.

The loss is softmax cross-entropy on the output spike counts.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .codec import derive_seed, rate_encode_batch
from .snn import Network, _as_batch, _effective_weights, predict, save_network, load_network

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 0.005
    surrogate_slope: float | None = None
    seed: int = 0
    quality: float = 90.0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.quality <= 100:
            raise ValueError("quality constraint must lie in [0, 100]")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


def _slope(k, params):
    return 0.25 / params.v_th if k is None else k


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _run(weights, net: Network, x, mode: str, k: float):
    """Forward pass that keeps what the backward pass needs."""
    B, T, _ = x.shape
    cache = []
    s_in = x
    for w, layer in zip(weights, net.layers):
        p = layer.params
        current = s_in @ w
        v_pre_all = np.empty_like(current)
        s_all = np.empty_like(current)
        v = np.zeros((B, w.shape[1]))
        for t in range(T):
            v_pre = p.beta * v + current[:, t]
            if mode == "sigmoid":
                s = _sigmoid(_slope(k, p) * (v_pre - p.v_th))
            else:
                s = (v_pre >= p.v_th).astype(np.float64)
            v_pre_all[:, t] = v_pre
            s_all[:, t] = s
            v = v_pre * (1.0 - s)
        cache.append((s_in, v_pre_all, s_all))
        s_in = s_all
    return s_in.sum(axis=1), cache


def _softmax_xent(logits, labels):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    prob = e / e.sum(axis=1, keepdims=True)
    n = len(labels)
    loss = -np.log(np.maximum(prob[np.arange(n), labels], 1e-300))
    grad = prob.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad


def _backward(weights, net: Network, cache, g_logits, mode: str, k: float, need_weights=True):
    """Backprop ``dL/dlogits`` to (weight grads, input-spike grads)."""
    grads = [None] * len(weights)
    T = cache[0][0].shape[1]
    g_s = np.repeat(g_logits[:, None, :], T, axis=1)
    for li in range(len(weights) - 1, -1, -1):
        w = weights[li]
        p = net.layers[li].params
        s_in, v_pre_all, s_all = cache[li]
        g_cur = np.empty_like(v_pre_all)
        g_v = np.zeros_like(v_pre_all[:, 0])
        kk = _slope(k, p)
        for t in range(T - 1, -1, -1):
            v_pre = v_pre_all[:, t]
            s = s_all[:, t]
            if mode == "sigmoid":
                ds = kk * s * (1.0 - s)
                g_pre = g_s[:, t] * ds + g_v * ((1.0 - s) - v_pre * ds)
            else:
                ds = np.maximum(0.0, 1.0 - kk * np.abs(v_pre - p.v_th))
                g_pre = g_s[:, t] * ds + g_v * (1.0 - s)
            g_cur[:, t] = g_pre
            g_v = p.beta * g_pre
        if need_weights:
            grads[li] = np.einsum("bti,bto->io", s_in, g_cur)
        g_s = g_cur @ w.T
    return grads, g_s


def loss_and_grads(net: Network, spikes, labels, mode="boxcar", k=None, masks=None):
    """Mean loss, per-layer weight gradients and input gradients for a batch."""
    x, single = _as_batch(spikes, net)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    weights = _effective_weights(net, masks)
    logits, cache = _run(weights, net, x, mode, k)
    loss, g = _softmax_xent(logits, labels)
    n = len(labels)
    wg, xg = _backward(weights, net, cache, g / n, mode, k)
    return loss.mean(), wg, (xg[0] if single else xg)


def input_spike_gradient(net: Network, spikes, labels, mode="boxcar", k=None, masks=None):
    """Per-sample ``dL_i/dx_i`` for an input spike tensor (or batch)."""
    x, single = _as_batch(spikes, net)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    weights = _effective_weights(net, masks)
    logits, cache = _run(weights, net, x, mode, k)
    loss, g = _softmax_xent(logits, labels)
    _, xg = _backward(weights, net, cache, g, mode, k, need_weights=False)
    return (loss[0], xg[0]) if single else (loss, xg)


def expected_input(images, T: int) -> np.ndarray:
    """Deterministic encoding: every step carries the pixel intensity itself."""
    images = np.asarray(images, dtype=np.float64)
    flat = images.reshape(images.shape[0], -1)
    return np.repeat(flat[:, None, :], T, axis=1)


def encode_images(images, T: int, seed: int, encoding: str = "bernoulli"):
    if encoding == "expected":
        return expected_input(images, T)
    return rate_encode_batch(images, T, seed).astype(np.float64)


def input_gradient(net: Network, img, label, T=None, seed=0, *, mode="boxcar", k=None,
                   encoding="bernoulli", masks=None):
    """Gradient of the loss with respect to pixel intensities.

    The encoder is treated as identity in expectation, so the pixel gradient
    is the time-sum of the input-spike gradient. ``img`` may be a single image
    or a batch ``(B, ...)`` with ``label`` an array; seeds derive per sample.
    """
    T = net.time_steps if T is None else T
    img = np.asarray(img, dtype=np.float64)
    single = img.shape == tuple(net.input_dims) or img.ndim == 1
    batch = img[None] if single else img
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    x = encode_images(batch, T, seed, encoding)
    _, xg = input_spike_gradient(net, x, labels, mode, k, masks)
    g = xg.sum(axis=1).reshape(batch.shape)
    return g[0] if single else g


def accuracy(net: Network, images, labels, seed=0, masks=None, encoding="bernoulli") -> float:
    """Percent of samples classified correctly under seeded rate encoding."""
    x = encode_images(images, net.time_steps, seed, encoding)
    return 100.0 * float(np.mean(predict(net, x, masks) == np.asarray(labels)))


def check_quality(acc: float, Q: float) -> bool:
    return acc >= Q


def train_accurate(net: Network, images, labels, cfg: TrainConfig, test=None, spikes=None):
    """Minibatch SGD with BPTT. Returns ``(trained net, accuracy in percent)``.

    ``images`` are rate encoded afresh every epoch (seeded). Pass ``spikes``
    instead to train on fixed spike tensors, e.g. rasterized event streams.
    Accuracy is measured on ``test = (images, labels)`` when given, else on the
    training data.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if n == 0:
        raise TrainingError("empty training set")
    weights = [w.copy() for w in net.weights]
    rng = np.random.default_rng(cfg.seed)
    T = net.time_steps
    for epoch in range(cfg.epochs):
        if spikes is None:
            x_all = rate_encode_batch(images, T, derive_seed(cfg.seed, epoch + 1)).astype(np.float64)
        else:
            x_all = np.asarray(spikes, dtype=np.float64)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            cur = net.with_weights(weights)
            loss, grads, _ = loss_and_grads(cur, x_all[idx], labels[idx], "boxcar", cfg.surrogate_slope)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingError(f"loss diverged at epoch {epoch}")
            for w, g in zip(weights, grads):
                w -= cfg.lr * g
            losses.append(loss)
        log.debug("epoch %d loss %.4f", epoch, float(np.mean(losses)))
    trained = net.with_weights(weights)
    return trained, evaluate(trained, images, labels, cfg, test, spikes)


def evaluate(net, images, labels, cfg: TrainConfig, test=None, spikes=None) -> float:
    if test is not None:
        t_data, t_labels = test
        if spikes is not None:
            return 100.0 * float(np.mean(predict(net, t_data) == np.asarray(t_labels)))
        return accuracy(net, t_data, t_labels, seed=cfg.seed)
    if spikes is not None:
        return 100.0 * float(np.mean(predict(net, spikes) == labels))
    return accuracy(net, images, labels, seed=cfg.seed)


def save_checkpoint(net: Network, path, cfg: TrainConfig, acc: float, **extra):
    """Weights in the AXSN format plus a JSON sidecar at ``<path>.json``."""
    path = Path(path)
    save_network(net, path)
    meta = {"config": asdict(cfg), "accuracy": acc, **extra}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_checkpoint(path):
    path = Path(path)
    net = load_network(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    return net, meta
