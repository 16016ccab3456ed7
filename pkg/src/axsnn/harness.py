"""Grid sweep over threshold, time steps, precision scheme and approximation level.

For every ``(v_th, T)`` point the accurate network is trained (or loaded from
the cache) and gated on the quality constraint. Adversarial examples are
crafted once per ``(attack, epsilon)`` against the accurate network and then
replayed against every precision-scaled, pruned variant. A sample counts as
a successful attack when the accurate network classified its clean version
correctly and the approximate network misclassifies the adversarial version.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import approx, attacks
from .aqf import AqfParams, aqf_filter
from .codec import derive_seed, rasterize, raster_to_input, synth_gesture, synth_images
from .precision import SCHEME_BITS, SCHEMES, precision_scale
from .snn import init_network, network_from_bytes, network_to_bytes, predict
from .train import TrainConfig, check_quality, encode_images, train_accurate

log = logging.getLogger(__name__)

FULL_V_TH = tuple(round(0.25 * i, 2) for i in range(1, 10))
FULL_T = tuple(range(32, 81, 8))
DESK_T = tuple(range(8, 25, 4))
NO_CONFIG = "no config met Q"


class QualityGateError(RuntimeError):
    pass


def robustness(adv_count: int, n: int) -> Fraction:
    """Percentage of samples the attack failed to flip, as an exact rational."""
    if n <= 0 or not 0 <= adv_count <= n:
        raise ValueError(f"need 0 <= adv <= n and n > 0, got adv={adv_count}, n={n}")
    return (1 - Fraction(adv_count, n)) * 100


@dataclass(frozen=True)
class SweepConfig:
    v_th: tuple[float, ...] = FULL_V_TH
    time_steps: tuple[int, ...] = DESK_T
    schemes: tuple[str, ...] = SCHEMES
    a_lvls: tuple[float, ...] = approx.APPROX_LEVELS
    epsilons: tuple[float, ...] = (1.0,)
    attacks: tuple[str, ...] = ("PGD", "BIM")
    quality: float = 90.0
    neuromorphic: bool = False
    aqf: AqfParams = field(default_factory=AqfParams)
    aqf_defense: bool = True
    seed: int = 0
    beta: float = 0.95
    hidden: int = 32
    epochs: int = 20
    lr: float = 0.005
    batch_size: int = 32
    n_train: int = 400
    n_test: int = 200
    n_classes: int = 4
    image_size: int = 8
    noise: float = 0.15
    sensor: int = 32
    n_events: int = 32
    calib_size: int = 64
    attack_iters: int = 10
    alpha: float | None = None
    sparse_k: int = 10
    workers: int = 1
    cache_dir: str | None = None

    def __post_init__(self):
        for name in ("v_th", "time_steps", "schemes", "a_lvls", "epsilons", "attacks"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} grid is empty")
        if min(self.epsilons) < 0:
            raise ValueError("epsilon must be >= 0")
        if self.neuromorphic and set(self.attacks) - {"Sparse", "Frame"}:
            raise ValueError("neuromorphic sweeps support only Sparse and Frame attacks")
        if not self.neuromorphic and set(self.attacks) - {"PGD", "BIM"}:
            raise ValueError("static sweeps support only PGD and BIM attacks")

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                           seed=self.seed, quality=self.quality)


@dataclass
class Row:
    v_th: float
    T: int
    scheme: str
    a_lvl: float
    a_th: list[float]
    attack: str
    epsilon: float
    clean_acc: float
    attacked_acc: float
    adv: int
    n: int
    ax_clean_acc: float = float("nan")
    pruned_fraction: list[float] = field(default_factory=list)
    adv_digest: str = ""
    runtime: float = 0.0

    @property
    def R(self) -> Fraction:
        return robustness(self.adv, self.n)

    def sort_key(self):
        return (self.attack, self.epsilon, self.v_th, self.T, SCHEME_BITS[self.scheme], self.a_lvl)


@dataclass
class SweepResult:
    rows: list[Row]
    best: dict  # (attack, epsilon) -> Row or NO_CONFIG
    skipped: list[tuple[float, int, float]]  # (v_th, T, accuracy)

    @property
    def any_met(self) -> bool:
        return any(v != NO_CONFIG for v in self.best.values())


# --- data --------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    train_x: np.ndarray  # images (N, H, W) or event streams
    train_y: np.ndarray
    test_x: object
    test_y: np.ndarray
    neuromorphic: bool = False
    sensor_dims: tuple[int, int] = (8, 8)
    duration: float = 0.0

    def digest(self) -> str:
        h = hashlib.sha256()
        if self.neuromorphic:
            for s in list(self.train_x) + list(self.test_x):
                h.update(np.stack([s.x, s.y, s.p]).tobytes())
                h.update(s.t.tobytes())
        else:
            h.update(np.ascontiguousarray(self.train_x).tobytes())
            h.update(np.ascontiguousarray(self.test_x).tobytes())
        h.update(np.asarray(self.train_y).tobytes())
        h.update(np.asarray(self.test_y).tobytes())
        return h.hexdigest()[:16]


def make_dataset(cfg: SweepConfig) -> Dataset:
    if not cfg.neuromorphic:
        tx, ty = synth_images(cfg.n_train, cfg.n_classes, cfg.image_size, cfg.seed, cfg.noise, split=0)
        vx, vy = synth_images(cfg.n_test, cfg.n_classes, cfg.image_size, cfg.seed, cfg.noise, split=1)
        return Dataset(tx, ty, vx, vy, False, (cfg.image_size, cfg.image_size))
    dims = (cfg.sensor, cfg.sensor)
    rng = np.random.default_rng([cfg.seed, 7])

    def draw(n, split):
        labels = rng.integers(0, cfg.n_classes, n)
        streams = [synth_gesture(int(c), cfg.n_events, derive_seed(cfg.seed * 1000 + split, i), dims)
                   for i, c in enumerate(labels)]
        return streams, labels

    tx, ty = draw(cfg.n_train, 0)
    vx, vy = draw(cfg.n_test, 1)
    duration = max(float(s.t[-1]) for s in tx + vx if len(s)) + 1.0
    return Dataset(tx, ty, vx, vy, True, dims, duration)


def _stream_inputs(streams, T, window):
    return np.stack([raster_to_input(rasterize(s, T, window)) for s in streams]).astype(np.float64)


# --- per-point evaluation ----------------------------------------------------


def _checkpoint_key(cfg: SweepConfig, data: Dataset, v_th: float, T: int) -> str:
    payload = json.dumps({
        "v_th": v_th, "T": T, "data": data.digest(), "seed": cfg.seed,
        "arch": [cfg.hidden, cfg.beta], "train": asdict(cfg.train_config()),
    }, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:20]


def train_point(cfg: SweepConfig, data: Dataset, v_th: float, T: int):
    """Train (or load from ``cfg.cache_dir``) the accurate network at ``(v_th, T)``."""
    cache = Path(cfg.cache_dir) if cfg.cache_dir else None
    key = _checkpoint_key(cfg, data, v_th, T)
    if cache is not None and (cache / f"{key}.axsn").exists():
        net = network_from_bytes((cache / f"{key}.axsn").read_bytes())
        meta = json.loads((cache / f"{key}.json").read_text())
        return net, meta["accuracy"]
    n_in = 2 * data.sensor_dims[0] * data.sensor_dims[1] if data.neuromorphic else data.train_x[0].size
    net = init_network([n_in, cfg.hidden, cfg.n_classes], T, v_th=v_th, beta=cfg.beta,
                       seed=derive_seed(cfg.seed, 17))
    tcfg = cfg.train_config()
    if data.neuromorphic:
        window = (0.0, data.duration)
        spikes = _stream_inputs(data.train_x, T, window)
        test = (_stream_inputs(data.test_x, T, window), data.test_y)
        net, acc = train_accurate(net, None, data.train_y, tcfg, test=test, spikes=spikes)
    else:
        net, acc = train_accurate(net, data.train_x, data.train_y, tcfg, test=(data.test_x, data.test_y))
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)
        (cache / f"{key}.axsn").write_bytes(network_to_bytes(net))
        (cache / f"{key}.json").write_text(json.dumps(
            {"v_th": v_th, "T": T, "accuracy": acc, "config": asdict(tcfg)}, sort_keys=True))
    return net, acc


def attack_config(cfg: SweepConfig, kind: str, eps: float, T: int, window=None) -> attacks.AttackConfig:
    return attacks.AttackConfig(kind=kind, epsilon=eps, alpha=cfg.alpha, n_iter=cfg.attack_iters,
                                seed=derive_seed(cfg.seed, 23), k=cfg.sparse_k, bins=T, window=window)


def craft(net, data: Dataset, acfg: attacks.AttackConfig):
    """Adversarial test set crafted against ``net`` (the accurate model)."""
    if acfg.kind == "PGD":
        return attacks.pgd(net, data.test_x, data.test_y, acfg)
    if acfg.kind == "BIM":
        return attacks.bim(net, data.test_x, data.test_y, acfg)
    if acfg.kind == "Frame":
        return [attacks.frame_attack(s, acfg) for s in data.test_x]
    return [attacks.sparse_attack(net, s, int(y), acfg) for s, y in zip(data.test_x, data.test_y)]


def adversarial_digest(adv) -> str:
    h = hashlib.sha256()
    if isinstance(adv, np.ndarray):
        h.update(np.ascontiguousarray(adv).tobytes())
    else:
        for s in adv:
            h.update(np.stack([s.x, s.y, s.p]).tobytes())
            h.update(s.t.tobytes())
    return h.hexdigest()[:16]


def _inputs(cfg, data: Dataset, x, T, seed):
    if data.neuromorphic:
        if cfg.aqf_defense:
            x = [aqf_filter(s, cfg.aqf) for s in x]
        return _stream_inputs(x, T, (0.0, data.duration))
    return encode_images(x, T, seed)


def evaluate_point(cfg: SweepConfig, data: Dataset, v_th: float, T: int):
    """All rows for one ``(v_th, T)``; returns ``(rows, skipped accuracy or None)``."""
    start = time.perf_counter()
    net, acc = train_point(cfg, data, v_th, T)
    if not check_quality(acc, cfg.quality):
        log.info("skipping v_th=%s T=%s: accuracy %.2f below Q=%s", v_th, T, acc, cfg.quality)
        return [], acc
    eval_seed = derive_seed(cfg.seed, 29)
    window = (0.0, data.duration) if data.neuromorphic else None
    y = np.asarray(data.test_y)
    if data.neuromorphic:
        clean_in = _stream_inputs(data.test_x, T, window)
    else:
        clean_in = encode_images(data.test_x, T, eval_seed)
    clean_ok = predict(net, clean_in) == y
    clean_acc = 100.0 * float(clean_ok.mean())

    calib_idx = np.arange(min(cfg.calib_size, len(data.train_y)))
    if data.neuromorphic:
        calib = _stream_inputs([data.train_x[i] for i in calib_idx], T, window)
    else:
        calib = encode_images(data.train_x[calib_idx], T, derive_seed(cfg.seed, 31))

    variants = []
    for scheme in cfg.schemes:
        wp = [precision_scale(w, scheme) for w in net.weights]
        scaled = net.with_weights(wp)
        stats = approx.calibrate(scaled, calib)
        for a_lvl in cfg.a_lvls:
            ax = approx.approximate(scaled, wp, stats, a_lvl)
            ax_clean = 100.0 * float(np.mean(predict(ax.base, clean_in, ax.masks) == y))
            variants.append((scheme, a_lvl, ax, ax_clean))

    rows = []
    for kind in cfg.attacks:
        for eps in cfg.epsilons:
            acfg = attack_config(cfg, kind, eps, T, window)
            adv = craft(net, data, acfg)
            digest = adversarial_digest(adv)
            adv_in = _inputs(cfg, data, adv, T, eval_seed)
            for scheme, a_lvl, ax, ax_clean in variants:
                pred = predict(ax.base, adv_in, ax.masks)
                n_adv = int(np.sum(clean_ok & (pred != y)))
                rows.append(Row(
                    v_th=v_th, T=T, scheme=scheme, a_lvl=a_lvl, a_th=list(ax.a_th), attack=kind,
                    epsilon=eps, clean_acc=clean_acc, attacked_acc=100.0 * float(np.mean(pred == y)),
                    adv=n_adv, n=len(y), ax_clean_acc=ax_clean, pruned_fraction=ax.pruned_fraction,
                    adv_digest=digest,
                ))
    elapsed = time.perf_counter() - start
    for r in rows:
        r.runtime = elapsed / max(len(rows), 1)
    return rows, None


def evaluate_config(v_th, T, scheme, a_lvl, attack_cfg: attacks.AttackConfig, data: Dataset,
                    Q: float, F_d: bool = False, cfg: SweepConfig | None = None) -> Row:
    """One row of the sweep. Raises ``QualityGateError`` if training misses ``Q``."""
    base = cfg or SweepConfig()
    one = replace(base, v_th=(v_th,), time_steps=(T,), schemes=(scheme,), a_lvls=(a_lvl,),
                  epsilons=(attack_cfg.epsilon,), attacks=(attack_cfg.kind,), quality=Q,
                  neuromorphic=F_d, alpha=attack_cfg.alpha, attack_iters=attack_cfg.n_iter,
                  sparse_k=attack_cfg.k)
    rows, skipped_acc = evaluate_point(one, data, v_th, T)
    if not rows:
        raise QualityGateError(f"accuracy {skipped_acc:.2f} below quality constraint {Q}")
    return rows[0]


# --- sweep -------------------------------------------------------------------


def select_best(rows, Q: float) -> dict:
    """Per ``(attack, epsilon)``: highest R meeting ``Q``; ties prefer lower T,
    then narrower scheme, then lower v_th and a_lvl."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.attack, r.epsilon), []).append(r)
    best = {}
    for key in sorted(groups):
        ok = [r for r in groups[key] if r.R >= Q]
        if not ok:
            best[key] = NO_CONFIG
            continue
        best[key] = min(ok, key=lambda r: (-r.R, r.T, SCHEME_BITS[r.scheme], r.v_th, r.a_lvl))
    return best


def _point_job(args):
    cfg, data, v_th, T = args
    return evaluate_point(cfg, data, v_th, T)


def sweep(cfg: SweepConfig, data: Dataset | None = None, evaluator: Callable | None = None) -> SweepResult:
    """Evaluate the full grid and select the best configuration per attack.

    ``evaluator(v_th, T, scheme, a_lvl, attack, epsilon) -> Row | None`` replaces
    the training pipeline (``None`` marks a quality-gated skip).
    """
    rows, skipped = [], []
    points = [(v, t) for v in cfg.v_th for t in cfg.time_steps]
    if evaluator is not None:
        for v, t in points:
            for scheme in cfg.schemes:
                for a_lvl in cfg.a_lvls:
                    for kind in cfg.attacks:
                        for eps in cfg.epsilons:
                            row = evaluator(v, t, scheme, a_lvl, kind, eps)
                            if row is not None:
                                rows.append(row)
                            elif not skipped or skipped[-1][:2] != (v, t):
                                skipped.append((v, t, float("nan")))
    else:
        data = data if data is not None else make_dataset(cfg)
        jobs = [(cfg, data, v, t) for v, t in points]
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_point_job, jobs))
        else:
            results = [_point_job(j) for j in jobs]
        for (v, t), (point_rows, skipped_acc) in zip(points, results):
            rows.extend(point_rows)
            if skipped_acc is not None:
                skipped.append((v, t, skipped_acc))
    rows.sort(key=Row.sort_key)
    expected = len(points) * len(cfg.schemes) * len(cfg.a_lvls) * len(cfg.epsilons) * len(cfg.attacks)
    per_point = len(cfg.schemes) * len(cfg.a_lvls) * len(cfg.epsilons) * len(cfg.attacks)
    if evaluator is None:
        assert len(rows) == expected - per_point * len(skipped), "sweep lost rows"
    best = select_best(rows, cfg.quality)
    for key in sorted((k, e) for k in cfg.attacks for e in cfg.epsilons):
        best.setdefault(key, NO_CONFIG)
    return SweepResult(rows, dict(sorted(best.items())), skipped)


# --- reports -----------------------------------------------------------------

CSV_FIELDS = ["v_th", "T", "scheme", "a_lvl", "a_th", "attack", "epsilon", "clean_acc",
              "ax_clean_acc", "attacked_acc", "R", "adv", "n", "pruned_fraction"]


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([
            _fmt(r.v_th), r.T, r.scheme, _fmt(r.a_lvl), ";".join(_fmt(a) for a in r.a_th), r.attack,
            _fmt(r.epsilon), f"{r.clean_acc:.2f}", f"{r.ax_clean_acc:.2f}", f"{r.attacked_acc:.2f}",
            f"{float(r.R):.2f}", r.adv, r.n, ";".join(f"{p:.4f}" for p in r.pruned_fraction),
        ])
    return buf.getvalue()


def _row_dict(r: Row) -> dict:
    d = asdict(r)
    d["R"] = round(float(r.R), 2)
    return d


def result_to_json(result: SweepResult, cfg: SweepConfig | None = None) -> str:
    best = {}
    for (kind, eps), v in result.best.items():
        best[f"{kind}@{_fmt(eps)}"] = v if v == NO_CONFIG else _row_dict(v)
    doc = {
        "config": None if cfg is None else {**asdict(cfg), "aqf": asdict(cfg.aqf)},
        "rows": [_row_dict(r) for r in result.rows],
        "best": best,
        "skipped": [{"v_th": v, "T": t, "accuracy": a} for v, t, a in result.skipped],
    }
    return json.dumps(doc, indent=2, default=str)


def plotdata_csv(rows) -> str:
    """``(epsilon, accuracy)`` series, one block per configuration."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["v_th", "T", "scheme", "a_lvl", "attack", "epsilon", "attacked_acc"])
    for r in sorted(rows, key=lambda r: (r.v_th, r.T, SCHEME_BITS[r.scheme], r.a_lvl, r.attack, r.epsilon)):
        w.writerow([_fmt(r.v_th), r.T, r.scheme, _fmt(r.a_lvl), r.attack, _fmt(r.epsilon), f"{r.attacked_acc:.2f}"])
    return buf.getvalue()
