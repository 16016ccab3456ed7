"""Command line interface: ``axsnn {train,attack,filter,eval,sweep}``.

Configuration files are flat ``key = value`` text; ``#`` starts a comment and
list values are comma separated. Keys are the ``SweepConfig`` field names
(``aqf.q_t``, ``aqf.s``, ``aqf.T1``, ``aqf.T2`` for the filter). Command line
flags override the file.

Exit codes: 0 success, 2 no configuration met Q, 3 quality gate failed,
4 I/O or parse error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import attacks, codec, harness
from .aqf import AqfParams, aqf_mask
from .snn import FormatError
from .train import check_quality, load_checkpoint, save_checkpoint

EXIT_OK, EXIT_NO_CONFIG, EXIT_QUALITY, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("axsnn")


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _coerce(value: str, default):
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if isinstance(default, tuple):
        items = [v.strip() for v in value.split(",") if v.strip()]
        kind = type(default[0]) if default else str
        return tuple(kind(v) for v in items)
    if default is None:
        if value.lower() == "none":
            return None
        try:
            return float(value)
        except ValueError:
            return value
    return type(default)(value)


def build_sweep_config(values: dict, base: harness.SweepConfig | None = None) -> harness.SweepConfig:
    base = base or harness.SweepConfig()
    fields = {f.name: getattr(base, f.name) for f in dataclasses.fields(base)}
    aqf = dataclasses.asdict(base.aqf)
    kw = {}
    for key, value in values.items():
        try:
            if key.startswith("aqf."):
                name = key[4:]
                if name not in aqf:
                    raise ConfigError(f"unknown filter key {key!r}")
                aqf[name] = type(aqf[name])(value)
            elif key in fields and key != "aqf":
                kw[key] = _coerce(value, fields[key]) if isinstance(value, str) else value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    if kw.get("epsilons") is not None:
        kw["epsilons"] = tuple(float(e) for e in kw["epsilons"])
    try:
        return dataclasses.replace(base, aqf=AqfParams(**aqf), **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _sweep_config(args) -> harness.SweepConfig:
    values = {}
    if args.config:
        values.update(parse_config_text(Path(args.config).read_text()))
    for item in args.set or []:
        values.update(parse_config_text(item))
    flag_map = {
        "v_th": args.v_th, "time_steps": args.time_steps, "schemes": args.schemes,
        "a_lvls": args.a_lvls, "epsilons": args.eps, "attacks": args.attacks,
        "quality": args.quality, "seed": args.seed, "workers": getattr(args, "workers", None),
        "cache_dir": args.cache_dir,
    }
    for key, value in flag_map.items():
        if value is not None:
            values[key] = value if isinstance(value, str) else ",".join(map(str, value)) \
                if isinstance(value, (list, tuple)) else str(value)
    if args.neuromorphic:
        values["neuromorphic"] = "true"
        values.setdefault("attacks", "Sparse,Frame")
    if getattr(args, "full_grid", False):
        values.setdefault("time_steps", ",".join(map(str, harness.FULL_T)))
    return build_sweep_config(values)


def _add_common(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--v-th", dest="v_th", type=float, nargs="+")
    p.add_argument("--T", dest="time_steps", type=int, nargs="+")
    p.add_argument("--schemes", nargs="+", choices=["INT8", "FP16", "FP32"])
    p.add_argument("--a-lvls", dest="a_lvls", type=float, nargs="+")
    p.add_argument("--eps", type=float, nargs="+")
    p.add_argument("--attacks", nargs="+", choices=list(attacks.ATTACKS))
    p.add_argument("--quality", "-Q", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--neuromorphic", action="store_true", help="synthetic event data (F_d)")
    p.add_argument("--cache-dir")


def _write_reports(result, cfg, args):
    if args.out_csv:
        Path(args.out_csv).write_text(harness.rows_to_csv(result.rows))
    if args.out_json:
        Path(args.out_json).write_text(harness.result_to_json(result, cfg))
    if getattr(args, "emit_plotdata", None):
        Path(args.emit_plotdata).write_text(harness.plotdata_csv(result.rows))


def cmd_train(args) -> int:
    cfg = _sweep_config(args)
    data = harness.make_dataset(cfg)
    v_th, T = cfg.v_th[0], cfg.time_steps[0]
    net, acc = harness.train_point(cfg, data, v_th, T)
    print(f"trained v_th={v_th} T={T}: accuracy {acc:.2f}%")
    if args.out:
        save_checkpoint(net, args.out, cfg.train_config(), acc, v_th=v_th, T=T,
                        neuromorphic=cfg.neuromorphic, data=data.digest())
    if not check_quality(acc, cfg.quality):
        print(f"quality gate failed: {acc:.2f} < Q={cfg.quality}", file=sys.stderr)
        return EXIT_QUALITY
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _sweep_config(args)
    data = harness.make_dataset(cfg)
    if args.checkpoint:
        net, meta = load_checkpoint(args.checkpoint)
        T = net.time_steps
    else:
        T = cfg.time_steps[0]
        net, _ = harness.train_point(cfg, data, cfg.v_th[0], T)
    window = (0.0, data.duration) if data.neuromorphic else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for kind in cfg.attacks:
        for eps in cfg.epsilons:
            adv = harness.craft(net, data, harness.attack_config(cfg, kind, eps, T, window))
            stem = f"{kind}_eps{eps:g}"
            if data.neuromorphic:
                d = out / stem
                d.mkdir(exist_ok=True)
                for i, s in enumerate(adv):
                    codec.save_events(s, d / f"{i:05d}.axev")
            else:
                codec.save_idx(adv, data.test_y, out / f"{stem}-images.idx", out / f"{stem}-labels.idx")
            print(f"{kind} eps={eps:g}: {len(data.test_y)} adversarial samples -> {out / stem}*")
    return EXIT_OK


def cmd_filter(args) -> int:
    stream = codec.load_events(args.input)
    params = AqfParams(q_t=args.q_t, s=args.s, T1=args.T1, T2=args.T2)
    keep, tq = aqf_mask(stream, params)
    codec.save_events(stream.with_timestamps(tq).select(keep), args.output)
    print(f"kept {int(keep.sum())} removed {int((~keep).sum())}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _sweep_config(args)
    cfg = dataclasses.replace(cfg, v_th=cfg.v_th[:1], time_steps=cfg.time_steps[:1],
                              schemes=cfg.schemes[:1], a_lvls=cfg.a_lvls[:1],
                              epsilons=cfg.epsilons[:1], attacks=cfg.attacks[:1])
    result = harness.sweep(cfg)
    if result.skipped:
        v, t, acc = result.skipped[0]
        print(f"quality gate failed at v_th={v} T={t}: accuracy {acc:.2f} < Q={cfg.quality}", file=sys.stderr)
        return EXIT_QUALITY
    sys.stdout.write(harness.rows_to_csv(result.rows))
    _write_reports(result, cfg, args)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _sweep_config(args)
    result = harness.sweep(cfg)
    _write_reports(result, cfg, args)
    for v, t, acc in result.skipped:
        log.warning("skipped v_th=%s T=%s (accuracy %.2f < Q=%s)", v, t, acc, cfg.quality)
    for (kind, eps), best in result.best.items():
        if best == harness.NO_CONFIG:
            print(f"{kind} eps={eps:g}: {harness.NO_CONFIG}")
        else:
            print(f"{kind} eps={eps:g}: R={float(best.R):.2f} v_th={best.v_th} T={best.T} "
                  f"scheme={best.scheme} a_lvl={best.a_lvl} a_th={[round(a, 4) for a in best.a_th]}")
    return EXIT_OK if result.any_met else EXIT_NO_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="axsnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit the accurate SNN at one (v_th, T)")
    _add_common(p)
    p.add_argument("--out", help="checkpoint path (AXSN weights + .json sidecar)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="craft adversarial test sets")
    _add_common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("filter", help="run the approximate quantized filter on an AXEV file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--q-t", dest="q_t", type=float, default=0.0)
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--T1", type=int, default=5)
    p.add_argument("--T2", type=float, default=50.0)
    p.set_defaults(func=cmd_filter)

    for name, func, help_ in (("eval", cmd_eval, "evaluate a single configuration"),
                              ("sweep", cmd_sweep, "full grid search")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        p.add_argument("--out-csv")
        p.add_argument("--out-json")
        p.add_argument("--emit-plotdata", metavar="CSV")
        if name == "sweep":
            p.add_argument("--workers", type=int)
            p.add_argument("--full-grid", action="store_true", help="T grid 32..80 step 8")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, codec.ParseError, FormatError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except harness.QualityGateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_QUALITY


if __name__ == "__main__":
    sys.exit(main())
