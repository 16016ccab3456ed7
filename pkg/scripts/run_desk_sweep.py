"""Desk-scale robustness sweep over (v_th, T, scheme, a_lvl) with CSV/JSON output.

    python scripts/run_desk_sweep.py --out results/desk --workers 2
    python scripts/run_desk_sweep.py --neuromorphic --eps 1.0 --out results/dvs
"""
import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from axsnn import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/desk")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.2, 0.5, 1.0])
    ap.add_argument("--neuromorphic", action="store_true")
    ap.add_argument("--cache-dir", default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = harness.SweepConfig(epsilons=tuple(args.eps), seed=args.seed, workers=args.workers,
                              cache_dir=args.cache_dir)
    if args.neuromorphic:
        cfg = replace(cfg, neuromorphic=True, attacks=("Sparse", "Frame"))
    result = harness.sweep(cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rows.csv").write_text(harness.rows_to_csv(result.rows))
    (out / "report.json").write_text(harness.result_to_json(result, cfg))
    (out / "plotdata.csv").write_text(harness.plotdata_csv(result.rows))
    for (kind, eps), best in result.best.items():
        label = best if best == harness.NO_CONFIG else (
            f"R={float(best.R):.2f} v_th={best.v_th} T={best.T} {best.scheme} a_lvl={best.a_lvl}")
        print(f"{kind:6s} eps={eps:<5g} {label}")
    print(f"{len(result.rows)} rows, {len(result.skipped)} points skipped -> {out}")
    return 0 if result.any_met else 2


if __name__ == "__main__":
    sys.exit(main())
