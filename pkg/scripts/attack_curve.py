"""Attacked accuracy against epsilon for the accurate and approximate nets."""
import argparse
from dataclasses import replace

from axsnn import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--v-th", type=float, default=1.0)
    ap.add_argument("--T", type=int, default=16)
    ap.add_argument("--attack", choices=["PGD", "BIM"], default="PGD")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = replace(harness.SweepConfig(seed=args.seed), schemes=("FP32", "INT8"), a_lvls=(0.0, 0.01, 0.1, 1.0),
                  epsilons=(0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0), attacks=(args.attack,))
    data = harness.make_dataset(cfg)
    rows, skipped = harness.evaluate_point(cfg, data, args.v_th, args.T)
    if skipped is not None:
        raise SystemExit(f"accuracy {skipped:.2f} below Q={cfg.quality}")
    print(harness.plotdata_csv(rows), end="")


if __name__ == "__main__":
    main()
