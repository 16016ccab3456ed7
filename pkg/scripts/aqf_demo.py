"""Frame-attack synthetic gestures and measure what the filter removes."""
import argparse

import numpy as np

from axsnn.aqf import AqfParams, aqf_mask
from axsnn.attacks import AttackConfig, frame_attack
from axsnn.codec import GESTURES, synth_gesture


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sensor", type=int, default=128)
    ap.add_argument("--events", type=int, default=100)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--T2", type=float, default=50.0)
    ap.add_argument("--q-t", type=float, default=0.0)
    args = ap.parse_args()
    params = AqfParams(q_t=args.q_t, T2=args.T2)

    print(f"{'gesture':12s} {'injected removed %':>20s} {'originals kept %':>18s}")
    for c, name in enumerate(GESTURES):
        removed, kept = [], []
        for seed in range(args.seeds):
            s = synth_gesture(c, args.events, seed, (args.sensor, args.sensor))
            attacked, injected = frame_attack(s, AttackConfig(kind="Frame"), return_mask=True)
            keep, _ = aqf_mask(attacked, params)
            removed.append(100 * np.mean(~keep[injected]))
            kept.append(100 * np.mean(keep[~injected]))
        print(f"{name:12s} {np.mean(removed):20.2f} {np.mean(kept):18.2f}")


if __name__ == "__main__":
    main()
