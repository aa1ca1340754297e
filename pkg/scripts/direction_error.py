"""Mean-flow direction error against ground truth over seeded approach scenes.

    python scripts/direction_error.py --seeds 30
"""
import argparse

import numpy as np

from evavoid.config import load_config
from evavoid.evaluation import direction_error, gt_direction_trace, matched_flow_trace, run_pipeline
from evavoid.sim.presets import direction_scene
from evavoid.sim.simulator import simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=30)
    ap.add_argument("--config")
    args = ap.parse_args()
    cfg = load_config(args.config)
    errors, depths = [], []
    for seed in range(args.seeds):
        sc = direction_scene(seed)
        ch = simulate(sc)
        gt = ch.ground_truth
        res = run_pipeline(ch.events, sc.geometry, cfg, states=sc)
        trace = matched_flow_trace(res, gt)
        st = direction_error(trace, gt_direction_trace(gt))
        if st is None:
            print(f"seed {seed:2d}: no matched estimates")
            continue
        errors.append(st.errors)
        frames = gt[gt["obj"] == 0]
        depths.append(frames["z"][np.clip(np.searchsorted(frames["t"], [t for t, _, _ in trace]),
                                          0, len(frames) - 1)][:len(st.errors)])
        print(f"seed {seed:2d}: n {len(st.errors):3d} rmse {st.rmse:6.1f} max {st.max:6.1f}", flush=True)
    err = np.concatenate(errors)
    z = np.concatenate(depths)
    print(f"all: n {len(err)} mean {err.mean():.1f} std {err.std():.1f} "
          f"rmse {np.sqrt(np.mean(err ** 2)):.1f} max {err.max():.1f} deg")
    for lo, hi in ((0, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 20)):
        m = (z >= lo) & (z < hi)
        if m.any():
            print(f"  depth {lo}-{hi} m: n {m.sum():4d} rmse {np.sqrt(np.mean(err[m] ** 2)):.1f}")


if __name__ == "__main__":
    main()
