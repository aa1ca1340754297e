"""Detection accuracy in a depth band over seeded lateral-throw scenes.

    python scripts/detection_accuracy.py --seeds 20 --band 2 4
"""
import argparse

from evavoid.config import load_config
from evavoid.evaluation import (ConfusionCounts, detection_metrics, detection_trace,
                                match_detections, run_pipeline)
from evavoid.sim.presets import detection_scene
from evavoid.sim.simulator import simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--band", nargs=2, type=float, default=(2.0, 4.0))
    ap.add_argument("--presets", nargs="+", default=["small_box", "fitball"])
    ap.add_argument("--config")
    args = ap.parse_args()
    cfg = load_config(args.config)
    for preset in args.presets:
        total = ConfusionCounts()
        for seed in range(args.seeds):
            sc = detection_scene(preset, seed)
            ch = simulate(sc)
            res = run_pipeline(ch.events, sc.geometry, cfg, states=sc)
            c = match_detections(detection_trace(res), ch.ground_truth, depth_band=tuple(args.band))
            total = total + c
            print(f"{preset} seed {seed:2d}: tp {c.tp} fp {c.fp} fn {c.fn} tn {c.tn}", flush=True)
        m = detection_metrics(total)
        print(f"{preset}: " + ", ".join(f"{k} {v:.3f}" for k, v in m.items() if v is not None))


if __name__ == "__main__":
    main()
