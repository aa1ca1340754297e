"""Closed-loop avoidance on head-on scenes and maneuver rate on far-offset scenes.

    python scripts/closed_loop.py --head-on 25 --far 20
"""
import argparse

from evavoid.config import load_config
from evavoid.evaluation import closed_loop_run
from evavoid.sim.presets import far_offset_scene, head_on_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--head-on", type=int, default=25)
    ap.add_argument("--far", type=int, default=20)
    ap.add_argument("--presets", nargs="+", default=["small_box", "fitball"])
    ap.add_argument("--config")
    args = ap.parse_args()
    cfg = load_config(args.config)
    for preset in args.presets:
        hits = avoided = 0
        for seed in range(args.head_on):
            sc = head_on_scene(preset, seed)
            off = closed_loop_run(sc, cfg, avoid=False)
            if off.outcome != "collided":
                print(f"{preset} seed {seed:2d}: no ISV without avoidance, skipped")
                continue
            on = closed_loop_run(sc, cfg, avoid=True)
            hits += 1
            avoided += on.outcome == "avoided"
            print(f"{preset} seed {seed:2d}: {on.outcome}", flush=True)
        print(f"{preset}: avoided {avoided}/{hits}")
    maneuvers = 0
    for seed in range(args.far):
        res = closed_loop_run(far_offset_scene(seed), cfg, avoid=True)
        maneuvers += res.maneuver
        print(f"far seed {seed:2d}: {res.outcome} maneuver={res.maneuver}", flush=True)
    print(f"unnecessary maneuvers {maneuvers}/{args.far}")


if __name__ == "__main__":
    main()
