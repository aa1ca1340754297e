"""Per-package latency of the full pipeline on the canonical scene thinned to a target rate.

    python scripts/latency.py --rate 100000 --reps 5
"""
import argparse

from evavoid.config import load_config
from evavoid.evaluation import latency_benchmark, script_states
from evavoid.sim.presets import canonical_scene, thin_to_rate
from evavoid.sim.simulator import simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rate", type=float, default=100_000.0, help="events per second")
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--config")
    args = ap.parse_args()
    sc = canonical_scene()
    ev = thin_to_rate(simulate(sc).events, args.rate)
    rep, _ = latency_benchmark(ev, sc.geometry, load_config(args.config), args.reps, script_states(sc))
    print(f"{rep.n_events} events in {rep.n_packages} packages")
    print(f"mean {rep.mean_us / 1000:.3f} ms  p95 {rep.p95_us / 1000:.3f} ms  max {rep.max_us / 1000:.3f} ms")
    for k, v in rep.machine.items():
        print(f"{k}: {v}")


if __name__ == "__main__":
    main()
