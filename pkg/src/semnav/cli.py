"""Command line entry points.

`semnav sim` runs a scenario open-loop and prints one JSON line per
simulated second; `semnav serve` (registered by the service module) runs the
full interactive session over a websocket.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .world import Simulator, load_scenario


def _sim_parser(subparsers) -> None:
    p = subparsers.add_parser("sim", help="run a scenario headless and log state")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--seed", type=int, default=0, help="simulation seed")
    p.add_argument("--rate", type=float, default=0.0,
                   help="real-time pacing in Hz (0 = as fast as possible)")
    p.add_argument("--duration", type=float, default=10.0,
                   help="simulated seconds to run")
    p.add_argument("--dt", type=float, default=0.05, help="step size in seconds")
    p.add_argument("--headless", action="store_true",
                   help="accepted for compatibility; output is always textual")


def _state_line(sim: Simulator) -> dict:
    w = sim.world
    return {
        "t": round(w.time, 6),
        "robot": [round(v, 6) for v in w.robot.pose.as_array().tolist()],
        "humans": {
            h.id: [round(v, 6) for v in h.pose.as_array().tolist()] for h in w.humans
        },
        "doors": {d.id: round(d.swing, 6) for d in w.doors},
        "gestures": [h.id for h in w.humans if h.arm is not None],
    }


def run_sim(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    sim = Simulator(scenario, seed=args.seed, dt=args.dt)
    steps = int(round(args.duration / args.dt))
    per_second = max(1, int(round(1.0 / args.dt)))
    next_wall = time.monotonic()
    for i in range(1, steps + 1):
        sim.step()
        if args.rate > 0.0:
            next_wall += 1.0 / args.rate
            pause = next_wall - time.monotonic()
            if pause > 0.0:
                time.sleep(pause)
        if i % per_second == 0:
            print(json.dumps(_state_line(sim)))
    scan = sim.laser()
    finite = scan.ranges[np.isfinite(scan.ranges)]
    summary = {
        "summary": True,
        "t": round(sim.world.time, 6),
        "steps": steps,
        "seed": args.seed,
        "scenario": scenario.name,
        "laser_beams": int(len(scan.ranges)),
        "laser_hits": int(len(finite)),
        "min_range": round(float(finite.min()), 4) if len(finite) else None,
    }
    print(json.dumps(summary))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="semnav")
    subparsers = parser.add_subparsers(dest="command", required=True)
    _sim_parser(subparsers)
    try:
        from .service.cli import add_serve_parser
    except ImportError:
        add_serve_parser = None
    if add_serve_parser is not None:
        add_serve_parser(subparsers)
    args = parser.parse_args(argv)
    if args.command == "sim":
        return run_sim(args)
    return args.run(args)


if __name__ == "__main__":
    sys.exit(main())
