"""Time the better-response sweep backends on the demo scenario.

Usage::

    python3 benchmarks/bench_sweep.py [--steps N] [--repeat R] [--agents-scale K]

Runs the receding-horizon loop with each available backend, reports the
best wall time per step, and checks that both produce identical plans.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import replace

import numpy as np

from rhgame._kernel import BACKENDS
from rhgame.engine import rotate, run
from rhgame.routing import population_update
from rhgame.scenario import (
    build_game,
    initial_strategy,
    load_demo,
    scenario_events,
)


def _scaled_demo(scale: int):
    scn = load_demo()
    if scale == 1:
        return scn
    groups = tuple(replace(g, count=g.count * scale) for g in scn.groups)
    return replace(scn, groups=groups, track=())


def bench(backend: str, game, x0, events, steps: int, repeat: int):
    best = float("inf")
    traj = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        traj = run(x0, steps, game, events, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, traj


def bench_sweep_only(backend: str, game, x0, sweeps: int) -> float:
    """Time ``population_update`` alone, without the loop's checks and records."""
    x, theta = x0, 0
    t0 = time.perf_counter()
    for _ in range(sweeps):
        x = population_update(rotate(x), theta, 1, game, backend)
        theta = (theta + 1) % game.period
    return time.perf_counter() - t0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--agents-scale", type=int, default=1,
                    help="multiply every group's agent count")
    args = ap.parse_args(argv)

    scn = _scaled_demo(args.agents_scale)
    game = build_game(scn)
    x0 = initial_strategy(game)
    events = scenario_events(scn, game)
    print(f"demo scenario: {game.n_agents} agents, T={game.period}, "
          f"{game.network.n_paths} paths, {args.steps} steps, best of {args.repeat}")

    results = {}
    for name in sorted(BACKENDS):
        secs, traj = bench(name, game, x0, events, args.steps, args.repeat)
        results[name] = (secs, traj)
        sweep = bench_sweep_only(name, game, x0, args.steps)
        print(f"  {name:7s} {secs:8.3f} s total  {1e3 * secs / args.steps:8.3f} ms/step"
              f"  (sweep only {1e3 * sweep / args.steps:8.3f} ms/step)")

    if len(results) == 2:
        (tc, trc), (tp, trp) = results["cython"], results["python"]
        same = all(np.array_equal(a, b) for a, b in zip(trc.phi, trp.phi))
        print(f"  speedup cython/python: {tp / tc:.1f}x, identical plans: {same}")
        return 0 if same else 1
    print("  compiled backend not built; only the fallback was timed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
