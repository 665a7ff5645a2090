from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rhgame.model import AgentSpec, ExternalLoad, Game, PriceModel, window_mask
from rhgame.network import build_network

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

#: Lines printed by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def diamond(extra_cross: bool = True):
    """s -> {m1, m2, m3} -> t, optionally with a cross link m1 -> m2 (so a 3-link path)."""
    links = [("s", "m1"), ("s", "m2"), ("s", "m3"), ("m1", "t"), ("m2", "t"), ("m3", "t")]
    if extra_cross:
        links.append(("m1", "m2"))
    return build_network(["s", "m1", "m2", "m3", "t"], links, [("s", "t")])


def single_link():
    return build_network(["s", "t"], [("s", "t")], [("s", "t")])


def agent(i, demand, eta, offset, paths, mu=1.0, **kw):
    return AgentSpec(id=i, source="s", sink="t", demand=demand, eta=eta, offset=offset,
                     mu=mu, path_ids=tuple(paths), **kw)


def make_game(net, agents, period, price=None, external=None):
    price = price or PriceModel("linear", slope=1.0)
    ext = None if external is None else ExternalLoad(np.asarray(external, dtype=float))
    return Game(net, tuple(agents), price, period, ext)


def random_plan_slice(ag: AgentSpec, phase: int, period: int, n_paths: int, rng) -> np.ndarray:
    """A random feasible slice: demand spread over the window cells with caps at mu.

    Some cells are forced to zero or to the cap to exercise boundary cases.
    """
    out = np.zeros((period, n_paths))
    slots = np.flatnonzero(window_mask(ag, phase, period))
    cells = [(t, p) for t in slots for p in ag.path_ids]
    if not cells or ag.demand == 0:
        return out
    w = rng.dirichlet(np.ones(len(cells)))
    if len(cells) > 1 and rng.random() < 0.5:
        w[rng.integers(len(cells))] = 0.0
        w = w / w.sum() if w.sum() > 0 else np.ones(len(cells)) / len(cells)
    left = ag.demand
    free = np.ones(len(cells), dtype=bool)
    vals = np.zeros(len(cells))
    while left > 1e-15 and free.any():
        ww = np.where(free, w, 0.0)
        if ww.sum() == 0:
            ww = free.astype(float)
        add = left * ww / ww.sum()
        room = ag.mu - vals
        take = np.minimum(add, room)
        vals += take
        left -= take.sum()
        free &= vals < ag.mu - 1e-15
    # push any rounding remainder into the first cell with room
    for k in range(len(cells)):
        if left <= 0:
            break
        d = min(ag.mu - vals[k], left)
        vals[k] += d
        left -= d
    for (t, p), v in zip(cells, vals):
        out[t, p] = v
    return out


def random_instance(rng, n_agents=None, period=None, piecewise=None, aligned_phase=None,
                    max_paths=2, extra_cross=True, external=None):
    """Small random game plus a feasible plan at a random phase.

    Returns ``(game, x, phase)``. With ``aligned_phase`` set, every agent's
    window starts at that phase.
    """
    net = diamond(extra_cross)
    T = int(period or rng.integers(2, 5))
    N = int(n_agents if n_agents is not None else rng.integers(1, 5))
    phase = int(rng.integers(0, T)) if aligned_phase is None else aligned_phase
    agents = []
    for i in range(N):
        k = int(rng.integers(1, max_paths + 1))
        paths = sorted(rng.choice(net.n_paths, size=min(k, net.n_paths), replace=False).tolist())
        eta = int(rng.integers(0, T))
        offset = int(rng.integers(0, T)) if aligned_phase is None else aligned_phase
        mu = float(rng.uniform(0.5, 1.5))
        cap = mu * (eta + 1) * len(paths)
        r = rng.random()
        demand = 0.0 if r < 0.05 else (cap if r < 0.1 else float(rng.uniform(0, cap)))
        agents.append(agent(i, demand, eta, offset, paths, mu=mu))
    if piecewise is None:
        piecewise = rng.random() < 0.5
    if piecewise:
        xs = np.concatenate([[0.0], np.sort(rng.uniform(0.2, 6.0, size=3))])
        slopes = rng.uniform(0.2, 3.0, size=4)
        ys = np.concatenate([[rng.uniform(0, 1)], np.zeros(3)])
        for k in range(1, 4):
            ys[k] = ys[k - 1] + slopes[k - 1] * (xs[k] - xs[k - 1])
        price = PriceModel("piecewise", points=tuple(zip(xs.tolist(), ys.tolist())))
    else:
        price = PriceModel("linear", slope=float(rng.uniform(0.5, 2.0)))
    if external is None and rng.random() < 0.5:
        external = rng.uniform(0, 1.0, size=(net.n_links, T))
    game = make_game(net, agents, T, price, external)
    x = np.stack([random_plan_slice(a, phase, T, net.n_paths, rng) for a in agents]) if N else \
        np.zeros((0, T, net.n_paths))
    return game, x, phase


@pytest.fixture(scope="session")
def demo_result():
    from rhgame.scenario import load_demo, run_scenario

    return run_scenario(load_demo())


@pytest.fixture(scope="session")
def demo_result_gamma2():
    from rhgame.scenario import load_demo, run_scenario

    return run_scenario(load_demo().with_overrides(gamma=2))
