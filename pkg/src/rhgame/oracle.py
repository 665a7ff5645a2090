"""Independent check that a plan is an (approximate) periodic aggregative equilibrium.

Prices are frozen at the plan's own link loads, including the agent's own
traffic. Against frozen prices an agent's cost is linear in its plan, so the
best response is a greedy fill of its cheapest window cells. Nothing here
goes through the better-response code path except the fixed-point side of
:func:`fixed_point_cross_check`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleSpecError
from .model import Game


def _unit_prices(x: np.ndarray, game: Game, phase: int) -> np.ndarray:
    """(T, n_paths) path prices, computed straight from the incidence matrix."""
    T = game.period
    inc = game.network.incidence
    ext = game.external.table
    prices = np.empty((T, game.network.n_paths))
    for tau in range(T):
        loads = ext[:, (phase + tau) % T] + np.einsum("ip,lp->l", x[:, tau, :], inc)
        prices[tau] = inc.T @ game.price(loads)
    return prices


def _window_slots(offset: int, eta: int, phase: int, period: int) -> list[int]:
    # slot tau holds absolute phase (phase + tau) % T
    return [tau for tau in range(period) if (phase + tau - offset) % period <= eta]


def frozen_best_response(
    i: int, x: np.ndarray, game: Game, phase: int = 0, prices: np.ndarray | None = None
) -> tuple[np.ndarray, float]:
    """Cheapest placement of agent ``i``'s demand with all path prices held fixed.

    Returns ``(slice, cost)`` where ``slice`` has shape ``(T, n_paths)``.

    Raises:
        InfeasibleSpecError: if the demand exceeds the window capacity.
    """
    agent = game.agents[i]
    prices = _unit_prices(x, game, phase) if prices is None else prices
    out = np.zeros((game.period, game.network.n_paths))
    slots = _window_slots(agent.offset, agent.eta, phase, game.period)
    cells = sorted(
        ((prices[tau, p], tau, p) for tau in slots for p in agent.path_ids),
    )
    if agent.demand > agent.mu * len(cells) * (1 + 1e-12):
        raise InfeasibleSpecError(f"agent {i}: demand {agent.demand} exceeds window capacity")
    left = agent.demand
    cost_terms = []
    for price, tau, p in cells:
        if left <= 0:
            break
        amount = min(agent.mu, left)
        out[tau, p] = amount
        cost_terms.append(price * amount)
        left -= amount
    return out, math.fsum(cost_terms)


@dataclass
class ResidualReport:
    """Per-agent cost gaps against the frozen-price best response."""

    gaps: dict[int, float]
    costs: dict[int, float]

    @property
    def max_gap(self) -> float:
        return max(self.gaps.values(), default=0.0)

    @property
    def argmax(self) -> int | None:
        return max(self.gaps, key=self.gaps.get) if self.gaps else None

    @property
    def scale(self) -> float:
        """Mean per-agent cost, used to make tolerances relative."""
        return float(np.mean(list(self.costs.values()))) if self.costs else 0.0

    def is_equilibrium(self, eps: float, relative: bool = True) -> bool:
        bound = eps * self.scale if relative else eps
        return self.max_gap <= bound


def equilibrium_residual(
    x: np.ndarray, game: Game, phase: int = 0, agents=None
) -> ResidualReport:
    """Cost gap ``J_i(x) - min_z J_i(z, x)`` for every active agent (or ``agents``)."""
    prices = _unit_prices(x, game, phase)
    who = range(game.n_agents) if agents is None else agents
    gaps, costs = {}, {}
    for i in who:
        if not game.agents[i].active:
            continue
        cost = math.fsum((prices * x[i]).ravel())
        _, best = frozen_best_response(i, x, game, phase, prices)
        gaps[i] = cost - best
        costs[i] = cost
    return ResidualReport(gaps, costs)


@dataclass
class CrossCheck:
    fixed_point: bool
    aligned_optimal: bool
    aligned: list[int]
    max_aligned_gap: float

    @property
    def agree(self) -> bool:
        """A fixed point must leave no aligned agent with a profitable deviation."""
        return self.aligned_optimal or not self.fixed_point

    def __bool__(self) -> bool:
        return self.fixed_point and self.aligned_optimal


def fixed_point_cross_check(
    x: np.ndarray, theta: int, game: Game, eps: float = 1e-8, backend: str | None = None
) -> CrossCheck:
    """Compare "one update sweep leaves ``x`` unchanged" with the oracle.

    ``x`` is a rotated plan and ``theta`` the pre-rotation phase, as for
    :func:`rhgame.routing.population_update`. Agents whose window starts at
    ``(theta + 1) % T`` are *aligned*; at a fixed point their gaps must be at
    most ``eps``.
    """
    from .routing import population_update

    phase = (theta + 1) % game.period
    if game.n_agents == 0:
        return CrossCheck(True, True, [], 0.0)
    fixed = bool(np.array_equal(population_update(x, theta, 1, game, backend), x))
    aligned = [i for i, a in enumerate(game.agents) if a.active and a.offset == phase]
    report = equilibrium_residual(x, game, phase, aligned)
    worst = report.max_gap
    return CrossCheck(fixed, worst <= eps, aligned, worst)
