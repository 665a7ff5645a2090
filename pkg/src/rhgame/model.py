"""Agents, link prices, traffic aggregation, costs, potential and feasibility.

A predicted strategy is a dense ``float64`` array of shape
``(n_agents, T, n_paths)``; entry ``x[i, tau, p]`` is the data agent ``i``
plans to send on path ``p`` in slot ``tau`` of the current prediction window.
Slot ``tau`` of a plan held at phase ``theta`` refers to the absolute phase
``(theta + tau) % T``, which is how periodic external load is aligned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError, StructuralError
from .network import NetworkModel

#: Absolute tolerance for the per-window demand equalities.
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class AgentSpec:
    """Per-agent transmission task.

    ``eta`` is the window length minus one, so the window covers phases
    ``offset .. offset + eta`` (mod T) of every period.
    """

    id: int
    source: object
    sink: object
    demand: float
    eta: int
    offset: int
    mu: float
    path_ids: tuple[int, ...]
    active: bool = True
    group: str = ""

    @property
    def capacity(self) -> float:
        return self.mu * (self.eta + 1) * len(self.path_ids)

    def check(self, net: NetworkModel, period: int) -> None:
        if not 0 <= self.eta <= period - 1:
            raise ContractError(f"agent {self.id}: eta={self.eta} outside 0..{period - 1}")
        if not 0 <= self.offset <= period - 1:
            raise ContractError(f"agent {self.id}: offset={self.offset} outside 0..{period - 1}")
        if self.mu <= 0:
            raise ContractError(f"agent {self.id}: mu must be positive")
        if self.demand < 0 or self.demand > self.capacity * (1 + 1e-12):
            raise ContractError(
                f"agent {self.id}: demand {self.demand} outside [0, {self.capacity}]"
            )
        if self.demand > 0 and not self.path_ids:
            raise ContractError(f"agent {self.id}: positive demand but no paths")
        if list(self.path_ids) != sorted(set(self.path_ids)):
            raise ContractError(f"agent {self.id}: path_ids must be sorted and unique")
        for p in self.path_ids:
            if not 0 <= p < net.n_paths:
                raise StructuralError(f"agent {self.id}: unknown path {p}")
            if net.endpoints(p) != (self.source, self.sink):
                raise ContractError(f"agent {self.id}: path {p} does not join its endpoints")


@dataclass(frozen=True)
class PriceModel:
    """Nondecreasing link price ``Pi``.

    ``kind="linear"`` gives ``Pi(v) = slope * v``. ``kind="piecewise"`` linearly
    interpolates ``points`` and extends the first and last segments beyond
    the table.
    """

    kind: str = "linear"
    slope: float = 1.0
    points: tuple[tuple[float, float], ...] = ()
    # derived for the piecewise model
    xs: np.ndarray = field(init=False, repr=False, compare=False)
    ys: np.ndarray = field(init=False, repr=False, compare=False)
    slopes: np.ndarray = field(init=False, repr=False, compare=False)
    cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "linear":
            if not self.slope > 0:
                raise ContractError("linear price slope must be positive")
            xs = np.array([0.0, 1.0])
            ys = np.array([0.0, self.slope])
        elif self.kind == "piecewise":
            if len(self.points) < 2:
                raise ContractError("piecewise price needs at least two points")
            xs = np.array([float(a) for a, _ in self.points])
            ys = np.array([float(b) for _, b in self.points])
            if np.any(np.diff(xs) <= 0):
                raise ContractError("piecewise price breakpoints must be strictly increasing")
            if np.any(np.diff(ys) < 0):
                raise ContractError("piecewise price must be nondecreasing")
        else:
            raise ContractError(f"unknown price kind {self.kind!r}")
        slopes = np.diff(ys) / np.diff(xs)
        # integral of Pi from xs[0] to each breakpoint (trapezoids are exact)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))])
        for name, value in (("xs", xs), ("ys", ys), ("slopes", slopes), ("cum", cum)):
            object.__setattr__(self, name, value)

    @property
    def kappa(self) -> float:
        """Lipschitz constant."""
        if self.kind == "linear":
            return float(self.slope)
        return float(np.max(np.abs(self.slopes)))

    def _segment(self, v: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.xs, v, side="right") - 1
        return np.clip(idx, 0, len(self.xs) - 2)

    def __call__(self, v):
        """Evaluate ``Pi`` elementwise (scalar or array)."""
        v = np.asarray(v, dtype=float)
        if self.kind == "linear":
            out = self.slope * v
        else:
            k = self._segment(v)
            out = self.ys[k] + self.slopes[k] * (v - self.xs[k])
        return out if out.ndim else float(out)

    def _antiderivative(self, v: np.ndarray) -> np.ndarray:
        k = self._segment(v)
        d = v - self.xs[k]
        return self.cum[k] + self.ys[k] * d + 0.5 * self.slopes[k] * d * d


def gamma(v, price: PriceModel):
    """Integral of the link price from 0 to ``v`` (closed form).

    Raises:
        ContractError: if any ``v`` is negative.
    """
    arr = np.asarray(v, dtype=float)
    if np.any(arr < 0):
        raise ContractError("gamma is defined for nonnegative traffic only")
    if price.kind == "linear":
        out = 0.5 * price.slope * arr * arr
    else:
        out = price._antiderivative(arr) - price._antiderivative(np.zeros_like(arr))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ExternalLoad:
    """Exogenous traffic per link and absolute phase, shape ``(n_links, T)``."""

    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.ndim != 2:
            raise StructuralError("external load must be a (links, T) table")
        if not np.all(np.isfinite(table)) or np.any(table < 0):
            raise ContractError("external load must be finite and nonnegative")
        object.__setattr__(self, "table", table)

    @classmethod
    def zeros(cls, n_links: int, period: int) -> "ExternalLoad":
        return cls(np.zeros((n_links, period)))

    def window(self, phase: int) -> np.ndarray:
        """Loads seen by a plan held at ``phase``: shape ``(T, n_links)``."""
        T = self.table.shape[1]
        cols = (phase + np.arange(T)) % T
        return self.table[:, cols].T


@dataclass(frozen=True)
class Game:
    """Everything the dynamics need besides the strategy itself."""

    network: NetworkModel
    agents: tuple[AgentSpec, ...]
    price: PriceModel
    period: int
    external: ExternalLoad | None = None

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if self.external is None:
            object.__setattr__(
                self, "external", ExternalLoad.zeros(self.network.n_links, self.period)
            )
        if self.external.table.shape != (self.network.n_links, self.period):
            raise StructuralError("external load shape does not match (links, T)")
        for a in self.agents:
            a.check(self.network, self.period)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_agents, self.period, self.network.n_paths)

    def with_agents(self, agents: Sequence[AgentSpec]) -> "Game":
        return Game(self.network, tuple(agents), self.price, self.period, self.external)

    def check_shape(self, x: np.ndarray) -> None:
        if x.shape != self.shape:
            raise StructuralError(f"strategy shape {x.shape} != expected {self.shape}")


def window_instances(offset: int, eta: int, phase: int, period: int) -> list[tuple[int, int, int]]:
    """Images of an agent's window inside a plan held at ``phase``.

    Returns ``(first_slot, last_slot, shift)`` triples for the shifts
    ``-T, 0, +T`` whose image intersects ``0..T-1``; slot ranges are clipped.
    A triple is a *full* instance when its unclipped range lies inside the plan.
    """
    out = []
    for shift in (-period, 0, period):
        lo = offset - phase + shift
        hi = lo + eta
        a, b = max(lo, 0), min(hi, period - 1)
        if a <= b:
            out.append((a, b, shift))
    return out


def window_mask(agent: AgentSpec, phase: int, period: int) -> np.ndarray:
    """Boolean mask over slots: True where the agent's window covers the slot."""
    mask = np.zeros(period, dtype=bool)
    for a, b, _ in window_instances(agent.offset, agent.eta, phase, period):
        mask[a : b + 1] = True
    return mask


def link_loads(x: np.ndarray, game: Game, phase: int = 0) -> np.ndarray:
    """Traffic on every link in every slot, shape ``(T, n_links)``."""
    game.check_shape(x)
    per_path = x.sum(axis=0)  # (T, P)
    return game.external.window(phase) + per_path @ game.network.incidence.T


def aggregate_traffic(x: np.ndarray, tau: int, game: Game, phase: int = 0) -> np.ndarray:
    """Link-traffic vector of slot ``tau``: external load plus every agent's path flows."""
    if not 0 <= tau < game.period:
        raise StructuralError(f"slot {tau} outside 0..{game.period - 1}")
    return link_loads(x, game, phase)[tau]


def path_price(lam: np.ndarray, p: int, net: NetworkModel, price: PriceModel) -> float:
    """Sum of link prices along path ``p`` for link-traffic vector ``lam``."""
    return float(sum(price(lam[l]) for l in net.paths[p]))


def path_prices(x: np.ndarray, game: Game, phase: int = 0) -> np.ndarray:
    """Unit price of every (slot, path), shape ``(T, n_paths)``."""
    return game.price(link_loads(x, game, phase)) @ game.network.incidence


def local_cost(i: int, x: np.ndarray, game: Game, phase: int = 0) -> float:
    """Cost of agent ``i`` over the T-slot plan: sum of unit path price times flow."""
    prices = path_prices(x, game, phase)
    return math.fsum((prices * x[i]).ravel())


def potential(x: np.ndarray, game: Game, phase: int = 0) -> float:
    """Global potential: ``gamma`` of every link load, summed over slots and links.

    ``math.fsum`` keeps the total independent of slot order, so rotating a
    plan (and advancing the phase with it) leaves the value bit-identical.
    """
    return math.fsum(gamma(link_loads(x, game, phase), game.price).ravel())


@dataclass
class AgentFeasibility:
    agent: int
    box: float = 0.0  # worst excursion outside [0, mu]
    demand: float = 0.0  # worst |window sum - D|
    outside: float = 0.0  # worst |entry| outside the window or off the agent's paths

    @property
    def ok(self) -> bool:
        return self.box == 0.0 and self.outside == 0.0 and self.demand <= FEAS_TOL

    @property
    def worst(self) -> float:
        return max(self.box, self.demand, self.outside)


@dataclass
class FeasibilityReport:
    agents: list[AgentFeasibility]

    @property
    def ok(self) -> bool:
        return all(a.ok for a in self.agents)

    @property
    def worst_demand(self) -> float:
        return max((a.demand for a in self.agents), default=0.0)

    @property
    def failures(self) -> list[AgentFeasibility]:
        return [a for a in self.agents if not a.ok]


def feasibility_check(x: np.ndarray, phase: int, game: Game) -> FeasibilityReport:
    """Check a plan held at ``phase`` against every active agent's constraints.

    For each active agent: entries lie in ``[0, mu]``; every window instance
    fully inside the plan carries exactly ``D``; the union of the window's
    images (the periodic reading of the plan) carries ``D``; and all entries
    outside the window or off the agent's paths are zero.
    """
    game.check_shape(x)
    T = game.period
    report = []
    for i, agent in enumerate(game.agents):
        if not agent.active:
            continue
        row = AgentFeasibility(i)
        xi = x[i]
        below = max(0.0, -float(xi.min(initial=0.0)))
        above = max(0.0, float(xi.max(initial=0.0)) - agent.mu)
        row.box = max(below, above)

        mask = window_mask(agent, phase, T)
        own = np.zeros(game.network.n_paths, dtype=bool)
        own[list(agent.path_ids)] = True
        allowed = mask[:, None] & own[None, :]
        row.outside = float(np.max(np.abs(xi[~allowed]), initial=0.0))

        per_slot = xi[:, own].sum(axis=1)
        sums = [math.fsum(per_slot[mask])]
        for a, b, shift in window_instances(agent.offset, agent.eta, phase, T):
            lo = agent.offset - phase + shift
            if lo >= 0 and lo + agent.eta <= T - 1:
                sums.append(math.fsum(per_slot[a : b + 1]))
        row.demand = max(abs(s - agent.demand) for s in sums)
        report.append(row)
    return FeasibilityReport(report)


def fill_window(agent: AgentSpec, phase: int, period: int, n_paths: int) -> np.ndarray:
    """Spread the agent's demand evenly over its window cells at ``phase``.

    Cells are (slot, path) pairs inside the window on the agent's own paths.
    Each cell gets ``D / n_cells`` clamped to ``mu``; anything clamped off is
    pushed, in lexicographic cell order, into cells that still have room.
    Returns a ``(T, n_paths)`` slice.
    """
    out = np.zeros((period, n_paths))
    if agent.demand == 0 or not agent.path_ids:
        return out
    slots = np.flatnonzero(window_mask(agent, phase, period))
    cells = [(tau, p) for tau in slots for p in agent.path_ids]
    share = min(agent.demand / len(cells), agent.mu)
    for tau, p in cells:
        out[tau, p] = share
    rest = agent.demand - share * len(cells)
    for tau, p in cells:
        if rest <= 0:
            break
        add = min(agent.mu - out[tau, p], rest)
        out[tau, p] += add
        rest -= add
    return out
