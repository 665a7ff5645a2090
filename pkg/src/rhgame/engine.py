"""Receding-horizon stepping: rotate the plan one slot, then let agents revise it.

``run`` records the predicted plans ``phi(t)``, phases ``t % T``, and the
implemented actions ``psi(t) = phi(t)[:, 0, :]``. Fault/repair events are
applied to ``phi(t-1)`` after ``psi(t-1)`` is recorded and before rotating, so
``phi(t_event)`` is the first plan that reflects the event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError
from .model import FEAS_TOL, Game, feasibility_check, fill_window, potential
from .routing import population_update

#: Slack allowed on the potential between consecutive non-event steps.
MONOTONE_TOL = 1e-9


class InvariantViolation(RuntimeError):
    """A run broke potential monotonicity, feasibility or conservation."""


def rotate(x: np.ndarray) -> np.ndarray:
    """Shift a plan forward one slot: slot ``s`` of the result is slot ``(s+1) % T`` of ``x``."""
    return np.roll(x, -1, axis=1)


def plan_norm(x: np.ndarray) -> float:
    """Euclidean norm over the flattened tensor, independent of entry order."""
    flat = np.asarray(x, dtype=np.float64).ravel()
    return math.sqrt(math.fsum(flat * flat))


def phase_step(theta: int, period: int) -> int:
    return (theta + 1) % period


@dataclass(frozen=True)
class RHState:
    x: np.ndarray
    theta: int


def rh_step(state: RHState, gamma: int, game: Game, backend: str | None = None) -> RHState:
    """One application of the receding-horizon map."""
    x_next = population_update(rotate(state.x), state.theta, gamma, game, backend)
    return RHState(x_next, phase_step(state.theta, game.period))


@dataclass(frozen=True)
class Event:
    """Fault or repair of a set of agents, taking effect in ``phi(time)``."""

    time: int
    kind: str  # "fault" | "repair"
    agents: tuple[int, ...]
    label: str = ""


def apply_event(x: np.ndarray, theta: int, game: Game, event: Event) -> tuple[np.ndarray, Game]:
    """Return the plan and population after ``event``.

    Faulted agents stop transmitting and their planned data is dropped.
    Repaired agents get a fresh uniform plan over their window at ``theta``.
    """
    agents = list(game.agents)
    y = x.copy()
    for i in event.agents:
        if event.kind == "fault":
            agents[i] = replace(agents[i], active=False)
            y[i] = 0.0
        elif event.kind == "repair":
            agents[i] = replace(agents[i], active=True)
            y[i] = fill_window(agents[i], theta, game.period, game.network.n_paths)
        else:
            raise ContractError(f"unknown event kind {event.kind!r}")
    return y, game.with_agents(agents)


@dataclass
class Trajectory:
    """Append-only record of a run.

    ``delta_phi[t]`` is ``||phi(t) - phi(t-1)||`` and ``update_norm[t]`` is
    ``||phi(t) - rotate(phi(t-1))||``, the part of the change made by agents
    (or events) rather than by the rotation. Both are ``nan`` at ``t = 0``.
    """

    period: int
    phi: list[np.ndarray] = field(default_factory=list)
    theta: list[int] = field(default_factory=list)
    psi: list[np.ndarray] = field(default_factory=list)
    games: list[Game] = field(default_factory=list)
    v_pred: list[float] = field(default_factory=list)
    delta_phi: list[float] = field(default_factory=list)
    update_norm: list[float] = field(default_factory=list)
    feas_worst: list[float] = field(default_factory=list)
    audit_worst: list[float] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.phi)

    @property
    def event_times(self) -> list[int]:
        return sorted({e.time for e in self.events})

    def segments(self) -> list[tuple[int, int]]:
        """Inclusive ``(start, end)`` step ranges between events."""
        bounds = [0] + [t for t in self.event_times if 0 < t < len(self)] + [len(self)]
        return [(a, b - 1) for a, b in zip(bounds, bounds[1:]) if b - 1 >= a]

    def append(self, x: np.ndarray, theta: int, game: Game) -> None:
        if self.phi:
            prev = self.phi[-1]
            self.delta_phi.append(plan_norm(x - prev))
            self.update_norm.append(plan_norm(x - rotate(prev)))
        else:
            self.delta_phi.append(float("nan"))
            self.update_norm.append(float("nan"))
        self.phi.append(x)
        self.theta.append(theta)
        self.psi.append(x[:, 0, :].copy())
        self.games.append(game)
        self.v_pred.append(potential(x, game, theta))


class ConservationAudit:
    """Checks implemented-plus-planned mass of every completed window instance.

    For each active agent and each window instance that started at or after
    the agent's (re)activation and ends inside the current plan, the data
    already sent plus the data still planned must equal the demand.
    """

    def __init__(self, n_agents: int):
        self.activated = np.zeros(n_agents, dtype=np.int64)
        self.sent: list[np.ndarray] = []  # per time: per-agent total of psi

    def activate(self, agents: Iterable[int], time: int) -> None:
        for i in agents:
            self.activated[i] = time

    def check(self, t: int, x: np.ndarray, game: Game) -> float:
        T = game.period
        per_slot = x.sum(axis=2)  # (N, T)
        worst = 0.0
        for i, agent in enumerate(game.agents):
            if not agent.active:
                continue
            k_lo = -(-(max(self.activated[i], t - T - agent.eta) - agent.offset) // T)
            k = k_lo
            while True:
                start = k * T + agent.offset
                end = start + agent.eta
                if end > t + T - 1:
                    break
                k += 1
                if start < self.activated[i] or end < t:
                    continue
                done = sum(self.sent[s][i] for s in range(start, t))
                planned = per_slot[i, max(start, t) - t : end - t + 1].sum()
                worst = max(worst, abs(done + planned - agent.demand))
        self.sent.append(per_slot[:, 0].copy())
        return worst


def run(
    initial: np.ndarray,
    steps: int,
    game: Game,
    events: Sequence[Event] = (),
    gamma: int = 1,
    strict: bool = False,
    backend: str | None = None,
    on_step: Callable[[int, Trajectory], None] | None = None,
) -> Trajectory:
    """Simulate ``steps`` receding-horizon steps from ``initial`` at phase 0.

    Every recorded plan is checked for feasibility and window conservation,
    and the potential for monotonicity between events; with ``strict`` a
    failed check raises :class:`InvariantViolation`.

    Raises:
        ContractError: if ``initial`` is infeasible at phase 0.
    """
    game.check_shape(initial)
    report = feasibility_check(initial, 0, game)
    if not report.ok:
        bad = report.failures[0]
        raise ContractError(f"initial plan infeasible for agent {bad.agent} (worst {bad.worst:g})")
    events = sorted(events, key=lambda e: e.time)
    for a, b in zip(events, events[1:]):
        if a.time == b.time and set(a.agents) & set(b.agents):
            raise ContractError("two events touch the same agent at the same time")
    traj = Trajectory(game.period)
    audit = ConservationAudit(game.n_agents)
    x = np.array(initial, dtype=np.float64, order="C")
    traj.append(x, 0, game)
    traj.feas_worst.append(max((a.worst for a in report.agents), default=0.0))
    traj.audit_worst.append(audit.check(0, x, game))

    pending = list(events)
    for t in range(1, steps + 1):
        theta = traj.theta[-1]
        event_step = False
        while pending and pending[0].time == t:
            ev = pending.pop(0)
            x, game = apply_event(x, theta, game, ev)
            if ev.kind == "repair":
                audit.activate(ev.agents, t)
            traj.events.append(ev)
            event_step = True
        state = rh_step(RHState(x, theta), gamma, game, backend)
        x = state.x
        traj.append(x, state.theta, game)

        report = feasibility_check(x, state.theta, game)
        traj.feas_worst.append(max((a.worst for a in report.agents), default=0.0))
        traj.audit_worst.append(audit.check(t, x, game))
        if strict:
            if not report.ok:
                raise InvariantViolation(f"step {t}: infeasible plan ({traj.feas_worst[-1]:g})")
            if traj.audit_worst[-1] > FEAS_TOL:
                raise InvariantViolation(f"step {t}: window conservation off by {traj.audit_worst[-1]:g}")
            if not event_step and traj.v_pred[-1] > traj.v_pred[-2] + MONOTONE_TOL:
                raise InvariantViolation(
                    f"step {t}: potential rose from {traj.v_pred[-2]!r} to {traj.v_pred[-1]!r}"
                )
        if on_step is not None:
            on_step(t, traj)
    return traj


@dataclass
class ConvergenceReport:
    start: int
    end: int
    tol: float
    t_star: int | None
    periodicity_defect: float | None

    @property
    def converged(self) -> bool:
        return self.t_star is not None

    def summary(self) -> str:
        if self.t_star is None:
            return f"[{self.start}, {self.end}] not converged (tol {self.tol:g})"
        return (
            f"[{self.start}, {self.end}] converged at t*={self.t_star} (tol {self.tol:g}), "
            f"psi periodicity defect {self.periodicity_defect:.3g}"
        )


def convergence_report(
    traj: Trajectory, tol: float = 1e-6, start: int = 0, end: int | None = None
) -> ConvergenceReport:
    """Find the first ``t*`` in ``[start, end]`` after which agents stop revising.

    ``t*`` is the first step such that the agent-made change
    ``||phi(s) - rotate(phi(s-1))||`` stays below ``tol`` for each of the
    next ``T`` steps inside the segment. The periodicity defect is
    ``max ||psi(t+T) - psi(t)||`` over ``t >= t*`` within the segment.
    """
    if not len(traj):
        raise ContractError("empty trajectory")
    T = traj.period
    end = len(traj) - 1 if end is None else end
    upd = np.asarray(traj.update_norm)
    t_star = None
    for t in range(start, end - T + 1):
        if np.all(upd[t + 1 : t + T + 1] <= tol):
            t_star = t
            break
    defect = None
    if t_star is not None:
        diffs = [
            plan_norm(traj.psi[t + T] - traj.psi[t]) for t in range(t_star, end - T + 1)
        ]
        defect = max(diffs, default=0.0)
    return ConvergenceReport(start, end, tol, t_star, defect)
