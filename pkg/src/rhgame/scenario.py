"""Scenario files, seeded populations, initial plans and the end-to-end run.

Scenario files are YAML. Every key is checked against a fixed schema and
unknown keys are rejected; errors carry the line of the offending entry.
Units: one simulation step is one second; demands and rates are in data
units (per period and per slot/path respectively).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .engine import Event, Trajectory, convergence_report, plan_norm, run
from .errors import ConfigError
from .model import AgentSpec, ExternalLoad, Game, PriceModel, fill_window, gamma, local_cost
from .network import NetworkModel, build_network
from .oracle import equilibrium_residual

DEMO_RESOURCE = "demo.yaml"


# --------------------------------------------------------------------------
# YAML with line numbers


def _to_python(node: yaml.Node, path: tuple, lines: dict) -> Any:
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, value_node in node.value:
            key = key_node.value
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", key_node.start_mark.line + 1)
            out[key] = _to_python(value_node, path + (key,), lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_python(v, path + (k,), lines) for k, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def parse_yaml(text: str) -> tuple[dict, dict]:
    """Parse ``text`` into plain data plus a ``{key_path: line}`` map."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    if node is None:
        raise ConfigError("empty scenario file", 1)
    lines: dict = {}
    data = _to_python(node, (), lines)
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping", 1)
    return data, lines


# --------------------------------------------------------------------------
# Scenario


@dataclass(frozen=True)
class GroupSpec:
    name: str
    count: int
    source: str
    sink: str
    eta: tuple[int, int]
    offset: tuple[int, int]
    demand_low: float
    demand_high: float | None  # absolute upper bound, or None for ``fill``
    demand_fill: float | None  # upper bound as a fraction of window capacity
    mu: float


@dataclass(frozen=True)
class EventSpec:
    time: int
    kind: str
    group: str


@dataclass(frozen=True)
class Scenario:
    name: str
    period: int
    steps: int
    gamma: int
    seed: int
    hop_limit: int
    price: PriceModel
    nodes: tuple
    links: tuple
    external: tuple  # ("link" | "path", node tuple, loads tuple)
    groups: tuple[GroupSpec, ...]
    events: tuple[EventSpec, ...]
    track: tuple[int, ...] | None
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_agents(self) -> int:
        return sum(g.count for g in self.groups)

    def line(self, *path) -> int | None:
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path)

    def with_overrides(self, **kw) -> "Scenario":
        from dataclasses import replace

        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_TOP_KEYS = {
    "name", "period", "steps", "gamma", "seed", "hop_limit", "mu", "price", "network",
    "external", "groups", "distributions", "events", "track",
}
_DIST_KEYS = {"eta", "offset", "demand"}
_GROUP_KEYS = {"name", "count", "source", "sink", "mu"} | _DIST_KEYS


class _Reader:
    def __init__(self, data: dict, lines: dict):
        self.data, self.lines = data, lines

    def line(self, path) -> int | None:
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path)

    def fail(self, path, msg):
        raise ConfigError(msg, self.line(tuple(path)))

    def keys(self, obj: dict, allowed: set, path: tuple):
        if not isinstance(obj, dict):
            self.fail(path, f"{'.'.join(map(str, path)) or 'document'} must be a mapping")
        for k in obj:
            if k not in allowed:
                self.fail(path + (k,), f"unknown key {k!r}")

    def get(self, obj, key, path, kind, default=None, required=False):
        if key not in obj:
            if required:
                self.fail(path, f"missing required key {key!r}")
            return default
        value = obj[key]
        where = path + (key,)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self.fail(where, f"{key!r} must be an integer")
        elif kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.fail(where, f"{key!r} must be a number")
            value = float(value)
        elif kind is str:
            if not isinstance(value, (str, int)) or isinstance(value, bool):
                self.fail(where, f"{key!r} must be a string")
            value = str(value)
        elif kind is list:
            if not isinstance(value, list):
                self.fail(where, f"{key!r} must be a list")
        elif kind is dict:
            if not isinstance(value, dict):
                self.fail(where, f"{key!r} must be a mapping")
        return value

    def int_range(self, obj, key, path, default):
        value = obj.get(key, default)
        where = path + (key,)
        if (
            not isinstance(value, list)
            or len(value) != 2
            or any(isinstance(v, bool) or not isinstance(v, int) for v in value)
        ):
            self.fail(where, f"{key!r} must be a two-element integer range [low, high]")
        if value[0] > value[1]:
            self.fail(where, f"{key!r} range is empty: {value}")
        return (value[0], value[1])


def load_scenario(source: str | Path, text: str | None = None) -> Scenario:
    """Read a scenario from ``source`` (a path), or from ``text`` when given."""
    if text is None:
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {source}: {exc.strerror}") from None
    data, lines = parse_yaml(text)
    r = _Reader(data, lines)
    r.keys(data, _TOP_KEYS, ())

    period = r.get(data, "period", (), int, 7)
    if period < 1:
        r.fail(("period",), "period must be >= 1")
    steps = r.get(data, "steps", (), int, 200)
    if steps < 0:
        r.fail(("steps",), "steps must be >= 0")
    gam = r.get(data, "gamma", (), int, 1)
    if gam < 1:
        r.fail(("gamma",), "gamma must be >= 1")
    seed = r.get(data, "seed", (), int, 0)
    hop_limit = r.get(data, "hop_limit", (), int, 6)
    mu = r.get(data, "mu", (), float, 1.0)
    if mu <= 0:
        r.fail(("mu",), "mu must be positive")

    pdata = r.get(data, "price", (), dict, {"kind": "linear", "slope": 1.0})
    r.keys(pdata, {"kind", "slope", "points"}, ("price",))
    kind = r.get(pdata, "kind", ("price",), str, "linear")
    try:
        if kind == "linear":
            price = PriceModel("linear", slope=r.get(pdata, "slope", ("price",), float, 1.0))
        elif kind == "piecewise":
            pts = r.get(pdata, "points", ("price",), list, required=True)
            price = PriceModel("piecewise", points=tuple((float(a), float(b)) for a, b in pts))
        else:
            r.fail(("price", "kind"), f"unknown price kind {kind!r}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        r.fail(("price",), f"invalid price model: {exc}")

    ndata = r.get(data, "network", (), dict, required=True)
    r.keys(ndata, {"nodes", "links"}, ("network",))
    nodes = tuple(str(n) for n in r.get(ndata, "nodes", ("network",), list, required=True))
    links = []
    for k, link in enumerate(r.get(ndata, "links", ("network",), list, required=True)):
        if not isinstance(link, list) or len(link) != 2:
            r.fail(("network", "links", k), "each link must be a [from, to] pair")
        u, v = str(link[0]), str(link[1])
        if u not in nodes or v not in nodes:
            r.fail(("network", "links", k), f"link [{u}, {v}] references an unknown node")
        if (u, v) in links:
            r.fail(("network", "links", k), f"duplicate link [{u}, {v}]")
        links.append((u, v))

    external = []
    for k, item in enumerate(r.get(data, "external", (), list, [])):
        where = ("external", k)
        r.keys(item, {"link", "path", "load"}, where)
        if ("link" in item) == ("path" in item):
            r.fail(where, "external entry needs exactly one of 'link' or 'path'")
        what = "link" if "link" in item else "path"
        seq = tuple(str(n) for n in r.get(item, what, where, list))
        if len(seq) < 2 or (what == "link" and len(seq) != 2):
            r.fail(where + (what,), f"bad external {what}")
        for a, b in zip(seq, seq[1:]):
            if (a, b) not in links:
                r.fail(where + (what,), f"external load on missing link [{a}, {b}]")
        load = item.get("load", 0.0)
        loads = load if isinstance(load, list) else [load] * period
        if len(loads) != period or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0 or not math.isfinite(v)
            for v in loads
        ):
            r.fail(where + ("load",), f"load must be a nonnegative number or a list of {period}")
        external.append((what, seq, tuple(float(v) for v in loads)))

    dist = r.get(data, "distributions", (), dict, {})
    r.keys(dist, _DIST_KEYS, ("distributions",))
    groups = []
    names = set()
    for k, g in enumerate(r.get(data, "groups", (), list, required=True)):
        where = ("groups", k)
        r.keys(g, _GROUP_KEYS, where)
        name = r.get(g, "name", where, str, required=True)
        if name in names:
            r.fail(where + ("name",), f"duplicate group name {name!r}")
        names.add(name)
        count = r.get(g, "count", where, int, required=True)
        if count < 0:
            r.fail(where + ("count",), "count must be >= 0")
        src = r.get(g, "source", where, str, required=True)
        snk = r.get(g, "sink", where, str, required=True)
        for key, node in (("source", src), ("sink", snk)):
            if node not in nodes:
                r.fail(where + (key,), f"unknown node {node!r}")

        def pick(key, default):
            if key in g:
                return g, where
            if key in dist:
                return dist, ("distributions",)
            return {key: default}, where

        obj, p = pick("eta", [2, 5])
        eta = r.int_range(obj, "eta", p, [2, 5])
        obj, p = pick("offset", [0, 6])
        offset = r.int_range(obj, "offset", p, [0, 6])
        obj, p = pick("demand", {"low": 0.5, "fill": 0.5})
        d = r.get(obj, "demand", p, dict)
        r.keys(d, {"low", "high", "fill"}, p + ("demand",))
        low = r.get(d, "low", p + ("demand",), float, 0.5)
        high = r.get(d, "high", p + ("demand",), float)
        fill = r.get(d, "fill", p + ("demand",), float)
        if (high is None) == (fill is None):
            r.fail(p + ("demand",), "demand needs exactly one of 'high' or 'fill'")
        gmu = r.get(g, "mu", where, float, mu)
        groups.append(GroupSpec(name, count, src, snk, eta, offset, low, high, fill, gmu))

    events = []
    for k, e in enumerate(r.get(data, "events", (), list, [])):
        where = ("events", k)
        r.keys(e, {"time", "kind", "group"}, where)
        t = r.get(e, "time", where, int, required=True)
        ek = r.get(e, "kind", where, str, required=True)
        if ek not in ("fault", "repair"):
            r.fail(where + ("kind",), f"event kind must be 'fault' or 'repair', not {ek!r}")
        grp = r.get(e, "group", where, str, required=True)
        if grp not in names:
            r.fail(where + ("group",), f"unknown group {grp!r}")
        events.append(EventSpec(t, ek, grp))

    track = data.get("track")
    if track is not None:
        if not isinstance(track, list) or any(
            isinstance(v, bool) or not isinstance(v, int) for v in track
        ):
            r.fail(("track",), "track must be a list of agent ids")
        track = tuple(track)

    return Scenario(
        name=r.get(data, "name", (), str, "scenario"),
        period=period, steps=steps, gamma=gam, seed=seed, hop_limit=hop_limit,
        price=price, nodes=nodes, links=tuple(links), external=tuple(external),
        groups=tuple(groups), events=tuple(events), track=track, lines=lines,
    )


def demo_text() -> str:
    """The shipped demo scenario, as YAML text."""
    return resources.files("rhgame.data").joinpath(DEMO_RESOURCE).read_text(encoding="utf-8")


def load_demo() -> Scenario:
    return load_scenario("<demo>", demo_text())


@dataclass
class Issue:
    message: str
    line: int | None = None

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}" if self.line else self.message


def build_network_for(scn: Scenario) -> NetworkModel:
    return build_network(scn.nodes, scn.links, [(g.source, g.sink) for g in scn.groups], scn.hop_limit)


def _demand_high(g: GroupSpec, eta: int, n_paths: int) -> float:
    cap = g.mu * (eta + 1) * n_paths
    return g.demand_high if g.demand_high is not None else g.demand_fill * cap


def validate_scenario(scn: Scenario, net: NetworkModel | None = None) -> list[Issue]:
    """Scenario invariants that can be checked without running the dynamics."""
    issues = []
    net = net or build_network_for(scn)
    T = scn.period
    for k, g in enumerate(scn.groups):
        where = ("groups", k)
        n_paths = len(net.paths_between(g.source, g.sink))
        if g.count and n_paths == 0:
            issues.append(Issue(f"group {g.name}: no path from {g.source} to {g.sink} "
                                f"within {scn.hop_limit} hops", scn.line(*where)))
            continue
        if not (0 <= g.eta[0] and g.eta[1] <= T - 1):
            issues.append(Issue(f"group {g.name}: eta support {list(g.eta)} outside 0..{T - 1}",
                                scn.line(*where, "eta")))
        if not (0 <= g.offset[0] and g.offset[1] <= T - 1):
            issues.append(Issue(f"group {g.name}: offset support {list(g.offset)} outside 0..{T - 1}",
                                scn.line(*where, "offset")))
        if g.demand_low < 0:
            issues.append(Issue(f"group {g.name}: negative demand", scn.line(*where, "demand")))
        # the smallest window must fit the largest demand the distribution can draw
        worst_cap = g.mu * (g.eta[0] + 1) * n_paths
        high = _demand_high(g, g.eta[0], n_paths)
        if high > worst_cap * (1 + 1e-12) or g.demand_low > worst_cap * (1 + 1e-12):
            issues.append(Issue(
                f"group {g.name}: demand support up to {max(high, g.demand_low):g} exceeds "
                f"window capacity {worst_cap:g}", scn.line(*where, "demand")))
        if high < g.demand_low:
            issues.append(Issue(f"group {g.name}: demand support [{g.demand_low:g}, {high:g}] "
                                "is empty", scn.line(*where, "demand")))
    for k, (a, b) in enumerate(zip(scn.events, scn.events[1:])):
        if b.time <= a.time:
            issues.append(Issue(f"event times must be strictly increasing ({a.time} then {b.time})",
                                scn.line("events", k + 1)))
    state: dict[str, bool] = {}
    for k, e in sorted(enumerate(scn.events), key=lambda ke: ke[1].time):
        # events past the horizon are legal (a shortened run never reaches them)
        if e.time < 1:
            issues.append(Issue(f"event time {e.time} must be >= 1", scn.line("events", k)))
        faulted = state.get(e.group, False)
        if e.kind == "fault" and faulted:
            issues.append(Issue(f"group {e.group} faulted twice without repair", scn.line("events", k)))
        if e.kind == "repair" and not faulted:
            issues.append(Issue(f"repair of group {e.group} precedes its fault", scn.line("events", k)))
        state[e.group] = e.kind == "fault"
    if scn.track:
        for i in scn.track:
            if not 0 <= i < scn.n_agents:
                issues.append(Issue(f"tracked agent {i} outside 0..{scn.n_agents - 1}", scn.line("track")))
    return issues


def generate_population(scn: Scenario, net: NetworkModel | None = None) -> list[AgentSpec]:
    """Seeded draw of every agent's (demand, window length, offset).

    Agents are numbered consecutively in group order.

    Raises:
        ConfigError: if the distribution supports cannot produce a feasible agent.
    """
    net = net or build_network_for(scn)
    rng = np.random.default_rng(scn.seed)
    agents = []
    for k, g in enumerate(scn.groups):
        paths = tuple(net.paths_between(g.source, g.sink))
        for _ in range(g.count):
            eta = int(rng.integers(g.eta[0], g.eta[1] + 1))
            offset = int(rng.integers(g.offset[0], g.offset[1] + 1))
            high = _demand_high(g, eta, len(paths))
            cap = g.mu * (eta + 1) * len(paths)
            if high < g.demand_low or high > cap * (1 + 1e-12) or not paths:
                raise ConfigError(f"group {g.name}: demand support cannot fit window "
                                  f"(eta={eta}, capacity {cap:g})", scn.line("groups", k))
            demand = float(rng.uniform(g.demand_low, high))
            agents.append(AgentSpec(
                id=len(agents), source=g.source, sink=g.sink, demand=min(demand, cap),
                eta=eta, offset=offset, mu=g.mu, path_ids=paths, group=g.name,
            ))
    return agents


def external_load(scn: Scenario, net: NetworkModel) -> ExternalLoad:
    """Per-link, per-phase load table; path entries add their load to every link on the path."""
    table = np.zeros((net.n_links, scn.period))
    for _, seq, loads in scn.external:
        for a, b in zip(seq, seq[1:]):
            table[net.link_index(a, b)] += loads
    return ExternalLoad(table)


def build_game(scn: Scenario) -> Game:
    net = build_network_for(scn)
    issues = validate_scenario(scn, net)
    if issues:
        raise ConfigError(issues[0].message, issues[0].line)
    agents = generate_population(scn, net)
    return Game(net, tuple(agents), scn.price, scn.period, external_load(scn, net))


def initial_strategy(game: Game, phase: int = 0) -> np.ndarray:
    """Uniform plan: each agent's demand spread evenly over its window cells."""
    x = np.zeros(game.shape)
    for i, agent in enumerate(game.agents):
        if agent.active:
            x[i] = fill_window(agent, phase, game.period, game.network.n_paths)
    return x


def scenario_events(scn: Scenario, game: Game) -> list[Event]:
    members = {g.name: tuple(i for i, a in enumerate(game.agents) if a.group == g.name)
               for g in scn.groups}
    return [Event(e.time, e.kind, members[e.group], e.group) for e in scn.events]


def default_track(scn: Scenario, game: Game) -> tuple[int, ...]:
    """Two agents from groups never hit by an event, else the first two agents."""
    hit = {e.group for e in scn.events}
    firsts = [next(i for i, a in enumerate(game.agents) if a.group == g.name)
              for g in scn.groups if g.count and g.name not in hit]
    if len(firsts) < 2:
        firsts = list(range(min(2, game.n_agents)))
    return tuple(firsts[:2])


# --------------------------------------------------------------------------
# metrics


@dataclass
class MetricsRow:
    t: int
    v_pred: float
    v_impl: float | None
    delta_phi: dict[int, float]
    j_pred: dict[int, float]
    j_impl: dict[int, float | None]
    delta_phi_all: float
    update_norm: float


def _implemented_terms(traj: Trajectory, s: int, tracked) -> tuple[float, dict[int, float]]:
    """Potential and tracked-agent costs of the single implemented slot ``psi(s)``."""
    game = traj.games[s]
    T = traj.period
    psi = traj.psi[s]
    inc = game.network.incidence
    loads = game.external.table[:, s % T] + inc @ psi.sum(axis=0)
    v = math.fsum(gamma(loads, game.price))
    prices = inc.T @ game.price(loads)
    return v, {i: math.fsum(prices * psi[i]) for i in tracked}


def compute_metrics(traj: Trajectory, tracked) -> list[MetricsRow]:
    """One row per executed step ``t = 1..steps``."""
    T = traj.period
    terms = [_implemented_terms(traj, s, tracked) for s in range(len(traj))]
    rows = []
    for t in range(1, len(traj)):
        game, x, th = traj.games[t], traj.phi[t], traj.theta[t]
        full = t >= T - 1
        window = terms[t - T + 1 : t + 1] if full else []
        rows.append(MetricsRow(
            t=t,
            v_pred=traj.v_pred[t],
            v_impl=math.fsum(v for v, _ in window) if full else None,
            delta_phi={i: plan_norm(x[i] - traj.phi[t - 1][i]) for i in tracked},
            j_pred={i: local_cost(i, x, game, th) for i in tracked},
            j_impl={i: (math.fsum(c[i] for _, c in window) if full else None) for i in tracked},
            delta_phi_all=traj.delta_phi[t],
            update_norm=traj.update_norm[t],
        ))
    return rows


@dataclass
class SegmentSummary:
    start: int
    end: int
    t_star: int | None
    periodicity_defect: float | None
    max_residual: float
    residual_scale: float
    tol: float

    @property
    def residual_ok(self) -> bool:
        return self.max_residual <= 1e-6 * self.residual_scale

    def text(self) -> str:
        conv = (f"t*={self.t_star}, psi periodicity defect {self.periodicity_defect:.3g}"
                if self.t_star is not None else f"not converged (tol {self.tol:g})")
        return (f"segment [{self.start}, {self.end}]: {conv}; equilibrium residual "
                f"{self.max_residual:.3g} (mean cost {self.residual_scale:.4g})")


@dataclass
class ScenarioResult:
    scenario: Scenario
    game: Game
    trajectory: Trajectory
    tracked: tuple[int, ...]
    metrics: list[MetricsRow]
    segments: list[SegmentSummary]


def summarize_segments(traj: Trajectory, tol: float = 1e-6) -> list[SegmentSummary]:
    out = []
    for start, end in traj.segments():
        rep = convergence_report(traj, tol, start, end)
        res = equilibrium_residual(traj.phi[end], traj.games[end], traj.theta[end])
        out.append(SegmentSummary(start, end, rep.t_star, rep.periodicity_defect,
                                  res.max_gap, res.scale, tol))
    return out


def run_scenario(
    scn: Scenario, tol: float = 1e-6, strict: bool = False, backend: str | None = None
) -> ScenarioResult:
    """Generate the population, build the uniform initial plan, run, and compute metrics."""
    game = build_game(scn)
    x0 = initial_strategy(game)
    events = scenario_events(scn, game)
    traj = run(x0, scn.steps, game, events, scn.gamma, strict=strict, backend=backend)
    tracked = scn.track if scn.track is not None else default_track(scn, game)
    metrics = compute_metrics(traj, tracked)
    return ScenarioResult(scn, game, traj, tuple(tracked), metrics, summarize_segments(traj, tol))
