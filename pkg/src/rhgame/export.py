"""Writers and readers for run outputs: metrics CSV, trajectory dump, SVG plots.

Trajectory dump layout (JSON lines, one object per line):

* first line, ``{"record": "header", ...}``: format tag, period, network
  (nodes, links, paths as link-index lists), price model, external load
  table (links x phases), and the agent list;
* then one ``{"record": "step", "t", "theta", "active", "phi"}`` line per
  recorded plan, where ``active`` lists active agent ids and ``phi`` is the
  plan tensor flattened agent-major, then slot, then path (C order of the
  ``(agents, T, paths)`` array).

The event log is a separate JSON-lines file with one ``{"t", "kind",
"group", "agents"}`` object per event.
"""

from __future__ import annotations

import csv
import json
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import Trajectory
from .errors import ConfigError
from .model import AgentSpec, ExternalLoad, Game, PriceModel
from .network import network_from_paths

DUMP_FORMAT = "rhgame-trajectory/1"


def metrics_header(tracked: Sequence[int]) -> list[str]:
    head = ["t", "V_pred", "V_impl"]
    for i in tracked:
        head += [f"delta_phi_{i}", f"J_pred_{i}", f"J_impl_{i}"]
    return head + ["delta_phi", "update_norm"]


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def write_metrics_csv(rows, tracked: Sequence[int], path: str | Path) -> Path:
    """One row per step; empty ``V_impl``/``J_impl`` cells before a full period is implemented."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(metrics_header(tracked))
        for r in rows:
            line = [str(r.t), _num(r.v_pred), _num(r.v_impl)]
            for i in tracked:
                line += [_num(r.delta_phi[i]), _num(r.j_pred[i]), _num(r.j_impl[i])]
            w.writerow(line + [_num(r.delta_phi_all), _num(r.update_norm)])
    return path


def read_metrics_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Columns of a metrics CSV as float arrays (empty cells become ``nan``)."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty metrics file") from None
        if head[:3] != ["t", "V_pred", "V_impl"]:
            raise ConfigError(f"{path}: not a metrics file (header {head[:3]})", 1)
        cols: list[list[float]] = [[] for _ in head]
        for n, row in enumerate(reader, start=2):
            if len(row) != len(head):
                raise ConfigError(f"{path}: expected {len(head)} fields", n)
            try:
                for c, cell in zip(cols, row):
                    c.append(float(cell) if cell else float("nan"))
            except ValueError:
                raise ConfigError(f"{path}: non-numeric field", n) from None
    return {h: np.array(c) for h, c in zip(head, cols)}


# --------------------------------------------------------------------------
# trajectory dump


def _header(game: Game) -> dict:
    net = game.network
    return {
        "record": "header",
        "format": DUMP_FORMAT,
        "period": game.period,
        "layout": "phi flattened as (agent, slot, path), C order",
        "network": {
            "nodes": [str(n) for n in net.nodes],
            "links": [[str(u), str(v)] for u, v in net.links],
            "paths": [list(p) for p in net.paths],
        },
        "price": {"kind": game.price.kind, "slope": game.price.slope,
                  "points": [list(p) for p in game.price.points]},
        "external": game.external.table.tolist(),
        "agents": [
            {"id": a.id, "source": str(a.source), "sink": str(a.sink), "demand": a.demand,
             "eta": a.eta, "offset": a.offset, "mu": a.mu, "paths": list(a.path_ids),
             "group": a.group}
            for a in game.agents
        ],
    }


def write_trajectory(traj: Trajectory, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(_header(traj.games[0])) + "\n")
        for t, (x, th, game) in enumerate(zip(traj.phi, traj.theta, traj.games)):
            rec = {
                "record": "step", "t": t, "theta": th,
                "active": [a.id for a in game.agents if a.active],
                "phi": x.ravel().tolist(),
            }
            fh.write(json.dumps(rec) + "\n")
    return path


def write_events(traj: Trajectory, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for e in traj.events:
            rec = {"t": e.time, "kind": e.kind, "group": e.label, "agents": list(e.agents)}
            fh.write(json.dumps(rec) + "\n")
    return path


def load_final_state(path: str | Path) -> tuple[Game, np.ndarray, int, int]:
    """Read a trajectory dump and return ``(game, phi, theta, t)`` of its last record.

    Raises:
        ConfigError: if the file is missing, truncated or malformed.
    """
    path = Path(path)
    try:
        fh = path.open(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read dump {path}: {exc.strerror}") from None
    header = last = None
    with fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc.msg})", n) from None
            if n == 1:
                if rec.get("record") != "header" or rec.get("format") != DUMP_FORMAT:
                    raise ConfigError(f"{path}: missing {DUMP_FORMAT} header", 1)
                header = rec
            elif rec.get("record") == "step":
                last = (n, rec)
    if header is None or last is None:
        raise ConfigError(f"{path}: dump has no step records")
    n, rec = last
    try:
        nd = header["network"]
        net = network_from_paths(nd["nodes"], [tuple(l) for l in nd["links"]], nd["paths"])
        pd = header["price"]
        price = PriceModel(pd["kind"], slope=pd["slope"], points=tuple(map(tuple, pd["points"])))
        T = int(header["period"])
        ext = np.array(header["external"], dtype=np.float64).reshape(net.n_links, T)
        active = set(rec["active"])
        agents = tuple(
            AgentSpec(id=a["id"], source=a["source"], sink=a["sink"], demand=float(a["demand"]),
                      eta=int(a["eta"]), offset=int(a["offset"]), mu=float(a["mu"]),
                      path_ids=tuple(a["paths"]), group=a.get("group", ""))
            for a in header["agents"]
        )
        agents = tuple(replace(a, active=a.id in active) for a in agents)
        game = Game(net, agents, price, T, ExternalLoad(ext))
        x = np.array(rec["phi"], dtype=np.float64).reshape(game.shape)
        return game, x, int(rec["theta"]), int(rec["t"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed dump ({exc})", n) from None


# --------------------------------------------------------------------------
# plots


def plot_metrics_svg(columns: dict[str, np.ndarray], path: str | Path, events: Sequence[int] = ()) -> Path:
    """Two stacked panels: potential series, and per-agent plan changes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "rhgame"
    path = Path(path)
    t = columns["t"]
    fig, (ax_v, ax_d) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax_v.plot(t, columns["V_pred"], label="V predicted")
    ax_v.plot(t, columns["V_impl"], label="V implemented", linestyle="--")
    ax_v.set_ylabel("potential")
    ax_v.legend()
    for name, col in columns.items():
        if name.startswith("delta_phi_"):
            ax_d.plot(t, col, label=f"agent {name.rsplit('_', 1)[1]}")
    ax_d.set_ylabel("plan change")
    ax_d.set_xlabel("t [s]")
    ax_d.legend()
    for ax in (ax_v, ax_d):
        for te in events:
            ax.axvline(te, color="grey", linewidth=0.8, linestyle=":")
    fig.tight_layout()
    # fixed metadata keeps repeated exports byte-identical
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
