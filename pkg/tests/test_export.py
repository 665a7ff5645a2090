from __future__ import annotations

import json

import numpy as np
import pytest

from rhgame.errors import ConfigError
from rhgame.export import (
    load_final_state,
    metrics_header,
    plot_metrics_svg,
    read_metrics_csv,
    write_events,
    write_metrics_csv,
    write_trajectory,
)


def test_header_layout():
    assert metrics_header([4, 70]) == [
        "t", "V_pred", "V_impl",
        "delta_phi_4", "J_pred_4", "J_impl_4",
        "delta_phi_70", "J_pred_70", "J_impl_70",
        "delta_phi", "update_norm",
    ]


def test_csv_roundtrip(tmp_path, demo_result):
    path = write_metrics_csv(demo_result.metrics, demo_result.tracked, tmp_path / "m.csv")
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    cols = read_metrics_csv(path)
    assert len(cols["t"]) == 200 and cols["t"][0] == 1
    assert np.isnan(cols["V_impl"][0])  # before a full period is implemented
    v = np.array([r.v_pred for r in demo_result.metrics])
    np.testing.assert_array_equal(cols["V_pred"], v)  # repr round-trips exactly


def test_read_metrics_rejects_other_files(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        read_metrics_csv(p)
    p.write_text("t,V_pred,V_impl\n1,2\n")
    with pytest.raises(ConfigError) as info:
        read_metrics_csv(p)
    assert info.value.line == 2


def test_dump_roundtrip(tmp_path, demo_result):
    traj = demo_result.trajectory
    path = write_trajectory(traj, tmp_path / "d.jsonl")
    lines = path.read_text().splitlines()
    assert len(lines) == 1 + len(traj)
    head = json.loads(lines[0])
    assert head["record"] == "header" and head["period"] == 7
    step = json.loads(lines[1 + 100])
    np.testing.assert_array_equal(np.array(step["phi"]).reshape(traj.phi[100].shape), traj.phi[100])
    assert step["active"] == [a.id for a in traj.games[100].agents if a.active]
    game, x, theta, t = load_final_state(path)
    np.testing.assert_array_equal(x, traj.phi[-1])
    assert (theta, t) == (traj.theta[-1], len(traj) - 1)
    assert game.agents == traj.games[-1].agents


def test_events_log(tmp_path, demo_result):
    path = write_events(demo_result.trajectory, tmp_path / "e.jsonl")
    recs = [json.loads(l) for l in path.read_text().splitlines()]
    assert [(r["t"], r["kind"], r["group"]) for r in recs] == [(85, "fault", "B"), (125, "repair", "B")]
    assert len(recs[0]["agents"]) == 25


@pytest.mark.parametrize("content", ["", "{not json\n", '{"record": "step"}\n',
                                     '{"record": "header", "format": "rhgame-trajectory/1"}\n'])
def test_bad_dumps(tmp_path, content):
    p = tmp_path / "bad.jsonl"
    p.write_text(content)
    with pytest.raises(ConfigError):
        load_final_state(p)


def test_truncated_step_record(tmp_path, demo_result):
    path = write_trajectory(demo_result.trajectory, tmp_path / "d.jsonl")
    text = path.read_text()
    path.write_text(text[: len(text) - 500])
    with pytest.raises(ConfigError):
        load_final_state(path)


def test_svg_is_deterministic(tmp_path, demo_result):
    cols = read_metrics_csv(write_metrics_csv(demo_result.metrics, demo_result.tracked,
                                              tmp_path / "m.csv"))
    a = plot_metrics_svg(cols, tmp_path / "a.svg", [85, 125]).read_bytes()
    b = plot_metrics_svg(cols, tmp_path / "b.svg", [85, 125]).read_bytes()
    assert a.startswith(b"<?xml") and a == b
