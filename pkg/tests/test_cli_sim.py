"""The `semnav sim` command: JSONL output and determinism."""
import json

from semnav.cli import main


def run_cli(capsys, *extra):
    rc = main(["sim", "--scenario", "scenarios/office.json", "--seed", "5",
               "--duration", "5", *extra])
    assert rc == 0
    return [json.loads(line) for line in capsys.readouterr().out.splitlines()]


def test_one_line_per_second_plus_summary(capsys):
    lines = run_cli(capsys)
    assert len(lines) == 6
    assert [l["t"] for l in lines[:5]] == [1.0, 2.0, 3.0, 4.0, 5.0]
    summary = lines[-1]
    assert summary["summary"] is True
    assert summary["scenario"] == "office"
    assert summary["steps"] == 100
    assert summary["laser_beams"] == 961


def test_headless_flag_accepted_and_deterministic(capsys):
    a = run_cli(capsys, "--headless")
    b = run_cli(capsys, "--headless")
    assert a == b


def test_state_lines_carry_world_objects(capsys):
    lines = run_cli(capsys)
    state = lines[0]
    assert set(state["humans"]) == {"alice", "bob"}
    assert set(state["doors"]) == {"lab", "store"}
    assert len(state["robot"]) == 3
