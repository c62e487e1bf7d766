import json
import math
import subprocess
import sys

import numpy as np
import pytest

from evoelim.cli import main
from evoelim.game import build_rps4, dump_game
from evoelim.io import read_trajectory_csv


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_game_subcommand(capsys):
    code, out, _ = run(["game", "--game", "rps4:eps=0.1,alpha=0.1"], capsys)
    assert code == 0
    u = np.array(json.loads(out)["u"])
    assert np.allclose(u, build_rps4(0.1, 0.1).u)


def test_simulate_br_writes_csvs(tmp_path, capsys):
    code, _, _ = run(
        ["simulate", "--game", "rps4:eps=0.1,alpha=0.1", "--dyn", "br", "--x0", "0.7,0.15,0.1,0.05",
         "--t", "30", "--out", str(tmp_path)],
        capsys,
    )
    assert code == 0
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,x1,x2,x3,x4"
    t, x = read_trajectory_csv(tmp_path / "trajectory.csv")
    assert t[-1] == 30.0
    assert x[-1, 3] == pytest.approx(0.05 * math.exp(-30), rel=1e-12)
    # 17 significant digits round-trip floats exactly
    first = lines[1].split(",")
    assert float(first[1]) == 0.7
    ev = (tmp_path / "events.csv").read_text().splitlines()
    assert ev[0] == "t,from,to"
    assert len(ev) > 5
    assert {row.split(",")[1] for row in ev[1:]} <= {"1", "2", "3"}
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["elimination_4"]["eliminated"]


def test_simulate_smooth_report(tmp_path, capsys):
    code, _, _ = run(
        ["simulate", "--dyn", "bnn", "--f", "power", "--p", "2", "--x0", "0.4,0.3,0.2,0.1", "--t", "5",
         "--out", str(tmp_path)],
        capsys,
    )
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["dynamics"] == {"kind": "bnn", "f": "power", "p": 2.0}
    assert report["stats"]["max_simplex_drift"] <= 1e-7
    assert "lyapunov_final" in report


def test_equilibria_json_and_determinism(tmp_path, capsys):
    argv = ["equilibria", "--game", "rps4:eps=0.2,alpha=0.1"]
    code, out1, _ = run(argv, capsys)
    assert code == 0
    data = json.loads(out1)
    assert data["used"] == [4]
    assert data["nash"][0]["strategy"] == 4 and data["nash"][0]["strict"]
    _, out2, _ = run(argv, capsys)
    assert out1 == out2
    main(argv + ["--out", str(tmp_path / "a")])
    main(argv + ["--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "equilibria.json").read_bytes() == (tmp_path / "b" / "equilibria.json").read_bytes()


def test_equilibria_g0_uses_all(capsys):
    code, out, _ = run(["equilibria", "--game", "g0:eps=0.1"], capsys)
    assert code == 0 and json.loads(out)["used"] == [1, 2, 3, 4]


def test_stability_exit_codes(capsys):
    code, out, _ = run(["stability", "--dyn", "replicator"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["vertex_inequalities"] and data["certificate"]["p"] is not None
    # exponential dynamics with lambda = 1 violates the vertex inequalities at eps = 0.5
    code, out, _ = run(["stability", "--game", "rps4:eps=0.5,alpha=0.1", "--dyn", "monotonic_exp", "--lam", "1"], capsys)
    assert code == 1
    assert json.loads(out)["vertex_inequalities"] is False


def test_invalid_input_exit_2(capsys):
    assert run(["game", "--game", "rps4:eps=0.1,alpha=0.5"], capsys)[0] == 2
    assert run(["game", "--game", "nosuchfile.json"], capsys)[0] == 2
    assert run(["simulate", "--x0", "0.5,0.6,0,0", "--t", "1"], capsys)[0] == 2
    assert run(["simulate", "--x0", "a,b", "--t", "1"], capsys)[0] == 2
    assert run(["simulate", "--t", "1"], capsys)[0] == 2
    code, _, err = run(["simulate", "--dyn", "br", "--x0", "0.05,0.05,0.05,0.85", "--t", "1"], capsys)
    assert code == 2 and "strategy 4" in err
    assert run(["stability", "--dyn", "bnn"], capsys)[0] == 2
    assert run(["basin", "--jobs", "0"], capsys)[0] == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_integration_failure_exit_3_keeps_partial(tmp_path, capsys):
    game = tmp_path / "big.json"
    game.write_text(json.dumps({"u": [[2000.0, 0.0], [0.0, 0.0]]}))
    out = tmp_path / "run"
    code, _, _ = run(
        ["simulate", "--game", str(game), "--dyn", "monotonic_exp", "--x0", "0.5,0.5", "--t", "1", "--out", str(out)],
        capsys,
    )
    assert code == 3
    assert (out / "trajectory.csv").is_file()
    assert "underflow" in json.loads((out / "report.json").read_text())["error"]


def test_json_game_file(tmp_path, capsys):
    path = tmp_path / "g.json"
    path.write_text(dump_game(build_rps4(0.2, 0.1)))
    code, out, _ = run(["equilibria", "--game", str(path)], capsys)
    assert code == 0 and json.loads(out)["used"] == [4]


def test_config_file_and_flag_override(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("EVOELIM_SEED", raising=False)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dyn": "br", "count": 5, "seed": 3, "filter": "br_singleton_not4"}))
    code, out, _ = run(["basin", "--config", str(cfg)], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["seed"] == 3 and data["count"] == 5 and data["fraction"] == 1.0
    code, out, _ = run(["basin", "--config", str(cfg), "--count", "7", "--seed", "9"], capsys)
    data = json.loads(out)
    assert data["count"] == 7 and data["seed"] == 9
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"colour": "red"}))
    assert run(["basin", "--config", str(bad)], capsys)[0] == 2


def test_env_seed_overrides_config_not_flags(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dyn": "br", "count": 3, "seed": 3}))
    monkeypatch.setenv("EVOELIM_SEED", "11")
    assert json.loads(run(["basin", "--config", str(cfg)], capsys)[1])["seed"] == 11
    assert json.loads(run(["basin", "--config", str(cfg), "--seed", "2"], capsys)[1])["seed"] == 2
    monkeypatch.setenv("EVOELIM_SEED", "x")
    assert run(["basin", "--config", str(cfg)], capsys)[0] == 2


def test_basin_output_independent_of_jobs(capsys):
    argv = ["basin", "--dyn", "br", "--count", "20", "--seed", "4"]
    a = run(argv, capsys)[1]
    b = run(argv + ["--jobs", "2"], capsys)[1]
    assert a == b


def test_extend_subcommand(capsys):
    code, out, _ = run(["extend", "--extra", "0.25,0.25,0.25,0.25", "--seed", "1"], capsys)
    data = json.loads(out)
    assert data["game"]["u"] and len(data["game"]["u"]) == 5
    assert code == (0 if all(c["pass"] for c in data["checks"].values()) else 1)


def test_verify_outputs(tmp_path, capsys):
    code, _, err = run(["verify", "--suite", "switching_gaps", "--out", str(tmp_path)], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    for rec in summary.values():
        assert set(rec) >= {"pass", "measured", "bound"}
    xml = (tmp_path / "junit.xml").read_text()
    assert xml.startswith("<?xml") and "<testsuite" in xml
    assert err.count("PASS") == len(summary)
    first = (tmp_path / "summary.json").read_bytes()
    run(["verify", "--suite", "switching_gaps", "--out", str(tmp_path)], capsys)
    assert (tmp_path / "summary.json").read_bytes() == first


def test_verify_unknown_suite(capsys):
    assert run(["verify", "--suite", "nope"], capsys)[0] == 2


def test_console_script_runs():
    res = subprocess.run(
        [sys.executable, "-m", "evoelim.cli", "game", "--game", "g0:eps=0.1"], capture_output=True, text=True
    )
    assert res.returncode == 0
    assert json.loads(res.stdout)["u"][3][0] == pytest.approx(-0.3)
