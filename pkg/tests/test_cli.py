import json

import pytest

from corridor_opt.cli import EXIT_CHECK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, main
from corridor_opt.report import read_column_csv

TINY = {
    "algorithm": "mp-pa-vat",
    "seed": 0,
    "deployment": {"rings": 0},
    "regions": {
        "ground": {"x": [-300, 300], "y": [-300, 300]},
        "corridors": [{"name": "Q", "x": [-320, -280], "y": [-400, 400], "height": 120}],
        "mixing_ratio": 0.5,
        "ground_step": 60,
        "corridor_step": 40,
    },
    "objective": {"mu": 0.1, "nu": 0.1},
    "optimizer": {"eta0_theta": 0.5, "eta0_rho": 0.9, "eps1": 1e-6, "eps2": 1e-6, "eps3": 1e-6, "max_outer": 40, "max_inner": 300},
}


@pytest.fixture
def scenario(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


def last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


@pytest.mark.parametrize("algo", ["max-rss-vat", "max-sinr-pa-vat", "mp-pa-vat", "smm-pa-vat"])
def test_optimize_then_evaluate_round_trip(scenario, tmp_path, capsys, algo):
    out = tmp_path / "run"
    assert main(["optimize", "--scenario", str(scenario), "--algo", algo, "--out", str(out)]) == EXIT_OK
    result = last_json(capsys)
    for name in ("config.csv", "metrics.csv", "trace.csv", "partition.csv", "report.json", "cdf_sinr_uav.csv"):
        assert (out / name).is_file()
    cfg = str(out / "config.csv")
    assert main(["evaluate", "--scenario", str(scenario), "--algo", algo, "--tilts", cfg, "--powers", cfg]) == EXIT_OK
    assert last_json(capsys)["objective"] == pytest.approx(result["objective"], rel=1e-9)
    assert main(["verify-partition", "--scenario", str(scenario), "--tilts", cfg, "--powers", cfg,
                 "--partition", str(out / "partition.csv")]) == EXIT_OK  # fmt: skip


def test_optimize_is_byte_deterministic(scenario, tmp_path, capsys):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["optimize", "--scenario", str(scenario), "--out", str(out), "--seed", "4"]) == EXIT_OK
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    assert names == sorted(p.name for p in outs[1].glob("*.csv"))
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_json_emit_and_stream(scenario, tmp_path, capsys):
    out = tmp_path / "j"
    code = main(["optimize", "--scenario", str(scenario), "--algo", "max-rss-vat", "--out", str(out), "--emit", "json", "--stream"])
    assert code == EXIT_OK
    captured = capsys.readouterr()
    records = [json.loads(line) for line in captured.err.strip().splitlines()]
    assert [r["outer"] for r in records] == list(range(1, len(records) + 1))
    assert [p.name for p in out.iterdir()] == ["report.json"]
    assert json.loads((out / "report.json").read_text())["trace"][-1] == records[-1]["objective"]


def test_grad_check_passes(scenario, capsys):
    assert main(["grad-check", "--scenario", str(scenario), "--trials", "100", "--tol", "1e-5"]) == EXIT_OK
    result = last_json(capsys)
    assert result["failures"] == 0 and result["components"] > 1000


def test_grad_check_failure_exits_3(scenario, monkeypatch, capsys):
    from corridor_opt import cli
    from corridor_opt.gradcheck import GradCheckFailure

    bad = GradCheckFailure(trial=0, kind="sinr", variable="rho", component=1, analytic=1.0, numeric=1.1)
    monkeypatch.setattr(cli, "run_gradcheck", lambda *a, **k: (10, [bad]))
    assert main(["grad-check", "--scenario", str(scenario), "--trials", "3"]) == EXIT_CHECK
    assert "analytic 1 vs numeric 1.1" in capsys.readouterr().err


def test_verify_partition_flags_a_bad_partition(scenario, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["optimize", "--scenario", str(scenario), "--algo", "max-rss-vat", "--out", str(out)]) == EXIT_OK
    lines = (out / "partition.csv").read_text().splitlines()
    fields = lines[1].split(",")
    fields[-1] = "2" if fields[-1] != "2" else "3"
    lines[1] = ",".join(fields)
    (out / "bad.csv").write_text("\n".join(lines) + "\n")
    cfg = str(out / "config.csv")
    code = main(["verify-partition", "--scenario", str(scenario), "--tilts", cfg, "--powers", cfg, "--partition", str(out / "bad.csv")])
    assert code == EXIT_CHECK


def test_missing_scenario_names_the_path(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["optimize", "--scenario", str(missing), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert str(missing) in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["optimize", "--scenario", "x.json"],
        ["optimize", "--scenario", "x.json", "--out", "o", "--algo", "newton"],
        ["frobnicate"],
        ["grad-check", "--scenario", "x.json", "--trials", "0"],
    ],
)
def test_bad_arguments_exit_1(argv, capsys):
    assert main(argv) == EXIT_INVALID


def test_invalid_scenario_names_the_field(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({**TINY, "regions": {**TINY["regions"], "mixing_ratio": 2}}))
    assert main(["grad-check", "--scenario", str(path), "--trials", "1"]) == EXIT_INVALID
    assert "regions.mixing_ratio" in capsys.readouterr().err


def test_evaluate_rejects_wrong_row_count_and_overpower(scenario, tmp_path, capsys):
    (tmp_path / "c.csv").write_text("bs_id,tilt_deg,power_dbm\n1,0,43\n2,0,43\n")
    c = str(tmp_path / "c.csv")
    assert main(["evaluate", "--scenario", str(scenario), "--tilts", c, "--powers", c]) == EXIT_INVALID
    (tmp_path / "d.csv").write_text("bs_id,tilt_deg,power_dbm\n1,0,43\n2,0,50\n3,0,43\n")
    d = str(tmp_path / "d.csv")
    assert main(["evaluate", "--scenario", str(scenario), "--tilts", d, "--powers", d]) == EXIT_INVALID
    assert "rho_max" in capsys.readouterr().err


def test_numerical_failure_exits_2(scenario, tmp_path, monkeypatch, capsys):
    from corridor_opt import cli
    from corridor_opt.objectives import NumericalError

    def boom(*a, **k):
        raise NumericalError("objective is not finite")

    monkeypatch.setattr(cli, "optimize", boom)
    assert main(["optimize", "--scenario", str(scenario), "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL
    assert "numerical failure" in capsys.readouterr().err


def test_evaluate_writes_report(scenario, tmp_path, capsys):
    (tmp_path / "c.csv").write_text("bs_id,tilt_deg,power_dbm\n3,5,43\n1,-5,43\n2,0,20\n")
    c = str(tmp_path / "c.csv")
    out = tmp_path / "eval"
    assert main(["evaluate", "--scenario", str(scenario), "--tilts", c, "--powers", c, "--out", str(out)]) == EXIT_OK
    assert read_column_csv(out / "config.csv", "tilt_deg").tolist() == [-5.0, 0.0, 5.0]
    assert last_json(capsys)["objective_kind"] == "mp"
