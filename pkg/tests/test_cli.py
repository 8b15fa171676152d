import json
import subprocess
import sys

import pytest

from mflab.cli import main, parse_args
from mflab.model import make_zoo_model, save_model

SMALL = ["--N", "50,200", "--samples", "100", "--burn-in", "10"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_zoo_list(capsys):
    code, out, _ = run(["zoo-list"], capsys)
    assert code == 0
    for name in ("sis", "sirs", "hopf", "logistic"):
        assert name in out
    assert "lambda0" in out and "omega" in out


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as info:
        parse_args(["--help"])
    assert info.value.code == 0
    assert "verify" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--N", "-5"],
        ["simulate", "--model", "sis", "--N", "0", "--t", "1"],
        ["flow", "--model", "sis", "--y0", "0.5", "--t", "1", "--bogus"],
        ["flow", "--model", "nope", "--y0", "0.5", "--t", "1"],
        ["flow", "--model", "sis", "--params", "beta=x", "--y0", "0.5", "--t", "1"],
        ["flow", "--model", "sis", "--params", "delta=1", "--y0", "0.5", "--t", "1"],
        ["flow", "--model", "sis", "--y0", "0.5,0.1", "--t", "1"],
        ["flow", "--model", "logistic", "--y0", "0.2", "--t", "1.5"],
        ["verify", "theorem", "--model", "sis", "--N", "1000,100"],
        ["verify", "unknown", "--model", "sis"],
    ],
)
def test_usage_errors_exit_2(argv, capsys, tmp_path):
    with pytest.raises(SystemExit) as info:
        main(argv + ["--out", str(tmp_path / "o")] if argv[0] == "verify" else argv)
    assert info.value.code == 2
    assert capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_verify_plan_parses():
    cfg = parse_args(["verify", "theorem", "--model", "hopf", "--N", "100,1000,10000", "--t", "1,5",
                      "--seed", "42", "--out", "r/"])
    plan = cfg.options["plan"]
    assert plan.N_list == (100, 1000, 10000) and plan.t_list == (1.0, 5.0) and plan.seed == 42
    assert cfg.out == "r/"


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("MFLAB_SEED", "17")
    assert parse_args(["simulate", "--model", "sis", "--N", "10", "--t", "1"]).seed == 17
    assert parse_args(["simulate", "--model", "sis", "--N", "10", "--t", "1", "--seed", "3"]).seed == 3


def test_flow_prints_fixed_point(capsys):
    code, out, err = run(["flow", "--model", "sis", "--params", "beta=2,gamma=1,lambda0=0", "--y0", "0.5", "--t", "10"], capsys)
    assert code == 0
    assert out.strip() == "0.5"
    assert "resolved plan" in err


def test_limitset_and_simulate(capsys, tmp_path):
    code, out, _ = run(["limitset", "--model", "hopf", "--y0", "1.2,0.3"], capsys)
    assert code == 0 and json.loads(out)["kind"] == "cycle"
    code, out, _ = run(["simulate", "--model", "sis", "--N", "100", "--t", "2", "--seed", "1",
                        "--out", str(tmp_path / "s.json")], capsys)
    d = json.loads(out)
    assert code == 0 and d["N"] == 100 and d["truncations"] == 0
    assert json.loads((tmp_path / "s.json").read_text()) == d


def test_stationary_writes_cloud(capsys, tmp_path):
    code, out, _ = run(["stationary", "--model", "sis", "--N", "100", "--samples", "50", "--burn-in", "5",
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    assert (tmp_path / "cloud_N100.csv").read_text().count("\n") == 51


def test_validate(capsys, tmp_path):
    code, out, _ = run(["validate", "--model", "logistic"], capsys)
    assert code == 0 and json.loads(out)["passed"]


def test_json_model_wins_over_params(capsys, tmp_path):
    path = tmp_path / "sis.json"
    path.write_text(json.dumps({"name": "sis", "params": {"beta": 2.0, "gamma": 1.0, "lambda0": 0.0}}))
    code, out, err = run(["flow", "--model", str(path), "--params", "lambda0=0.5", "--y0", "0.5", "--t", "10"], capsys)
    assert code == 0 and out.strip() == "0.5"
    assert "warning" in err and "lambda0" in err


def test_full_model_file(capsys, tmp_path):
    path = tmp_path / "hopf.json"
    save_model(make_zoo_model("hopf"), path)
    code, out, _ = run(["flow", "--model", str(path), "--y0", "0.5,0", "--t", "0"], capsys)
    assert code == 0 and out.split() == ["0.5", "0"]


def test_verify_corollary_hopf_is_inapplicable(capsys, tmp_path):
    code, out, err = run(["verify", "corollary", "--model", "hopf", *SMALL, "--out", str(tmp_path)], capsys)
    assert code == 1
    assert "inapplicable: limit set is a cycle" in err
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["verdicts"]["overall"] == "INAPPLICABLE"


def test_verify_prints_report_without_out(capsys):
    code, out, err = run(["verify", "corollary", "--model", "sis", *SMALL, "--seed", "1"], capsys)
    assert json.loads(out)["experiment"] == "corollary"
    assert code in (0, 1)
    assert err.index("resolved plan") < err.index("corollary:")


def test_runtime_failure_exit_3(capsys, tmp_path):
    path = tmp_path / "push.json"
    path.write_text(json.dumps({"name": "push", "kind": "ct", "domain": {"kind": "box", "dim": 1, "lo": [0], "hi": [1]},
                                "jumps": [{"l": [1], "rate": "1"}]}))
    code, _, err = run(["flow", "--model", str(path), "--y0", "0.5", "--t", "2"], capsys)
    assert code == 3
    assert "model=push" in err and "t=[2.0]" in err


def test_verify_twice_same_bytes(tmp_path):
    def once(out):
        subprocess.run([sys.executable, "-m", "mflab.cli", "verify", "theorem", "--model", "sis", *SMALL,
                        "--t", "1", "--seed", "42", "--out", str(out)], check=False, capture_output=True)
        return (out / "report.json").read_bytes()

    assert once(tmp_path / "a") == once(tmp_path / "b")
