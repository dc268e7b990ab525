import csv
import io
import math

import pytest

from entropy_american import LambdaSchedule, Method, load_config
from entropy_american.cli import (EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, THREADS_ENV, main,
                                  resolve_threads, rows_to_csv)
from entropy_american.config import ConfigError, build_run_config, parse_text
from entropy_american.experiments import ExperimentSpec, put_config, table1_rows

PUT_LATTICE = """
[model]
d = 1
s0 = 90
r = 0.05
sigma = 0
[payoff]
kind = put
strike = 100
[grid]
T = 1
N = 10
[method]
name = lattice
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_parse_repeated_stages_and_comments():
    raw = parse_text("""
# comment
[model]
d = 2 ; trailing comment
s0 = 100
r = 0.05
delta = 0.1
sigma = 0.2
[payoff]
kind = max_call
strike = 100
[grid]
T = 3
N = 100
[schedule]
stage = 0.1, 500
stage = 0.001, 500
""")
    config = build_run_config(raw)
    assert config.schedule == LambdaSchedule(((0.1, 500), (0.001, 500)))
    assert config.model.s0 == (100.0, 100.0)
    assert config.method is Method.PIA


@pytest.mark.parametrize("text,line", [
    ("[model\nd = 1\n", 1),
    ("[model]\nd = 1\njunk\n", 3),
    ("d = 1\n", 1),
    ("[model]\nd = 1\ns0 = 100\nr = x\n", 4),
    ("[model]\nd = 1\ns0 = 100\nr = 0.05\nsigma = 0.2\n[grid]\nT = 1\nN = 10\n"
     "[schedule]\nstage = 0.1\n", 10),
])
def test_config_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as err:
        build_run_config(parse_text(text, "x.ini"))
    assert err.value.line == line
    assert f"x.ini:{line}:" in str(err.value)


def test_shipped_configs_load():
    config, raw = load_config("configs/table1.ini")
    assert config.paths == 100000 and config.schedule.total_iterations == 2000
    assert raw.get("sweep", "s0") == "90, 100, 110"
    put, _ = load_config("configs/put.ini")
    assert put.basis.degree == 8 and put.method is Method.LATTICE


def test_price_deterministic_lattice(tmp_path, capsys):
    path = write(tmp_path, PUT_LATTICE)
    assert main(["price", "--config", str(path), "--out", str(tmp_path / "out")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "price = 10.0\n" in out
    assert (tmp_path / "out" / "report.txt").read_text() == out


def test_price_european_zero_payoff(tmp_path, capsys):
    text = PUT_LATTICE.replace("kind = put", "kind = constant").replace(
        "strike = 100", "strike = 0").replace("name = lattice", "name = european")
    text += "[simulation]\npaths = 1000\n"
    assert main(["price", "--config", str(write(tmp_path, text)), "--out", str(tmp_path)]) == 0
    assert "price = 0.0\n" in capsys.readouterr().out


def test_price_writes_trace_for_pia(tmp_path):
    text = PUT_LATTICE.replace("sigma = 0", "sigma = 0.2").replace("name = lattice", "name = pia")
    text += "[simulation]\npaths = 2000\n[schedule]\nstage = 0.1, 3\n"
    assert main(["price", "--config", str(write(tmp_path, text)), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "trace.csv")
    assert [r["m"] for r in rows] == ["0", "1", "2", "3"]


def test_malformed_config_exit_code(tmp_path, capsys):
    path = write(tmp_path, PUT_LATTICE.replace("sigma = 0", "sigma = abc"))
    assert main(["price", "--config", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert f"{path}:6:" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path):
    assert main(["price", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["price", "--config", str(tmp_path / "nope.ini")]) == EXIT_CONFIG


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    from entropy_american import cli
    from entropy_american.scheme import NumericalError

    def boom(config):
        raise NumericalError("non-finite value")

    monkeypatch.setattr(cli, "price", boom)
    path = write(tmp_path, PUT_LATTICE)
    assert main(["price", "--config", str(path), "--out", str(tmp_path)]) == EXIT_NUMERICAL


def test_thread_resolution(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert resolve_threads(None) == 1
    assert resolve_threads(3) == 3
    assert resolve_threads(0) >= 1
    monkeypatch.setenv(THREADS_ENV, "4")
    assert resolve_threads(None) == 4
    assert resolve_threads(2) == 2
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        resolve_threads(None)


def test_csv_is_locale_independent():
    text = rows_to_csv([{"a": 0.5, "b": 3, "c": float("nan")}], ("a", "b", "c"))
    assert text == "a,b,c\n0.5,3,\n"


def test_lambda_rate_command(tmp_path):
    assert main(["lambda-rate", "--out", str(tmp_path), "--upper", "--reduced"]) == 0
    rows = read_csv(tmp_path / "lambda_rate.csv")
    assert list(rows[0]) == ["lambda", "v_lambda_root", "V_root", "gap", "rate_ratio",
                             "upper", "upper_se", "upper_gap"]
    assert float(rows[0]["lambda"]) == 1.0
    gaps = [float(r["gap"]) for r in rows]
    assert all(b <= a + 1e-10 for a, b in zip(gaps, gaps[1:]))
    first = rows[0]
    assert float(first["gap"]) == pytest.approx(
        abs(float(first["v_lambda_root"]) - float(first["V_root"])), rel=1e-9)
    assert math.isfinite(float(first["rate_ratio"]))
    for r in rows:
        assert float(r["upper"]) >= float(r["V_root"]) - 3 * float(r["upper_se"])


def test_pia_rate_command(tmp_path):
    assert main(["pia-rate", "--out", str(tmp_path), "--reduced"]) == 0
    rows = read_csv(tmp_path / "pia_rate.csv")
    assert rows[0]["m"] == "0" and rows[0]["min_node_step"] == ""
    errors = [float(r["error"]) for r in rows]
    assert errors[-1] < 1e-6


def test_experiment_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(kind="table1", config=put_config(), lambdas=())
    with pytest.raises(ValueError):
        ExperimentSpec(kind="nope", config=put_config())


def test_table1_small_sweep_is_monotone_and_seed_stable(tmp_path):
    from entropy_american.experiments import table1_config

    rows = {}
    for seed in (1, 2):
        spec = ExperimentSpec(kind="table1", config=table1_config(paths=5000, seed=seed),
                              s0_values=(100.0,), lambdas=(0.1, 0.01), per_stage=40, total=None)
        rows[seed] = table1_rows(spec)
    first = rows[1]
    assert [r["lambda"] for r in first] == [0.1, 0.01]
    assert first[1]["pia"] >= first[0]["pia"]
    assert first[0]["lattice"] == pytest.approx(14.211, abs=1e-3)
    for a, b in zip(rows[1], rows[2]):
        pooled = math.hypot(a["pia_se"], b["pia_se"])
        assert abs(a["pia"] - b["pia"]) < 3 * pooled
