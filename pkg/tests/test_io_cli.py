import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from truncflr import io as tio
from truncflr.cli import main, parse_lambda_grid, parse_m_range
from truncflr.errors import DimensionError, DomainError, InfeasibleMError, ParseError
from truncflr.numerics import CurveSet, Grid
from truncflr.simstudy import SimConfig, gen_x, model_slope


def write(path, text):
    path.write_text(text)
    return path


def test_load_small_file(tmp_path):
    grid = ",".join(str(v) for v in np.linspace(0, 1, 11))
    rows = "\n".join(",".join(["1.5"] * 11) for _ in range(3))
    c = tio.load_curves(write(tmp_path / "c.csv", grid + "\n" + rows + "\n"))
    assert (c.n, c.grid.size) == (3, 11)


def test_ragged_row_reports_line(tmp_path):
    p = write(tmp_path / "c.csv", "0,0.5,1\n1,2,3\n1,2\n")
    with pytest.raises(ParseError) as err:
        tio.load_curves(p)
    assert err.value.line == 3 and "c.csv:3" in str(err.value)


def test_non_finite_and_bad_header(tmp_path):
    with pytest.raises(ParseError) as err:
        tio.load_curves(write(tmp_path / "a.csv", "0,0.5,1\n1,nan,3\n"))
    assert err.value.line == 2
    with pytest.raises(ParseError) as err:
        tio.load_curves(write(tmp_path / "b.csv", "0,0.7,0.5\n1,2,3\n"))
    assert err.value.line == 1
    with pytest.raises(ParseError):
        tio.load_curves(tmp_path / "missing.csv")


def test_responses(tmp_path):
    y = tio.load_responses(write(tmp_path / "y.csv", "y\n1\n2.5\n-3\n"))
    assert y.tolist() == [1, 2.5, -3]
    with pytest.raises(ParseError):
        tio.load_responses(write(tmp_path / "y2.csv", "1\n2\n"), n=3)
    with pytest.raises(ParseError) as err:
        tio.load_responses(write(tmp_path / "y3.csv", "1\n2,3\n"))
    assert err.value.line == 2


@given(st.integers(1, 5), st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_round_trip(tmp_path_factory, n, G, seed):
    rng = np.random.default_rng(seed)
    curves = CurveSet(Grid.from_points(np.concatenate([[0], np.sort(rng.uniform(0.01, 0.99, G - 2)), [1]])
                                       if G > 2 else [0.0, 1.0]),
                      rng.standard_normal((n, G)) * 10.0 ** rng.integers(-5, 5))
    d = tmp_path_factory.mktemp("rt")
    tio.write_curves(d / "c.csv", curves)
    tio.write_responses(d / "y.csv", curves.values[:, 0])
    back = tio.load_curves(d / "c.csv")
    assert np.array_equal(back.values, curves.values)
    assert np.array_equal(back.grid.points, curves.grid.points)
    assert np.array_equal(tio.load_responses(d / "y.csv"), curves.values[:, 0])


def test_flag_parsers():
    assert parse_m_range("2..4") == (2, 3, 4)
    assert parse_m_range("5") == (5,)
    assert parse_lambda_grid("0.1,1") == (0.1, 1.0)
    assert len(parse_lambda_grid("geom:1e-3:1:4")) == 4
    import argparse
    with pytest.raises(argparse.ArgumentTypeError):
        parse_m_range("4..2")
    with pytest.raises(argparse.ArgumentTypeError):
        parse_lambda_grid("-1")


def test_exit_codes_are_distinct():
    codes = [e.exit_code for e in (ParseError, DimensionError, DomainError, InfeasibleMError)]
    assert len(set(codes)) == len(codes) and 0 not in codes and 2 not in codes


@pytest.fixture
def noiseless_files(tmp_path):
    cfg = SimConfig(model_id=2, n=100)
    curves = gen_x(cfg, 31)
    b = model_slope(2, curves.grid, cfg)
    y = curves.values @ (curves.grid.restricted_weights(0.5) * b)
    tio.write_curves(tmp_path / "x.csv", curves)
    tio.write_responses(tmp_path / "y.csv", y)
    return tmp_path


def test_fit_noiseless_recovers_theta(noiseless_files, capsys):
    d = noiseless_files
    out = d / "fit"
    rc = main(["fit", "--curves", str(d / "x.csv"), "--responses", str(d / "y.csv"), "--method", "A",
               "--out", str(out)])
    assert rc == 0
    res = json.loads((out / "results.json").read_text())
    assert abs(res["fit"]["theta_hat"] - 0.5) <= 0.02
    assert res["config"]["options"]["m_range"] == list(range(2, 10))
    assert len(res["config"]["lambda_grid_resolved"]) == 25
    assert (out / "objective_trace.csv").exists() and (out / "slope.csv").exists()
    assert "theta_hat" in capsys.readouterr().out


def test_fit_is_reproducible_from_written_config(noiseless_files):
    d = noiseless_files
    args = ["fit", "--curves", str(d / "x.csv"), "--responses", str(d / "y.csv"), "--method", "B",
            "--m-range", "2..6", "--lambda-grid", "geom:1e-3:10:7", "--theta-min", "0.1"]
    assert main(args + ["--out", str(d / "r1")]) == 0
    first = json.loads((d / "r1" / "results.json").read_text())
    opts = d / "opts.json"
    opts.write_text(json.dumps(first["config"]["options"]))
    assert main(["fit", "--curves", str(d / "x.csv"), "--responses", str(d / "y.csv"), "--method", "B",
                 "--options", str(opts), "--out", str(d / "r2")]) == 0
    second = json.loads((d / "r2" / "results.json").read_text())
    assert first["fit"] == second["fit"]


def test_predict_round_trip(noiseless_files):
    d = noiseless_files
    assert main(["fit", "--curves", str(d / "x.csv"), "--responses", str(d / "y.csv"), "--method", "B",
                 "--lambda", "0.01", "--out", str(d / "f")]) == 0
    assert main(["predict", "--fit", str(d / "f" / "results.json"), "--curves", str(d / "x.csv"),
                 "--out", str(d / "p")]) == 0
    rows = (d / "p" / "predictions.csv").read_text().splitlines()
    assert len(rows) == 101 and rows[0] == "index,prediction"


def test_tune_and_bootstrap_commands(noiseless_files):
    d = noiseless_files
    base = ["--curves", str(d / "x.csv"), "--responses", str(d / "y.csv"), "--m-range", "2..4"]
    assert main(["tune", *base, "--out", str(d / "t")]) == 0
    assert (d / "t" / "tuning.csv").read_text().count("\n") == 26
    assert main(["bootstrap", *base, "--reps", "3", "--out", str(d / "b")]) == 0
    assert (d / "b" / "bands.csv").exists()


def test_simulate_command(tmp_path):
    assert main(["simulate", "--model", "2", "--replicates", "2", "--n", "40", "--out", str(tmp_path)]) == 0
    assert "Model 2" in (tmp_path / "theta_table.txt").read_text()
    assert (tmp_path / "records_model2.csv").read_text().count("\n") == 3


def test_error_exit_codes(tmp_path, noiseless_files):
    d = noiseless_files
    assert main(["fit", "--curves", str(tmp_path / "nope.csv"), "--responses", "y", "--out",
                 str(tmp_path)]) == ParseError.exit_code
    write(d / "short.csv", "1\n2\n")
    assert main(["fit", "--curves", str(d / "x.csv"), "--responses", str(d / "short.csv"),
                 "--out", str(tmp_path)]) == ParseError.exit_code
    other = tmp_path / "g.csv"
    tio.write_curves(other, CurveSet(Grid.uniform(11), np.ones((2, 11))))
    assert main(["predict", "--fit", str(d / "nope.json"), "--curves", str(other),
                 "--out", str(tmp_path)]) == ParseError.exit_code
    assert main(["fit", "--curves", str(d / "x.csv"), "--responses", str(d / "y.csv"), "--lambda", "0.1",
                 "--m-range", "200..201", "--out", str(tmp_path)]) == InfeasibleMError.exit_code
