import csv
import json

import numpy as np
import pytest

from designs import CLIMATE_CONFIG, climate_dataset
from mmanova.cli import EXIT_IO, EXIT_OK, EXIT_VALIDATION, fit_from_files, main
from mmanova.criteria import summarize_posterior
from mmanova.io import dumps, fmt, load_config, read_dataset_csv, write_dataset_csv, write_json
from mmanova.errors import ValidationError


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def simulated(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--case", "2", "--n-alpha", "8", "--n-eps", "5", "--seed", "3", "--draws", "400", "--out", str(out)]) == EXIT_OK
    return out


@pytest.fixture
def climate_files(tmp_path):
    write_dataset_csv(tmp_path / "climate.csv", climate_dataset(seed=2))
    write_json(tmp_path / "climate.json", dict(CLIMATE_CONFIG, draws=300, seed=5))
    return tmp_path / "climate.csv", tmp_path / "climate.json"


def test_simulate_outputs(simulated):
    rows = read_csv(simulated / "dataset.csv")
    assert len(rows) == 41 and rows[0] == ["alpha", "y1", "y2", "y3"]
    truth = json.loads((simulated / "truth.json").read_text())
    assert np.asarray(truth["sigma_eps"]).shape == (3, 3)
    man = json.loads((simulated / "manifest.json").read_text())
    assert man["subcommand"] == "simulate" and man["seed"] == 3


def test_fit_round_trip_is_bit_exact(simulated, tmp_path):
    out = tmp_path / "fit"
    data, cfg = str(simulated / "dataset.csv"), str(simulated / "model.json")
    assert main(["fit", "--data", data, "--config", cfg, "--out", str(out), "--draws-csv"]) == EXIT_OK
    _, _, _, draws = fit_from_files(data, cfg)
    lib = {(s.batch, s.parameter, s.criterion): s.quantiles for s in summarize_posterior(draws)}
    cli = json.loads((out / "intervals.json").read_text())
    assert len(cli) == len(lib)
    for row in cli:
        assert tuple(row["quantiles"].values()) == lib[(row["batch"], row["parameter"], row["criterion"])]
    rows = read_csv(out / "draws.csv")
    assert len(rows) == 401
    assert float(rows[1][1]) == draws.batches["alpha"].sigma[0, 0, 0]


def test_climate_intervals(climate_files, tmp_path):
    data, cfg = climate_files
    assert main(["fit", "--data", str(data), "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    rows = json.loads((tmp_path / "o" / "intervals.json").read_text())
    keys = {(r["batch"], r["parameter"]) for r in rows}
    expected = {(b, p) for b in ("alpha0", "beta0", "gamma", "alpha1", "beta1") for p in ("superpopulation", "finite")}
    assert keys == expected | {("error", "error")}
    assert len(rows) == 3 * len(keys)
    ex = json.loads((tmp_path / "o" / "exceedance.json").read_text())
    m = np.asarray(ex["superpopulation"]["determinant"]["matrix"])
    assert m.shape == (6, 6) and ex["superpopulation"]["determinant"]["names"][-1] == "error"


def test_predict_zero_contrast(climate_files, tmp_path):
    data, cfg = climate_files
    scen = {
        "levels": {"alpha0": "G03", "beta0": "A2", "gamma": "G03:A2", "alpha1": 2, "beta1": {"level": "A2"}},
        "contrast": {"weights": [0, 0], "points": [{"time": 1, "time2": 1}, {"time": 9, "time2": 81}]},
    }
    (tmp_path / "s.json").write_text(json.dumps(scen))
    code = main(["predict", "--data", str(data), "--config", str(cfg), "--scenario", str(tmp_path / "s.json"), "--out", str(tmp_path / "p")])
    assert code == EXIT_OK
    rows = read_csv(tmp_path / "p" / "predictive.csv")
    assert rows[0] == ["draw", "temp", "precip"] and len(rows) == 301
    assert all(float(v) == 0.0 for r in rows[1:] for v in r[1:])


def test_predict_unknown_label(climate_files, tmp_path, capsys):
    data, cfg = climate_files
    (tmp_path / "s.json").write_text(json.dumps({"levels": {"alpha0": "nope"}}))
    code = main(["predict", "--data", str(data), "--config", str(cfg), "--scenario", str(tmp_path / "s.json"), "--out", str(tmp_path / "p")])
    assert code == EXIT_VALIDATION
    assert json.loads(capsys.readouterr().err)["error"] == "validation"


def test_unbalanced_exit_code(simulated, tmp_path, capsys):
    rows = read_csv(simulated / "dataset.csv")
    with open(tmp_path / "short.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows[:-1])
    code = main(["fit", "--data", str(tmp_path / "short.csv"), "--config", str(simulated / "model.json"), "--out", str(tmp_path / "o")])
    assert code == EXIT_VALIDATION
    diag = json.loads(capsys.readouterr().err)
    assert diag["type"] == "Unbalanced" and "a8" in diag["message"]


def test_missing_file_exit_code(tmp_path, capsys):
    code = main(["fit", "--data", str(tmp_path / "nope.csv"), "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code == EXIT_IO
    assert json.loads(capsys.readouterr().err)["error"] == "io"


def test_bad_schema_exit_code(simulated, tmp_path):
    cfg = json.loads((simulated / "model.json").read_text())
    cfg["bogus"] = 1
    (tmp_path / "bad.json").write_text(json.dumps(cfg))
    code = main(["fit", "--data", str(simulated / "dataset.csv"), "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o")])
    assert code == EXIT_VALIDATION


def test_coverage_cli(tmp_path):
    out = tmp_path / "cov"
    code = main(["coverage", "--case", "3", "--n-eps", "4", "--S", "2", "--n-alpha", "4,6", "--draws", "50", "--out", str(out)])
    assert code == EXIT_OK
    rows = read_csv(out / "coverage.csv")
    assert len(rows) == 1 + 2 * 12
    doc = json.loads((out / "coverage.json").read_text())
    assert len(doc["cells"]) == 18 and len(doc["reference"]) == 6


def test_manifest_digests_stable(simulated, tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1300000000")
    data, cfg = str(simulated / "dataset.csv"), str(simulated / "model.json")
    for k in (1, 2):
        assert main(["fit", "--data", data, "--config", cfg, "--out", str(tmp_path / f"f{k}")]) == EXIT_OK
    a = (tmp_path / "f1" / "manifest.json").read_text()
    assert a == (tmp_path / "f2" / "manifest.json").read_text()
    man = json.loads(a)
    assert man["started"] == "2011-03-13T07:06:40Z"
    assert set(man["inputs"]) == {"data", "config"} and len(man["config_digest"]) == 64


def test_csv_validation(tmp_path):
    cfg = {"responses": ["y"], "batches": [{"name": "mu"}, {"name": "a", "factors": ["f"]}]}
    (tmp_path / "a.csv").write_text("f,y\nx,1\ny,oops\n")
    with pytest.raises(ValidationError, match="line 3"):
        read_dataset_csv(tmp_path / "a.csv", cfg)
    (tmp_path / "b.csv").write_text("f,z\nx,1\n")
    with pytest.raises(ValidationError, match="lacks columns"):
        read_dataset_csv(tmp_path / "b.csv", cfg)
    (tmp_path / "c.json").write_text(json.dumps({"responses": ["y"], "batches": [{"name": "a", "kind": "cubic"}]}))
    with pytest.raises(ValidationError):
        load_config(tmp_path / "c.json")


def test_number_formatting():
    assert fmt(1.0) == "1.0" and fmt(0.1) == "0.10000000000000001"
    assert float(fmt(np.pi)) == np.pi
    assert dumps({"a": [1.5, 2.0]}) == '{\n  "a": [1.5, 2.0]\n}\n'
