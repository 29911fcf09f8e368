import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from coroica.bench import plan
from coroica.causal import simulate_svar
from coroica.cli import main
from coroica.config import ConfigError, load_config, parse_config
from coroica.fileio import CsvFormatError, read_matrix_csv, read_series_csv, read_signal_csv

REPO = Path(__file__).resolve().parent.parent


def write_cfg(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return str(path)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


SIM = {"kind": "blockvar", "n": 8000, "d": 4, "c1": 1.0, "c2": 1.0}
CORO = {"method": "coroica", "signal": "var", "partition_length": 100, "strategy": "complement"}


@pytest.fixture(scope="module")
def simdir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sim")
    cfg = write_cfg(tmp, {"seed": 5, "simulate": SIM})
    assert main(["simulate", "--config", cfg, "--out", str(tmp / "out")]) == 0
    return tmp / "out"


def test_simulate_writes_readable_files(simdir):
    X, labels, names = read_signal_csv(simdir / "X.csv")
    assert X.shape == (4, 8000) and names == ["x0", "x1", "x2", "x3"]
    assert sorted(set(labels.tolist())) == list(range(10))
    A = read_matrix_csv(simdir / "A.csv")
    S, _, _ = read_signal_csv(simdir / "S.csv")
    H, _, _ = read_signal_csv(simdir / "H.csv")
    assert np.max(np.abs(X - (A @ S + H))) < 1e-10
    manifest = json.loads((simdir / "manifest.json").read_text())
    assert manifest["spec"]["seed"] == 5 and manifest["files"]["X.csv"]["rows"] == 8000


def test_full_size_config_dimensions(tmp_path):
    cfg = write_cfg(tmp_path, {"simulate": {"kind": "blockvar", "n": 100_000, "d": 22}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    with open(tmp_path / "o" / "X.csv") as fh:
        header = fh.readline().strip().split(",")
        n_rows = sum(1 for _ in fh)
    assert len(header) == 23 and n_rows == 100_000


def test_invalid_c1_names_field(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"simulate": {**SIM, "c1": -0.5}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "simulate.c1" in err and "line 5" in err
    assert not (tmp_path / "o").exists()


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="simulate.colour"):
        parse_config({"simulate": {**SIM, "colour": "red"}})
    with pytest.raises(ConfigError, match="Extra inputs"):
        parse_config({"sweep": {}})


def test_yaml_syntax_error_has_line(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("seed: 1\nsimulate: [\n")
    with pytest.raises(ConfigError, match="line"):
        load_config(path)


def test_method_requires_partition():
    with pytest.raises(ConfigError, match="partition_length"):
        parse_config({"fit": {"method": {"method": "coroica"}}})


def test_fit_reports_md_and_mcis(simdir, tmp_path):
    cfg = write_cfg(tmp_path, {"fit": {"method": CORO}})
    out = tmp_path / "fit"
    assert main(["fit", "--config", cfg, "--out", str(out), "--data", str(simdir / "X.csv"), "--truth", str(simdir / "A.csv")]) == 0
    recs = rows(out / "scores.csv")
    metrics = {r["metric"] for r in recs}
    assert metrics == {"md", "mcis"}
    assert sum(r["metric"] == "mcis" for r in recs) == 10
    V = read_matrix_csv(out / "V.csv")
    assert V.shape == (4, 4)
    assert json.loads((out / "model.json").read_text())["diagnostics"]["converged"] is True


def test_fit_random_hundred_rows(simdir, tmp_path):
    cfg = write_cfg(tmp_path, {"fit": {"method": {"method": "random", "n_random": 100}, "score_partition_length": 100}})
    out = tmp_path / "fit"
    assert main(["fit", "--config", cfg, "--out", str(out), "--data", str(simdir / "X.csv"), "--truth", str(simdir / "A.csv")]) == 0
    md_rows = [r for r in rows(out / "scores.csv") if r["metric"] == "md"]
    assert len(md_rows) == 100
    assert len({r["value"] for r in md_rows}) == 100
    assert np.loadtxt(out / "V.csv", delimiter=",").shape == (400, 4)


def test_fit_held_out_groups_tagged(simdir, tmp_path):
    cfg = write_cfg(tmp_path, {"fit": {"method": CORO, "train_groups": [0, 1, 2, 3, 4]}})
    out = tmp_path / "fit"
    assert main(["fit", "--config", cfg, "--out", str(out), "--data", str(simdir / "X.csv")]) == 0
    recs = rows(out / "scores.csv")
    assert all(r["metric"] == "mcis" for r in recs)
    scope = {int(r["group"]): r["scope"] for r in recs}
    assert scope == {g: ("in_sample" if g < 5 else "out_of_sample") for g in range(10)}


def test_fit_without_group_column(tmp_path):
    X = np.random.default_rng(0).standard_normal((3, 400)) * np.repeat([1.0, 2.0, 0.5, 1.5], 100)
    np.savetxt(tmp_path / "x.csv", X.T, delimiter=",", header="a,b,c", comments="")
    cfg = write_cfg(tmp_path, {"fit": {"method": {**CORO, "partition_length": 100}}})
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o"), "--data", str(tmp_path / "x.csv")]) == 0
    assert len(rows(tmp_path / "o" / "scores.csv")) == 1


def test_fit_bad_inputs(simdir, tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"fit": {"method": CORO, "train_groups": [42]}})
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o"), "--data", str(simdir / "X.csv")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("group,x0\n0,1.0\n0,abc\n")
    cfg = write_cfg(tmp_path, {"fit": {"method": CORO}})
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o"), "--data", str(bad)]) == 3
    assert "bad.csv" in capsys.readouterr().err


def test_garch_grid_has_42_cells():
    cfg = load_config(REPO / "configs" / "garch_grid.yaml")
    assert len(plan(cfg.bench)) == 42


def test_mcis_without_score_length_is_schema_error():
    doc = json.loads(json.dumps(BENCH))
    del doc["bench"]["score_partition_length"]
    with pytest.raises(ConfigError, match="score_partition_length"):
        parse_config(doc)


def test_empty_method_list_is_schema_error():
    with pytest.raises(ConfigError, match="bench.methods"):
        parse_config({"bench": {"generator": {"kind": "garch"}, "methods": [], "replicates": 1}})


BENCH = {
    "seed": 2,
    "bench": {
        "generator": {"kind": "blockvar", "n": 4000, "d": 3, "c1": [0.5, 2.0]},
        "methods": [
            {"method": "coroica", "signal": "var", "partition_length": 40, "strategy": "complement"},
            {"method": "choiica", "signal": "var", "partition_length": 40},
            {"method": "random", "n_random": 2},
        ],
        "replicates": 2,
        "metrics": ["md", "mcis"],
        "score_partition_length": 40,
    },
}


def test_bench_rows_order_and_resume(tmp_path):
    cfg = write_cfg(tmp_path, BENCH)
    out = tmp_path / "b"
    assert main(["bench", "--config", cfg, "--out", str(out)]) == 0
    recs = rows(out / "results.csv")
    # 2 cells x 2 replicates x (1 + 1 + 2 draws) x 2 metrics
    assert len(recs) == 2 * 2 * 4 * 2
    assert [r["method"] for r in recs[:4]] == ["coroica(var)"] * 4
    assert [r["metric"] for r in recs[:2]] == ["md", "mcis"]
    first = (out / "results.csv").read_bytes()
    assert main(["bench", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "results.csv").read_bytes() == first
    # drop trailing rows, including half of a random-projection group
    lines = first.decode().splitlines(keepends=True)
    (out / "results.csv").write_text("".join(lines[:-5]))
    assert main(["bench", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "results.csv").read_bytes() == first


def test_bench_parallel_matches_serial(tmp_path):
    cfg = write_cfg(tmp_path, BENCH)
    assert main(["bench", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["bench", "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    for name in ("results.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bench_errors_recorded_and_exit_nonzero(tmp_path):
    doc = json.loads(json.dumps(BENCH))
    doc["bench"]["methods"].append({"method": "coroica", "partition_length": 4000, "label": "coarse"})
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "b"
    assert main(["bench", "--config", cfg, "--out", str(out)]) == 1
    manifest = json.loads((out / "errors.json").read_text())
    assert manifest["count"] == 4
    assert all("too coarse" in e["message"] for e in manifest["errors"])
    recs = rows(out / "results.csv")
    assert sum(r["status"] == "error" for r in recs) == 4
    assert sum(r["status"] == "ok" for r in recs) == 32


def test_bench_seed_changes_results(tmp_path):
    cfg = write_cfg(tmp_path, BENCH)
    main(["bench", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["bench", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "99"])
    assert (tmp_path / "a" / "results.csv").read_bytes() != (tmp_path / "b" / "results.csv").read_bytes()


@pytest.fixture(scope="module")
def climate_files(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("climate")
    n = 20_000
    X = simulate_svar(n, 4.33, 0.1, p=3, seed=3, block_length=200)["X"]
    ages = (n - 1 - np.arange(n)) * 500.0
    np.savetxt(tmp / "co2.csv", np.column_stack([ages, np.exp(X[0] + 5.0)]), delimiter=",", header="age,co2", comments="")
    np.savetxt(tmp / "temp.csv", np.column_stack([ages, X[1]]), delimiter=",", header="age,temp", comments="")
    return tmp


def test_climate_table(climate_files, tmp_path, capsys):
    doc = {
        "climate": {
            "lags": {"min": 1, "max": 20},
            "methods": [
                {"method": "coroica", "signal": "var", "partition_length": 200, "strategy": "complement"},
                {"method": "choiica", "signal": "var", "partition_length": 200},
                {"method": "random", "n_random": 1},
            ],
        }
    }
    cfg = write_cfg(tmp_path, doc)
    out = tmp_path / "c"
    args = ["climate", "--config", cfg, "--out", str(out), "--co2", str(climate_files / "co2.csv"), "--temp", str(climate_files / "temp.csv")]
    assert main(args) == 0
    recs = rows(out / "ecs.csv")
    assert list(recs[0]) == ["lag", "method", "alpha", "beta", "ecs", "status"]
    assert len(recs) <= 60
    coro = [r for r in recs if r["method"] == "coroica(var)" and int(r["lag"]) >= 3]
    assert all(r["status"] == "ok" and abs(float(r["ecs"]) / (4.33 * np.log(2)) - 1) < 0.1 for r in coro)
    assert "inside [1.5, 4.5]" in capsys.readouterr().out


def test_malformed_series_reports_row(tmp_path, capsys):
    (tmp_path / "co2.csv").write_text("age,co2\n0,280\n500,281\n1000,oops\n1500,279\n2000,270\n")
    with pytest.raises(CsvFormatError, match="row 4"):
        read_series_csv(tmp_path / "co2.csv")
    cfg = write_cfg(tmp_path, {"climate": {"lags": [1], "methods": [{"method": "random", "n_random": 1}]}})
    rc = main(["climate", "--config", cfg, "--out", str(tmp_path / "o"), "--co2", str(tmp_path / "co2.csv"), "--temp", str(tmp_path / "co2.csv")])
    assert rc == 3 and "row 4" in capsys.readouterr().err


def test_every_command_is_byte_deterministic(simdir, climate_files, tmp_path):
    doc = {
        "seed": 9,
        "simulate": {"kind": "garch", "setting": 3, "noise": "ar", "n": 5000, "d": 3},
        "fit": {"method": CORO},
        "bench": BENCH["bench"],
        "climate": {"lags": [3, 4], "methods": [{"method": "coroica", "partition_length": 200, "strategy": "complement"}]},
    }
    cfg = write_cfg(tmp_path, doc)
    extra = {
        "simulate": [],
        "fit": ["--data", str(simdir / "X.csv"), "--truth", str(simdir / "A.csv")],
        "bench": [],
        "climate": ["--co2", str(climate_files / "co2.csv"), "--temp", str(climate_files / "temp.csv")],
    }
    for cmd, more in extra.items():
        outs = []
        for k in range(2):
            out = tmp_path / f"{cmd}{k}"
            assert main([cmd, "--config", cfg, "--out", str(out)] + more) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        assert outs[0] == outs[1], cmd
        assert outs[0]


def test_missing_section_and_args(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"seed": 1})
    assert main(["bench", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "no 'bench' section" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["simulate", "--config", cfg, "--out", "x", "--seed", "-1"])
