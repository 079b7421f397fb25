import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from covbayes.cli import (
    ConfigError, DataError, ExperimentConfig, TABLE_HEADER, aggregate_metrics, cmd_fit,
    cmd_simulate, cmd_table, export_dataset, ingest, load_config, main,
)


def write_config(tmp_path, **overrides):
    cfg = {"scenario": "sn1d", "n_values": [1, 4], "replicates": 2, "seed": 3,
           "output_dir": str(tmp_path / "out"),
           "prior": {"kind": "gaussian", "alpha": 1.5, "truncation": 256},
           "sampler": {"iterations": 500, "burn_in": 200, "thin": 10}}
    cfg.update(overrides)
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(cfg))
    return path


def write_metric(path, n, prior, rel):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"scenario": "sn1d", "n": n, "prior": prior, "alpha": 1.5,
                                "rel_l1": rel, "acc_rate": 0.25, "runtime_s": 1.0, "seed": 0}))


def test_simulate_counts_and_determinism(tmp_path):
    path = write_config(tmp_path)
    assert main(["simulate", "--config", str(path)]) == 0
    data = tmp_path / "out" / "data"
    first = {p.name: p.read_bytes() for p in data.iterdir()}
    assert len(list(data.glob("*.csv"))) == 4
    assert len(list(data.glob("*.raster"))) == 4
    assert main(["simulate", "--config", str(path)]) == 0
    assert first == {p.name: p.read_bytes() for p in data.iterdir()}


def test_simulate_mean_count_sn1d(tmp_path):
    cfg = ExperimentConfig(n_values=[1], replicates=100, seed=5,
                           output_dir=str(tmp_path / "o"),
                           covariate={"kind": "gaussian", "resolution": 20})
    counts = []
    for p_path, _ in cmd_simulate(cfg):
        counts.append(len(p_path.read_text().splitlines()) - 1)
    assert 90 <= np.mean(counts) <= 110


def test_fit_smoke_and_outputs(tmp_path):
    path = write_config(tmp_path, n_values=[1], replicates=1)
    assert main(["simulate", "--config", str(path)]) == 0
    assert main(["fit", "--config", str(path)]) == 0
    d = tmp_path / "out" / "fit_sn1d_gaussian_n1_r0"
    metrics = json.loads((d / "metrics.json").read_text())
    assert np.isfinite(metrics["rel_l1"])
    assert list(metrics)[:8] == ["scenario", "n", "prior", "alpha", "rel_l1", "acc_rate",
                                 "runtime_s", "seed"]
    assert (d / "summary.csv").read_text().startswith("z1,mean,lower,upper")
    assert len((d / "samples.csv").read_text().splitlines()) == 30
    assert main(["table", "--config", str(path)]) == 0
    assert (tmp_path / "out" / "table.csv").read_text().splitlines()[0] == ",".join(TABLE_HEADER)


def test_fit_is_deterministic_except_runtime(tmp_path):
    path = write_config(tmp_path, n_values=[1], replicates=1)
    main(["simulate", "--config", str(path)])
    outs = []
    for _ in range(2):
        main(["fit", "--config", str(path)])
        m = json.loads((tmp_path / "out" / "fit_sn1d_gaussian_n1_r0" / "metrics.json").read_text())
        m.pop("runtime_s")
        outs.append(m)
    assert outs[0] == outs[1]


def test_hierarchical_trace_has_alpha(tmp_path):
    prior = {"kind": "gaussian", "alpha": 1.5, "truncation": 256, "hierarchical": {}}
    path = write_config(tmp_path, n_values=[1], replicates=1, prior=prior)
    main(["simulate", "--config", str(path)])
    assert main(["fit", "--config", str(path)]) == 0
    trace = (tmp_path / "out" / "fit_sn1d_gaussian_hier_n1_r0" / "trace.csv").read_text()
    lines = trace.splitlines()
    assert lines[0].split(",")[2] == "alpha"
    alphas = {float(l.split(",")[2]) for l in lines[1:]}
    assert len(alphas) > 1


def test_kernel_prior_mismatch(tmp_path):
    sampler = {"iterations": 100, "burn_in": 50, "kernel": "pcn"}
    path = write_config(tmp_path, prior={"kind": "besov_laplace", "alpha": 1.0,
                                         "truncation": 64}, sampler=sampler)
    with pytest.raises(ConfigError, match="pcn"):
        load_config(path)
    assert main(["fit", "--config", str(path)]) == 2


def test_table_arithmetic(tmp_path):
    write_metric(tmp_path / "a" / "metrics.json", 4, "gaussian", 0.1)
    write_metric(tmp_path / "b" / "metrics.json", 4, "gaussian", 0.3)
    write_metric(tmp_path / "c" / "metrics.json", 16, "gaussian", 0.05)
    rows = aggregate_metrics(sorted(tmp_path.glob("*/metrics.json")))
    by_n = {r["n"]: r for r in rows}
    assert by_n[4.0]["mean_rel_l1"] == pytest.approx(0.2)
    assert by_n[4.0]["sd_rel_l1"] == pytest.approx(0.1414, abs=1e-4)
    assert by_n[16.0]["sd_rel_l1"] == 0.0 and by_n[16.0]["n_replicates"] == 1


def test_table_empty_glob(tmp_path):
    cfg = ExperimentConfig(output_dir=str(tmp_path))
    with pytest.raises(DataError):
        cmd_table(cfg)
    path = write_config(tmp_path)
    assert main(["table", "--config", str(path), "--metrics", str(tmp_path / "none*")]) == 3


def test_fit_missing_data_exit_code(tmp_path):
    path = write_config(tmp_path)
    assert main(["fit", "--config", str(path)]) == 3


@pytest.mark.parametrize("bad", [
    {"scenario": "spiral"},
    {"scenario": "external"},
    {"pattern": "x.csv"},
    {"prior": {"kind": "gaussian", "alpha": -1.0, "truncation": 64}},
    {"sampler": {"iterations": 10, "burn_in": 20}},
    {"unknown_key": 1},
])
def test_config_errors(tmp_path, bad):
    path = write_config(tmp_path, **bad)
    with pytest.raises(ConfigError):
        load_config(path)
    assert main(["simulate", "--config", str(path)]) == 2


def test_config_roundtrip_idempotent(tmp_path):
    cfg = load_config(write_config(tmp_path))
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()


def test_full_scale_flag(tmp_path):
    cfg = load_config(write_config(tmp_path), paper_scale=True, seed=11)
    assert cfg.n_values == [1, 4, 16, 64, 256] and cfg.replicates == 50
    assert cfg.sampler["iterations"] == 25000 and cfg.seed == 11


def _raster(path, values, origin=(0.0, 0.0), spacing=(1.0, 1.0)):
    shape = values.shape
    path.write_text(f"# raster D=2 d=1 shape={shape[0]},{shape[1]} "
                    f"origin={origin[0]},{origin[1]} spacing={spacing[0]},{spacing[1]}\n"
                    + "\n".join(f"{v:.17g}" for v in values.ravel()) + "\n")


def _pattern(path, pts):
    path.write_text("x,y\n" + "\n".join(f"{x},{y}" for x, y in pts) + "\n")


def test_ingest_rescale_and_count(tmp_path):
    rng = np.random.default_rng(0)
    vals = 120 + 40 * rng.uniform(size=(11, 6))
    vals[0, 0], vals[-1, -1] = 120.0, 160.0
    _raster(tmp_path / "elev.raster", vals, spacing=(10.0, 10.0))
    pts = rng.uniform([0, 0], [100, 50], size=(37, 2))
    _pattern(tmp_path / "pts.csv", pts)
    ds = ingest(tmp_path / "pts.csv", [tmp_path / "elev.raster"])
    assert ds.affine == [(120.0, 40.0)]
    assert ds.pattern.count == 37
    assert ds.field.window.volume == 5000.0
    assert np.allclose(ds.field.values[..., 0], (vals - 120) / 40)


def test_ingest_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    _raster(tmp_path / "a.raster", rng.normal(size=(8, 9)))
    _raster(tmp_path / "b.raster", rng.uniform(3, 7, size=(8, 9)))
    _pattern(tmp_path / "pts.csv", rng.uniform([0, 0], [7, 8], size=(20, 2)))
    ds = ingest(tmp_path / "pts.csv", [tmp_path / "a.raster", tmp_path / "b.raster"])
    p_path, r_paths = export_dataset(ds, tmp_path / "export")
    back = ingest(p_path, r_paths)
    assert np.array_equal(back.pattern.points, ds.pattern.points)
    assert np.allclose(back.field.values, ds.field.values, rtol=0, atol=1e-12)
    assert np.allclose(np.array(back.affine), np.array(ds.affine), rtol=1e-12)


def test_ingest_errors(tmp_path):
    vals = np.ones((4, 4))
    vals[1, 2] = np.nan
    _raster(tmp_path / "nan.raster", vals)
    _pattern(tmp_path / "pts.csv", [(0.5, 0.5), (9.0, 1.0)])
    with pytest.raises(DataError, match="NaN"):
        ingest(tmp_path / "pts.csv", [tmp_path / "nan.raster"])
    _raster(tmp_path / "ok.raster", np.arange(16.0).reshape(4, 4))
    with pytest.raises(DataError):
        ingest(tmp_path / "pts.csv", [tmp_path / "ok.raster"])
    ds = ingest(tmp_path / "pts.csv", [tmp_path / "ok.raster"], drop_outside=True)
    assert ds.report["outside"] == [1] and ds.pattern.count == 1
    code = main(["ingest", "--pattern", str(tmp_path / "pts.csv"),
                 "--raster", str(tmp_path / "ok.raster"), "--out", str(tmp_path / "o")])
    assert code == 3


def test_diag_command(tmp_path):
    path = write_config(tmp_path, n_values=[1, 16], replicates=3)
    assert main(["diag", "--config", str(path)]) == 0
    lines = (tmp_path / "out" / "diag.csv").read_text().splitlines()
    assert lines[0] == "n,replicate,spatial_average,deviation" and len(lines) == 7


def test_module_entry_point(tmp_path):
    path = write_config(tmp_path, scenario="spiral")
    proc = subprocess.run([sys.executable, "-m", "covbayes", "simulate", "--config", str(path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "config error" in proc.stderr
