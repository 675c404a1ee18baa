import json
import math

import numpy as np
import pytest

from conftest import random_instance
from rankselect import configs, linalg
from rankselect import experiments as ex
from rankselect import simulate as sim
from rankselect.cli import main
from rankselect.errors import ConfigError, NotAvailable

SMALL = sim.SimScenario(n=60, m=12, p=10, q=10, r=0, b0=0.4)


def small_config(**kw):
    grids = [ex.GridSpec("small", SMALL, [0, 2, 4], ("GRS", "STRS", "STRS-DB", "BSW-1.1", "KF-2"))]
    return ex.ExperimentConfig("small", grids, reps=3, mc_draws=60, **kw)


def test_fit_mean_examples(gen):
    X, A, E, Y, P = random_instance(gen, 30, 6, 5, 2)
    XA = X @ A
    fit, err, pred = ex.fit_mean(XA, P, 2, XA=XA, X=X, A=A)
    assert err == pytest.approx(0, abs=1e-12) and pred == pytest.approx(0, abs=1e-10)
    fit0, err0, _ = ex.fit_mean(Y, P, 0, XA=XA)
    assert np.all(fit0 == 0)
    assert err0 == pytest.approx(math.sqrt(linalg.fro_sq(XA) / (30 * 6)))


def test_fit_mean_high_dim_has_no_coefficient_error(gen):
    X = gen.standard_normal((10, 20))
    A = gen.standard_normal((20, 3))
    with pytest.raises(NotAvailable):
        ex.fit_mean(X @ A, linalg.projection(X), 1, XA=X @ A, X=X, A=A)


def test_run_experiment_outputs(tmp_path):
    rep = ex.run_experiment(small_config(), tmp_path)
    assert len(rep.records) == 3 * 3 * 5
    for row in rep.summary:
        assert row.reps == 3
        assert row.recovery_rate is None or 0 <= row.recovery_rate <= 1
    for rec in rep.records:
        assert 0 <= rec.selected_rank <= 10
    text = (tmp_path / "small_records.csv").read_text().splitlines()
    assert text[0].startswith("schema_version,scenario_id")
    assert all(line.startswith("1,") for line in text[1:])
    svgs = [f for f in rep.files if f.suffix == ".svg"]
    assert svgs and all(f.read_text().startswith("<svg") for f in svgs)


def test_recovery_rate_is_exact_mean():
    rep = ex.run_experiment(small_config())
    for row in rep.summary:
        recs = [r for r in rep.records if (r.method, r.true_rank) == (row.method, row.true_rank)]
        assert row.recovery_rate == sum(r.selected_rank == r.true_rank for r in recs) / len(recs)


def test_determinism_and_worker_independence(tmp_path):
    cfg = small_config(seed=5)
    ex.run_experiment(cfg, tmp_path / "a", plots=False)
    ex.run_experiment(small_config(seed=5), tmp_path / "b", plots=False, workers=2)
    a = (tmp_path / "a" / "small_summary.csv").read_bytes()
    b = (tmp_path / "b" / "small_summary.csv").read_bytes()
    assert a == b
    ra = [r for r in ex.read_records_csv(tmp_path / "a" / "small_records.csv")]
    rb = [r for r in ex.read_records_csv(tmp_path / "b" / "small_records.csv")]
    assert [(r.key(), r.selected_rank, r.fit_err) for r in ra] == [(r.key(), r.selected_rank, r.fit_err) for r in rb]


def test_single_replication_rerun_is_byte_identical(tmp_path):
    cfg = small_config(seed=1)
    cfg.reps = 1
    ex.run_experiment(cfg, tmp_path / "a", plots=False)
    cfg2 = small_config(seed=1)
    cfg2.reps = 1
    ex.run_experiment(cfg2, tmp_path / "b", plots=False)
    strip = lambda p: [",".join(line.split(",")[:-1]) for line in p.read_text().splitlines()]  # drop wall_time
    assert strip(tmp_path / "a" / "small_records.csv") == strip(tmp_path / "b" / "small_records.csv")
    assert (tmp_path / "a" / "small_summary.csv").read_bytes() == (tmp_path / "b" / "small_summary.csv").read_bytes()


def test_bsw_is_na_when_n_equals_q(tmp_path):
    sc = sim.SimScenario(n=30, m=20, p=60, q=30, r=0, b0=0.05)
    cfg = ex.ExperimentConfig("nq", [ex.GridSpec("nq", sc, [0, 2], ("BSW-1.1", "STRS"))], reps=2, mc_draws=50)
    rep = ex.run_experiment(cfg, tmp_path)
    bsw = [r for r in rep.records if r.method == "BSW-1.1"]
    assert bsw and all(r.selected_rank is None for r in bsw)
    row = next(r for r in rep.summary if r.method == "BSW-1.1")
    assert row.recovery_rate is None
    assert ",BSW-1.1,," in (tmp_path / "nq_records.csv").read_text()


def test_range_extension_grs_cap():
    grid = configs.exp3()[2]
    grid.ranks = [0, 12]
    cfg = ex.ExperimentConfig("exp3c", [grid], reps=2, mc_draws=100)
    rep = ex.run_experiment(cfg)
    grs = [r for r in rep.records if r.method == "GRS"]
    assert {r.K_lambda for r in grs} == {7}
    assert all(r.selected_rank <= 7 for r in grs)
    assert all(r.selected_rank == 12 for r in rep.records if r.method == "STRS" and r.true_rank == 12)


def test_oracle_bound_per_replication():
    rep = ex.run_experiment(small_config())
    for rec in rep.records:
        if rec.selected_rank == rec.true_rank and rec.fit_err is not None:
            assert rec.fit_err**2 * 60 * 12 <= 4 * rec.true_rank * rec.d1_pe**2 * (1 + 1e-9)


def test_db_dominance_column():
    rep = ex.run_experiment(small_config())
    dom = [r.lam_dominance for r in rep.records if r.method == "STRS-DB"]
    assert dom and all(d == 1 for d in dom)


def test_tightness_sweep_rows():
    scen = [sim.SimScenario(n=80, m=15, p=10, q=10, r=3, b0=b, seed=i) for i, b in enumerate((0.05, 0.3, 1.0))]
    rows = ex.tightness_sweep(scen, range(10, 501, 10))
    assert len(rows) == 3
    for row in rows:
        if row.lam is not None:
            assert row.lam in range(10, 501, 10)
            assert row.gap <= row.d_r_xa * (1 + 1e-9)
    assert rows[0].lam is None or rows[0].lam <= rows[2].lam
    with pytest.raises(ValueError):
        ex.tightness_sweep(scen, [0.5, 10])


@pytest.mark.filterwarnings("ignore::rankselect.errors.DegenerateTie")
def test_tightness_noiseless_takes_largest_grid_point():
    sc = sim.SimScenario(n=40, m=10, p=8, q=8, r=2, b0=1.0, sigma=0.0)
    rows = ex.tightness_sweep([sc], [1, 2, 5, 10, 20])
    assert rows[0].lam == 20


def test_ratio_study_identity_gaussian():
    # P = identity and Gaussian E: E and Z share a law, so ratios hover near one
    sc = sim.SimScenario(n=30, m=20, p=30, q=30, r=0, design="identity", seed=3)
    rows = ex.ratio_study(sc, pairs=200)
    assert len(rows) == 20
    for row in rows:
        assert math.isfinite(row.mean_ratio) and row.mean_ratio > 0
        assert row.ratio_of_means == pytest.approx(1.0, abs=0.1)


def test_builtin_configs_and_overrides():
    cfg = configs.builtin("exp1", reps=4, methods=["STRS"], seed=9)
    assert cfg.reps == 4 and cfg.seed == 9 and all(g.methods == ("STRS",) for g in cfg.grids)
    assert len(cfg.grids) == 6
    with pytest.raises(ConfigError):
        configs.builtin("nope")


def test_json_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(
        json.dumps(
            {
                "name": "mine",
                "reps": 2,
                "mc_draws": 40,
                "grids": [{"scenario_id": "a", "scenario": {"n": 40, "m": 8, "p": 6, "q": 6, "b0": 0.5}, "ranks": [1], "methods": ["STRS"]}],
            }
        )
    )
    cfg = configs.load_config(path)
    rep = ex.run_experiment(cfg)
    assert cfg.name == "mine" and len(rep.records) == 2
    path.write_text(json.dumps({"grids": [{"scenario": {}}]}))
    with pytest.raises(ConfigError):
        configs.load_config(path)


# --- CLI ---------------------------------------------------------------------


def test_cli_simulate_and_select(tmp_path, capsys):
    assert main(["simulate", "--n", "60", "--m", "10", "--p", "8", "--q", "8", "--r", "3", "--b0", "0.8", "--out-dir", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["select", str(tmp_path / "Y.csv"), str(tmp_path / "X.csv"), "--mc-draws", "50"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["rank"] == 3 and out["trace"]["variant"] == "STRS"
    for method in ("GRS", "STRS-DB"):
        assert main(["select", str(tmp_path / "Y.csv"), str(tmp_path / "X.csv"), "--method", method]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out.get("rank", out.get("k_hat")) == 3


def test_cli_select_sstrs_without_design(tmp_path, capsys):
    g = np.random.default_rng(0)
    Y = g.standard_normal((200, 2)) @ g.standard_normal((2, 40)) + g.standard_normal((200, 40))
    sim.write_matrix_csv(Y, tmp_path / "Y.csv")
    assert main(["select", str(tmp_path / "Y.csv"), "--method", "SSTRS"]) == 0
    assert json.loads(capsys.readouterr().out)["rank"] == 2


def test_cli_moments(capsys):
    assert main(["moments", "--q", "3", "--m", "4", "--mc-draws", "30", "--kf"]) == 0
    out = capsys.readouterr().out
    assert "S_1=" in out and len(out.strip().splitlines()) == 4
    assert main(["moments"]) == 0
    assert "q=3 m=4 mc_draws=30" in capsys.readouterr().out


def test_cli_experiment_and_report(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(
        json.dumps({"grids": [{"scenario_id": "a", "scenario": {"n": 40, "m": 8, "p": 6, "q": 6, "b0": 0.5}, "ranks": [0, 1], "methods": ["STRS", "GRS"]}]})
    )
    out = tmp_path / "out"
    assert main(["experiment", str(cfg), "--reps", "2", "--mc-draws", "40", "--out-dir", str(out), "--methods", "STRS"]) == 0
    recs = ex.read_records_csv(out / "c_records.csv")
    assert {r.method for r in recs} == {"STRS"} and len(recs) == 4
    assert main(["report", str(out / "c_records.csv"), "--name", "agg", "--out-dir", str(out)]) == 0
    assert (out / "agg_summary.csv").exists()


def test_cli_reports_library_errors(tmp_path, capsys):
    f = tmp_path / "bad.json"
    f.write_text(json.dumps({"grids": [{"scenario_id": "a", "scenario": {"n": 10, "m": 5, "p": 4, "q": 2}, "ranks": [1], "methods": ["STRS"]}]}))
    assert main(["experiment", str(f), "--out-dir", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err
