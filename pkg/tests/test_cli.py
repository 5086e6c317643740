import json
import os
import subprocess
import sys

import numpy as np
import pytest
import yaml

from zetalind.cli import (
    ConfigError,
    RunConfig,
    SolverOptions,
    load_config,
    main,
    run_dynamics_scan,
    run_nh_spectral_scan,
    run_references,
    run_spectral_scan,
    run_transient,
    run_tebd,
)


def write_cfg(tmp_path, **kw):
    doc = {
        "schema_version": 1,
        "model": {"L": kw.pop("L", 2), "gamma": 0.1},
        "h_grid": kw.pop("h_grid", [2.0]),
        "zeta_grid": kw.pop("zeta_grid", [1.0]),
        "n_samples": kw.pop("n_samples", 2),
        "base_seed": kw.pop("base_seed", 9),
        "out": str(tmp_path / "out"),
        "threads": 1,
        "solver": kw.pop("solver", {}),
    }
    doc.update(kw)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def test_config_validation(tmp_path):
    path = write_cfg(tmp_path)
    cfg = load_config(path, "spectral_scan", {})
    assert cfg.L == 2 and cfg.n_samples == 2
    assert cfg.sample_seed(3) == 9 ^ 3
    with pytest.raises(ConfigError):
        load_config(path, "bogus", {})
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: {L: 2}\nunknown_key: 1\n")
    with pytest.raises(ConfigError):
        load_config(str(bad), "spectral_scan", {})
    nosamples = write_cfg(tmp_path, n_samples=0)
    with pytest.raises(ConfigError):
        load_config(nosamples, "spectral_scan", {})


def test_budget_guards(tmp_path):
    path = write_cfg(tmp_path, L=8)
    with pytest.raises(ConfigError):
        load_config(path, "spectral_scan", {})
    cfg = load_config(path, "spectral_scan", {"heavy": True})
    assert cfg.heavy
    path = write_cfg(tmp_path, L=4, zeta_grid=[0.05])
    with pytest.raises(ConfigError):
        load_config(path, "dynamics_scan", {})


def test_flag_overrides(tmp_path):
    path = write_cfg(tmp_path)
    cfg = load_config(path, "spectral_scan",
                      {"base_seed": 123, "out": "elsewhere", "threads": 2})
    assert cfg.base_seed == 123 and cfg.out == "elsewhere" and cfg.threads == 2


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [dict(zip(header, line.strip().split(","))) for line in fh]
    return header, rows


def test_spectral_scan_outputs_and_determinism(tmp_path):
    cfg = RunConfig(
        experiment="spectral_scan", L=2, h_grid=(1.0, 5.0), zeta_grid=(1.0,),
        n_samples=3, base_seed=4, out=str(tmp_path / "a"), threads=1,
    )
    agg = run_spectral_scan(cfg)
    assert len(agg) == 2
    main_csv = tmp_path / "a" / "spectral_scan.csv"
    comp_csv = tmp_path / "a" / "spectral_scan_samples.csv"
    header, rows = read_csv(main_csv)
    assert header[:2] == ["h", "zeta"] and len(rows) == 2
    _, sample_rows = read_csv(comp_csv)
    assert len(sample_rows) == 6
    assert {r["seed"] for r in sample_rows} == {str(4 ^ k) for k in range(3)}
    # byte-identical rerun
    cfg2 = RunConfig(
        experiment="spectral_scan", L=2, h_grid=(1.0, 5.0), zeta_grid=(1.0,),
        n_samples=3, base_seed=4, out=str(tmp_path / "b"), threads=1,
    )
    run_spectral_scan(cfg2)
    assert (tmp_path / "a" / "spectral_scan.csv").read_bytes() == \
        (tmp_path / "b" / "spectral_scan.csv").read_bytes()
    meta = json.loads((tmp_path / "a" / "spectral_scan.csv.meta.json").read_text())
    assert meta["schema_version"] == 1
    assert meta["config"]["base_seed"] == 4


def test_single_sample_scan_equals_direct_call(tmp_path):
    cfg = RunConfig(
        experiment="spectral_scan", L=2, h_grid=(3.0,), zeta_grid=(0.5,),
        n_samples=1, base_seed=7, out=str(tmp_path / "x"), threads=1,
    )
    agg = run_spectral_scan(cfg)
    from zetalind.fock import build_basis
    from zetalind.model import (ModelParams, build_hamiltonian, build_jumps,
                                sample_disorder)
    from zetalind.spectra import csr_summary, eigenvalues, spacing_ratios
    from zetalind.superop import build_zeta_liouvillian, charge_sectors

    p = ModelParams(L=2, h=3.0)
    d = sample_disorder(p, 7)
    b = build_basis(2)
    sup = build_zeta_liouvillian(
        build_hamiltonian(b, p, d), build_jumps(b, p), 0.5)
    block = charge_sectors(sup, b, qs=[0])[0]
    r, c = csr_summary(spacing_ratios(eigenvalues(block.block)))
    assert np.isclose(agg[0]["r_mean"], r, atol=0)
    assert np.isclose(agg[0]["neg_cos_mean"], c, atol=0)


def test_aggregation_order_independent(tmp_path):
    rows = [
        {"h": 1.0, "zeta": 1.0, "sample_index": k, "seed": k,
         "r_mean": 0.6 + 0.01 * k, "neg_cos_mean": 0.1 * k, "n_eigs": 6,
         "n_ratios": 6}
        for k in range(5)
    ]
    from zetalind.cli import _aggregate
    a = _aggregate(rows, ("h", "zeta"), ("r_mean", "neg_cos_mean"),
                   {"n_eigs": "n_eigs"})
    rng = np.random.default_rng(0)
    shuffled = [rows[i] for i in rng.permutation(5)]
    b = _aggregate(shuffled, ("h", "zeta"), ("r_mean", "neg_cos_mean"),
                   {"n_eigs": "n_eigs"})
    assert abs(a[0]["r_mean"] - b[0]["r_mean"]) < 1e-12


def test_nh_scan(tmp_path):
    cfg = RunConfig(
        experiment="nh_spectral_scan", L=4, h_grid=(1.0,), n_samples=2,
        base_seed=2, out=str(tmp_path / "nh"), threads=1,
    )
    agg = run_nh_spectral_scan(cfg)
    assert agg[0]["n_eigs"] == 6      # C(4,2) half-filling block
    assert os.path.exists(tmp_path / "nh" / "nh_spectral_scan.csv")


def test_dynamics_scan_identity_and_outputs(tmp_path):
    cfg = RunConfig(
        experiment="dynamics_scan", L=2, h_grid=(3.0,), zeta_grid=(1.0,),
        n_samples=2, base_seed=5, out=str(tmp_path / "dyn"), threads=1,
        solver=SolverOptions(t_min=5.0, t_cap=300.0),
    )
    agg, rows = run_dynamics_scan(cfg)
    assert all(r["converged"] for r in rows)
    for r in rows:
        assert abs(r["n_ss"] - 1.0) < 1e-8        # half filling at L=2
        ident = abs(r["activity_ss"] - 0.1 * 2 * (1 - r["imbalance_ss"]))
        assert ident < 1e-6
        assert np.isfinite(r["gap"]) and r["gap"] > 0
    header, _ = read_csv(tmp_path / "dyn" / "dynamics_scan.csv")
    assert header == ["h", "zeta", "imbalance_ss", "activity_ss", "n_ss",
                      "gap", "t_reached", "n_converged", "n_samples"]


def test_transient_and_tebd_series(tmp_path):
    cfg = RunConfig(
        experiment="transient", L=2, h_grid=(2.0,), zeta_grid=(1.0,),
        n_samples=2, base_seed=3, out=str(tmp_path / "tr"), threads=1,
        solver=SolverOptions(t_max=1.0, sample_every=0.5),
    )
    outputs = run_transient(cfg)
    assert outputs == [str(tmp_path / "tr" / "transient_h2_zeta1.csv")]
    header, rows = read_csv(outputs[0])
    assert header == ["time", "imbalance_mean", "imbalance_stderr", "n_samples"]
    assert float(rows[0]["imbalance_mean"]) == 1.0
    cfg_te = RunConfig(
        experiment="tebd", L=4, h_grid=(8.0,), zeta_grid=(0.5,),
        n_samples=1, base_seed=3, out=str(tmp_path / "te"), threads=1,
        solver=SolverOptions(t_max=1.0, sample_every=0.5, chi_max=16),
    )
    outputs = run_tebd(cfg_te)
    header, rows = read_csv(outputs[0])
    assert header[-3:] == ["max_bond", "discarded_cum_max", "imag_residue_max"]
    assert all(float(r["imag_residue_max"]) < 1e-5 for r in rows)


def test_references_runner(tmp_path):
    cfg = RunConfig(
        experiment="references", out=str(tmp_path / "ref"), base_seed=10,
        reference_dim=60, reference_samples=2, poisson_points=500, threads=1,
    )
    rows = run_references(cfg)
    kinds = {r["kind"] for r in rows}
    assert kinds == {"ginibre", "poisson2d"}
    for kind in kinds:
        assert os.path.exists(tmp_path / "ref" / f"reference_{kind}_samples.csv")


def test_cli_exit_codes(tmp_path):
    # config error -> 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("nonsense_key: 1\n")
    assert main(["spectral", "--config", str(bad)]) == 2
    # empty-grid transient run -> success, no outputs
    empty = tmp_path / "empty.yaml"
    empty.write_text(yaml.safe_dump({
        "model": {"L": 2}, "h_grid": [], "zeta_grid": [],
        "n_samples": 1, "out": str(tmp_path / "none"), "threads": 1,
    }))
    assert main(["transient", "--config", str(empty)]) == 0
    assert not (tmp_path / "none").exists()


def test_cli_subprocess_entry(tmp_path):
    cfgpath = write_cfg(tmp_path, L=2, h_grid=[1.0], n_samples=1)
    proc = subprocess.run(
        [sys.executable, "-m", "zetalind.cli", "spectral",
         "--config", cfgpath, "--threads", "1"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert os.path.exists(tmp_path / "out" / "spectral_scan.csv")
