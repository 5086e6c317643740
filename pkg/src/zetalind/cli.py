"""Configuration-driven experiment runner.

Subcommands: spectral, nh-spectral, dynamics, transient, tebd, references,
verify.  A YAML config (schema_version 1) carries the model, grids, seeds and
solver options; the common CLI flags override file values.  Outputs are CSV
tables/series (fixed column order, 17 significant digits) plus a JSON sidecar
with the fully resolved configuration, so identical (config, base_seed) runs
produce byte-identical files.  Per-sample seeds are base_seed XOR sample
index, recorded per output row for single-sample replay.

Exit codes: 0 success, 2 config error, 3 numerical failure (diagnostics file
written next to the outputs).
"""

import argparse
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import yaml

from . import __version__
from .dynamics import NumericalError

SCHEMA_VERSION = 1
THREADS_ENV = "ZETALIND_THREADS"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    dt: float = 1e-2
    t_max: float = 100.0
    sample_every: float = 0.5
    chi_max: int = 64
    sv_tol: float = 1e-16
    n_max: int | None = None
    t_min: float = 50.0
    t_cap: float = 500.0
    stat_tol: float = 1e-8
    window: float = 1.0
    min_zeta: float = 0.1
    gap_budget: int = 1024   # dense-eig gap cross-check up to this sector size


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    L: int = 6
    J: float = 1.0
    U: float | None = None
    gamma: float = 0.1
    h_grid: tuple = (1.0, 20.0)
    zeta_grid: tuple = (1.0,)
    n_samples: int = 4
    base_seed: int = 1
    solver: SolverOptions = field(default_factory=SolverOptions)
    out: str = "results"
    heavy: bool = False
    threads: int | None = None
    reference_dim: int = 200
    reference_samples: int = 50
    poisson_points: int = 10_000

    def sample_seed(self, index: int) -> int:
        return self.base_seed ^ index

    def model_params(self):
        from .model import ModelParams

        return ModelParams(L=self.L, J=self.J, U=self.U, gamma=self.gamma)


_EXPERIMENTS = (
    "spectral_scan", "nh_spectral_scan", "dynamics_scan",
    "transient", "tebd", "references",
)


def load_config(path: str | None, experiment: str, overrides: dict) -> RunConfig:
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    version = raw.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    raw.pop("experiment", None)   # the subcommand decides

    model = raw.pop("model", {}) or {}
    solver_raw = raw.pop("solver", {}) or {}
    known_model = {"L", "J", "U", "gamma"}
    bad = set(model) - known_model
    if bad:
        raise ConfigError(f"unknown model keys: {sorted(bad)}")
    solver_fields = set(SolverOptions.__dataclass_fields__)
    bad = set(solver_raw) - solver_fields
    if bad:
        raise ConfigError(f"unknown solver keys: {sorted(bad)}")
    top_fields = {
        "h_grid", "zeta_grid", "n_samples", "base_seed", "out", "heavy",
        "threads", "reference_dim", "reference_samples", "poisson_points",
    }
    bad = set(raw) - top_fields
    if bad:
        raise ConfigError(f"unknown config keys: {sorted(bad)}")

    kwargs = dict(experiment=experiment)
    kwargs.update({k: model[k] for k in model})
    for k in top_fields & set(raw):
        kwargs[k] = raw[k]
    if "h_grid" in kwargs:
        kwargs["h_grid"] = tuple(float(x) for x in kwargs["h_grid"])
    if "zeta_grid" in kwargs:
        kwargs["zeta_grid"] = tuple(float(x) for x in kwargs["zeta_grid"])
    try:
        solver = SolverOptions(**solver_raw)
        cfg = RunConfig(solver=solver, **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    for key, value in overrides.items():
        if value is not None:
            cfg = replace(cfg, **{key: value})
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.experiment not in _EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}")
    # series experiments accept an empty grid (no work, no outputs)
    if not cfg.h_grid and cfg.experiment in ("spectral_scan", "nh_spectral_scan",
                                             "dynamics_scan"):
        raise ConfigError("h_grid must be nonempty")
    if cfg.n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    if any(not 0.0 <= z <= 1.0 for z in cfg.zeta_grid):
        raise ConfigError("zeta grid values must lie in [0, 1]")
    if cfg.L < 1:
        raise ConfigError("L must be positive")
    if cfg.experiment == "spectral_scan":
        cap = 8 if cfg.heavy else 6
        if cfg.L > cap:
            raise ConfigError(
                f"spectral scan at L={cfg.L} exceeds the budget (L<={cap}"
                + ("" if cfg.heavy else "; use --heavy") + ")"
            )
    if cfg.experiment == "nh_spectral_scan":
        cap = 16 if cfg.heavy else 12
        if cfg.L > cap:
            raise ConfigError(f"non-Hermitian scan budget exceeded (L<={cap})")
    if cfg.experiment in ("dynamics_scan", "transient"):
        cap = 10 if cfg.heavy else 8
        if cfg.L > cap:
            raise ConfigError(f"exact dynamics budget exceeded (L<={cap})")
        if cfg.experiment == "dynamics_scan" and any(
            z < cfg.solver.min_zeta for z in cfg.zeta_grid
        ):
            raise ConfigError(
                f"dynamics scan requires zeta >= {cfg.solver.min_zeta} "
                "(steady states are not chased at vanishing fugacity)"
            )
    if cfg.experiment == "tebd" and cfg.L > 32:
        raise ConfigError("TEBD runs support L <= 32")
    if cfg.experiment == "transient" and cfg.L % 2 != 0:
        raise ConfigError("the charge-density-wave initial state needs even L")


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, columns, rows):
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def write_sidecar(path, cfg: RunConfig, outputs, extra=None):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "experiment": cfg.experiment,
        "config": asdict(cfg),
        "outputs": sorted(outputs),
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _resolve_threads(cfg: RunConfig) -> int:
    if cfg.threads is not None:
        return max(1, cfg.threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"bad {THREADS_ENV}={env!r}") from None
    return max(1, os.cpu_count() or 1)


def _worker_init():
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=1)
    except Exception:
        pass


def _run_tasks(fn, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads, initializer=_worker_init) as ex:
        return list(ex.map(fn, tasks))


# ---------------------------------------------------------------- spectral

def _spectral_sample(task):
    cfg_dict, h, zeta, k = task
    cfg = _cfg_from_dict(cfg_dict)
    from .fock import build_basis
    from .model import ModelParams, build_hamiltonian, build_jumps, sample_disorder
    from .spectra import csr_summary, eigenvalues, spacing_ratios
    from .superop import build_zeta_liouvillian, charge_sectors

    params = ModelParams(L=cfg.L, J=cfg.J, U=cfg.U, gamma=cfg.gamma, h=h)
    seed = cfg.sample_seed(k)
    dis = sample_disorder(params, seed)
    basis = build_basis(cfg.L)
    H = build_hamiltonian(basis, params, dis)
    jumps = build_jumps(basis, params)
    sup = build_zeta_liouvillian(H, jumps, zeta)
    block = charge_sectors(sup, basis, qs=[0])[0]
    spec = eigenvalues(block.block, source={"h": h, "zeta": zeta, "seed": seed})
    samples = spacing_ratios(spec)
    r_mean, c_mean = csr_summary(samples)
    return {
        "h": h, "zeta": zeta, "sample_index": k, "seed": seed,
        "r_mean": r_mean, "neg_cos_mean": c_mean,
        "n_ratios": len(samples.ratios), "n_eigs": len(spec.eigenvalues),
    }


def _cfg_from_dict(d):
    d = dict(d)
    d["solver"] = SolverOptions(**d["solver"])
    d["h_grid"] = tuple(d["h_grid"])
    d["zeta_grid"] = tuple(d["zeta_grid"])
    return RunConfig(**d)


def _aggregate(rows, keys, value_cols, count_col_values):
    """Group rows by `keys`; mean and standard error per value column."""
    grouped = {}
    for r in rows:
        grouped.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key in sorted(grouped):
        part = sorted(grouped[key], key=lambda r: r["sample_index"])
        row = dict(zip(keys, key))
        n = len(part)
        for col in value_cols:
            vals = np.array([p[col] for p in part], dtype=float)
            row[f"{col}"] = vals.mean()
            row[f"{col.replace('_mean', '')}_stderr"] = (
                vals.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
            )
        for col, src in count_col_values.items():
            row[col] = part[0][src] if isinstance(src, str) else src(part)
        row["n_samples"] = n
        out.append(row)
    return out


def run_spectral_scan(cfg: RunConfig):
    threads = _resolve_threads(cfg)
    tasks = [
        (asdict(cfg), h, z, k)
        for h in cfg.h_grid for z in cfg.zeta_grid for k in range(cfg.n_samples)
    ]
    rows = _run_tasks(_spectral_sample, tasks, threads)
    rows.sort(key=lambda r: (r["h"], r["zeta"], r["sample_index"]))
    agg = _aggregate(
        rows, ("h", "zeta"), ("r_mean", "neg_cos_mean"), {"n_eigs": "n_eigs"}
    )
    os.makedirs(cfg.out, exist_ok=True)
    main = os.path.join(cfg.out, "spectral_scan.csv")
    comp = os.path.join(cfg.out, "spectral_scan_samples.csv")
    write_csv(
        main,
        ["h", "zeta", "r_mean", "r_stderr", "neg_cos_mean", "neg_cos_stderr",
         "n_eigs", "n_samples"],
        agg,
    )
    write_csv(
        comp,
        ["h", "zeta", "sample_index", "seed", "r_mean", "neg_cos_mean", "n_ratios"],
        rows,
    )
    write_sidecar(main + ".meta.json", cfg, [main, comp])
    return agg


def _nh_sample(task):
    cfg_dict, h, k = task
    cfg = _cfg_from_dict(cfg_dict)
    from .fock import build_basis
    from .model import ModelParams, build_nonhermitian, sample_disorder
    from .spectra import csr_summary, eigenvalues, spacing_ratios

    params = ModelParams(L=cfg.L, J=cfg.J, U=cfg.U, gamma=cfg.gamma, h=h)
    seed = cfg.sample_seed(k)
    dis = sample_disorder(params, seed)
    basis = build_basis(cfg.L, cfg.L // 2)
    Ht = build_nonhermitian(basis, params, dis)
    spec = eigenvalues(Ht.toarray(), source={"h": h, "seed": seed})
    r_mean, c_mean = csr_summary(spacing_ratios(spec))
    return {
        "h": h, "sample_index": k, "seed": seed,
        "r_mean": r_mean, "neg_cos_mean": c_mean,
        "n_ratios": len(spec.eigenvalues), "n_eigs": len(spec.eigenvalues),
    }


def run_nh_spectral_scan(cfg: RunConfig):
    threads = _resolve_threads(cfg)
    tasks = [(asdict(cfg), h, k) for h in cfg.h_grid for k in range(cfg.n_samples)]
    rows = _run_tasks(_nh_sample, tasks, threads)
    rows.sort(key=lambda r: (r["h"], r["sample_index"]))
    agg = _aggregate(rows, ("h",), ("r_mean", "neg_cos_mean"), {"n_eigs": "n_eigs"})
    os.makedirs(cfg.out, exist_ok=True)
    main = os.path.join(cfg.out, "nh_spectral_scan.csv")
    comp = os.path.join(cfg.out, "nh_spectral_scan_samples.csv")
    write_csv(
        main,
        ["h", "r_mean", "r_stderr", "neg_cos_mean", "neg_cos_stderr",
         "n_eigs", "n_samples"],
        agg,
    )
    write_csv(
        comp,
        ["h", "sample_index", "seed", "r_mean", "neg_cos_mean", "n_ratios"],
        rows,
    )
    write_sidecar(main + ".meta.json", cfg, [main, comp])
    return agg


# ---------------------------------------------------------------- dynamics

def _steady_sample(task):
    cfg_dict, h, zeta, k = task
    cfg = _cfg_from_dict(cfg_dict)
    from .fock import build_basis
    from .model import ModelParams, build_hamiltonian, build_jumps, sample_disorder
    from .superop import build_zeta_liouvillian
    from . import dynamics as dyn

    params = ModelParams(L=cfg.L, J=cfg.J, U=cfg.U, gamma=cfg.gamma, h=h)
    seed = cfg.sample_seed(k)
    dis = sample_disorder(params, seed)
    basis = build_basis(cfg.L)
    H = build_hamiltonian(basis, params, dis)
    jumps = build_jumps(basis, params)
    sup = build_zeta_liouvillian(H, jumps, zeta)
    sol = cfg.solver

    gap = float("nan")
    from .superop import sector_indices

    if len(sector_indices(basis, 0)) <= sol.gap_budget:
        try:
            _, gap = dyn.steady_state_eig(sup, basis=basis, sector_q=0)
        except NumericalError:
            pass

    def solve(s):
        rho0 = dyn.cdw_state(basis)
        return dyn.steady_state(
            rho0, s, sol.dt, basis, params, sector_q=0,
            t_min=sol.t_min, t_cap=sol.t_cap, stat_tol=sol.stat_tol,
            window=sol.window, gap=gap if np.isfinite(gap) else None,
        )

    rho_ss, info = solve(sup)
    imb, I, N, cur = dyn.observables(rho_ss, basis, params)
    jump_expect = _jump_expectation(rho_ss, basis, params)
    if zeta == 1.0:
        activity = jump_expect
    else:
        # d/dzeta of (zeta-1) Tr[L_J rho_ss(zeta)] by centered differences
        dz = min(1e-3, (1.0 - zeta) / 2, zeta / 2)
        g_vals = []
        for z2 in (zeta - dz, zeta + dz):
            rho2, _ = solve(sup.at_zeta(z2))
            g_vals.append((z2 - 1.0) * _jump_expectation(rho2, basis, params))
        activity = (g_vals[1] - g_vals[0]) / (2 * dz)
    return {
        "h": h, "zeta": zeta, "sample_index": k, "seed": seed,
        "imbalance_ss": imb, "activity_ss": activity, "n_ss": N,
        "gap": gap, "t_reached": info["t_reached"],
        "converged": bool(info["converged"]),
    }


def _jump_expectation(rho, basis, params):
    from .dynamics import ObservableContext, VectorSpace
    from .superop import vectorize

    ctx = ObservableContext(basis, params, VectorSpace(basis))
    return float((ctx.weights["jump_rate"] @ vectorize(rho)).real)


def run_dynamics_scan(cfg: RunConfig):
    threads = _resolve_threads(cfg)
    tasks = [
        (asdict(cfg), h, z, k)
        for h in cfg.h_grid for z in cfg.zeta_grid for k in range(cfg.n_samples)
    ]
    rows = _run_tasks(_steady_sample, tasks, threads)
    rows.sort(key=lambda r: (r["h"], r["zeta"], r["sample_index"]))
    agg = []
    for h in cfg.h_grid:
        for z in cfg.zeta_grid:
            part = [r for r in rows if r["h"] == h and r["zeta"] == z]
            conv = [r for r in part if r["converged"]]
            use = conv if conv else part
            agg.append({
                "h": h, "zeta": z,
                "imbalance_ss": float(np.mean([r["imbalance_ss"] for r in use])),
                "activity_ss": float(np.mean([r["activity_ss"] for r in use])),
                "n_ss": float(np.mean([r["n_ss"] for r in use])),
                "gap": float(np.mean([r["gap"] for r in use])),
                "t_reached": float(np.max([r["t_reached"] for r in use])),
                "n_converged": len(conv), "n_samples": len(part),
            })
    os.makedirs(cfg.out, exist_ok=True)
    main = os.path.join(cfg.out, "dynamics_scan.csv")
    comp = os.path.join(cfg.out, "dynamics_scan_samples.csv")
    write_csv(
        main,
        ["h", "zeta", "imbalance_ss", "activity_ss", "n_ss", "gap",
         "t_reached", "n_converged", "n_samples"],
        agg,
    )
    write_csv(
        comp,
        ["h", "zeta", "sample_index", "seed", "imbalance_ss", "activity_ss",
         "n_ss", "gap", "t_reached", "converged"],
        rows,
    )
    write_sidecar(main + ".meta.json", cfg, [main, comp])
    return agg, rows


# ---------------------------------------------------------------- series

def _transient_sample(task):
    cfg_dict, h, zeta, k = task
    cfg = _cfg_from_dict(cfg_dict)
    from .fock import build_basis
    from .model import ModelParams, build_hamiltonian, build_jumps, sample_disorder
    from .superop import build_zeta_liouvillian
    from . import dynamics as dyn

    params = ModelParams(L=cfg.L, J=cfg.J, U=cfg.U, gamma=cfg.gamma, h=h)
    seed = cfg.sample_seed(k)
    dis = sample_disorder(params, seed)
    basis = build_basis(cfg.L)
    sup = build_zeta_liouvillian(
        build_hamiltonian(basis, params, dis), build_jumps(basis, params), zeta
    )
    ser = dyn.propagate_nonlinear(
        dyn.cdw_state(basis), sup, cfg.solver.dt, cfg.solver.t_max,
        sample_every=cfg.solver.sample_every, basis=basis, params=params,
        sector_q=0,
    )
    return {"times": ser.times, "imbalance": ser.channels["imbalance"],
            "seed": seed, "h": h, "zeta": zeta, "sample_index": k}


def _tebd_sample(task):
    cfg_dict, h, zeta, k = task
    cfg = _cfg_from_dict(cfg_dict)
    from .model import ModelParams, sample_disorder
    from .mpdo import tebd_run

    params = ModelParams(L=cfg.L, J=cfg.J, U=cfg.U, gamma=cfg.gamma, h=h)
    seed = cfg.sample_seed(k)
    dis = sample_disorder(params, seed)
    ser = tebd_run(
        params, dis, zeta, chi_max=cfg.solver.chi_max, dt=cfg.solver.dt,
        t_max=cfg.solver.t_max, sv_tol=cfg.solver.sv_tol,
        sample_every=cfg.solver.sample_every,
    )
    return {
        "times": ser.times, "imbalance": ser.channels["imbalance"],
        "max_bond": ser.channels["max_bond"],
        "discarded_cum": ser.channels["discarded_cum"],
        "imag_residue": ser.channels["imag_residue"],
        "seed": seed, "h": h, "zeta": zeta, "sample_index": k,
    }


def _series_outputs(cfg, rows, kind):
    outputs = []
    for h in cfg.h_grid:
        for z in cfg.zeta_grid:
            part = sorted(
                (r for r in rows if r["h"] == h and r["zeta"] == z),
                key=lambda r: r["sample_index"],
            )
            times = part[0]["times"]
            imb = np.stack([r["imbalance"] for r in part])
            n = len(part)
            table = []
            for j, t in enumerate(times):
                row = {
                    "time": t,
                    "imbalance_mean": imb[:, j].mean(),
                    "imbalance_stderr": (
                        imb[:, j].std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
                    ),
                    "n_samples": n,
                }
                if kind == "tebd":
                    row["max_bond"] = int(max(r["max_bond"][j] for r in part))
                    row["discarded_cum_max"] = max(
                        r["discarded_cum"][j] for r in part
                    )
                    row["imag_residue_max"] = max(
                        r["imag_residue"][j] for r in part
                    )
                table.append(row)
            name = f"{kind}_h{h:g}_zeta{z:g}.csv"
            path = os.path.join(cfg.out, name)
            cols = ["time", "imbalance_mean", "imbalance_stderr", "n_samples"]
            if kind == "tebd":
                cols += ["max_bond", "discarded_cum_max", "imag_residue_max"]
            write_csv(path, cols, table)
            outputs.append(path)
    return outputs


def run_transient(cfg: RunConfig):
    threads = _resolve_threads(cfg)
    tasks = [
        (asdict(cfg), h, z, k)
        for h in cfg.h_grid for z in cfg.zeta_grid for k in range(cfg.n_samples)
    ]
    if not tasks:
        return []
    rows = _run_tasks(_transient_sample, tasks, threads)
    os.makedirs(cfg.out, exist_ok=True)
    outputs = _series_outputs(cfg, rows, "transient")
    write_sidecar(os.path.join(cfg.out, "transient.meta.json"), cfg, outputs)
    return outputs


def run_tebd(cfg: RunConfig):
    threads = _resolve_threads(cfg)
    tasks = [
        (asdict(cfg), h, z, k)
        for h in cfg.h_grid for z in cfg.zeta_grid for k in range(cfg.n_samples)
    ]
    if not tasks:
        return []
    rows = _run_tasks(_tebd_sample, tasks, threads)
    os.makedirs(cfg.out, exist_ok=True)
    outputs = _series_outputs(cfg, rows, "tebd")
    write_sidecar(os.path.join(cfg.out, "tebd.meta.json"), cfg, outputs)
    return outputs


# ---------------------------------------------------------------- references

def run_references(cfg: RunConfig):
    from .spectra import csr_summary, reference_ensemble

    os.makedirs(cfg.out, exist_ok=True)
    summary_rows = []
    outputs = []
    specs = [
        ("ginibre", cfg.reference_dim, cfg.reference_samples),
        ("poisson2d", cfg.poisson_points, 1),
    ]
    for kind, dim, nsamp in specs:
        samples = reference_ensemble(kind, dim=dim, nsamples=nsamp,
                                     seed=cfg.base_seed)
        r_mean, c_mean = csr_summary(samples)
        summary_rows.append({
            "kind": kind, "dim": dim, "n_samples": nsamp,
            "r_mean": r_mean, "neg_cos_mean": c_mean,
            "n_ratios": len(samples.ratios),
        })
        path = os.path.join(cfg.out, f"reference_{kind}_samples.csv")
        write_csv(
            path, ["re", "im"],
            [{"re": x.real, "im": x.imag} for x in samples.ratios],
        )
        outputs.append(path)
    main = os.path.join(cfg.out, "reference_summary.csv")
    write_csv(
        main, ["kind", "dim", "n_samples", "r_mean", "neg_cos_mean", "n_ratios"],
        [dict(r, kind=r["kind"]) for r in summary_rows],
    )
    write_sidecar(main + ".meta.json", cfg, outputs + [main])
    return summary_rows


# ---------------------------------------------------------------- verify

def run_verify(cfg: RunConfig | None = None) -> list:
    """Fast invariant battery; returns (name, ok, detail) triples."""
    import scipy.sparse as sp

    from .fock import build_basis
    from .model import (ModelParams, build_hamiltonian, build_jumps,
                        sample_disorder, total_number_op)
    from .superop import (build_zeta_liouvillian, sector_charges,
                          symmetry_residual, vectorize)
    from .spectra import csr_summary, reference_ensemble
    from . import dynamics as dyn
    from . import mpdo as mp

    checks = []

    def check(name, fn):
        try:
            detail = fn()
            checks.append((name, True, detail))
        except Exception as exc:   # noqa: BLE001 - report, don't crash
            checks.append((name, False, f"{type(exc).__name__}: {exc}"))

    def weak_symmetry():
        b = build_basis(3)
        p = ModelParams(L=3, h=2.0)
        d = sample_disorder(p, 1)
        H = build_hamiltonian(b, p, d)
        jumps = build_jumps(b, p)
        N = total_number_op(b)
        worst = 0.0
        for z in (0.0, 0.5, 1.0):
            worst = max(worst, symmetry_residual(
                build_zeta_liouvillian(H, jumps, z), N, "N_minus"))
        plus0 = symmetry_residual(build_zeta_liouvillian(H, jumps, 0.0), N, "N_plus")
        plus1 = symmetry_residual(build_zeta_liouvillian(H, jumps, 1.0), N, "N_plus")
        assert worst <= 1e-12 and plus0 <= 1e-12 and plus1 > 0
        return f"commutators <= {max(worst, plus0):.1e}; broken at zeta=1: {plus1:.2f}"

    def trace_preservation():
        b = build_basis(3)
        p = ModelParams(L=3, h=1.0)
        d = sample_disorder(p, 2)
        sup = build_zeta_liouvillian(
            build_hamiltonian(b, p, d), build_jumps(b, p), 1.0)
        left = vectorize(np.eye(b.dim)) @ sup.matrix
        left = np.asarray(left.toarray() if sp.issparse(left) else left)
        assert np.abs(left).max() < 1e-13
        return f"identity row residual {np.abs(left).max():.1e}"

    def oracle_triangle():
        b = build_basis(2)
        p = ModelParams(L=2, h=5.0)
        d = sample_disorder(p, 3)
        H = build_hamiltonian(b, p, d)
        jumps = build_jumps(b, p)
        rho0 = dyn.cdw_state(b)
        worst = 0.0
        for z in (0.0, 0.4, 1.0):
            sup = build_zeta_liouvillian(H, jumps, z)
            ser = dyn.propagate_nonlinear(rho0, sup, 1e-2, 5.0,
                                          sample_every=5.0, basis=b, params=p)
            rho_nl = dyn.final_state(ser)
            rho_lin, _ = dyn.propagate_linear(rho0, sup, 1e-2, 5.0,
                                              basis=b, params=p)
            hier = dyn.jump_hierarchy(rho0, H, jumps, None, 1e-2, 5.0)
            rho_gc, _ = dyn.grand_canonical(hier, z)
            worst = max(worst, np.abs(rho_nl - rho_lin).max(),
                        np.abs(rho_lin - rho_gc).max())
        assert worst < 1e-6
        return f"pairwise <= {worst:.1e}"

    def rk4_order():
        b = build_basis(2)
        p = ModelParams(L=2, h=1.0)
        d = sample_disorder(p, 4)
        sup = build_zeta_liouvillian(
            build_hamiltonian(b, p, d), build_jumps(b, p), 0.6)
        rho0 = dyn.cdw_state(b)

        def final(dt):
            ser = dyn.propagate_nonlinear(rho0, sup, dt, 1.0, sample_every=1.0,
                                          basis=b, params=p)
            return dyn.final_state(ser)

        ref = final(1e-2 / 8)
        ratio = (np.abs(final(1e-2) - ref).max()
                 / np.abs(final(5e-3) - ref).max())
        assert 8.0 < ratio < 32.0
        return f"halving ratio {ratio:.1f}"

    def tebd_oracle():
        p = ModelParams(L=4, h=5.0)
        d = sample_disorder(p, 11)
        b = build_basis(4)
        sup = build_zeta_liouvillian(
            build_hamiltonian(b, p, d), build_jumps(b, p), 0.5)
        rk = dyn.propagate_nonlinear(dyn.cdw_state(b), sup, 1e-2, 2.0,
                                     sample_every=0.5, basis=b, params=p)
        te = mp.tebd_run(p, d, 0.5, chi_max=64, dt=1e-2, t_max=2.0,
                         sample_every=0.5)
        err = np.abs(rk.channels["imbalance"] - te.channels["imbalance"]).max()
        assert err < 1e-4
        return f"imbalance deviation {err:.1e}"

    def poisson_reference():
        r, c = csr_summary(reference_ensemble("poisson2d", 10_000, 1, seed=5))
        assert abs(r - 2 / 3) < 0.01 and abs(c) < 0.01
        return f"<r>={r:.3f}, -<cos>={c:.3f}"

    check("weak_U1_symmetry", weak_symmetry)
    check("trace_preservation", trace_preservation)
    check("oracle_triangle", oracle_triangle)
    check("rk4_order", rk4_order)
    check("tebd_dense_oracle", tebd_oracle)
    check("poisson_reference", poisson_reference)
    return checks


# ---------------------------------------------------------------- main

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="zetalind",
        description="Deformed-Lindblad gain-loss chain experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    names = {
        "spectral": "spectral_scan",
        "nh-spectral": "nh_spectral_scan",
        "dynamics": "dynamics_scan",
        "transient": "transient",
        "tebd": "tebd",
        "references": "references",
        "verify": None,
    }
    for name in names:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None, dest="base_seed")
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--heavy", action="store_true", default=None)
    parser.set_defaults(_names=names)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    names = args._names
    if args.command == "verify":
        checks = run_verify()
        for name, ok, detail in checks:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        return 0 if all(ok for _, ok, _ in checks) else 3
    try:
        cfg = load_config(
            args.config,
            names[args.command],
            {
                "base_seed": args.base_seed,
                "out": args.out,
                "threads": args.threads,
                "heavy": args.heavy,
            },
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    runner = {
        "spectral_scan": run_spectral_scan,
        "nh_spectral_scan": run_nh_spectral_scan,
        "dynamics_scan": run_dynamics_scan,
        "transient": run_transient,
        "tebd": run_tebd,
        "references": run_references,
    }[cfg.experiment]
    try:
        runner(cfg)
    except NumericalError as exc:
        os.makedirs(cfg.out, exist_ok=True)
        diag = os.path.join(cfg.out, "diagnostics.json")
        with open(diag, "w") as fh:
            json.dump(
                {"error": str(exc), "traceback": traceback.format_exc(),
                 "config": asdict(cfg)},
                fh, indent=1, sort_keys=True, default=str,
            )
        print(f"numerical failure: {exc} (diagnostics in {diag})",
              file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
