"""Batch experiment runner: config files in, CSV (and plot scripts) out.

Configs are flat INI text ([experiment], [model], [grid], [sweep],
[convergence] sections, key = value lines).  Every run writes one CSV whose
first line is a `# generated <utc timestamp>` comment; the rest is
byte-deterministic for a fixed config and seed.  Numeric result columns carry
a sibling `<name>_method` column (analytic / mc / lattice) and every row ends
with provenance (seed, dt, t_max, git describe, convention flags).

Exit codes (also used by the CLI): 0 success, 2 config error, 3 validation or
finiteness error, 4 gated verification failure.
"""
from __future__ import annotations

import configparser
import csv
import datetime
import itertools
import logging
import math
import subprocess
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .economy import CobbDouglasUtility, ModelParams, bs_exponent_margin, validate
from .errors import (ConfigError, DivergenceWarning, DomainError,
                     FinitenessError)
from .paths import FactorSpec, TimeGrid, simulate_paths
from . import explicit
from . import kuhn_tucker
from . import lattice

log = logging.getLogger("pgcsim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVALID = 3
EXIT_VERIFY = 4

KINDS = ("closed_form", "estimate_constants", "solve_backward", "verify_foc",
         "free_rider_sweep", "convergence_study")
_SWEEP_KINDS = ("free_rider_sweep", "convergence_study")

# verifier scan settings for batch runs; tests drive richer scans through the
# package API directly
_FOC_SCAN = (0.0, 0.1, 0.35, 0.75)
_FOC_PREFIXES = 32
_FOC_SUFFIXES = 128


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: ModelParams
    grid: TimeGrid
    n_paths: int
    master_seed: int
    out_dir: Path
    emit_plots: bool
    gate: bool
    drift_convention: str
    extrema_correction: bool
    n_values: tuple
    sigma_values: tuple
    alpha_values: tuple
    beta_values: tuple
    dt_values: tuple
    n_paths_values: tuple


def _values(raw: str, cast):
    return tuple(cast(tok) for tok in raw.replace(",", " ").split())


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read(path)
    except configparser.Error as e:
        raise ConfigError(f"malformed config {path}: {e}") from e
    try:
        exp = cp["experiment"]
        kind = exp.get("kind", "")
        if kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}; "
                              f"expected one of {', '.join(KINDS)}")
        model = cp["model"] if cp.has_section("model") else {}
        params = ModelParams(
            n_agents=int(model.get("n_agents", 2)),
            wealth=float(model.get("wealth", 1.0)),
            alpha=float(model.get("alpha", 0.3)),
            beta=float(model.get("beta", 0.3)),
            discount_rate=float(model.get("discount_rate", 0.05)),
            sigma_x=float(model.get("sigma_x", 0.2)),
            sigma_c=float(model.get("sigma_c", 0.0)))
        drift = model.get("drift_convention", "raw_exponential")
        grid_sec = cp["grid"] if cp.has_section("grid") else {}
        grid = TimeGrid(float(grid_sec.get("t_max", 200.0)),
                        int(grid_sec.get("n_steps", 4000)))
        sweep = cp["sweep"] if cp.has_section("sweep") else {}
        conv = cp["convergence"] if cp.has_section("convergence") else {}
        cfg = ExperimentConfig(
            kind=kind,
            params=params,
            grid=grid,
            n_paths=int(exp.get("n_paths", 10000)),
            master_seed=int(exp.get("master_seed", 0)),
            out_dir=Path(exp.get("out_dir", "results")),
            emit_plots=exp.get("emit_plots", "false").strip().lower()
                in ("1", "true", "yes", "on"),
            gate=exp.get("gate", "false").strip().lower()
                in ("1", "true", "yes", "on"),
            drift_convention=drift,
            extrema_correction=exp.get("extrema_correction", "false")
                .strip().lower() in ("1", "true", "yes", "on"),
            n_values=_values(sweep.get("n_values", ""), int),
            sigma_values=_values(sweep.get("sigma_values", ""), float),
            alpha_values=_values(sweep.get("alpha_values", ""), float),
            beta_values=_values(sweep.get("beta_values", ""), float),
            dt_values=_values(conv.get("dt_values", ""), float),
            n_paths_values=_values(conv.get("n_paths_values", ""), int))
    except (KeyError, ValueError) as e:
        raise ConfigError(f"bad value in config {path}: {e}") from e
    validate(cfg.params)
    if cfg.n_paths < 1:
        raise ConfigError("n_paths must be positive")
    if cfg.drift_convention not in ("martingale", "raw_exponential"):
        raise ConfigError(f"unknown drift_convention {drift!r}")
    if kind == "free_rider_sweep" and not (cfg.n_values or cfg.sigma_values
                                           or cfg.alpha_values
                                           or cfg.beta_values):
        raise ConfigError("free_rider_sweep needs a nonempty sweep axis")
    if kind == "convergence_study" and not cfg.dt_values:
        raise ConfigError("convergence_study needs dt_values")
    return cfg


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=10,
                             cwd=Path(__file__).parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _provenance(cfg: ExperimentConfig, dt=None, t_max=None, n_paths=None):
    return {
        "master_seed": cfg.master_seed,
        "dt": cfg.grid.dt if dt is None else dt,
        "t_max": cfg.grid.t_max if t_max is None else t_max,
        "n_paths": cfg.n_paths if n_paths is None else n_paths,
        "git_describe": _git_describe(),
        "drift_convention": cfg.drift_convention,
        "extrema_correction": cfg.extrema_correction,
    }


def _param_cols(p: ModelParams):
    return {"n_agents": p.n_agents, "wealth": p.wealth, "alpha": p.alpha,
            "beta": p.beta, "discount_rate": p.discount_rate,
            "sigma_x": p.sigma_x, "sigma_c": p.sigma_c}


def _tag(row: dict, name: str, value, method: str):
    row[name] = value
    row[f"{name}_method"] = method


def _consts_into(row: dict, consts, method: str):
    for name in ("A", "l0", "kappa", "lambda_sp", "lambda_nash"):
        _tag(row, name, getattr(consts, name), method)
    _tag(row, "ratio", consts.ratio, method)
    if consts.std_errors:
        for name in ("A", "l0", "kappa", "lambda_sp", "lambda_nash", "ratio"):
            row[f"{name}_se"] = consts.std_errors[name]


def _rows_closed_form(cfg):
    consts = explicit.constants(cfg.params, method="analytic_bs")
    row = _param_cols(cfg.params)
    _consts_into(row, consts, "analytic")
    _tag(row, "I_theta", consts.diagnostics["I_theta"], "analytic")
    _tag(row, "I_gamma", consts.diagnostics["I_gamma"], "analytic")
    row.update(_provenance(cfg))
    return [row], False


def _rows_estimate_constants(cfg):
    mc = explicit.McConfig(grid=cfg.grid, n_paths=cfg.n_paths,
                           master_seed=cfg.master_seed,
                           extrema_correction=cfg.extrema_correction)
    consts = explicit.constants(cfg.params, method="monte_carlo", mc=mc)
    row = _param_cols(cfg.params)
    _consts_into(row, consts, "mc")
    if bs_exponent_margin(cfg.params) > 0 and cfg.params.sigma_c == 0.0:
        exact = explicit.constants(cfg.params, method="analytic_bs")
        for name in ("A", "l0", "kappa", "ratio"):
            _tag(row, f"{name}_analytic", getattr(exact, name), "analytic")
    row.update(_provenance(cfg))
    return [row], False


def _rows_solve_backward(cfg, max_profile_rows=64):
    p = cfg.params
    utility = CobbDouglasUtility.from_params(p)
    lat = lattice.build_lattice(p, cfg.grid,
                                drift_convention=cfg.drift_convention)
    lam, sol = lattice.calibrate_lambda(lat, utility,
                                        p.n_agents * p.wealth, p,
                                        master_seed=cfg.master_seed)
    bs_ok = (p.sigma_c == 0.0 and bs_exponent_margin(p) > 0
             and cfg.drift_convention == "raw_exponential")
    consts = explicit.constants(p, method="analytic_bs") if bs_ok else None
    expo = p.alpha / (p.exponent_sum - 1.0)
    n = cfg.grid.n_steps
    steps = sorted(set(np.linspace(0, n - 1, min(max_profile_rows, n),
                                   dtype=int).tolist()))
    rows = []
    for k in steps:
        mid = len(sol.l_star[k]) // 2  # the W ~ 0 node
        row = _param_cols(p)
        row["step"] = k
        row["time"] = k * cfg.grid.dt
        _tag(row, "l_star", float(sol.l_star[k][mid]), "lattice")
        if consts is not None:
            _tag(row, "ansatz",
                 consts.l0 * float(lat.ex(k)[mid]) ** expo, "analytic")
        else:
            _tag(row, "ansatz", float("nan"), "analytic")
        _tag(row, "lambda_cal", lam, "lattice")
        _tag(row, "max_residual", sol.max_residual, "lattice")
        row.update(_provenance(cfg))
        rows.append(row)
    return rows, False


def _foc_row(cfg, p, name, report):
    row = _param_cols(p)
    row["check"] = name
    row["verdict"] = report.verdict
    for field in ("budget_residual", "budget_se", "max_inequality_violation",
                  "inequality_se", "violation_time", "flatoff_residual",
                  "flatoff_se", "binding_foc_max_relerr"):
        _tag(row, field, getattr(report, field), "mc")
    row.update(_provenance(cfg))
    return row


def _rows_verify_foc(cfg):
    p = validate(cfg.params, mode="black_scholes")
    if p.sigma_c != 0.0:
        raise ConfigError("verify_foc needs the closed-form policies, which "
                          "require sigma_c = 0")
    if cfg.drift_convention != "raw_exponential":
        raise ConfigError("closed-form policies assume raw-exponential E_x")
    consts = explicit.constants(p, method="analytic_bs")
    ens = simulate_paths((FactorSpec(p.sigma_x, "raw_exponential"),),
                         cfg.grid, cfg.n_paths, cfg.master_seed)
    corr = cfg.extrema_correction

    def sp_agg(s):
        return explicit.sp_policy(s, consts, p, extrema_correction=corr)[0]

    def nash_i(s):
        return explicit.nash_policy(s, consts, p, extrema_correction=corr)[1]

    def nash_agg(s):
        return explicit.nash_policy(s, consts, p, extrema_correction=corr)[0]

    social = kuhn_tucker.check_foc_social(
        ens, sp_agg, consts, p, scan_fractions=_FOC_SCAN,
        n_prefixes=_FOC_PREFIXES, n_suffixes=_FOC_SUFFIXES)
    nash = kuhn_tucker.check_foc_nash(
        ens, nash_i, nash_agg, p, lam=consts.lambda_nash,
        scan_fractions=_FOC_SCAN, n_prefixes=_FOC_PREFIXES,
        n_suffixes=_FOC_SUFFIXES)
    rows = [_foc_row(cfg, p, "social_planner", social),
            _foc_row(cfg, p, "nash_agent", nash)]
    failed = "fail" in (social.verdict, nash.verdict)
    return rows, failed


def _sweep_grid(cfg):
    p = cfg.params
    ns = cfg.n_values or (p.n_agents,)
    sigmas = cfg.sigma_values or (p.sigma_x,)
    alphas = cfg.alpha_values or (p.alpha,)
    betas = cfg.beta_values or (p.beta,)
    for n, s, a, b in itertools.product(ns, sigmas, alphas, betas):
        yield ModelParams(n_agents=n, wealth=p.wealth, alpha=a, beta=b,
                          discount_rate=p.discount_rate, sigma_x=s,
                          sigma_c=p.sigma_c)


def _rows_free_rider_sweep(cfg):
    rows = []
    for p in _sweep_grid(cfg):
        validate(p)
        row = _param_cols(p)
        _tag(row, "ratio", explicit.free_rider_ratio(p), "analytic")
        if p.sigma_c == 0.0 and bs_exponent_margin(p) > 0:
            consts = explicit.constants(p, method="analytic_bs")
            for name in ("l0", "kappa", "lambda_sp", "lambda_nash"):
                _tag(row, name, getattr(consts, name), "analytic")
        else:
            for name in ("l0", "kappa", "lambda_sp", "lambda_nash"):
                _tag(row, name, float("nan"), "analytic")
        row.update(_provenance(cfg))
        rows.append(row)
    return rows, False


def _rows_convergence_study(cfg):
    p = validate(cfg.params, mode="black_scholes")
    if p.sigma_c != 0.0:
        raise FinitenessError("convergence_study needs the Black-Scholes "
                              "analytic oracle (sigma_c = 0)")
    exact = explicit.constants(p, method="analytic_bs")
    rows = []

    def mc_row(dt, n_paths):
        mc = explicit.McConfig(grid=TimeGrid(cfg.grid.t_max,
                                             int(round(cfg.grid.t_max / dt))),
                               n_paths=n_paths, master_seed=cfg.master_seed,
                               extrema_correction=cfg.extrema_correction)
        est = explicit.constants(p, method="monte_carlo", mc=mc)
        row = _param_cols(p)
        _tag(row, "A_error", abs(est.A - exact.A), "mc")
        row["A_se"] = est.std_errors["A"]
        _tag(row, "ratio_error", abs(est.ratio - exact.ratio), "mc")
        row["ratio_se"] = est.std_errors["ratio"]
        _tag(row, "ratio_mc", est.ratio, "mc")
        row.update(_provenance(cfg, dt=dt, n_paths=n_paths))
        return row

    dt_errors = []
    for dt in cfg.dt_values:
        row = mc_row(dt, cfg.n_paths)
        row["family"] = "mc_dt"
        row["level"] = dt
        dt_errors.append(row["A_error"])
        rows.append(row)
    drops = sum(b <= a for a, b in zip(dt_errors, dt_errors[1:]))
    log.info("dt refinement: error nonincreasing in %d of %d pairs",
             drops, max(len(dt_errors) - 1, 0))

    mid_dt = cfg.dt_values[len(cfg.dt_values) // 2]
    for n_paths in cfg.n_paths_values:
        row = mc_row(mid_dt, n_paths)
        row["family"] = "mc_paths"
        row["level"] = n_paths
        rows.append(row)

    utility = CobbDouglasUtility.from_params(p)
    expo = p.alpha / (p.exponent_sum - 1.0)
    for n_steps in (cfg.grid.n_steps // 4, cfg.grid.n_steps // 2,
                    cfg.grid.n_steps):
        if n_steps < 2:
            continue
        lat = lattice.build_lattice(p, TimeGrid(cfg.grid.t_max, n_steps),
                                    drift_convention="raw_exponential")
        sol = lattice.solve_signal(lat, utility.reduced_marginal_h,
                                   exact.lambda_sp, p)
        worst = 0.0
        for k in range(n_steps // 4 + 1):
            ansatz = exact.l0 * lat.ex(k) ** expo
            worst = max(worst,
                        float(np.abs(sol.l_star[k] / ansatz - 1.0).max()))
        row = _param_cols(p)
        row["family"] = "solver"
        row["level"] = n_steps
        _tag(row, "ansatz_dev", worst, "lattice")
        row.update(_provenance(cfg, dt=cfg.grid.t_max / n_steps))
        rows.append(row)
    return rows, False


_DISPATCH = {
    "closed_form": _rows_closed_form,
    "estimate_constants": _rows_estimate_constants,
    "solve_backward": _rows_solve_backward,
    "verify_foc": _rows_verify_foc,
    "free_rider_sweep": _rows_free_rider_sweep,
    "convergence_study": _rows_convergence_study,
}


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(rows, cfg: ExperimentConfig) -> Path:
    """One CSV per run: a timestamp comment line, a header, then the rows in
    their deterministic construction order."""
    if not rows:
        raise ConfigError("experiment produced no rows")
    cols = list(rows[0])
    for row in rows[1:]:
        cols.extend(c for c in row if c not in cols)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / f"{cfg.kind}.csv"
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(path, "w", newline="") as f:
        f.write(f"# generated {stamp}\n")
        writer = csv.writer(f)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_fmt(row.get(c, float("nan"))) for c in cols])
    return path


def _read_csv(path: Path):
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise ConfigError(f"{path} has no header") from None
    rows = [dict(zip(header, rec)) for rec in reader]
    if not rows:
        raise ConfigError(f"{path} has no data rows")
    return header, rows


_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""{title}"""
import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

csv_path = Path(__file__).resolve().parent / "{csv_name}"
with open(csv_path, newline="") as f:
    lines = [ln for ln in f if not ln.startswith("#")]
reader = csv.reader(lines)
header = next(reader)
rows = [dict(zip(header, rec)) for rec in reader]

{body}
plt.xlabel("{xlabel}")
plt.ylabel("{ylabel}")
plt.title("{title}")
plt.grid(True, alpha=0.3)
plt.savefig(Path(__file__).resolve().parent / "{png_name}", dpi=150)
print("wrote {png_name}")
'''


def _emit_script(out_dir, stem, suffix, csv_name, title, xcol, ycol, xlabel,
                 ylabel):
    body = (f'xs = [float(r["{xcol}"]) for r in rows]\n'
            f'ys = [float(r["{ycol}"]) for r in rows]\n'
            'order = sorted(range(len(xs)), key=xs.__getitem__)\n'
            'plt.plot([xs[i] for i in order], [ys[i] for i in order], '
            '"o-")')
    path = out_dir / f"plot_{stem}_{suffix}.py"
    path.write_text(_PLOT_TEMPLATE.format(
        title=title, csv_name=csv_name, body=body, xlabel=xlabel,
        ylabel=ylabel, png_name=f"{stem}_{suffix}.png"))
    return path


def emit_plot_scripts(csv_path) -> list:
    """Write self-contained matplotlib scripts next to the CSV; nothing is
    plotted in-process.  Raises ConfigError when the CSV is empty or carries
    none of the plottable column sets."""
    csv_path = Path(csv_path)
    if not csv_path.is_file():
        raise ConfigError(f"no such CSV: {csv_path}")
    header, rows = _read_csv(csv_path)
    out_dir = csv_path.parent
    stem = csv_path.stem
    written = []
    have = set(header)
    if {"n_agents", "ratio"} <= have and len(
            {r["n_agents"] for r in rows}) > 1:
        written.append(_emit_script(
            out_dir, stem, "ratio_vs_n", csv_path.name,
            "Free-rider ratio against group size", "n_agents", "ratio",
            "number of agents", "equilibrium / planner contribution"))
    if {"sigma_x", "ratio"} <= have and len(
            {r["sigma_x"] for r in rows}) > 1:
        written.append(_emit_script(
            out_dir, stem, "ratio_vs_sigma", csv_path.name,
            "Free-rider ratio against volatility", "sigma_x", "ratio",
            "sigma_x", "equilibrium / planner contribution"))
    if {"time", "l_star", "ansatz"} <= have:
        body = (
            'ts = [float(r["time"]) for r in rows]\n'
            'ls = [float(r["l_star"]) for r in rows]\n'
            'an = [float(r["ansatz"]) for r in rows]\n'
            'plt.plot(ts, ls, "o-", label="lattice")\n'
            'plt.plot(ts, an, "--", label="closed form")\n'
            'plt.legend()')
        path = out_dir / f"plot_{stem}_signal_vs_ansatz.py"
        path.write_text(_PLOT_TEMPLATE.format(
            title="Signal level: lattice against closed form",
            csv_name=csv_path.name, body=body, xlabel="time",
            ylabel="l*", png_name=f"{stem}_signal_vs_ansatz.png"))
        written.append(path)
    if not written:
        raise ConfigError(f"{csv_path} has no plottable column set")
    return written


def _cap_threads(threads):
    if threads is None:
        return
    if threads < 1:
        raise ConfigError("--threads must be positive")
    try:
        import numba
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        log.info("numba unavailable; --threads ignored")


def run(config, seed=None, out_dir=None, threads=None, gate=None,
        kind=None) -> int:
    """Execute one experiment; returns the exit code and leaves artifacts in
    the output directory.  config is a path or an ExperimentConfig."""
    try:
        cfg = (config if isinstance(config, ExperimentConfig)
               else load_config(config))
        if kind is not None:
            if kind not in KINDS:
                raise ConfigError(f"unknown experiment kind {kind!r}")
            cfg = replace(cfg, kind=kind)
        if seed is not None:
            cfg = replace(cfg, master_seed=int(seed))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=Path(out_dir))
        if gate is not None:
            cfg = replace(cfg, gate=bool(gate))
        _cap_threads(threads)
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except (DomainError, FinitenessError) as e:
        log.error("invalid model: %s", e)
        return EXIT_INVALID

    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DivergenceWarning)
            rows, failed = _DISPATCH[cfg.kind](cfg)
        for w in caught:
            if issubclass(w.category, DivergenceWarning):
                log.warning("divergence: %s", w.message)
        csv_path = write_csv(rows, cfg)
        log.info("wrote %s (%d rows)", csv_path, len(rows))
        if cfg.emit_plots:
            for script in emit_plot_scripts(csv_path):
                log.info("wrote %s", script)
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except (DomainError, FinitenessError) as e:
        log.error("invalid model: %s", e)
        return EXIT_INVALID

    if cfg.gate and failed:
        log.error("verification failed under --gate")
        return EXIT_VERIFY
    return EXIT_OK


def run_convergence_study(config, **overrides) -> int:
    """run() with the kind pinned to convergence_study."""
    return run(config, kind="convergence_study", **overrides)
