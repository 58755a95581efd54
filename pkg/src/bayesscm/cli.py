"""Command line front end: estimation, posterior inference, simulation, and
plot-data reports.

Four subcommands cover the workflow: ``estimate`` fits one classical method
and writes weights plus the fitted gap series; ``posterior`` runs the full
Bayesian pipeline (mode, donor selection, Gibbs chain, HPD summaries);
``simulate`` scores methods on generated benchmark panels; ``report`` turns
an output directory into plot-ready trajectory and gap-band tables, with
optional rendering when matplotlib is installed.

Every command writes a manifest recording the resolved parameters, input
digests, package version and a timestamp. All other outputs are
deterministic functions of the inputs and the seed: floats are serialized
with shortest round-trip repr and JSON keys are sorted, so reruns produce
byte-identical files (the manifest's timestamp is the documented exception).

Exit codes: 0 success; 2 usage or input validation; 3 a statistically
degenerate outcome (empty donor pool, singular system, failed benchmark);
1 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import (
    EMConfig,
    Hyperparams,
    McmcConfig,
    effect_posterior,
    gibbs_sample,
    mcem_map,
    select_donors,
)
from .errors import (
    BayesSCMError,
    ConfigError,
    DegenerateError,
    DimensionError,
    DomainError,
    NotFoundError,
    RankError,
    SchemaError,
    SimulationError,
    ValidationError,
)
from .estimators import counterfactual, fit_adh, fit_dinet, fit_lscm, fit_psconv, synthetic_path
from .panel import build_design, load_panel, standardize_covariates
from .qp import kkt_certificate
from .sampling import RngStream
from .simlab import SimConfig, run_replications

__all__ = ["main", "entrypoint"]

_USAGE_ERRORS = (ConfigError, SchemaError, NotFoundError, DomainError,
                 ValidationError, DimensionError)
_DEGENERATE_ERRORS = (DegenerateError, RankError, SimulationError)

_FITTERS = {"adh": fit_adh, "lscm": fit_lscm, "dinet": fit_dinet, "psconv": fit_psconv}

# design shape each classical method fits on: (use_covariates, use_intercept)
_DESIGN_SHAPE = {"adh": (True, False), "lscm": (False, True),
                 "dinet": (False, False), "psconv": (True, True)}


def _fmt(x) -> str:
    return repr(float(x))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_out(args) -> Path:
    out = getattr(args, "out", None) or os.environ.get("BAYESSCM_OUT")
    if not out:
        raise ConfigError("no output directory: pass --out or set BAYESSCM_OUT")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(command: str, args, inputs, extra=None) -> dict:
    params = {k: v for k, v in vars(args).items() if k != "func"}
    body = {
        "command": command,
        "version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "params": _jsonable(params),
        "inputs": {str(p): _sha256(p) for p in inputs},
    }
    if extra:
        body.update(_jsonable(extra))
    return body


def _emit(out_dir: Path, files: dict) -> None:
    """Write all output files, removing everything written on any failure so
    a directory never holds a partial result set."""
    written = []
    try:
        for name, writer in files.items():
            path = out_dir / name
            writer(path)
            written.append(path)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise


def _load_input_panel(args):
    panel = load_panel(args.data, args.treated, args.pre_end,
                       covariates_path=args.covariates)
    if getattr(args, "standardize", False) and panel.covariates:
        panel = standardize_covariates(panel)
    inputs = [args.data] + ([args.covariates] if args.covariates else [])
    return panel, inputs


def _effects_rows(panel, path_full):
    rows = []
    for k, t in enumerate(panel.times):
        obs = float(panel.Y[0, k])
        cf = float(path_full[k])
        rows.append([t, _fmt(obs), _fmt(cf), _fmt(obs - cf)])
    return rows


def cmd_estimate(args) -> int:
    panel, inputs = _load_input_panel(args)
    out_dir = _resolve_out(args)

    fit = _FITTERS[args.method](panel)
    path_full = synthetic_path(fit, panel)
    series = counterfactual(fit, panel)

    donor_w = {unit: float(w) for unit, w in zip(panel.donor_ids, fit.weights[1:])}
    excluded = [panel.unit_ids[j] for j in fit.active_set]
    weights_doc = {
        "method": fit.method,
        "treated": panel.treated_id,
        "shift": float(fit.weights[0]),
        "weights": donor_w,
        "objective": float(fit.objective),
        "excluded_donors": excluded,
        "tuning": _jsonable(fit.tuning),
        "ate": float(series.ate),
    }
    if args.diagnostics:
        if fit.solution is not None:
            use_cov, use_int = _DESIGN_SHAPE[args.method]
            design = build_design(panel, use_covariates=use_cov, use_intercept=use_int)
            weights_doc["diagnostics"] = kkt_certificate(fit.solution, design).as_dict()
        else:
            weights_doc["diagnostics"] = {"note": "no stationarity certificate for "
                                                  "coordinate-descent fits"}

    files = {
        "weights.json": lambda p: _write_json(p, weights_doc),
        "effects.csv": lambda p: _write_csv(
            p, ["time", "observed", "counterfactual", "gap"],
            _effects_rows(panel, path_full)),
        "manifest.json": lambda p: _write_json(p, _manifest(
            "estimate", args, inputs,
            extra={"outputs": ["weights.json", "effects.csv"]})),
    }
    _emit(out_dir, files)
    return 0


def cmd_posterior(args) -> int:
    panel, inputs = _load_input_panel(args)
    out_dir = _resolve_out(args)

    design = build_design(panel, use_covariates=True, use_intercept=True)
    gen = RngStream(args.seed, 0).generator
    mode = mcem_map(design, hyper=Hyperparams(), em=EMConfig(), rng=gen)
    pool = select_donors(mode)
    mcmc = McmcConfig(draws=args.draws, burnin=args.burnin, thin=args.thin,
                      seed=args.seed, scheme=args.scheme)
    draws = gibbs_sample(design, pool, mcmc=mcmc, init=mode.weights, rng=gen)
    post = effect_posterior(draws, panel, level=args.hpd_level)

    mean_w = draws.weights.mean(axis=0)
    path_full = mean_w[0] + mean_w[1:] @ panel.Y[1:, :]

    map_doc = {
        "treated": panel.treated_id,
        "shift": float(mode.weights[0]),
        "weights": {u: float(w) for u, w in zip(panel.donor_ids, mode.weights[1:])},
        "iterations": mode.iterations,
        "converged": mode.converged,
        "stop_reason": mode.stop_reason,
        "warning": mode.warning,
    }
    pool_doc = {
        "active": [panel.unit_ids[j] for j in pool.active],
        "inactive": [panel.unit_ids[j] for j in pool.inactive],
    }
    active_names = [panel.unit_ids[j] for j in pool.active]
    gate_names = [b.name for b in panel.covariates]
    draws_header = (["draw", "shift"] + [f"w_{u}" for u in active_names]
                    + ["noise_scale"] + [f"gate_{g}" for g in gate_names])
    draw_rows = []
    for i in range(draws.n_draws):
        row = [i + 1, _fmt(draws.weights[i, 0])]
        row += [_fmt(draws.weights[i, j]) for j in pool.active]
        row.append(_fmt(draws.scales[i]))
        row += [str(int(g)) for g in draws.gates[i]]
        draw_rows.append(row)

    post_rows = [[t, _fmt(post.mean[k]), _fmt(post.lower[k]), _fmt(post.upper[k])]
                 for k, t in enumerate(post.times)]
    ate_doc = {
        "mean": post.ate_mean,
        "hpd_lower": post.ate_lower,
        "hpd_upper": post.ate_upper,
        "level": post.level,
        "draws": mcmc.draws,
        "burnin": mcmc.burnin,
        "thin": mcmc.thin,
        "seed": args.seed,
        "scheme": mcmc.scheme,
    }

    outputs = ["map_weights.json", "donor_pool.json", "draws.csv",
               "effects_posterior.csv", "ate_summary.json", "effects.csv"]
    files = {
        "map_weights.json": lambda p: _write_json(p, map_doc),
        "donor_pool.json": lambda p: _write_json(p, pool_doc),
        "draws.csv": lambda p: _write_csv(p, draws_header, draw_rows),
        "effects_posterior.csv": lambda p: _write_csv(
            p, ["time", "mean", "hpd_lower", "hpd_upper"], post_rows),
        "ate_summary.json": lambda p: _write_json(p, ate_doc),
        "effects.csv": lambda p: _write_csv(
            p, ["time", "observed", "counterfactual", "gap"],
            _effects_rows(panel, path_full)),
        "manifest.json": lambda p: _write_json(p, _manifest(
            "posterior", args, inputs, extra={"outputs": outputs})),
    }
    _emit(out_dir, files)
    return 0


def cmd_simulate(args) -> int:
    out_dir = _resolve_out(args)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    theta_values = args.theta0 if args.theta0 else [1.0]

    runs = []
    for theta0 in theta_values:
        cfg = SimConfig(theta0=theta0, reps=args.reps, seed=args.seed)
        runs.append(run_replications(cfg, methods=methods, jobs=args.jobs))

    header = ["method", "theta0", "mse_te", "mse_te_se", "mse_ate", "mse_ate_se",
              "reps", "failures", "seed"]
    rows = []
    for res in runs:
        for method in res.methods:
            rows.append([
                method, _fmt(res.config.theta0),
                _fmt(res.mse_te[method]), _fmt(res.mse_te_se[method]),
                _fmt(res.mse_ate[method]), _fmt(res.mse_ate_se[method]),
                str(res.config.reps), str(res.failures[method]),
                str(res.config.seed),
            ])
    results_doc = {
        "runs": [
            {
                "theta0": res.config.theta0,
                "seed": res.config.seed,
                "reps": res.config.reps,
                "true_ate": res.true_ate,
                "methods": list(res.methods),
                "mse_te": res.mse_te,
                "mse_te_se": res.mse_te_se,
                "mse_ate": res.mse_ate,
                "mse_ate_se": res.mse_ate_se,
                "failures": res.failures,
            }
            for res in runs
        ]
    }
    files = {
        "mse_table.csv": lambda p: _write_csv(p, header, rows),
        "results.json": lambda p: _write_json(p, results_doc),
        "manifest.json": lambda p: _write_json(p, _manifest(
            "simulate", args, [],
            extra={"outputs": ["mse_table.csv", "results.json"]})),
    }
    _emit(out_dir, files)
    return 0


def _read_csv(path: Path):
    if not path.exists():
        raise NotFoundError(f"required input missing: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows


def cmd_report(args) -> int:
    src = Path(args.from_dir)
    if not src.is_dir():
        raise NotFoundError(f"report source is not a directory: {src}")
    out_dir = Path(args.out) if args.out else src
    out_dir.mkdir(parents=True, exist_ok=True)

    _, eff_rows = _read_csv(src / "effects.csv")
    posterior_path = src / "effects_posterior.csv"
    has_band = posterior_path.exists()

    traj_rows = [[t, obs, cf] for t, obs, cf, _ in eff_rows]

    if has_band:
        _, post_rows = _read_csv(posterior_path)
        band = {t: (mean, lo, hi) for t, mean, lo, hi in post_rows}
        gap_header = ["time", "gap", "hpd_lower", "hpd_upper"]
        gap_rows = []
        for t, _, _, gap in eff_rows:
            if t in band:
                mean, lo, hi = band[t]
                gap_rows.append([t, mean, lo, hi])
            else:
                # pre-period: no posterior band, the gap is the in-sample fit
                gap_rows.append([t, gap, gap, gap])
    else:
        gap_header = ["time", "gap"]
        gap_rows = [[t, gap] for t, _, _, gap in eff_rows]

    files = {
        "trajectory.csv": lambda p: _write_csv(
            p, ["time", "treated", "synthetic"], traj_rows),
        "gap_band.csv": lambda p: _write_csv(p, gap_header, gap_rows),
        "report_manifest.json": lambda p: _write_json(p, _manifest(
            "report", args, [src / "effects.csv"]
            + ([posterior_path] if has_band else []),
            extra={"outputs": ["trajectory.csv", "gap_band.csv"]})),
    }
    if args.render:
        try:
            import matplotlib
        except ImportError:
            raise ConfigError(
                "--render needs matplotlib; install the 'plots' extra"
            ) from None
        matplotlib.use("Agg")
        files["trajectory.png"] = lambda p: _render_trajectory(p, traj_rows)
        files["gap_band.png"] = lambda p: _render_gap(p, gap_rows, has_band)
    _emit(out_dir, files)
    return 0


def _plot_axis(times):
    try:
        return [float(t) for t in times], False
    except ValueError:
        return list(range(len(times))), True


def _render_trajectory(path: Path, rows) -> None:
    import matplotlib.pyplot as plt

    x, categorical = _plot_axis([r[0] for r in rows])
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.plot(x, [float(r[1]) for r in rows], label="treated")
    ax.plot(x, [float(r[2]) for r in rows], label="synthetic", linestyle="--")
    if categorical:
        ax.set_xticks(x[:: max(1, len(x) // 10)])
        ax.set_xticklabels([rows[i][0] for i in range(0, len(rows), max(1, len(rows) // 10))])
    ax.set_xlabel("time")
    ax.set_ylabel("outcome")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _render_gap(path: Path, rows, has_band: bool) -> None:
    import matplotlib.pyplot as plt

    x, _ = _plot_axis([r[0] for r in rows])
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.plot(x, [float(r[1]) for r in rows], label="gap")
    if has_band:
        ax.fill_between(x, [float(r[2]) for r in rows], [float(r[3]) for r in rows],
                        alpha=0.3, label="HPD band")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("time")
    ax.set_ylabel("effect")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _add_data_flags(sub, with_standardize=True):
    sub.add_argument("--data", required=True, help="outcomes CSV (unit,time,outcome)")
    sub.add_argument("--covariates", default=None,
                     help="covariates CSV (unit,covariate,component_index,value)")
    sub.add_argument("--treated", required=True, help="treated unit id")
    sub.add_argument("--pre-end", required=True, dest="pre_end",
                     help="last pre-treatment time label")
    sub.add_argument("--out", default=None,
                     help="output directory (default: $BAYESSCM_OUT)")
    if with_standardize:
        sub.add_argument("--standardize", action="store_true",
                         help="standardize covariates by donor statistics")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bayesscm",
        description="Synthetic control estimation with Bayesian donor selection",
    )
    parser.add_argument("--version", action="version", version=f"bayesscm {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    est = commands.add_parser("estimate", help="fit one classical estimator")
    _add_data_flags(est)
    est.add_argument("--method", required=True, choices=sorted(_FITTERS),
                     help="estimator to fit")
    est.add_argument("--diagnostics", action="store_true",
                     help="include an optimality certificate in weights.json")
    est.set_defaults(func=cmd_estimate)

    post = commands.add_parser("posterior", help="run the Bayesian pipeline")
    _add_data_flags(post)
    post.add_argument("--draws", type=int, default=10_000, help="retained draws")
    post.add_argument("--burnin", type=int, default=2_000, help="burn-in sweeps")
    post.add_argument("--thin", type=int, default=1, help="thinning interval")
    post.add_argument("--seed", type=int, default=0, help="random seed")
    post.add_argument("--hpd-level", type=float, default=0.95, dest="hpd_level",
                      help="credible level for HPD intervals")
    post.add_argument("--scheme", choices=["verbatim", "collapsed"], default="verbatim",
                      help="weight-sweep variant (collapsed targets the "
                           "constrained posterior exactly)")
    post.set_defaults(func=cmd_posterior)

    sim = commands.add_parser("simulate", help="benchmark methods on generated panels")
    sim.add_argument("--theta0", type=float, action="append", default=None,
                     help="treatment scale; repeat for several runs (default 1.0)")
    sim.add_argument("--reps", type=int, default=100, help="replications per run")
    sim.add_argument("--methods", default="adh,psconv,bayes",
                     help="comma-separated methods to score")
    sim.add_argument("--seed", type=int, default=0, help="random seed")
    sim.add_argument("--jobs", type=int, default=1, help="worker processes")
    sim.add_argument("--out", default=None,
                     help="output directory (default: $BAYESSCM_OUT)")
    sim.set_defaults(func=cmd_simulate)

    rep = commands.add_parser("report", help="emit plot-ready tables from a result directory")
    rep.add_argument("--from", required=True, dest="from_dir",
                     help="directory holding estimate or posterior outputs")
    rep.add_argument("--out", default=None,
                     help="output directory (default: the source directory)")
    rep.add_argument("--render", action="store_true",
                     help="also render PNG figures (needs matplotlib)")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return int(code) if isinstance(code, int) else (0 if code is None else 2)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _DEGENERATE_ERRORS as exc:
        print(f"degenerate outcome: {exc}", file=sys.stderr)
        return 3
    except BayesSCMError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary maps everything
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
