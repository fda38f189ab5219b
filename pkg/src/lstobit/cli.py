"""Batch command-line interface.

Four subcommands: ``fit`` estimates one model and writes a report,
``profile-q`` scans a grid of quantile levels and keeps the best by AIC,
``diagnose`` recomputes residuals and the QQ envelope from a saved fit, and
``simulate`` runs a bias/MSE study.  Options can come from a flat
``key=value`` config file (``--config``); command-line flags win.

Exit codes: 0 success, 2 usage or configuration, 3 data problems,
4 non-convergence, 5 I/O failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
from scipy import special

from .diagnostics import mt_residuals, simulated_envelope
from .estimator import FitConfig, default_xi_grid, fit, percent_effect, select_q
from .generators import make_generator
from .model import CollinearDesignError, Dataset, ModelSpec, ParamVector
from .montecarlo import Scenario, ScenarioConvergenceError, run_scenario, write_results_csv

__all__ = ["main", "ingest_csv", "emit_report", "CliError"]

_EXIT_CODES = {"usage": 2, "data": 3, "fit": 4, "io": 5}

_Z_5PCT = special.ndtri(0.975)
_Z_10PCT = special.ndtri(0.95)

_PARAM_NOTE = "p counts beta and kappa coefficients only; xi is profiled, not counted"


class CliError(Exception):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


def _fmt(x):
    """Fixed 6-significant-digit formatting so outputs diff stably."""
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return "" if x is None else repr(float(x))
    return f"{float(x):.6g}"


# ---------------------------------------------------------------------------
# ingestion


def _parse_cell(raw, line_num, column):
    raw = raw.strip() if raw is not None else ""
    if raw == "":
        raise CliError("data", f"line {line_num}: missing value in column {column!r}")
    try:
        value = float(raw)
    except ValueError:
        raise CliError(
            "data", f"line {line_num}: cannot parse {raw!r} in column {column!r}"
        ) from None
    if not np.isfinite(value):
        raise CliError(
            "data", f"line {line_num}: non-finite value {raw!r} in column {column!r}"
        )
    return value


def _parse_flag(raw, line_num, column):
    raw = (raw or "").strip().lower()
    if raw in {"1", "true", "t", "yes"}:
        return True
    if raw in {"0", "false", "f", "no"}:
        return False
    raise CliError(
        "data", f"line {line_num}: cannot parse censoring flag {raw!r} in column {column!r}"
    )


def ingest_csv(path, response, qcov=(), dcov=(), psi=None, censor_col=None, shift=0.0):
    """Read a CSV into a Dataset, applying the optional shift and censor rule.

    With ``censor_col`` the flagged rows are stored at psi; otherwise rows at
    or below psi are treated as censored.  Rows with missing or unparsable
    values are rejected with their line number.
    """
    if psi is None:
        raise CliError("usage", "a censoring threshold (--psi) is required")
    qcov = list(qcov)
    dcov = list(dcov)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise CliError("io", f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CliError("data", f"{path}: empty file (no header row)")
        header = [h.strip() for h in reader.fieldnames]
        needed = [response] + qcov + dcov + ([censor_col] if censor_col else [])
        missing = [c for c in needed if c not in header]
        if missing:
            raise CliError(
                "data", f"{path}: column(s) not in header: {', '.join(missing)}"
            )
        t_raw, flags, xrows, wrows = [], [], [], []
        for row in reader:
            ln = reader.line_num
            t_raw.append(_parse_cell(row.get(response), ln, response))
            if censor_col:
                flags.append(_parse_flag(row.get(censor_col), ln, censor_col))
            xrows.append([_parse_cell(row.get(c), ln, c) for c in qcov])
            wrows.append([_parse_cell(row.get(c), ln, c) for c in dcov])
    n = len(t_raw)
    if n == 0:
        raise CliError("data", f"{path}: no data rows")

    t = np.asarray(t_raw, dtype=float) + shift
    if censor_col:
        cens = np.asarray(flags, dtype=bool)
        if np.any(t[~cens] <= psi):
            bad = int(np.flatnonzero(~cens & (t <= psi))[0])
            raise CliError(
                "data",
                f"row {bad + 2}: unflagged response at or below psi={psi:g}; "
                "check the censor column or the threshold",
            )
        t = np.where(cens, psi, t)
    else:
        cens = t <= psi
        t = np.where(cens, psi, t)
    if cens.all():
        raise CliError("data", f"{path}: every row is censored")

    X = np.column_stack([np.ones(n)] + [np.asarray(c, dtype=float) for c in zip(*xrows)]) \
        if qcov else np.ones((n, 1))
    W = np.column_stack([np.ones(n)] + [np.asarray(c, dtype=float) for c in zip(*wrows)]) \
        if dcov else np.ones((n, 1))
    try:
        return Dataset(
            t, cens, X, W, psi,
            x_names=["const"] + qcov, w_names=["const"] + dcov,
        )
    except ValueError as exc:
        raise CliError("data", str(exc)) from None


# ---------------------------------------------------------------------------
# report files


def _write_estimates_csv(path, result):
    theta = result.theta_hat.to_array()
    nb = result.theta_hat.beta.size
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["parameter", "estimate", "se", "z", "percent_effect", "significance"])
        for i, name in enumerate(result.param_names):
            se = result.se[i]
            z = theta[i] / se if np.isfinite(se) and se > 0 else None
            stars = ""
            if z is not None:
                if abs(z) >= _Z_5PCT:
                    stars = "*"
                elif abs(z) >= _Z_10PCT:
                    stars = "**"
            pct = _fmt(percent_effect(theta[i])) if i < nb else ""
            writer.writerow(
                [name, _fmt(theta[i]), _fmt(se) if np.isfinite(se) else "",
                 _fmt(z) if z is not None else "", pct, stars]
            )


def _fit_payload(result, spec, ingest_cfg, seed):
    return {
        "family": spec.generator.name,
        "xi": result.xi_hat,
        "q": result.q,
        "psi": spec.psi,
        "loglik": result.loglik,
        "aic": result.aic,
        "bic": result.bic,
        "n_obs": result.n_obs,
        "n_params": result.n_params,
        "param_count_note": _PARAM_NOTE,
        "converged": result.converged,
        "singular_info": result.singular_info,
        "n_iter": result.n_iter,
        "message": result.message,
        "seed": seed,
        "param_names": list(result.param_names),
        "beta": [float(v) for v in result.theta_hat.beta],
        "kappa": [float(v) for v in result.theta_hat.kappa],
        "se": [float(v) if np.isfinite(v) else None for v in result.se],
        "profile_trace": [[xi, ll] for xi, ll in result.profile_trace],
        "ingest": ingest_cfg,
    }


def _write_qq_csv(path, report):
    obs = report.sorted_r_mt
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if report.env_lower is not None:
            writer.writerow(["index", "position", "observed", "lower", "median", "upper"])
            for i in range(obs.size):
                writer.writerow(
                    [i + 1, _fmt(report.positions[i]), _fmt(obs[i]),
                     _fmt(report.env_lower[i]), _fmt(report.env_median[i]),
                     _fmt(report.env_upper[i])]
                )
        else:
            writer.writerow(["index", "position", "observed"])
            for i in range(obs.size):
                writer.writerow([i + 1, _fmt(report.positions[i]), _fmt(obs[i])])


def _write_histogram_csv(path, t):
    counts, edges = np.histogram(t, bins="auto")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count"])
        for i, c in enumerate(counts):
            writer.writerow([_fmt(edges[i]), _fmt(edges[i + 1]), int(c)])


def emit_report(result, residuals, outdir, spec, data, ingest_cfg, seed):
    """Write estimates.csv, fit.json, histogram.csv and (optionally) qq_envelope.csv."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        _write_estimates_csv(outdir / "estimates.csv", result)
        payload = _fit_payload(result, spec, ingest_cfg, seed)
        (outdir / "fit.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        _write_histogram_csv(outdir / "histogram.csv", data.t)
        written = ["estimates.csv", "fit.json", "histogram.csv"]
        if residuals is not None:
            _write_qq_csv(outdir / "qq_envelope.csv", residuals)
            written.append("qq_envelope.csv")
    except OSError as exc:
        raise CliError("io", f"cannot write under {outdir}: {exc}") from None
    return [str(outdir / name) for name in written]


# ---------------------------------------------------------------------------
# option handling

_LIST_KEYS = {"qcov", "dcov", "beta_true", "kappa_true"}
_FLOAT_KEYS = {"psi", "shift", "censor_prop", "envelope_level"}
_INT_KEYS = {"seed", "nrep", "nsim_envelope", "n", "restarts"}


def _read_config_file(path):
    cfg = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError("usage", f"cannot read config {path}: {exc}") from None
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError("usage", f"{path} line {ln}: expected key=value")
        key, _, value = line.partition("=")
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _merge_config(args):
    """Fill unset argparse values from the config file; flags win."""
    if not getattr(args, "config", None):
        return args
    cfg = _read_config_file(args.config)
    for key, raw in cfg.items():
        if not hasattr(args, key):
            raise CliError("usage", f"unknown config key {key!r}")
        if getattr(args, key) is not None:
            continue  # explicit flag wins
        try:
            if key in _LIST_KEYS:
                value = [v.strip() for v in raw.split(",") if v.strip()]
            elif key in _FLOAT_KEYS:
                value = float(raw)
            elif key in _INT_KEYS:
                value = int(raw)
            else:
                value = raw
        except ValueError:
            raise CliError("usage", f"config key {key!r}: bad value {raw!r}") from None
        setattr(args, key, value)
    return args


def _split_list(value):
    if value is None:
        return []
    if isinstance(value, list):
        return value
    return [v.strip() for v in value.split(",") if v.strip()]


def _parse_q_values(text):
    """A single level, a comma list, or an a:b:step grid."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise CliError("usage", f"bad q grid {text!r}; expected a:b:step")
        try:
            a, b, step = (float(v) for v in parts)
        except ValueError:
            raise CliError("usage", f"bad q grid {text!r}") from None
        if step <= 0 or b < a:
            raise CliError("usage", f"bad q grid {text!r}")
        count = int(np.floor((b - a) / step + 1e-9)) + 1
        return [round(a + i * step, 10) for i in range(count)]
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError("usage", f"bad q value {text!r}") from None


def _resolve_family(args):
    family = args.family or "lognormal"
    xi_opt = args.xi
    if family == "lognormal":
        if xi_opt not in (None, "profile"):
            raise CliError("usage", "lognormal takes no xi")
        return family, None, None
    if xi_opt is None:
        raise CliError("usage", f"family {family!r} needs --xi <value|profile>")
    if xi_opt == "profile":
        grid = default_xi_grid(family)
        return family, grid[0], grid
    try:
        return family, float(xi_opt), None
    except ValueError:
        raise CliError("usage", f"bad xi {xi_opt!r}") from None


def _ingest_from_args(args):
    if not args.data:
        raise CliError("usage", "--data is required")
    if not args.response:
        raise CliError("usage", "--response is required")
    shift = args.shift or 0.0
    data = ingest_csv(
        args.data,
        response=args.response,
        qcov=_split_list(args.qcov),
        dcov=_split_list(args.dcov),
        psi=args.psi,
        censor_col=args.censor_col,
        shift=shift,
    )
    ingest_cfg = {
        "data": str(args.data),
        "response": args.response,
        "qcov": _split_list(args.qcov),
        "dcov": _split_list(args.dcov),
        "psi": args.psi,
        "censor_col": args.censor_col,
        "shift": shift,
    }
    return data, ingest_cfg


def _print_header(result, spec):
    print(f"family={spec.generator.name} q={result.q:g} psi={spec.psi:g} "
          f"xi={'-' if result.xi_hat is None else f'{result.xi_hat:g}'}")
    print(f"loglik={result.loglik:.6f} AIC={result.aic:.6f} BIC={result.bic:.6f} "
          f"(p={result.n_params}; {_PARAM_NOTE})")
    print(f"converged={result.converged} iterations={result.n_iter}")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_fit(args):
    data, ingest_cfg = _ingest_from_args(args)
    if args.q is None:
        raise CliError("usage", "--q is required for fit")
    levels = _parse_q_values(args.q)
    if len(levels) != 1:
        raise CliError("usage", "fit takes a single --q; use profile-q for a grid")
    family, xi, grid = _resolve_family(args)
    seed = args.seed if args.seed is not None else 0
    try:
        spec = ModelSpec(make_generator(family, xi), levels[0], data.psi)
    except ValueError as exc:
        raise CliError("usage", str(exc)) from None
    cfg = FitConfig(xi_grid=grid, seed=seed)
    try:
        result = fit(spec, data, cfg)
    except (ValueError, CollinearDesignError) as exc:
        raise CliError("data", str(exc)) from None
    if result.xi_hat is not None and spec.generator.xi != result.xi_hat:
        spec = ModelSpec(make_generator(family, result.xi_hat), levels[0], data.psi)
    residuals = mt_residuals(spec, data, result)
    nsim = args.nsim_envelope if args.nsim_envelope is not None else 100
    if nsim > 0:
        level = args.envelope_level if args.envelope_level is not None else 0.05
        residuals = simulated_envelope(
            spec, data, result, n_sim=nsim, level=level, seed=seed
        )
    outdir = args.out or "."
    emit_report(result, residuals, outdir, spec, data, ingest_cfg, seed)
    _print_header(result, spec)
    if result.singular_info:
        print("warning: observed information not positive definite; "
              "standard errors unavailable", file=sys.stderr)
    if not result.converged:
        raise CliError("fit", result.message)
    return 0


def _cmd_profile_q(args):
    data, ingest_cfg = _ingest_from_args(args)
    if args.q is None:
        raise CliError("usage", "--q grid is required for profile-q (a:b:step or list)")
    levels = _parse_q_values(args.q)
    family, xi, grid = _resolve_family(args)
    seed = args.seed if args.seed is not None else 0
    try:
        spec = ModelSpec(make_generator(family, xi), levels[0], data.psi)
    except ValueError as exc:
        raise CliError("usage", str(exc)) from None
    cfg = FitConfig(xi_grid=grid, seed=seed)
    try:
        selection = select_q(spec, data, cfg, levels)
    except (ValueError, RuntimeError, CollinearDesignError) as exc:
        raise CliError("fit", str(exc)) from None
    outdir = Path(args.out or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "q_trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["q", "loglik", "aic", "bic", "xi", "converged", "error"])
        for row in selection.trace:
            writer.writerow(
                [_fmt(row["q"]), _fmt(row.get("loglik")), _fmt(row.get("aic")),
                 _fmt(row.get("bic")),
                 "" if row.get("xi") is None else _fmt(row.get("xi")),
                 row.get("converged", ""), row.get("error", "")]
            )
    result = selection.result
    best_spec = ModelSpec(
        make_generator(family, result.xi_hat), selection.q_otm, data.psi
    )
    residuals = mt_residuals(best_spec, data, result)
    nsim = args.nsim_envelope if args.nsim_envelope is not None else 0
    if nsim > 0:
        level = args.envelope_level if args.envelope_level is not None else 0.05
        residuals = simulated_envelope(
            best_spec, data, result, n_sim=nsim, level=level, seed=seed
        )
    emit_report(result, residuals, outdir, best_spec, data, ingest_cfg, seed)
    print(f"q_otm={selection.q_otm:g}")
    _print_header(result, best_spec)
    return 0


def _cmd_diagnose(args):
    if not args.fit:
        raise CliError("usage", "--fit <fit.json> is required for diagnose")
    try:
        payload = json.loads(Path(args.fit).read_text())
    except OSError as exc:
        raise CliError("io", f"cannot read {args.fit}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError("data", f"{args.fit}: not a fit file ({exc})") from None
    ingest = payload["ingest"]
    data_path = args.data or ingest["data"]
    data = ingest_csv(
        data_path,
        response=ingest["response"],
        qcov=ingest["qcov"],
        dcov=ingest["dcov"],
        psi=ingest["psi"],
        censor_col=ingest.get("censor_col"),
        shift=ingest.get("shift", 0.0),
    )
    spec = ModelSpec(
        make_generator(payload["family"], payload["xi"]), payload["q"], payload["psi"]
    )
    theta = ParamVector(np.array(payload["beta"]), np.array(payload["kappa"]))
    seed = args.seed if args.seed is not None else payload.get("seed", 0)
    nsim = args.nsim_envelope if args.nsim_envelope is not None else 100
    if nsim > 0:
        level = args.envelope_level if args.envelope_level is not None else 0.05
        report = simulated_envelope(spec, data, theta, n_sim=nsim, level=level, seed=seed)
    else:
        report = mt_residuals(spec, data, theta)
    outdir = Path(args.out or ".")
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        _write_qq_csv(outdir / "qq_envelope.csv", report)
    except OSError as exc:
        raise CliError("io", f"cannot write under {outdir}: {exc}") from None
    print(f"wrote {outdir / 'qq_envelope.csv'} (n_sim={nsim})")
    return 0


def _cmd_simulate(args):
    family = args.family or "lognormal"
    xi = None
    if args.xi not in (None, "profile"):
        try:
            xi = float(args.xi)
        except ValueError:
            raise CliError("usage", f"bad xi {args.xi!r}") from None
    if args.q is None:
        raise CliError("usage", "--q is required for simulate")
    levels = _parse_q_values(args.q)
    if len(levels) != 1:
        raise CliError("usage", "simulate takes a single --q")
    try:
        beta = [float(v) for v in (args.beta_true or ["1", "0.5"])]
        kappa = [float(v) for v in (args.kappa_true or ["1", "1.5"])]
        scenario = Scenario(
            family=family,
            xi=xi,
            q=levels[0],
            n=args.n if args.n is not None else 600,
            censor_prop=args.censor_prop if args.censor_prop is not None else 0.1,
            beta_true=tuple(beta),
            kappa_true=tuple(kappa),
            nrep=args.nrep if args.nrep is not None else 500,
            seed=args.seed if args.seed is not None else 0,
        )
        scenario.generator()  # surfaces a missing or out-of-range xi early
    except ValueError as exc:
        raise CliError("usage", str(exc)) from None
    try:
        result = run_scenario(scenario)
    except ScenarioConvergenceError as exc:
        raise CliError("fit", str(exc)) from None
    outdir = Path(args.out or ".")
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        write_results_csv([result], outdir / "mc_results.csv")
    except OSError as exc:
        raise CliError("io", f"cannot write under {outdir}: {exc}") from None
    print(f"scenario {family} q={scenario.q:g} n={scenario.n} "
          f"censoring={scenario.censor_prop:g}: "
          f"{result.nrep_effective}/{scenario.nrep} replicates converged "
          f"(psi={result.psi:.6g})")
    for row in result.rows():
        print(f"  {row['parameter']}: bias={row['bias']:.4f} mse={row['mse']:.4f}")
    return 0


def _add_common(p):
    p.add_argument("--config", help="flat key=value option file; flags override it")
    p.add_argument("--data", help="input CSV (UTF-8, comma separated, header row)")
    p.add_argument("--response", help="response column name")
    p.add_argument("--censor-col", dest="censor_col",
                   help="0/1 column flagging censored rows (stored at psi)")
    p.add_argument("--psi", type=float, help="left-censoring threshold (> 0)")
    p.add_argument("--shift", type=float,
                   help="constant added to the response before censoring logic")
    p.add_argument("--qcov", help="comma list of quantile-submodel covariates")
    p.add_argument("--dcov", help="comma list of dispersion-submodel covariates")
    p.add_argument("--family", choices=["lognormal", "logt", "logpe", "ebs"],
                   help="error family (default lognormal)")
    p.add_argument("--xi", help="extra parameter value, or 'profile'")
    p.add_argument("--q", help="quantile level; profile-q accepts a:b:step or a comma list")
    p.add_argument("--out", help="output directory (default .)")
    p.add_argument("--seed", type=int, help="seed for restarts, envelopes, simulation")
    p.add_argument("--nsim-envelope", dest="nsim_envelope", type=int,
                   help="envelope replicates (0 disables; default 100 for fit)")
    p.add_argument("--envelope-level", dest="envelope_level", type=float,
                   help="envelope band level (default 0.05)")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="lstobit",
        description="Quantile tobit regression with log-symmetric errors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one model and write a report")
    _add_common(p_fit)

    p_prof = sub.add_parser("profile-q", help="fit across a q grid, keep lowest AIC")
    _add_common(p_prof)

    p_diag = sub.add_parser("diagnose", help="residual QQ/envelope data from a saved fit")
    _add_common(p_diag)
    p_diag.add_argument("--fit", help="fit.json produced by the fit command")

    p_sim = sub.add_parser("simulate", help="Monte Carlo bias/MSE study")
    _add_common(p_sim)
    p_sim.add_argument("--n", type=int, help="sample size per replicate (default 600)")
    p_sim.add_argument("--censor-prop", dest="censor_prop", type=float,
                       help="target censoring proportion (default 0.1)")
    p_sim.add_argument("--nrep", type=int, help="number of replicates (default 500)")
    p_sim.add_argument("--beta-true", dest="beta_true",
                       help="true quantile coefficients, e.g. 1,0.5")
    p_sim.add_argument("--kappa-true", dest="kappa_true",
                       help="true dispersion coefficients, e.g. 1,1.5")
    return parser


_HANDLERS = {
    "fit": _cmd_fit,
    "profile-q": _cmd_profile_q,
    "diagnose": _cmd_diagnose,
    "simulate": _cmd_simulate,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args)
        if isinstance(getattr(args, "beta_true", None), str):
            args.beta_true = _split_list(args.beta_true)
        if isinstance(getattr(args, "kappa_true", None), str):
            args.kappa_true = _split_list(args.kappa_true)
        return _HANDLERS[args.command](args)
    except CliError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return _EXIT_CODES.get(exc.category, 1)


if __name__ == "__main__":
    sys.exit(main())
