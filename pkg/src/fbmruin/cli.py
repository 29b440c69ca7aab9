"""Batch command-line front end.

Subcommands: simulate, estimate, ruin, sens, ci, validate.  Options may come
from a JSON config file (--config); explicit flags win over file values and
the effective configuration is echoed, with per-field provenance, into every
output document.  Exit codes: 0 success, 2 configuration error, 3 numerical
policy violation, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings

from . import __version__
from .estimation import SCALING_MODES

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

SEED_ENV_VAR = "FBMRUIN_SEED"


class ConfigError(Exception):
    """Invalid option combination; maps to exit code 2."""


def _round12(x):
    """Round floats to 12 significant digits for stable, diff-friendly output."""
    if isinstance(x, float):
        return float(f"{x:.12g}")
    if isinstance(x, dict):
        return {k: _round12(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round12(v) for v in x]
    return x


def _model_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--u", type=float, help="initial capital")
    sub.add_argument("--theta", type=float, help="normalized drift (known)")
    sub.add_argument("--sigma", type=float, help="volatility scale")
    sub.add_argument("--H", type=float, help="Hurst index in (0,1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbmruin",
        description=(
            "Simulation and estimation toolkit for surplus processes driven by "
            "drifted fractional Brownian motion"
        ),
    )
    parser.add_argument("--version", action="version", version=f"fbmruin {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override file values")
    common.add_argument("--seed", type=int, help=f"master seed (default: ${SEED_ENV_VAR} or 0)")
    common.add_argument("--workers", type=int, help="parallel worker cap (results identical)")
    common.add_argument("--out", help="write the JSON result here instead of stdout")

    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("simulate", parents=[common], help="sample one fBm path / surplus")
    _model_args(p)
    p.add_argument("--T", type=float, help="horizon")
    p.add_argument("--steps", type=int, help="grid steps n")
    p.add_argument("--index", type=int, help="path index within the seed's stream")
    p.add_argument("--path-csv", help="write the path as CSV (t,w,x)")

    p = subs.add_parser("estimate", parents=[common], help="volatility from observed surplus CSV")
    p.add_argument("--input", help="CSV file with columns (t,x)")
    p.add_argument("--p", type=float, help="power-variation order (p>1)")
    p.add_argument("--H", type=float, help="Hurst index")
    p.add_argument("--alpha", type=float, help="CI level in (0,1)")
    p.add_argument("--mode", choices=SCALING_MODES, help="CI scaling mode")

    p = subs.add_parser("ruin", parents=[common], help="Monte Carlo ruin probability")
    _model_args(p)
    p.add_argument("--T", type=float, help="ruin horizon")
    p.add_argument("--paths", type=int, help="Monte Carlo replications m")
    p.add_argument("--steps", type=int, help="grid steps n")
    p.add_argument("--sups-csv", help="write per-path suprema M as CSV")

    p = subs.add_parser("sens", parents=[common], help="sensitivity of the ruin probability")
    _model_args(p)
    p.add_argument("--T", type=float, help="ruin horizon")
    p.add_argument("--paths", type=int, help="Monte Carlo replications m")
    p.add_argument("--steps", type=int, help="grid steps n")
    p.add_argument("--method", choices=("fd", "kde", "malliavin"), help="estimator")
    p.add_argument("--eps", type=float, help="fd bump size (default 0.02*sigma)")
    p.add_argument("--scheme", choices=("forward", "central"), help="fd scheme")
    p.add_argument("--no-crn", action="store_true", help="fd: independent draws")
    p.add_argument("--r", type=int, help="malliavin: roughness exponent (even)")
    p.add_argument("--m-exp", type=int, help="malliavin: envelope exponent (even)")
    p.add_argument("--sharpness", type=float, help="malliavin: mollifier sharpness")
    p.add_argument("--diagnostics-csv", help="malliavin: per-path CSV (index,M,tau,denom,weight,indicator)")

    p = subs.add_parser("ci", parents=[common], help="delta-method CI for the ruin probability")
    p.add_argument("--input", help="observed surplus CSV (t,x)")
    p.add_argument("--theta", type=float, help="known drift")
    p.add_argument("--H", type=float, help="Hurst index (pipeline needs (1/2,3/4))")
    p.add_argument("--T", type=float, help="ruin horizon")
    p.add_argument("--p", type=float, help="power-variation order")
    p.add_argument("--alpha", type=float, help="CI level")
    p.add_argument("--mode", choices=SCALING_MODES, help="CI scaling mode")
    p.add_argument("--method", choices=("fd", "kde", "malliavin"), help="sensitivity method")
    p.add_argument("--paths", type=int, help="ruin MC replications")
    p.add_argument("--steps", type=int, help="ruin MC grid steps")
    p.add_argument("--sens-paths", type=int, help="sensitivity MC replications")
    p.add_argument("--sens-steps", type=int, help="sensitivity grid steps")

    p = subs.add_parser("validate", parents=[common], help="run the bundled invariant suite")

    return parser


# defaults applied after config-file merging (field -> value)
_DEFAULTS = {
    "simulate": {"u": 1.0, "theta": 1.0, "sigma": 0.5, "H": 0.6, "T": 1.0, "steps": 1024,
                 "index": 0},
    "estimate": {"p": 2.0, "alpha": 0.05, "mode": "variance-decay"},
    "ruin": {"T": 1.0, "paths": 100_000, "steps": 4096},
    "sens": {"T": 1.0, "paths": 10_000, "steps": 512, "method": "fd",
             "scheme": "central", "sharpness": 1.0},
    "ci": {"p": 2.0, "alpha": 0.05, "mode": "variance-decay", "method": "malliavin",
           "paths": 100_000, "steps": 4096, "sens_paths": 2000, "sens_steps": 512},
    "validate": {},
}
_COMMON_DEFAULTS = {"seed": None, "workers": 1}


def merge_config(args: argparse.Namespace) -> tuple[dict, dict]:
    """Flags > config file > environment (seed) > defaults.

    Returns (effective config, per-field provenance).
    """
    command = args.command
    file_cfg: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except OSError as err:
            raise IOError(f"cannot read config file {args.config}: {err}") from err
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file {args.config} is not valid JSON: {err}") from err
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    cfg: dict = {}
    prov: dict = {}
    fields = dict(_DEFAULTS[command])
    fields.update(_COMMON_DEFAULTS)
    for field, default in fields.items():
        flag_val = getattr(args, field, None)
        if flag_val is not None and flag_val is not False:
            cfg[field] = flag_val
            prov[field] = "flag"
        elif field in file_cfg:
            cfg[field] = file_cfg[field]
            prov[field] = "config-file"
        elif field == "seed" and os.environ.get(SEED_ENV_VAR):
            cfg[field] = int(os.environ[SEED_ENV_VAR])
            prov[field] = "env"
        elif default is not None:
            cfg[field] = default
            prov[field] = "default"
    # remaining argparse fields (model params, IO paths, booleans) pass through
    for field, value in vars(args).items():
        if field in ("command", "config", "out") or field in cfg:
            continue
        if value is not None and value is not False:
            cfg[field] = value
            prov[field] = "flag"
        elif field in file_cfg:
            cfg[field] = file_cfg[field]
            prov[field] = "config-file"
    if "seed" not in cfg:
        cfg["seed"] = 0
        prov["seed"] = "default"
    return cfg, prov


def _require(cfg: dict, fields: tuple[str, ...], command: str) -> None:
    missing = [f for f in fields if f not in cfg]
    if missing:
        raise ConfigError(f"{command} requires {', '.join('--' + m for m in missing)}")


def _model_from(cfg: dict, command: str) -> "ModelParams":
    from .fbm import ModelParams

    _require(cfg, ("u", "theta", "sigma", "H"), command)
    try:
        return ModelParams(cfg["u"], cfg["theta"], cfg["sigma"], cfg["H"])
    except ValueError as err:
        raise ConfigError(str(err)) from err


def run(cfg: dict, prov: dict, out_path: str | None) -> int:
    """Execute a merged configuration; returns the process exit code."""
    command = cfg["command"]
    t0 = time.time()
    result: dict = {}
    exit_code = EXIT_OK
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if command == "simulate":
            result = _run_simulate(cfg)
        elif command == "estimate":
            result = _run_estimate(cfg)
        elif command == "ruin":
            result = _run_ruin(cfg)
        elif command == "sens":
            result = _run_sens(cfg)
        elif command == "ci":
            result = _run_ci(cfg)
        elif command == "validate":
            result, exit_code = _run_validate(cfg)
        else:  # pragma: no cover
            raise ConfigError(f"unknown command {command!r}")
    warn_msgs = sorted({str(w.message) for w in caught})
    if command == "sens" and cfg.get("method") == "malliavin":
        excl = result.get("method_params", {}).get("excluded", 0)
        if excl > 0.01 * cfg["paths"]:
            exit_code = EXIT_NUMERICAL
    doc = {
        "command": command,
        "version": __version__,
        "seed": cfg["seed"],
        "workers": cfg.get("workers", 1),
        "config": {k: v for k, v in sorted(cfg.items()) if k != "command"},
        "provenance": dict(sorted(prov.items())),
        "result": result,
        "warnings": warn_msgs,
    }
    doc = _round12(doc)
    doc["wall_time_s"] = round(time.time() - t0, 3)
    text = json.dumps(doc, indent=2, sort_keys=False)
    if out_path:
        try:
            with open(out_path, "w") as fh:
                fh.write(text + "\n")
        except OSError as err:
            raise IOError(f"cannot write output {out_path}: {err}") from err
    else:
        print(text)
    return exit_code


def _run_simulate(cfg: dict) -> dict:
    from .fbm import ModelParams, TimeGrid, path_to_csv, sample_fbm, surplus

    params = _model_from(cfg, "simulate")
    grid = TimeGrid(cfg["T"], cfg["steps"])
    path = sample_fbm(grid, params.H, cfg["seed"], index=cfg["index"])
    x = surplus(path, params)
    out = {
        "T": grid.T,
        "steps": grid.n,
        "index": cfg["index"],
        "w_final": float(path.w[-1]),
        "x_final": float(x.values[-1]),
        "x_min": float(x.values.min()),
        "ruined_on_grid": bool(x.values.min() < 0.0),
    }
    if cfg.get("path_csv"):
        try:
            with open(cfg["path_csv"], "w", newline="") as fh:
                path_to_csv(path, fh, params)
        except OSError as err:
            raise IOError(f"cannot write {cfg['path_csv']}: {err}") from err
        out["path_csv"] = cfg["path_csv"]
    return out


def _load_surplus(cfg: dict, command: str):
    from .fbm import read_surplus_csv

    _require(cfg, ("input",), command)
    try:
        with open(cfg["input"]) as fh:
            return read_surplus_csv(fh)
    except OSError as err:
        raise IOError(f"cannot read {cfg['input']}: {err}") from err
    except ValueError as err:
        raise ConfigError(f"bad surplus data in {cfg['input']}: {err}") from err


def _run_estimate(cfg: dict) -> dict:
    _require(cfg, ("H",), "estimate")
    if not (0.0 < cfg["H"] < 1.0):
        raise ConfigError(f"H must lie in (0,1), got {cfg['H']}")
    data = _load_surplus(cfg, "estimate")
    est = sigma_confidence_wrapper(data, cfg)
    return est


def sigma_confidence_wrapper(data, cfg: dict) -> dict:
    from .estimation import power_variation, sigma_confidence

    est = sigma_confidence(data, cfg["p"], cfg["H"], cfg["alpha"], cfg["mode"])
    rep = power_variation(data, cfg["p"])
    return {
        "sigma_hat": est.sigma_hat,
        "sigma_hat_p": est.sigma_hat_p,
        "sd": est.sd,
        "scaling_mode": est.scaling_mode,
        "alpha": est.alpha,
        "interval": list(est.interval),
        "power_variation": rep.V,
        "n_increments": rep.n,
        "T0": rep.t,
    }


def _run_ruin(cfg: dict) -> dict:
    from .ruin import mc_ruin, simulate_drifted_sups

    params = _model_from(cfg, "ruin")
    est = mc_ruin(params, cfg["T"], cfg["paths"], cfg["steps"], cfg["seed"], cfg["workers"])
    out = {
        "psi_hat": est.psi_hat,
        "se": est.se,
        "m": est.m,
        "n": est.n,
        "T": cfg["T"],
    }
    if cfg.get("sups_csv"):
        M = simulate_drifted_sups(
            params.theta, params.H, cfg["T"], cfg["paths"], cfg["steps"], cfg["seed"],
            cfg["workers"],
        )
        try:
            with open(cfg["sups_csv"], "w") as fh:
                fh.write("index,M\n")
                for i, v in enumerate(M):
                    fh.write(f"{i},{v:.12g}\n")
        except OSError as err:
            raise IOError(f"cannot write {cfg['sups_csv']}: {err}") from err
        out["sups_csv"] = cfg["sups_csv"]
    return out


def _sens_estimate(cfg: dict):
    from .ruin import finite_diff_sens, kde_density_sens
    from .sensitivity import MalliavinConfig, default_malliavin_config, malliavin_sens

    params = _model_from(cfg, "sens")
    method = cfg["method"]
    if method == "fd":
        eps = cfg.get("eps", 0.02 * params.sigma)
        if not (0.0 < eps < params.sigma):
            raise ConfigError(f"fd requires 0 < eps < sigma, got eps={eps}")
        return finite_diff_sens(
            params, cfg["T"], eps, cfg["scheme"], not cfg.get("no_crn", False),
            cfg["paths"], cfg["steps"], cfg["seed"], cfg["workers"],
        )
    if method == "kde":
        return kde_density_sens(
            params, cfg["T"], cfg["paths"], cfg["steps"], cfg["seed"],
            workers=cfg["workers"],
        )
    if not (0.5 < params.H < 1.0):
        raise ConfigError(
            f"malliavin sensitivity requires H in (1/2, 1), got H={params.H}"
        )
    if cfg.get("r") is not None or cfg.get("m_exp") is not None:
        base = default_malliavin_config(params.H)
        mc = MalliavinConfig(
            r=cfg.get("r", base.r),
            m_exp=cfg.get("m_exp", base.m_exp),
            mollifier_sharpness=cfg.get("sharpness", 1.0),
        )
    else:
        base = default_malliavin_config(params.H)
        mc = MalliavinConfig(base.r, base.m_exp, cfg.get("sharpness", 1.0))
    try:
        mc.validate_for(params.H)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    return malliavin_sens(
        params, cfg["T"], cfg["paths"], cfg["steps"], mc, cfg["seed"], cfg["workers"],
        collect_diagnostics=bool(cfg.get("diagnostics_csv")),
    )


def _run_sens(cfg: dict) -> dict:
    est = _sens_estimate(cfg)
    method_params = dict(est.method_params)
    diags = method_params.pop("diagnostics", None)
    out = {
        "value": est.value,
        "se": est.se,
        "method": est.method,
        "m": est.m,
        "n": est.n,
        "T": cfg["T"],
        "method_params": method_params,
    }
    if cfg.get("diagnostics_csv"):
        if diags is None:
            raise ConfigError("--diagnostics-csv is only available with --method malliavin")
        try:
            with open(cfg["diagnostics_csv"], "w") as fh:
                fh.write("index,M,tau_idx,denom,weight,indicator\n")
                for row in diags:
                    fh.write(
                        f"{row[0]},{row[1]:.12g},{row[2]},{row[3]:.12g},"
                        f"{row[4]:.12g},{row[5]}\n"
                    )
        except OSError as err:
            raise IOError(f"cannot write {cfg['diagnostics_csv']}: {err}") from err
        out["diagnostics_csv"] = cfg["diagnostics_csv"]
    return out


def _run_ci(cfg: dict) -> dict:
    from .sensitivity import delta_method_ci

    _require(cfg, ("theta", "H", "T"), "ci")
    if not (0.5 < cfg["H"] < 0.75):
        raise ConfigError(
            f"the ci pipeline requires H in (1/2, 3/4) (volatility CLT needs H < 3/4, "
            f"the sensitivity needs H > 1/2), got H={cfg['H']}"
        )
    data = _load_surplus(cfg, "ci")
    report = delta_method_ci(
        data,
        theta=cfg["theta"],
        H=cfg["H"],
        T=cfg["T"],
        p=cfg["p"],
        alpha=cfg["alpha"],
        mc_m=cfg["paths"],
        mc_n=cfg["steps"],
        sens_m=cfg["sens_paths"],
        sens_n=cfg["sens_steps"],
        seed=cfg["seed"],
        method=cfg["method"],
        mode=cfg["mode"],
        workers=cfg["workers"],
    )
    return report.to_dict()


def _run_validate(cfg: dict) -> tuple[dict, int]:
    from .validation import run_all

    results = run_all(seed=cfg["seed"] if cfg["seed"] else 20240901)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  [{r.seconds:6.1f}s]  {r.detail}", file=sys.stderr)
    all_pass = all(r.passed for r in results)
    out = {
        "checks": [
            {"name": r.name, "passed": r.passed, "detail": r.detail, "seconds": r.seconds}
            for r in results
        ],
        "all_passed": all_pass,
    }
    return out, EXIT_OK if all_pass else EXIT_NUMERICAL


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, prov = merge_config(args)
        cfg["command"] = args.command
        if cfg.get("workers", 1) < 1:
            raise ConfigError("--workers must be >= 1")
        return run(cfg, prov, getattr(args, "out", None))
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except IOError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
