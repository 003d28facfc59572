"""Command line: ``sabc run`` executes one annealing run, ``sabc oracle`` queries ground truth.

Settings are resolved in this order, later sources winning: ``RunConfig``
defaults, the model's suggested values, a JSON file given with ``--config``,
``SABC_*`` environment variables and finally command-line flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import importlib.util
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import oracle
from .core import rng_stream, write_particles_csv
from .driver import RunConfig, run, write_trace_csv
from .models import MODELS, ModelSpec, load_cluster_table, tb_model

ENV_PREFIX = "SABC_"
EXTRA_KEYS = ("model", "out_dir")


class ConfigError(ValueError):
    pass


# --- value parsing -----------------------------------------------------------------------

def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_optional(kind):
    def parse(text):
        if text is None or (isinstance(text, str) and text.strip().lower() in ("none", "null", "")):
            return None
        return kind(text)
    return parse


def _parse_int(text) -> int:
    if isinstance(text, bool):
        raise ConfigError("expected an integer")
    if isinstance(text, float):
        if not text.is_integer():
            raise ConfigError(f"not an integer: {text!r}")
        return int(text)
    return int(str(text).replace("_", ""))


PARSERS = {
    "int": _parse_int,
    "float": float,
    "str": str,
    "bool": _parse_bool,
    "int | None": _parse_optional(_parse_int),
    "float | None": _parse_optional(float),
}

FIELDS = {f.name: PARSERS[f.type] for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, value):
    if key in EXTRA_KEYS:
        return str(value)
    if key not in FIELDS:
        raise ConfigError(f"unknown setting {key!r}")
    try:
        return FIELDS[key](value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None


# --- models -------------------------------------------------------------------------------

def load_model(name: str) -> ModelSpec:
    """``toy1``, ``toy2``, ``tb``, ``tb:<cluster csv>`` or ``file:<python file>``.

    A Python file must define ``model()`` returning a :class:`ModelSpec`.
    """
    if name in MODELS:
        return MODELS[name]()
    if name.startswith("tb:"):
        return tb_model(load_cluster_table(name[3:]))
    if name.startswith("file:"):
        path = Path(name[5:])
        if not path.is_file():
            raise ConfigError(f"model file not found: {path}")
        spec = importlib.util.spec_from_file_location(f"sabc_user_model_{path.stem}", path)
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)
        if not hasattr(module, "model"):
            raise ConfigError(f"{path} does not define model()")
        out = module.model()
        if not isinstance(out, ModelSpec):
            raise ConfigError(f"{path}: model() must return a ModelSpec")
        return out
    raise ConfigError(f"unknown model {name!r}; choose toy1, toy2, tb, tb:<csv> or file:<path>")


# --- configuration ------------------------------------------------------------------------

def _read_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return {k: _coerce(k, v) for k, v in data.items()}


def _read_env(environ) -> dict:
    out = {}
    for key in (*FIELDS, *EXTRA_KEYS):
        name = ENV_PREFIX + key.upper()
        if name in environ:
            out[key] = _coerce(key, environ[name])
    return out


def resolve_settings(flags: dict, config_path=None, environ=None) -> tuple[dict, ModelSpec]:
    """Merge all setting sources; returns the full settings dict and the model."""
    environ = os.environ if environ is None else environ
    from_file = _read_config_file(config_path) if config_path else {}
    from_env = _read_env(environ)
    from_flags = {k: _coerce(k, v) for k, v in flags.items() if v is not None}
    chosen = {**from_file, **from_env, **from_flags}
    model_name = chosen.get("model")
    if model_name is None:
        raise ConfigError("no model given (use --model)")
    model = load_model(model_name)
    suggested = model.extras.get("defaults", {})
    base = dataclasses.asdict(RunConfig())
    settings = {**base, **suggested, "out_dir": ".", **chosen}
    if "max_sims" not in chosen and "max_sims" not in suggested:
        raise ConfigError("max_sims is required for this model")
    return settings, model


def make_config(settings: dict) -> RunConfig:
    try:
        return RunConfig(**{k: v for k, v in settings.items() if k in FIELDS})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# --- commands ---------------------------------------------------------------------------------

def _json_value(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, dict):
        return {k: _json_value(v) for k, v in x.items()}
    return x


def run_command(args, environ=None) -> int:
    flags = {k: getattr(args, k, None) for k in (*FIELDS, *EXTRA_KEYS)}
    settings, model = resolve_settings(flags, args.config, environ)
    cfg = make_config(settings)
    out = Path(settings["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(settings, fh, indent=2, sort_keys=True)
        fh.write("\n")
    t0 = time.perf_counter()
    result = run(model, cfg)
    wall = time.perf_counter() - t0
    write_particles_csv(out / "particles.csv", result.ensemble)
    write_trace_csv(out / "diagnostics.csv", result)
    summary = {"model": model.name, "algorithm": cfg.algorithm, "wall_time_s": wall,
               **{k: _json_value(v) for k, v in result.totals.items()}}
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{model.name}/{cfg.algorithm}: {result.sims} simulations, ESS {result.ess:.1f}, "
          f"stopped by {result.totals['stop_reason']}; outputs in {out}")
    return 0


def oracle_command(args) -> int:
    if args.what == "quartic":
        print(repr(oracle.bisect_quartic(args.u, args.v_over_gamma)))
    elif args.what == "posterior-cdf":
        if args.model == "toy1":
            value = oracle.toy1_posterior_cdf(args.theta)
        elif args.model == "toy2":
            mean, var = oracle.toy2_posterior(args.y)
            value = float(norm.cdf(args.theta, mean, math.sqrt(var)))
        else:
            raise ConfigError("closed-form posterior available for toy1 and toy2 only")
        print(repr(float(value)))
    elif args.what == "pi-eps":
        if args.model == "toy2":
            model = MODELS["toy2"](args.y)
        else:
            model = load_model(args.model)
        if not args.eps > 0 or args.count < 1:
            raise ConfigError("need eps > 0 and count >= 1")
        sample = oracle.rejection_sample_pi_eps(model, args.eps, args.count, rng_stream(args.seed))
        target = args.out if args.out else sys.stdout
        write_particles_csv(target, sample.to_ensemble(), sample.weights)
    return 0


# --- argument parsing -------------------------------------------------------------------------

def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sabc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one annealing experiment")
    p_run.add_argument("--config", help="JSON file with settings")
    p_run.add_argument("--model", help="toy1 | toy2 | tb | tb:<cluster csv> | file:<python file>")
    p_run.add_argument("--out-dir", dest="out_dir")
    # every RunConfig field has a flag; values stay strings until merged
    for name in FIELDS:
        kw = {"dest": name, "default": None, "metavar": name.upper()}
        if name == "algorithm":
            kw["choices"] = ("explicit", "adaptive-flat", "adaptive-informative")
        if name == "adapt_jump":
            kw["choices"] = ("on", "off")
        p_run.add_argument(_flag(name), **kw)

    p_or = sub.add_parser("oracle", help="exact reference values")
    osub = p_or.add_subparsers(dest="what", required=True)
    p1 = osub.add_parser("pi-eps", help="rejection sample from the tilted target (CSV)")
    p1.add_argument("--model", default="toy2")
    p1.add_argument("--eps", type=float, required=True)
    p1.add_argument("--count", type=int, default=10_000)
    p1.add_argument("--seed", type=int, default=0)
    p1.add_argument("--y", type=float, default=3.0)
    p1.add_argument("--out")
    p2 = osub.add_parser("quartic", help="bisection root of the cooling quartic")
    p2.add_argument("--u", type=float, required=True)
    p2.add_argument("--v-over-gamma", dest="v_over_gamma", type=float, required=True)
    p3 = osub.add_parser("posterior-cdf", help="exact posterior CDF of a toy model")
    p3.add_argument("--model", default="toy1", choices=("toy1", "toy2"))
    p3.add_argument("--theta", type=float, required=True)
    p3.add_argument("--y", type=float, default=3.0)
    return parser


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return run_command(args, environ)
        return oracle_command(args)
    except ConfigError as exc:
        print(f"sabc: configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to status 1
        print(f"sabc: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
