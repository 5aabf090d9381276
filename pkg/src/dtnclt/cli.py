"""Command-line front end.

Exit codes: 0 success, 1 I/O failure, 2 invalid config or input schema,
3 optimizer did not converge (result still written), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clt import CltResult, run_clt_experiment
from .config import (
    config_stem,
    load_clt_config,
    load_model_config,
    load_simulation_config,
    load_start,
    read_json,
)
from .dtn import DtnParams, dtn_cdf, dtn_mean, dtn_pdf, dtn_sample, dtn_var
from .errors import ConfigError, DomainError, NotPositiveDefiniteError
from .mixed import Dataset, FitOptions, ModelSpec, fit_mle, simulate_dataset
from .numerics import NelderMeadOptions

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_NUMERICAL = 0, 1, 2, 3, 4


class InputError(ValueError):
    """Malformed input file; mapped to the config exit code."""


def fmt(x) -> str:
    """17 significant digits: enough to round-trip any binary64 value."""
    return format(float(x), ".17g")


def _finite_or_none(x):
    return float(x) if math.isfinite(x) else None


def _write_text(path, text):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_text(obj):
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


# -- dist / sample ---------------------------------------------------------------------

def cmd_dist(args) -> int:
    p = DtnParams(args.mu, args.eta, args.rho)
    mean, var = dtn_mean(p), dtn_var(p)
    rows = [[fmt(x), fmt(dtn_pdf(x, p)), fmt(dtn_cdf(x, p)), fmt(mean), fmt(var)] for x in args.at or []]
    _write_text(args.output, _csv_text(["x", "pdf", "cdf", "mean", "var"], rows))
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.count < 1:
        raise ConfigError("count", "must be at least 1")
    p = DtnParams(args.mu, args.eta, args.rho)
    draws = dtn_sample(p, np.random.default_rng(args.seed or 0), args.count)
    _write_text(args.output, "".join(fmt(x) + "\n" for x in draws))
    return EXIT_OK


# -- clt ---------------------------------------------------------------------------------

def clt_outputs(result: CltResult):
    """(wide CSV, long CSV, JSON) texts for a CLT result."""
    metrics = CltResult.METRICS
    wide = _csv_text(["n", *metrics],
                     [[r.n, *(fmt(getattr(r, m)) for m in metrics)] for r in result.rows])
    long = _csv_text(["n", "metric", "value"],
                     [[r.n, m, fmt(getattr(r, m))] for r in result.rows for m in metrics])
    cfg = result.config
    spec = cfg.spec
    doc = {
        "config": {
            "sequence": {
                "mu_range": list(spec.mu_range), "eta_range": list(spec.eta_range),
                "rho_range": list(spec.rho_range), "weight_range": list(spec.weight_range),
                "signs": spec.signs if isinstance(spec.signs, str) else list(spec.signs),
            },
            "n_schedule": list(cfg.n_schedule), "replications": cfg.replications,
            "epsilon": cfg.epsilon, "seed": spec.seed,
        },
        "rows": [{"n": r.n, **{m: getattr(r, m) for m in metrics}} for r in result.rows],
    }
    return wide, long, _json_text(doc)


def cmd_clt(args) -> int:
    config = load_clt_config(read_json(args.config), args.seed)
    result = run_clt_experiment(config, threads=args.threads)
    stem = Path(args.output) if args.output else Path(config_stem(args.config))
    wide, long, doc = clt_outputs(result)
    _write_text(stem.with_suffix(".csv"), wide)
    _write_text(stem.with_name(stem.name + "_long.csv"), long)
    _write_text(stem.with_suffix(".json"), doc)
    return EXIT_OK


# -- simulate / fit ----------------------------------------------------------------------

def dataset_csv(data: Dataset) -> str:
    header = ["group", "y"] + [f"x{j + 1}" for j in range(data.k)] + [f"z{i + 1}" for i in range(data.p)]
    rows = [[g, fmt(y), *map(fmt, x), *map(fmt, z)]
            for g, y, x, z in zip(data.group.tolist(), data.y, data.X, data.Z)]
    return _csv_text(header, rows)


def read_dataset(path) -> Dataset:
    """Load ``group,y,x1..xk,z1..zp``; raises :class:`InputError` on schema problems."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file, header row required")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["group", "y"]:
        raise InputError(f"{path}: header must start with group,y")
    k = 0
    while 2 + k < len(header) and header[2 + k] == f"x{k + 1}":
        k += 1
    rest = header[2 + k:]
    if rest != [f"z{i + 1}" for i in range(len(rest))]:
        raise InputError(f"{path}: expected columns x1..xk then z1..zp, got {','.join(header[2:])}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise InputError(f"{path}: no data rows")
    width = len(header)
    values = np.empty((len(body), width - 1))
    for line, r in enumerate(body, start=2):
        if len(r) != width:
            raise InputError(f"{path}:{line}: expected {width} fields, got {len(r)}")
        try:
            values[line - 2] = [float(v) for v in r[1:]]
        except ValueError:
            raise InputError(f"{path}:{line}: non-numeric value") from None
    groups = np.array([r[0] for r in body])
    try:
        return Dataset(values[:, 0], values[:, 1:1 + k], values[:, 1 + k:], groups)
    except DomainError as err:
        raise InputError(f"{path}: {err}") from None


def _constraints_json(constraints):
    return [{"random": c.random_index, "coef": c.coef_index, "sign": c.sign} for c in constraints]


def cmd_simulate(args) -> int:
    cfg = load_simulation_config(read_json(args.config), args.seed)
    sim = simulate_dataset(cfg.design, cfg.params, cfg.group_sizes, np.random.default_rng(cfg.seed))
    out = Path(args.output) if args.output else Path(config_stem(args.config) + ".csv")
    _write_text(out, dataset_csv(sim.data))
    p = cfg.params
    truth = {
        "beta": list(p.beta), "sigma2": p.sigma2, "varsigma": list(p.varsigma),
        "rho": [_finite_or_none(r) for r in p.rho],
        "constraints": _constraints_json(p.constraints),
        "group_sizes": list(cfg.group_sizes), "seed": cfg.seed,
        "gamma": {str(label): [float(v) for v in row] for label, row in zip(sim.labels, sim.gamma)},
    }
    _write_text(out.with_suffix(".truth.json"), _json_text(truth))
    return EXIT_OK


def fit_document(result):
    p, rep = result.params, result.report
    return {
        "beta": list(p.beta), "sigma2": p.sigma2, "varsigma": list(p.varsigma),
        "rho": [_finite_or_none(r) for r in p.rho],
        "constraints": _constraints_json(p.constraints),
        "loglik": result.loglik, "initial_loglik": result.initial_loglik,
        "converged": bool(rep.converged), "iterations": int(rep.iterations),
        "termination": rep.termination.value, "evaluations": int(rep.n_evals),
        "simplex_diameter": float(rep.simplex_diameter), "value_spread": float(rep.value_spread),
    }


def cmd_fit(args) -> int:
    data = read_dataset(args.data)
    model = load_model_config(read_json(args.model))
    try:
        spec = ModelSpec(data.k, data.p, model.constraints)
    except ConfigError as err:
        raise ConfigError("constraints", f"{err} (dataset has k={data.k}, p={data.p})") from None
    start = load_start(read_json(args.start), spec) if args.start else None
    opts = FitOptions(optimizer=NelderMeadOptions(max_iter=model.max_iter),
                      max_params=model.max_params, max_restarts=model.max_restarts, start=start)
    try:
        result = fit_mle(data, spec, opts)
    except NotPositiveDefiniteError:
        raise
    except DomainError as err:
        raise InputError(str(err)) from None
    _write_text(args.output, _json_text(fit_document(result)))
    return EXIT_OK if result.report.converged else EXIT_NONCONVERGED


# -- entry point ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtnclt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base seed (overrides config)")
    common.add_argument("--output", "-o", default=None, help="output path ('-' for stdout)")
    common.add_argument("--threads", type=int, default=1, help="worker threads; never changes output")

    def dtn_args(p):
        p.add_argument("--mu", type=float, required=True)
        p.add_argument("--eta", type=float, required=True)
        p.add_argument("--rho", type=float, required=True)

    p = sub.add_parser("dist", parents=[common], help="pdf, cdf, mean, variance at query points")
    dtn_args(p)
    p.add_argument("--at", type=float, action="append", help="query point (repeatable)")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("sample", parents=[common], help="draw samples, one per line")
    dtn_args(p)
    p.add_argument("--count", type=int, required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("clt", parents=[common], help="standardized-sum convergence experiment")
    p.add_argument("config")
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("simulate", parents=[common], help="simulate a grouped dataset")
    p.add_argument("config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="maximum likelihood fit of the mixed model")
    p.add_argument("data")
    p.add_argument("model")
    p.add_argument("--start", default=None, help="JSON with beta, sigma2, varsigma to start from")
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: threads: must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, InputError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NotPositiveDefiniteError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DomainError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
