"""Command-line interface: ``dfgof {transform,test,simulate,fit}``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import (
    DegenerateGeometry,
    DegenerateScore,
    DfgofError,
    DomainError,
    NoConvergence,
)
from .montecarlo import (
    EmpiricalCdf,
    StudyConfig,
    pairwise_distances,
    paper_fig1_config,
    simulate_statistics,
)
from .parametric import family_by_name, mle_fit
from .statistics import (
    StatisticValue,
    canonical_name,
    cvm_stat,
    ks_stat,
    null_table,
    p_value,
    pearson_chi2,
)
from .transforms import (
    AnchorPair,
    DiscreteModel,
    SampleCounts,
    components_y,
    components_y_hat,
    parametric_bundle,
    transform_parametric,
    transform_simple,
    transform_two_sample,
    two_sample_components,
)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
CLOSENESS_THRESHOLD = 0.05
PRESETS = ("paper-fig1", "smoke")


class InputError(Exception):
    pass


class NumericError(Exception):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# -- input parsing --


def read_counts(path) -> np.ndarray:
    """Read a ``index,count`` CSV with 1-based contiguous indices."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and not r[0].startswith("#")]
    if not rows:
        raise InputError(f"{path}: file is empty")
    header = [c.strip() for c in rows[0]]
    if header != ["index", "count"]:
        raise InputError(f"{path}:1: expected header 'index,count', got {','.join(header)!r}")
    counts = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise InputError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
        try:
            index = int(row[0])
        except ValueError:
            raise InputError(f"{path}:{lineno}:1: index {row[0]!r} is not an integer") from None
        try:
            count = int(row[1])
        except ValueError:
            raise InputError(f"{path}:{lineno}:2: count {row[1]!r} is not an integer") from None
        if index != len(counts) + 1:
            raise InputError(f"{path}:{lineno}:1: expected index {len(counts) + 1}, got {index}")
        if count < 0:
            raise InputError(f"{path}:{lineno}:2: count {count} is negative")
        counts.append(count)
    if len(counts) < 2:
        raise InputError(f"{path}: need at least 2 cells, got {len(counts)}")
    if sum(counts) == 0:
        raise InputError(f"{path}: all counts are zero")
    return np.array(counts, dtype=np.int64)


def _load_json(text, what):
    source = text
    if not text.lstrip().startswith(("[", "{")):
        try:
            source = Path(text).read_text()
        except FileNotFoundError:
            raise InputError(f"{what}: {text!r} is neither inline JSON nor an existing file") from None
    try:
        return json.loads(source)
    except json.JSONDecodeError as exc:
        raise InputError(f"{what}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def parse_probabilities(value, m=None, what="--model") -> DiscreteModel:
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
        raise InputError(f"{what}: expected a JSON array of probabilities")
    probs = np.array(value, dtype=float)
    if m is not None and probs.size != m:
        raise InputError(f"{what}: model has {probs.size} cells but counts have {m} rows")
    for i, p in enumerate(probs, start=1):
        if not p > 0:
            raise InputError(f"{what}: entry {i} is {p!r}; probabilities must be positive")
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-9:
        raise InputError(f"{what}: probabilities sum to {total!r}, not 1 (row sum off by {total - 1.0:.3g})")
    return DiscreteModel(probs)


def resolve_model(args, m):
    """Return ``(model, family, theta_spec)``; exactly one of model/family is set."""
    family_name = args.family
    theta = "fit" if getattr(args, "fit", False) else args.theta
    model = None
    if args.model is not None:
        parsed = _load_json(args.model, "--model")
        if isinstance(parsed, dict):
            if "family" not in parsed:
                raise InputError("--model: a family object needs a 'family' key")
            family_name = parsed["family"]
            theta = parsed.get("theta", theta)
        else:
            model = parse_probabilities(parsed, m)
    if model is not None:
        if family_name is not None:
            raise InputError("give either explicit probabilities or a family, not both")
        return model, None, None
    if family_name is None:
        raise InputError("a model is required: --model or --family")
    try:
        family = family_by_name(family_name, m)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if theta is None:
        raise InputError(f"family {family_name!r} needs --theta or --fit")
    if theta != "fit":
        try:
            theta = float(theta)
        except (TypeError, ValueError):
            raise InputError(f"theta {theta!r} is neither a number nor 'fit'") from None
    return None, family, theta


def resolve_anchor(name, m, parametric):
    if parametric is False and name == "e1_e2":
        raise InputError("anchor 'e1_e2' needs an estimated parameter (--family with --fit)")
    if parametric is False and name == "plateau":
        raise InputError("anchor 'plateau' needs an estimated parameter (--family with --fit)")
    anchor = AnchorPair.preset_for(name, m)
    return anchor.with_score_anchor() if parametric else anchor


# -- output --


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _provenance(command, config):
    return {
        "tool": "dfgof",
        "tool_version": __version__,
        "command": command,
        "seed": config.get("seed"),
        "config_hash": config_hash(config),
    }


def _cell(v):
    # repr keeps floats round-trippable; integers and labels are written as is
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(v)
    return repr(float(v))


def write_csv(path, header, rows, provenance):
    lines = ["# " + json.dumps(provenance, sort_keys=True), ",".join(header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _config(args, command):
    skip = {"func", "out"}
    return {"command": command, **{k: v for k, v in sorted(vars(args).items()) if k not in skip}}


# -- commands --


def _components(args):
    """Shared front half of ``transform`` and ``test``."""
    counts = read_counts(args.counts)
    m = counts.size
    info = {"m": m, "n": int(counts.sum())}
    if args.counts2 is not None:
        counts2 = read_counts(args.counts2)
        if counts2.size != m:
            raise InputError(f"--counts2 has {counts2.size} cells, --counts has {m}")
        if args.model is not None or args.family is not None:
            raise InputError("two-sample mode pools the samples; do not pass a model")
        anchor = resolve_anchor(args.anchor, m, False)
        y, pooled = two_sample_components(SampleCounts(counts), SampleCounts(counts2))
        z = transform_two_sample(y, pooled, anchor)
        info.update(mode="two_sample", n2=int(counts2.sum()), pooled=pooled.probs.tolist())
        return y, z, anchor, info, pooled
    model, family, theta = resolve_model(args, m)
    if family is not None and theta != "fit":
        model = DiscreteModel(family.probs(theta))
        info.update(family=family.name, theta=theta)
    if model is not None:
        anchor = resolve_anchor(args.anchor, m, False)
        y = components_y(SampleCounts(counts), model)
        z = transform_simple(y, model, anchor)
        info.setdefault("mode", "simple")
        info["probs"] = model.probs.tolist()
        return y, z, anchor, info, model
    anchor = resolve_anchor(args.anchor, m, True)
    try:
        fit = mle_fit(SampleCounts(counts), family, init=args.init)
    except NoConvergence as exc:
        raise NumericError(str(exc), exc.report) from None
    yhat = components_y_hat(SampleCounts(counts), family, fit.theta)
    bundle = parametric_bundle(family, fit.theta, anchor, args.basis)
    zhat = transform_parametric(yhat, bundle, anchor.preset)
    info.update(mode="parametric", family=family.name, fit=fit.as_dict(), basis=args.basis)
    return yhat, zhat, anchor, info, DiscreteModel(family.probs(fit.theta))


def cmd_transform(args):
    y, z, anchor, info, _ = _components(args)
    config = _config(args, "transform")
    prov = _provenance("transform", config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = ("yhat", "zhat") if info["mode"] == "parametric" else ("y", "z")
    rows = [(i + 1, a, b) for i, (a, b) in enumerate(zip(y.values, z.values))]
    write_csv(out / "components.csv", ("index",) + names, rows, prov)
    write_json(
        out / "components.json",
        {"provenance": prov, "config": config, "anchor": anchor.preset, **info},
    )
    return EXIT_OK


def _statistic(name, y, z):
    if name in ("ks_y", "cvm_y"):
        if y.kind != "raw_y":
            raise InputError(f"{name} is only available for a fixed (not fitted) model")
        return ks_stat(y) if name == "ks_y" else cvm_stat(y)
    if name == "ks_z":
        return ks_stat(z)
    if name == "cvm_z":
        return cvm_stat(z)
    return pearson_chi2(z)


def cmd_test(args):
    try:
        stat = canonical_name(args.stat)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if args.reps < 1000:
        raise InputError(f"--reps must be at least 1000 for p-values, got {args.reps}")
    y, z, anchor, info, model = _components(args)
    observed = _statistic(stat, y, z)
    if info["mode"] == "two_sample" and stat.endswith("_y"):
        raise InputError(f"{stat} is not supported in two-sample mode")
    table = null_table(
        stat, info["m"], anchor, B=args.reps, seed=args.seed,
        model=model if stat.endswith("_y") else None,
    )
    if stat == "pearson_chi2":
        # chi2 is computed on z, whose anchor provenance must match the table
        observed = StatisticValue(
            observed.name, observed.value, observed.m, observed.n, anchor.preset, anchor.hash, observed.model_hash
        )
    p = p_value(observed, table)
    config = _config(args, "test")
    prov = _provenance("test", config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "provenance": prov,
        "statistic": stat,
        "value": observed.value,
        "p_value": p,
        "m": info["m"],
        "n": info["n"],
        "anchor": anchor.preset,
        "seed": args.seed,
        "mode": info["mode"],
        "table": table.header(),
    }
    if "fit" in info:
        report["fit"] = info["fit"]
    write_json(out / "report.json", report)
    return EXIT_OK


def _study_config(args):
    stat = args.stat or "ks_z"
    try:
        stat = canonical_name(stat)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise InputError(f"unknown preset {args.preset!r}; expected one of {PRESETS}")
        if args.model:
            raise InputError("--preset and --model are mutually exclusive")
        default_b = 100 if args.preset == "smoke" else 10_000
        cfg = paper_fig1_config(seed=args.seed, B=args.reps or default_b, statistic=stat, n_jobs=args.jobs)
        if args.anchor not in (None, "diagonal"):
            cfg = StudyConfig(cfg.models, cfg.n, cfg.B, stat, args.anchor, cfg.seed, cfg.n_jobs, cfg.labels, cfg.recipes)
        if args.n is not None:
            cfg = StudyConfig(cfg.models, args.n, cfg.B, stat, cfg.anchor, cfg.seed, cfg.n_jobs, cfg.labels, cfg.recipes)
        return cfg
    if not args.model:
        raise InputError("simulate needs --preset or at least one --model")
    if args.n is None:
        raise InputError("--n is required with --model")
    models = [parse_probabilities(_load_json(text, "--model"), what=f"--model #{k + 1}") for k, text in enumerate(args.model)]
    if len({mod.m for mod in models}) != 1:
        raise InputError("all --model arrays must have the same length")
    anchor = args.anchor or "diagonal"
    if anchor not in ("diagonal", "e1"):
        raise InputError(f"simulate supports anchors 'diagonal' and 'e1', got {anchor!r}")
    try:
        return StudyConfig(tuple(models), args.n, args.reps or 10_000, stat, anchor, args.seed, args.jobs)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_simulate(args):
    cfg = _study_config(args)
    stats = simulate_statistics(cfg)
    cdfs = [EmpiricalCdf(row, label) for row, label in zip(stats, cfg.labels)]
    config = _config(args, "simulate")
    # the worker count never changes results, so it stays out of the hash
    config.pop("jobs", None)
    prov = _provenance("simulate", config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(label, v) for label, row in zip(cfg.labels, stats) for v in row]
    write_csv(out / "replicates.csv", ("model_id", "value"), rows, prov)
    for cdf in cdfs:
        x, f = cdf.curve()
        write_csv(out / f"cdf_{cdf.label}.csv", ("value", "cdf"), list(zip(x, f)), prov)
    dists = pairwise_distances(cdfs)
    max_d = max(dists.values()) if dists else 0.0
    summary = {
        "provenance": prov,
        "statistic": cfg.statistic,
        "m": cfg.m,
        "n": cfg.n,
        "B": cfg.B,
        "anchor": cfg.anchor,
        "seed": cfg.seed,
        "models": {label: mod.probs.tolist() for label, mod in zip(cfg.labels, cfg.models)},
        "pairwise_sup_distance": [{"a": a, "b": b, "distance": d} for (a, b), d in dists.items()],
        "max_distance": max_d,
        "closeness_threshold": CLOSENESS_THRESHOLD,
        "distribution_free_looking": bool(max_d <= CLOSENESS_THRESHOLD),
        "quantiles": {
            cdf.label: dict(zip(("q05", "q25", "q50", "q75", "q95"), np.quantile(cdf.values, [0.05, 0.25, 0.5, 0.75, 0.95]).tolist()))
            for cdf in cdfs
        },
    }
    write_json(out / "summary.json", summary)
    return EXIT_OK


def cmd_fit(args):
    counts = read_counts(args.counts)
    try:
        family = family_by_name(args.family, counts.size)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    try:
        fit = mle_fit(SampleCounts(counts), family, init=args.init, tol=args.tol)
    except NoConvergence as exc:
        raise NumericError(str(exc), exc.report) from None
    config = _config(args, "fit")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(
        out / "fit.json",
        {"provenance": _provenance("fit", config), "family": family.name, "m": counts.size, "n": int(counts.sum()), **fit.as_dict()},
    )
    return EXIT_OK


# -- argument parsing --


def _add_model_args(p):
    p.add_argument("--counts", required=True, help="CSV with header 'index,count'")
    p.add_argument("--counts2", help="second sample for the two-sample test")
    p.add_argument("--model", help="JSON array of probabilities, a family object, or a path to either")
    p.add_argument("--family", help="parametric family name (power_law)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--theta", type=float, help="fixed parameter value")
    group.add_argument("--fit", action="store_true", help="estimate the parameter by maximum likelihood")
    p.add_argument("--init", type=float, help="starting value for the fit")
    p.add_argument("--anchor", default="diagonal", choices=["diagonal", "e1", "e1_e2", "plateau"])
    p.add_argument("--basis", default="gram_schmidt", choices=["gram_schmidt", "symmetric", "householder"])
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfgof", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dfgof {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="write raw and rotated components")
    _add_model_args(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("test", help="statistic and Monte Carlo p-value")
    _add_model_args(p)
    p.add_argument("--stat", default="ks_z", choices=["ks_z", "ks_y", "cvm_z", "chi2"])
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="distribution-freeness study")
    p.add_argument("--preset", help="paper-fig1 or smoke")
    p.add_argument("--model", action="append", help="JSON array of probabilities (repeatable)")
    p.add_argument("--n", type=int, help="sample size")
    p.add_argument("--stat", choices=["ks_z", "ks_y", "cvm_z", "chi2"])
    p.add_argument("--anchor", choices=["diagonal", "e1"])
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jobs", type=int, default=1, help="worker threads; results do not depend on it")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="maximum-likelihood fit of a family")
    p.add_argument("--counts", required=True)
    p.add_argument("--family", default="power_law")
    p.add_argument("--init", type=float)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"dfgof: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"dfgof: numerical failure: {exc}", file=sys.stderr)
        if exc.report:
            print(json.dumps(exc.report, indent=2, sort_keys=True), file=sys.stderr)
        return EXIT_NUMERIC
    except DegenerateGeometry as exc:
        print(f"dfgof: numerical failure: {exc}", file=sys.stderr)
        print("dfgof: hint: the fitted model is nearly aligned with the anchors; try --anchor e1_e2", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, DegenerateScore, NoConvergence) as exc:
        print(f"dfgof: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DfgofError as exc:
        print(f"dfgof: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"dfgof: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"dfgof: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
