"""Command-line front end: fit, gof, simulate, experiment.

Every command writes machine-readable JSON artifacts plus a manifest
(flags, seeds, input digests, wall-clock) into the output directory, so
any run can be reproduced exactly.  Outputs are written atomically
(temporary file + rename).

Exit codes: 0 ok, 1 usage, 2 data error, 3 consistency error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, basis, dgp, fit as fitmod, gof as gofmod, sampling
from .core import ingest_events, write_events
from .errors import (ConvergenceError, DegenerateError, DgpError,
                     EvaluationError, RemgofError, SamplingError,
                     SingularError, UnsupportedError, ValidationError)

USAGE_EXIT = 1
DATA_EXIT = 2
CONSISTENCY_EXIT = 3
NUMERIC_EXIT = 4

_NUMERIC_ERRORS = (ConvergenceError, SingularError, DegenerateError,
                   OverflowError)
_DATA_ERRORS = (ValidationError, SamplingError, EvaluationError, DgpError,
                UnsupportedError)


class ConsistencyError(RemgofError):
    """Artifacts disagree (e.g. events digest does not match the fit)."""


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write_json(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _write_manifest(out_dir, command, args_dict, seeds, digests, started):
    manifest = {
        "command": command,
        "flags": {k: v for k, v in sorted(args_dict.items())
                  if not k.startswith("_") and not callable(v)},
        "seeds": seeds,
        "input_digests": digests,
        "artifact_version": {"remgof": __version__,
                             "scenarios": dgp.SCENARIO_VERSION},
        "wall_clock_seconds": round(time.monotonic() - started, 3),
    }
    _atomic_write_json(manifest, Path(out_dir) / "manifest.json")
    return manifest


def _load_exo(path, actors):
    """Dyadic covariate CSV: sender,receiver,<name>[,<name>...] rows.

    Matrices are indexed by the event registry's actor indices; rows
    naming actors absent from the registry are skipped (they can never
    be at risk).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        names = [c for c in reader.fieldnames if c not in ("sender", "receiver")]
        rows = list(reader)
    n = len(actors)
    tables = {name: np.zeros((n, n)) for name in names}
    for r in rows:
        if r["sender"] not in actors or r["receiver"] not in actors:
            continue
        s = actors.index_of(r["sender"])
        t = actors.index_of(r["receiver"])
        for name in names:
            tables[name][s, t] = float(r[name])
    return tables


def _terms_from_args(args):
    terms = []
    if getattr(args, "model", None):
        terms.extend(basis.parse_model_file(args.model))
    if getattr(args, "endo", None):
        taken = {t.name for t in terms}
        for token in args.endo.split(","):
            kind = token.strip()
            if not kind:
                continue
            name = kind.split(":")[0]
            if name in taken:
                name = kind.replace(":", "_")
            taken.add(name)
            terms.append(basis.TermSpec(name, "fle", source=f"endo:{kind}"))
    if not terms:
        raise ValidationError("no model terms: pass --model and/or --endo")
    return terms


def _serialize_layout(layout):
    out = []
    for term in layout.terms:
        entry = asdict(term.spec)
        entry["columns"] = int(term.width)
        entry["q_raw"] = int(term.q_raw)
        if term.knots is not None:
            entry["knots"] = [float(k) for k in term.knots]
        if term.transform is not None:
            entry["transform"] = [[float(x) for x in row]
                                  for row in term.transform]
        out.append(entry)
    return out


def _layout_from_serialized(entries, n_actors):
    resolved = []
    start = 0
    for entry in entries:
        spec = basis.TermSpec(
            name=entry["name"], effect=entry["effect"],
            source=entry["source"], q=entry["q"],
            b=entry["b"], level=entry["level"],
            covariate=entry["covariate"])
        knots = (np.asarray(entry["knots"]) if "knots" in entry else None)
        transform = (np.asarray(entry["transform"])
                     if "transform" in entry else None)
        rt = basis.ResolvedTerm(
            spec, start, entry["columns"], knots=knots, transform=transform,
            n_levels=n_actors if spec.effect == "re" else 0)
        resolved.append(rt)
        start += rt.width
    return basis.DesignLayout(tuple(resolved), n_actors)


# --------------------------------------------------------------------- #
# fit
# --------------------------------------------------------------------- #

def cmd_fit(args) -> int:
    started = time.monotonic()
    seq = ingest_events(args.events, jitter=args.jitter,
                        drop_self_loops=args.drop_self_loops,
                        drop_duplicates=args.drop_duplicates)
    exo = _load_exo(args.exo, seq.actors) if args.exo else None
    terms = _terms_from_args(args)
    if args.m != 2:
        raise UnsupportedError(
            "the fitting path requires --m 2; larger risk sets exist only "
            "on the generic likelihood evaluator")
    strata = None
    if args.stratified:
        if not (args.strata and exo and args.strata in exo):
            raise ValidationError(
                "--stratified needs --strata NAME naming a column of the "
                "--exo table (dyad stratum labels)")
        strata = np.asarray(exo[args.strata], dtype=int)
    grid = (np.logspace(-4, 6, args.grid_points)
            if args.grid_points else None)
    result, paired = fitmod.fit_model(seq, terms, seed=args.seed, m=args.m,
                                      stratified=args.stratified,
                                      strata=strata, exo=exo, grid=grid)
    out = Path(args.out)
    payload = {
        "kind": "remgof-fit",
        "gamma_hat": [float(g) for g in result.gamma_hat],
        "lambda_hat": {k: float(v) for k, v in result.lambda_hat.items()},
        "edf": {k: float(v) for k, v in result.edf.items()},
        "aic": float(result.aic),
        "log_likelihood": float(result.log_likelihood),
        "re_sigma": {k: float(v) for k, v in result.re_sigma().items()},
        "seed": int(args.seed),
        "m": int(args.m),
        "converged": bool(result.converged),
        "convergence_trace": result.trace,
        "events_digest": _sha256(args.events),
        "n_events": len(seq),
        "n_actors": seq.n_actors,
        "terms": _serialize_layout(result.layout),
        "index_sets": {k: [int(i) for i in v]
                       for k, v in result.index_sets.items()},
    }
    _atomic_write_json(payload, out)
    if args.export_controls:
        sampling.export_controls(paired.sets, args.export_controls)
    _write_manifest(out.parent, "fit", vars(args), {"seed": args.seed},
                    {"events": payload["events_digest"]}, started)
    return 0


def _reconstruct(fit_payload, seq, exo=None):
    """Rebuild the fitted state (design + result) from a fit artifact."""
    layout = _layout_from_serialized(fit_payload["terms"], seq.n_actors)
    terms = [t.spec for t in layout.terms]
    sets = sampling.sample_risk_sets(seq, m=fit_payload["m"],
                                     seed=fit_payload["seed"])
    paired = sampling.build_paired_design(seq, sets, terms, exo=exo,
                                          layout=layout,
                                          seed=fit_payload["seed"])
    gamma = np.asarray(fit_payload["gamma_hat"])
    lambdas = dict(fit_payload["lambda_hat"])
    blocks = [b.with_lambda(lambdas.get(b.name, 0.0))
              for b in layout.penalty_blocks()]
    ll, grad, info = fitmod.logistic_parts(gamma, paired.delta)
    index_sets = {t.name: t.indices for t in layout.terms}
    result = fitmod.FitResult(
        gamma_hat=gamma, lambda_hat=lambdas, observed_information=info,
        penalty_gradient_at_solution=basis.penalty_gradient(blocks, gamma),
        index_sets=index_sets,
        edf=dict(fit_payload["edf"]), aic=fit_payload["aic"],
        log_likelihood=ll, seed=fit_payload["seed"], converged=True,
        n_iter=0, trace=[], blocks=blocks, layout=layout)
    return paired, result


def cmd_gof(args) -> int:
    started = time.monotonic()
    with open(args.fit, "r", encoding="utf-8") as fh:
        fit_payload = json.load(fh)
    digest = _sha256(args.events)
    if digest != fit_payload["events_digest"]:
        raise ConsistencyError(
            "events file digest does not match the fit artifact")
    seq = ingest_events(args.events)
    exo = _load_exo(args.exo, seq.actors) if args.exo else None
    paired, result = _reconstruct(fit_payload, seq, exo=exo)
    term_names = ("all" if args.terms == "all"
                  else [t.strip() for t in args.terms.split(",") if t.strip()])
    report = gofmod.gof_report(result, paired, terms=term_names, B=args.B,
                               seed=args.seed)
    entries = []
    if report.omnibus is not None:
        entries.append(_result_json(report.omnibus))
    entries.extend(_result_json(r) for r in report.results)
    if args.aux:
        aux = gofmod.test_auxiliary(result, paired, args.aux, B=args.B,
                                    seed=args.seed + 1, seq=seq, exo=exo)
        entries.append(_result_json(aux))
    payload = {
        "kind": "remgof-gof",
        "fit_digest": _sha256(args.fit),
        "events_digest": digest,
        "B": int(args.B),
        "seed": int(args.seed),
        "tests": entries,
    }
    _atomic_write_json(payload, args.out)
    if args.trajectories:
        traj_dir = Path(args.trajectories)
        traj_dir.mkdir(parents=True, exist_ok=True)
        for res in report.results:
            if res.w_path is None:
                continue
            _write_trajectory(traj_dir / f"{res.term}.csv", res)
    _write_manifest(Path(args.out).parent, "gof", vars(args),
                    {"seed": args.seed},
                    {"events": digest, "fit": payload["fit_digest"]}, started)
    return 0


def _result_json(res):
    out = {
        "term": res.term,
        "statistic": float(res.statistic),
        "statistic_name": res.statistic_name,
        "p_value": float(res.p_value),
        "kind": res.kind,
    }
    if res.b_used is not None:
        out["B"] = int(res.b_used)
    if res.rank is not None:
        out["rank"] = int(res.rank)
    return out


def _write_trajectory(path, res):
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        q = res.w_path.shape[1]
        writer.writerow(["u"] + [f"w_{j + 1}" for j in range(q)])
        for i in range(res.w_path.shape[0]):
            writer.writerow([repr(float(res.u[i]))] +
                            [repr(float(v)) for v in res.w_path[i]])
    os.replace(tmp, path)


# --------------------------------------------------------------------- #
# simulate / experiment
# --------------------------------------------------------------------- #

def cmd_simulate(args) -> int:
    started = time.monotonic()
    scenario = dgp.get_scenario(args.scenario)
    size = args.n if scenario.axis == "n" else (args.actors or None)
    if scenario.axis == "n" and args.n is None:
        size = None
    spec = dgp.build_dgp(scenario, size, args.seed)
    if args.actors and scenario.axis == "n":
        spec.n_actors = args.actors
    seq = dgp.simulate_sequence(spec)
    tmp = str(args.out) + ".tmp"
    write_events(seq, tmp)
    os.replace(tmp, args.out)
    _write_manifest(Path(args.out).parent, "simulate", vars(args),
                    {"seed": args.seed}, {}, started)
    return 0


def cmd_experiment(args) -> int:
    started = time.monotonic()
    sizes = tuple(int(s) for s in args.sizes.split(","))
    grid = dgp.ExperimentGrid(
        scenario=args.scenario, variant=args.variant, sizes=sizes,
        replicates=args.reps, alpha=args.alpha, B=args.B, seed=args.seed)
    dgp.run_experiment(grid, args.out)
    _write_manifest(args.out, "experiment", vars(args),
                    {"seed": args.seed}, {}, started)
    return 0


# --------------------------------------------------------------------- #
# entry point
# --------------------------------------------------------------------- #

def build_parser() -> _Parser:
    parser = _Parser(prog="remgof", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model to an event log")
    p_fit.add_argument("--events", required=True)
    p_fit.add_argument("--model", help="model spec file")
    p_fit.add_argument("--endo", help="shorthand FLE terms, e.g. rec:time,rep:id")
    p_fit.add_argument("--exo", help="dyadic covariate CSV")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--m", type=int, default=2)
    p_fit.add_argument("--jitter", type=float, default=None)
    p_fit.add_argument("--drop-self-loops", action="store_true")
    p_fit.add_argument("--drop-duplicates", action="store_true")
    p_fit.add_argument("--stratified", action="store_true")
    p_fit.add_argument("--strata", help="exo column with dyad stratum labels")
    p_fit.add_argument("--grid-points", type=int, default=None)
    p_fit.add_argument("--export-controls")
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_gof = sub.add_parser("gof", help="goodness-of-fit tests for a fit")
    p_gof.add_argument("--fit", required=True)
    p_gof.add_argument("--events", required=True)
    p_gof.add_argument("--exo")
    p_gof.add_argument("--terms", default="all")
    p_gof.add_argument("--B", type=int, default=1000)
    p_gof.add_argument("--seed", type=int, default=0)
    p_gof.add_argument("--aux", help="auxiliary statistic source spec")
    p_gof.add_argument("--trajectories", help="directory for per-term CSVs")
    p_gof.add_argument("--out", required=True)
    p_gof.set_defaults(func=cmd_gof)

    p_sim = sub.add_parser("simulate", help="simulate one event sequence")
    p_sim.add_argument("--scenario", required=True)
    p_sim.add_argument("--n", type=int, default=None)
    p_sim.add_argument("--actors", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_exp = sub.add_parser("experiment", help="run a simulation grid")
    p_exp.add_argument("--scenario", required=True)
    p_exp.add_argument("--variant", default=None)
    p_exp.add_argument("--sizes", default="1000")
    p_exp.add_argument("--reps", type=int, default=200)
    p_exp.add_argument("--alpha", type=float, default=0.05)
    p_exp.add_argument("--B", type=int, default=1000)
    p_exp.add_argument("--seed", type=int, default=0)
    p_exp.add_argument("--out", required=True)
    p_exp.set_defaults(func=cmd_experiment)
    return parser


def _emit_error(exc) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    try:
        return args.func(args)
    except ConsistencyError as exc:
        _emit_error(exc)
        return CONSISTENCY_EXIT
    except _NUMERIC_ERRORS as exc:
        _emit_error(exc)
        return NUMERIC_EXIT
    except _DATA_ERRORS as exc:
        _emit_error(exc)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
