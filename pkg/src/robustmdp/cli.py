"""Batch command-line front door.

One command per process: read an instance (or parameter) document, run the
named operation, write a machine-readable report. Reports embed the input
digest and the effective tolerance set and are byte-identical for identical
(input, seed) pairs. Exit statuses: 0 success, 2 validation violations,
3 refused enumeration, 4 schema/usage errors.
"""

import argparse
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import apps, bounds, game, risk, schema, solver
from .model import validate
from .solver import (
    EnumerationCapError,
    ModelValidationError,
    check_value_monotone,
    env_worker_count,
    result_rows,
    result_to_dict,
)

EXIT_OK = 0
EXIT_VIOLATIONS = 2
EXIT_REFUSED = 3
EXIT_SCHEMA = 4

COMMANDS = (
    "validate",
    "solve",
    "solve-nature-first",
    "evaluate",
    "oracle",
    "gap",
    "bounds",
    "risk",
    "counterexample",
    "lq",
    "energy",
)

DEFAULT_TOLERANCES = {
    "tie": solver.TIE_TOL,
    "probability": 1e-12,
    "mean_equality": 1e-10,
    "stop_loss": 1e-10,
    "envelope": bounds.ENVELOPE_TOL,
    "monotone": solver.MONOTONE_TOL,
    "saddle": 1e-6,
}


@dataclass
class RunConfig:
    command: str
    input_path: str
    output_path: str = None
    fmt: str = "json"
    seed: int = 0
    cap: int = solver.DEFAULT_ENUMERATION_CAP
    tolerances: dict = field(default_factory=dict)


def run(config: RunConfig) -> int:
    """Dispatch one command and write its report; returns the exit status."""
    try:
        raw = open(config.input_path, "rb").read()
    except OSError as exc:
        _emit_error("io", EXIT_SCHEMA, str(exc))
        return EXIT_SCHEMA
    digest = schema.digest_bytes(raw)
    tolerances = dict(DEFAULT_TOLERANCES)
    tolerances.update(config.tolerances)
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        _emit_error("json", EXIT_SCHEMA, str(exc))
        return EXIT_SCHEMA

    try:
        status, payload, rows = _dispatch(config, doc, tolerances)
    except ModelValidationError as exc:
        report = _envelope(config, digest, tolerances)
        report["result"] = {"violations": [str(v) for v in exc.violations]}
        _write(config, report, None)
        _emit_error("validation", EXIT_VIOLATIONS, str(exc))
        return EXIT_VIOLATIONS
    except (EnumerationCapError, risk.SpectralExpansionError) as exc:
        _emit_error("refused", EXIT_REFUSED, str(exc))
        return EXIT_REFUSED
    except (schema.SchemaError, ValueError, KeyError, TypeError) as exc:
        _emit_error("schema", EXIT_SCHEMA, str(exc))
        return EXIT_SCHEMA

    report = _envelope(config, digest, tolerances)
    report["result"] = payload
    try:
        _write(config, report, rows)
    except schema.SchemaError as exc:
        _emit_error("format", EXIT_SCHEMA, str(exc))
        return EXIT_SCHEMA
    return status


def _envelope(config, digest, tolerances):
    return {
        "command": config.command,
        "instance_digest": digest,
        "seed": config.seed,
        "tolerances": tolerances,
    }


def _dispatch(config, doc, tolerances):
    cmd = config.command
    if cmd == "counterexample":
        return _cmd_counterexample(doc, tolerances)
    if cmd == "lq":
        params = schema.load_lq_params(doc)
        sol = apps.lq_solve_closed_form(params)
        payload = {
            "k": list(sol.k),
            "gains": list(sol.gains),
            "const": list(sol.const),
            "theta": [t.__dict__ for t in sol.theta],
        }
        rows = [
            (
                n,
                sol.k[n],
                sol.gains[n] if n < params.horizon else "",
                sol.const[n],
                _theta_str(sol.theta[n]) if n < params.horizon else "",
            )
            for n in range(params.horizon + 1)
        ]
        return EXIT_OK, payload, ("lq", rows)
    if cmd == "energy":
        params = schema.load_energy_params(doc)
        model = apps.energy_build(params)
        result = solver.solve_robust(model)
        payload = result_to_dict(result)
        payload["monotone_decreasing"] = check_value_monotone(result, solver.DECREASING)
        return EXIT_OK, payload, ("solver", result_rows(result))

    model = schema.load_instance(doc)
    if cmd == "validate":
        violations = validate(model)
        status = EXIT_OK if not violations else EXIT_VIOLATIONS
        return status, {"violations": [str(v) for v in violations]}, None
    if cmd == "solve":
        result = solver.solve_robust(model)
        return EXIT_OK, result_to_dict(result), ("solver", result_rows(result))
    if cmd == "solve-nature-first":
        result = solver.solve_nature_first(model)
        return EXIT_OK, result_to_dict(result), ("solver", result_rows(result))
    if cmd == "risk":
        result = risk.solve_risk_form(model)
        return EXIT_OK, result_to_dict(result), ("solver", result_rows(result))
    if cmd == "evaluate":
        controller, nature = schema.load_policies(doc)
        if controller is None:
            raise schema.SchemaError("evaluate needs a policies.controller table")
        if nature is None:
            values = solver.evaluate_robust_policy(model, controller)
        else:
            values = solver.evaluate_pair(model, controller, nature)
        rows = []
        for n in range(model.horizon + 1):
            for s in range(len(model.states)):
                action = controller[n][s] if n < model.horizon else ""
                gen = ""
                if nature is not None and n < model.horizon:
                    gen = nature[n][s][controller[n][s]]
                rows.append((n, s, float(values[n][s]), action, gen))
        return EXIT_OK, {"values": values.tolist()}, ("solver", rows)
    if cmd == "oracle":
        values, (controller, nature) = solver.oracle_min_max(
            model, cap=config.cap, workers=env_worker_count()
        )
        payload = {
            "values": [float(v) for v in values],
            "controller": [list(r) for r in controller],
            "nature": [[list(e) for e in row] for row in nature],
        }
        return EXIT_OK, payload, None
    if cmd == "gap":
        table = game.gap(model)
        payload = {
            "gap": table.tolist(),
            "min": float(table.min()),
            "max": float(table.max()),
        }
        return EXIT_OK, payload, None
    if cmd == "bounds":
        if "bounding" not in doc:
            raise schema.SchemaError("bounds needs a 'bounding' block")
        data = schema.load_bounding(doc["bounding"], model)
        violations = bounds.check_bounding(model, data)
        payload = {
            "violations": [str(v) for v in violations],
            "notes": bounds.auto_satisfied_notes(),
        }
        if violations:
            return EXIT_VIOLATIONS, payload, None
        values = solver.solve_robust(model).values
        payload["envelope_ok"] = bounds.check_envelope(
            model, data, values, tol=tolerances["envelope"]
        )
        return EXIT_OK, payload, None
    raise schema.SchemaError(f"unknown command {config.command!r}")


def _cmd_counterexample(doc, tolerances):
    step = float(doc.get("grid_step", 0.5))
    static_game, mdp = game.build_counterexample(step)
    up, a_star = game.upper_value(static_game)
    lo, p_star = game.lower_value(static_game)
    saddle = game.saddle_search(static_game, tolerances["saddle"])
    result = solver.solve_robust(mdp)
    payload = {
        "upper": up,
        "lower": lo,
        "gap": up - lo,
        "saddle": list(saddle) if saddle is not None else None,
        "witnesses": {"controller_action": a_star, "nature_parameter": p_star},
        "instance_stage0_values": [float(v) for v in result.values[0]],
    }
    return EXIT_OK, payload, None


def _theta_str(theta):
    return (
        f"mu_u={theta.mu_u!r};sigma_u={theta.sigma_u!r};mu_v={theta.mu_v!r};"
        f"sigma_v={theta.sigma_v!r};sigma_uv={theta.sigma_uv!r};w2={theta.w2!r}"
    )


def _write(config, report, rows):
    if config.fmt == "json":
        text = schema.canonical_json(report) + "\n"
    elif config.fmt == "csv":
        if rows is None:
            raise schema.SchemaError(
                f"command {config.command!r} has no CSV form; use --format json"
            )
        kind, data = rows
        header = "n,state,J,action,generator" if kind == "solver" else "n,K,L,const,theta_star"
        lines = [
            f"# digest={report['instance_digest']}",
            f"# tolerances={schema.canonical_json(report['tolerances'])}",
            header,
        ]
        for row in data:
            lines.append(",".join("" if v == "" else repr(v) if isinstance(v, float) else str(v) for v in row))
        text = "\n".join(lines) + "\n"
    else:
        raise schema.SchemaError(f"unknown format {config.fmt!r}")
    if config.output_path:
        with open(config.output_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_error(code, exit_status, detail):
    sys.stderr.write(
        schema.canonical_json({"error": {"code": code, "exit": exit_status, "detail": detail}})
        + "\n"
    )


def _parse_tol(pairs):
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise schema.SchemaError(f"--tol expects name=value, got {pair!r}")
        name, value = pair.split("=", 1)
        out[name] = float(value)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="robustmdp",
        description="Finite-horizon distributionally robust decision problems: "
        "solvers, diagnostics and application builders.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--input", required=True, help="instance or parameter JSON file")
    parser.add_argument("--output", default=None, help="report file (default: stdout)")
    parser.add_argument("--format", default="json", choices=("json", "csv"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--cap", type=int, default=solver.DEFAULT_ENUMERATION_CAP)
    parser.add_argument("--tol", action="append", metavar="NAME=VALUE")
    args = parser.parse_args(argv)
    try:
        tolerances = _parse_tol(args.tol)
    except schema.SchemaError as exc:
        _emit_error("usage", EXIT_SCHEMA, str(exc))
        return EXIT_SCHEMA
    config = RunConfig(
        command=args.command,
        input_path=args.input,
        output_path=args.output,
        fmt=args.format,
        seed=args.seed,
        cap=args.cap,
        tolerances=tolerances,
    )
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
