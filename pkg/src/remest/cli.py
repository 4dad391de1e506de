"""Command-line front end: JSON configs and the synthesize/simulate/sweep/check commands.

Configuration document (JSON)::

    {
      "problem": {"N": 100, "A": 0.9, "C": 1.0, "W": 3.0, "V": 1.0, "m0": 0.0, "M0": 1.0},
      "channel": {"lambda": 0.1, "rho": 0.3},
      "cost":    {"alpha": 1.0},
      "grid":    {"e_max": null, "r_max": null, "d1": 201, "d2": 101, "d0": 15,
                  "quadrature": "exact"},
      "run":     {"episodes": 10000, "seed": 0, "out": null, "workers": null,
                  "chunk": 20000, "policy": "threshold", "baseline": {}}
    }

Matrices (A, C, W, V, M0) are a scalar (1x1), a nested list (time-invariant)
or a list of N+1 nested lists (one per step); m0 is a scalar or a list.
``channel.lambda``, ``channel.rho`` and ``cost.alpha`` may be lists; ``sweep``
runs their product, the other commands need a single value each.
``cost.schedule`` optionally gives a per-step alpha (length N+1) instead.
A null ``e_max``/``r_max`` uses 5*sqrt(max M) and 2*max M from the filter.
``run.policy`` is ``threshold`` or a baseline name (always, never, periodic,
bernoulli, one_sided) whose keyword arguments come from ``run.baseline``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
Errors are reported on stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import harness
from .encoder import precompute_gains
from .model import ChannelParams, CostParams, Problem, ProblemError, SourceParams, validate_problem
from .policy import (
    QUADRATURES,
    PolicyFileError,
    PolicyGrid,
    clamp_statistics,
    default_grid,
    dp_synthesize,
    load_policy,
    save_policy,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    """Invalid or inconsistent configuration; maps to exit code 2."""


_number = {"type": "number"}
_numbers = {"oneOf": [_number, {"type": "array", "items": _number, "minItems": 1}]}
_rate_list = {"oneOf": [_number, {"type": "array", "items": _number}]}
_tensor = {"oneOf": [_number, {"type": "array"}]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["problem", "channel", "cost"],
    "properties": {
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["N", "A", "C", "W", "V", "m0", "M0"],
            "properties": {
                "N": {"type": "integer", "minimum": 1},
                "A": _tensor, "C": _tensor, "W": _tensor, "V": _tensor, "m0": _tensor, "M0": _tensor,
            },
        },
        "channel": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lambda", "rho"],
            "properties": {"lambda": _rate_list, "rho": _rate_list},
        },
        "cost": {
            "type": "object",
            "additionalProperties": False,
            "required": ["alpha"],
            "properties": {"alpha": _rate_list, "schedule": {"type": "array", "items": _number}},
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "e_max": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "r_max": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "d1": {"type": "integer", "minimum": 3},
                "d2": {"type": "integer", "minimum": 3},
                "d0": {"type": "integer", "minimum": 1},
                "quadrature": {"enum": list(QUADRATURES)},
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "episodes": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "out": {"type": ["string", "null"]},
                "workers": {"type": ["integer", "null"], "minimum": 1},
                "chunk": {"type": "integer", "minimum": 1},
                "policy": {"type": "string"},
                "baseline": {"type": "object"},
            },
        },
    },
}

DEFAULTS = {
    "grid": {"e_max": None, "r_max": None, "d1": 201, "d2": 101, "d0": 15, "quadrature": "exact"},
    "run": {"episodes": 10000, "seed": 0, "out": None, "workers": None, "chunk": 20000,
            "policy": "threshold", "baseline": {}},
}


def _reject_constant(name):
    raise ConfigError(f"non-finite number {name} in config")


def parse_config(text: str) -> dict:
    """Parse, schema-check and fill defaults; the result is plain JSON data."""
    try:
        raw = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(["config", *(str(p) for p in exc.absolute_path)])
        raise ConfigError(f"{where}: {exc.message}") from None
    cfg = copy.deepcopy(raw)
    for block, defaults in DEFAULTS.items():
        cfg[block] = {**defaults, **cfg.get(block, {})}
    return cfg


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def _as_list(value) -> list:
    return list(value) if isinstance(value, list) else [value]


def _per_step(name: str, value, steps: int, ndim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape((1,) * ndim)
    if arr.ndim == ndim:
        return np.broadcast_to(arr, (steps,) + arr.shape).copy()
    if arr.ndim == ndim + 1 and arr.shape[0] == steps:
        return arr
    raise ConfigError(f"config.problem.{name}: expected a scalar, a {ndim}-d array or {steps} of them")


def build_source(block: dict) -> SourceParams:
    N = int(block["N"])
    steps = N + 1
    try:
        mats = {k: _per_step(k, block[k], steps, 2) for k in ("A", "C", "W", "V")}
        m0 = np.atleast_1d(np.asarray(block["m0"], dtype=float))
        M0 = np.asarray(block["M0"], dtype=float)
    except ValueError as exc:  # ragged lists
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"config.problem: {exc}") from None
    if M0.ndim == 0:
        M0 = M0.reshape(1, 1)
    return SourceParams(N, mats["A"], mats["C"], mats["W"], mats["V"], m0, M0)


def _single(cfg: dict, block: str, key: str) -> float:
    values = _as_list(cfg[block][key])
    if len(values) != 1:
        raise ConfigError(f"config.{block}.{key}: this command needs a single value, got {len(values)}")
    return float(values[0])


def build_problem(cfg: dict, lam: float, rho: float, alpha: float | None = None) -> Problem:
    source = build_source(cfg["problem"])
    schedule = cfg["cost"].get("schedule")
    if schedule is not None and alpha is None:
        cost = CostParams(np.asarray(schedule, dtype=float))
    else:
        a = _single(cfg, "cost", "alpha") if alpha is None else alpha
        cost = CostParams.constant(a, source.N)
    return validate_problem(source, ChannelParams(lam, rho), cost)


def problem_from_config(cfg: dict) -> Problem:
    return build_problem(cfg, _single(cfg, "channel", "lambda"), _single(cfg, "channel", "rho"))


def grid_from_config(cfg: dict, problem: Problem, gains=None) -> PolicyGrid:
    g = cfg["grid"]
    base = default_grid(problem, g["d1"], g["d2"], g["d0"], g["quadrature"], gains=gains)
    e_max = base.e_max if g["e_max"] is None else float(g["e_max"])
    r_max = base.r_max if g["r_max"] is None else float(g["r_max"])
    try:
        return PolicyGrid(e_max, r_max, g["d1"], g["d2"], g["d0"], g["quadrature"])
    except ValueError as exc:
        raise ConfigError(f"config.grid: {exc}") from None


def _workers(cfg: dict, args) -> int:
    if args.threads is not None:
        return args.threads
    return cfg["run"]["workers"] or os.cpu_count() or 1


def _apply_overrides(cfg: dict, args) -> dict:
    run = cfg["run"]
    if getattr(args, "episodes", None) is not None:
        run["episodes"] = args.episodes
    if getattr(args, "seed", None) is not None:
        run["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        run["out"] = args.out
    return cfg


def _out_path(cfg: dict, what: str) -> Path:
    out = cfg["run"]["out"]
    if not out:
        raise ConfigError(f"no output path for {what}: pass --out or set config.run.out")
    return Path(out)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


# --------------------------------------------------------------------------
# commands


def cmd_print_config(cfg: dict, args) -> int:
    print(json.dumps(cfg, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_synthesize(cfg: dict, args) -> int:
    problem = problem_from_config(cfg)
    out = _out_path(cfg, "the policy file")
    t0 = time.perf_counter()
    gains = precompute_gains(problem)
    grid = grid_from_config(cfg, problem, gains)
    table = dp_synthesize(problem, grid, gains)
    save_policy(table, out)
    wall = time.perf_counter() - t0
    stats = clamp_statistics(problem, grid, gains)
    v00, _ = table.value_at(0, 0.0, 0.0)
    print(f"policy written to {out}")
    print(f"V[0](0,0) = {float(v00):.10g}")
    print(f"grid: d1={grid.d1} d2={grid.d2} d0={grid.d0} e_max={grid.e_max:.6g} r_max={grid.r_max:.6g} "
          f"quadrature={grid.quadrature}")
    print(f"clamped successor queries: e {stats['e_clamped']}/{stats['queries']}, "
          f"r {stats['r_clamped']}/{stats['queries']}")
    print(f"wall time {wall:.2f} s")
    return EXIT_OK


def _simulation_policy(cfg: dict, args, problem: Problem, gains):
    if args.policy:
        table = load_policy(args.policy, problem)
        return harness.ThresholdPolicy.for_problem(table, problem)
    name = cfg["run"]["policy"]
    if name == "threshold":
        table = dp_synthesize(problem, grid_from_config(cfg, problem, gains), gains)
        return harness.ThresholdPolicy.for_problem(table, problem)
    try:
        return harness.make_baseline(name, **cfg["run"]["baseline"])
    except TypeError as exc:
        raise ConfigError(f"config.run.baseline: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"config.run.policy: {exc}") from None


def cmd_simulate(cfg: dict, args) -> int:
    problem = problem_from_config(cfg)
    gains = precompute_gains(problem)
    policy = _simulation_policy(cfg, args, problem, gains)
    out = _out_path(cfg, "the CSV")
    run = cfg["run"]
    summary = harness.monte_carlo(problem, gains, policy, run["seed"], run["episodes"], chunk=run["chunk"])
    point = harness.tradeoff_point(problem, summary, run["seed"], policy.kind)
    harness.write_csv([point], out)
    psi = harness.psi_consistency(summary, gains)
    resid = harness.residual_diagnostic(summary)
    diag = {
        "policy_kind": policy.kind,
        "episodes": summary.episodes,
        "seed": run["seed"],
        "phi": psi.phi, "phi_se": psi.phi_se,
        "psi": psi.psi, "psi_se": psi.psi_se,
        "trace_q": psi.trace_q,
        "psi_gap": psi.gap, "psi_z": psi.z, "psi_z_combined": psi.z_combined,
        "psi_consistent": psi.consistent,
        "residual_max_abs_z": resid.max_abs_z,
        "residual_worst_bucket": {"k": resid.worst[0], "staleness": resid.worst[1], "delta": resid.worst[2]},
        "residual_buckets_tested": resid.buckets_tested,
        "residual_buckets_skipped": resid.buckets_skipped,
        "residual_flagged": resid.flagged,
        "clamp_count": int(summary.clamps.sum()),
    }
    diag_path = _sibling(out, ".diagnostics.json")
    _write_json(diag_path, diag)
    print(f"{policy.kind}: packet_rate={point.packet_rate:.6g} mse={point.mse:.6g} phi={point.phi:.6g}"
          f"±{point.phi_se:.3g}")
    print(f"psi z={psi.z:.3f} residual max|z|={resid.max_abs_z:.3f} clamps={diag['clamp_count']}")
    print(f"wrote {out} and {diag_path}")
    return EXIT_OK


def cmd_sweep(cfg: dict, args) -> int:
    lams = [float(x) for x in _as_list(cfg["channel"]["lambda"])]
    rhos = [float(x) for x in _as_list(cfg["channel"]["rho"])]
    alphas = [float(x) for x in _as_list(cfg["cost"]["alpha"])]
    if not alphas:
        raise ConfigError("config.cost.alpha: the sweep needs a nonempty alpha list")
    if not lams or not rhos:
        raise ConfigError("config.channel: the sweep needs nonempty lambda and rho lists")
    out = _out_path(cfg, "the sweep CSV")
    base = build_problem(cfg, lams[0], rhos[0], alphas[0])
    grid = grid_from_config(cfg, base)  # filter covariances do not depend on the channel
    # Each channel is validated up front so bad rates fail before any work.
    for lam in lams:
        for rho in rhos:
            build_problem(cfg, lam, rho, alphas[0])
    run = cfg["run"]
    channels = [(lam, rho) for lam in lams for rho in rhos]
    points = harness.sweep_tradeoff(base, channels, alphas, run["episodes"], run["seed"], grid=grid,
                                    workers=_workers(cfg, args), chunk=run["chunk"])
    harness.write_csv(points, out)
    comparisons = harness.dominance_summary(points)
    report = [
        {"lambda": c.better[0], "rho_better": c.better[1], "rho_worse": c.worse[1],
         "z_max": c.z_max, "max_diff": float(np.max(c.diff)), "holds": c.holds}
        for c in comparisons
    ]
    summary_path = _sibling(out, ".dominance.json")
    _write_json(summary_path, {"comparisons": report, "all_hold": all(r["holds"] for r in report)})
    for r in report:
        tag = "PASS" if r["holds"] else "FAIL"
        print(f"{tag} lambda={r['lambda']:g}: rho={r['rho_better']:g} <= rho={r['rho_worse']:g} "
              f"(max z {r['z_max']:.2f})")
    print(f"wrote {len(points)} rows to {out} and {summary_path}")
    return EXIT_OK


def cmd_check(cfg: dict | None, args) -> int:
    from .checks import run_checks

    results = run_checks()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERIC


COMMANDS = {
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "check": cmd_check,
    "print-config": cmd_print_config,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="remest",
        description="Threshold scheduling over lossy links with unreliable acknowledgments.",
        epilog=__doc__.split("\n", 2)[2],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "synthesize": "tabulate the value function and threshold statistic; write a policy file",
        "simulate": "Monte Carlo one policy (file, synthesized or baseline); write CSV + diagnostics JSON",
        "sweep": "synthesize and simulate every (lambda, rho, alpha); write CSV + dominance summary",
        "check": "run the invariant suite on a tiny problem",
        "print-config": "echo the validated config with defaults filled in",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        if name != "check":
            p.add_argument("--config", required=True, metavar="PATH", help="JSON configuration document")
        p.add_argument("--policy", metavar="PATH", help="policy file (simulate)")
        p.add_argument("--out", metavar="PATH", help="output path (overrides run.out)")
        p.add_argument("--episodes", type=int, metavar="K", help="episode count (overrides run.episodes)")
        p.add_argument("--seed", type=int, metavar="S", help="master seed (overrides run.seed)")
        p.add_argument("--threads", type=int, metavar="T", help="worker processes (overrides run.workers)")
    return parser


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "exit_code": code, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        cfg = None
        if args.command != "check":
            cfg = _apply_overrides(load_config(args.config), args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except ProblemError as exc:
        return _fail(EXIT_CONFIG, "problem", "; ".join(exc.issues))
    except harness.PolicyMismatch as exc:
        return _fail(EXIT_CONFIG, "policy_mismatch", str(exc))
    except (FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        return _fail(EXIT_NUMERIC, "numerical", str(exc))
    except (PolicyFileError, OSError) as exc:
        return _fail(EXIT_IO, "io", str(exc))
    except ValueError as exc:
        return _fail(EXIT_CONFIG, "value", str(exc))


if __name__ == "__main__":
    sys.exit(main())
