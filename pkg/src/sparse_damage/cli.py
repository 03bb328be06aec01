"""Command-line front end.

Element and vector indices are 1-based in everything this module prints or
reads. Exit codes: 0 success, 1 usage or validation error, 2 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ModelError, NumericalError
from .experiments import (
    DamageScenario,
    canonical_scenario,
    load_json,
    load_scenario,
    load_sweep,
    run_damage_study,
    run_monte_carlo,
)
from .fem_truss import load_model, model_to_dict
from .modal import model_modes
from .sensitivity import linearize
from .sparse_solvers import SparseProblem, solve
from .updating import METHODS, UpdateConfig, one_shot, run_update


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; 2 is reserved
        raise UsageError(f"{self.prog}: {message}")


def _csv(rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def read_frequencies(path: str | Path) -> np.ndarray:
    """Numbers separated by whitespace or commas; '#' starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc}") from exc
    tokens = [t for line in text.splitlines() for t in re.split(r"[\s,]+", line.split("#")[0]) if t]
    try:
        f = np.array([float(t) for t in tokens])
    except ValueError as exc:
        raise ModelError(f"{path}: {exc}") from exc
    if f.size == 0 or not np.all(np.isfinite(f)) or np.any(f <= 0):
        raise ModelError(f"{path}: expected positive finite frequencies")
    if np.any(np.diff(f) < 0):
        raise ModelError(f"{path}: frequencies must be ascending")
    return f


def _problem_from_dict(doc: Any) -> SparseProblem:
    try:
        return SparseProblem(np.array(doc["A"], dtype=float), np.array(doc["b"], dtype=float),
                             doc.get("epsilon"), doc.get("sign_constraint", "none"))
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"malformed problem file: {exc}") from exc


def _cmd_model(args) -> str:
    model = load_model(args.model)
    if args.format == "json":
        doc = model_to_dict(model)
        doc["summary"] = {"n_nodes": len(model.nodes), "n_elements": model.n_elements,
                          "n_dof": model.n_dof, "n_constrained": model.n_constrained}
        return _json(doc)
    rows: list[Sequence[Any]] = [("element", "node_i", "node_j", "length", "E", "A", "rho")]
    for e, L in zip(model.elements, model.lengths):
        rows.append((e.id + 1, e.node_i, e.node_j, float(L), e.elastic_modulus, e.area, e.density))
    return _csv(rows)


def _cmd_modal(args) -> str:
    model = load_model(args.model)
    modal = model_modes(model, None, args.count)
    f = modal.frequencies
    if args.format == "json":
        doc: dict[str, Any] = {"frequencies_hz": f.tolist(), "eigenvalues": modal.eigenvalues.tolist()}
        if args.modes:
            doc["mode_shapes"] = modal.mode_shapes.T.tolist()
        return _json(doc)
    return _csv([("mode", "frequency_hz")] + [(j + 1, float(v)) for j, v in enumerate(f)])


def _cmd_solve(args) -> str:
    problem = _problem_from_dict(load_json(args.problem))
    if args.epsilon is not None:
        problem = replace(problem, epsilon=args.epsilon)
    if args.method == "l1_ineq" and problem.epsilon is None:
        raise ModelError("l1_ineq needs epsilon (in the problem file or --epsilon)")
    sol = solve(problem, args.method, args.p) if args.method == "lp_irls" else solve(problem, args.method)
    if args.format == "json":
        return _json({"method": sol.method, "x": sol.x.tolist(), "objective": sol.objective,
                      "support": sorted(i + 1 for i in sol.support), "iterations": sol.iterations,
                      "converged": sol.converged, "residual_norm": sol.residual_norm,
                      "residual_bound": sol.residual_bound})
    return _csv([("index", "x")] + [(i + 1, float(v)) for i, v in enumerate(sol.x)])


def _update_config(args) -> UpdateConfig:
    return UpdateConfig(method=args.method, m=args.m, epsilon=args.epsilon,
                        noise_assumed=args.noise_assumed, p=args.p,
                        max_iterations=args.max_iterations, sign_constraint=args.sign_constraint)


def _cmd_identify(args) -> str:
    model = load_model(args.model)
    f_meas = read_frequencies(args.measured)
    config = _update_config(args)
    if args.method == "l1_ineq" and config.epsilon is None and config.noise_assumed is None:
        raise ModelError("l1_ineq needs --epsilon or --noise-assumed")
    if args.dump_system:
        system, _ = linearize(model, None, f_meas, config.m)
        Path(args.dump_system).write_text(_json({
            "A": system.jacobian.tolist(), "b": system.residual.tolist(),
            "epsilon": config.residual_bound() if args.method == "l1_ineq" else None,
            "sign_constraint": config.sign_constraint}))
    result = one_shot(model, f_meas, config) if args.one_shot else run_update(model, f_meas, config)
    if args.format == "json":
        return _json({
            "method": args.method, "m": config.m, "converged": result.converged,
            "iterations": [{"iteration": r.iteration, "damage": r.damage.tolist(),
                            "support": sorted(e + 1 for e in r.support),
                            "residual_before": r.residual_before, "residual_after": r.residual_after}
                           for r in result.per_iteration],
            "final_damage": result.damage_estimates.tolist(),
            "final_support": sorted(e + 1 for e in result.final_support),
            "support_changed_after_first": result.support_changed_after_first,
        })
    rows: list[Sequence[Any]] = [("iteration", "element", "damage_estimate")]
    for rec in result.per_iteration:
        rows += [(rec.iteration, e + 1, float(d)) for e, d in enumerate(rec.damage)]
    rows += [("final", e + 1, float(d)) for e, d in enumerate(result.damage_estimates)]
    return _csv(rows)


def _cmd_mc(args) -> str:
    model = load_model(args.model)
    config = load_sweep(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.realizations is not None:
        config = replace(config, realizations=args.realizations)
    report = run_monte_carlo(model, config, workers=args.workers)
    if not args.quiet:
        print(f"mc: {len(report.cells)} cells in {report.runtime_s:.1f} s", file=sys.stderr)
    return report.to_json() if args.format == "json" else report.to_csv()


def _cmd_study(args) -> str:
    model = load_model(args.model)
    scenario: DamageScenario = (load_scenario(args.scenario) if args.scenario
                                else canonical_scenario(args.severity))
    study = run_damage_study(model, scenario, args.m, args.method, args.max_iterations)
    return _json(study.to_dict()) if args.format == "json" else study.to_csv()


def build_parser() -> argparse.ArgumentParser:
    def global_flags(p, default):
        # defaults only on the top-level parser so flags may go before or after the command
        d = (lambda v: v) if default else (lambda v: argparse.SUPPRESS)
        p.add_argument("--output", default=d(None), help="write to this file instead of stdout")
        p.add_argument("--format", choices=("csv", "json"), default=d("csv"))
        p.add_argument("--seed", type=int, default=d(None), help="unsigned 64-bit seed for all randomness")
        p.add_argument("--quiet", action="store_true", default=d(False), help="suppress progress on stderr")

    common = _Parser(add_help=False)
    global_flags(common, default=False)
    parser = _Parser(prog="sparse-damage", description=__doc__.splitlines()[0])
    global_flags(parser, default=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_arg(p):
        p.add_argument("--model", default="canonical", help="model JSON file or 'canonical'")

    def method_args(p, default="l1_eq"):
        p.add_argument("--method", choices=METHODS, default=default)
        p.add_argument("--p", type=float, default=0.5, help="exponent for lp_irls")

    p = sub.add_parser("model", parents=[common], help="validate and show a model")
    model_arg(p)

    p = sub.add_parser("modal", parents=[common], help="natural frequencies")
    model_arg(p)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--modes", action="store_true", help="include mode shapes (json)")

    p = sub.add_parser("solve", parents=[common], help="solve a sparse problem file")
    p.add_argument("--problem", required=True, help="JSON with A, b, epsilon, sign_constraint")
    method_args(p)
    p.add_argument("--epsilon", type=float)

    p = sub.add_parser("identify", parents=[common], help="damage from measured frequencies")
    model_arg(p)
    p.add_argument("--measured", required=True, help="ascending frequencies in Hz")
    method_args(p)
    p.add_argument("--m", type=int, default=9, help="number of frequencies used")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--noise-assumed", type=float, help="noise level in percent (l1_ineq bound)")
    p.add_argument("--max-iterations", type=int, default=20)
    p.add_argument("--sign-constraint", choices=("none", "nonpositive"), default="none")
    p.add_argument("--one-shot", action="store_true", help="single linearization")
    p.add_argument("--dump-system", metavar="PATH", help="write the nominal (A, b) as a problem file")

    p = sub.add_parser("mc", parents=[common], help="Monte Carlo success-rate sweep")
    model_arg(p)
    p.add_argument("--config", required=True, help="sweep config JSON")
    p.add_argument("--realizations", type=int)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("study", parents=[common], help="per-iteration damage for exact data")
    model_arg(p)
    p.add_argument("--scenario", help="scenario JSON (default: canonical two-bar)")
    p.add_argument("--severity", type=float, default=0.2)
    p.add_argument("--m", type=int, default=9)
    method_args(p)
    p.add_argument("--max-iterations", type=int, default=20)
    return parser


COMMANDS = {"model": _cmd_model, "modal": _cmd_modal, "solve": _cmd_solve,
            "identify": _cmd_identify, "mc": _cmd_mc, "study": _cmd_study}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        text = COMMANDS[args.command](args)
        if args.output:
            Path(args.output).write_text(text, newline="")
        else:
            sys.stdout.write(text)
        return 0
    except (UsageError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
