"""``affine-mart`` command line: load a spec file, run one analysis, report.

Exit codes: 0 Holds/success, 1 Fails, 2 Inconclusive, 3 usage or parse error.
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from .conservativeness import conservativeness_verdict, survival_table
from .martingale import Form, TransformError, martingale_verdict, positivity_check, star_transform
from .model import Outcome, Verdict, validate_admissibility
from .montecarlo import (SimConfig, SimulationError, detect_explosion, empirical_cf_check,
                         estimate_stoch_exp_mean, second_moment_blowup, simulate_paths, truncate_model)
from .riccati import RContext, RiccatiError, minimal_solution_zero, solve_flow
from .specfile import SpecError, load_spec, params_to_dict

EXIT = {Outcome.HOLDS: 0, Outcome.FAILS: 1, Outcome.INCONCLUSIVE: 2}
USAGE_ERROR = 3


class UsageError(Exception):
    pass


def worst(outcomes) -> Outcome:
    """Fails dominates Inconclusive, which dominates Holds."""
    outcomes = list(outcomes)
    if Outcome.FAILS in outcomes:
        return Outcome.FAILS
    if Outcome.INCONCLUSIVE in outcomes:
        return Outcome.INCONCLUSIVE
    return Outcome.HOLDS


def _versions() -> dict:
    return {"affine_mart": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _complexes(text: str) -> list[complex]:
    try:
        return [complex(x.replace(" ", "")) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated complex numbers, got {text!r}")


class Report:
    """Accumulates verdicts, evidence and command details for one invocation."""

    def __init__(self, params):
        self.params = params
        self.verdicts: dict[str, Verdict] = {}
        self.details: dict = {}
        self.lines: list[str] = []

    def verdict(self, name: str, v: Verdict) -> Verdict:
        self.verdicts[name] = v
        self.lines.append(f"{name}: {v.outcome.value} [{v.criterion}]")
        for e in v.evidence:
            val = "" if e.value is None else f" = {e.value:.6g}" if isinstance(e.value, float) else f" = {e.value}"
            tol = "" if e.tolerance is None else f" (tol {e.tolerance:g})"
            self.lines.append(f"    {e.description}{val}{tol}")
        return v

    def say(self, line: str) -> None:
        self.lines.append(line)

    def outcome(self) -> Outcome:
        return worst(v.outcome for v in self.verdicts.values())

    def to_dict(self) -> dict:
        evidence = [{"verdict": name, **e.to_dict()} for name, v in self.verdicts.items() for e in v.evidence]
        return {"spec": params_to_dict(self.params),
                "verdicts": {name: v.outcome.value for name, v in self.verdicts.items()},
                "evidence": evidence, "details": _jsonable(self.details), "versions": _versions()}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


# ----------------------------------------------------------------------------
# commands

def cmd_validate(params, args, rep: Report) -> Outcome:
    violations = validate_admissibility(params)
    rep.details["violations"] = [v.to_dict() for v in violations]
    if not violations:
        rep.say("admissible: all bullets hold")
        return Outcome.HOLDS
    for v in violations:
        tag = "unresolved" if v.unresolved else "violated"
        rep.say(f"{tag}: {v.bullet}{list(v.index)}: {v.message}")
    if all(v.unresolved for v in violations):
        return Outcome.INCONCLUSIVE
    return Outcome.FAILS


def _require_admissible(params, rep: Report) -> Outcome | None:
    outcome = cmd_validate(params, None, rep)
    if outcome is not Outcome.HOLDS:
        rep.say("parameters are not admissible; analysis skipped")
        return outcome
    return None


def cmd_riccati(params, args, rep: Report) -> Outcome:
    if args.u is None or len(args.u) != params.d:
        raise UsageError(f"--u needs {params.d} comma-separated values")
    ctx = RContext(params)
    times = np.linspace(0, args.T, args.grid + 1)
    try:
        flow = solve_flow(ctx, np.asarray(args.u, dtype=complex), args.T, tol=args.tol, times=times)
    except RiccatiError as exc:
        rep.say(f"solver stopped: {exc}")
        state = getattr(exc, "state", None)
        rep.details["error"] = {"message": str(exc), "t": getattr(exc, "t", None),
                                "state": None if state is None else [[z.real, z.imag] for z in np.ravel(state)]}
        return Outcome.INCONCLUSIVE
    rep.details["flow"] = flow.to_dict()
    p0, p = flow.final
    rep.say(f"psi_0(T,u) = {p0:.10g}")
    rep.say("psi(T,u) = [" + ", ".join(f"{z:.10g}" for z in p) + "]")
    rep.say(f"steps accepted {flow.diagnostics['accepted']}, rejected {flow.diagnostics['rejected']}")
    return Outcome.HOLDS


def cmd_conservative(params, args, rep: Report) -> Outcome:
    bad = _require_admissible(params, rep)
    if bad is not None:
        return bad
    ctx = RContext(params)
    report = conservativeness_verdict(params, args.T, ctx=ctx)
    rep.details["conservativeness"] = report.to_dict()
    rep.say("decision path: " + " -> ".join(report.decision_path))
    rep.verdict("conservative", report.overall)
    if report.overall.fails and params.m >= 1:
        ts = [t for t in (0.25, 0.5, 1.0, 2.0) if t <= args.T]
        xs = [np.eye(params.d)[0] * s for s in (0.5, 1.0, 2.0)]
        try:
            ms = minimal_solution_zero(ctx, T=max(ts), times=[0.0] + ts)
            table = survival_table(params, xs, ts, ms)
        except (RiccatiError, ValueError) as exc:
            rep.say(f"survival table unavailable: {exc}")
        else:
            rep.details["survival"] = table
            rep.say("survival probability P_x(X_t in D):")
            for row in table:
                rep.say(f"    x={row['x']} t={row['t']:g}: {row['survival']:.6g}")
    return report.overall.outcome


def _form(args, params) -> Form:
    if args.form == "functional":
        if args.P is None:
            raise UsageError("--form functional needs --P")
        return Form("functional", p=args.p, P=args.P)
    if args.component is None:
        raise UsageError(f"--form {args.form} needs --component")
    return Form(args.form, i=args.component)


def cmd_martingale(params, args, rep: Report) -> Outcome:
    bad = _require_admissible(params, rep)
    if bad is not None:
        return bad
    try:
        report = martingale_verdict(params, _form(args, params), args.T)
    except ValueError as exc:
        raise UsageError(str(exc))
    rep.details["martingale"] = report.to_dict()
    rep.verdict("positivity", report.positivity)
    rep.verdict("local_martingale", report.local_mart)
    rep.verdict("true_martingale", report.overall)
    for note in report.notes:
        rep.say(f"note: {note}")
    label = {Outcome.HOLDS: "true martingale", Outcome.FAILS: "not a true martingale",
             Outcome.INCONCLUSIVE: "undecided"}[report.overall.outcome]
    rep.say(f"{report.form.label}: {label}")
    return report.overall.outcome


def cmd_transform(params, args, rep: Report) -> Outcome:
    if args.component is None:
        raise UsageError("transform needs --component")
    try:
        star = star_transform(params, args.component, check=True)
    except TransformError as exc:
        rep.say(f"transform refused: {exc}")
        return Outcome.FAILS
    rep.details["star_spec"] = params_to_dict(star)
    rep.say(f"star parameters for component {args.component}:")
    for j, row in enumerate(star.beta):
        rep.say(f"    beta*_{j} = {row.tolist()}")
    violations = validate_admissibility(star)
    rep.details["star_violations"] = [v.to_dict() for v in violations]
    if violations:
        for v in violations:
            rep.say(f"star parameters violate {v.bullet}{list(v.index)}: {v.message}")
        return Outcome.INCONCLUSIVE if all(v.unresolved for v in violations) else Outcome.FAILS
    return Outcome.HOLDS


def cmd_simulate(params, args, rep: Report) -> Outcome:
    x0 = args.x0 if args.x0 is not None else [1.0] * params.m + [0.0] * params.n
    if len(x0) != params.d:
        raise UsageError(f"--x0 needs {params.d} values")
    cfg = SimConfig(tuple(x0), args.T, args.steps, args.paths, args.seed,
                    args.cap if args.cap is not None else math.inf)
    try:
        if args.estimate == "mean-exp":
            if args.component is None:
                raise UsageError("--estimate mean-exp needs --component")
            est = estimate_stoch_exp_mean(params, args.component, cfg, workers=args.workers)
            rep.details["estimate"] = est.to_dict()
            rep.say(f"E[E(X^{args.component})_T] = {est.mean:.6g} +- {est.stderr:.3g} "
                    f"(median of means {est.median_of_means:.6g}, N={est.n})")
            blow = second_moment_blowup(params, args.component, cfg.T) if params.m else None
            if blow is not None:
                rep.say(f"warning: second moment infinite from t = {blow:.4g}; the stderr is not a valid error bar")
                rep.details["second_moment_blowup"] = blow
            return Outcome.HOLDS if est.within(1.0) else Outcome.FAILS
        if args.estimate == "cf":
            grid = args.u_grid or [[1j * a for a in pt] for pt in _default_cf_grid(params.d)]
            check = empirical_cf_check(params, cfg, grid, workers=args.workers)
            rep.details["cf"] = check.to_dict()
            w = check.worst
            rep.say(f"max |phi_emp - phi_model| = {check.max_discrepancy:.4g}; "
                    f"worst point {w.discrepancy:.4g} vs stderr {w.stderr:.4g}")
            return Outcome.HOLDS if check.within(3.0) else Outcome.FAILS
        if args.estimate == "explosion":
            cap = args.cap if args.cap is not None else 1e6
            res = detect_explosion(params, cfg, cap, workers=args.workers)
            rep.details["explosion"] = res.to_dict()
            rep.say(f"explosion frequency {res.frequency:.4g} +- {res.stderr:.3g} (cap {cap:g})")
            if res.predicted is not None:
                rep.say(f"predicted from the minimal solution: {res.predicted:.4g}")
            agrees = res.agrees()
            return Outcome.INCONCLUSIVE if agrees is None else Outcome.HOLDS if agrees else Outcome.FAILS
        ens = simulate_paths(params, cfg, workers=args.workers)
        summary = ens.summary()
        rep.details["ensemble"] = summary
        for key in ("paths", "steps", "terminal_mean", "mean_jumps", "explosions", "clip_fraction"):
            rep.say(f"{key}: {summary[key]}")
        return Outcome.HOLDS
    except SimulationError as exc:
        raise UsageError(str(exc))


def _default_cf_grid(d: int) -> list[list[float]]:
    import itertools
    return [list(p) for p in itertools.product((-2.0, 0.0, 2.0), repeat=d)]


def cmd_report_all(params, args, rep: Report) -> Outcome:
    bad = _require_admissible(params, rep)
    if bad is not None:
        return bad
    cons = conservativeness_verdict(params, args.T)
    rep.details["conservativeness"] = cons.to_dict()
    rep.verdict("conservative", cons.overall)
    rep.details["martingale"] = {}
    for i in range(1, params.d + 1):
        if not positivity_check(params, i).holds:
            rep.say(f"component {i}: positivity does not hold; skipped")
            continue
        mr = martingale_verdict(params, Form("stoch-exp", i=i), args.T)
        rep.details["martingale"][str(i)] = mr.to_dict()
        rep.verdict(f"true_martingale({i})", mr.overall)
    return rep.outcome()


COMMANDS = {"validate": cmd_validate, "riccati": cmd_riccati, "conservative": cmd_conservative,
            "martingale": cmd_martingale, "transform": cmd_transform, "simulate": cmd_simulate,
            "report-all": cmd_report_all}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="affine-mart", description="Conservativeness and martingale verdicts for affine processes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("spec", help="process spec file (JSON)")
        p.add_argument("--json", metavar="OUT", help="also write the report as JSON")
        p.add_argument("--truncate", type=int, metavar="N", help="keep the first N atoms of every series measure")
        return p

    add("validate", "check admissibility")
    p = add("riccati", "solve the generalized Riccati equations")
    p.add_argument("--u", type=_complexes, required=True, help="initial value, e.g. -1,0.5j")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--grid", type=int, default=10, help="number of output intervals")
    p = add("conservative", "decide conservativeness")
    p.add_argument("--T", type=float, default=10.0, help="horizon of the minimal solution")
    for name in ("martingale", "transform"):
        p = add(name, "decide the true-martingale property" if name == "martingale"
                else "print the star (measure-changed) parameters")
        p.add_argument("--component", type=int)
        if name == "martingale":
            p.add_argument("--form", choices=("stoch-exp", "exp", "functional"), default="stoch-exp")
            p.add_argument("--p", type=float, default=0.0)
            p.add_argument("--P", type=_floats)
            p.add_argument("--T", type=float, default=10.0)
    p = add("simulate", "Monte Carlo simulation")
    p.add_argument("--x0", type=_floats)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=1000, help="steps per unit time")
    p.add_argument("--paths", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=float)
    p.add_argument("--estimate", choices=("mean-exp", "cf", "explosion"))
    p.add_argument("--component", type=int)
    p.add_argument("--u", dest="u_grid", type=_complexes, action="append",
                   help="CF grid point (repeatable), e.g. 2j,0j")
    p.add_argument("--workers", type=int, default=1)
    p = add("report-all", "validate, conservativeness and martingale verdicts for every component")
    p.add_argument("--T", type=float, default=10.0)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        try:
            params = load_spec(args.spec)
        except SpecError as exc:
            for issue in exc.issues:
                print(f"error: {issue}", file=sys.stderr)
            return USAGE_ERROR
        if args.truncate is not None:
            try:
                params = truncate_model(params, args.truncate)
            except (SimulationError, ValueError) as exc:
                raise UsageError(f"--truncate: {exc}")
        rep = Report(params)
        outcome = COMMANDS[args.command](params, args, rep)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    print("\n".join(rep.lines))
    print(f"result: {outcome.value}")
    if args.json:
        doc = rep.to_dict()
        doc["command"] = args.command
        doc["result"] = outcome.value
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
    return EXIT[outcome]


if __name__ == "__main__":
    sys.exit(main())
