"""Deciding whether an affine process is conservative (never explodes or dies).

The decision path consults, in order: the killing rates, the sufficient
moment condition, the Osgood integral (m = 1) and finally the minimal
solution of the restricted Riccati system started at 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import AffineParams, Evidence, Verdict, all_of, classify_moment, fails, holds, inconclusive
from .riccati import MinimalSolution, RContext, RiccatiError, minimal_solution_zero, osgood_shells

HOLDS_THRESHOLD = 1e-6
FAILS_FACTOR = 100.0


class NotApplicable(ValueError):
    """The criterion does not apply to these parameters."""


def _context(params: AffineParams, ctx: RContext | None) -> RContext:
    if ctx is not None:
        if ctx.params is not params:
            raise ValueError("ctx was built for different parameters")
        return ctx
    return RContext(params)


def necessary_gamma_check(params: AffineParams) -> Verdict:
    """Holds iff every killing rate is exactly zero."""
    nonzero = [j for j, g in enumerate(params.gamma) if g != 0]
    if nonzero:
        j = nonzero[0]
        return fails("gamma_zero", Evidence(f"gamma_{j} = {params.gamma[j]:g} kills the process",
                                            float(params.gamma[j]), 0.0))
    return holds("gamma_zero", Evidence("all killing rates vanish", 0.0, 0.0))


def moment_matrix(params: AffineParams, tol: float = 1e-10) -> dict[tuple[int, int], Verdict]:
    """``wedge(k)`` moment of ``kappa_j`` for 1 <= j, k <= m."""
    m = params.m
    return {(j, k): classify_moment(params.kappa[j], "wedge", k, tol)
            for j in range(1, m + 1) for k in range(1, m + 1)}


def sufficient_moment_check(params: AffineParams, tol: float = 1e-10,
                            matrix: dict | None = None) -> Verdict:
    """Holds when ``(|xi_k| ^ |xi_k|^2)`` integrates against every ``kappa_j``, j, k <= m."""
    matrix = moment_matrix(params, tol) if matrix is None else matrix
    if not matrix:
        return holds("moment_condition", Evidence("m = 0: no state-dependent jumps to check", 0.0, tol))
    return all_of("moment_condition", matrix.values())


def osgood_check(params: AffineParams, ctx: RContext | None = None, delta: float = 1e-2,
                 levels: int = 40) -> Verdict:
    """Divergence of ``integral_{0-} du / R_1(u, 0)`` (m = 1).

    Holds when the integral diverges (the zero solution is unique), Fails
    when it converges.
    """
    if params.m != 1:
        raise NotApplicable(f"the Osgood criterion needs m = 1, got m = {params.m}")
    if np.any(params.gamma != 0):
        raise NotApplicable("the Osgood criterion presumes gamma = 0")
    ctx = _context(params, ctx)
    try:
        shells = osgood_shells(ctx, delta, levels)
    except RiccatiError as exc:
        return inconclusive("osgood", Evidence(f"R_1 could not be evaluated: {exc}", math.nan, None))
    sums = shells.partial_sums
    evidence = [Evidence(f"partial integral of 1/|R_1| over [-{delta:g}, -{delta:g}*2^-{levels}]",
                         float(sums[-1]), None),
                Evidence("shell ratio (median of last 10)", shells.ratio, 0.9),
                Evidence("fitted shell decay exponent (divergent if <= 1)", shells.exponent, 1.0)]
    verdict = shells.classify()
    if shells.sign in ("positive", "zero"):
        return holds("osgood", Evidence("R_1 >= 0 near 0-: no solution can leave 0 downwards",
                                        float(sums[-1]), None))
    if verdict == "divergent":
        return holds("osgood", *evidence)
    if verdict == "convergent":
        return fails("osgood", *evidence, Evidence("tail bound beyond last shell", shells.tail_bound(), 1e-9))
    reason = "R_1 changes sign near 0-" if shells.sign == "mixed" else "shell decay is neither geometric nor harmonic"
    return inconclusive("osgood", Evidence(reason, float(sums[-1]), None), *evidence)


@dataclass(frozen=True, eq=False)
class ConservativenessReport:
    overall: Verdict
    gamma_check: Verdict
    moment_check: dict[tuple[int, int], Verdict]
    osgood: Verdict | None  # None: not applicable (m != 1) or not reached
    minimal_solution: MinimalSolution | None
    horizon: float
    decision_path: tuple[str, ...] = field(default_factory=tuple)

    @property
    def minimal_sup(self) -> float | None:
        return None if self.minimal_solution is None else self.minimal_solution.sup_abs

    def to_dict(self) -> dict:
        ms = self.minimal_solution
        return {
            "overall": self.overall.to_dict(),
            "gamma_check": self.gamma_check.to_dict(),
            "moment_check": {f"{j},{k}": v.to_dict() for (j, k), v in self.moment_check.items()},
            "osgood": None if self.osgood is None else self.osgood.to_dict(),
            "minimal_solution": None if ms is None else {
                "sup_abs": ms.sup_abs, "horizon": self.horizon, "converged": ms.converged,
                "convergence_error": ms.convergence_error, "method": ms.method},
            "holds_threshold": HOLDS_THRESHOLD,
            "decision_path": list(self.decision_path),
        }


def _minimal_verdict(ms: MinimalSolution) -> Verdict:
    sup = ms.sup_abs
    ev = [Evidence(f"sup |psi_I(t,0)| over the horizon ({ms.method})", sup, HOLDS_THRESHOLD),
          Evidence("convergence error of the eps-limit", ms.convergence_error, None)]
    if sup <= HOLDS_THRESHOLD:
        return holds("minimal_solution", *ev)
    if ms.converged and sup >= FAILS_FACTOR * ms.convergence_error:
        return fails("minimal_solution", *ev)
    return inconclusive("minimal_solution", *ev)


def conservativeness_verdict(params: AffineParams, T: float = 10.0, ctx: RContext | None = None,
                             with_minimal: bool = False) -> ConservativenessReport:
    """Walk the decision path; ``with_minimal`` also computes the minimal
    solution when an earlier criterion already decided."""
    path: list[str] = []
    gamma = necessary_gamma_check(params)
    path.append("gamma_zero")
    matrix = moment_matrix(params)
    moments = sufficient_moment_check(params, matrix=matrix)
    if gamma.fails:
        ms = None
        if with_minimal:
            ms = _safe_minimal(params, ctx, T)
        return ConservativenessReport(gamma, gamma, matrix, None, ms, T, tuple(path))

    ctx = _context(params, ctx)
    path.append("moment_condition")
    osg = None
    ms = None
    overall = None
    if moments.holds:
        overall = holds("conservative", *moments.evidence)
    elif params.m == 1:
        path.append("osgood")
        osg = osgood_check(params, ctx)
        if not osg.inconclusive:
            overall = Verdict(osg.outcome, "conservative", osg.evidence)
    if overall is None or with_minimal:
        if overall is None:
            path.append("minimal_solution")
        ms = _safe_minimal(params, ctx, T)
        if overall is None:
            if isinstance(ms, Verdict):
                overall = Verdict(ms.outcome, "conservative", ms.evidence)
                ms = None
            else:
                mv = _minimal_verdict(ms)
                overall = Verdict(mv.outcome, "conservative", mv.evidence)
        elif isinstance(ms, Verdict):
            ms = None
    return ConservativenessReport(overall, gamma, matrix, osg, ms, T, tuple(path))


def _safe_minimal(params, ctx, T):
    try:
        return minimal_solution_zero(_context(params, ctx), T)
    except RiccatiError as exc:
        return inconclusive("minimal_solution", Evidence(f"solver stopped: {exc}", math.nan, None))


def survival_probability(params: AffineParams, x: Sequence[float], t: float,
                         ctx: RContext | None = None,
                         minimal: MinimalSolution | None = None) -> float:
    """``P_x(X_t in D) = exp(psi_0(t,0) + <psi_I(t,0), x_I>)``.

    Killing rates enter through ``psi_0``; pass a precomputed ``minimal``
    solution (whose grid contains ``t``) to avoid recomputation.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (params.d,):
        raise ValueError(f"x must have length d={params.d}")
    if np.any(x[:params.m] < 0):
        raise ValueError("x must lie in the state space (first m coordinates >= 0)")
    if t == 0:
        return 1.0
    if minimal is None:
        minimal = minimal_solution_zero(_context(params, ctx), T=t, times=[0.0, t])
    if not minimal.converged:
        raise RiccatiError("minimal solution did not converge; survival probability unavailable")
    idx = np.flatnonzero(np.isclose(minimal.times, t, rtol=0, atol=1e-12))
    if not len(idx):
        raise ValueError(f"t={t} is not on the minimal solution's grid")
    i = idx[0]
    expo = float(np.real(minimal.flow.psi0[i])) + float(np.real(minimal.flow.psi[i]) @ x[:params.m])
    return min(1.0, math.exp(expo))


def survival_table(params: AffineParams, xs: Sequence[Sequence[float]], ts: Sequence[float],
                   minimal: MinimalSolution) -> list[dict]:
    """Survival probabilities on a grid of start points and times."""
    return [{"x": list(map(float, x)), "t": float(t),
             "survival": survival_probability(params, x, t, minimal=minimal)}
            for x in xs for t in ts if t > 0]
