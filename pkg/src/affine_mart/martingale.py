"""Local and true martingale property of exponentially affine processes.

``E(X^i)`` is a local martingale when the big jumps of ``X^i`` are integrable
and its drift vanishes; it is a true martingale exactly when, in addition,
the affine process with the star parameters (the dynamics under the measure
with density ``E(X^i)``) is conservative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .conservativeness import ConservativenessReport, conservativeness_verdict
from .model import (AffineParams, Evidence, FiniteAtomic, Growth, Verdict, Violation, classify_moment,
                    fails, holds, inconclusive, measure_integral, parse, validate_admissibility)
from .model.integration import HEAD, _point_growth
from .model.measures import Density, JumpMeasure, SeriesAtomic, truncation_h
from .riccati import RiccatiError

LOCAL_MART_TOL = 1e-8
INTEGRAL_TOL = 1e-12


class TransformError(ValueError):
    """A parameter transform produced something outside the admissible class."""


def _check_component(params: AffineParams, i: int) -> None:
    if not 1 <= i <= params.d:
        raise ValueError(f"component i={i} outside 1..{params.d}")


def _coordinate_text(mu: JumpMeasure, i: int) -> str:
    """Expression for coordinate i (1-based) of a series or density measure."""
    if isinstance(mu, SeriesAtomic):
        return mu.point_exprs[i - 1].text
    k = len(mu.domain)
    return f"xi{i}" if i <= k else mu.extra_coords[i - k - 1].text


# ----------------------------------------------------------------------------
# positivity and local martingale

def _mass_below(mu: JumpMeasure, i: int, level: float = -1.0) -> tuple[bool | None, str]:
    """Does ``mu`` charge ``{xi_i < level}``?  None when undecidable."""
    if mu.is_zero:
        return False, "zero measure"
    if isinstance(mu, FiniteAtomic):
        pts, _ = mu.arrays(mu.dim)
        bad = pts[:, i - 1] < level
        if np.any(bad):
            return True, f"atom {tuple(pts[bad][0])} has xi_{i} < {level:g}"
        return False, f"all {len(pts)} atoms have xi_{i} >= {level:g}"
    if isinstance(mu, SeriesAtomic):
        ns = np.concatenate([np.arange(1, 10 * HEAD + 1), np.geomspace(10 * HEAD, 1e12, 200)])
        pts, _ = mu.atoms(ns)
        col = pts[:, i - 1]
        if np.any(np.isnan(col)):
            return None, f"point expression for xi_{i} is undefined at some n"
        bad = col < level
        if np.any(bad):
            return True, f"atom n={int(ns[bad][0])} has xi_{i} = {col[bad][0]:g} < {level:g}"
        return False, f"xi_{i}(n) >= {level:g} on n <= {10 * HEAD} and a geometric scan to 1e12"
    k = len(mu.domain)
    if i <= k:
        lo, hi = mu.domain[i - 1]
        if lo >= level:
            return False, f"density domain has xi_{i} >= {lo:g}"
        probe = np.array([[min(max(level - 1.0, lo), hi) if j == i - 1 else
                           (a if a == b else (a + min(b, a + 2)) / 2 if math.isfinite(a) else min(b, 1.0))
                           for j, (a, b) in enumerate(mu.domain)]])
        if float(mu.density(probe)[0]) > 0:
            return True, f"density is positive where xi_{i} < {level:g}"
        return None, f"density domain reaches xi_{i} < {level:g}"
    rng = np.random.default_rng(0)
    base = np.column_stack([np.clip(rng.standard_cauchy(4096) * 3, lo, hi) if lo != hi else np.full(4096, lo)
                            for lo, hi in mu.domain])
    vals = mu.embed(base)[:, i - 1]
    if np.any(vals < level):
        return True, f"embedded coordinate {i} takes values < {level:g}"
    return None if np.any(np.isnan(vals)) else False, f"embedded coordinate {i} sampled >= {level:g}"


def positivity_check(params: AffineParams, i: int) -> Verdict:
    """Holds iff no ``kappa_j`` charges ``{xi_i < -1}`` (jumps of E(X^i) keep it positive)."""
    _check_component(params, i)
    evidence, unknown = [], []
    for j, mu in enumerate(params.kappa):
        below, why = _mass_below(mu, i)
        if below:
            return fails("positivity", Evidence(f"kappa_{j}: {why}", 1.0, 0.0))
        if below is None:
            unknown.append(Evidence(f"kappa_{j}: {why}", math.nan, None))
        elif not mu.is_zero:
            evidence.append(Evidence(f"kappa_{j}: {why}", 0.0, 0.0))
    if unknown:
        return inconclusive("positivity", *unknown)
    if not evidence:
        evidence.append(Evidence("no jumps", 0.0, 0.0))
    return holds("positivity", *evidence)


def drift_residuals(params: AffineParams, i: int, tol: float = INTEGRAL_TOL) -> list[tuple[float, float]]:
    """``beta_j^i + integral (xi_i - h_i) dkappa_j`` with its error bound, per j."""
    out = []
    for j, mu in enumerate(params.kappa):
        beta = float(params.beta[j, i - 1])
        if mu.is_zero:
            out.append((beta, 0.0))
            continue
        res = measure_integral(mu, lambda p: p[:, i - 1] - truncation_h(p[:, i - 1]), tol,
                               Growth(50, 1, 1, 1))
        if res.finite:
            out.append((beta + float(np.real(res.value)), res.error_bound))
        else:
            out.append((math.nan, math.inf))
    return out


def local_martingale_check(params: AffineParams, i: int, tol: float = LOCAL_MART_TOL) -> Verdict:
    """Big jumps of X^i integrable and the drift identity satisfied for all j."""
    _check_component(params, i)
    big = [classify_moment(mu, "big_jump_abs", i) if not mu.is_zero else None for mu in params.kappa]
    residuals = drift_residuals(params, i)
    evidence, outcome = [], "holds"
    for j, (v, (r, err)) in enumerate(zip(big, residuals)):
        if v is not None:
            evidence.append(Evidence(f"j={j}: integral over |xi_{i}|>1 of |xi_{i}| ({v.outcome.value})",
                                     v.evidence[0].value if v.evidence else math.nan, None))
            if v.fails:
                outcome = "fails"
            elif v.inconclusive and outcome == "holds":
                outcome = "inconclusive"
        evidence.append(Evidence(f"j={j}: drift residual beta_{j}^{i} + integral (xi_{i} - h_{i})", r, tol))
        if math.isnan(r):
            if outcome == "holds":
                outcome = "inconclusive"
        elif abs(r) > tol:
            outcome = "fails"
    return {"holds": holds, "fails": fails, "inconclusive": inconclusive}[outcome]("local_martingale", *evidence)


# ----------------------------------------------------------------------------
# star transform

def _star_measure(mu: JumpMeasure, i: int) -> JumpMeasure:
    if mu.is_zero:
        return mu
    if isinstance(mu, FiniteAtomic):
        atoms = []
        for point, w in mu.atoms:
            factor = 1.0 + point[i - 1]
            if factor < 0:
                raise TransformError(f"atom {point} has xi_{i} < -1: reweighting gives a negative weight")
            if factor > 0:
                atoms.append((point, w * factor))
        return FiniteAtomic(tuple(atoms))
    coord = _coordinate_text(mu, i)
    below, why = _mass_below(mu, i)
    if below or below is None:
        raise TransformError(f"cannot reweight by 1 + xi_{i}: {why}")
    if isinstance(mu, SeriesAtomic):
        factor = SeriesAtomic((parse(f"1+({coord})"),), "1", tail_p=None)
        r, a = _point_growth(factor)
        if mu.tail_p is None or math.isinf(r):
            p, c = None, None
        else:
            p, c = mu.tail_p - max(r, 0.0), mu.tail_c * max(a, 1.0)
            if p <= 1:
                raise TransformError(f"reweighted series decays like n^-{p:g}: infinite mass, not a Levy measure")
        return SeriesAtomic(mu.point_exprs, mu.weight_expr * f"1+({coord})", c, p, mu.truncation_tol)
    k = len(mu.domain)
    grow = 0.0
    if i <= k:
        lo, hi = mu.domain[i - 1]
        grow = 1.0 if math.isinf(hi) or math.isinf(lo) else 0.0
    else:
        e = mu.extra_coords[i - k - 1]
        env = {f"xi{j + 1}": np.array([1e6, 1e8]) for j in range(k)}
        v = np.abs(np.broadcast_to(e.evaluate(env), (2,)))
        grow = float(np.log(v[1] / v[0]) / np.log(100)) if np.all(v > 0) and np.all(np.isfinite(v)) else math.inf
        if not math.isfinite(grow):
            raise TransformError(f"cannot bound the growth of coordinate {i} of the lifted density")
        grow = max(grow, 0.0)
    return Density(mu.expr * f"1+({coord})", mu.domain, mu.tail_zero, mu.tail_inf + grow,
                   mu.quadrature_tol, mu.extra_coords)


def star_drift_integral(mu: JumpMeasure, i: int, d: int, tol: float = INTEGRAL_TOL) -> np.ndarray:
    """``integral xi_i h(xi) kappa(dxi)``, one entry per coordinate."""
    out = np.zeros(d)
    if mu.is_zero:
        return out
    for k in range(d):
        res = measure_integral(mu, lambda p, k=k: p[:, i - 1] * truncation_h(p[:, k]), tol,
                               Growth(2, 1, 1, 1))
        if not res.finite:
            raise TransformError(f"integral of xi_{i} h_{k + 1} is {res.status}: {res.note}")
        out[k] = float(np.real(res.value))
    return out


def star_transform(params: AffineParams, i: int, check: bool = True) -> AffineParams:
    """Parameters of X under the measure with density ``E(X^i)``:
    ``alpha* = alpha``, ``beta*_j = beta_j + alpha_j e_i + integral xi_i h dkappa_j``,
    ``gamma* = 0``, ``kappa*_j = (1 + xi_i) kappa_j``.
    """
    _check_component(params, i)
    d = params.d
    beta = np.array(params.beta)
    kappa = []
    for j, mu in enumerate(params.kappa):
        beta[j] += params.alpha[j][:, i - 1] + star_drift_integral(mu, i, d)
        kappa.append(_star_measure(mu, i))
    star = params.replace(beta=beta, gamma=np.zeros(d + 1), kappa=tuple(kappa))
    if check:
        violations = validate_admissibility(star)
        if violations:
            raise TransformError("star parameters are not admissible: "
                                 + "; ".join(v.message for v in violations))
    return star


def star_R_direct(params: AffineParams, i: int, j: int, u, tol: float = INTEGRAL_TOL) -> complex:
    """``R*_j(u)`` from the original parameters with the reweighting inside the
    integrand: ``<beta_j + alpha_j e_i, u> + 1/2 <alpha_j u, u>
    + integral ((e^{<u,xi>} - 1)(1 + xi_i) - <u, h(xi)>) kappa_j(dxi)``."""
    u = np.asarray(u)
    a = params.alpha[j]
    val = 0.5 * u @ a @ u + (params.beta[j] + a[:, i - 1]) @ u
    mu = params.kappa[j]
    if not mu.is_zero:
        f = lambda p: np.expm1(p @ u) * (1 + p[:, i - 1]) - truncation_h(p) @ u
        size = float(np.linalg.norm(u))
        res = measure_integral(mu, f, tol, Growth(1, 1, 2 * size + 1, 3 + size * math.sqrt(len(u))))
        if not res.finite:
            raise TransformError(f"reweighted integral is {res.status}: {res.note}")
        val = val + res.value
    return complex(val) if np.iscomplexobj(val) else float(val)


# ----------------------------------------------------------------------------
# lifts

def _block_alpha(alpha: np.ndarray, vec: np.ndarray) -> np.ndarray:
    d = alpha.shape[-1]
    out = np.zeros((alpha.shape[0] + 1, d + 1, d + 1))
    for j, a in enumerate(alpha):
        av = a @ vec
        out[j, :d, :d] = a
        out[j, :d, d] = av
        out[j, d, :d] = av
        out[j, d, d] = vec @ a @ vec
    return out


def _lift_measure(mu: JumpMeasure, new_coord: str, fn) -> JumpMeasure:
    """Image of ``mu`` under ``xi -> (xi, g(xi))``; ``new_coord`` is g as text in
    the measure's coordinate expressions, ``fn`` is g on point arrays."""
    if mu.is_zero:
        return mu
    if isinstance(mu, FiniteAtomic):
        pts, w = mu.arrays(mu.dim)
        extra = fn(pts)
        return FiniteAtomic(tuple((tuple(p) + (float(x),), float(wt)) for p, x, wt in zip(pts, extra, w)))
    if isinstance(mu, SeriesAtomic):
        return SeriesAtomic(mu.point_exprs + (parse(new_coord),), mu.weight_expr, mu.tail_c,
                            mu.tail_p, mu.truncation_tol)
    return Density(mu.expr, mu.domain, mu.tail_zero, mu.tail_inf, mu.quadrature_tol,
                   mu.extra_coords + (parse(new_coord),))


def _lifted(params: AffineParams, alpha, extra_beta, kappa) -> AffineParams:
    d = params.d
    beta = np.zeros((d + 2, d + 1))
    beta[:d + 1, :d] = params.beta
    beta[:d + 1, d] = extra_beta
    gamma = np.zeros(d + 2)
    gamma[:d + 1] = params.gamma
    return AffineParams(params.m, params.n + 1, alpha, beta, gamma, tuple(kappa) + (FiniteAtomic(()),))


def exp_lift(params: AffineParams, i: int) -> AffineParams:
    """Append a coordinate whose stochastic exponential is ``exp(X^i - X^i_0)``."""
    _check_component(params, i)
    d = params.d
    e = np.zeros(d)
    e[i - 1] = 1.0
    alpha = _block_alpha(params.alpha, e)
    extra, kappa = [], []
    for j, mu in enumerate(params.kappa):
        corr = 0.0
        if not mu.is_zero:
            res = measure_integral(
                mu, lambda p: truncation_h(np.expm1(p[:, i - 1])) - truncation_h(p[:, i - 1]),
                INTEGRAL_TOL, Growth(2, 0, 1, 2))
            if not res.finite:
                raise TransformError(f"exp-lift correction for kappa_{j} is {res.status}: {res.note}")
            corr = float(np.real(res.value))
        extra.append(params.beta[j, i - 1] + 0.5 * params.alpha[j, i - 1, i - 1] + corr)
        coord = _coordinate_text(mu, i) if not isinstance(mu, FiniteAtomic) else ""
        kappa.append(_lift_measure(mu, f"exp({coord})-1", lambda p: np.expm1(p[:, i - 1])))
    return _lifted(params, alpha, extra, kappa)


def functional_lift(params: AffineParams, p: float, P: Sequence[float]) -> AffineParams:
    """Append the coordinate ``A(X) = p + P.X`` (``p`` only shifts its start)."""
    d = params.d
    P = np.asarray(P, dtype=float)
    if P.shape != (d,):
        raise ValueError(f"P must have length d={d}")
    alpha = _block_alpha(params.alpha, P)
    extra, kappa = [], []
    for j, mu in enumerate(params.kappa):
        corr = 0.0
        if not mu.is_zero:
            res = measure_integral(mu, lambda x: truncation_h(x @ P) - truncation_h(x) @ P,
                                   INTEGRAL_TOL, Growth(50, 0, 1, 1 + float(np.sum(np.abs(P)))))
            if not res.finite:
                raise TransformError(f"functional-lift correction for kappa_{j} is {res.status}: {res.note}")
            corr = float(np.real(res.value))
        extra.append(float(P @ params.beta[j]) + corr)
        text = ""
        if not isinstance(mu, FiniteAtomic) and not mu.is_zero:
            text = "+".join(f"({c!r})*({_coordinate_text(mu, k + 1)})" for k, c in enumerate(P) if c != 0) or "0"
        kappa.append(_lift_measure(mu, text, lambda x: x @ P))
    return _lifted(params, alpha, extra, kappa)


# ----------------------------------------------------------------------------
# verdict

@dataclass(frozen=True)
class Form:
    """Which exponential: ``stoch-exp`` of X^i, ordinary ``exp`` of X^i, or the
    stochastic exponential of the ``functional`` p + P.X."""

    kind: str
    i: int | None = None
    p: float = 0.0
    P: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("stoch-exp", "exp", "functional"):
            raise ValueError(f"unknown form {self.kind!r}")
        if self.kind == "functional":
            if self.P is None:
                raise ValueError("functional form needs P")
            object.__setattr__(self, "P", tuple(float(x) for x in self.P))
        elif self.i is None:
            raise ValueError(f"form {self.kind!r} needs a component i")

    @property
    def label(self) -> str:
        if self.kind == "stoch-exp":
            return f"stochastic_exp({self.i})"
        if self.kind == "exp":
            return f"ordinary_exp({self.i})"
        return f"affine_functional(p={self.p:g}, P={list(self.P)})"


@dataclass(frozen=True, eq=False)
class MartingaleReport:
    form: Form
    component: int
    process: AffineParams
    positivity: Verdict
    local_mart: Verdict
    star_params: AffineParams | None
    star_admissibility: tuple[Violation, ...]
    star_conservative: ConservativenessReport | None
    overall: Verdict
    notes: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"form": self.form.label, "component": self.component,
                "positivity": self.positivity.to_dict(), "local_martingale": self.local_mart.to_dict(),
                "star_beta": None if self.star_params is None else self.star_params.beta.tolist(),
                "star_admissibility": [v.to_dict() for v in self.star_admissibility],
                "star_conservative": None if self.star_conservative is None else self.star_conservative.to_dict(),
                "overall": self.overall.to_dict(), "notes": list(self.notes)}


def martingale_verdict(params: AffineParams, form: Form, T: float = 10.0) -> MartingaleReport:
    """positivity -> local martingale -> star transform -> conservativeness of
    the star process; every stage runs so the report is complete."""
    notes: list[str] = []
    if form.kind == "stoch-exp":
        _check_component(params, form.i)
        process, i = params, form.i
    elif form.kind == "exp":
        process, i = exp_lift(params, form.i), params.d + 1
        notes.append(f"exp(X^{form.i}) = exp(X^{form.i}_0) E(Y^{i}) for the lifted coordinate {i}")
    else:
        process, i = functional_lift(params, form.p, form.P), params.d + 1
        notes.append(f"A(X) = p + P.X appended as coordinate {i}")

    pos = positivity_check(process, i)
    loc = local_martingale_check(process, i)
    star, violations, cons = None, (), None
    try:
        star = star_transform(process, i, check=False)
        violations = tuple(validate_admissibility(star))
    except (TransformError, ValueError) as exc:
        notes.append(f"star transform unavailable: {exc}")
    if star is not None and not violations:
        try:
            cons = conservativeness_verdict(star, T)
        except (RiccatiError, ValueError) as exc:
            notes.append(f"star conservativeness failed: {exc}")

    if loc.fails:
        overall = fails("true_martingale", *loc.evidence)
    elif pos.fails:
        overall = inconclusive("true_martingale", Evidence(
            "E(X^i) is not positive: outside the positive-exponential hypothesis", 1.0, 0.0), *pos.evidence)
    elif pos.inconclusive or loc.inconclusive:
        bad = pos if pos.inconclusive else loc
        overall = inconclusive("true_martingale", *bad.evidence)
    elif star is None or violations:
        why = "; ".join(v.message for v in violations) or notes[-1]
        overall = inconclusive("true_martingale", Evidence(f"star parameters unusable: {why}", math.nan, None))
    elif cons is None:
        overall = inconclusive("true_martingale", Evidence(notes[-1], math.nan, None))
    else:
        overall = Verdict(cons.overall.outcome, "true_martingale", cons.overall.evidence)
    return MartingaleReport(form, i, process, pos, loc, star, violations, cons, overall, tuple(notes))
