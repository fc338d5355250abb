"""Integration of functions against jump measures.

Finite atoms are summed exactly.  Atom series are summed directly over a head
of ``HEAD`` atoms; the remainder is an Euler-Maclaurin tail whose integral part
is a composite Gauss-Legendre rule in ``s = ln n``, cut off where the declared
power-law tail guarantees the neglected mass is below tolerance.  Densities use
the same log-mapped composite rule per axis, with cut-offs from the declared
edge exponents.  Every rule carries a coarse twin; the fine/coarse gap plus
the analytic cut-off bound is the reported error.

Rules are linear in the integrand, so a :class:`Plan` can be built once and
re-applied to many integrands (the Riccati right-hand side does this).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .expr import Expr, parse
from .measures import Density, FiniteAtomic, JumpMeasure, SeriesAtomic, truncation_h
from .verdict import Evidence, Verdict, fails, holds, inconclusive

HEAD = 512
CAP = 10**6
PANEL = 0.5
S_LIMIT = 300.0
_GL_FINE = np.polynomial.legendre.leggauss(12)
_GL_COARSE = np.polynomial.legendre.leggauss(6)

Integrand = Callable[[np.ndarray], np.ndarray]


class IntegrationError(ValueError):
    """Integrand could not be evaluated on the measure's support."""


@dataclass(frozen=True)
class Growth:
    """Envelope of an integrand: ``|f| <= c_zero |xi|^zero`` for ``|xi| <= 1``
    and ``|f| <= c_inf |xi|^inf`` beyond."""

    zero: float = 0.0
    inf: float = 0.0
    c_zero: float = 1.0
    c_inf: float = 1.0

    def rounded(self) -> "Growth":
        up = lambda c: 10.0 ** math.ceil(math.log10(c)) if c > 0 else 1e-300
        return Growth(self.zero, self.inf, up(self.c_zero), up(self.c_inf))


@dataclass(frozen=True)
class IntegralResult:
    status: str  # "finite" | "divergent" | "inconclusive"
    value: complex | float | None = None
    error_bound: float | None = None
    nodes: int = 0
    note: str = ""

    @property
    def finite(self) -> bool:
        return self.status == "finite"

    @property
    def divergent(self) -> bool:
        return self.status == "divergent"

    @property
    def inconclusive(self) -> bool:
        return self.status == "inconclusive"


def _finite(value, err, nodes, note="") -> IntegralResult:
    value = complex(value)
    value = value.real if value.imag == 0 else value
    return IntegralResult("finite", value, float(err), int(nodes), note)


def as_integrand(f: Union[Expr, str, Integrand], dim: int) -> Integrand:
    if callable(f) and not isinstance(f, Expr):
        return f
    expr = parse(f)
    if "n" in expr.variables or expr.max_xi_index() > dim:
        raise IntegrationError(f"integrand {expr.text!r} uses variables outside xi1..xi{dim}")

    def fn(points):
        env = {f"xi{i + 1}": points[:, i] for i in range(points.shape[1])}
        return np.broadcast_to(expr.evaluate(env), points.shape[:1])
    return fn


def _apply(f: Integrand, points: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return np.zeros(0)
    with np.errstate(all="ignore"):
        return np.asarray(f(points))


# ----------------------------------------------------------------------------
# rules

@dataclass
class Plan:
    """A reusable linear rule ``sum(coef * f(points))`` with a coarse twin
    sharing the same node set."""

    points: np.ndarray
    coef: np.ndarray
    coarse_coef: np.ndarray
    neglect: float  # cut-off bound, already scaled to the growth constants
    note: str = ""
    cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def merge(cls, fine_pts, fine_c, coarse_pts, coarse_c, neglect, note="") -> "Plan":
        allp = np.concatenate([fine_pts, coarse_pts])
        points, inverse = np.unique(allp, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        coef = np.zeros(len(points))
        coarse = np.zeros(len(points))
        np.add.at(coef, inverse[:len(fine_pts)], fine_c)
        np.add.at(coarse, inverse[len(fine_pts):], coarse_c)
        return cls(points, coef, coarse, neglect, note)

    @property
    def nodes(self) -> int:
        return len(self.points)

    def combine(self, fv: np.ndarray) -> tuple[complex, float, bool]:
        """Apply the rule to precomputed values ``fv = f(points)``."""
        ok = bool(np.all(np.isfinite(fv)))
        fine = self.coef @ fv
        coarse = self.coarse_coef @ fv
        rounding = 1e-15 * float(np.abs(self.coef) @ np.abs(fv)) if ok else math.inf
        return fine, float(abs(fine - coarse)) + self.neglect + rounding, ok

    def apply(self, f: Integrand) -> tuple[complex, float, bool]:
        """Return ``(value, error_estimate, all_finite)``."""
        return self.combine(_apply(f, self.points))


def _gl_panels(s_lo: float, s_hi: float, rule) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule on [s_lo, s_hi] with edges on the PANEL lattice."""
    if not s_hi > s_lo:
        return np.zeros(0), np.zeros(0)
    inner = np.arange(math.floor(s_lo / PANEL) + 1, math.ceil(s_hi / PANEL)) * PANEL
    edges = np.concatenate([[s_lo], inner[(inner > s_lo) & (inner < s_hi)], [s_hi]])
    x, w = rule
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


# ----------------------------------------------------------------------------
# series

def _point_growth(measure: SeriesAtomic) -> tuple[float, float]:
    """``|point(n)| ~ a n^r``; ``r = inf`` for super-polynomial growth."""
    ns = np.array([1e3, 1e4, 1e5, 1e6])
    pts, _ = measure.atoms(ns)
    norms = np.linalg.norm(pts, axis=1)
    if not np.all(np.isfinite(norms)):
        return math.inf, math.inf
    if np.any(norms == 0):
        return 0.0, float(np.max(norms))
    slopes = np.diff(np.log(norms)) / np.diff(np.log(ns))
    if slopes[-1] > slopes[-2] + 0.02 and slopes[-1] > 2:
        return math.inf, math.inf
    r = float(slopes[-1])
    if abs(r - round(r)) < 1e-3:
        r = float(round(r))
    return r, float(norms[-1] / ns[-1] ** r)


def _series_decay(measure: SeriesAtomic, growth: Growth) -> tuple[float, float]:
    """Decay exponent q and constant K with ``|w f|(n) <= K n^-q`` in the tail."""
    c, p = measure.tail_c, measure.tail_p
    r, a = _point_growth(measure)
    if math.isinf(r):
        if growth.inf > 0:
            return -math.inf, math.inf
        return p, 2 * c * growth.c_inf
    if r > 0.01:
        return p - r * growth.inf, 2 * c * growth.c_inf * a ** growth.inf
    if r < -0.01:
        return p - r * growth.zero, 2 * c * growth.c_zero * a ** growth.zero
    return p, 2 * c * max(growth.c_zero * a ** growth.zero, growth.c_inf * a ** growth.inf)


def series_plan(measure: SeriesAtomic, growth: Growth, tol: float) -> Plan | None:
    """Head-plus-Euler-Maclaurin rule, or None when the tail cannot be bounded."""
    if measure.tail_p is None:
        return None
    q, K = _series_decay(measure, growth)
    if not q > 1 or not math.isfinite(K):
        return None
    N = HEAD
    x_cut = (20 * K / (tol * (q - 1))) ** (1 / (q - 1)) if tol > 0 else math.inf
    s_max = min(max(math.log(max(x_cut, 4.0 * N)), math.log(N) + 1), S_LIMIT)
    neglect = K * math.exp(s_max * (1 - q)) / (q - 1)

    head_n = np.arange(1, N + 1, dtype=float)
    head_pts, head_w = measure.atoms(head_n)

    def tail_rule(rule, third):
        s, ws = _gl_panels(math.log(N), s_max, rule)
        x = np.exp(s)
        h = N / 64.0
        em_x = np.array([N, N - 2 * h, N - h, N + h, N + 2 * h])
        # -F(N)/2 - F'(N)/12 (+ F'''(N)/720), derivatives by central stencils
        em_c = np.array([-0.5, 0, 0, 0, 0]) \
            - np.array([0, 1, -8, 8, -1]) / (12 * h) / 12
        if third:
            em_c = em_c + np.array([0, -1, 2, -2, 1]) / (2 * h ** 3) / 720
        nodes = np.concatenate([x, em_x])
        pts, w = measure.atoms(nodes)
        coef = np.concatenate([ws * x, em_c]) * w
        keep = coef != 0
        return np.concatenate([head_pts, pts[keep]]), np.concatenate([head_w, coef[keep]])

    fine_pts, fine_c = tail_rule(_GL_FINE, True)
    coarse_pts, coarse_c = tail_rule(_GL_COARSE, False)
    if not (np.all(np.isfinite(fine_c)) and np.all(np.isfinite(fine_pts))
            and np.all(np.isfinite(coarse_c)) and np.all(np.isfinite(coarse_pts))):
        return None
    return Plan.merge(fine_pts, fine_c, coarse_pts, coarse_c, neglect,
                note=f"series head {N} + Euler-Maclaurin tail to n=e^{s_max:.1f}, q={q:g}")


def _series_terms(measure: SeriesAtomic, f: Integrand, ns) -> np.ndarray:
    pts, w = measure.atoms(np.asarray(ns, dtype=float))
    with np.errstate(all="ignore"):
        vals = _apply(f, pts) * w
    return vals


def _series_divergence(measure: SeriesAtomic, f: Integrand) -> str | None:
    """Numeric tail comparison: "divergent", "fast" (clearly summable) or None."""
    ns = np.array([1e4, 1e5, 1e6])
    F = _series_terms(measure, f, ns)
    mag = np.abs(F)
    if np.any(np.isnan(mag)):
        return None
    if np.any(np.isinf(mag)):
        return "divergent"
    if np.all(mag == 0):
        return "fast"
    if np.any(mag == 0):
        return None
    slopes = np.diff(np.log(mag)) / np.diff(np.log(ns))
    same_sign = np.isrealobj(F) and (np.all(F > 0) or np.all(F < 0))
    if slopes[-1] >= -0.01 and mag[-1] > 0:
        return "divergent"  # terms do not tend to zero
    if same_sign and -slopes[-1] <= 1 + 1e-3 and -slopes[-2] <= 1 + 2e-2:
        return "divergent"
    if -slopes[-1] > 1.05 and -slopes[-2] > 1.05:
        return "fast"
    return None


def _series_crude(measure: SeriesAtomic, f: Integrand, tol: float, growth: Growth | None,
                  start: int = HEAD) -> IntegralResult:
    """Direct partial sums with an analytic tail bound, capped at CAP terms."""
    if measure.tail_p is not None and growth is not None:
        q, K = _series_decay(measure, growth)
    else:
        ns = np.array([1e5, 1e6])
        mag = np.abs(_series_terms(measure, f, ns))
        if np.all(mag == 0):
            q, K = 2.0, 0.0
        elif np.all(mag > 0) and np.all(np.isfinite(mag)):
            q = -float(np.diff(np.log(mag))[0] / np.diff(np.log(ns))[0]) - 0.05
            K = 4 * mag[-1] * ns[-1] ** q
        else:
            q, K = -math.inf, math.inf
    total, done, N = 0.0, 0, start
    while True:
        n = np.arange(done + 1, N + 1, dtype=float)
        vals = _series_terms(measure, f, n)
        bad = ~np.isfinite(vals)
        if np.any(bad):
            raise IntegrationError(f"integrand undefined at atom n={int(n[bad][0])}")
        total = total + np.sum(vals)
        done = N
        bound = K * N ** (1 - q) / (q - 1) if q > 1 else math.inf
        if bound <= tol:
            return _finite(total, bound, N, "direct partial sums with power-law tail bound")
        if N >= CAP:
            return IntegralResult("inconclusive", complex(total) if np.iscomplexobj(total) else float(total),
                                  bound, N, f"tail bound {bound:.3g} above tol after {CAP} terms")
        N = min(N * 4, CAP)


# ----------------------------------------------------------------------------
# densities

def _axis_rule(lo: float, hi: float, s_min: float, s_max: float, rule):
    """Nodes/weights in xi for one axis, log-mapped on each side of zero."""
    if lo == hi:
        return np.array([lo]), np.array([1.0])
    xs, ws = [], []
    for sign, a, b in ((1.0, max(lo, 0.0), hi), (-1.0, max(-hi, 0.0), -lo)):
        if not b > a:
            continue
        s_lo = math.log(a) if a > 0 else s_min
        s_hi = math.log(b) if math.isfinite(b) else s_max
        s, w = _gl_panels(s_lo, max(s_hi, s_lo), rule)
        xs.append(sign * np.exp(s))
        ws.append(w * np.exp(s))
    return np.concatenate(xs), np.concatenate(ws)


def _density_edges(measure: Density, growth: Growth, tol: float) -> tuple[float, float, float, str | None]:
    """Cut-offs (s_min, s_max) and the neglected-mass bound; a reason string if
    the declared exponents make the integral diverge."""
    e0 = growth.zero + measure.tail_zero + 1
    einf = growth.inf + measure.tail_inf + 1
    touches_zero = any(lo <= 0 <= hi and lo != hi for lo, hi in measure.domain)
    unbounded = any(math.isinf(lo) or math.isinf(hi) for lo, hi in measure.domain)
    if touches_zero and e0 <= 0:
        return 0, 0, math.inf, f"integrand*density ~ |xi|^{e0 - 1:g} near 0 is not integrable"
    if unbounded and einf >= 0:
        return 0, 0, math.inf, f"integrand*density ~ |xi|^{einf - 1:g} at infinity is not integrable"
    k = sum(1 for lo, hi in measure.domain if lo != hi)
    probe = np.ones((1, len(measure.domain)))
    for i, (lo, hi) in enumerate(measure.domain):
        probe[0, i] = lo if lo == hi else min(max(1.0, lo), hi) if math.isfinite(hi) or lo > 1 else 1.0
    neglect, s_min, s_max = 0.0, -S_LIMIT, S_LIMIT
    if touches_zero:
        pz = probe.copy()
        pz[0, [i for i, (lo, hi) in enumerate(measure.domain) if lo <= 0 <= hi and lo != hi]] = 1e-8
        c0 = 2 * float(np.abs(measure.density(pz))[0]) / 1e-8 ** measure.tail_zero
        c0 = max(c0, 1e-300) * growth.c_zero * max(k, 1)
        x_min = (tol * e0 / (20 * c0)) ** (1 / e0)
        s_min = max(math.log(x_min), -S_LIMIT)
        neglect += c0 * math.exp(s_min * e0) / e0
    if unbounded:
        pi = probe.copy()
        pi[0, [i for i, (lo, hi) in enumerate(measure.domain) if math.isinf(lo) or math.isinf(hi)]] = 1e8
        ci = 2 * float(np.abs(measure.density(np.abs(pi)))[0]) / 1e8 ** measure.tail_inf
        ci = max(ci, 1e-300) * growth.c_inf * max(k, 1)
        x_max = (20 * ci / (tol * -einf)) ** (1 / -einf)
        s_max = min(math.log(x_max), S_LIMIT)
        neglect += ci * math.exp(s_max * einf) / -einf
    if not math.isfinite(neglect):
        return 0, 0, math.inf, "density constants are not finite"
    return s_min, s_max, neglect, None


def density_plan(measure: Density, growth: Growth, tol: float) -> Plan | str:
    """Tensor-product log-mapped rule; a string explains declared divergence."""
    s_min, s_max, neglect, reason = _density_edges(measure, growth, tol)
    if reason:
        return reason

    def build(rule):
        axes = [_axis_rule(lo, hi, s_min, s_max, rule) for lo, hi in measure.domain]
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        wgrid = np.meshgrid(*[a[1] for a in axes], indexing="ij")
        base = np.column_stack([g.ravel() for g in grids])
        w = np.prod(np.stack([g.ravel() for g in wgrid]), axis=0)
        rho = measure.density(base)
        if np.any(rho < 0):
            raise IntegrationError("density is negative on its domain")
        pts = measure.embed(base)
        return pts, w * rho

    pts, coef = build(_GL_FINE)
    cpts, ccoef = build(_GL_COARSE)
    if not (np.all(np.isfinite(coef)) and np.all(np.isfinite(pts))):
        raise IntegrationError("density or embedded coordinates are not finite on the quadrature nodes")
    return Plan.merge(pts, coef, cpts, ccoef, neglect,
                note=f"log-mapped Gauss-Legendre on s in [{s_min:.1f}, {s_max:.1f}]")


def _density_divergence(measure: Density, f: Integrand) -> str | None:
    """Numeric check of the edge behaviour of f*density (1-d radial probe)."""
    def g(s):
        base = np.ones((len(s), len(measure.domain)))
        for i, (lo, hi) in enumerate(measure.domain):
            base[:, i] = lo if lo == hi else np.exp(s) if hi > 0 else -np.exp(s)
        vals = _apply(f, measure.embed(base)) * measure.density(base) * np.exp(s)
        return vals
    verdicts = []
    for s, towards_zero in ((np.array([-20.0, -30.0]), True), (np.array([20.0, 30.0]), False)):
        if towards_zero and not any(lo <= 0 <= hi and lo != hi for lo, hi in measure.domain):
            continue
        if not towards_zero and not any(math.isinf(hi) or math.isinf(lo) for lo, hi in measure.domain):
            continue
        vals = g(s)
        mag = np.abs(vals)
        if np.any(np.isnan(mag)):
            return None
        if np.any(np.isinf(mag)) or (np.all(mag > 0) and mag[1] >= 0.5 * mag[0]):
            verdicts.append("divergent")
    return "divergent" if verdicts else None


def _estimate_growth(measure: JumpMeasure, f: Integrand) -> Growth:
    """Envelope of an unannotated integrand from probes along the diagonal."""
    d = measure.dim

    def slope(x1, x2):
        p = np.array([[x1] * d, [x2] * d], dtype=float)
        if isinstance(measure, Density):
            p = measure.embed(np.full((2, len(measure.domain)), [[x1], [x2]]))
        v = np.abs(_apply(f, p))
        if not np.all(np.isfinite(v)) or np.any(v == 0):
            return None, float(np.max(v)) if np.all(np.isfinite(v)) else math.inf
        return float(np.log(v[1] / v[0]) / np.log(x2 / x1)), float(v[0] / x1 ** (np.log(v[1] / v[0]) / np.log(x2 / x1)))
    g0, c0 = slope(1e-6, 1e-8)
    gi, ci = slope(1e6, 1e8)
    return Growth(zero=g0 - 0.05 if g0 is not None else 0.0,
                  inf=gi + 0.05 if gi is not None else 0.0,
                  c_zero=4 * c0 if g0 is not None and math.isfinite(c0) else max(c0, 1.0),
                  c_inf=4 * ci if gi is not None and math.isfinite(ci) else max(ci, 1.0))


# ----------------------------------------------------------------------------
# entry points

def measure_integral(measure: JumpMeasure, integrand, tol: float = 1e-10,
                     growth: Growth | None = None, plan: Plan | None = None) -> IntegralResult:
    """Integrate ``integrand`` (Expr, string or vectorised callable on points
    ``(K, d)``) against ``measure`` to absolute tolerance ``tol``.

    ``growth`` declares the integrand's envelope; without it the envelope is
    estimated numerically.  Divergent is returned only when the declared tail
    exponents and a numeric probe of the terms agree.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if isinstance(measure, FiniteAtomic):
        if measure.is_zero:
            return _finite(0.0, 0.0, 0)
        f = as_integrand(integrand, measure.dim)
        points, weights = measure.arrays(measure.dim)
        vals = _apply(f, points)
        bad = ~np.isfinite(vals)
        if np.any(bad):
            raise IntegrationError(f"integrand undefined at atom {tuple(points[bad][0])}")
        return _finite(np.sum(weights * vals), 0.0, len(weights), "exact finite sum")

    f = as_integrand(integrand, measure.dim)
    if growth is None:
        growth = _estimate_growth(measure, f)

    if isinstance(measure, SeriesAtomic):
        if plan is None:
            plan = series_plan(measure, growth, tol)
        if plan is None:
            if _series_divergence(measure, f) == "divergent":
                return IntegralResult("divergent", note="terms decay no faster than 1/n")
            return _series_crude(measure, f, tol, None)
        value, err, ok = plan.apply(f)
        if ok and err <= tol:
            return _finite(value, err, plan.nodes, plan.note)
        try:
            crude = _series_crude(measure, f, tol, growth)
        except IntegrationError:
            if not ok:
                raise
            crude = IntegralResult("inconclusive", error_bound=math.inf)
        if crude.finite or ok is False:
            return crude
        return IntegralResult("inconclusive", value, err, plan.nodes,
                              f"error estimate {err:.3g} exceeds tol {tol:.3g}")

    if isinstance(measure, Density):
        if plan is None:
            plan = density_plan(measure, growth, tol)
        if isinstance(plan, str):
            if _density_divergence(measure, f) == "divergent":
                return IntegralResult("divergent", note=plan)
            return IntegralResult("inconclusive", note=plan + " (numeric probe disagrees)")
        value, err, ok = plan.apply(f)
        if not ok:
            raise IntegrationError("integrand is not finite on the quadrature nodes")
        if err <= tol:
            return _finite(value, err, plan.nodes, plan.note)
        return IntegralResult("inconclusive", value, err, plan.nodes,
                              f"error estimate {err:.3g} exceeds tol {tol:.3g}")
    raise TypeError(f"unknown measure type {type(measure).__name__}")


# ----------------------------------------------------------------------------
# moment kinds

MOMENT_KINDS = ("h_square", "h_abs", "big_jump_abs", "compensator_gap", "wedge")


def moment_integrand(kind: str, index: int | None = None) -> tuple[Integrand, Growth]:
    """Integrand and envelope for a named moment; ``index`` is 1-based."""
    if kind == "h_square":
        return (lambda p: np.sum(truncation_h(p) ** 2, axis=1)), Growth(2, 0, 1, 1)
    if index is None or index < 1:
        raise ValueError(f"moment kind {kind!r} needs a 1-based coordinate index")
    k = index - 1
    if kind == "h_abs":
        return (lambda p: np.abs(truncation_h(p[:, k]))), Growth(1, 0, 1, 1)
    if kind == "big_jump_abs":
        return (lambda p: np.where(np.abs(p[:, k]) > 1, np.abs(p[:, k]), 0.0)), Growth(50, 1, 1, 1)
    if kind == "compensator_gap":
        return (lambda p: p[:, k] - truncation_h(p[:, k])), Growth(50, 1, 1, 1)
    if kind == "wedge":
        return (lambda p: np.minimum(np.abs(p[:, k]), p[:, k] ** 2)), Growth(2, 1, 1, 1)
    raise ValueError(f"unknown moment kind {kind!r}; expected one of {MOMENT_KINDS}")


def classify_moment(measure: JumpMeasure, kind: str, index: int | None = None,
                    tol: float = 1e-10) -> Verdict:
    """Holds when the named moment is finite, Fails when provably infinite."""
    if measure.dim is not None and index is not None and not 1 <= index <= measure.dim:
        raise ValueError(f"index {index} outside 1..{measure.dim}")
    f, growth = moment_integrand(kind, index)
    name = kind if index is None else f"{kind}({index})"
    res = measure_integral(measure, f, tol, growth)
    if res.finite:
        return holds(name, Evidence(f"integral of {name}", res.value, res.error_bound))
    if res.divergent:
        return fails(name, Evidence(f"integral of {name} diverges: {res.note}", math.inf, None))
    return inconclusive(name, Evidence(f"integral of {name} unresolved: {res.note}",
                                       res.value if res.value is not None else math.nan, tol))
