"""The functions R_0..R_d and the generalized Riccati flow.

``psi' = R(psi), psi(0) = u`` and ``psi_0' = R_0(psi), psi_0(0) = 0`` are
integrated together by an embedded Dormand-Prince 5(4) pair with complex
state.  Steps that push ``Re psi_k`` (k <= m) above the tolerance are
rejected; accepted states are clamped to the closed negative orthant.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import (AffineParams, Evidence, FiniteAtomic, Growth, IntegralResult, Plan,
                    Verdict, fails, holds, measure_integral, validate_admissibility)
from .model.integration import density_plan, series_plan
from .model.measures import SeriesAtomic


class RiccatiError(RuntimeError):
    pass


class JumpIntegralError(RiccatiError):
    """The jump integral in R_j could not be resolved to tolerance."""

    def __init__(self, j: int, u, result: IntegralResult):
        super().__init__(f"jump integral of R_{j} at u={np.round(u, 6)} is {result.status}: {result.note}")
        self.j, self.u, self.result = j, u, result


class FlowError(RiccatiError):
    """Step size underflow; carries the last accepted state."""

    def __init__(self, message: str, t: float, state: np.ndarray):
        super().__init__(message)
        self.t, self.state = t, state


class MinimalSolutionError(RiccatiError):
    pass


# ----------------------------------------------------------------------------
# R

def _phi(x: np.ndarray) -> np.ndarray:
    """``e^x - 1 - x`` without cancellation for small |x|."""
    out = np.expm1(x) - x
    small = np.abs(x) < 0.1
    if np.any(small):
        xs = x[small]
        term, acc = xs * xs / 2, np.zeros_like(xs)
        for k in range(3, 12):
            acc = acc + term
            term = term * xs / k
        out[small] = acc
    return out


def _r_integrand(u: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    def f(points):
        return _r_values(_r_prep(points), points, u)
    return f


def _r_prep(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.clip(points, -1.0, 1.0), np.all(np.abs(points) <= 1.0, axis=1)


def _r_values(prep, points: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``e^{<u,xi>} - 1 - <u,h(xi)>`` on ``points`` with ``prep = _r_prep(points)``."""
    h, inside = prep
    x = points @ u
    out = np.expm1(x) - h @ u
    if np.any(inside):
        out[inside] = _phi(x[inside])  # h(xi) = xi there
    return out


def _bucket_down(x: float) -> float:
    return 10.0 ** math.floor(math.log10(x))


@dataclass(eq=False)
class RContext:
    """Parameters plus per-measure quadrature plans for evaluating R.

    ``tol`` is the relative accuracy of jump integrals: the target at ``u`` is
    ``tol * max(min(1, |u|), |integral|)``, since every R_j is O(|u|) near 0.
    Plans are cached per tolerance decade behind a lock, so a context can be
    shared between threads.
    """

    params: AffineParams
    tol: float = 1e-12
    validate: bool = True
    _plans: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if self.validate:
            violations = validate_admissibility(self.params)
            if violations:
                raise ValueError("parameters are not admissible: "
                                 + "; ".join(v.message for v in violations))
        p = self.params
        self._atoms = {}
        for j, mu in enumerate(p.kappa):
            if isinstance(mu, FiniteAtomic) and not mu.is_zero:
                points, weights = mu.arrays(p.d)
                self._atoms[j] = (points, weights, _r_prep(points))
        self._jumps = [j for j, mu in enumerate(p.kappa) if not mu.is_zero]

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def d(self) -> int:
        return self.params.d

    def _plan(self, j: int, tol: float, growth: Growth):
        key = (j, math.floor(math.log10(tol)), math.ceil(math.log10(growth.c_zero)),
               math.ceil(math.log10(growth.c_inf)))
        with self._lock:
            if key in self._plans:
                return self._plans[key]
        mu = self.params.kappa[j]
        g = growth.rounded()
        if isinstance(mu, SeriesAtomic):
            plan = series_plan(mu, g, _bucket_down(tol))
        else:
            plan = density_plan(mu, g, _bucket_down(tol))
        if isinstance(plan, Plan):
            plan.cache["r_prep"] = _r_prep(plan.points)
        with self._lock:
            self._plans[key] = plan
        return plan

    def jump_integral(self, j: int, u: np.ndarray, tol: float | None = None):
        """``integral (e^{<u,xi>} - 1 - <u,h(xi)>) kappa_j(dxi)``."""
        mu = self.params.kappa[j]
        if mu.is_zero:
            return 0.0
        size = float(np.linalg.norm(u))
        if size == 0:
            return 0.0
        if j in self._atoms:
            points, weights, prep = self._atoms[j]
            return weights @ _r_values(prep, points, u)
        target = (self.tol if tol is None else tol) * min(1.0, size)
        target = max(target, 1e-300)
        growth = Growth(2.0, 0.0, max(size * size / 2, 1e-300), 2.0 + size * math.sqrt(self.d))
        plan = self._plan(j, target, growth)
        if isinstance(plan, Plan):
            value, err, ok = plan.combine(_r_values(plan.cache["r_prep"], plan.points, u))
            if ok and err <= max(target, (self.tol if tol is None else tol) * abs(value)):
                return value
        res = measure_integral(mu, _r_integrand(u), target, growth, plan if isinstance(plan, Plan) else None)
        if res.finite:
            return res.value
        raise JumpIntegralError(j, u, res)

    def all_R(self, u: np.ndarray, tol: float | None = None) -> np.ndarray:
        """``(R_0(u), R_1(u), ..., R_d(u))``."""
        p = self.params
        out = 0.5 * np.einsum("jkl,k,l->j", p.alpha, u, u) + p.beta @ u - p.gamma
        out = out.astype(np.result_type(u, float))
        for j in self._jumps:
            out[j] += self.jump_integral(j, u, tol)
        return out


def _check_domain(ctx: RContext, u: np.ndarray, slack: float = 1e-12) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u))
    if u.shape != (ctx.d,):
        raise ValueError(f"u must have length d={ctx.d}, got shape {u.shape}")
    m = ctx.m
    if np.any(u.real[:m] > slack):
        raise ValueError(f"Re u_k must be <= 0 for k <= m, got {u[:m]}")
    if np.any(np.abs(u.real[m:]) > slack):
        raise ValueError(f"Re u_k must be 0 for k > m, got {u[m:]}")
    if np.iscomplexobj(u) and np.all(u.imag == 0):
        u = u.real
    return u


def eval_R(ctx: RContext, j: int, u, tol: float | None = None) -> complex | float:
    """R_j(u) for ``j`` in 0..d (``j = 0`` is R_0)."""
    if not 0 <= j <= ctx.d:
        raise ValueError(f"j must be in 0..{ctx.d}")
    u = _check_domain(ctx, u)
    p = ctx.params
    val = 0.5 * u @ p.alpha[j] @ u + p.beta[j] @ u - p.gamma[j] + ctx.jump_integral(j, u, tol)
    return val.item() if hasattr(val, "item") else val


def eval_R_restricted(ctx: RContext, uI, tol: float | None = None) -> np.ndarray:
    """``(R_1, ..., R_m)`` at ``(uI, 0)`` for real ``uI <= 0``."""
    uI = np.asarray(uI, dtype=float).reshape(ctx.m)
    if np.any(uI > 0):
        raise ValueError("uI must be componentwise <= 0")
    u = np.concatenate([uI, np.zeros(ctx.params.n)])
    return np.real(ctx.all_R(u, tol)[1:ctx.m + 1])


def derivative_R_fd(ctx: RContext, j: int, u, step: float = 1e-4, direction=None):
    """Central difference of R_j at u along ``direction`` (default: first axis)."""
    u = _check_domain(ctx, u)
    e = np.zeros(ctx.d) if direction is None else np.asarray(direction, dtype=complex)
    if direction is None:
        e[0] = 1.0
    return (eval_R(ctx, j, u + step * e) - eval_R(ctx, j, u - step * e)) / (2 * step)


# ----------------------------------------------------------------------------
# flow

_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array(_A[6] + [0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass(frozen=True, eq=False)
class FlowResult:
    u0: np.ndarray
    times: np.ndarray
    psi0: np.ndarray  # (len(times),)
    psi: np.ndarray   # (len(times), d)
    diagnostics: dict

    @property
    def final(self) -> tuple[complex, np.ndarray]:
        return self.psi0[-1], self.psi[-1]

    def to_dict(self) -> dict:
        c = lambda z: [float(np.real(z)), float(np.imag(z))]
        return {"u0": [c(z) for z in self.u0], "times": [float(t) for t in self.times],
                "psi0": [c(z) for z in self.psi0],
                "psi": [[c(z) for z in row] for row in self.psi],
                "diagnostics": self.diagnostics}


def solve_flow(ctx: RContext, u, T: float, tol: float = 1e-10, times: Sequence[float] | None = None,
               atol: float | None = None, real: bool | None = None,
               forcing: Callable[[float], np.ndarray] | None = None,
               max_steps: int = 200_000) -> FlowResult:
    """Integrate the Riccati system from ``psi(0) = u`` to ``T``.

    ``times`` are output times in [0, T] (default: 0 and T); steps are clipped
    to land on them exactly.  ``real`` selects the restricted real system on
    ``(uI, 0)`` and is inferred from ``u`` when omitted.  ``forcing(t)`` adds a
    perturbation to the right-hand side of the first m coordinates (used by
    the comparison tests).
    """
    if not T > 0 or not tol > 0:
        raise ValueError("T and tol must be positive")
    u = _check_domain(ctx, u)
    m, d = ctx.m, ctx.d
    if real is None:
        real = not np.iscomplexobj(u) and np.all(u[m:] == 0)
    if real and (np.iscomplexobj(u) or np.any(u[m:] != 0)):
        raise ValueError("real mode needs u = (uI, 0) with real uI")
    atol = tol if atol is None else atol
    times = np.array([0.0, T] if times is None else sorted(set(float(t) for t in times) | {0.0}))
    if times[-1] > T * (1 + 1e-12) or times[0] < 0:
        raise ValueError("output times must lie in [0, T]")
    T = times[-1]
    jump_tol = tol / 100
    dtype = float if real else complex
    n_state = (m if real else d) + 1
    bound = np.arange(1, m + 1)

    def rhs(t, y):
        psi = y[1:]
        if real:
            psi = np.concatenate([np.minimum(psi, 0.0), np.zeros(ctx.params.n)])
        else:
            psi = psi.copy()
            psi[:m] = np.minimum(psi[:m].real, 0.0) + 1j * psi[:m].imag
            psi[m:] = 1j * psi[m:].imag
        r = ctx.all_R(psi, jump_tol)
        out = r[:n_state].astype(dtype) if real else r.astype(dtype)
        if forcing is not None:
            out[1:m + 1] += forcing(t)
        return out

    y = np.zeros(n_state, dtype=dtype)
    y[1:] = u[:n_state - 1]
    f = rhs(0.0, y)
    evals = 1
    # psi_0 does not feed back into the system, so it never needs more than tol
    atol_vec = np.full(n_state, float(atol))
    atol_vec[0] = max(atol, tol)
    scale = atol_vec + tol * np.abs(y)
    d0, d1 = np.max(np.abs(y) / scale), np.max(np.abs(f) / scale)
    h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
    h = min(h, T)

    out_psi = np.zeros((len(times), n_state), dtype=dtype)
    out_psi[0] = y
    t, k_out = 0.0, 1
    accepted = rejected = clamped = 0
    max_err, min_dist = 0.0, math.inf
    if m:
        min_dist = float(np.min(-np.real(y[bound])))

    while k_out < len(times):
        if accepted + rejected > max_steps:
            raise FlowError(f"more than {max_steps} steps before t={times[k_out]}", t, y)
        target = times[k_out]
        h_try = min(h, target - t)
        if h_try < 1e-14 * max(1.0, abs(t)):
            raise FlowError(f"step size underflow at t={t:.6g}: possible non-uniqueness region",
                            t, y)
        k = [f]
        for s in range(1, 7):
            ys = y + h_try * sum(a * kk for a, kk in zip(_A[s], k))
            k.append(rhs(t + _C[s] * h_try, ys))
        evals += 6
        y_new = y + h_try * sum(b * kk for b, kk in zip(_B5, k) if b)
        err_vec = h_try * sum(e * kk for e, kk in zip(_E, k))
        sc = atol_vec + tol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / sc))
        # coordinates already on the boundary are clamped; interior ones must not jump past it
        inside = np.real(y[bound]) < -atol
        overshoot = m and bool(np.any(np.real(y_new[bound])[inside] > tol))
        if not np.all(np.isfinite(y_new)):
            err = math.inf
        if err <= 1.0 and not overshoot:
            re = np.real(y_new[bound])
            clamped_now = bool(np.any(re > 0))
            if clamped_now:
                clamped += 1
                y_new[bound] = np.minimum(re, 0.0) + (0 if real else 1j * np.imag(y_new[bound]))
            t = target if h_try == target - t else t + h_try
            y = y_new
            if clamped_now:
                f = rhs(t, y)
                evals += 1
            else:
                f = k[6]
            accepted += 1
            max_err = max(max_err, float(np.max(np.abs(err_vec))))
            if m:
                min_dist = min(min_dist, float(np.min(-np.real(y[bound]))))
            if t == target:
                out_psi[k_out] = y
                k_out += 1
            fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = h_try * fac if h_try == h or fac < 1 else max(h, h_try * fac)
        else:
            rejected += 1
            fac = 0.5 if overshoot or not math.isfinite(err) else max(0.2, 0.9 * err ** -0.25)
            h = h_try * fac

    psi = np.zeros((len(times), d), dtype=complex if not real else float)
    psi[:, :n_state - 1] = out_psi[:, 1:]
    diagnostics = {"accepted": accepted, "rejected": rejected, "rhs_evals": evals,
                   "clamped": clamped, "max_local_error": max_err,
                   "min_boundary_distance": None if not m else min_dist,
                   "mode": "real" if real else "complex", "tol": tol, "atol": atol}
    return FlowResult(np.asarray(u), times, out_psi[:, 0], psi, diagnostics)


def flow_property_check(ctx: RContext, u, s: float, t: float, tol: float = 1e-10) -> float:
    """``|psi(s+t,u) - psi(t,psi(s,u))|`` (max norm, psi_0 included)."""
    u = _check_domain(ctx, u)
    whole = solve_flow(ctx, u, s + t, tol)
    first = solve_flow(ctx, u, s, tol)
    p0s, ps = first.final
    ps = np.array(ps)
    ps[:ctx.m] = np.minimum(np.real(ps[:ctx.m]), 0) + (1j * np.imag(ps[:ctx.m]) if np.iscomplexobj(ps) else 0)
    second = solve_flow(ctx, ps, t, tol)
    p0w, pw = whole.final
    p0c, pc = second.final
    return float(max(abs(p0w - (p0s + p0c)), np.max(np.abs(pw - pc))))


# ----------------------------------------------------------------------------
# Osgood shells (m = 1)

@dataclass(frozen=True)
class OsgoodShells:
    """Shell integrals ``c_k = int du/|R(u)|`` over ``[-delta 2^{1-k}, -delta 2^{-k}]``."""

    delta: float
    shells: np.ndarray
    sign: str  # "negative", "positive", "zero" or "mixed"
    ratio: float  # median ratio of successive shells over the last 10
    exponent: float  # fitted decay exponent a in c_k ~ k^-a over the last 10

    @property
    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.shells)

    def classify(self, cauchy_tol: float = 1e-9) -> str:
        """"convergent", "divergent" or "unknown"."""
        if self.sign in ("positive", "zero"):
            return "divergent"
        if self.sign == "mixed":
            return "unknown"
        last = self.shells[-10:]
        if np.sum(last) < cauchy_tol:
            return "convergent"
        ratios = last[1:] / last[:-1]
        if np.all(ratios <= 0.9):
            return "convergent"
        if self.exponent <= 1.0:
            return "divergent"
        return "unknown"

    def tail_bound(self) -> float:
        """Bound on the integral beyond the last shell (geometric tails only)."""
        last = self.shells[-10:]
        r = float(np.max(last[1:] / last[:-1]))
        if r >= 1:
            return math.inf
        return float(self.shells[-1] * r / (1 - r))


def osgood_shells(ctx: RContext, delta: float = 1e-2, levels: int = 40) -> OsgoodShells:
    """Integrate ``1/R_1(u, 0)`` over geometrically shrinking shells towards 0-."""
    if ctx.m != 1:
        raise ValueError("the Osgood criterion applies to m = 1 only")
    x, w = np.polynomial.legendre.leggauss(12)
    ln2 = math.log(2)
    shells, signs = [], set()
    for k in range(1, levels + 1):
        a, b = math.log(delta) - k * ln2, math.log(delta) - (k - 1) * ln2
        s = 0.5 * (b - a) * x + 0.5 * (a + b)
        vals = np.array([eval_R_restricted(ctx, [-math.exp(si)])[0] for si in s])
        if np.all(vals == 0):
            signs.add("zero")
            shells.append(math.inf)
            continue
        signs.add("negative" if np.all(vals < 0) else "positive" if np.all(vals > 0) else "mixed")
        shells.append(float(np.sum(0.5 * (b - a) * w * np.exp(s) / np.abs(vals))))
    sign = signs.pop() if len(signs) == 1 else "mixed"
    shells = np.array(shells)
    last = shells[-10:]
    with np.errstate(all="ignore"):
        ratio = float(np.median(last[1:] / last[:-1]))
        kk = np.arange(levels - 9, levels + 1)
        exponent = float(-np.polyfit(np.log(kk), np.log(last), 1)[0]) if np.all(last > 0) and np.all(np.isfinite(last)) else math.nan
    return OsgoodShells(delta, shells, sign, ratio, exponent)


# ----------------------------------------------------------------------------
# minimal solution

DEFAULT_SCHEDULE = tuple(10.0 ** -k for k in range(2, 21, 2))


@dataclass(frozen=True, eq=False)
class MinimalSolution:
    """Limit of interior solutions from ``-eps (1,...,1)`` as eps -> 0."""

    flow: FlowResult
    converged: bool
    convergence_error: float
    method: str
    schedule: tuple[float, ...]
    sup_differences: tuple[float, ...]

    @property
    def times(self) -> np.ndarray:
        return self.flow.times

    @property
    def psi_I(self) -> np.ndarray:
        return np.real(self.flow.psi)

    @property
    def sup_abs(self) -> float:
        m = len(self.flow.u0)
        return float(np.max(np.abs(self.flow.psi))) if m else 0.0

    def to_dict(self) -> dict:
        return {"converged": self.converged, "convergence_error": self.convergence_error,
                "method": self.method, "schedule": list(self.schedule),
                "sup_differences": list(self.sup_differences), "sup_abs": self.sup_abs,
                "flow": self.flow.to_dict()}


def _restricted_flow(ctx, eps, T, times, tol):
    u = np.concatenate([-eps * np.ones(ctx.m), np.zeros(ctx.params.n)])
    return solve_flow(ctx, u, T, tol=tol, times=times, atol=min(tol, eps * 1e-4), real=True)


def _trim(flow: FlowResult, m: int, u0: np.ndarray, diagnostics: dict) -> FlowResult:
    return FlowResult(u0, flow.times, np.real(flow.psi0), np.real(flow.psi[:, :m]), diagnostics)


def minimal_solution_zero(ctx: RContext, T: float = 10.0, schedule: Sequence[float] = DEFAULT_SCHEDULE,
                          times: Sequence[float] | None = None, tol: float = 1e-9,
                          converge_tol: float = 1e-7, monotone_tol: float = 1e-6) -> MinimalSolution:
    """Estimate ``psi_I(t, 0)`` (and ``psi_0(t, 0)``) as the limit of flows
    started at ``-eps (1,...,1)``.

    Converged when successive sup-differences drop below ``converge_tol``.
    For m = 1 a non-converged schedule falls back on the Osgood shells: a
    divergent integral makes 0 the only solution, a convergent one gives the
    solution leaving 0 immediately as ``psi(t - t_eta, -eta)`` where
    ``t_eta = int_{-eta}^0 du/|R|``.
    """
    schedule = tuple(float(e) for e in schedule)
    if any(e <= 0 for e in schedule) or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly decreasing and positive")
    m = ctx.m
    grid = np.linspace(0.0, T, 101) if times is None else np.array(sorted(set(times) | {0.0}))
    u0 = np.zeros(m)
    if m == 0:
        r0 = float(np.real(ctx.all_R(np.zeros(ctx.d))[0]))
        flow = FlowResult(u0, grid, r0 * grid, np.zeros((len(grid), 0)), {"mode": "trivial"})
        return MinimalSolution(flow, True, 0.0, "no positive coordinates", (), ())

    prev, diffs, used = None, [], []
    for eps in schedule:
        flow = _restricted_flow(ctx, eps, grid[-1], grid, tol)
        used.append(eps)
        cur = np.column_stack([np.real(flow.psi0), np.real(flow.psi[:, :m])])
        if prev is not None:
            gap = cur[:, 1:] - prev[:, 1:]
            if np.max(gap) < -monotone_tol:
                i = int(np.argmin(np.min(gap, axis=1)))
                raise MinimalSolutionError(
                    f"trajectories not monotone in eps: psi(t={grid[i]:.4g}) from eps={eps:g} "
                    f"lies {-np.min(gap[i]):.3g} below the one from the previous eps")
            diffs.append(float(np.max(np.abs(cur - prev))))
            if diffs[-1] < converge_tol:
                diag = dict(flow.diagnostics, eps=eps)
                return MinimalSolution(_trim(flow, m, u0, diag), True, diffs[-1],
                                       "epsilon-limit", tuple(used), tuple(diffs))
        prev = cur

    if m == 1:
        shells = osgood_shells(ctx)
        verdict = shells.classify()
        if verdict == "divergent":
            r0 = float(np.real(ctx.all_R(np.zeros(ctx.d))[0]))
            flow = FlowResult(u0, grid, r0 * grid, np.zeros((len(grid), 1)),
                              {"mode": "osgood", "shell_exponent": shells.exponent})
            return MinimalSolution(flow, True, 0.0, "osgood-divergent: zero solution is unique",
                                   tuple(used), tuple(diffs))
        if verdict == "convergent":
            return _osgood_clock(ctx, grid, tol, tuple(used), tuple(diffs))
    last = FlowResult(u0, grid, prev[:, 0], prev[:, 1:], {"mode": "not converged"})
    return MinimalSolution(last, False, diffs[-1] if diffs else math.inf, "epsilon-limit",
                           tuple(used), tuple(diffs))


def _osgood_clock(ctx, grid, tol, used, diffs, eta: float = 1e-10) -> MinimalSolution:
    shells = osgood_shells(ctx, delta=eta)
    t_eta = float(np.sum(shells.shells)) + shells.tail_bound()
    shifted = np.clip(grid - t_eta, 0.0, None)
    pts = sorted(set(shifted) | {0.0})
    flow = solve_flow(ctx, np.array([-eta] + [0.0] * ctx.params.n), max(pts[-1], t_eta),
                      tol=tol, times=pts, atol=min(tol, eta * 1e-4), real=True)
    idx = np.searchsorted(flow.times, shifted)
    psi = np.real(flow.psi[idx, :1])
    early = grid < t_eta
    psi[early, 0] = -eta * grid[early] / t_eta
    psi0 = np.real(flow.psi0[idx])
    r0_scale = abs(float(np.real(ctx.all_R(np.array([-eta] + [0.0] * ctx.params.n))[0])))
    psi0 = psi0 + np.where(early, 0.0, r0_scale * t_eta)
    err = eta + shells.tail_bound() * float(np.max(np.abs(np.real(flow.psi[:, 0])) + 1))
    diag = dict(flow.diagnostics, eta=eta, t_eta=t_eta)
    out = FlowResult(np.zeros(1), grid, psi0, psi, diag)
    return MinimalSolution(out, True, err, "osgood-convergent: escape clock from -eta",
                           used, diffs)


# ----------------------------------------------------------------------------
# quasimonotonicity

def check_quasimonotone(ctx: RContext, samples: int = 1000, seed: int = 0, tol: float = 1e-9,
                        field: Callable[[np.ndarray], np.ndarray] | None = None) -> Verdict:
    """Sample ``x <= y`` in R_-^m with ``x_i = y_i`` and test ``R_i(x) <= R_i(y)``.

    ``field`` replaces the restricted R (a negative-control hook).
    """
    m = ctx.m
    if m < 1:
        raise ValueError("quasimonotonicity needs m >= 1")
    if m == 1:
        return holds("quasimonotone", Evidence("m = 1: the condition is vacuous", 0.0, tol))
    rng = np.random.default_rng(seed)
    fld = field or (lambda v: eval_R_restricted(ctx, v))
    worst = -math.inf
    for _ in range(samples):
        y = -rng.exponential(1.0, m) * rng.choice([1e-3, 1e-1, 1.0, 3.0])
        x = y - rng.exponential(1.0, m) * (rng.random(m) < 0.7)
        i = int(rng.integers(m))
        x[i] = y[i]
        gap = float(fld(x)[i] - fld(y)[i])
        scale = 1.0 + abs(float(fld(y)[i]))
        worst = max(worst, gap / scale)
        if gap > tol * scale:
            return fails("quasimonotone", Evidence(
                f"R_{i + 1}(x) > R_{i + 1}(y) at x={np.round(x, 6).tolist()}, y={np.round(y, 6).tolist()}",
                gap, tol))
    return holds("quasimonotone", Evidence(f"{samples} sampled pairs, worst scaled gap", worst, tol))
