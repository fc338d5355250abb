"""Admissible parameter tuples and their validation.

Indexing: parameter index ``j`` runs over ``0..d`` (``j = 0`` is the constant
part); coordinate indices ``k, l, i`` in public records are 1-based, as in the
usual notation, while arrays are 0-based.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .integration import HEAD, measure_integral, moment_integrand
from .measures import ZERO, FiniteAtomic, JumpMeasure, SeriesAtomic, truncation_h

CROSS_DRIFT_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AffineParams:
    """``(alpha, beta, gamma, kappa)`` on ``R_+^m x R^n``.

    ``alpha`` has shape ``(d+1, d, d)``, ``beta`` ``(d+1, d)``, ``gamma``
    ``(d+1,)`` and ``kappa`` holds ``d+1`` jump measures.
    """

    m: int
    n: int
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    kappa: tuple[JumpMeasure, ...]
    source: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 0 or self.n < 0 or self.m + self.n < 1:
            raise ValueError(f"need m, n >= 0 and m + n >= 1, got m={self.m}, n={self.n}")
        d = self.m + self.n
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "n", int(self.n))
        alpha = np.asarray(self.alpha, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        gamma = np.asarray(self.gamma, dtype=float)
        for name, arr, shape in (("alpha", alpha, (d + 1, d, d)), ("beta", beta, (d + 1, d)),
                                 ("gamma", gamma, (d + 1,))):
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        kappa = tuple(self.kappa)
        if len(kappa) != d + 1:
            raise ValueError(f"kappa has {len(kappa)} measures, expected {d + 1}")
        for j, mu in enumerate(kappa):
            if mu.dim is not None and mu.dim != d:
                raise ValueError(f"kappa[{j}] lives in dimension {mu.dim}, expected {d}")
        object.__setattr__(self, "alpha", _frozen(alpha))
        object.__setattr__(self, "beta", _frozen(beta))
        object.__setattr__(self, "gamma", _frozen(gamma))
        object.__setattr__(self, "kappa", kappa)

    @property
    def d(self) -> int:
        return self.m + self.n

    def replace(self, **changes) -> "AffineParams":
        changes.setdefault("source", None)
        return replace(self, **changes)

    def with_beta(self, j: int, k: int, value: float) -> "AffineParams":
        """Copy with ``beta_j^k`` (k 1-based) set to ``value``."""
        beta = np.array(self.beta)
        beta[j, k - 1] = value
        return self.replace(beta=beta)

    @classmethod
    def build(cls, m: int, n: int, alpha=None, beta=None, gamma=None,
              kappa: Sequence[JumpMeasure] | dict | None = None, source: dict | None = None) -> "AffineParams":
        """Convenience constructor; omitted parts are zero, ``kappa`` may be a
        ``{j: measure}`` dict."""
        d = m + n
        if isinstance(kappa, dict):
            kappa = [kappa.get(j, ZERO) for j in range(d + 1)]
        return cls(m, n,
                   np.zeros((d + 1, d, d)) if alpha is None else alpha,
                   np.zeros((d + 1, d)) if beta is None else beta,
                   np.zeros(d + 1) if gamma is None else gamma,
                   tuple(kappa) if kappa is not None else (ZERO,) * (d + 1), source)


@dataclass(frozen=True)
class Violation:
    """One violated (or unresolved) admissibility bullet."""

    bullet: str
    index: tuple[int, ...]
    quantity: float
    message: str
    unresolved: bool = False

    def to_dict(self) -> dict:
        q = self.quantity
        return {"bullet": self.bullet, "index": list(self.index),
                "quantity": None if q is None or (isinstance(q, float) and math.isnan(q)) else q,
                "message": self.message, "unresolved": self.unresolved}


def _support_violations(mu: JumpMeasure, j: int, m: int) -> list[Violation]:
    """Points must lie in D minus the origin: first m coordinates >= 0."""
    if m == 0 or mu.is_zero:
        return []
    if isinstance(mu, FiniteAtomic):
        pts, _ = mu.arrays(mu.dim)
    elif isinstance(mu, SeriesAtomic):
        pts, _ = mu.atoms(np.concatenate([np.arange(1, HEAD + 1), np.geomspace(HEAD, 1e8, 64)]))
    else:
        bad = [k + 1 for k, (lo, _) in enumerate(mu.domain[:m]) if lo < 0]
        if bad:
            return [Violation("kappa_support", (j, bad[0]), mu.domain[bad[0] - 1][0],
                              f"kappa_{j} density domain reaches negative values of coordinate {bad[0]} <= m")]
        if len(mu.domain) >= m:
            return []
        probe = np.abs(np.random.default_rng(0).standard_cauchy((512, len(mu.domain))))
        pts = mu.embed(probe)
    neg = pts[:, :m] < 0
    if np.any(neg):
        row, col = np.argwhere(neg)[0]
        return [Violation("kappa_support", (j, int(col) + 1), float(pts[row, col]),
                          f"kappa_{j} charges a point with negative coordinate {col + 1} <= m")]
    return []


def validate_admissibility(params: AffineParams, tol: float = 1e-10) -> list[Violation]:
    """One record per violated bullet; an empty list means admissible.

    Integral conditions that cannot be resolved numerically produce records
    flagged ``unresolved``.
    """
    m, d = params.m, params.d
    out: list[Violation] = []
    a, b, g = params.alpha, params.beta, params.gamma

    for j in range(d + 1):
        if not np.allclose(a[j], a[j].T, atol=1e-12):
            out.append(Violation("alpha_psd", (j,), float(np.max(np.abs(a[j] - a[j].T))),
                                 f"alpha_{j} is not symmetric"))
        else:
            lam = float(np.min(np.linalg.eigvalsh(a[j]))) if d else 0.0
            if lam < -1e-12:
                out.append(Violation("alpha_psd", (j,), lam, f"alpha_{j} has negative eigenvalue {lam:g}"))
        if j > m and np.any(a[j] != 0):
            out.append(Violation("alpha_zero", (j,), float(np.max(np.abs(a[j]))),
                                 f"alpha_{j} must vanish for j > m"))
        if j <= m:
            for k in range(1, m + 1):
                for l in range(1, m + 1):
                    if not (k == l == j) and a[j, k - 1, l - 1] != 0:
                        out.append(Violation("alpha_block", (j, k, l), float(a[j, k - 1, l - 1]),
                                             f"alpha_{j}^{{{k}{l}}} must vanish unless k = l = j"))

    for j in range(d + 1):
        mu = params.kappa[j]
        if j > m:
            if not mu.is_zero:
                out.append(Violation("kappa_zero", (j,), math.nan, f"kappa_{j} must vanish for j > m"))
            continue
        out.extend(_support_violations(mu, j, m))
        f, growth = moment_integrand("h_square")
        res = measure_integral(mu, f, tol, growth)
        if not res.finite:
            out.append(Violation("kappa_h_square", (j,), math.inf if res.divergent else math.nan,
                                 f"integral of |h|^2 against kappa_{j} is {res.status}",
                                 unresolved=res.inconclusive))
        for k in range(1, m + 1):
            if k == j:
                continue
            f, growth = moment_integrand("h_abs", k)
            res = measure_integral(mu, f, tol, growth)
            if not res.finite:
                out.append(Violation("kappa_h_abs", (j, k), math.inf if res.divergent else math.nan,
                                     f"integral of |h_{k}| against kappa_{j} is {res.status}",
                                     unresolved=res.inconclusive))
                continue
            hk = measure_integral(mu, lambda p, k=k: truncation_h(p[:, k - 1]), tol, growth)
            slack = float(b[j, k - 1]) - float(np.real(hk.value))
            if slack < -CROSS_DRIFT_TOL:
                out.append(Violation("beta_cross", (j, k), slack,
                                     f"beta_{j}^{k} - integral h_{k} dkappa_{j} = {slack:.3g} < 0"))

    for j in range(m + 1, d + 1):
        for k in range(1, m + 1):
            if b[j, k - 1] != 0:
                out.append(Violation("beta_zero", (j, k), float(b[j, k - 1]),
                                     f"beta_{j}^{k} must vanish for j > m, k <= m"))
    for j in range(d + 1):
        if g[j] < 0:
            out.append(Violation("gamma_nonneg", (j,), float(g[j]), f"gamma_{j} = {g[j]:g} is negative"))
        elif j > m and g[j] != 0:
            out.append(Violation("gamma_zero", (j,), float(g[j]), f"gamma_{j} must vanish for j > m"))
    return out


def is_admissible(params: AffineParams, tol: float = 1e-10) -> bool:
    return not validate_admissibility(params, tol)
