"""Jump measures on D \\ {0} and the truncation function."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .expr import Expr, parse


def truncation_h(xi) -> np.ndarray:
    """Componentwise truncation: sign(x) * min(1, |x|).

    Works on a single point or on an array of points (last axis = coordinates).
    """
    xi = np.asarray(xi)
    if np.iscomplexobj(xi):
        raise TypeError("truncation_h is defined on real vectors")
    return np.clip(xi.astype(float), -1.0, 1.0)


def _pos_tuple(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class FiniteAtomic:
    """Finitely many atoms ``(point, weight)``; the empty tuple is the zero measure."""

    atoms: tuple[tuple[tuple[float, ...], float], ...] = ()

    kind = "finite_atoms"

    def __post_init__(self):
        atoms = tuple((_pos_tuple(p), float(w)) for p, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        dims = {len(p) for p, _ in atoms}
        if len(dims) > 1:
            raise ValueError(f"atoms have inconsistent dimensions {sorted(dims)}")
        for point, weight in atoms:
            if not weight > 0 or not math.isfinite(weight):
                raise ValueError(f"atom {point} has non-positive weight {weight}")
            if all(x == 0 for x in point):
                raise ValueError("an atom sits at the origin")

    @property
    def dim(self) -> int | None:
        return len(self.atoms[0][0]) if self.atoms else None

    @property
    def is_zero(self) -> bool:
        return not self.atoms

    def arrays(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        if not self.atoms:
            return np.zeros((0, d)), np.zeros(0)
        points = np.array([p for p, _ in self.atoms], dtype=float)
        weights = np.array([w for _, w in self.atoms], dtype=float)
        return points, weights

    def total_mass(self) -> float:
        return float(sum(w for _, w in self.atoms))


@dataclass(frozen=True)
class SeriesAtomic:
    """Atoms ``point(n)`` with weights ``weight(n)``, n = 1, 2, ...

    ``tail_c``/``tail_p`` declare ``weight(n) ~ tail_c * n^-tail_p``; a lifted
    measure whose tail is not a power law carries ``tail_p = None``.
    """

    point_exprs: tuple[Expr, ...]
    weight_expr: Expr
    tail_c: float | None = 1.0
    tail_p: float | None = 2.0
    truncation_tol: float = 1e-10

    kind = "series"

    def __post_init__(self):
        object.__setattr__(self, "point_exprs", tuple(parse(e) for e in self.point_exprs))
        object.__setattr__(self, "weight_expr", parse(self.weight_expr))
        for e in (*self.point_exprs, self.weight_expr):
            if e.variables - {"n"}:
                raise ValueError(f"series expression {e.text!r} may only use n")
        if self.tail_p is not None and not self.tail_p > 1:
            raise ValueError(f"declared tail exponent p={self.tail_p} must exceed 1")
        if not self.truncation_tol > 0:
            raise ValueError("truncation_tol must be positive")

    @property
    def dim(self) -> int:
        return len(self.point_exprs)

    @property
    def is_zero(self) -> bool:
        return False

    def atoms(self, n) -> tuple[np.ndarray, np.ndarray]:
        """Points ``(len(n), d)`` and weights at (possibly non-integer) indices n."""
        n = np.asarray(n, dtype=float)
        points = np.stack([np.broadcast_to(e(n=n), n.shape) for e in self.point_exprs], axis=-1)
        weights = np.broadcast_to(self.weight_expr(n=n), n.shape)
        return points, weights


@dataclass(frozen=True)
class Density:
    """Absolutely continuous measure ``expr(xi) dxi`` on a coordinate box.

    ``domain`` holds one ``(lo, hi)`` per integration coordinate, ``None`` for
    +inf (or -inf as a lower bound).  ``extra_coords`` appends coordinates that
    are functions of the integration variables, which is how image measures
    under graph maps (the lifts) stay representable.
    """

    expr: Expr
    domain: tuple[tuple[float | None, float | None], ...]
    tail_zero: float
    tail_inf: float
    quadrature_tol: float = 1e-8
    extra_coords: tuple[Expr, ...] = ()

    kind = "density"

    def __post_init__(self):
        object.__setattr__(self, "expr", parse(self.expr))
        object.__setattr__(self, "extra_coords", tuple(parse(e) for e in self.extra_coords))
        dom = []
        for lo, hi in self.domain:
            lo = -math.inf if lo is None else float(lo)
            hi = math.inf if hi is None else float(hi)
            if not lo <= hi:
                raise ValueError(f"empty domain interval [{lo}, {hi}]")
            dom.append((lo, hi))
        object.__setattr__(self, "domain", tuple(dom))
        k = len(dom)
        for e in (self.expr, *self.extra_coords):
            if "n" in e.variables or e.max_xi_index() > k:
                raise ValueError(f"density expression {e.text!r} uses variables outside xi1..xi{k}")
        if not self.quadrature_tol > 0:
            raise ValueError("quadrature_tol must be positive")

    @property
    def dim(self) -> int:
        return len(self.domain) + len(self.extra_coords)

    @property
    def is_zero(self) -> bool:
        return False

    def embed(self, base: np.ndarray) -> np.ndarray:
        """Map integration points ``(K, k)`` to measure points ``(K, dim)``."""
        if not self.extra_coords:
            return base
        env = {f"xi{i + 1}": base[:, i] for i in range(base.shape[1])}
        extra = [np.broadcast_to(e.evaluate(env), base.shape[:1]) for e in self.extra_coords]
        return np.column_stack([base, *extra])

    def density(self, base: np.ndarray) -> np.ndarray:
        env = {f"xi{i + 1}": base[:, i] for i in range(base.shape[1])}
        return np.broadcast_to(self.expr.evaluate(env), base.shape[:1])


JumpMeasure = Union[FiniteAtomic, SeriesAtomic, Density]

ZERO = FiniteAtomic(())


def finite_atoms(atoms: Sequence[tuple[Sequence[float], float]]) -> FiniteAtomic:
    return FiniteAtomic(tuple((tuple(p), w) for p, w in atoms))


def series(point_exprs, weight_expr, c=1.0, p=2.0, tol=1e-10) -> SeriesAtomic:
    return SeriesAtomic(tuple(point_exprs), weight_expr, c, p, tol)


def density(expr, domain, tail_zero, tail_inf, tol=1e-8, extra_coords=()) -> Density:
    return Density(expr, tuple(tuple(b) for b in domain), float(tail_zero),
                   float(tail_inf), tol, tuple(extra_coords))


def measure_dim(measure: JumpMeasure) -> int | None:
    return measure.dim
