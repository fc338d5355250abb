"""Reference models with known closed-form behaviour."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import zeta

from .model import AffineParams, density, finite_atoms, series

ZETA2 = math.pi ** 2 / 6


def linear(b: float = -1.0) -> AffineParams:
    """One-dimensional deterministic flow ``R(u) = b u``."""
    return AffineParams.build(1, 0, beta=[[0.0], [b]])


def dirac_series() -> AffineParams:
    """State-dependent jumps of size n at rate x/n^2.

    ``R(u) = sum (e^{un} - 1)/n^2``: the wedge moment diverges, yet the process
    is conservative because ``integral du/R`` diverges at 0-.
    """
    return AffineParams.build(1, 0, beta=[[0.0], [ZETA2]],
                              kappa={1: series(["n"], "1/n^2", c=1.0, p=2.0)})


def stable_half() -> AffineParams:
    """Jump density ``xi^-3/2`` with compensating drift 4.

    ``R(u) = -2 sqrt(pi) (-u)^{1/2}``; the zero solution is not unique and the
    minimal solution from 0 is ``-pi t^2``.
    """
    return AffineParams.build(1, 0, beta=[[0.0], [4.0]],
                              kappa={1: density("xi1^(-1.5)", [[0, None]], -1.5, -1.5)})


def stoch_exp_series() -> AffineParams:
    """Two-dimensional model whose ``E(X^2)`` is a true martingale although the
    star measure has no first moment."""
    kappa = series(["n", "n"], "1/((1+n)*n^2)", c=1.0, p=3.0)
    return AffineParams.build(1, 1, beta=[[0.0, 0.0], [ZETA2 - 1, ZETA2 - 2], [0.0, 0.0]],
                              kappa={1: kappa})


def stoch_exp_heavy(c: float = 1.0) -> AffineParams:
    """As :func:`stoch_exp_series` with weights ``c n^-5/2``: the star measure
    decays like ``n^-3/2`` and ``E(X^2)`` is a strict local martingale."""
    z52, z32 = float(zeta(2.5)), float(zeta(1.5))
    kappa = series(["n", "n"], f"{c!r}*n^(-2.5)", c=c, p=2.5)
    # drift identity: beta^2 = -sum (n-1) c n^-5/2
    return AffineParams.build(1, 1, beta=[[0.0, 0.0], [c * z52, -c * (z32 - z52)], [0.0, 0.0]],
                              kappa={1: kappa})


def heavy_jump_atoms(n_atoms: int = 200) -> AffineParams:
    """Finite-activity surrogate: jumps of size n at rate x/n^2, n <= n_atoms."""
    atoms = [((float(k),), 1.0 / k ** 2) for k in range(1, n_atoms + 1)]
    drift = sum(1.0 / k ** 2 for k in range(1, n_atoms + 1))
    return AffineParams.build(1, 0, beta=[[0.0], [drift]], kappa={1: finite_atoms(atoms)})


def heston_like(kappa_rev: float = 1.0, theta: float = 0.5, sigma: float = 0.4,
                rho: float = -0.5) -> AffineParams:
    """Square-root variance with a log-price driven by it (m = 1, n = 1)."""
    alpha = np.zeros((3, 2, 2))
    alpha[1] = [[sigma ** 2, rho * sigma], [rho * sigma, 1.0]]
    beta = [[kappa_rev * theta, 0.0], [-kappa_rev, -0.5], [0.0, 0.0]]
    return AffineParams.build(1, 1, alpha=alpha, beta=beta)


CATALOG = {
    "linear": linear,
    "dirac-series": dirac_series,
    "stable-half": stable_half,
    "stoch-exp-series": stoch_exp_series,
    "stoch-exp-heavy": stoch_exp_heavy,
    "heavy-jump-atoms": heavy_jump_atoms,
    "heston-like": heston_like,
}
