"""Monte Carlo simulation of finite-activity affine jump-diffusions.

Euler steps use the semimartingale characteristics relative to the
truncation h: drift ``beta(X) - integral h dnu(X)``, covariance
``alpha_0 + sum X^j alpha_j`` and raw (uncompensated) jumps at the state
dependent intensity ``kappa_0 + sum X^j kappa_j``, frozen over each step.
Paths are simulated in blocks, each with its own seeded stream, so results
do not depend on how blocks are scheduled.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import AffineParams, FiniteAtomic
from .model.integration import CAP
from .model.measures import Density, SeriesAtomic, truncation_h
from .martingale import drift_residuals
from .riccati import RContext, solve_flow

BLOCK = 25_000
MOM_BLOCKS = 16


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    x0: tuple[float, ...]
    T: float = 1.0
    steps: int = 1000  # per unit time
    paths: int = 10_000
    seed: int = 0
    cap: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.steps < 1 or self.paths < 1:
            raise ValueError("steps and paths must be at least 1")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T * self.steps)))

    @property
    def dt(self) -> float:
        return self.T / self.n_steps


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    median_of_means: float
    n: int

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr,
                "median_of_means": self.median_of_means, "n": self.n}


def estimate(values: np.ndarray) -> Estimate:
    values = np.asarray(values, dtype=float)
    n = len(values)
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    blocks = np.array_split(values, min(MOM_BLOCKS, n))
    mom = float(np.median([b.mean() for b in blocks]))
    return Estimate(mean, stderr, mom, n)


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    config: SimConfig
    terminal: np.ndarray        # (N, d), frozen at the cap for exploded paths
    time_integral: np.ndarray   # (N, d), integral of X_s ds
    jump_counts: np.ndarray     # (N,)
    exploded: np.ndarray        # (N,) bool
    stoch_exp: dict = field(default_factory=dict)  # i -> (N,) values of E(X^i)_T
    clipped: int = 0            # negative excursions clipped to 0
    jump_log: list | None = None  # (path, time, mark) when requested

    @property
    def clip_fraction(self) -> float:
        steps = self.config.n_steps * len(self.jump_counts)
        return self.clipped / steps

    def summary(self) -> dict:
        n = len(self.jump_counts)
        freq = float(np.mean(self.exploded))
        return {"paths": n, "steps": self.config.n_steps, "dt": self.config.dt,
                "terminal_mean": np.mean(self.terminal, axis=0).tolist(),
                "terminal_stderr": (np.std(self.terminal, axis=0, ddof=1) / math.sqrt(n)).tolist() if n > 1 else None,
                "mean_jumps": float(np.mean(self.jump_counts)),
                "explosions": int(np.sum(self.exploded)), "explosion_frequency": freq,
                "clipped": self.clipped, "clip_fraction": self.clip_fraction,
                "clip_warning": self.clip_fraction > 0.01}


# ----------------------------------------------------------------------------
# model preparation

def _finite(mu, j: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    if mu.is_zero:
        return np.zeros((0, d)), np.zeros(0)
    if isinstance(mu, FiniteAtomic):
        return mu.arrays(d)
    if isinstance(mu, SeriesAtomic):
        return _series_head(mu, j)
    raise SimulationError(f"kappa_{j} is a density: infinite activity cannot be simulated")


def _series_head(mu: SeriesAtomic, j: int) -> tuple[np.ndarray, np.ndarray]:
    """First N atoms with the declared tail mass below the truncation tolerance."""
    if mu.tail_p is None or mu.tail_c is None:
        raise SimulationError(f"kappa_{j}: series without a declared power tail has no total-mass bound")
    p, c = mu.tail_p, mu.tail_c
    n = math.ceil((2 * c / ((p - 1) * mu.truncation_tol)) ** (1 / (p - 1)))
    if n > CAP:
        raise SimulationError(f"kappa_{j}: reaching truncation tol {mu.truncation_tol:g} needs {n} atoms "
                              f"(> {CAP}); truncate the model explicitly")
    return mu.atoms(np.arange(1, n + 1, dtype=float))


def truncate_model(params: AffineParams, n_atoms: int, components: Sequence[int] | None = None) -> AffineParams:
    """Keep the first ``n_atoms`` atoms of every series measure and re-solve
    ``beta_j^i`` so the drift identity holds exactly for each listed
    component i (default: components whose identity holds before truncation).
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be positive")
    d = params.d
    if components is None:
        components = [i for i in range(1, d + 1)
                      if all(abs(r) <= 1e-8 for r, _ in drift_residuals(params, i))]
    kappa = []
    for j, mu in enumerate(params.kappa):
        if isinstance(mu, SeriesAtomic):
            pts, w = mu.atoms(np.arange(1, n_atoms + 1, dtype=float))
            kappa.append(FiniteAtomic(tuple((tuple(p), float(x)) for p, x in zip(pts, w))))
        elif isinstance(mu, Density):
            raise SimulationError(f"kappa_{j} is a density and cannot be truncated to atoms")
        else:
            kappa.append(mu)
    out = params.replace(kappa=tuple(kappa))
    beta = np.array(out.beta)
    for i in components:
        for j, mu in enumerate(out.kappa):
            if mu.is_zero:
                continue
            pts, w = mu.arrays(d)
            beta[j, i - 1] = -float(w @ (pts[:, i - 1] - truncation_h(pts[:, i - 1])))
    return out.replace(beta=beta)


@dataclass
class _Model:
    m: int
    d: int
    drift0: np.ndarray          # beta_0 - int h dkappa_0
    drift: np.ndarray           # (m, d)
    sqrt_alpha: list            # (j, L) with alpha_j = L L^T
    rates: np.ndarray           # (m+1,) total masses
    atoms: list                 # per j: (points, cumulative normalized weights)


def _prepare(params: AffineParams) -> _Model:
    if np.any(params.gamma != 0):
        raise SimulationError("killing (gamma != 0) is not simulated")
    m, d = params.m, params.d
    drift = np.array(params.beta, dtype=float)
    rates = np.zeros(m + 1)
    atoms = []
    for j in range(d + 1):
        pts, w = _finite(params.kappa[j], j, d)
        if j > m:
            continue
        if len(w):
            drift[j] -= w @ truncation_h(pts)
            rates[j] = float(np.sum(w))
            atoms.append((pts, np.cumsum(w) / np.sum(w)))
        else:
            atoms.append((pts, np.zeros(0)))
    roots = []
    for j in range(m + 1):
        a = params.alpha[j]
        if np.any(a != 0):
            lam, vec = np.linalg.eigh(a)
            # roundoff eigenvalues of a singular alpha would turn into ~1e-8 noise under the sqrt
            lam[lam <= 1e-12 * max(lam.max(), 0.0)] = 0.0
            roots.append((j, vec * np.sqrt(lam)))
    return _Model(m, d, drift[0], drift[1:m + 1], roots, rates, atoms)


# ----------------------------------------------------------------------------
# simulation

def _simulate_block(model: _Model, cfg: SimConfig, start: int, size: int, block: int,
                    track: tuple[int, ...], log_jumps: bool):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, block]))
    m, d = model.m, model.d
    dt, n_steps = cfg.dt, cfg.n_steps
    sq = math.sqrt(dt)
    X = np.tile(np.array(cfg.x0, dtype=float), (size, 1))
    integ = np.zeros((size, d))
    counts = np.zeros(size, dtype=np.int64)
    exploded = np.zeros(size, dtype=bool)
    cont = {i: np.zeros(size) for i in track}
    qv = {i: np.zeros(size) for i in track}
    logjump = {i: np.zeros(size) for i in track}
    clipped = 0
    log = [] if log_jumps else None
    alive = np.ones(size, dtype=bool)
    for step in range(n_steps):
        live = np.flatnonzero(alive) if not alive.all() else slice(None)
        Xl = X[live]
        nl = Xl.shape[0]
        if nl == 0:
            break
        state = Xl[:, :m]
        inc = (model.drift0 + state @ model.drift) * dt
        var_i = {i: np.zeros(nl) for i in track}
        for j, L in model.sqrt_alpha:
            scale = np.ones(nl) if j == 0 else np.sqrt(np.maximum(state[:, j - 1], 0.0))
            z = rng.standard_normal((nl, d)) @ L.T
            inc += (scale * sq)[:, None] * z
            for i in track:
                var_i[i] += (scale ** 2) * float(L[i - 1] @ L[i - 1])
        for i in track:
            cont[i][live] += inc[:, i - 1]
            qv[i][live] += var_i[i] * dt
        integ[live] += Xl * dt
        Xl = Xl + inc
        # jumps at the frozen intensity rates_0 + sum X^j rates_j
        weights = np.column_stack([np.ones(nl), np.maximum(state, 0.0)]) * model.rates
        lam = weights.sum(axis=1)
        k = rng.poisson(lam * dt)
        if np.any(k):
            who = np.repeat(np.arange(nl), k)
            cum = np.cumsum(weights[who], axis=1)
            pick = rng.random(len(who)) * cum[:, -1]
            src = np.minimum((cum < pick[:, None]).sum(axis=1), m)
            marks = np.empty((len(who), d))
            for j in np.unique(src):
                sel = src == j
                pts, cw = model.atoms[j]
                idx = np.minimum(np.searchsorted(cw, rng.random(int(sel.sum())), side="right"), len(cw) - 1)
                marks[sel] = pts[idx]
            np.add.at(Xl, who, marks)
            np.add.at(counts, (np.arange(size)[live])[who] if not isinstance(live, slice) else who, 1)
            for i in track:
                factor = 1.0 + marks[:, i - 1]
                if np.any(factor <= 0):
                    raise SimulationError(f"a jump of X^{i} <= -1 makes E(X^{i}) non-positive")
                rows = (np.arange(size)[live])[who] if not isinstance(live, slice) else who
                np.add.at(logjump[i], rows, np.log(factor))
            if log is not None:
                rows = (np.arange(size)[live])[who] if not isinstance(live, slice) else who
                log.extend((start + int(r), (step + 1) * dt, tuple(mk)) for r, mk in zip(rows, marks))
        if m:
            neg = Xl[:, :m] < 0
            if np.any(neg):
                clipped += int(neg.sum())
                Xl[:, :m] = np.maximum(Xl[:, :m], 0.0)
        X[live] = Xl
        if math.isfinite(cfg.cap):
            over = np.linalg.norm(X, axis=1) > cfg.cap
            newly = over & alive
            if np.any(newly):
                exploded |= newly
                alive &= ~newly
    sexp = {i: np.exp(cont[i] - 0.5 * qv[i] + logjump[i]) for i in track}
    return X, integ, counts, exploded, sexp, clipped, log


def simulate_paths(params: AffineParams, cfg: SimConfig, track: Sequence[int] = (),
                   log_jumps: bool = False, workers: int = 1) -> PathEnsemble:
    """Simulate ``cfg.paths`` paths; ``track`` lists components whose
    stochastic exponential ``E(X^i)_T`` is accumulated along the way."""
    if len(cfg.x0) != params.d:
        raise ValueError(f"x0 must have length d={params.d}")
    if np.any(np.array(cfg.x0[:params.m]) < 0):
        raise ValueError("x0 must lie in the state space")
    model = _prepare(params)
    track = tuple(int(i) for i in track)
    for i in track:
        if not 1 <= i <= params.d:
            raise ValueError(f"tracked component {i} outside 1..{params.d}")
    starts = list(range(0, cfg.paths, BLOCK))
    jobs = [(model, cfg, s, min(BLOCK, cfg.paths - s), b, track, log_jumps) for b, s in enumerate(starts)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_job, jobs))
    else:
        parts = [_run_job(job) for job in jobs]
    log = None
    if log_jumps:
        log = [entry for part in parts for entry in part[6]]
    return PathEnsemble(
        cfg, np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]), np.concatenate([p[3] for p in parts]),
        {i: np.concatenate([p[4][i] for p in parts]) for i in track},
        sum(p[5] for p in parts), log)


def _run_job(job):
    return _simulate_block(*job)


# ----------------------------------------------------------------------------
# estimators

def estimate_stoch_exp_mean(params: AffineParams, i: int, cfg: SimConfig, workers: int = 1) -> Estimate:
    """Sample mean of ``E(X^i)_T`` with its standard error and median of means."""
    ens = simulate_paths(params, cfg, track=(i,), workers=workers)
    return estimate(ens.stoch_exp[i])


@dataclass(frozen=True)
class CFPoint:
    u: tuple[complex, ...]
    empirical: complex
    model: complex
    stderr: float

    @property
    def discrepancy(self) -> float:
        return abs(self.empirical - self.model)

    def to_dict(self) -> dict:
        return {"u": [[z.real, z.imag] for z in self.u],
                "empirical": [self.empirical.real, self.empirical.imag],
                "model": [self.model.real, self.model.imag],
                "discrepancy": self.discrepancy, "stderr": self.stderr}


@dataclass(frozen=True)
class CFCheck:
    points: tuple[CFPoint, ...]

    @property
    def worst(self) -> CFPoint:
        return max(self.points, key=lambda p: p.discrepancy / p.stderr if p.stderr > 0 else
                   (math.inf if p.discrepancy > 1e-12 else 0.0))

    @property
    def max_discrepancy(self) -> float:
        return max(p.discrepancy for p in self.points)

    def within(self, k: float = 3.0) -> bool:
        return all(p.discrepancy <= k * p.stderr + 1e-9 for p in self.points)

    def to_dict(self) -> dict:
        w = self.worst
        return {"max_discrepancy": self.max_discrepancy, "worst": w.to_dict(),
                "points": [p.to_dict() for p in self.points]}


def model_cf(params: AffineParams, x0, u, T: float, tol: float = 1e-10, ctx: RContext | None = None) -> complex:
    """``exp(psi_0(T,u) + <psi(T,u), x0>)`` from the Riccati flow."""
    ctx = ctx or RContext(params)
    flow = solve_flow(ctx, np.asarray(u, dtype=complex), T, tol)
    p0, p = flow.final
    return complex(np.exp(p0 + np.asarray(p) @ np.asarray(x0, dtype=float)))


def empirical_cf_check(params: AffineParams, cfg: SimConfig, u_grid: Sequence[Sequence[complex]],
                       workers: int = 1, ensemble: PathEnsemble | None = None) -> CFCheck:
    """Compare the sample mean of ``e^{<u, X_T>}`` with the affine transform formula."""
    ens = ensemble or simulate_paths(params, cfg, workers=workers)
    ctx = RContext(params)
    pts = []
    XT = ens.terminal
    alive = ~ens.exploded
    for u in u_grid:
        u = np.asarray(u, dtype=complex)
        if np.any(u.real != 0):
            raise ValueError("CF grid points must be purely imaginary")
        vals = np.where(alive, np.exp(XT @ u), 0.0)
        n = len(vals)
        se = math.sqrt((np.var(vals.real, ddof=1) + np.var(vals.imag, ddof=1)) / n) if n > 1 else math.inf
        pts.append(CFPoint(tuple(complex(z) for z in u), complex(np.mean(vals)),
                           model_cf(params, cfg.x0, u, cfg.T, ctx=ctx), se))
    return CFCheck(tuple(pts))


@dataclass(frozen=True)
class ExplosionCheck:
    frequency: float
    stderr: float
    predicted: float | None  # 1 - survival probability, when available
    n: int

    def agrees(self, k: float = 5.0) -> bool | None:
        if self.predicted is None:
            return None
        se = max(self.stderr, math.sqrt(max(self.predicted * (1 - self.predicted), 1e-12) / self.n))
        return abs(self.frequency - self.predicted) <= k * se

    def to_dict(self) -> dict:
        return {"frequency": self.frequency, "stderr": self.stderr, "predicted": self.predicted,
                "n": self.n, "agrees_5se": self.agrees()}


def detect_explosion(params: AffineParams, cfg: SimConfig, cap: float = 1e6, predict: bool = True,
                     workers: int = 1) -> ExplosionCheck:
    """Fraction of paths whose state norm exceeds ``cap`` before T, against
    ``1 - P_x0(X_T in D)`` from the minimal solution."""
    from .conservativeness import survival_probability
    cfg = SimConfig(cfg.x0, cfg.T, cfg.steps, cfg.paths, cfg.seed, cap)
    ens = simulate_paths(params, cfg, workers=workers)
    n = len(ens.exploded)
    freq = float(np.mean(ens.exploded))
    se = math.sqrt(freq * (1 - freq) / n)
    pred = None
    if predict:
        try:
            pred = 1.0 - survival_probability(params, cfg.x0, cfg.T)
        except Exception:  # survival unavailable: report the frequency alone
            pred = None
    return ExplosionCheck(freq, se, pred, n)


def jump_count_oracle(params: AffineParams, cfg: SimConfig, substeps: int = 20) -> float:
    """Expected jump count on [0, T] from the first-moment ODE
    ``dE[X]/dt = b0 + B E[X_I] + integral xi dnu`` (finite atoms)."""
    model = _prepare(params)
    m = model.m
    jump_mean = np.zeros((m + 1, model.d))
    for j in range(m + 1):
        pts, cw = model.atoms[j]
        if len(cw):
            w = np.diff(np.concatenate([[0.0], cw])) * model.rates[j]
            jump_mean[j] = w @ pts
    x = np.array(cfg.x0, dtype=float)
    n = cfg.n_steps * substeps
    dt = cfg.T / n
    total = 0.0
    for _ in range(n):
        rate = model.rates[0] + x[:m] @ model.rates[1:]
        total += rate * dt
        x = x + (model.drift0 + jump_mean[0] + x[:m] @ (model.drift + jump_mean[1:])) * dt
    return total


def second_moment_blowup(params: AffineParams, i: int, T: float, level: float = 50.0) -> float | None:
    """First time ``E[E(X^i)_t^2]`` becomes infinite, or None if finite up to T.

    ``(X, 2 log E(X^i))`` is again affine, so the second moment is
    ``exp(phi(t) + <psi(t), x_I>)`` with a Riccati system in ``psi``.
    Blow-up is reported once some ``psi`` exceeds ``level`` or the solver
    stalls. A blow-up before T means plain-mean standard errors at T are
    not valid error bars.
    """
    from scipy.integrate import solve_ivp

    model = _prepare(params)
    m, d = model.m, model.d
    if m == 0:
        return None
    e = np.zeros(d)
    e[i - 1] = 2.0
    alpha = params.alpha
    drift = np.vstack([model.drift0[None, :], model.drift])
    marks = []
    for j in range(m + 1):
        pts, cw = model.atoms[j]
        w = np.diff(np.concatenate([[0.0], cw])) * model.rates[j] if len(cw) else np.zeros(0)
        marks.append((pts, w))

    def field(t, u):
        v = np.concatenate([u, np.zeros(d - m)])
        out = np.empty(m)
        for j in range(1, m + 1):
            wv = v + e
            pts, w = marks[j]
            jump = float(w @ ((1 + pts[:, i - 1]) ** 2 * np.exp(np.minimum(pts[:, :m] @ u, 700.0)) - 1)) if len(w) else 0.0
            out[j - 1] = 0.5 * wv @ alpha[j] @ wv + drift[j] @ v + e @ drift[j] - alpha[j][i - 1, i - 1] + jump
        return out

    hit = lambda t, u: np.max(u) - level
    hit.terminal = True
    sol = solve_ivp(field, (0.0, T), np.zeros(m), events=hit, rtol=1e-8, atol=1e-10)
    if len(sol.t_events[0]):
        return float(sol.t_events[0][0])
    if sol.status != 0:
        return float(sol.t[-1])
    return None
