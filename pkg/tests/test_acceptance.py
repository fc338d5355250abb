"""Acceptance gate: one printed PASS/FAIL line per criterion."""
import itertools
import math
import time

import numpy as np
import pytest

from affine_mart.conservativeness import (conservativeness_verdict, osgood_check, sufficient_moment_check,
                                          survival_probability)
from affine_mart.martingale import (Form, local_martingale_check, martingale_verdict, positivity_check,
                                    star_R_direct, star_transform)
from affine_mart.model import is_admissible
from affine_mart.montecarlo import (SimConfig, empirical_cf_check, estimate_stoch_exp_mean,
                                    second_moment_blowup, truncate_model)
from affine_mart.reference import dirac_series, stable_half, stoch_exp_series
from affine_mart.riccati import (RContext, derivative_R_fd, eval_R, flow_property_check,
                                 minimal_solution_zero, solve_flow)

from models import random_admissible, with_local_martingale

ZETA2 = math.pi ** 2 / 6


@pytest.fixture
def gate(capsys):
    def report(number: int, title: str, passed: bool, detail: str):
        with capsys.disabled():
            print(f"\ncriterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")
        assert passed, f"criterion {number} failed: {detail}"
    return report


def test_criterion_1_dirac_series(gate):
    start = time.perf_counter()
    p = dirac_series()
    admissible = is_admissible(p)
    moments = sufficient_moment_check(p)
    osgood = osgood_check(p)
    report = conservativeness_verdict(p, T=10.0)
    ms = minimal_solution_zero(RContext(p), T=10.0)
    elapsed = time.perf_counter() - start
    ok = (admissible and moments.fails and osgood.holds and report.overall.holds
          and ms.sup_abs <= 1e-6 and elapsed < 10)
    gate(1, "Dirac-series reproduction", ok,
         f"admissible={admissible} moments={moments.outcome.value} osgood={osgood.outcome.value} "
         f"verdict={report.overall.outcome.value} sup|psi_I|={ms.sup_abs:.2e} ({ms.method}) time={elapsed:.1f}s")


def test_criterion_2_closed_form_R(gate):
    ctx = RContext(dirac_series())
    r = eval_R(ctx, 1, [-0.5])
    dr = derivative_R_fd(ctx, 1, [-0.5])
    expected_dr = -math.log(1 - math.exp(-0.5))
    ok = abs(r - -0.9074) <= 5e-4 and abs(dr - expected_dr) <= 1e-4
    gate(2, "closed-form R", ok, f"R(-0.5)={r:.8f} (target -0.9074 +- 5e-4), "
         f"R'(-0.5)={dr:.8f} (target {expected_dr:.5f} +- 1e-4)")


def test_criterion_3_stable_half(gate):
    start = time.perf_counter()
    p = stable_half()
    osgood = osgood_check(p)
    grid = np.linspace(0.1, 1.0, 10)
    ms = minimal_solution_zero(RContext(p), T=1.0, times=np.concatenate([[0.0], grid]))
    psi = ms.psi_I[1:, 0]
    rel = float(np.max(np.abs(psi - -math.pi * grid ** 2) / (math.pi * grid ** 2)))
    surv = survival_probability(p, [1.0], 1.0, minimal=ms)
    elapsed = time.perf_counter() - start
    ok = osgood.fails and rel <= 1e-3 and abs(surv - math.exp(-math.pi)) <= 1e-3 and elapsed < 10
    gate(3, "stable-1/2 non-conservative", ok,
         f"osgood={osgood.outcome.value} max rel err vs -pi t^2={rel:.2e} "
         f"survival={surv:.6f} (e^-pi={math.exp(-math.pi):.6f}) time={elapsed:.1f}s")


def test_criterion_4_final_example(gate):
    start = time.perf_counter()
    p = stoch_exp_series()
    pos = positivity_check(p, 2)
    loc = local_martingale_check(p, 2)
    residual = max(abs(e.value) for e in loc.evidence if "residual" in e.description)
    star = star_transform(p, 2)
    n = np.arange(1, 101, dtype=float)
    _, w = star.kappa[1].atoms(n)
    weight_err = float(np.max(np.abs(w * n ** 2 - 1)))
    beta_err = abs(star.beta[1, 0] - ZETA2)
    verdict = martingale_verdict(p, Form("stoch-exp", i=2)).overall
    elapsed = time.perf_counter() - start
    ok = (pos.holds and loc.holds and residual <= 1e-8 and weight_err <= 1e-12 and beta_err <= 1e-8
          and verdict.holds and elapsed < 10)
    gate(4, "final-example pipeline", ok,
         f"positivity={pos.outcome.value} local_mart={loc.outcome.value} residual={residual:.1e} "
         f"star weight rel err={weight_err:.1e} |beta*-pi^2/6|={beta_err:.1e} "
         f"verdict={verdict.outcome.value} time={elapsed:.1f}s")


def test_criterion_5_star_consistency(gate):
    rng = np.random.default_rng(20240501)
    worst, models = 0.0, 0
    while models < 50:
        m, n = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        i = m + int(rng.integers(1, n + 1))
        p = with_local_martingale(random_admissible(rng, m, n, min_real=-1.0), i)
        if not (positivity_check(p, i).holds and local_martingale_check(p, i).holds):
            continue
        models += 1
        ctx = RContext(star_transform(p, i))
        for _ in range(20):
            u = np.concatenate([-rng.exponential(1.0, m) + 1j * rng.normal(size=m), 1j * rng.normal(size=n)])
            for j in range(m + 1):
                worst = max(worst, abs(eval_R(ctx, j, u) - star_R_direct(p, i, j, u)))
    gate(5, "star consistency", worst <= 1e-8, f"{models} models x 20 u points, max |R* - reweighted| = {worst:.2e}")


def test_criterion_6_monotonicity_and_minimality(gate):
    rng = np.random.default_rng(7)
    grid = np.linspace(0, 1, 11)
    order_violations = minimal_violations = 0
    worst_order = worst_min = -math.inf
    for k in range(100):
        m, n = int(rng.integers(1, 4)), int(rng.integers(0, 3))
        p = random_admissible(rng, m, n, killing=k % 2 == 1)
        ctx = RContext(p)
        zeros = np.zeros(n)
        u2 = -rng.exponential(1.0, m) - 1e-3
        u1 = u2 - rng.exponential(1.0, m) * (rng.random(m) < 0.7)
        f1 = solve_flow(ctx, np.concatenate([u1, zeros]), 1.0, tol=1e-9, times=grid)
        f2 = solve_flow(ctx, np.concatenate([u2, zeros]), 1.0, tol=1e-9, times=grid)
        gap = float(np.max(f1.psi[:, :m].real - f2.psi[:, :m].real))
        worst_order = max(worst_order, gap)
        order_violations += gap > 1e-6
        ms = minimal_solution_zero(ctx, T=1.0, times=grid)
        amp = rng.exponential(0.5, m)
        freq = rng.uniform(0.5, 6.0, m)
        forcing = lambda t, a=amp, f=freq: a * (1 + np.sin(f * t))
        g = solve_flow(ctx, np.zeros(m + n), 1.0, tol=1e-9, times=grid, real=True, forcing=forcing)
        below = float(np.max(ms.psi_I - g.psi[:, :m].real))
        worst_min = max(worst_min, below)
        minimal_violations += below > 1e-6
    ok = order_violations == 0 and minimal_violations == 0
    gate(6, "monotonicity and minimality", ok,
         f"100 models: order violations={order_violations} (worst gap {worst_order:.1e}), "
         f"minimality violations={minimal_violations} (worst {worst_min:.1e})")


def test_criterion_7_monte_carlo_martingale_probe(gate):
    start = time.perf_counter()
    p = truncate_model(stoch_exp_series(), 50)
    cfg = SimConfig((1.0, 0.0), T=1.0, steps=1000, paths=200_000, seed=0)
    base = estimate_stoch_exp_mean(p, 2, cfg)
    control = estimate_stoch_exp_mean(p.with_beta(1, 2, p.beta[1, 1] + 0.1), 2, cfg)
    elapsed = time.perf_counter() - start
    blowup = second_moment_blowup(p, 2, cfg.T)
    base_ok = base.within(1.0, 3.0)
    control_ok = not control.within(1.0, 3.0)
    ok = base_ok and control_ok and elapsed < 60
    gate(7, "Monte Carlo martingale probe", ok,
         f"mean E(X^2)_T={base.mean:.4f} +- {base.stderr:.4f} (MoM {base.median_of_means:.4f}, "
         f"{'within' if base_ok else 'outside'} 3 se of 1); control={control.mean:.4f} +- {control.stderr:.4f} "
         f"({'outside' if control_ok else 'within'} 3 se of 1); time={elapsed:.1f}s; "
         f"E[E(X^2)_t^2] infinite from t={blowup}")


def test_criterion_8_characteristic_function(gate):
    start = time.perf_counter()
    p = truncate_model(stoch_exp_series(), 50)
    cfg = SimConfig((1.0, 0.0), T=0.5, steps=1000, paths=200_000, seed=0)
    grid = [(1j * a, 1j * b) for a, b in itertools.product((-2.0, 0.0, 2.0), repeat=2)]
    check = empirical_cf_check(p, cfg, grid)
    elapsed = time.perf_counter() - start
    w = check.worst
    ok = check.within(3.0) and elapsed < 60
    gate(8, "CF cross-validation", ok,
         f"max |phi_emp - phi_model|={check.max_discrepancy:.2e}, worst point {w.discrepancy:.2e} "
         f"vs 3 se={3 * w.stderr:.2e}; time={elapsed:.1f}s")


def test_criterion_9_flow_property(gate):
    tol = 1e-10
    errs = {name: flow_property_check(RContext(f()), u, 0.5, 0.5, tol)
            for name, f, u in (("dirac-series", dirac_series, [-1.0]), ("stable-half", stable_half, [-1.0]),
                               ("stoch-exp-series", stoch_exp_series, [-1.0, 0.0]))}
    ok = all(e <= 50 * tol for e in errs.values())
    gate(9, "flow property", ok, ", ".join(f"{k}: {v:.1e}" for k, v in errs.items()) + f" (bound {50 * tol:.0e})")
