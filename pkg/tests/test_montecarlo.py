import math

import numpy as np
import pytest

from affine_mart.martingale import exp_lift
from affine_mart.model import AffineParams, finite_atoms
from affine_mart.montecarlo import (SimConfig, SimulationError, detect_explosion, empirical_cf_check,
                                    estimate, estimate_stoch_exp_mean, jump_count_oracle,
                                    second_moment_blowup, simulate_paths, truncate_model)
from affine_mart.reference import heavy_jump_atoms, heston_like, stable_half, stoch_exp_series

from models import random_admissible


def _gaussian():
    alpha = np.zeros((2, 1, 1))
    alpha[0] = [[1.0]]
    return AffineParams.build(0, 1, alpha=alpha)


def _poisson(rate=2.0):
    return AffineParams.build(0, 1, beta=[[1.0], [0.0]], kappa={0: finite_atoms([((1.0,), rate)])})


def _heston_martingale():
    p = heston_like()
    return p.with_beta(1, 2, 0.0)


def test_poisson_jump_counts():
    ens = simulate_paths(_poisson(2.0), SimConfig((0.0,), T=1.5, steps=200, paths=20_000, seed=1))
    est = estimate(ens.jump_counts)
    assert abs(est.mean - 3.0) <= 3 * est.stderr


def test_gaussian_stochastic_exponential_has_unit_mean():
    est = estimate_stoch_exp_mean(_gaussian(), 1, SimConfig((0.0,), T=1.0, steps=100, paths=40_000, seed=2))
    assert est.within(1.0)


def test_jump_counts_match_intensity_moment_equation():
    p = truncate_model(stoch_exp_series(), 50)
    cfg = SimConfig((1.0, 0.0), T=0.5, steps=1000, paths=20_000, seed=3)
    ens = simulate_paths(p, cfg)
    est = estimate(ens.jump_counts)
    assert abs(est.mean - jump_count_oracle(p, cfg)) <= 3 * est.stderr


def test_truncated_final_example_first_coordinate_is_positive():
    p = truncate_model(stoch_exp_series(), 50)
    ens = simulate_paths(p, SimConfig((1.0, 0.0), T=0.5, steps=500, paths=5_000, seed=4))
    assert np.all(ens.terminal[:, 0] > 0) and np.isfinite(ens.terminal).all()


def test_same_seed_reproduces_and_workers_do_not_matter():
    p = _heston_martingale()
    cfg = SimConfig((0.5, 0.0), T=0.5, steps=100, paths=30_000, seed=9)
    a = simulate_paths(p, cfg, track=(2,))
    b = simulate_paths(p, cfg, track=(2,), workers=2)
    np.testing.assert_array_equal(a.terminal, b.terminal)
    np.testing.assert_array_equal(a.stoch_exp[2], b.stoch_exp[2])
    c = simulate_paths(p, SimConfig((0.5, 0.0), T=0.5, steps=100, paths=30_000, seed=10))
    assert not np.array_equal(a.terminal, c.terminal)


@pytest.mark.parametrize("factory,x0,i,T", [
    (_gaussian, (0.0,), 1, 1.0),
    (_heston_martingale, (0.5, 0.0), 2, 1.0),
    (lambda: truncate_model(stoch_exp_series(), 2), (1.0, 0.0), 2, 0.25),
])
def test_halving_the_step_is_within_noise(factory, x0, i, T):
    p = factory()
    coarse = estimate_stoch_exp_mean(p, i, SimConfig(x0, T=T, steps=100, paths=20_000, seed=5))
    fine = estimate_stoch_exp_mean(p, i, SimConfig(x0, T=T, steps=200, paths=20_000, seed=6))
    assert abs(coarse.mean - fine.mean) <= 3 * math.hypot(coarse.stderr, fine.stderr)


def test_gaussian_characteristic_function():
    p = _gaussian()
    grid = [[1j * u] for u in np.linspace(-2, 2, 9)]
    check = empirical_cf_check(p, SimConfig((0.0,), T=1.0, steps=20, paths=20_000, seed=7), grid)
    assert check.within(3.0)
    assert check.points[4].model == pytest.approx(1.0)
    # exp(-u^2 T / 2)
    assert check.points[0].model.real == pytest.approx(math.exp(-2.0), rel=1e-8)


def test_exp_lift_identity_holds_pathwise():
    p = random_admissible(np.random.default_rng(11), 1, 1)
    lifted = exp_lift(p, 2)
    cfg = SimConfig((1.0, 0.3, 0.0), T=0.5, steps=100, paths=2_000, seed=8)
    ens = simulate_paths(lifted, cfg, track=(3,))
    np.testing.assert_allclose(ens.stoch_exp[3], np.exp(ens.terminal[:, 1] - 0.3), rtol=1e-9)


def test_conservative_model_does_not_explode():
    res = detect_explosion(heavy_jump_atoms(), SimConfig((1.0,), T=1.0, steps=200, paths=5_000, seed=12), 1e6)
    assert res.frequency == 0.0
    assert res.predicted == pytest.approx(0.0, abs=1e-9)
    assert res.agrees(5.0)


def test_truncation_resolves_the_drift_identity():
    p = truncate_model(stoch_exp_series(), 50)
    pts, w = p.kappa[1].arrays(2)
    assert len(w) == 50
    assert p.beta[1, 1] == pytest.approx(-float(w @ (pts[:, 1] - np.clip(pts[:, 1], -1, 1))), abs=1e-15)
    # the first component does not satisfy an identity and keeps its drift
    assert p.beta[1, 0] == stoch_exp_series().beta[1, 0]


def test_densities_cannot_be_simulated():
    with pytest.raises(SimulationError):
        truncate_model(stable_half(), 10)
    with pytest.raises(SimulationError):
        simulate_paths(stable_half(), SimConfig((1.0,), paths=10))


def test_nonpositive_exponential_factor_is_an_error():
    p = AffineParams.build(0, 1, beta=[[0.0], [0.0]], kappa={0: finite_atoms([((-1.5,), 5.0)])})
    with pytest.raises(SimulationError):
        estimate_stoch_exp_mean(p, 1, SimConfig((0.0,), T=1.0, steps=10, paths=1_000))


def test_second_moment_of_truncated_final_example_blows_up():
    # independent scalar Riccati solve with scipy: blow-up near t = 0.8988 for one atom
    assert second_moment_blowup(truncate_model(stoch_exp_series(), 1), 2, 2.0) == pytest.approx(0.8988, abs=1e-3)
    assert second_moment_blowup(truncate_model(stoch_exp_series(), 50), 2, 1.0) < 0.02
    assert second_moment_blowup(_heston_martingale(), 2, 1.0) is None


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig((0.0,), T=0.0)
    with pytest.raises(ValueError):
        simulate_paths(_gaussian(), SimConfig((0.0, 1.0)))
