import numpy as np
import pandas as pd
import pytest

from src.characteristics.engine import ParticleBlowUpError, correlation_root
from src.characteristics.noise_bank import NoiseBank
from src.characteristics.paths import InitialState, SimConfig
from src.characteristics.simulate import (
    simulate_common_noise,
    simulate_doubled,
    simulate_forward,
    wasserstein_stability_ratio,
)
from src.lipsolve.field import frozen_field
from src.measures.empirical import Coupling, DimensionMismatchError, EmpiricalMeasure


def _affine_field(horizon=1.0):
    return frozen_field(lambda x, theta, mu: 0.5 * x + 0.1 * mu.mean()[0], horizon)


def _start(sampler, rng, model, n):
    cloud = EmpiricalMeasure(sampler.cloud_points(rng, n, model.dim_x, model.period), model.period)
    return InitialState.from_cloud(cloud, np.full(model.dim_theta, 0.3))


def test_noise_bank_is_addressed_not_sequential():
    bank = NoiseBank(5)
    first = bank.normal(path=3, role="idio", step=7, count=4, dim=2)
    bank.normal(path=0, role="theta", step=0, count=1, dim=1)
    again = NoiseBank(5).normal(path=3, role="idio", step=7, count=4, dim=2)
    assert np.array_equal(first, again)
    assert not np.array_equal(first, bank.normal(path=3, role="common", step=7, count=4, dim=2))
    with pytest.raises(ValueError):
        bank.normal(0, "bogus", 0, 1, 1)


def test_noise_bank_stream_matches_single_steps():
    bank = NoiseBank(1)
    block = bank.stream(path=2, role="idio", start=4, steps=3, count=5, dim=1)
    assert np.array_equal(block[1], bank.normal(2, "idio", 5, 5, 1))


def test_forward_simulation_is_identical_across_worker_counts(lq_model, sampler, rng):
    cfg = SimConfig(dt=0.05, n_particles=8, n_paths=6, seed=11, horizon=0.25)
    init = _start(sampler, rng, lq_model, 8)
    one = simulate_forward(lq_model, _affine_field(), init, cfg)
    many = simulate_forward(lq_model, _affine_field(), init, cfg.replace(workers=3))
    assert one.identical_to(many)
    assert np.array_equal(one.clouds[:, 0], np.repeat(init.cloud.points[None], 6, axis=0))


def test_restart_reproduces_the_tail(lq_model, sampler, rng):
    cfg = SimConfig(dt=0.05, n_particles=8, n_paths=1, seed=4, horizon=0.3)
    fld = _affine_field()
    full = simulate_forward(lq_model, fld, _start(sampler, rng, lq_model, 8), cfg)
    j = 2
    restart_init = InitialState.from_cloud(full.cloud(0, j), full.theta[0, j])
    tail = simulate_forward(lq_model, fld, restart_init, cfg.with_horizon(0.3 - j * 0.05), start_step=j)
    assert np.array_equal(tail.clouds[0], full.clouds[0, j:])
    assert np.array_equal(tail.theta[0], full.theta[0, j:])


def test_frozen_dynamics_do_not_move(frozen_model, sampler, rng):
    cfg = SimConfig(dt=0.1, n_particles=5, n_paths=2, horizon=0.5)
    fld = frozen_field(lambda x, theta, mu: np.array(x), 0.5)
    bundle = simulate_forward(frozen_model, fld, _start(sampler, rng, frozen_model, 5), cfg)
    assert np.array_equal(bundle.clouds[:, -1], bundle.clouds[:, 0])
    assert np.array_equal(bundle.theta[:, -1], bundle.theta[:, 0])


def test_exploding_drift_raises(lq_model, sampler, rng):
    model = lq_model.replace(F=lambda x, theta, mu, w: -100.0 * x, sigma_x=0.0)
    cfg = SimConfig(dt=0.01, n_particles=4, n_paths=1, horizon=1.0)
    with pytest.raises(ParticleBlowUpError):
        simulate_forward(model, _affine_field(), _start(sampler, rng, model, 4), cfg)


def test_torus_positions_stay_in_the_cell(torus_model, sampler, rng):
    cfg = SimConfig(dt=0.05, n_particles=10, n_paths=3, horizon=0.5)
    fld = frozen_field(lambda x, theta, mu: 3.0 * np.ones_like(x), 0.5)
    bundle = simulate_forward(torus_model, fld, _start(sampler, rng, torus_model, 10), cfg)
    assert bundle.clouds.min() >= 0.0
    assert bundle.clouds.max() < torus_model.period


def test_common_noise_shifts_every_particle_alike(lq_model, sampler, rng):
    model = lq_model.replace(F=lambda x, theta, mu, w: np.zeros_like(x), sigma_x=0.0, beta_cn=0.2)
    cfg = SimConfig(dt=0.1, n_particles=6, n_paths=3, horizon=0.5)
    bundle = simulate_common_noise(model, _affine_field(), _start(sampler, rng, model, 6), cfg)
    moved = bundle.clouds[:, -1, :, 0] - bundle.clouds[:, 0, :, 0]
    assert np.allclose(moved, moved[:, :1], atol=1e-12)
    assert np.all(np.abs(moved[:, 0]) > 0)
    assert "common" in bundle.increments


def test_correlation_must_be_positive_semidefinite():
    root = correlation_root(np.array([[0.5]]), 1, 1)
    assert np.allclose(root @ root, [[1.0, 0.5], [0.5, 1.0]])
    with pytest.raises(ValueError):
        correlation_root(np.array([[2.0]]), 1, 1)


def test_initial_cloud_must_fit_the_config(lq_model, sampler, rng):
    cfg = SimConfig(dt=0.1, n_particles=9, n_paths=1, horizon=0.1)
    with pytest.raises(ValueError):
        simulate_forward(lq_model, _affine_field(), _start(sampler, rng, lq_model, 4), cfg)
    torus_init = InitialState.from_cloud(EmpiricalMeasure(np.zeros((9, 1)), 1.0), [0.0])
    with pytest.raises(DimensionMismatchError):
        simulate_forward(lq_model, _affine_field(), torus_init, cfg)


def test_horizon_must_be_a_multiple_of_dt():
    with pytest.raises(ValueError):
        SimConfig(dt=0.1, n_particles=1, n_paths=1, horizon=0.25)


def test_doubled_system_on_the_diagonal_is_one_system(lq_model, sampler, rng):
    cfg = SimConfig(dt=0.05, n_particles=6, n_paths=2, horizon=0.2)
    pts = sampler.cloud_points(rng, 6, 1)
    theta = np.array([0.4])
    doubled = simulate_doubled(lq_model, _affine_field(), theta, theta, Coupling(pts, pts), cfg)
    assert doubled.first.identical_to(doubled.second)
    assert doubled.final_couplings[0].cost(2) == 0.0


def test_identical_drifts_have_zero_stability_ratio():
    cfg = SimConfig(dt=0.1, n_particles=5, n_paths=2, horizon=0.3)
    cloud = EmpiricalMeasure(np.linspace(-1, 1, 5))
    drift = lambda tau, pts: 0.5 * pts
    ratios = wasserstein_stability_ratio(drift, drift, cloud, cfg, sigma_x=0.1)
    assert ratios.shape == (2, 3)
    assert np.all(ratios == 0.0)


def test_path_bundle_long_format(lq_model, sampler, rng, tmp_path):
    cfg = SimConfig(dt=0.1, n_particles=3, n_paths=2, horizon=0.2)
    bundle = simulate_forward(lq_model, _affine_field(), _start(sampler, rng, lq_model, 3), cfg)
    frame = bundle.to_frame()
    assert list(frame.columns) == ["path", "step", "time", "entity", "index", "component", "value"]
    # 2 paths × 3 grid points × (1 theta + 3 cloud) values
    assert len(frame) == 2 * 3 * 4
    target = tmp_path / "paths.csv"
    bundle.to_csv(target)
    assert pd.read_csv(target).shape == frame.shape
