import numpy as np
import pytest

from src.characteristics.paths import SimConfig
from src.lipsolve.consistency import check_dpp, martingale_residual
from src.lipsolve.field import FieldApprox, FieldSupportError, frozen_field
from src.lipsolve.psi import LipsolveConfig, NoiseSpec, apply_psi
from src.lipsolve.solver import (
    LipschitzProbe,
    PicardSettings,
    estimate_field_lipschitz,
    fixed_point_solve,
    oracle_relative_error,
)
from src.lipsolve.value import (
    MissingCoefficientError,
    check_gradient_consistency,
    gradient_heat_kernel,
    reconstruct_value,
)
from src.measures.empirical import EmpiricalMeasure
from src.models.builtins import builtin_model
from src.models.oracle import OracleField


@pytest.fixture
def cloud(sampler, rng):
    return EmpiricalMeasure(sampler.cloud_points(rng, 8, 1))


def _identity_field(horizon=1.0):
    return frozen_field(lambda x, theta, mu: np.array(x), horizon)


# ---------------------------
# Fixed point
# ---------------------------
def test_frozen_model_is_its_own_fixed_point(frozen_model):
    cfg = LipsolveConfig(SimConfig(dt=0.05, n_particles=8, n_paths=4), fit_points=2, degree=1, audit_size=8)
    W, report = fixed_point_solve(frozen_model, 0.2, cfg, PicardSettings(max_iters=5))
    assert report.converged, report.to_text()
    assert report.iterations == 1
    assert report.changes[0] < 1e-8
    x = np.array([[0.7]])
    mu = EmpiricalMeasure([[0.0], [1.0]])
    assert W.evaluate(0.2, x, [0.0], mu)[0, 0] == pytest.approx(0.7, abs=1e-8)


def test_field_document_roundtrip_and_support(frozen_model):
    cfg = LipsolveConfig(SimConfig(dt=0.05, n_particles=8, n_paths=4), fit_points=2, degree=1, audit_size=4)
    W, _ = fixed_point_solve(frozen_model, 0.1, cfg, PicardSettings(max_iters=2))
    again = FieldApprox.from_json(W.to_json())
    mu = EmpiricalMeasure([[0.5], [-0.5]])
    assert np.array_equal(again.evaluate(0.05, [[0.3]], [0.2], mu), W.evaluate(0.05, [[0.3]], [0.2], mu))
    with pytest.raises(FieldSupportError):
        W.evaluate(0.5, [[0.3]], [0.2], mu)
    with pytest.raises(ValueError):
        FieldApprox.from_json('{"format": "something-else"}')


def test_psi_is_linear_in_source_and_terminal():
    noise = NoiseSpec(dim_x=1, dim_theta=1, sigma_x=0.2, sigma_theta=0.1)
    cfg = LipsolveConfig(SimConfig(dt=0.05, n_particles=8, n_paths=6, seed=3, horizon=0.2), fit_points=2, degree=1)
    A = lambda tau, x, theta, mu: 0.5 * x
    B = lambda tau, theta, mu: theta
    E1 = lambda tau, x, theta, mu: x + mu.mean()[0]
    E2 = lambda tau, x, theta, mu: np.full_like(x, 0.3)
    V1 = lambda x, theta, mu: 2.0 * x
    V2 = lambda x, theta, mu: x - theta[0]

    both = apply_psi(A, B, lambda *a: E1(*a) + E2(*a), lambda *a: V1(*a) + V2(*a), cfg, noise)
    one = apply_psi(A, B, E1, V1, cfg, noise)
    two = apply_psi(A, B, E2, V2, cfg, noise)

    mu = EmpiricalMeasure([[0.1], [0.4], [-0.3]])
    x = np.array([[0.2], [-1.0]])
    for t in both.times:
        combined = one.evaluate(t, x, [0.5], mu) + two.evaluate(t, x, [0.5], mu)
        assert np.allclose(both.evaluate(t, x, [0.5], mu), combined, rtol=1e-8, atol=1e-9)


# ---------------------------
# Lipschitz estimates
# ---------------------------
def test_lipschitz_estimate_of_linear_field():
    est = estimate_field_lipschitz(frozen_field(lambda x, theta, mu: 2.0 * x, 1.0), 0.5,
                                   LipschitzProbe(samples=10), dim_x=1, dim_theta=1)
    assert 2.0 - 1e-6 <= est["x"] <= 2.0 + 1e-9
    assert est["theta"] == 0.0
    assert est["measure"] == 0.0


def test_lipschitz_estimate_of_constant_field_is_zero():
    est = estimate_field_lipschitz(frozen_field(lambda x, theta, mu: np.ones_like(x), 1.0), 0.0,
                                   LipschitzProbe(samples=5), dim_x=1, dim_theta=1)
    assert est == {"x": 0.0, "theta": 0.0, "measure": 0.0}


def test_lipschitz_estimate_of_oracle_slope():
    params = builtin_model("lq").params
    fld = OracleField(params, 0.5)
    est = estimate_field_lipschitz(fld, 0.5, LipschitzProbe(samples=8), dim_x=1, dim_theta=1)
    assert est["x"] == pytest.approx(abs(fld.lipschitz_x(0.5)), rel=1e-9)


# ---------------------------
# Values and consistency residuals
# ---------------------------
def test_value_at_time_zero_is_u0(lq_model, small_sim, cloud):
    fld = frozen_field(lq_model.W0, 1.0)
    expected = float(lq_model.U0(np.array([[0.4]]), np.array([0.1]), cloud)[0])
    assert reconstruct_value(lq_model, fld, 0.0, [0.4], [0.1], cloud, small_sim) == pytest.approx(expected)


def test_value_without_hamiltonian_is_terminal_constant(frozen_model, small_sim, cloud):
    model = frozen_model.replace(U0=lambda x, theta, mu: np.full(np.asarray(x).shape[0], 3.0))
    assert reconstruct_value(model, _identity_field(), 0.2, [0.4], [0.0], cloud, small_sim) == 3.0


def test_value_needs_terminal_cost(frozen_model, small_sim, cloud):
    with pytest.raises(MissingCoefficientError):
        reconstruct_value(frozen_model.replace(U0=None), _identity_field(), 0.1, [0.0], [0.0], cloud, small_sim)


def test_dpp_residual_vanishes_without_motion(frozen_model, small_sim, cloud):
    fld = _identity_field()
    xs = np.array([[0.3], [-0.5]])
    assert check_dpp(frozen_model, fld, 0.2, 0.2, xs, [0.1], cloud, small_sim).residual == 0.0
    est = check_dpp(frozen_model, fld, 0.2, 0.1, xs, [0.1], cloud, small_sim)
    assert est.residual == 0.0 and est.std_error == 0.0
    with pytest.raises(ValueError):
        check_dpp(frozen_model, fld, 0.1, 0.2, xs, [0.1], cloud, small_sim)


def test_martingale_residual_vanishes_without_motion(frozen_model, small_sim):
    est = martingale_residual(frozen_model, _identity_field(), 0.2, small_sim)
    assert est.residual == 0.0
    assert est.within()


def test_heat_kernel_gradient_needs_idiosyncratic_noise(frozen_model, small_sim, cloud):
    with pytest.raises(ValueError):
        gradient_heat_kernel(frozen_model, _identity_field(), 0.1, [0.0], [0.0], cloud, small_sim)


def test_gradient_consistency_at_time_zero(lq_model, small_sim, cloud):
    fld = frozen_field(lq_model.W0, 1.0)
    check = check_gradient_consistency(lq_model, fld, [(0.0, [0.3], [0.1], cloud)], small_sim)
    assert check.discrepancy < 1e-8
    assert check.heat_kernel_discrepancy < 1e-8
    assert len(check.rows) == 1


# ---------------------------
# LQ against the Riccati oracle
# ---------------------------
def test_quick_lq_solve_tracks_the_oracle(lq_model):
    cfg = LipsolveConfig(SimConfig(dt=0.05, n_particles=100, n_paths=20, seed=0),
                         fit_points=5, degree=1, audit_size=16)
    W, report = fixed_point_solve(lq_model, 0.5, cfg, PicardSettings(tol=1e-4, max_iters=30))
    assert not report.blew_up
    assert oracle_relative_error(W, lq_model.params, report.audit) <= 0.1


@pytest.mark.slow
def test_lq_solve_matches_oracle_within_five_percent(lq_model):
    cfg = LipsolveConfig(SimConfig(dt=0.025, n_particles=400, n_paths=40, seed=0),
                         fit_points=10, degree=1, audit_size=32)
    W, report = fixed_point_solve(lq_model, 0.5, cfg, PicardSettings(tol=1e-5, max_iters=60))
    assert report.converged, report.to_text()
    assert oracle_relative_error(W, lq_model.params, report.audit) <= 0.05


@pytest.mark.slow
def test_nonmonotone_model_blows_up_past_the_riccati_pole():
    model = builtin_model("blowup_nonmonotone")
    cfg = LipsolveConfig(SimConfig(dt=0.05, n_particles=50, n_paths=10, seed=0),
                         fit_points=8, degree=1, audit_size=16)
    _, report = fixed_point_solve(model, 2.0, cfg, PicardSettings(max_iters=100))
    assert report.blew_up, report.to_text()
    assert report.blow_up_time is not None


@pytest.mark.slow
def test_dpp_residual_on_the_lq_oracle_is_within_monte_carlo_error(lq_model, sampler, rng):
    fld = OracleField(lq_model.params, 0.5)
    sim = SimConfig(dt=0.01, n_particles=16, n_paths=200, seed=0)
    xs = sampler.points(rng, 10, 1)
    mu = EmpiricalMeasure(sampler.cloud_points(rng, 16, 1))
    est = check_dpp(lq_model, fld, 0.5, 0.25, xs, [0.1], mu, sim)
    assert est.std_error > 0.0
    assert est.within(), est.to_dict()


@pytest.mark.slow
@pytest.mark.parametrize("name", ["lq", "torus_monotone", "quadratic_certified"])
def test_monotone_models_keep_a_bounded_field_up_to_t2(name):
    cfg = LipsolveConfig(SimConfig(dt=0.05, n_particles=60, n_paths=12, seed=0))
    _, report = fixed_point_solve(builtin_model(name), 2.0, cfg, PicardSettings())
    assert not report.blew_up, report.to_text()
    assert report.converged, report.to_text()
