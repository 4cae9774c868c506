import math

import numpy as np
import pytest

from src.characteristics.paths import SimConfig
from src.lipsolve.field import frozen_field
from src.lipsolve.psi import LipsolveConfig
from src.lipsolve.solver import PicardSettings, fixed_point_solve
from src.lipsolve.value import MissingCoefficientError
from src.measures.empirical import Coupling, DimensionMismatchError, EmpiricalMeasure
from src.models.builtins import builtin_model
from src.monotone.audit import hypothesis_audit
from src.monotone.certificates import beta_schedule, joint_certificate_search
from src.monotone.deficits import (
    cocoercivity_check,
    displacement_deficit,
    flat_deficit,
    joint_flat_deficit,
    l2_deficit,
    quadratic_term,
)
from src.monotone.probes import PRESETS, ProbeSpec, draw_probe, make_probes
from src.monotone.propagation import monotonicity_inequality_check, zbeta_propagation_probe
from src.monotone.report import MonotoneReport, ProbeResult


# ---------------------------
# Certificates
# ---------------------------
def test_certificate_for_unit_constants():
    cert = joint_certificate_search(1.0, 1.0, 1.0, 1.0, 1.0)
    assert cert.feasible
    assert cert.interval == pytest.approx((0.5, 2.0))
    assert cert.midpoint == pytest.approx(1.25)
    assert cert.blocks_positive


def test_certificate_boundary_is_infeasible():
    cert = joint_certificate_search(1.0, 1.0, 1.0, 2.0, 1.0)
    assert not cert.feasible
    assert math.isnan(cert.midpoint)
    assert cert.to_dict()["reason"]


@pytest.mark.parametrize("constants", [(1.0, 1.0, 1.0, 1.0, 1.0), (1.0, 1.0, 1.0, 2.0, 1.0), (0.5, 2.0, 0.3, 0.4, 1.5)])
def test_certificate_feasibility_ignores_scaling_of_b(constants):
    aG, aF, ab, g, bl = constants
    base = joint_certificate_search(aG, aF, ab, g, bl)
    scaled = joint_certificate_search(aG, aF, 3.0 * ab, g, 3.0 * bl)
    assert base.feasible == scaled.feasible


def test_beta_schedule_decays_from_alpha():
    schedule = beta_schedule(0.5, 1.0)
    assert schedule(0.0) == 0.5
    assert schedule.kappa == 5.0
    assert schedule(1.0) == pytest.approx(0.5 * math.exp(-5.0))
    with pytest.raises(ValueError):
        beta_schedule(0.0, 1.0)


# ---------------------------
# Deficits
# ---------------------------
def test_quadratic_term():
    assert quadratic_term(None, [1.0], [0.0]) == 0.0
    assert quadratic_term(np.array([[2.0]]), [1.0], [0.0]) == pytest.approx(1.0)


def test_flat_deficit_of_mean_interaction():
    mu = EmpiricalMeasure([[0.0], [2.0]])
    nu = EmpiricalMeasure([[1.0], [5.0]])
    g = lambda x, theta, m: x[:, 0] * m.mean()[0]
    # (mean μ − mean ν)² = (1 − 3)²
    assert flat_deficit(g, mu, nu, [0.0]) == pytest.approx(4.0)
    assert flat_deficit(lambda x, theta, m: 0.5 * x[:, 0] ** 2, mu, nu, [0.0]) == 0.0
    with pytest.raises(DimensionMismatchError):
        flat_deficit(g, mu, EmpiricalMeasure([[0.5]], period=1.0), [0.0])


def test_joint_flat_deficit_of_price_model_depends_only_on_the_noise_gap():
    model = builtin_model("price_production")
    b = lambda th, m: model.b(th, m, None)
    for mu, nu in [
        (EmpiricalMeasure([[0.0], [1.0]]), EmpiricalMeasure([[3.0]])),
        (EmpiricalMeasure([[-2.0], [0.5], [4.0]]), EmpiricalMeasure([[1.0], [1.5]])),
    ]:
        # (r/α)|θ − θ̃|² with r = α = 1
        assert joint_flat_deficit(model.f, b, model.A, mu, nu, [1.0], [-1.0]) == pytest.approx(4.0)


def test_l2_deficit_of_identity_field():
    coupling = Coupling([[0.0], [1.0]], [[1.0], [3.0]])
    identity = lambda x, theta, mu: np.array(x)
    assert l2_deficit(identity, coupling, [0.0], [0.0]) == pytest.approx(2.5)
    assert l2_deficit(identity, coupling, [0.0], [0.0], beta=0.5) == pytest.approx(1.25)
    assert l2_deficit(identity, coupling, [1.0], [0.0], A=np.array([[2.0]])) == pytest.approx(3.5)
    assert displacement_deficit(identity, coupling) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        l2_deficit(identity, coupling, [0.0], [0.0], beta=-1.0)


def test_cocoercivity_of_quadratic_gradient():
    rng = np.random.default_rng(0)
    pairs = Coupling(rng.standard_normal((20, 2)), rng.standard_normal((20, 2)))
    grad = lambda x: 2.0 * x
    assert cocoercivity_check(grad, 2.0, pairs) == pytest.approx(0.0, abs=1e-12)
    assert cocoercivity_check(grad, 1.0, pairs) < 0.0
    with pytest.raises(ValueError):
        cocoercivity_check(grad, 0.0, pairs)


# ---------------------------
# Probes
# ---------------------------
def test_probes_are_reproducible_from_seed_and_index():
    spec = ProbeSpec(count=6, seed=9, cloud_size=5)
    a = draw_probe(spec, 4, 1, 1, with_theta_tilde=True)
    b = draw_probe(spec, 4, 1, 1, with_theta_tilde=True)
    assert np.array_equal(a.coupling.x, b.coupling.x)
    assert np.array_equal(a.theta_tilde, b.theta_tilde)
    assert a.seed == [9, 4]


def test_presets_come_first():
    probes = make_probes(ProbeSpec(count=5, cloud_size=4), 1, 1, times=(0.0, 0.5), with_theta_tilde=True)
    assert [p.label for p in probes[:3]] == list(PRESETS)
    assert all(p.label == "gaussian" for p in probes[3:])
    diagonal, anti, point = probes[:3]
    assert np.array_equal(diagonal.coupling.x, diagonal.coupling.y)
    assert np.array_equal(diagonal.theta, diagonal.theta_tilde)
    assert np.all(np.diff(anti.coupling.x[:, 0]) >= 0) and np.all(np.diff(anti.coupling.y[:, 0]) <= 0)
    assert np.all(point.coupling.x == point.coupling.x[0])
    assert all(p.t == 0.5 for p in probes[:3])


# ---------------------------
# Hypothesis audits
# ---------------------------
@pytest.mark.parametrize("name", ["lq", "price_production", "torus_monotone", "quadratic_certified"])
def test_monotone_builtins_pass_their_audits(name):
    report = hypothesis_audit(builtin_model(name), budget=24, spec=ProbeSpec(cloud_size=8))
    assert report.passed, report.witnesses_to_csv()


def test_nonmonotone_model_fails_with_anti_sorted_witness():
    report = hypothesis_audit(builtin_model("blowup_nonmonotone"), budget=12, spec=ProbeSpec(cloud_size=8))
    assert report.verdict == "fail"
    assert report.audits()["l2_w0"]["passed"] is False
    assert any(w.index == 1 and w.label == "anti_sorted" and w.audit == "l2_w0" for w in report.witnesses())
    assert report.witnesses_to_csv().splitlines()[0].startswith("probe,audit,label,seed")


def test_audit_spreads_budget_round_robin(lq_model):
    report = hypothesis_audit(lq_model, budget=1)
    assert len(report.probes) == 1
    report = hypothesis_audit(lq_model, budget=7)
    assert [p.audit for p in report.probes][:4] == ["growth", "l2_w0", "l2_fg", "flat_u0"]


def test_model_without_hypothesis_data(frozen_model):
    report = hypothesis_audit(frozen_model.replace(U0=None, H=None), budget=3)
    assert report.passed and not report.probes
    assert report.notes


# ---------------------------
# Propagation
# ---------------------------
def test_zbeta_at_time_zero_on_certified_model():
    model = builtin_model("quadratic_certified")
    probes = make_probes(ProbeSpec(count=6, cloud_size=6), 1, 1, times=(0.0,), with_theta_tilde=True)
    sim = SimConfig(dt=0.05, n_particles=6, n_paths=2)
    report = zbeta_propagation_probe(model, None, 0.0, probes, sim)
    assert report.passed, report.to_dict()
    assert report.notes[0].startswith("beta0=")


def test_zbeta_rejects_probe_times_outside_horizon(lq_model, small_sim):
    probes = make_probes(ProbeSpec(count=1), 1, 1, times=(0.5,))
    with pytest.raises(ValueError):
        zbeta_propagation_probe(lq_model, None, 0.2, probes, small_sim)


def test_torus_zbeta_uses_flat_value_pairing(torus_model, small_sim):
    probes = make_probes(ProbeSpec(count=4, cloud_size=5), 1, 1, period=1.0, times=(0.0,))
    report = zbeta_propagation_probe(torus_model, None, 0.0, probes, small_sim)
    assert report.passed
    assert report.notes == ["torus: flat pairing of the reconstructed value"]


def test_inequality_on_identical_inputs_is_tight(torus_model):
    fld = frozen_field(torus_model.W0, 0.1)
    mu = EmpiricalMeasure([[0.1], [0.4], [0.8]], period=1.0)
    sim = SimConfig(dt=0.05, n_particles=3, n_paths=3, n_tagged=4)
    result = monotonicity_inequality_check(torus_model, fld, 0.1, mu, mu, [0.2], [0.2], sim)
    assert result.lhs == 0.0 and result.rhs == 0.0
    assert result.passed


def _solved_field(model, T):
    cfg = LipsolveConfig(SimConfig(dt=0.05, n_particles=60, n_paths=12, seed=0))
    fld, report = fixed_point_solve(model, T, cfg, PicardSettings())
    assert not report.blew_up, report.to_text()
    return fld


@pytest.mark.slow
def test_zbeta_stays_nonnegative_along_a_solved_certified_field():
    model = builtin_model("quadratic_certified")
    fld = _solved_field(model, 0.5)
    probes = make_probes(ProbeSpec(count=12, cloud_size=8), 1, 1, times=(0.25, 0.5),
                         with_theta_tilde=model.A is not None)
    assert all(0.0 < p.t <= 0.5 for p in probes)
    report = zbeta_propagation_probe(model, fld, 0.5, probes, SimConfig(dt=0.05, n_particles=8, n_paths=4, seed=0))
    assert report.passed, report.to_dict()


@pytest.mark.slow
def test_inequality_holds_between_distinct_torus_measures(torus_model, sampler):
    fld = _solved_field(torus_model, 0.5)
    sim = SimConfig(dt=0.05, n_particles=8, n_paths=12, seed=0, n_tagged=4)
    for i in range(3):
        rng = np.random.default_rng([7, i])
        mu = sampler.cloud(rng, 1, 1.0, size=8)
        nu = sampler.cloud(rng, 1, 1.0, size=8)
        theta = sampler.theta(rng, 1)
        result = monotonicity_inequality_check(torus_model, fld, 0.5, mu, nu, theta, theta, sim)
        assert result.lhs != 0.0
        assert result.passed, result.to_dict()


def test_inequality_needs_model_data_and_equal_sizes(lq_model, small_sim):
    fld = frozen_field(lq_model.W0, 0.1)
    mu = EmpiricalMeasure([[0.1], [0.4]])
    with pytest.raises(MissingCoefficientError):
        monotonicity_inequality_check(lq_model.replace(alpha_H=None), fld, 0.1, mu, mu, [0.0], [0.0], small_sim)
    with pytest.raises(ValueError):
        monotonicity_inequality_check(lq_model, fld, 0.1, mu, EmpiricalMeasure([[0.0]]), [0.0], [0.0], small_sim)


# ---------------------------
# Report
# ---------------------------
def test_probe_threshold_includes_standard_error():
    ok = ProbeResult(0, "gaussian", [0, 0], deficit=-0.2, std_error=0.1, tolerance=0.0)
    bad = ProbeResult(1, "gaussian", [0, 1], deficit=-0.4, std_error=0.1, tolerance=0.0)
    assert ok.passed and not bad.passed
    assert not ProbeResult(2, "gaussian", [0, 2], deficit=float("nan")).passed

    report = MonotoneReport(name="zbeta", probes=[ok, bad])
    assert report.min_deficit == -0.4
    assert [w.index for w in report.witnesses()] == [1]
    assert report.to_dict()["n_witnesses"] == 1
