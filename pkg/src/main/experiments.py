# src/main/experiments.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from src.lipsolve.consistency import check_dpp, martingale_residual
from src.lipsolve.field import FieldApprox
from src.lipsolve.psi import LipsolveConfig
from src.lipsolve.solver import SolveReport, fixed_point_solve, oracle_relative_error
from src.lipsolve.value import check_gradient_consistency
from src.main.config import ExperimentConfig
from src.measures.empirical import Coupling, EmpiricalMeasure
from src.models.model_spec import ModelSpec
from src.models.oracle import OracleBlowUpError, OracleField
from src.monotone.audit import hypothesis_audit
from src.monotone.certificates import joint_certificate_search
from src.monotone.probes import make_probes
from src.monotone.propagation import monotonicity_inequality_check, zbeta_propagation_probe
from src.noisetransform.checks import (
    average_distance_invariance,
    common_noise_equivalence_check,
    l2_preservation_check,
    monotonicity_preservation_check,
)
from src.reporting.report import emit_report
from src.utils.io_utils import atomic_write_bytes, atomic_write_text, rows_to_csv_text

logger = logging.getLogger(__name__)

EXACT_TOLERANCE = 1e-12
CERTIFICATE_KEYS = ("alpha_G", "alpha_F", "alpha_b", "dtheta_G", "b_lip")

# salts of the scene generators, kept apart from the simulation noise
INEQUALITY_SALT = 0x1E0
TRANSFORM_SALT = 0x7F
DPP_SALT = 0xD99


@dataclass
class Outcome:
    results: Dict[str, Any] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)
    summary: List[str] = field(default_factory=list)
    passed: bool = True


def _fmt(value: Any) -> str:
    arr = np.asarray(value, dtype=float).reshape(-1)
    return " ".join("%.12e" % v for v in arr)


def _solve(cfg: ExperimentConfig, model: ModelSpec, T: float, lcfg: Optional[LipsolveConfig] = None) -> Tuple[FieldApprox, SolveReport]:
    return fixed_point_solve(model, T, lcfg or cfg.lipsolve_config(), cfg.picard_settings(), cfg.lipschitz_probe())


def _audit_rows(fld: FieldApprox, report: SolveReport, oracle: Optional[OracleField] = None) -> List[Dict[str, str]]:
    rows = []
    for i, (x, theta, mu) in enumerate(report.audit):
        for t in fld.times:
            row = {"scene": str(i), "t": _fmt(t), "x": _fmt(x), "theta": _fmt(theta),
                   "mean_mu": _fmt(mu.mean()), "w": _fmt(fld.evaluate(float(t), x, theta, mu))}
            if oracle is not None:
                row["oracle"] = _fmt(oracle.evaluate(float(t), x, theta, mu))
            rows.append(row)
    return rows


def _scene_rng(cfg: ExperimentConfig, salt: int, index: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, salt, index])


def _solve_lines(model: ModelSpec, report: SolveReport) -> List[str]:
    line = f"solve {model.name} on [0, {report.horizon:g}]: {report.status} after {report.iterations} iterations"
    if report.blew_up:
        line += f", blow-up at t={report.blow_up_time:g} ({report.blow_up_variable})"
    return [line]


# ==============================
# Pipelines
# ==============================

def run_solve(cfg: ExperimentConfig) -> Outcome:
    model = cfg.build_model()
    fld, report = _solve(cfg, model, cfg.horizon)
    out = Outcome(passed=report.converged)
    out.results["solve"] = report.to_dict()
    out.artifacts["field.json"] = fld.to_json() + "\n"
    out.artifacts["audit.csv"] = rows_to_csv_text(_audit_rows(fld, report), ("scene", "t", "x", "theta", "mean_mu", "w"))
    out.summary += _solve_lines(model, report)
    return out


def run_oracle_compare(cfg: ExperimentConfig) -> Outcome:
    model = cfg.build_model()
    T = cfg.horizon
    settings = cfg.section("oracle")
    fld, report = _solve(cfg, model, T)
    out = Outcome(passed=not report.blew_up)
    out.results["solve"] = report.to_dict()
    out.summary += _solve_lines(model, report)
    if report.blew_up:
        return out
    try:
        oracle = OracleField(model.params, T)
        error = oracle_relative_error(fld, model.params, report.audit)
    except OracleBlowUpError as exc:
        out.passed = False
        out.results["oracle"] = {"error": None, "oracle_blow_up_time": exc.time}
        out.summary.append(f"oracle explodes at t={exc.time:g}; no comparison on [0, {T:g}]")
        return out

    limit = float(settings["max_relative_error"])
    oracle_result: Dict[str, Any] = {"max_relative_error": error, "threshold": limit}
    out.passed = error <= limit
    out.summary.append(f"max relative error vs oracle: {error:.4e} (threshold {limit:g})")
    if settings["refine"]:
        base = cfg.lipsolve_config()
        finer = LipsolveConfig(base.sim.replace(dt=base.sim.dt / 2.0, n_paths=2 * base.sim.n_paths),
                               base.fit_points, base.degree, base.audit_size, base.sampler)
        fine_fld, fine_report = _solve(cfg, model, T, finer)
        refined = oracle_relative_error(fine_fld, model.params, fine_report.audit)
        oracle_result["refined_relative_error"] = refined
        oracle_result["refinement_improves"] = refined < error
        out.passed = out.passed and refined < error
        out.summary.append(f"refined (dt/2, 2M) relative error: {refined:.4e}")
    out.results["oracle"] = oracle_result
    out.artifacts["field.json"] = fld.to_json() + "\n"
    out.artifacts["audit.csv"] = rows_to_csv_text(_audit_rows(fld, report, oracle),
                                                  ("scene", "t", "x", "theta", "mean_mu", "w", "oracle"))
    return out


def run_verify_monotone(cfg: ExperimentConfig) -> Outcome:
    model = cfg.build_model()
    T = cfg.horizon
    spec = cfg.probe_spec()
    fld, report = _solve(cfg, model, T)
    out = Outcome(passed=not report.blew_up)
    out.results["solve"] = report.to_dict()
    out.summary += _solve_lines(model, report)
    if report.blew_up:
        return out

    sim = cfg.sim_config()
    probes = make_probes(spec, model.dim_x, model.dim_theta, model.period,
                         times=[float(t) for t in fld.times], with_theta_tilde=model.A is not None)
    zbeta = zbeta_propagation_probe(model, fld, T, probes, sim, spec.tolerance, cfg.sampler_config())
    audit = hypothesis_audit(model, cfg.section("probes")["audit_budget"], spec)

    if all(key in model.params for key in CERTIFICATE_KEYS):
        p = model.params
        cert = joint_certificate_search(p["alpha_G"], p["alpha_F"], p["alpha_b"], p["dtheta_G"], p["b_lip"])
        zbeta.certificate = cert.to_dict()
        out.passed = out.passed and cert.feasible and cert.blocks_positive
        out.summary.append(f"certificate: feasible={cert.feasible}, interval=({cert.interval[0]:g}, {cert.interval[1]:g})")

    out.results["zbeta"] = zbeta.to_dict()
    out.results["hypotheses"] = audit.to_dict()
    out.passed = out.passed and zbeta.passed and audit.passed
    out.summary.append(f"zbeta: {zbeta.verdict} (min deficit {zbeta.min_deficit:.4e}, {len(zbeta.probes)} probes)")
    out.summary.append(f"hypotheses: {audit.verdict} (min deficit {audit.min_deficit if audit.probes else float('nan'):.4e})")

    pairs = int(cfg.section("probes")["pairs"])
    if model.alpha_H is not None and model.has_value_data and "flat_u0" in model.claims and pairs:
        sampler = cfg.sampler_config()
        rows = []
        for i in range(pairs):
            rng = _scene_rng(cfg, INEQUALITY_SALT, i)
            mu = sampler.cloud(rng, model.dim_x, model.period, size=spec.cloud_size)
            nu = sampler.cloud(rng, model.dim_x, model.period, size=spec.cloud_size)
            theta = sampler.theta(rng, model.dim_theta)
            theta_tilde = sampler.theta(rng, model.dim_theta) if model.A is not None else theta
            result = monotonicity_inequality_check(model, fld, T, mu, nu, theta, theta_tilde, sim)
            rows.append(dict(result.to_dict(), pair=i))
        passed = all(r["passed"] for r in rows)
        out.results["inequality"] = {"pairs": rows, "passed": passed, "min_margin": min(r["margin"] for r in rows)}
        out.passed = out.passed and passed
        out.summary.append(f"monotonicity inequality: {'pass' if passed else 'fail'} on {pairs} pairs")

    columns = ("probe", "audit", "label", "seed", "deficit", "std_error", "threshold", "passed", "inputs")
    all_rows = [p.to_row() for p in zbeta.probes + audit.probes]
    witness_rows = [p.to_row() for p in zbeta.witnesses() + audit.witnesses()]
    out.artifacts["probes.csv"] = rows_to_csv_text(all_rows, columns)
    out.artifacts["witnesses.csv"] = rows_to_csv_text(witness_rows, columns)
    return out


def run_blowup_scan(cfg: ExperimentConfig) -> Outcome:
    model = cfg.build_model()
    settings = cfg.section("scan")
    rows: List[Dict[str, Any]] = []
    detected = None
    for T in settings["horizons"]:
        _, report = _solve(cfg, model, float(T))
        peak = max((max(row[v] for v in ("x", "theta", "measure")) for row in report.lipschitz), default=0.0)
        rows.append({"horizon": float(T), "status": report.status, "iterations": report.iterations,
                     "blow_up_time": report.blow_up_time, "blow_up_variable": report.blow_up_variable,
                     "max_lipschitz": peak})
        if report.blew_up:
            detected = report.blow_up_time
            break

    if detected is not None:
        verdict = f"blow-up detected at t={detected:g}"
    else:
        verdict = f"no blow-up up to T={float(settings['horizons'][-1]):g}"
    out = Outcome(passed=not (detected is not None and settings["forbid_blow_up"]))
    out.results["scan"] = {"verdict": verdict, "blow_up_time": detected, "horizons": rows}
    out.summary.append(f"{model.name}: {verdict}")
    csv_rows = [{k: ("" if v is None else (_fmt(v) if isinstance(v, float) else str(v))) for k, v in r.items()} for r in rows]
    out.artifacts["scan.csv"] = rows_to_csv_text(
        csv_rows, ("horizon", "status", "iterations", "blow_up_time", "blow_up_variable", "max_lipschitz"))
    return out


def run_transform_check(cfg: ExperimentConfig) -> Outcome:
    model = cfg.build_model()
    settings = cfg.section("transform")
    base = model.replace(beta_cn=float(settings["beta"] or model.beta_cn))
    T = cfg.horizon
    tol = float(settings["tolerance"])

    eq = common_noise_equivalence_check(base, T, cfg.lipsolve_config(), cfg.picard_settings(),
                                        cfg.lipschitz_probe(), concatenate_theta=settings["concatenate_theta"])
    sampler = cfg.sampler_config()
    flat_samples, l2_samples, shifts = [], [], []
    for i in range(int(settings["n_probes"])):
        rng = _scene_rng(cfg, TRANSFORM_SALT, i)
        mu = sampler.cloud(rng, base.dim_x, base.period)
        nu = sampler.cloud(rng, base.dim_x, base.period)
        theta = sampler.theta(rng, base.dim_theta)
        shift = sampler.points(rng, 1, base.dim_x)[0]
        flat_samples.append((mu, nu, theta, shift))
        l2_samples.append((Coupling(mu.points, nu.points, base.period), theta, shift))
        shifts.append(shift)

    scalar = base.U0 or base.f
    identities = {
        "flat": monotonicity_preservation_check(scalar, flat_samples) if scalar is not None else 0.0,
        "l2": l2_preservation_check(base.W0, l2_samples),
        "average_distance": average_distance_invariance(flat_samples[0][0], shifts),
    }
    out = Outcome()
    out.results["transform"] = dict(eq.to_dict(), identities=identities, tolerance=tol)
    if eq.blew_up:
        out.passed = False
        out.summary.append(f"transform check on {base.name}: a solve blew up ({eq.statuses})")
        return out
    shift_ok = eq.shift_residual is not None and eq.shift_residual <= tol * max(eq.scale, 1e-12)
    exact_ok = all(v <= EXACT_TOLERANCE for v in identities.values())
    out.passed = eq.relative <= tol and shift_ok and exact_ok
    out.summary.append(f"common-noise equivalence: relative residual {eq.relative:.4e} (tolerance {tol:g})")
    out.summary.append(f"shift invariance residual: {eq.shift_residual:.4e}")
    out.summary.append("exact identities: " + ", ".join(f"{k}={v:.1e}" for k, v in sorted(identities.items())))
    out.artifacts["transform.csv"] = rows_to_csv_text(
        [{"t": _fmt(r["t"]), "residual": _fmt(r["residual"])} for r in eq.rows], ("t", "residual"))
    return out


def run_dpp_audit(cfg: ExperimentConfig) -> Outcome:
    model = cfg.build_model()
    T = cfg.horizon
    settings = cfg.section("dpp")
    fld, report = _solve(cfg, model, T)
    out = Outcome(passed=not report.blew_up)
    out.results["solve"] = report.to_dict()
    out.summary += _solve_lines(model, report)
    if report.blew_up:
        return out

    sim = cfg.sim_config()
    sampler = cfg.sampler_config()
    rng = _scene_rng(cfg, DPP_SALT, 0)
    xs = sampler.points(rng, int(cfg.section("points")["count"]), model.dim_x, model.period)
    theta = sampler.theta(rng, model.dim_theta)
    mu = EmpiricalMeasure(sampler.cloud_points(rng, sim.n_particles, model.dim_x, model.period), model.period)

    dpp = check_dpp(model, fld, T, float(settings["s"]), xs, theta, mu, sim)
    martingale = martingale_residual(model, fld, T, sim, sampler=sampler)
    rows = [dict(check="dpp", **dpp.to_dict()), dict(check="martingale", **martingale.to_dict())]
    out.passed = out.passed and dpp.within(3.0) and martingale.within(3.0)
    out.results["dpp"] = {"dpp": dpp.to_dict(), "martingale": martingale.to_dict()}
    out.summary.append(f"dpp residual {dpp.residual:.4e} (SE {dpp.std_error:.2e}); "
                       f"martingale residual {martingale.residual:.4e} (SE {martingale.std_error:.2e})")

    n_grad = int(settings["gradient_points"])
    if model.has_value_data and n_grad:
        small = sampler.cloud(rng, model.dim_x, model.period, size=cfg.section("probes")["cloud_size"])
        sample = [(T, xs[i % xs.shape[0]], theta, small) for i in range(n_grad)]
        check = check_gradient_consistency(model, fld, sample, sim)
        tol = float(settings["gradient_tolerance"])
        ok = check.discrepancy <= tol and (check.heat_kernel_discrepancy is None or check.heat_kernel_discrepancy <= tol)
        out.passed = out.passed and ok
        out.results["dpp"]["gradient"] = dict(check.to_dict(), tolerance=tol)
        rows.append({"check": "gradient", "residual": check.discrepancy, "std_error": 0.0})
        out.summary.append(f"gradient consistency: max gap {check.discrepancy:.4e} (tolerance {tol:g})")

    out.artifacts["dpp.csv"] = rows_to_csv_text(
        [{"check": r["check"], "residual": _fmt(r["residual"]), "std_error": _fmt(r["std_error"])} for r in rows],
        ("check", "residual", "std_error"))
    return out


PIPELINES: Dict[str, Callable[[ExperimentConfig], Outcome]] = {
    "solve": run_solve,
    "verify-monotone": run_verify_monotone,
    "oracle-compare": run_oracle_compare,
    "blowup-scan": run_blowup_scan,
    "transform-check": run_transform_check,
    "dpp-audit": run_dpp_audit,
}


# ==============================
# Entry
# ==============================

def run_experiment(cfg: ExperimentConfig) -> int:
    """
    Run the pipeline of `cfg.kind` and write its artifacts to `cfg.output_dir`.

    Returns 0 when every verdict passes, 1 otherwise (artifacts still written).
    """
    logger.info("Running %s on %s (seed %d)", cfg.kind, cfg.model_name, cfg.seed)
    model = cfg.build_model()
    try:
        outcome = PIPELINES[cfg.kind](cfg)
    except Exception as exc:
        logger.exception("Experiment %s aborted", cfg.kind)
        outcome = Outcome(passed=False, summary=[f"aborted: {type(exc).__name__}: {exc}"])
        outcome.results["error"] = {"type": type(exc).__name__, "message": str(exc)}

    verdict = "pass" if outcome.passed else "fail"
    results = {
        "experiment": {"kind": cfg.kind, "verdict": verdict, "model": model.describe()},
        "config": cfg.report_view(),
        **outcome.results,
    }
    out_dir = cfg.output_dir
    atomic_write_bytes(out_dir / "report.json", emit_report(results, "json"))
    header = [f"kind: {cfg.kind}", f"model: {cfg.model_name}", f"seed: {cfg.seed}", f"verdict: {verdict.upper()}"]
    atomic_write_text(out_dir / "summary.txt", "\n".join(header + outcome.summary) + "\n")
    for name, text in sorted(outcome.artifacts.items()):
        atomic_write_text(out_dir / name, text)
    logger.info("Wrote %d artifacts to %s; verdict %s", 2 + len(outcome.artifacts), out_dir, verdict)
    return 0 if outcome.passed else 1
