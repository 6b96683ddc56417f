"""Library-level orchestration shared by the CLI and the acceptance suite."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import (SubspaceSpec, aap_split, almost_periodicity_defect, decay_report,
                          functional_split_check)
from .errors import ConfigError, ConvergenceError, StructuralError
from .grid import state_norm
from .operators import PointDelay, control_inequality_audit, resolvent_property_audit
from .oracles import LinearDelayOracle, exp_memory_reference, method_of_steps_ivp
from .reports import VerificationReport
from .scheme import double_limit_solve, halfline_solve
from .verify import inequality_batch, integral_solution_residual, mild_solution_residual


@dataclass
class SolveResult:
    """Trajectory, convergence report and optional oracle comparison."""

    trajectory: object
    report: object
    converged: bool
    oracle_error: float | None = None
    message: str = ""
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)


def check_rng(seed, name):
    """Independent generator for the named check, derived from the run seed."""
    key = [ord(ch) for ch in name]
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + key))


# ---------------------------------------------------------------------------
# oracles


def oracle_for(cfg):
    """Callable ``u(t)`` returning states for ``t >= 0``, or None without an oracle."""
    if not cfg.oracle:
        return None
    kind = cfg.oracle["kind"]
    op = cfg.operator
    phi = cfg.history
    T = cfg.solver.horizon
    if kind == "linear_delay":
        if op.variant != "linear_delay" or op.dim != 1:
            raise ConfigError("the linear_delay oracle needs a scalar linear_delay operator")
        shape = cfg.raw.get("history", {}).get("shape", "constant")
        value = float(phi.value_at_zero()[0])
        if shape == "constant":
            coeffs = (value,)
        elif shape == "ramp":
            coeffs = (value, float(cfg.raw["history"].get("slope", 1.0)))
        else:
            raise ConfigError("the linear_delay oracle needs a constant or ramp history")
        f = op.forcing
        if f.kind not in ("zero", "constant"):
            raise ConfigError("the linear_delay oracle needs zero or constant forcing")
        f0 = float(f(0.0))
        ex = LinearDelayOracle(op.params["a"], op.params["c"], op.params["r"], coeffs,
                               op.omega, f0)
        return lambda t: np.asarray(ex(t), dtype=float).reshape(np.shape(t) + (1,))
    if kind == "method_of_steps":
        delays = [F for F in op.functionals if isinstance(F, PointDelay)]
        if len(delays) != 1 or len(op.functionals) != 1:
            raise ConfigError("the method_of_steps oracle needs a single point delay")
        F = delays[0]
        omega = op.omega

        def rhs(t, y, yd):
            return op.core_apply(y) + op.forcing.vector(np.asarray(t), op.dim) + F.c * yd + omega * y
        sol = method_of_steps_ivp(rhs, lambda s: phi(max(s, -phi.geometry.length)), F.r, T, op.dim)
        return sol
    if kind == "exp_memory":
        if op.variant != "exp_memory":
            raise ConfigError("the exp_memory oracle needs an exp_memory operator")
        if np.ptp(phi.states, axis=0).max() > 0:
            raise ConfigError("the exp_memory oracle needs a constant history")
        F = op.functionals[0]
        return exp_memory_reference(op.core.a, F.c, F.kappa, F.R, phi.value_at_zero(), T,
                                    op.omega, lambda t: op.forcing(t), op.dim)
    raise ConfigError(f"unknown oracle kind {kind!r}")


def oracle_error(traj, oracle, kind="euclidean"):
    """Sup distance over forward nodes between ``traj`` and the oracle."""
    tf = traj.grid.forward_times
    ref = np.asarray(oracle(tf), dtype=float).reshape(tf.size, traj.dim)
    return float(np.max(state_norm(traj.forward_states - ref, kind)))


# ---------------------------------------------------------------------------
# pipelines


def solve(cfg, psi0=None):
    """Run the configured solver; convergence failures are returned, not raised."""
    t0 = time.perf_counter()
    driver = halfline_solve if cfg.mode == "halfline" else double_limit_solve
    try:
        traj, report = driver(cfg.operator, cfg.history, cfg.solver, psi0=psi0)
        converged, message = True, "converged"
    except ConvergenceError as exc:
        traj, report = exc.trajectory, exc.report
        converged, message = False, str(exc)
    result = SolveResult(traj, report, converged, message=message,
                         seconds=time.perf_counter() - t0)
    oracle = oracle_for(cfg)
    if oracle is not None and traj is not None:
        result.oracle_error = oracle_error(traj, oracle, cfg.operator.norm)
    return result


def run_checks(cfg, traj, checks=None, seed=None):
    """Run the enabled verification checks; returns ``{name: VerificationReport}``."""
    op = cfg.operator
    if traj.initial_history.geometry != op.geometry or traj.dim != op.dim:
        raise StructuralError("trajectory geometry or dimension differs from the configuration")
    checks = cfg.verify.get("checks", []) if checks is None else checks
    seed = cfg.seed if seed is None else seed
    samples = int(cfg.verify.get("samples", 100))
    audit = int(cfg.verify.get("audit_samples", 2000))
    out = {}
    for name in checks:
        rng = check_rng(seed, name)
        if name == "integral_solution":
            out[name] = integral_solution_residual(op, traj, M=samples, rng=rng,
                                                   tol_scale=float(cfg.verify.get("tol_scale",
                                                                                  1e-2)))
        elif name == "mild_solution":
            out[name] = mild_solution_residual(op, traj, cfg.history, config=cfg.solver)
        elif name == "resolvent_properties":
            reps = resolvent_property_audit(op, samples=audit, rng=rng)
            out[name] = VerificationReport.combine("resolvent_properties", reps.values())
        elif name == "control_inequality":
            plain = control_inequality_audit(op, samples=audit, rng=rng)
            pert = control_inequality_audit(op, samples=audit, rng=rng, perturbed=True)
            out[name] = VerificationReport.combine("control_inequality", [plain, pert])
        elif name == "inequalities":
            reps = inequality_batch(rng, draws=samples)
            out[name] = VerificationReport.combine("inequalities", reps.values())
        else:
            raise ConfigError(f"unknown check {name!r}")
    return out


def run_asymptotics(cfg, traj):
    """Decay windows, and with a declared period or frequencies the AP analysis."""
    a = cfg.asymptotics
    fractions = tuple(a.get("window_fractions", (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)))
    out = {"decay": decay_report(traj, fractions, float(a.get("decay_threshold", 1e-3)),
                                 cfg.operator.norm).to_dict()}
    spec = None
    if "period" in a:
        spec = SubspaceSpec.periodic_spec(float(a["period"]), int(a.get("harmonics", 1)))
    elif "frequencies" in a:
        spec = SubspaceSpec.trig(a["frequencies"])
    if spec is None:
        return out, None
    T = float(traj.grid.t_end)
    tail = tuple(a.get("tail", (0.5 * T, T)))
    tol = float(a.get("ap_tolerance", 1e-3))
    split = aap_split(traj, spec, tail_fraction=(T - tail[0]) / T, window_fractions=fractions,
                      kind=cfg.operator.norm)
    out["split"] = split.to_dict()
    if spec.kind == "periodic":
        out["almost_periodicity_defect"] = almost_periodicity_defect(traj, spec.period, tail,
                                                                     cfg.operator.norm)
    F_checks = [functional_split_check(F, traj, split, tail, tol, cfg.operator.norm).to_dict()
                for F in cfg.operator.functionals]
    out["functional_split"] = F_checks
    out["ap_tolerance"] = tol
    out["passed"] = bool(split.defect <= tol and split.stable
                         and out.get("almost_periodicity_defect", 0.0) <= tol
                         and all(c["passed"] for c in F_checks))
    return out, split


def summarize_rates(report):
    """Flat dictionary of rate diagnostics for tables."""
    if report is None:
        return {}
    rate = report.rate
    last = report.final_level
    row = {
        "outer_iterations": last.iterations if last else None,
        "max_ratio": rate.get("max_ratio"),
        "factorial_constant": rate.get("factorial_constant"),
        "observed_factor": rate.get("observed_factor"),
        "predicted_factor": rate.get("predicted_factor"),
        "cross_lambda_final": report.cross_lambda[-1] if report.cross_lambda else None,
    }
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()}
