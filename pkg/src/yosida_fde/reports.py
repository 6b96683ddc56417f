"""Report containers shared by the solver, the audits and the CLI."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if hasattr(value, "to_dict"):
        return _jsonable(value.to_dict())
    return value


@dataclass
class VerificationReport:
    """Outcome of one numerical certificate.

    For ``kind="inequality"`` residuals are ``RHS - LHS`` and the check passes
    iff the smallest residual is ``>= -tolerance``.  For ``kind="equality"``
    residuals are nonnegative distances and the check passes iff the largest
    is ``<= tolerance``.
    """

    check: str
    samples: int
    worst_residual: float
    passed: bool
    tolerance: float
    kind: str = "inequality"
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    @classmethod
    def from_residuals(cls, check, residuals, tolerance, kind="inequality",
                       witness_fn=None, details=None):
        """Reduce per-sample residuals; ties resolve to the lowest sample index."""
        res = np.asarray(residuals, dtype=float).ravel()
        details = dict(details or {})
        if res.size == 0:
            return cls(check, 0, 0.0, True, float(tolerance), kind, None, details)
        if kind == "inequality":
            idx = int(np.argmin(res))
            worst = float(res[idx])
            passed = bool(worst >= -tolerance)
            details.setdefault("violations", int(np.sum(res < -tolerance)))
        elif kind == "equality":
            idx = int(np.argmax(res))
            worst = float(res[idx])
            passed = bool(worst <= tolerance)
            details.setdefault("violations", int(np.sum(res > tolerance)))
        else:
            raise ValueError(f"unknown report kind {kind!r}")
        if not np.all(np.isfinite(res)):
            passed = False
        witness = {"sample_index": idx}
        if witness_fn is not None:
            witness.update(witness_fn(idx))
        return cls(check, int(res.size), worst, passed, float(tolerance), kind, witness, details)

    @classmethod
    def combine(cls, check, reports, details=None):
        """All-of combination; the worst residual is taken from the first failure."""
        reports = list(reports)
        failing = [r for r in reports if not r.passed]
        lead = failing[0] if failing else (reports[0] if reports else None)
        d = dict(details or {})
        d["parts"] = [r.to_dict() for r in reports]
        if lead is None:
            return cls(check, 0, 0.0, True, 0.0, "inequality", None, d)
        return cls(check, sum(r.samples for r in reports), lead.worst_residual, not failing,
                   lead.tolerance, lead.kind, lead.witness, d)

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.check}: worst={self.worst_residual:.3e} "
                f"tol={self.tolerance:.1e} n={self.samples}")

    def to_dict(self):
        return _jsonable({
            "check": self.check,
            "samples": self.samples,
            "worst_residual": self.worst_residual,
            "passed": self.passed,
            "tolerance": self.tolerance,
            "kind": self.kind,
            "witness": self.witness,
            "details": self.details,
        })


@dataclass
class LevelRecord:
    """Outer-recursion history at one lambda level."""

    lam: float
    distances: list
    converged: bool
    iterations: int
    inner_residual: float
    seconds: float
    max_resolvent_iterations: int = 0
    warnings: list = field(default_factory=list)

    @property
    def ratios(self):
        d = np.asarray(self.distances, dtype=float)
        if d.size < 2:
            return np.array([])
        with np.errstate(divide="ignore", invalid="ignore"):
            return d[1:] / d[:-1]

    def to_dict(self):
        return _jsonable({
            "lambda": self.lam,
            "distances": list(self.distances),
            "ratios": self.ratios,
            "converged": self.converged,
            "iterations": self.iterations,
            "inner_residual": self.inner_residual,
            "seconds": self.seconds,
            "max_resolvent_iterations": self.max_resolvent_iterations,
            "warnings": list(self.warnings),
        })


@dataclass
class ConvergenceReport:
    """Distances, ratios and rate diagnostics of a double-limit run.

    ``cross_lambda`` holds ``||u^(k) - u^(k+1)||_Y`` between consecutive
    schedule levels.  ``rate`` collects fitted constants: on ``[0, T]`` the
    factorial constant ``C`` with ``d_{n+1}/d_n <= C/(n+1)``, on the half-line
    the observed geometric factor.
    """

    levels: list = field(default_factory=list)
    cross_lambda: list = field(default_factory=list)
    converged: bool = False
    rate: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def final_level(self):
        return self.levels[-1] if self.levels else None

    def to_dict(self, include_timings=True):
        d = {
            "converged": self.converged,
            "levels": [lv.to_dict() for lv in self.levels],
            "cross_lambda": list(self.cross_lambda),
            "rate": self.rate,
            "flags": list(self.flags),
            "extra": self.extra,
        }
        if include_timings:
            d["timings"] = self.timings
        else:
            for lv in d["levels"]:
                lv.pop("seconds", None)
        return _jsonable(d)


def to_jsonable(value):
    """Convert numpy scalars/arrays and report objects into JSON-ready data."""
    return _jsonable(value)
