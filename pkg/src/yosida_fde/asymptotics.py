"""Long-time behaviour of half-line trajectories.

Decay windows, translation defects, and the split of a trajectory into a
trigonometric-polynomial part and a remainder that vanishes at infinity.
Frequencies are always declared by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditioningError, DomainError, StructuralError
from .grid import HistorySegment, Trajectory, state_norm
from .reports import VerificationReport, to_jsonable

SUBSPACE_KINDS = ("c0", "periodic", "trig_ap")
_MAX_CONDITION = 1e8


@dataclass(frozen=True)
class SubspaceSpec:
    """Target subspace: functions vanishing at infinity, ``p``-periodic
    functions, or trigonometric polynomials with the given frequencies.

    For ``kind="periodic"`` the trig basis is the harmonics ``2 pi k / p``
    for ``k = 1..harmonics``.
    """

    kind: str
    period: float | None = None
    frequencies: tuple = ()
    harmonics: int = 1

    def __post_init__(self):
        if self.kind not in SUBSPACE_KINDS:
            raise StructuralError(f"unknown subspace kind {self.kind!r}")
        object.__setattr__(self, "frequencies", tuple(float(w) for w in self.frequencies))
        if self.kind == "periodic":
            if self.period is None or not self.period > 0:
                raise StructuralError("periodic subspace needs a positive period")
            if self.harmonics < 1:
                raise StructuralError("harmonics must be at least 1")
        if self.kind == "trig_ap":
            w = np.asarray(self.frequencies)
            if w.size == 0:
                raise StructuralError("trig_ap subspace needs frequencies")
            if np.any(w <= 0):
                raise StructuralError("frequencies must be positive")
            if np.unique(w).size != w.size:
                raise StructuralError("frequencies must be distinct")

    @classmethod
    def periodic_spec(cls, period, harmonics=1):
        return cls("periodic", period=float(period), harmonics=int(harmonics))

    @classmethod
    def trig(cls, frequencies):
        return cls("trig_ap", frequencies=tuple(frequencies))

    @property
    def basis_frequencies(self):
        if self.kind == "periodic":
            return tuple(2.0 * math.pi * k / self.period for k in range(1, self.harmonics + 1))
        return self.frequencies

    def to_dict(self):
        return {"kind": self.kind, "period": self.period, "frequencies": list(self.frequencies),
                "harmonics": self.harmonics}


def _as_series(traj):
    """``(times, states)`` of the forward part of a Trajectory or a pair."""
    if isinstance(traj, Trajectory):
        z = traj.grid.zero_index
        return traj.times[z:], traj.states[z:]
    t, x = (np.asarray(v, dtype=float) for v in traj)
    if x.ndim == 1:
        x = x[:, None]
    if t.size != x.shape[0]:
        raise StructuralError("times and states have different lengths")
    return t, x


def _interp(t, x, s):
    return np.stack([np.interp(s, t, x[:, k]) for k in range(x.shape[1])], axis=-1)


# ---------------------------------------------------------------------------
# decay


@dataclass
class DecayReport:
    """Sup norms over consecutive windows of the horizon and a verdict."""

    windows: list
    sups: list
    verdict: str
    threshold: float

    def to_dict(self):
        return to_jsonable({"windows": self.windows, "sups": self.sups, "verdict": self.verdict,
                            "threshold": self.threshold})


def decay_report(traj, window_fractions=(0.0, 0.2, 0.4, 0.6, 0.8, 1.0), threshold=1e-3,
                 kind="euclidean", rel_slack=1e-9):
    """Window sups ``sup ||u(t)||`` over ``[f_i T, f_{i+1} T]``.

    The verdict is ``"decaying"`` iff the sups are nonincreasing and the last
    one is ``<= threshold``; ``"inconclusive"`` with fewer than three windows.
    """
    t, x = _as_series(traj)
    f = np.asarray(window_fractions, dtype=float)
    if np.any(np.diff(f) <= 0) or f[0] < 0 or f[-1] > 1:
        raise StructuralError("window fractions must increase within [0, 1]")
    t0, T = float(t[0]), float(t[-1])
    edges = t0 + f * (T - t0)
    norms = state_norm(x, kind)
    sups = []
    windows = []
    for a, b in zip(edges[:-1], edges[1:]):
        mask = (t >= a - 1e-12) & (t <= b + 1e-12)
        sups.append(float(np.max(norms[mask])) if np.any(mask) else math.nan)
        windows.append([float(a), float(b)])
    if len(sups) < 3:
        verdict = "inconclusive"
    else:
        s = np.asarray(sups)
        mono = bool(np.all(s[1:] <= s[:-1] * (1 + rel_slack) + 1e-300))
        verdict = "decaying" if mono and s[-1] <= threshold else "not decaying"
    return DecayReport(windows, sups, verdict, threshold)


# ---------------------------------------------------------------------------
# translation defect


def almost_periodicity_defect(traj, period, tail=None, kind="euclidean"):
    """``sup ||u(t + p) - u(t)||`` over ``t`` in the tail with ``t + p`` in range.

    ``tail`` defaults to the final half of the horizon.
    """
    t, x = _as_series(traj)
    if not period > 0:
        raise DomainError("period must be positive")
    T = float(t[-1])
    if T - t[0] < 3 * period:
        raise DomainError("horizon shorter than three periods")
    lo, hi = tail if tail is not None else (0.5 * (t[0] + T), T)
    mask = (t >= lo - 1e-12) & (t + period <= min(hi, T) + 1e-12)
    if not np.any(mask):
        raise DomainError("tail window shorter than one period")
    ts = t[mask]
    shifted = _interp(t, x, ts + period)
    return float(np.max(state_norm(shifted - x[mask], kind)))


# ---------------------------------------------------------------------------
# trig least squares


def _design(times, freqs):
    cols = [np.ones_like(times)]
    for w in freqs:
        cols.append(np.cos(w * times))
        cols.append(np.sin(w * times))
    return np.stack(cols, axis=1)


def _fit(times, values, freqs):
    B = _design(times, freqs)
    cond = float(np.linalg.cond(B))
    if not math.isfinite(cond) or cond > _MAX_CONDITION:
        raise ConditioningError(f"trig fit condition number {cond:.3e} exceeds {_MAX_CONDITION:.0e}")
    coef, *_ = np.linalg.lstsq(B, values, rcond=None)
    amps = [coef[0].astype(complex)]
    for j in range(len(freqs)):
        amps.append(coef[1 + 2 * j] - 1j * coef[2 + 2 * j])
    return np.array(amps), coef, cond


def trig_evaluate(amplitudes, freqs, times):
    """``Re sum_j A_j exp(i w_j t)`` with ``w_0 = 0``."""
    times = np.asarray(times, dtype=float)
    w = np.concatenate([[0.0], np.asarray(freqs, dtype=float)])
    phase = np.exp(1j * np.outer(times, w))
    return np.real(phase @ amplitudes)


@dataclass
class SplitResult:
    """Trig-polynomial part and remainder of a trajectory.

    ``ap_coefficients[j]`` is the complex amplitude ``A_j`` (one entry per
    state coordinate) of ``exp(i w_j t)``, with ``w_0 = 0`` carrying the
    mean; the AP part is ``Re sum_j A_j exp(i w_j t)``.
    """

    frequencies: tuple
    ap_coefficients: np.ndarray
    c0_residual_profile: list
    defect: float
    fit_window: tuple
    coefficient_spread: float
    confidence: float
    stable: bool
    condition_number: float
    reconstruction_error: float
    times: np.ndarray = field(repr=False, default=None)
    ap_part: np.ndarray = field(repr=False, default=None)
    residual: np.ndarray = field(repr=False, default=None)

    def ap_function(self, t):
        return trig_evaluate(self.ap_coefficients, self.frequencies, t)

    def to_dict(self):
        c = np.asarray(self.ap_coefficients)
        return to_jsonable({
            "frequencies": [0.0] + list(self.frequencies),
            "ap_coefficients_real": c.real,
            "ap_coefficients_imag": c.imag,
            "c0_residual_profile": self.c0_residual_profile,
            "defect": self.defect,
            "fit_window": list(self.fit_window),
            "coefficient_spread": self.coefficient_spread,
            "confidence": self.confidence,
            "stable": self.stable,
            "condition_number": self.condition_number,
            "reconstruction_error": self.reconstruction_error,
        })


def aap_split(traj, spec, tail_fraction=0.5, window_fractions=(0.0, 0.2, 0.4, 0.6, 0.8, 1.0),
              confidence=1e-3, kind="euclidean"):
    """Least-squares AP part on the tail and the remainder everywhere.

    Parameters
    ----------
    traj : Trajectory or (times, states)
    spec : SubspaceSpec
        ``trig_ap`` or ``periodic`` (harmonics of ``2 pi / p``).
    tail_fraction : float
        Share of the horizon (at its end) used for the fit.
    confidence : float
        Allowed coefficient change between refits on the two halves of the
        fit window, relative to ``max(1, max |A_j|)``.

    Raises
    ------
    DomainError
        Horizon shorter than four periods of the slowest frequency.
    ConditioningError
        Near-duplicate frequencies for the fit window.
    """
    if spec.kind == "c0":
        raise StructuralError("aap_split needs a trig_ap or periodic subspace")
    freqs = spec.basis_frequencies
    t, x = _as_series(traj)
    T0, T = float(t[0]), float(t[-1])
    slowest = 2.0 * math.pi / min(freqs)
    if T - T0 < 4 * slowest:
        raise DomainError("horizon shorter than four periods of the slowest frequency")
    start = T - tail_fraction * (T - T0)
    mask = t >= start - 1e-12
    ts, xs = t[mask], x[mask]
    amps, _, cond = _fit(ts, xs, freqs)
    ap = trig_evaluate(amps, freqs, t)
    residual = x - ap
    recon = float(np.max(np.abs(x - (ap + residual))))
    defect = float(np.max(state_norm(residual[mask], kind)))
    half = ts.size // 2
    a1, _, _ = _fit(ts[:half], xs[:half], freqs)
    a2, _, _ = _fit(ts[half:], xs[half:], freqs)
    spread = float(np.max(np.abs(a1 - a2)))
    conf_abs = confidence * max(1.0, float(np.max(np.abs(amps))))
    profile = decay_report((t, residual), window_fractions, kind=kind).sups
    return SplitResult(tuple(freqs), amps, profile, defect, (float(start), T), spread, conf_abs,
                       bool(spread <= conf_abs), cond, recon, t, ap, residual)


# ---------------------------------------------------------------------------
# subspace membership of the resolvent image


def _probe_values(op, lam, probe, psi_fn, times, h_seg):
    """``J^w_lam(t, psi_t) f(t)`` at each time, with exact history segments."""
    geom = op.geometry
    m = max(1, int(round(geom.length / h_seg)))
    s = np.linspace(-geom.length, 0.0, m + 1)
    omega = op.omega
    sc = 1.0 - lam * omega
    rhs = np.empty((times.size, op.dim))
    for i, t in enumerate(times):
        seg = HistorySegment(geom, s, np.array([np.atleast_1d(psi_fn(t + si)) for si in s]))
        rhs[i] = np.atleast_1d(probe(t)) + lam * op.history_input(t, seg)
    x, _, _ = op.solve_core(sc, lam, rhs)
    return x


def subspace_invariance_probe(op, spec, lam, probes, psi_fn=None, horizon=60.0, n_samples=400,
                              h_seg=None, tol_Z=1e-6, tail_fraction=0.5):
    """Distance of ``t -> J^w_lam(t, psi_t) f(t)`` to the subspace ``Z``.

    Parameters
    ----------
    op : OperatorSpec
    spec : SubspaceSpec
    lam : float
    probes : sequence of callables
        Functions ``f(t)`` in ``Z`` returning states.
    psi_fn : callable, optional
        History argument ``psi`` (also in ``Z``); defaults to each probe.
    horizon : float
        Length of the probe grid; the tail is its final ``tail_fraction``.
    """
    if not lam > 0 or lam * op.omega >= 1:
        raise DomainError("need lam > 0 and lam * omega < 1")
    h_seg = h_seg or min(op.geometry.length / 64, 2.0 ** -6)
    start = horizon * (1.0 - tail_fraction)
    dists = []
    for f in probes:
        psi = psi_fn or f
        if spec.kind == "periodic":
            p = spec.period
            ts = np.linspace(start, horizon - p, n_samples)
            va = _probe_values(op, lam, f, psi, ts, h_seg)
            vb = _probe_values(op, lam, f, psi, ts + p, h_seg)
            dists.append(float(np.max(state_norm(vb - va, op.norm))))
        elif spec.kind == "trig_ap":
            ts = np.linspace(start, horizon, n_samples)
            v = _probe_values(op, lam, f, psi, ts, h_seg)
            amps, _, _ = _fit(ts, v, spec.frequencies)
            fit = trig_evaluate(amps, spec.frequencies, ts)
            dists.append(float(np.max(state_norm(v - fit, op.norm))))
        else:
            ts = np.linspace(start, horizon, n_samples)
            v = _probe_values(op, lam, f, psi, ts, h_seg)
            dists.append(float(np.max(state_norm(v, op.norm))))
    return VerificationReport.from_residuals(
        "subspace_invariance", dists, tol_Z, kind="equality",
        details={"subspace": spec.to_dict(), "lambda": lam, "horizon": horizon})


def functional_split_check(F, traj, split, tail=None, tol_Z=1e-3, kind="euclidean",
                           compare_coefficients=False):
    """``F(t, u_t)`` and ``F(t, u^a_t)`` agree on the tail.

    ``u^a`` is the AP part from ``split``; the difference vanishing at
    infinity is the statement that the AP part of ``t -> F(t, u_t)`` is
    ``t -> F(t, u^a_t)``.  With ``compare_coefficients`` (meaningful for
    linear ``F``) the trig coefficients of both sides are reported too.
    """
    if not isinstance(traj, Trajectory):
        raise StructuralError("functional_split_check needs a Trajectory")
    geom = traj.initial_history.geometry
    t_all = traj.grid.forward_times
    lo, hi = tail if tail is not None else (split.fit_window[0], float(t_all[-1]))
    lo = max(lo, float(t_all[0]) + geom.length)
    ts = t_all[(t_all >= lo - 1e-12) & (t_all <= hi + 1e-12)]
    if ts.size == 0:
        raise DomainError("tail window is empty")
    d = traj.dim
    w_u = F.evaluate_path(traj, ts)
    h = traj.grid.h
    m = int(round(geom.length / h))
    s = np.linspace(-geom.length, 0.0, m + 1)
    w_a = np.array([F.evaluate(t, HistorySegment(geom, s, split.ap_function(t + s)), d)
                    for t in ts])
    gap = state_norm(w_u - w_a, kind)
    details = {"tail": [float(lo), float(hi)], "functional": F.to_dict()}
    if compare_coefficients:
        a_u, _, _ = _fit(ts, w_u, split.frequencies)
        a_a, _, _ = _fit(ts, w_a, split.frequencies)
        details["coefficient_gap"] = float(np.max(np.abs(a_u - a_a)))
    return VerificationReport.from_residuals(
        "functional_split", gap, tol_Z, kind="equality",
        witness_fn=lambda i: {"t": float(ts[i])}, details=details)
