"""Numerical certificates for the solution concepts and the inequality toolbox.

Every check returns a :class:`~yosida_fde.reports.VerificationReport`.
Inequality checks report residuals ``RHS - LHS`` and pass when the smallest
residual is ``>= -tolerance``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, StageError, StructuralError
from .grid import NormKind, Trajectory, history_slice, sliding_sup, state_norm
from .kernels import kernel_convolution_series
from .reports import VerificationReport
from .scheme import inner_solve

# ---------------------------------------------------------------------------
# duality bracket


@dataclass(frozen=True)
class BracketSpec:
    """How to evaluate ``[y, x]_+``.

    Parameters
    ----------
    norm : {"euclidean", "sup_coordinates"}
    method : {"analytic", "finite_difference"}
    h_fd : float
        Step of the one-sided difference quotient.
    """

    norm: str = "euclidean"
    method: str = "analytic"
    h_fd: float = 1e-8

    def __post_init__(self):
        NormKind(self.norm)
        if self.method not in ("analytic", "finite_difference"):
            raise StructuralError(f"unknown bracket method {self.method!r}")
        if not self.h_fd > 0:
            raise StructuralError("h_fd must be positive")


_ARGMAX_RTOL = 1e-12


def bracket_plus(y, x, spec=None):
    """Right derivative ``lim_{h -> 0+} (||x + h y|| - ||x||) / h``.

    ``x`` and ``y`` may be batched along leading axes; the last axis is the
    state.  At ``x = 0`` the value is ``||y||``.
    """
    spec = spec or BracketSpec()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1:] != y.shape[-1:]:
        raise StructuralError("bracket arguments have different dimensions")
    x, y = np.broadcast_arrays(x, y)
    nx = state_norm(x, spec.norm)
    ny = state_norm(y, spec.norm)
    if spec.method == "finite_difference":
        h = spec.h_fd
        return (state_norm(x + h * y, spec.norm) - nx) / h
    zero = nx == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.norm == "euclidean":
            val = np.sum(x * y, axis=-1) / nx
        else:
            ax = np.abs(x)
            on_max = ax >= nx[..., None] * (1.0 - _ARGMAX_RTOL)
            cand = np.where(on_max, np.sign(x) * y, -np.inf)
            val = np.max(cand, axis=-1)
    val = np.where(zero, ny, val)
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------
# mild solution


def perturb_trajectory(traj, amplitude, window, direction=None):
    """Add ``amplitude * direction`` to the forward states with ``t`` in ``window``.

    Used to build defective trajectories for detector tests.
    """
    lo, hi = window
    d = traj.dim
    direction = np.ones(d) if direction is None else np.asarray(direction, dtype=float)
    states = np.array(traj.states)
    mask = (traj.times >= lo) & (traj.times <= hi) & (traj.times >= 0)
    states[mask] += amplitude * direction
    return traj.with_states(states, check_history=False)


def mild_solution_residual(op, u, phi=None, lam_schedule=None, config=None, tol=None):
    """Re-solve the frozen problem ``B(t) = A(t, u_t)`` and compare with ``u``.

    Parameters
    ----------
    op : OperatorSpec
    u : Trajectory
    phi : HistorySegment, optional
        Defaults to ``u.initial_history``.
    lam_schedule : LambdaSchedule or sequence of float, optional
        Defaults to ``config.schedule``.
    config : SolverConfig, optional
        Supplies ``tol_fix`` and the default tolerance
        ``10 * (tol_lambda + tol_n)``.
    tol : float, optional

    Returns
    -------
    VerificationReport
        ``kind="equality"``; the residual is the forward sup distance between
        the re-solve at the finest ``lam`` and ``u``.
    """
    phi = phi or u.initial_history
    if lam_schedule is None:
        if config is None:
            raise StructuralError("a lambda schedule or a solver config is required")
        lam_schedule = config.schedule
    levels = list(getattr(lam_schedule, "levels", lam_schedule))
    if tol is None:
        tol = 10.0 * (config.tol_lambda + config.tol_n) if config is not None else 1e-1
    z = u.grid.zero_index
    dists = []
    cross = []
    prev = None
    w = None
    for lam in levels:
        try:
            w = inner_solve(op, u, phi, lam, u.grid, config)
        except StageError as exc:
            raise StageError(f"mild re-solve failed: {exc}", "inner", exc) from exc
        gap = state_norm(w.states[z:] - u.states[z:], op.norm)
        dists.append(float(np.max(gap)))
        if prev is not None:
            cross.append(float(np.max(state_norm(w.states - prev.states, op.norm))))
        prev = w
    gap = state_norm(w.states[z:] - u.states[z:], op.norm)
    worst = int(np.argmax(gap))
    t_worst = float(u.grid.forward_times[worst])
    return VerificationReport(
        "mild_solution", len(levels), float(gap[worst]), bool(gap[worst] <= tol), float(tol),
        "equality", {"t": t_worst, "lambda": float(levels[-1])},
        {"distance_per_lambda": dists, "cross_lambda": cross,
         "lambdas": [float(v) for v in levels]})


# ---------------------------------------------------------------------------
# integral solution


def _segment_distances(u, s, nus, m_hist, kind):
    """``||u_nu - u_s||_E`` at each ``nu`` in ``nus`` (sampled on the grid step)."""
    h = u.grid.h
    sig = -h * np.arange(m_hist, -1, -1)
    t_end = u.grid.t_end
    base = u(np.minimum(s + sig, t_end))
    pts = np.minimum(nus[:, None] + sig[None, :], t_end)
    vals = u(pts)
    return np.max(state_norm(vals - base[None], kind), axis=1)


def _trapezoid(values, delta):
    return float(delta * (np.sum(values) - 0.5 * (values[0] + values[-1])))


def integral_solution_residual(op, u, delta=None, M=100, rng=None, tol=None,
                               composed_functional=None, tol_scale=1e-2, max_nodes=256,
                               tube_factor=2.0, steep_fraction=0.25):
    """Sampled check of the integral-solution inequality.

    For each sample ``(r, t, s, x)`` with ``r < t`` grid nodes, ``s`` a grid
    node and ``x`` drawn from a tube around the trajectory, with
    ``y = A(s, u_s) x + omega x``::

        ||u(t) - x|| - ||u(r) - x||
            <= int_r^t [y, u(nu) - x]_+ + omega ||u(nu) - x|| dnu
               + L1^w(||x||) int_r^t ||h^w(nu) - h^w(s)|| dnu
               + L2(sup_E u_s) int_r^t ||k(nu) - k(s)|| dnu
               + K0 int_r^t ||u_nu - u_s||_E dnu
               + ||y|| int_r^t ||g(nu) - g(s)|| dnu

    With ``composed_functional=F`` the operator ``op`` is the history-free
    part ``B`` and ``F(nu, u_nu)`` enters the bracket instead of the ``k``
    and history terms.

    Parameters
    ----------
    op : OperatorSpec
    u : Trajectory
    delta : float, optional
        Quadrature step; defaults to the grid step, coarsened so that at
        most ``max_nodes`` nodes are used per interval.
    M : int
        Number of samples.
    rng : Generator or int, optional
    tol : float, optional
        Defaults to ``tol_scale * max(sup ||u||, tiny)``.
    composed_functional : HistoryFunctional, optional
    steep_fraction : float
        Share of samples placed on short intervals at the largest
        increments of ``u`` with ``x`` behind the direction of motion.

    Returns
    -------
    VerificationReport
        Includes coverage statistics in ``details``.
    """
    rng = np.random.default_rng(rng)
    if u.initial_history.geometry != op.geometry:
        raise StructuralError("trajectory geometry differs from the operator geometry")
    if u.dim != op.dim:
        raise StructuralError("trajectory dimension differs from the operator dimension")
    kind = op.norm
    bspec = BracketSpec(kind)
    ctrl = op.control
    omega = ctrl.omega
    d = op.dim
    grid = u.grid
    h = grid.h
    z = grid.zero_index
    tf = grid.forward_times
    U = u.states[z:]
    n = tf.size
    if n < 2:
        raise StructuralError("trajectory needs at least two forward nodes")
    scale = max(u.sup_norm(kind), np.finfo(float).tiny)
    if tol is None:
        tol = tol_scale * scale
    m_hist = int(round(op.geometry.length / h))
    F = composed_functional
    center = U.mean(axis=0)
    spread = float(np.max(state_norm(U - center, kind)))
    base_step = h if delta is None else float(delta)

    # interval lengths log-uniform between 2 steps and the whole horizon
    k_min = min(2, n - 1)
    lengths = np.exp(rng.uniform(math.log(k_min), math.log(n - 1), size=M))
    k_len = np.clip(np.round(lengths).astype(int), 1, n - 1)
    i_r = np.array([rng.integers(0, n - k) for k in k_len])
    i_t = i_r + k_len
    mode = rng.random(M)
    i_s = np.where(mode < 0.5, i_r,
                   np.where(mode < 0.75, i_r + (rng.random(M) * (k_len + 1)).astype(int),
                            rng.integers(0, n, size=M)))
    i_s = np.minimum(i_s, n - 1)
    anchor = rng.integers(0, n, size=M)
    radius = np.where(rng.random(M) < 0.5, tube_factor, 0.1) * spread
    dirs = rng.normal(size=(M, d))
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
    rad = radius * rng.random(M) ** (1.0 / d)
    xs = U[anchor] + rad[:, None] * dirs

    # steep stratum: short intervals at the largest increments, x behind the motion
    steep = rng.random(M) < steep_fraction
    inc = state_norm(np.diff(U, axis=0), kind)
    if np.any(steep) and inc.sum() > 0:
        p = inc / inc.sum()
        for i in np.nonzero(steep)[0]:
            j = int(rng.choice(n - 1, p=p))
            k = int(rng.integers(1, min(4, n - 1) + 1))
            r0 = int(np.clip(j - rng.integers(0, k), 0, n - 1 - k))
            k_len[i], i_r[i], i_t[i], i_s[i] = k, r0, r0 + k, r0
            move = U[r0 + k] - U[r0]
            nm = float(np.linalg.norm(move))
            back = move / nm if nm > 0 else dirs[i]
            xs[i] = U[r0] - rng.uniform(0.0, tube_factor) * max(spread, nm) * back
    else:
        steep[:] = False

    def rhs_terms(i, m_quad):
        r, t, s = tf[i_r[i]], tf[i_t[i]], tf[i_s[i]]
        x = xs[i]
        nus = np.linspace(r, t, m_quad + 1)
        dq = (t - r) / m_quad
        un = u(nus)
        us = history_slice(u, s)
        y = op.apply(s, us, x) + omega * x
        f_nu = 0.0 if F is None else _functional_path(F, u, nus, d)
        diff = un - x
        brk = bracket_plus(y + f_nu, diff, bspec)
        integrand = brk + omega * state_norm(diff, kind)
        total = _trapezoid(integrand, dq)
        nx = float(state_norm(x, kind))
        hw = ctrl.h_omega_distance(nus, np.full_like(nus, s), d, kind)
        terms = {"bracket": total,
                 "h": float(ctrl.L1_omega(nx)) * _trapezoid(np.asarray(hw, dtype=float), dq)}
        g_diff = state_norm(ctrl.g_vector(nus, d) - ctrl.g_vector(np.full_like(nus, s), d), kind)
        terms["g"] = float(state_norm(y, kind)) * _trapezoid(np.asarray(g_diff, dtype=float), dq)
        if F is None:
            k_diff = state_norm(ctrl.k_fn.vector(nus, d) - ctrl.k_fn.vector(np.full_like(nus, s), d),
                                kind)
            terms["k"] = float(ctrl.L2_fn(us.sup_norm(kind))) * _trapezoid(
                np.asarray(k_diff, dtype=float), dq)
            if ctrl.K0 > 0:
                seg = _segment_distances(u, s, nus, m_hist, kind)
                terms["history"] = ctrl.K0 * _trapezoid(seg, dq)
            else:
                terms["history"] = 0.0
        lhs = float(state_norm(U[i_t[i]] - x, kind) - state_norm(U[i_r[i]] - x, kind))
        return lhs, sum(terms.values()), terms, brk

    residuals = np.empty(M)
    lhs_all = np.empty(M)
    positive = 0
    retries = 0
    meta = []
    for i in range(M):
        k = int(k_len[i])
        m_quad = max(1, min(max_nodes, int(round(k * h / base_step))))
        lhs, rhs, terms, brk = rhs_terms(i, m_quad)
        if rhs - lhs < -tol:
            retries += 1
            lhs, rhs, terms, brk = rhs_terms(i, 2 * m_quad)
        residuals[i] = rhs - lhs
        lhs_all[i] = lhs
        positive += int(np.mean(brk) > 0)
        meta.append(terms)

    def witness(i):
        return {"r": float(tf[i_r[i]]), "t": float(tf[i_t[i]]), "s": float(tf[i_s[i]]),
                "x": xs[i].tolist(), "lhs": float(lhs_all[i]),
                "rhs": float(lhs_all[i] + residuals[i]), "terms": meta[i]}

    details = {
        "tolerance_scale": float(scale),
        "positive_bracket_fraction": positive / M,
        "s_equals_r_fraction": float(np.mean(i_s == i_r)),
        "steep_fraction": float(np.mean(steep)),
        "interval_length_range": [float(k_len.min() * h), float(k_len.max() * h)],
        "tube_radius": float(tube_factor * spread),
        "quadrature_retries": retries,
        "mode": "composed" if F is not None else "full",
    }
    return VerificationReport.from_residuals("integral_solution", residuals, tol,
                                             witness_fn=witness, details=details)


def _functional_path(F, u, nus, d):
    try:
        return F.evaluate_path(u, nus)
    except Exception:
        return np.array([F.evaluate(nu, history_slice(u, nu), d) for nu in nus])


# ---------------------------------------------------------------------------
# Gronwall-type lemma


def _saturate(f, alpha, beta, h):
    from .kernels import kernel_step_weights
    E, W0, W1 = kernel_step_weights(beta, h)
    denom = 1.0 - alpha * W1
    if denom <= 0:
        raise DomainError("grid step too coarse for the saturated hypothesis")
    u = np.empty(f.size)
    u[0] = f[0]
    I = 0.0
    for j in range(1, f.size):
        partial = E * I + W0 * u[j - 1]
        u[j] = (f[j] + alpha * partial) / denom
        I = partial + W1 * u[j]
    return u


def gronwall_check(f_values, alpha, beta, a=0.0, h=None, tol=1e-6, times=None):
    """Saturate the integral hypothesis and check the exponential conclusion.

    ``u = f + alpha int_a^t exp(-beta (t - tau)) u(tau) dtau`` is solved node
    by node with exact weights for the piecewise-linear interpolant, on steps
    ``h`` and ``h/2`` combined by Richardson extrapolation.  The check is
    ``u(t) <= f(t) + alpha int_a^t exp((alpha - beta)(t - tau)) f(tau) dtau``
    at every node, the right side integrated exactly.

    Parameters
    ----------
    f_values : array_like
        Samples of ``f`` on the uniform grid ``a + j h``.
    alpha : float
        Positive.
    beta : float
    tol : float
        Relative to ``max(1, sup |bound|)``.
    """
    f = np.asarray(f_values, dtype=float)
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if h is None:
        if times is None:
            raise StructuralError("pass the grid step h or the sample times")
        h = float(times[1] - times[0])
    n = f.size
    fine = np.empty(2 * n - 1)
    fine[::2] = f
    fine[1::2] = 0.5 * (f[:-1] + f[1:])
    u = (4.0 * _saturate(fine, alpha, beta, h / 2)[::2] - _saturate(f, alpha, beta, h)) / 3.0
    bound = f + alpha * kernel_convolution_series(f, h, beta - alpha)
    tol_abs = tol * max(1.0, float(np.max(np.abs(bound))))
    t = a + h * np.arange(n)
    return VerificationReport.from_residuals(
        "gronwall", bound - u, tol_abs,
        witness_fn=lambda i: {"t": float(t[i]), "u": float(u[i]), "bound": float(bound[i])},
        details={"alpha": alpha, "beta": beta,
                 "saturation_gap": float(np.max(np.abs(bound - u)))})


# ---------------------------------------------------------------------------
# convolution monotonicity


def trapezoid_convolution(f_values, g_values, h):
    """``c_j = int_0^{t_j} g(tau) f(t_j - tau) dtau`` by the trapezoid rule."""
    f = np.asarray(f_values, dtype=float)
    g = np.asarray(g_values, dtype=float)
    n = f.size
    full = np.convolve(g, f)[:n]
    c = full - 0.5 * (g[0] * f + g * f[0])
    c[0] = 0.0
    return h * c


def convolution_monotonicity_check(f_values, g_values, h, tol=1e-12):
    """``t -> int_0^t g(tau) f(t - tau) dtau`` is nondecreasing across nodes.

    Requires ``f`` nondecreasing and nonnegative and ``g`` nonnegative.
    """
    f = np.asarray(f_values, dtype=float)
    g = np.asarray(g_values, dtype=float)
    if f.shape != g.shape:
        raise StructuralError("f and g need the same sample grid")
    if np.any(f < 0) or np.any(np.diff(f) < 0) or np.any(g < 0):
        raise DomainError("f must be nondecreasing and nonnegative, g nonnegative")
    c = trapezoid_convolution(f, g, h)
    tol_abs = tol * max(1.0, float(np.max(np.abs(c))))
    steps = np.diff(c)
    return VerificationReport.from_residuals(
        "convolution_monotonicity", steps, tol_abs,
        witness_fn=lambda i: {"t": float((i + 1) * h), "step": float(steps[i])},
        details={"final_value": float(c[-1]) if c.size else 0.0})


# ---------------------------------------------------------------------------
# Volterra spectrum


def _power_root(M, n_power):
    """``||M^n||_inf^(1/n)`` for ``n`` a power of two, by repeated squaring."""
    P = np.array(M)
    n = 1
    log_scale = 0.0
    while n < n_power:
        nrm = float(np.max(np.sum(np.abs(P), axis=1)))
        if nrm == 0.0:
            return 0.0
        # rescale to avoid under/overflow; tracked in log space
        P = P / nrm
        log_scale = 2.0 * (log_scale + math.log(nrm))
        P = P @ P
        n *= 2
    nrm = float(np.max(np.sum(np.abs(P), axis=1)))
    if nrm == 0.0:
        return 0.0
    return math.exp((log_scale + math.log(nrm)) / n)


def volterra_matrix(lam, K0, omega, T, h, weight=0.0, prefactor=None):
    """Left-rule discretisation of ``S g(t) = c int_0^t exp(-omega s/(1 - lam omega)) g(t - s) ds``.

    ``c = K0/(1 - lam omega)`` unless ``prefactor`` is given.  With
    ``weight = mu`` the matrix is conjugated by ``diag(exp(-mu t))``.
    """
    s = 1.0 - lam * omega
    c = K0 / s if prefactor is None else prefactor
    gamma = -omega / s
    n = int(round(T / h)) + 1
    t = h * np.arange(n)
    lag = t[:, None] - t[None, :]
    S = np.where(lag > 0, c * h * np.exp((gamma - weight) * np.where(lag > 0, lag, 0.0)), 0.0)
    return S


def volterra_spectrum_check(lam, K0, omega, T, h, n_power=64, rel_tol=0.05):
    """Spectral radius of ``q I + S_lam`` equals ``q = lam K0/(1 - lam omega)``.

    The estimate is ``||M_mu^n||^(1/n)`` in the weighted sup norm with weight
    ``exp(-mu t)``, ``mu = 50 c / q + |gamma|``; ``S_lam`` alone is checked
    for a decreasing ``||S^n||^(1/n)`` trend.
    """
    if not lam > 0 or lam * omega >= 1:
        raise DomainError("need lam > 0 and lam * omega < 1")
    s = 1.0 - lam * omega
    q = lam * K0 / s
    c = K0 / s
    gamma = -omega / s
    # normalised kernel when K0 = 0
    c_trend = c if c > 0 else 1.0
    n = int(round(T / h)) + 1
    powers = [1, 2, 4, 8, 16, 32, 64]
    S_plain = volterra_matrix(lam, K0, omega, T, h, prefactor=c_trend)
    trend = [_power_root(S_plain, p) for p in powers]
    trend_ok = all(b <= a * (1 + 1e-12) for a, b in zip(trend, trend[1:]))
    if q == 0:
        est = 0.0
        plain = 0.0
        passed = trend_ok
        resid = 0.0
    else:
        mu = 50.0 * c / q + abs(gamma)
        Mw = volterra_matrix(lam, K0, omega, T, h, weight=mu) + q * np.eye(n)
        est = _power_root(Mw, n_power)
        M = S_plain * (c / c_trend) + q * np.eye(n)
        plain = _power_root(M, n_power)
        resid = abs(est - q) / q
        passed = resid <= rel_tol and trend_ok
    return VerificationReport(
        "volterra_spectrum", 1, float(resid), bool(passed), float(rel_tol), "equality",
        {"lambda": lam, "K0": K0, "omega": omega, "T": T},
        {"q": q, "weighted_estimate": est, "plain_estimate": plain,
         "s_trend_powers": powers, "s_trend": trend, "s_trend_decreasing": trend_ok,
         "nodes": n})


# ---------------------------------------------------------------------------
# bounded recursion


def running_integral_matrix(n, h):
    """Left-rule running integral ``(T f)_i = h sum_{j<i} f_j`` on ``n`` nodes."""
    return h * np.tril(np.ones((n, n)), k=-1)


def bounded_recursion_check(T_int, g, lam, q, f1, N, tol=1e-12):
    """Iterate ``f_{n+1} = g + (lam I + T) f_n`` and certify the Neumann bound.

    With nonnegative ``T``, ``g``, ``f1`` and ``lam <= q < 1``::

        ||f_n|| <= sum_{k <= n-2} ||(q I + T)^k|| ||g|| + ||(q I + T)^(n-1)|| ||f1||.
    """
    T_int = np.asarray(T_int, dtype=float)
    g = np.asarray(g, dtype=float)
    f = np.asarray(f1, dtype=float)
    if np.any(T_int < 0) or np.any(g < 0) or np.any(f < 0):
        raise DomainError("recursion data must be nonnegative")
    if not (0 <= lam <= q < 1):
        raise DomainError("need 0 <= lam <= q < 1")
    n_dim = g.size
    A = lam * np.eye(n_dim) + T_int
    Q = q * np.eye(n_dim) + T_int
    ng = float(np.max(np.abs(g)))
    nf1 = float(np.max(np.abs(f)))
    Qk = np.eye(n_dim)
    partial = 0.0
    norms = [nf1]
    bounds = [nf1]
    for _ in range(2, N + 1):
        partial += float(np.max(np.sum(Qk, axis=1))) * ng
        Qk = Qk @ Q
        f = g + A @ f
        norms.append(float(np.max(np.abs(f))))
        bounds.append(partial + float(np.max(np.sum(Qk, axis=1))) * nf1)
    norms = np.array(norms)
    bounds = np.array(bounds)
    rel = np.abs(np.diff(norms)) / np.maximum(1.0, norms[1:])
    settled = np.nonzero(rel > 1e-10)[0]
    stable_after = int(settled[-1] + 2) if settled.size else 1
    tol_abs = tol * max(1.0, float(np.max(bounds)))
    return VerificationReport.from_residuals(
        "bounded_recursion", bounds - norms, tol_abs,
        witness_fn=lambda i: {"n": i + 1, "norm": float(norms[i]), "bound": float(bounds[i])},
        details={"sup_norm": float(np.max(norms)), "final_bound": float(bounds[-1]),
                 "stable_after": stable_after, "lambda": lam, "q": q})


# ---------------------------------------------------------------------------
# Lipschitz constants from local quotients


def _pairwise_lipschitz(t, x, kind, chunk=512):
    n = t.size
    best = 0.0
    for i0 in range(0, n, chunk):
        ti = t[i0:i0 + chunk]
        xi = x[i0:i0 + chunk]
        dt = np.abs(ti[:, None] - t[None, :])
        dx = state_norm(xi[:, None, :] - x[None, :, :], kind)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dt > 0, dx / np.where(dt > 0, dt, 1.0), 0.0)
        best = max(best, float(np.max(q)))
    return best


def limsup_lipschitz_check(traj, window=1, kind="euclidean", tol=1e-12):
    """Global discrete Lipschitz constant is bounded by the local quotients.

    ``traj`` is a Trajectory or a pair ``(times, states)``.  The local value is
    the largest difference quotient over node gaps of at most ``window``
    steps; the global value is taken over all node pairs.
    """
    if isinstance(traj, Trajectory):
        t, x = traj.times, traj.states
    else:
        t, x = (np.asarray(v, dtype=float) for v in traj)
    if x.ndim == 1:
        x = x[:, None]
    if t.size < 2:
        raise StructuralError("need at least two nodes")
    local = 0.0
    for k in range(1, min(window, t.size - 1) + 1):
        q = state_norm(x[k:] - x[:-k], kind) / (t[k:] - t[:-k])
        local = max(local, float(np.max(q)))
    glob = _pairwise_lipschitz(t, x, kind)
    tol_abs = tol * max(1.0, local)
    return VerificationReport.from_residuals(
        "limsup_lipschitz", [local - glob], tol_abs,
        details={"local_sup": local, "global": glob, "window": window})


# ---------------------------------------------------------------------------
# iterate inequalities of the solution operator


def _segment_sup_series(a, b, kind):
    """``||a_t - b_t||_E`` at every forward node of two trajectories on one grid."""
    grid = a.grid
    m = int(round(a.initial_history.geometry.length / grid.h))
    node = state_norm(a.states - b.states, kind)
    return sliding_sup(node, m)[grid.zero_index:]


def iterate_inequality_check(op, phi1, phi2, psi, chi, lam, config=None, tol=1e-8):
    """Compare ``||T_{lam,phi1} psi(t) - T_{lam,phi2} chi(t)||`` with its bound.

    The bound is ``(lam K0/s) ||psi_t - chi_t||_E
    + (K0/s) int_0^t exp(omega tau / s) ||psi_{t-tau} - chi_{t-tau}||_E dtau
    + ((1/s) exp(-t/lam) + exp(omega t / s)) ||phi1(0) - phi2(0)||`` with
    ``s = 1 - lam omega``.
    """
    grid = psi.grid
    kind = op.norm
    U1 = inner_solve(op, psi, phi1, lam, grid, config)
    U2 = inner_solve(op, chi, phi2, lam, grid, config)
    omega, K0 = op.omega, op.K0
    s = 1.0 - lam * omega
    z = grid.zero_index
    tf = grid.forward_times
    e = _segment_sup_series(psi, chi, kind)
    conv = kernel_convolution_series(e, grid.h, -omega / s)
    d0 = float(state_norm(phi1.value_at_zero() - phi2.value_at_zero(), kind))
    rhs = (lam * K0 / s) * e + (K0 / s) * conv + (np.exp(-tf / lam) / s
                                                  + np.exp(omega * tf / s)) * d0
    lhs = state_norm(U1.states[z:] - U2.states[z:], kind)
    return VerificationReport.from_residuals(
        "iterate_inequality", rhs - lhs, tol,
        witness_fn=lambda i: {"t": float(tf[i]), "lhs": float(lhs[i]), "rhs": float(rhs[i])},
        details={"lambda": lam, "K0": K0, "omega": omega})


def iterate_sup_inequality_check(op, phi, psi, chi, lam, config=None, tol=1e-8):
    """Running-sup form over ``I(t)`` for a common initial history ``phi``."""
    grid = psi.grid
    kind = op.norm
    U1 = inner_solve(op, psi, phi, lam, grid, config)
    U2 = inner_solve(op, chi, phi, lam, grid, config)
    omega, K0 = op.omega, op.K0
    s = 1.0 - lam * omega
    z = grid.zero_index
    tf = grid.forward_times
    run_in = np.maximum.accumulate(state_norm(psi.states - chi.states, kind))[z:]
    run_out = np.maximum.accumulate(state_norm(U1.states - U2.states, kind))[z:]
    conv = kernel_convolution_series(run_in, grid.h, -omega / s)
    rhs = (lam * K0 / s) * run_in + (K0 / s) * conv
    return VerificationReport.from_residuals(
        "iterate_sup_inequality", rhs - run_out, tol,
        witness_fn=lambda i: {"t": float(tf[i]), "lhs": float(run_out[i]), "rhs": float(rhs[i])},
        details={"lambda": lam, "K0": K0, "omega": omega})


def growth_constant(traj, lam, kind="euclidean"):
    """``max_t ||u(t) - phi(0)|| / (lam + t)`` over forward nodes."""
    z = traj.grid.zero_index
    p0 = traj.initial_history.value_at_zero()
    tf = traj.grid.forward_times
    return float(np.max(state_norm(traj.states[z:] - p0, kind) / (lam + tf)))


def family_stability_check(values, factor=2.0, check="family_stability"):
    """Pass iff a family of positive diagnostics varies by at most ``factor``.

    Used for the growth constants ``K`` of ``||u_{n,lam}(t) - phi(0)|| <= K (lam + t)``
    and for the discrete Lipschitz constants of the iterates over an
    ``(n, lam)`` sweep.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return VerificationReport(check, 0, 0.0, True, factor, "equality")
    lo = float(np.min(v))
    hi = float(np.max(v))
    spread = hi / lo if lo > 0 else (1.0 if hi == 0 else math.inf)
    return VerificationReport(check, int(v.size), spread, bool(spread <= factor and np.all(
        np.isfinite(v))), float(factor), "equality", {"argmax": int(np.argmax(v))},
        {"min": lo, "max": hi})


# ---------------------------------------------------------------------------
# randomized batches


def inequality_batch(rng=None, draws=100):
    """Randomized batches of the five inequality checks.

    Returns a dict of combined reports keyed by check name.
    """
    rng = np.random.default_rng(rng)
    out = {}

    reps = []
    h = 1e-3
    t = np.arange(0.0, 1.0 + h / 2, h)
    for _ in range(draws):
        knots = np.linspace(0.0, 1.0, 6)
        f = np.interp(t, knots, rng.normal(size=knots.size))
        alpha = rng.uniform(0.1, 3.0)
        beta = rng.uniform(-2.0, 2.0)
        reps.append(gronwall_check(f, alpha, beta, 0.0, h))
    out["gronwall"] = VerificationReport.combine("gronwall", reps)

    reps = []
    h = 1e-2
    t = np.arange(0.0, 2.0 + h / 2, h)
    for _ in range(draws):
        jumps = rng.random(t.size) < 0.05
        f = np.cumsum(jumps * rng.uniform(0.0, 1.0, t.size)) + rng.uniform(0.0, 1.0)
        g = np.abs(rng.normal(size=t.size))
        reps.append(convolution_monotonicity_check(f, g, h))
    out["convolution_monotonicity"] = VerificationReport.combine("convolution_monotonicity", reps)

    reps = []
    for _ in range(draws):
        lam = rng.uniform(0.05, 0.5)
        K0 = rng.uniform(0.1, 2.0)
        omega = rng.uniform(-2.0, 0.5)
        T = rng.uniform(0.5, 2.0)
        reps.append(volterra_spectrum_check(lam, K0, omega, T, T / 96))
    out["volterra_spectrum"] = VerificationReport.combine("volterra_spectrum", reps)

    reps = []
    n = 41
    for _ in range(draws):
        lam = rng.uniform(0.0, 0.95)
        q = rng.uniform(lam, 0.99)
        T_int = running_integral_matrix(n, 1.0 / (n - 1))
        g = np.abs(rng.normal(size=n))
        f1 = np.abs(rng.normal(size=n))
        reps.append(bounded_recursion_check(T_int, g, lam, q, f1, 60))
    out["bounded_recursion"] = VerificationReport.combine("bounded_recursion", reps)

    reps = []
    for _ in range(draws):
        m = int(rng.integers(5, 200))
        times = np.sort(rng.uniform(0.0, 5.0, m))
        times = np.unique(times)
        vals = np.cumsum(rng.normal(size=(times.size, 2)), axis=0)
        reps.append(limsup_lipschitz_check((times, vals), window=1))
    out["limsup_lipschitz"] = VerificationReport.combine("limsup_lipschitz", reps)
    return out
