"""Exact integrals of exponential kernels against piecewise-linear data.

For a linear interpolant on a step of length ``h`` and a kernel
``exp(-tau/lam)/lam`` the integral over one step is

    int_0^h exp(-tau/lam)/lam * u(t - tau) dtau = w1 * u(t) + w0 * u(t - h)

with ``a = h/lam``, ``E = exp(-a)``, ``w0 = (1 - E - a E)/a`` and
``w1 = (1 - E) - w0``.  Both weights are evaluated without cancellation for
small and large ``a``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import lfilter

_SERIES_CUTOFF = 0.5
_SERIES_TERMS = 24


def _w0_series(a):
    # sum_{n>=2} (-1)^n (n-1) a^(n-1) / n!
    out = np.zeros_like(a)
    term_pow = np.ones_like(a)
    fact = 1.0
    for n in range(2, _SERIES_TERMS + 2):
        fact *= n
        term_pow = term_pow * a
        out = out + ((-1) ** n) * (n - 1) * term_pow / fact
    return out


def exp_pl_weights(a):
    """Decay factor and step weights ``(E, w0, w1)`` for ``a = h/lam``.

    Parameters
    ----------
    a : float or ndarray
        Step length measured in units of the kernel scale; must be positive.

    Returns
    -------
    E, w0, w1 : float or ndarray
        ``E = exp(-a)``; ``w0`` multiplies the older node, ``w1`` the newer.
        ``w0 + w1 = 1 - E``.
    """
    a_arr = np.asarray(a, dtype=float)
    if np.any(a_arr <= 0):
        raise ValueError("step ratio must be positive")
    E = np.exp(-a_arr)
    one_minus_E = -np.expm1(-a_arr)
    small = a_arr < _SERIES_CUTOFF
    w0 = np.empty_like(a_arr)
    if np.any(small):
        w0[small] = _w0_series(a_arr[small])
    big = ~small
    if np.any(big):
        ab = a_arr[big]
        w0[big] = (one_minus_E[big] - ab * E[big]) / ab
    w1 = one_minus_E - w0
    if np.ndim(a) == 0:
        return float(E), float(w0), float(w1)
    return E, w0, w1


def kernel_step_weights(beta, h):
    """Weights of ``int_0^h exp(-beta s) u(t - s) ds = W1 u(t) + W0 u(t - h)``.

    Valid for any real ``beta`` including 0 and negative values.

    Returns
    -------
    E, W0, W1 : float
        ``E = exp(-beta h)`` carries the running integral over one step.
    """
    a = beta * h
    E = math.exp(-a)
    if abs(a) < _SERIES_CUTOFF:
        # (1 - E)/a and w0/a as power series in a
        one_minus_E_over_a = 0.0
        w0_over_a = 0.0
        fact = 1.0
        for n in range(1, _SERIES_TERMS + 2):
            fact *= n
            one_minus_E_over_a += (-1) ** (n + 1) * a ** (n - 1) / fact
            if n >= 2:
                w0_over_a += (-1) ** n * (n - 1) * a ** (n - 2) / fact
    else:
        one_minus_E_over_a = -math.expm1(-a) / a
        w0_over_a = (-math.expm1(-a) - a * E) / (a * a)
    W0 = h * w0_over_a
    W1 = h * (one_minus_E_over_a - w0_over_a)
    return E, W0, W1


def kernel_convolution_series(values, h, beta):
    """``I_j = int_0^{t_j} exp(-beta (t_j - tau)) u(tau) dtau`` on a uniform grid from 0."""
    u = np.asarray(values, dtype=float)
    if u.shape[0] == 0:
        return u.copy()
    E, W0, W1 = kernel_step_weights(beta, h)
    zi = -W1 * u[:1]
    out, _ = lfilter([W1, W0], [1.0, -E], u, axis=0, zi=zi)
    return out


def exp_convolution_series(values, h, lam):
    """Running convolution ``C_j = (1/lam) int_0^{t_j} exp(-tau/lam) u(t_j - tau) dtau``.

    ``values`` are samples of ``u`` on a uniform grid starting at ``t_0 = 0``
    (shape ``(n,)`` or ``(n, d)``); the result has the same shape and
    ``C_0 = 0``.  Uses the exact step recurrence
    ``C_j = E C_{j-1} + w0 u_{j-1} + w1 u_j``.
    """
    u = np.asarray(values, dtype=float)
    if u.shape[0] == 0:
        return u.copy()
    E, w0, w1 = exp_pl_weights(h / lam)
    # zi cancels the w1*u_0 contribution so that C_0 = 0
    zi = -w1 * u[:1]
    out, _ = lfilter([w1, w0], [1.0, -E], u, axis=0, zi=zi)
    return out


def exp_window_integrals(values, h, kappa, window_steps):
    """Sliding integrals ``M_j = int_{-R}^0 exp(kappa s) u(t_j + s) ds``.

    ``values`` are samples on a uniform grid; ``R = window_steps * h``.
    Entries with ``j < window_steps`` integrate from the grid start only.
    """
    u = np.asarray(values, dtype=float)
    P = exp_convolution_series(u, h, 1.0 / kappa) / kappa
    out = P.copy()
    if window_steps < u.shape[0]:
        out[window_steps:] -= math.exp(-kappa * h * window_steps) * P[: u.shape[0] - window_steps]
    return out


def exp_segment_integral(times, states, kappa, lower=None):
    """``int_{lower}^0 exp(kappa s) phi(s) ds`` for piecewise-linear ``phi``.

    ``times`` must be increasing and end at 0; ``states`` has shape
    ``(n,)`` or ``(n, d)``.  Samples below ``lower`` are clipped by
    interpolation at ``lower``.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(states, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
        squeeze = True
    else:
        squeeze = False
    if lower is not None and lower > t[0]:
        keep = t > lower
        x_low = np.array([np.interp(lower, t, x[:, k]) for k in range(x.shape[1])])
        t = np.concatenate([[lower], t[keep]])
        x = np.vstack([x_low, x[keep]])
    if t.size < 2:
        out = np.zeros(x.shape[1])
        return out[0] if squeeze else out
    steps = np.diff(t)
    _, w0, w1 = exp_pl_weights(kappa * steps)
    scale = np.exp(kappa * t[1:]) / kappa
    out = (scale * w0) @ x[:-1] + (scale * w1) @ x[1:]
    return out[0] if squeeze else out
