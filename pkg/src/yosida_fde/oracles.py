"""Independent reference solutions used to calibrate the scheme.

``LinearDelayOracle`` integrates ``u' = (a + omega) u + c u(t - r) + f0``
exactly by the method of steps: on the k-th delay interval, in the local
variable ``s = t - k r``, the solution has the form ``P_k(s) + exp(a' s) Q_k(s)``
with polynomials ``P_k, Q_k`` and ``a' = a + omega``.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import solve_ivp


class LinearDelayOracle:
    """Closed-form method of steps for a scalar linear delay equation.

    Parameters
    ----------
    a, c, r : float
        Coefficients of ``u'(t) = a u(t) + c u(t - r) + omega u(t) + f0``.
    history : sequence of float
        Coefficients (increasing degree) of the polynomial history
        ``phi(t)`` for ``t`` in ``[-r, 0]``.
    omega, f0 : float
    """

    def __init__(self, a, c, r, history=(1.0,), omega=0.0, f0=0.0):
        self.a = float(a) + float(omega)
        self.c = float(c)
        self.r = float(r)
        self.f0 = float(f0)
        # history in the local variable s = t + r of interval -1
        shift = Polynomial([-self.r, 1.0])
        self.history = Polynomial(history)
        self._pieces = [(self.history(shift), Polynomial([0.0]))]

    def _particular_poly(self, F):
        a = self.a
        if a == 0.0:
            return F.integ()
        R = Polynomial([0.0])
        term = F
        k = 0
        while term.degree() >= 0 and np.any(term.coef != 0):
            R = R - term / a ** (k + 1)
            term = term.deriv()
            k += 1
            if k > 200:
                break
        return R

    def _extend(self):
        P, Q = self._pieces[-1]
        end = self._value_piece(len(self._pieces) - 1, self.r)
        R = self._particular_poly(self.c * P + self.f0)
        S = (self.c * Q).integ()
        K = end - R(0.0) - S(0.0)
        self._pieces.append((R, S + K))

    def _value_piece(self, idx, s):
        P, Q = self._pieces[idx]
        return P(s) + np.exp(self.a * s) * Q(s)

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(t_arr)
        need = int(math.floor(np.max(t_arr) / self.r)) + 2 if t_arr.size else 1
        while len(self._pieces) < need + 1:
            self._extend()
        for i, ti in enumerate(t_arr):
            if ti <= 0:
                out[i] = self.history(ti)
                continue
            k = min(int(math.ceil(ti / self.r)) - 1, len(self._pieces) - 2)
            out[i] = self._value_piece(k + 1, ti - k * self.r)
        return out if np.ndim(t) else float(out[0])


def method_of_steps_ivp(rhs, history, r, T, dim=1, rtol=1e-11, atol=1e-13):
    """Reference for ``u' = rhs(t, u(t), u(t - r))`` by stepping ``solve_ivp`` per interval.

    ``history`` maps ``t <= 0`` to a state.  Returns a callable ``u(t)``.
    """
    pieces = []

    def u_of(t):
        if t <= 0:
            return np.atleast_1d(np.asarray(history(t), dtype=float))
        for start, end, sol in pieces:
            if start <= t <= end + 1e-15:
                return sol.sol(t)
        raise ValueError("time outside the computed range")

    x0 = u_of(0.0)
    k = 0
    while k * r < T:
        start, end = k * r, min((k + 1) * r, T)
        sol = solve_ivp(lambda t, y: rhs(t, y, u_of(t - r)), (start, end), x0,
                        rtol=rtol, atol=atol, dense_output=True, method="DOP853")
        pieces.append((start, end, sol))
        x0 = sol.y[:, -1]
        k += 1

    def u(t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        vals = np.array([u_of(ti) for ti in t_arr])
        return vals if np.ndim(t) else vals[0]
    return u


def exp_memory_reference(a, c, kappa, R, phi0, T, omega=0.0, forcing=None, dim=1,
                         rtol=1e-11, atol=1e-13):
    """Reference for ``u' = a u + c m + omega u + f(t)`` with ``m' = u - kappa m``.

    ``m(t) = int exp(kappa s) u(t + s) ds`` over the infinite past, started
    from the truncated value ``phi0 (1 - exp(-kappa R)) / kappa`` for a
    constant history.  The neglected truncation tail is bounded by
    ``exp(-kappa R) sup|u| / kappa``.
    """
    phi0 = np.broadcast_to(np.asarray(phi0, dtype=float), (dim,)).copy()
    forcing = forcing or (lambda t: 0.0)
    m0 = phi0 * (-math.expm1(-kappa * R)) / kappa

    def rhs(t, y):
        u, m = y[:dim], y[dim:]
        return np.concatenate([(a + omega) * u + c * m + forcing(t), u - kappa * m])

    sol = solve_ivp(rhs, (0.0, T), np.concatenate([phi0, m0]), rtol=rtol, atol=atol,
                    dense_output=True, method="DOP853")

    def u(t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        vals = np.where(t_arr[:, None] <= 0, phi0, sol.sol(np.maximum(t_arr, 0.0))[:dim].T)
        return vals if np.ndim(t) else vals[0]
    return u
