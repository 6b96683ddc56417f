"""Dissipative operators ``A(t, phi)``, their resolvents and control audits.

Every operator in the zoo has the additive structure

    A(t, phi) x = N(x) + shift * x + h(t) + sum_i F_i(t, phi)

where ``N`` is a dissipative core acting on the state only, ``h`` a named
forcing and ``F_i`` history functionals.  The resolvent therefore reduces to
the core equation ``alpha x - lam N(x) = rhs`` with ``alpha > 0``, which is
strictly monotone in ``x`` and solved in closed form where possible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError, ResolventError, StructuralError
from .grid import DelayGeometry, HistorySegment, state_norm
from .kernels import exp_segment_integral, exp_window_integrals
from .reports import VerificationReport
from .timefunctions import MonotoneMap, TimeFunction

VARIANTS = ("linear_delay", "cubic_delay", "laplacian_reaction", "exp_memory")
ASSUMPTION_KINDS = ("og", "lipschitz")


# ---------------------------------------------------------------------------
# control data


@dataclass(frozen=True)
class ControlData:
    """Declared control functions of an operator family.

    ``assumption_kind="og"`` is the uniformly continuous variant without
    ``g``; ``"lipschitz"`` requires ``g`` and Lipschitz ``h, g, k``.
    """

    omega: float = 0.0
    K0: float = 0.0
    h_fn: TimeFunction = field(default_factory=TimeFunction.zero)
    k_fn: TimeFunction = field(default_factory=TimeFunction.zero)
    L1_fn: MonotoneMap = field(default_factory=lambda: MonotoneMap.constant(1.0))
    L2_fn: MonotoneMap = field(default_factory=MonotoneMap)
    g_fn: TimeFunction | None = None
    assumption_kind: str = "og"

    def __post_init__(self):
        if self.assumption_kind not in ASSUMPTION_KINDS:
            raise ConfigError(f"unknown assumption kind {self.assumption_kind!r}")
        if self.K0 < 0:
            raise ConfigError("K0 must be nonnegative")
        if self.assumption_kind == "og" and self.g_fn is not None:
            raise ConfigError("the uniformly continuous variant takes no g")
        if self.assumption_kind == "lipschitz":
            if self.g_fn is None:
                raise ConfigError("the Lipschitz variant needs g (use a zero function)")
            for name in ("h_fn", "g_fn", "k_fn"):
                if not math.isfinite(getattr(self, name).lipschitz):
                    raise ConfigError(f"{name} needs a finite Lipschitz constant")

    @property
    def L_h(self):
        return self.h_fn.lipschitz

    @property
    def L_g(self):
        return 0.0 if self.g_fn is None else self.g_fn.lipschitz

    @property
    def L_k(self):
        return self.k_fn.lipschitz

    def g_vector(self, t, dim):
        if self.g_fn is None:
            return np.zeros(np.shape(t) + (dim,))
        return self.g_fn.vector(t, dim)

    def h_omega_distance(self, t1, t2, dim, kind="euclidean"):
        """``||h^w(t1) - h^w(t2)||_1`` with ``h^w = (h, |omega| g)``."""
        dh = state_norm(self.h_fn.vector(t1, dim) - self.h_fn.vector(t2, dim), kind)
        if self.g_fn is None:
            return dh
        dg = state_norm(self.g_fn.vector(t1, dim) - self.g_fn.vector(t2, dim), kind)
        return dh + abs(self.omega) * dg

    def L1_omega(self, s):
        """``L1^w(s) = L1(s) + s``."""
        return self.L1_fn(s) + np.asarray(s, dtype=float)

    def stability_margin(self):
        """``-omega - K0`` (og) or ``-omega - max(K0, L_g)`` (lipschitz)."""
        lead = self.K0 if self.assumption_kind == "og" else max(self.K0, self.L_g)
        return -self.omega - lead

    def with_omega(self, omega):
        return replace(self, omega=float(omega))

    def to_dict(self):
        return {
            "omega": self.omega,
            "K0": self.K0,
            "h": self.h_fn.to_dict(),
            "k": self.k_fn.to_dict(),
            "g": None if self.g_fn is None else self.g_fn.to_dict(),
            "L1": self.L1_fn.to_dict(),
            "L2": self.L2_fn.to_dict(),
            "assumption_kind": self.assumption_kind,
        }


# ---------------------------------------------------------------------------
# resolvent bookkeeping


@dataclass(frozen=True)
class ResolventMethod:
    kind: str = "closed_form"
    max_iter: int = 100
    tol: float = 1e-12

    def __post_init__(self):
        if self.kind not in ("closed_form", "newton", "picard"):
            raise ConfigError(f"unknown resolvent method {self.kind!r}")
        if self.max_iter < 1 or not self.tol > 0:
            raise ConfigError("resolvent max_iter and tol must be positive")

    def to_dict(self):
        return {"kind": self.kind, "max_iter": self.max_iter, "tol": self.tol}


@dataclass(frozen=True)
class ResolventStats:
    iterations: int
    residual: float
    method: str


# ---------------------------------------------------------------------------
# dissipative cores


def _cubic_root(alpha, lam, rhs):
    """Real root of ``alpha x + lam x^3 = rhs`` (Cardano start, no polish)."""
    alpha = np.asarray(alpha, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    linear_guess = rhs / alpha
    p = alpha / lam
    q = rhs / lam
    with np.errstate(over="ignore", invalid="ignore"):
        D = np.sqrt(0.25 * q * q + p ** 3 / 27.0)
        A = np.cbrt(0.5 * np.abs(q) + D)
        cardano = np.sign(q) * (A - p / (3.0 * A))
    nearly_linear = lam * linear_guess ** 2 < 1e-3 * alpha
    out = np.where(nearly_linear | ~np.isfinite(cardano), linear_guess, cardano)
    return np.where(q == 0, 0.0, out)


class _Core:
    """State-only dissipative part ``N``; ``N(0) = 0`` for every core."""

    name = "core"
    elementwise = True
    has_closed_form = False

    def __call__(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        """Elementwise derivative (elementwise cores) or ``(..., d, d)`` matrix."""
        raise NotImplementedError

    def local_lipschitz(self, radius):
        raise NotImplementedError

    def closed_form(self, alpha, lam, rhs):
        return None

    def to_dict(self):
        return {"name": self.name}


@dataclass(frozen=True)
class LinearCore(_Core):
    a: float
    name = "linear"
    has_closed_form = True

    def __post_init__(self):
        if self.a > 0:
            raise ConfigError("linear core needs a <= 0 for dissipativity")

    def __call__(self, x):
        return self.a * np.asarray(x, dtype=float)

    def jacobian(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.a)

    def local_lipschitz(self, radius):
        return abs(self.a)

    def closed_form(self, alpha, lam, rhs):
        return np.asarray(rhs, dtype=float) / (np.asarray(alpha)[..., None] - lam * self.a) \
            if np.ndim(alpha) else np.asarray(rhs, dtype=float) / (alpha - lam * self.a)

    def to_dict(self):
        return {"name": self.name, "a": self.a}


@dataclass(frozen=True)
class CubicCore(_Core):
    name = "cubic"
    has_closed_form = True

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return -x * x * x

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return -3.0 * x * x

    def local_lipschitz(self, radius):
        return 3.0 * radius * radius

    def closed_form(self, alpha, lam, rhs):
        alpha = np.asarray(alpha, dtype=float)
        if alpha.ndim:
            alpha = alpha[..., None]
        return _cubic_root(alpha, lam, rhs)


@dataclass(frozen=True)
class LaplacianReactionCore(_Core):
    """``nu * L x - x^3`` with the Dirichlet second-difference matrix ``L``."""

    nu: float
    dim: int
    name = "laplacian_reaction"
    elementwise = False

    def __post_init__(self):
        if self.nu < 0:
            raise ConfigError("diffusion must be nonnegative")
        if self.dim < 1:
            raise ConfigError("dimension must be positive")

    def laplacian(self, x):
        x = np.asarray(x, dtype=float)
        out = -2.0 * x
        out[..., 1:] += x[..., :-1]
        out[..., :-1] += x[..., 1:]
        return out

    def matrix(self):
        d = self.dim
        return -2.0 * np.eye(d) + np.eye(d, k=1) + np.eye(d, k=-1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.nu * self.laplacian(x) - x * x * x

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        J = np.broadcast_to(self.nu * self.matrix(), x.shape[:-1] + (self.dim, self.dim)).copy()
        idx = np.arange(self.dim)
        J[..., idx, idx] -= 3.0 * x * x
        return J

    def local_lipschitz(self, radius):
        return 4.0 * self.nu + 3.0 * radius * radius

    def to_dict(self):
        return {"name": self.name, "nu": self.nu, "dim": self.dim}


# ---------------------------------------------------------------------------
# history functionals F(t, phi)


class HistoryFunctional:
    """Map ``(t, phi) -> X`` with declared ``K0``, ``k`` and ``L2`` controls."""

    name = "functional"

    @property
    def K0(self):
        return 0.0

    @property
    def k_fn(self):
        return TimeFunction.zero()

    @property
    def L2_fn(self):
        return MonotoneMap()

    def evaluate(self, t, phi, dim):
        raise NotImplementedError

    def evaluate_path(self, traj, times):
        """Values at ``(t, traj_t)`` for every ``t`` in ``times``; shape ``(n, d)``."""
        raise NotImplementedError

    def to_dict(self):
        return {"name": self.name}


@dataclass(frozen=True)
class ZeroFunctional(HistoryFunctional):
    name = "zero"

    def evaluate(self, t, phi, dim):
        return np.zeros(dim)

    def evaluate_path(self, traj, times):
        return np.zeros((np.size(times), traj.dim))


@dataclass(frozen=True)
class PointDelay(HistoryFunctional):
    """``c * phi(-r)``."""

    c: float
    r: float
    name = "point_delay"

    @property
    def K0(self):
        return abs(self.c)

    def evaluate(self, t, phi, dim):
        return self.c * phi(-self.r)

    def evaluate_path(self, traj, times):
        return self.c * traj(np.asarray(times) - self.r)

    def to_dict(self):
        return {"name": self.name, "c": self.c, "r": self.r}


@dataclass(frozen=True)
class PointTanh(HistoryFunctional):
    """``c * tanh(phi(-r))`` componentwise."""

    c: float
    r: float
    name = "point_tanh"

    @property
    def K0(self):
        return abs(self.c)

    def evaluate(self, t, phi, dim):
        return self.c * np.tanh(phi(-self.r))

    def evaluate_path(self, traj, times):
        return self.c * np.tanh(traj(np.asarray(times) - self.r))

    def to_dict(self):
        return {"name": self.name, "c": self.c, "r": self.r}


@dataclass(frozen=True)
class ExpMemory(HistoryFunctional):
    """``c * int_{-R}^0 exp(kappa s) phi(s) ds`` truncated at ``-R``."""

    c: float
    kappa: float
    R: float
    name = "exp_memory"

    def __post_init__(self):
        if not self.kappa > 0 or not self.R > 0:
            raise ConfigError("exp memory needs kappa > 0 and R > 0")

    @property
    def K0(self):
        return abs(self.c) * (-math.expm1(-self.kappa * self.R)) / self.kappa

    def evaluate(self, t, phi, dim):
        return self.c * exp_segment_integral(phi.times, phi.states, self.kappa, lower=-self.R)

    def evaluate_path(self, traj, times):
        grid = traj.grid
        steps = round(self.R / grid.h)
        if abs(steps * grid.h - self.R) > 1e-9 * grid.h:
            raise StructuralError("memory radius must be a multiple of the grid step")
        M = exp_window_integrals(traj.states, grid.h, self.kappa, steps)
        idx = np.array([grid.index_of(float(t)) for t in np.atleast_1d(times)])
        return self.c * M[idx]

    def to_dict(self):
        return {"name": self.name, "c": self.c, "kappa": self.kappa, "R": self.R}


@dataclass(frozen=True)
class TimeOnly(HistoryFunctional):
    """``k(t)``, independent of the history."""

    k: TimeFunction
    name = "time_only"

    @property
    def k_fn(self):
        return self.k

    @property
    def L2_fn(self):
        return MonotoneMap.constant(1.0)

    def evaluate(self, t, phi, dim):
        return self.k.vector(np.asarray(t, dtype=float), dim)

    def evaluate_path(self, traj, times):
        return self.k.vector(np.asarray(times, dtype=float), traj.dim)

    def to_dict(self):
        return {"name": self.name, "k": self.k.to_dict()}


# ---------------------------------------------------------------------------
# operator definition


@dataclass(frozen=True)
class OperatorSpec:
    """A zoo operator with its geometry, controls and resolvent method."""

    variant: str
    dim: int
    geometry: DelayGeometry
    core: _Core
    functionals: tuple
    forcing: TimeFunction
    control: ControlData
    resolvent_method: ResolventMethod = field(default_factory=ResolventMethod)
    shift: float = 0.0
    norm: str = "euclidean"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "functionals", tuple(self.functionals))
        if self.resolvent_method.kind == "closed_form" and not self.core.has_closed_form:
            object.__setattr__(self, "resolvent_method",
                               replace(self.resolvent_method, kind="newton"))
        for F in self.functionals:
            if isinstance(F, (PointDelay, PointTanh)) and F.r > self.geometry.length + 1e-12:
                raise ConfigError("point delay exceeds the delay interval")
            if isinstance(F, ExpMemory):
                if self.geometry.kind != "infinite":
                    raise ConfigError("exp memory needs an infinite delay geometry")
                if F.kappa < self.geometry.tail_rate:
                    raise ConfigError("memory decays slower than the declared tail rate")

    # -- evaluation -------------------------------------------------------

    @property
    def omega(self):
        return self.control.omega

    @property
    def K0(self):
        return self.control.K0

    @property
    def history_free(self):
        return all(F.K0 == 0.0 for F in self.functionals)

    def _check_phi(self, phi):
        if not isinstance(phi, HistorySegment):
            raise StructuralError("history argument must be a HistorySegment")
        if phi.geometry != self.geometry:
            raise StructuralError("history geometry differs from the operator geometry")
        if phi.dim != self.dim:
            raise StructuralError("history dimension differs from the operator dimension")

    def core_apply(self, x):
        """``N(x) + shift * x``."""
        return self.core(x) + self.shift * np.asarray(x, dtype=float)

    def history_input(self, t, phi):
        """``h(t) + sum_i F_i(t, phi)``: the state-independent part of ``A``."""
        self._check_phi(phi)
        b = self.forcing.vector(np.asarray(float(t)), self.dim)
        for F in self.functionals:
            b = b + F.evaluate(t, phi, self.dim)
        return b

    def history_inputs(self, traj, times=None):
        """``h(t) + sum_i F_i(t, traj_t)`` at every forward node (vectorised)."""
        if times is None:
            times = traj.grid.forward_times
        times = np.asarray(times, dtype=float)
        b = self.forcing.vector(times, self.dim)
        for F in self.functionals:
            b = b + F.evaluate_path(traj, times)
        return b

    def apply(self, t, phi, x):
        """``A(t, phi) x`` (without the ``omega`` term)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise StructuralError("state dimension differs from the operator dimension")
        if not np.all(np.isfinite(x)):
            raise StructuralError("non-finite state")
        return self.core_apply(x) + self.history_input(t, phi)

    # -- core solves ----------------------------------------------------------

    def solve_core(self, alpha, lam, rhs, x0=None, method=None):
        """Solve ``alpha x - lam (N(x) + shift x) = rhs`` for ``x``.

        ``rhs`` may be batched with shape ``(..., d)``; ``alpha`` is a scalar
        or broadcastable to the batch shape.  Returns ``(x, iterations,
        residual)`` where the residual is the max absolute equation error.
        """
        method = method or self.resolvent_method
        rhs = np.asarray(rhs, dtype=float)
        alpha_eff = np.asarray(alpha, dtype=float) - lam * self.shift
        if np.any(alpha_eff <= 0):
            raise DomainError("resolvent equation is not strictly monotone")
        scale = max(1.0, float(np.max(np.abs(rhs))) if rhs.size else 1.0)
        target = method.tol * scale

        def residual(x):
            a = alpha_eff[..., None] if np.ndim(alpha_eff) else alpha_eff
            return a * x - lam * self.core(x) - rhs

        if method.kind == "closed_form":
            x = self.core.closed_form(alpha_eff, lam, rhs)
            res = np.max(np.abs(residual(x))) if x.size else 0.0
            if res <= target:
                return x, 0, float(res)
            x, it, res = self._newton(alpha_eff, lam, rhs, x, residual, target, method.max_iter)
            return x, it, res
        if method.kind == "newton":
            if x0 is None:
                x0 = self.core.closed_form(alpha_eff, lam, rhs) if self.core.has_closed_form else \
                    rhs / (alpha_eff[..., None] if np.ndim(alpha_eff) else alpha_eff)
            return self._newton(alpha_eff, lam, rhs, np.array(x0, dtype=float), residual, target,
                                method.max_iter)
        return self._picard(alpha_eff, lam, rhs, residual, target, method.max_iter, x0)

    def _newton(self, alpha, lam, rhs, x, residual, target, max_iter):
        a = alpha[..., None] if np.ndim(alpha) else alpha
        G = residual(x)
        res = float(np.max(np.abs(G))) if G.size else 0.0
        it = 0
        while res > target and it < max_iter:
            it += 1
            J = self.core.jacobian(x)
            if self.core.elementwise:
                step = G / (a - lam * J)
            else:
                M = -lam * J
                idx = np.arange(self.dim)
                M[..., idx, idx] += a if np.ndim(a) == 0 else np.broadcast_to(a, M.shape[:-1])
                step = np.linalg.solve(M, G[..., None])[..., 0]
            # damping: halve until the residual norm decreases
            t = 1.0
            old = np.abs(G).max(axis=-1) if G.ndim else abs(G)
            for _ in range(30):
                x_new = x - t * step
                G_new = residual(x_new)
                new = np.abs(G_new).max(axis=-1) if G_new.ndim else abs(G_new)
                if np.all(new <= old) or t < 1e-8:
                    break
                t *= 0.5
            x, G = x_new, G_new
            res = float(np.max(np.abs(G))) if G.size else 0.0
        if res > target:
            raise ResolventError(f"Newton resolvent residual {res:.3e} above {target:.1e}",
                                 residual=res, iterations=it)
        return x, it, res

    def _picard(self, alpha, lam, rhs, residual, target, max_iter, x0):
        a = alpha[..., None] if np.ndim(alpha) else alpha
        a_min = float(np.min(alpha))
        # |x*| <= |rhs| / alpha because N(0) = 0 and x - lam N x is strongly monotone
        radius = float(np.max(np.abs(rhs))) / a_min * math.sqrt(self.dim) if rhs.size else 0.0
        M = float(np.max(alpha)) + lam * self.core.local_lipschitz(radius)
        step = a_min / (M * M)
        x = rhs / a if x0 is None else np.array(x0, dtype=float)
        G = residual(x)
        res = float(np.max(np.abs(G))) if G.size else 0.0
        it = 0
        while res > target and it < max_iter:
            it += 1
            x = x - step * G
            G = residual(x)
            res = float(np.max(np.abs(G)))
        if res > target:
            raise ResolventError(f"Picard resolvent residual {res:.3e} above {target:.1e}",
                                 residual=res, iterations=it)
        return x, it, res

    # -- derived operators --------------------------------------------------

    def shifted(self, omega):
        """The pair ``(A + omega I, 0)`` equivalent to ``(A, omega)``."""
        return replace(self, shift=self.shift + float(omega),
                       control=self.control.with_omega(self.control.omega - float(omega)))

    def with_omega(self, omega):
        return replace(self, control=self.control.with_omega(omega))

    def with_control(self, control):
        return replace(self, control=control)

    def with_method(self, method):
        return replace(self, resolvent_method=method)

    def compose(self, F):
        """``A + F`` with controls combined by the triangle inequality."""
        ctrl = self.control
        k_terms = [t for t in (ctrl.k_fn, F.k_fn) if not t.is_zero]
        k = k_terms[0] if len(k_terms) == 1 else (
            TimeFunction.sum_of(*k_terms) if k_terms else TimeFunction.zero())
        L2 = MonotoneMap(max(ctrl.L2_fn.offset, F.L2_fn.offset),
                         max(ctrl.L2_fn.slope, F.L2_fn.slope),
                         max(ctrl.L2_fn.power, F.L2_fn.power))
        new_ctrl = replace(ctrl, K0=ctrl.K0 + F.K0, k_fn=k, L2_fn=L2)
        return replace(self, functionals=self.functionals + (F,), control=new_ctrl)

    def to_dict(self):
        return {
            "variant": self.variant,
            "dim": self.dim,
            "geometry": self.geometry.to_dict(),
            "core": self.core.to_dict(),
            "functionals": [F.to_dict() for F in self.functionals],
            "forcing": self.forcing.to_dict(),
            "control": self.control.to_dict(),
            "resolvent_method": self.resolvent_method.to_dict(),
            "shift": self.shift,
            "norm": self.norm,
            "params": dict(self.params),
        }


def _default_control(omega, K0, forcing, k_fn=None, assumption_kind="og"):
    k_fn = k_fn or TimeFunction.zero()
    return ControlData(
        omega=float(omega), K0=float(K0), h_fn=forcing, k_fn=k_fn,
        L1_fn=MonotoneMap.constant(1.0),
        L2_fn=MonotoneMap.constant(0.0 if k_fn.is_zero else 1.0),
        g_fn=None if assumption_kind == "og" else TimeFunction.zero(),
        assumption_kind=assumption_kind)


def linear_delay(a=-2.0, c=0.5, r=1.0, omega=0.0, forcing=None, dim=1,
                 method=None, assumption_kind="og", norm="euclidean"):
    """``A(t, phi) x = a x + c phi(-r) + h(t)`` on ``[-r, 0]``."""
    forcing = forcing or TimeFunction.zero()
    F = PointDelay(float(c), float(r))
    return OperatorSpec(
        "linear_delay", dim, DelayGeometry.finite(r), LinearCore(float(a)), (F,), forcing,
        _default_control(omega, F.K0, forcing, assumption_kind=assumption_kind),
        method or ResolventMethod("closed_form"), norm=norm,
        params={"a": a, "c": c, "r": r})


def cubic_delay(c=0.5, r=1.0, omega=0.0, forcing=None, dim=1, method=None,
                assumption_kind="og", norm="euclidean"):
    """``A(t, phi) x = -x^3 + c phi(-r) + h(t)`` componentwise."""
    forcing = forcing or TimeFunction.zero()
    F = PointDelay(float(c), float(r))
    return OperatorSpec(
        "cubic_delay", dim, DelayGeometry.finite(r), CubicCore(), (F,), forcing,
        _default_control(omega, F.K0, forcing, assumption_kind=assumption_kind),
        method or ResolventMethod("closed_form"), norm=norm,
        params={"c": c, "r": r})


def laplacian_reaction(dim=4, nu=1.0, c=0.5, r=1.0, omega=0.0, forcing=None, method=None,
                       assumption_kind="og", norm="euclidean"):
    """``A(t, phi) x = nu L x - x^3 + c phi(-r) + h(t)`` with Dirichlet ``L``."""
    forcing = forcing or TimeFunction.zero()
    F = PointDelay(float(c), float(r))
    return OperatorSpec(
        "laplacian_reaction", dim, DelayGeometry.finite(r), LaplacianReactionCore(float(nu), dim),
        (F,), forcing, _default_control(omega, F.K0, forcing, assumption_kind=assumption_kind),
        method or ResolventMethod("newton"), norm=norm,
        params={"nu": nu, "c": c, "r": r})


def exp_memory(c=0.5, kappa=1.0, R=30.0, omega=0.0, forcing=None, dim=1, method=None,
               tail_rate=None, assumption_kind="og", norm="euclidean"):
    """``A(t, phi) x = -x + c int_{-R}^0 exp(kappa s) phi(s) ds + h(t)``."""
    forcing = forcing or TimeFunction.zero()
    F = ExpMemory(float(c), float(kappa), float(R))
    geom = DelayGeometry.infinite(R, kappa if tail_rate is None else tail_rate)
    return OperatorSpec(
        "exp_memory", dim, geom, LinearCore(-1.0), (F,), forcing,
        _default_control(omega, F.K0, forcing, assumption_kind=assumption_kind),
        method or ResolventMethod("closed_form"), norm=norm,
        params={"c": c, "kappa": kappa, "R": R})


def bare_operator(core, geometry, dim=1, omega=0.0, forcing=None, method=None,
                  assumption_kind="og", norm="euclidean"):
    """History-free operator ``B(t) x = N(x) + h(t)``, the ``B`` of ``A = B + F``."""
    forcing = forcing or TimeFunction.zero()
    return OperatorSpec(
        "bare", dim, geometry, core, (), forcing,
        _default_control(omega, 0.0, forcing, assumption_kind=assumption_kind),
        method or ResolventMethod("closed_form" if core.has_closed_form else "newton"),
        norm=norm)


# ---------------------------------------------------------------------------
# resolvent operations


def _validate_lambda(lam):
    if not lam > 0:
        raise DomainError("lambda must be positive")


def resolvent(op, lam, t, phi, z, method=None):
    """``J_lam(t, phi) z = (I - lam A(t, phi))^{-1} z``.

    Returns
    -------
    x : ndarray
        Solution of ``x - lam A(t, phi) x = z``.
    stats : ResolventStats
        Iterations and the residual ``||x - lam A x - z||``.
    """
    _validate_lambda(lam)
    z = np.asarray(z, dtype=float)
    rhs = z + lam * op.history_input(t, phi)
    x, it, _ = op.solve_core(1.0, lam, rhs, method=method)
    res = float(state_norm(x - lam * op.apply(t, phi, x) - z, op.norm))
    return x, ResolventStats(it, res, (method or op.resolvent_method).kind)


def check_omega_lambda(lam, omega):
    """Reject ``lam * omega >= 1``."""
    _validate_lambda(lam)
    if lam * omega >= 1.0:
        raise DomainError(f"lambda*omega = {lam * omega:.6g} must be < 1")


def resolvent_omega(op, lam, t, phi, z, path="scaling", method=None):
    """``J^w_lam(t, phi) z = (I - lam (A(t, phi) + omega I))^{-1} z``.

    ``path="scaling"`` evaluates ``J_{lam'}(t, phi)(z / (1 - lam omega))`` with
    ``lam' = lam / (1 - lam omega)``; ``path="direct"`` solves the shifted
    equation as written.
    """
    omega = op.omega
    check_omega_lambda(lam, omega)
    z = np.asarray(z, dtype=float)
    b = op.history_input(t, phi)
    if path == "scaling":
        s = 1.0 - lam * omega
        lam_s = lam / s
        x, _, _ = op.solve_core(1.0, lam_s, z / s + lam_s * b, method=method)
    elif path == "direct":
        x, _, _ = op.solve_core(1.0 - lam * omega, lam, z + lam * b, method=method)
    else:
        raise ValueError(f"unknown path {path!r}")
    return x


def yosida_apply(op, lam, t, phi, x, method=None):
    """``A_lam x = (x - J_lam x) / lam``.

    With ``J_lam = (I - lam A)^{-1}`` this tends to ``-A x`` for single-valued
    ``A``; only ``||A_lam x||`` enters the bracket seminorm.
    """
    x = np.asarray(x, dtype=float)
    J, _ = resolvent(op, lam, t, phi, x, method=method)
    return (x - J) / lam


def bracket_seminorm(op, t, phi, x, lam_sequence, return_values=False):
    """``|A x| = lim_{lam -> 0} ||A_lam x||`` by Richardson extrapolation.

    Assumes ``||A_lam x|| = L + c lam + o(lam)``.  Returns ``inf`` if the values
    grow at least like ``lam^{-1/2}`` over the last two refinements.
    """
    lams = np.asarray(lam_sequence, dtype=float)
    if lams.size == 0 or np.any(lams <= 0) or np.any(np.diff(lams) >= 0):
        raise ValueError("lambda sequence must be positive and strictly decreasing")
    vals = np.array([float(state_norm(yosida_apply(op, lam, t, phi, x), op.norm))
                     for lam in lams])
    if vals.size == 1:
        est = float(vals[0])
    else:
        diverging = False
        if vals.size >= 3:
            with np.errstate(divide="ignore", invalid="ignore"):
                growth = np.log(vals[1:] / vals[:-1]) / np.log(lams[:-1] / lams[1:])
            diverging = bool(np.all(growth[-2:] > 0.5) and vals[-1] > vals[-2] > vals[-3])
        if diverging:
            est = math.inf
        else:
            l0, l1 = lams[-2], lams[-1]
            est = float(max(0.0, vals[-1] + (vals[-1] - vals[-2]) * l1 / (l0 - l1)))
    return (est, vals) if return_values else est


# ---------------------------------------------------------------------------
# random probes and audits


def random_segment(geometry, dim, rng, scale=1.0, nodes=17):
    """Random piecewise-linear history on ``nodes`` uniform samples."""
    s = np.linspace(-geometry.length, 0.0, nodes)
    vals = rng.normal(scale=scale, size=(nodes, dim))
    return HistorySegment(geometry, s, vals)


def _sample_pairs(op, samples, lam_range, rng, t_range, scale):
    lo, hi = lam_range
    lam = np.exp(rng.uniform(math.log(lo), math.log(hi), size=samples))
    t1 = rng.uniform(*t_range, size=samples)
    t2 = rng.uniform(*t_range, size=samples)
    same_t = rng.random(samples) < 0.2
    t2 = np.where(same_t, t1, t2)
    return lam, t1, t2, same_t


def control_inequality_audit(op, samples=1000, lam_range=(1e-3, 1.0), rng=None,
                             perturbed=False, t_range=(0.0, 10.0), scale=2.0, tol=1e-10):
    """Check the declared control inequality on random pairs of graph points.

    With ``perturbed=True`` the ``omega``-modified inequality is audited:
    ``y_i`` are taken in ``A + omega I`` and the controls are ``h^w`` and
    ``L1^w``.  Residuals are ``RHS - LHS``.
    """
    rng = np.random.default_rng(rng)
    ctrl = op.control
    kind = op.norm
    d = op.dim
    lam, t1, t2, same_t = _sample_pairs(op, samples, lam_range, rng, t_range, scale)
    residuals = np.empty(samples)
    records = []
    for i in range(samples):
        phi1 = random_segment(op.geometry, d, rng, scale)
        phi2 = phi1 if (same_t[i] and rng.random() < 0.5) else random_segment(op.geometry, d, rng, scale)
        x1 = rng.normal(scale=scale, size=d)
        x2 = rng.normal(scale=scale, size=d)
        y1 = op.apply(t1[i], phi1, x1)
        y2 = op.apply(t2[i], phi2, x2)
        li = lam[i]
        dphi = float(np.max(state_norm(phi1.states - phi2.states, kind)))
        nx2 = float(state_norm(x2, kind))
        nphi2 = phi2.sup_norm(kind)
        dk = float(state_norm(ctrl.k_fn.vector(t1[i], d) - ctrl.k_fn.vector(t2[i], d), kind))
        lhs = float(state_norm(x1 - x2, kind))
        if perturbed:
            w = ctrl.omega
            y1 = y1 + w * x1
            y2 = y2 + w * x2
            dh = float(ctrl.h_omega_distance(t1[i], t2[i], d, kind))
            L1 = float(ctrl.L1_omega(nx2))
            extra = li * w * lhs
        else:
            dh = float(state_norm(ctrl.h_fn.vector(t1[i], d) - ctrl.h_fn.vector(t2[i], d), kind))
            L1 = float(ctrl.L1_fn(nx2))
            extra = 0.0
        dg = float(state_norm(ctrl.g_vector(t1[i], d) - ctrl.g_vector(t2[i], d), kind))
        rhs = (float(state_norm(x1 - x2 - li * (y1 - y2), kind)) + li * dh * L1
               + li * dg * float(state_norm(y2, kind)) + li * dk * float(ctrl.L2_fn(nphi2))
               + li * ctrl.K0 * dphi + extra)
        residuals[i] = rhs - lhs
        records.append((li, t1[i], t2[i], x1, x2, dphi))

    def witness(i):
        li, a, b, x1, x2, dphi = records[i]
        return {"lambda": li, "t1": a, "t2": b, "x1": x1.tolist(), "x2": x2.tolist(),
                "history_distance": dphi}

    scaled = residuals / (1.0 + scale)
    return VerificationReport.from_residuals(
        "control_inequality" + ("_perturbed" if perturbed else ""), residuals, tol,
        witness_fn=witness,
        details={"tightness_q05": float(np.quantile(scaled, 0.05)),
                 "assumption_kind": ctrl.assumption_kind, "norm": kind})


def functional_control_audit(F, geometry, dim, samples=1000, rng=None, t_range=(0.0, 10.0),
                             scale=2.0, kind="euclidean", tol=1e-10):
    """``||F(t, phi1) - F(s, phi2)|| <= K0 ||phi1 - phi2||_E + ||k(t)-k(s)|| L2(||phi2||_E)``."""
    rng = np.random.default_rng(rng)
    residuals = np.empty(samples)
    for i in range(samples):
        t = rng.uniform(*t_range)
        s = t if rng.random() < 0.2 else rng.uniform(*t_range)
        phi1 = random_segment(geometry, dim, rng, scale)
        phi2 = phi1 if rng.random() < 0.1 else random_segment(geometry, dim, rng, scale)
        lhs = float(state_norm(F.evaluate(t, phi1, dim) - F.evaluate(s, phi2, dim), kind))
        dphi = float(np.max(state_norm(phi1.states - phi2.states, kind)))
        dk = float(state_norm(F.k_fn.vector(t, dim) - F.k_fn.vector(s, dim), kind))
        rhs = F.K0 * dphi + dk * float(F.L2_fn(phi2.sup_norm(kind)))
        residuals[i] = rhs - lhs
    return VerificationReport.from_residuals("functional_control", residuals, tol,
                                             details={"functional": F.to_dict()})


def special_case_F_audit(op_B, F, samples=1000, rng=None, lam_range=(1e-3, 1.0), tol=1e-10):
    """Audit ``F`` alone, then the composed ``A = B + F`` against its controls."""
    rng = np.random.default_rng(rng)
    rep_F = functional_control_audit(F, op_B.geometry, op_B.dim, samples, rng,
                                     kind=op_B.norm, tol=tol)
    composed = op_B.compose(F)
    rep_A = control_inequality_audit(composed, samples, lam_range, rng, tol=tol)
    return VerificationReport.combine("special_case_F", [rep_F, rep_A])


def resolvent_property_audit(op, samples=10_000, lam_range=(1e-3, 1.0), rng=None,
                             scale=2.0, tol=1e-10, t_range=(0.0, 10.0)):
    """Nonexpansiveness, the ``1/(1 - lam omega)`` bound, history sensitivity
    and scaling-path agreement of ``J^w_lam`` on random samples.

    Returns a dict of VerificationReport keyed by property name.
    """
    rng = np.random.default_rng(rng)
    kind = op.norm
    d = op.dim
    omega = op.omega
    hi = lam_range[1] if omega <= 0 else min(lam_range[1], 0.99 / omega)
    lam = np.exp(rng.uniform(math.log(lam_range[0]), math.log(hi), size=samples))
    plain = op.with_omega(0.0)
    nonexp = np.empty(samples)
    omega_bd = np.empty(samples)
    hist = np.empty(samples)
    paths = np.empty(samples)
    for i in range(samples):
        li = lam[i]
        t = rng.uniform(*t_range)
        phi1 = random_segment(op.geometry, d, rng, scale)
        phi2 = random_segment(op.geometry, d, rng, scale)
        z1 = rng.normal(scale=scale, size=d)
        z2 = rng.normal(scale=scale, size=d)
        dz = float(state_norm(z1 - z2, kind))
        j1, _ = resolvent(plain, li, t, phi1, z1)
        j2, _ = resolvent(plain, li, t, phi1, z2)
        nonexp[i] = dz - float(state_norm(j1 - j2, kind))
        s = 1.0 - li * omega
        w1 = resolvent_omega(op, li, t, phi1, z1, path="scaling")
        w2 = resolvent_omega(op, li, t, phi1, z2, path="scaling")
        omega_bd[i] = dz / s - float(state_norm(w1 - w2, kind))
        w3 = resolvent_omega(op, li, t, phi2, z1, path="scaling")
        dphi = float(np.max(state_norm(phi1.states - phi2.states, kind)))
        hist[i] = op.K0 * li / s * dphi - float(state_norm(w1 - w3, kind))
        w1d = resolvent_omega(op, li, t, phi1, z1, path="direct")
        paths[i] = float(state_norm(w1 - w1d, kind))
    return {
        "nonexpansive": VerificationReport.from_residuals("resolvent_nonexpansive", nonexp, tol),
        "omega_lipschitz": VerificationReport.from_residuals("resolvent_omega_lipschitz",
                                                             omega_bd, tol),
        "history_sensitivity": VerificationReport.from_residuals("resolvent_history_sensitivity",
                                                                 hist, tol),
        "path_agreement": VerificationReport.from_residuals("resolvent_path_agreement", paths,
                                                            tol, kind="equality"),
    }


def dissipativity_audit(op, samples=1000, rng=None, scale=2.0, tol=1e-10):
    """``<A x - A y, x - y> <= 0`` at a common ``(t, phi)``; residual is ``-<.,.>``."""
    rng = np.random.default_rng(rng)
    res = np.empty(samples)
    for i in range(samples):
        x = rng.normal(scale=scale, size=op.dim)
        y = rng.normal(scale=scale, size=op.dim)
        res[i] = -float(np.dot(op.core_apply(x) - op.core_apply(y), x - y))
    return VerificationReport.from_residuals("dissipativity", res, tol)


def history_lipschitz_probe(op, samples=1000, rng=None, scale=2.0):
    """Largest measured ``||A(t,phi1)x - A(t,phi2)x|| / ||phi1 - phi2||_E``."""
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(samples):
        t = rng.uniform(0.0, 10.0)
        phi1 = random_segment(op.geometry, op.dim, rng, scale)
        phi2 = random_segment(op.geometry, op.dim, rng, scale)
        x = rng.normal(scale=scale, size=op.dim)
        num = float(state_norm(op.apply(t, phi1, x) - op.apply(t, phi2, x), op.norm))
        den = float(np.max(state_norm(phi1.states - phi2.states, op.norm)))
        if den > 0:
            worst = max(worst, num / den)
    return worst
