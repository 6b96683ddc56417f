"""Time grids, history segments, trajectories and the sup norms on them.

All containers are immutable: the numpy buffers they hold are flagged
read-only on construction, so they can be shared between workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GridRangeError, StructuralError

NORM_KINDS = ("euclidean", "sup_coordinates")


def state_norm(v, kind="euclidean"):
    """Norm of state vectors along the last axis."""
    v = np.asarray(v, dtype=float)
    if kind == "euclidean":
        return np.sqrt(np.sum(v * v, axis=-1))
    if kind == "sup_coordinates":
        return np.max(np.abs(v), axis=-1)
    raise StructuralError(f"unknown norm kind {kind!r}")


@dataclass(frozen=True)
class NormKind:
    state_norm: str = "euclidean"
    time_aggregation: str = "sup"

    def __post_init__(self):
        if self.state_norm not in NORM_KINDS:
            raise StructuralError(f"unknown state norm {self.state_norm!r}")
        if self.time_aggregation != "sup":
            raise StructuralError("only sup aggregation over nodes is supported")

    def __call__(self, v):
        return state_norm(v, self.state_norm)


def _frozen(a, ndim=None):
    a = np.array(a, dtype=float)
    if ndim == 2 and a.ndim == 1:
        a = a[:, None]
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DelayGeometry:
    """Delay interval ``[-r, 0]`` or a truncated ``(-inf, 0]``.

    For the infinite kind the interval is cut at ``-truncation_radius`` and
    every memory kernel is assumed to decay at least like ``exp(tail_rate*s)``.
    """

    kind: str
    r: float | None = None
    truncation_radius: float | None = None
    tail_rate: float | None = None

    def __post_init__(self):
        if self.kind == "finite":
            if self.r is None or not self.r > 0:
                raise StructuralError("finite delay needs r > 0")
        elif self.kind == "infinite":
            if self.truncation_radius is None or not self.truncation_radius > 0:
                raise StructuralError("infinite delay needs truncation_radius > 0")
            if self.tail_rate is None or not self.tail_rate > 0:
                raise StructuralError("infinite delay needs tail_rate > 0")
        else:
            raise StructuralError(f"unknown delay kind {self.kind!r}")

    @classmethod
    def finite(cls, r):
        return cls("finite", r=float(r))

    @classmethod
    def infinite(cls, truncation_radius, tail_rate):
        return cls("infinite", truncation_radius=float(truncation_radius),
                   tail_rate=float(tail_rate))

    @property
    def length(self):
        return self.r if self.kind == "finite" else self.truncation_radius

    def tail_bound(self, sup_phi):
        """Bound on the truncated memory tail for a segment of sup norm ``sup_phi``."""
        if self.kind == "finite":
            return 0.0
        return math.exp(-self.tail_rate * self.truncation_radius) * sup_phi

    def to_dict(self):
        if self.kind == "finite":
            return {"kind": "finite", "r": self.r}
        return {"kind": "infinite", "truncation_radius": self.truncation_radius,
                "tail_rate": self.tail_rate}

    @classmethod
    def from_dict(cls, d):
        if d["kind"] == "finite":
            return cls.finite(d["r"])
        return cls.infinite(d["truncation_radius"], d["tail_rate"])


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_start, t_start + h, ..., t_end`` that contains 0."""

    t_start: float
    t_end: float
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise StructuralError("grid step must be positive")
        if self.t_start > 0:
            raise StructuralError("grid must start at or before 0")
        span = self.t_end - self.t_start
        n = round(span / self.h)
        if n < 1:
            raise StructuralError("grid needs at least two nodes")
        if abs(n * self.h - span) > 1e-12 * max(1.0, abs(span)):
            raise StructuralError(f"step {self.h} does not divide [{self.t_start}, {self.t_end}]")
        m = round(-self.t_start / self.h)
        if abs(m * self.h + self.t_start) > 1e-12 * max(1.0, abs(span)):
            raise StructuralError("0 must be a grid node")

    @classmethod
    def for_geometry(cls, geometry, horizon, h):
        return cls(-geometry.length, float(horizon), float(h))

    @property
    def n_nodes(self):
        return round((self.t_end - self.t_start) / self.h) + 1

    @property
    def zero_index(self):
        return round(-self.t_start / self.h)

    @cached_property
    def times(self):
        t = self.t_start + self.h * np.arange(self.n_nodes)
        t[self.zero_index] = 0.0
        t[-1] = self.t_end
        t.setflags(write=False)
        return t

    @property
    def forward_times(self):
        return self.times[self.zero_index:]

    def index_of(self, t):
        """Index of the node at time ``t``; raises if ``t`` is off-grid."""
        j = round((t - self.t_start) / self.h)
        if j < 0 or j >= self.n_nodes or abs(self.times[j] - t) > 1e-9 * self.h:
            raise GridRangeError(f"t={t} is not a node of the grid")
        return j

    def same_as(self, other):
        tol = 1e-12 * max(1.0, abs(self.t_end - self.t_start))
        return (abs(self.t_start - other.t_start) <= tol and abs(self.t_end - other.t_end) <= tol
                and abs(self.h - other.h) <= 1e-12 * self.h)

    def to_dict(self):
        return {"t_start": self.t_start, "t_end": self.t_end, "h": self.h}


@dataclass(frozen=True)
class HistorySegment:
    """Piecewise-linear function on the delay interval, sampled at ``times <= 0``."""

    geometry: DelayGeometry
    times: np.ndarray
    states: np.ndarray
    lipschitz_estimate: float | None = None

    def __post_init__(self):
        t = _frozen(self.times)
        x = _frozen(self.states, ndim=2)
        if t.ndim != 1 or t.size == 0:
            raise StructuralError("history segment needs at least one sample")
        if x.shape[0] != t.size:
            raise StructuralError("times and states have different lengths")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise StructuralError("segment times must be strictly increasing")
        if abs(t[-1]) > 1e-12:
            raise StructuralError("segment must end at s = 0")
        if not np.all(np.isfinite(x)):
            raise StructuralError("segment contains non-finite states")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)

    @classmethod
    def from_function(cls, geometry, f, h, dim=None):
        """Sample ``f(s)`` on a uniform grid of step ``h`` over the delay interval."""
        m = round(geometry.length / h)
        s = np.linspace(-geometry.length, 0.0, m + 1)
        vals = np.array([np.atleast_1d(np.asarray(f(si), dtype=float)) for si in s])
        if dim is not None and vals.shape[1] == 1 and dim > 1:
            vals = np.repeat(vals, dim, axis=1)
        seg = cls(geometry, s, vals)
        return cls(geometry, s, vals, lipschitz_estimate=seg.discrete_lipschitz())

    @classmethod
    def constant(cls, geometry, value, h=None):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        if h is None:
            return cls(geometry, [-geometry.length, 0.0], [value, value], lipschitz_estimate=0.0)
        return cls.from_function(geometry, lambda s: value, h)

    @property
    def dim(self):
        return self.states.shape[1]

    def __call__(self, s):
        """Interpolated value(s) at ``s <= 0``; constant extension below the first sample."""
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr > 1e-12):
            raise GridRangeError("history segments are defined for s <= 0 only")
        if self.times.size == 1:
            out = np.broadcast_to(self.states[0], s_arr.shape + (self.dim,)).copy()
        else:
            out = np.stack([np.interp(s_arr, self.times, self.states[:, k])
                            for k in range(self.dim)], axis=-1)
        return out

    def value_at_zero(self):
        return self.states[-1].copy()

    def sup_norm(self, kind="euclidean"):
        return float(np.max(state_norm(self.states, kind)))

    def discrete_lipschitz(self, kind="euclidean"):
        if self.times.size < 2:
            return 0.0
        slopes = state_norm(np.diff(self.states, axis=0), kind) / np.diff(self.times)
        return float(np.max(slopes))

    def resample(self, times):
        times = np.asarray(times, dtype=float)
        return HistorySegment(self.geometry, times, self(times),
                              lipschitz_estimate=self.lipschitz_estimate)


@dataclass(frozen=True)
class Trajectory:
    """Grid function on ``I u [0, T]`` together with its initial history.

    ``blend_lambda`` marks the window ``[-blend_lambda, 0]`` in which the
    history part is allowed to differ from ``initial_history``.
    """

    grid: TimeGrid
    states: np.ndarray
    initial_history: HistorySegment
    blend_lambda: float | None = None
    check_history: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        x = _frozen(self.states, ndim=2)
        if x.shape[0] != self.grid.n_nodes:
            raise StructuralError(f"expected {self.grid.n_nodes} states, got {x.shape[0]}")
        if x.shape[1] != self.initial_history.dim:
            raise StructuralError("state dimension differs from the initial history")
        if not np.all(np.isfinite(x)):
            raise StructuralError("trajectory contains non-finite states")
        object.__setattr__(self, "states", x)
        if self.check_history:
            self._check_history()

    def _check_history(self):
        z = self.grid.zero_index
        hist_t = self.grid.times[: z + 1]
        seg_t = self.initial_history.times
        pos = np.clip(np.searchsorted(seg_t, hist_t), 0, seg_t.size - 1)
        pos_left = np.clip(pos - 1, 0, seg_t.size - 1)
        near = np.where(np.abs(seg_t[pos] - hist_t) <= np.abs(seg_t[pos_left] - hist_t), pos, pos_left)
        shared = np.abs(seg_t[near] - hist_t) <= 1e-9 * self.grid.h
        if self.blend_lambda is not None:
            shared &= hist_t < -self.blend_lambda - 1e-12
        diff = np.abs(self.states[: z + 1][shared] - self.initial_history.states[near[shared]])
        if diff.size and np.max(diff) > 1e-12 * max(1.0, float(np.max(np.abs(self.initial_history.states)))):
            raise StructuralError("trajectory history does not reproduce the initial history")

    @classmethod
    def from_function(cls, grid, f, initial_history, blend_lambda=None):
        vals = np.array([np.atleast_1d(np.asarray(f(t), dtype=float)) for t in grid.times])
        return cls(grid, vals, initial_history, blend_lambda)

    @classmethod
    def constant_extension(cls, grid, phi):
        """``phi`` on the history nodes, ``phi(0)`` forward in time."""
        z = grid.zero_index
        states = np.empty((grid.n_nodes, phi.dim))
        states[: z + 1] = phi(grid.times[: z + 1])
        states[z + 1:] = phi.value_at_zero()
        return cls(grid, states, phi)

    @property
    def dim(self):
        return self.states.shape[1]

    @property
    def times(self):
        return self.grid.times

    @property
    def forward_states(self):
        return self.states[self.grid.zero_index:]

    def __call__(self, t):
        """Piecewise-linear interpolation; constant extension below the grid start."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr > self.grid.t_end + 1e-9 * self.grid.h):
            raise GridRangeError("time beyond the end of the trajectory")
        return np.stack([np.interp(t_arr, self.grid.times, self.states[:, k])
                         for k in range(self.dim)], axis=-1)

    def sup_norm(self, kind="euclidean"):
        return float(np.max(state_norm(self.states, kind)))

    @cached_property
    def discrete_lipschitz(self):
        slopes = state_norm(np.diff(self.states, axis=0), "euclidean") / self.grid.h
        return float(np.max(slopes)) if slopes.size else 0.0

    def discrete_lipschitz_norm(self, kind="euclidean"):
        slopes = state_norm(np.diff(self.states, axis=0), kind) / self.grid.h
        return float(np.max(slopes)) if slopes.size else 0.0

    def with_states(self, states, blend_lambda=None, check_history=True):
        return Trajectory(self.grid, states, self.initial_history,
                          self.blend_lambda if blend_lambda is None else blend_lambda,
                          check_history=check_history)


def history_slice(traj, t):
    """The segment ``s -> traj(t + s)`` on the delay interval."""
    grid = traj.grid
    if t < -1e-12 or t > grid.t_end + 1e-9 * grid.h:
        raise GridRangeError(f"t={t} outside [0, {grid.t_end}]")
    geom = traj.initial_history.geometry
    m = round(geom.length / grid.h)
    s = np.linspace(-geom.length, 0.0, m + 1)
    vals = traj(np.minimum(t + s, grid.t_end))
    return HistorySegment(geom, s, vals, lipschitz_estimate=traj.discrete_lipschitz)


def sup_norm_E(seg, kind="euclidean"):
    """Sup norm of a history segment over its sample nodes."""
    if seg.times.size == 0:
        raise StructuralError("empty segment")
    return seg.sup_norm(kind)


def sup_distance_Y(a, b, kind="euclidean"):
    """Sup distance over all nodes (history and forward) of two trajectories."""
    if not a.grid.same_as(b.grid):
        raise StructuralError("trajectories live on different grids")
    if a.dim != b.dim:
        raise StructuralError("trajectories have different dimensions")
    return float(np.max(state_norm(a.states - b.states, kind)))


def sliding_sup(values, window):
    """``out[j] = max(values[max(0, j - window) : j + 1])`` for a 1-d array."""
    from scipy.ndimage import maximum_filter1d

    values = np.asarray(values, dtype=float)
    if window <= 0 or values.size == 0:
        return values.copy()
    size = window + 1
    # trailing window ending at j
    return maximum_filter1d(values, size=size, mode="nearest", origin=(size - 1) // 2)
