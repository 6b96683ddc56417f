"""Named built-in time functions and monotone control maps.

Forcings and control functions are declared in configuration files by name
and parameters only, so no user code is ever loaded at run time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

_TIME_KINDS = ("zero", "constant", "sin", "cos", "exp_decay", "sum")


@dataclass(frozen=True)
class TimeFunction:
    """Scalar built-in ``t -> value`` broadcast to every state coordinate.

    Kinds and parameters:

    * ``zero``
    * ``constant``: ``value``
    * ``sin`` / ``cos``: ``amplitude``, ``frequency``, ``phase``
    * ``exp_decay``: ``amplitude * exp(-rate * t)``
    * ``sum``: ``terms``, a tuple of TimeFunction
    """

    kind: str = "zero"
    params: dict = field(default_factory=dict)
    terms: tuple = ()

    def __post_init__(self):
        if self.kind not in _TIME_KINDS:
            raise ConfigError(f"unknown time function {self.kind!r}")
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "terms", tuple(self.terms))
        allowed = {
            "zero": set(),
            "constant": {"value"},
            "sin": {"amplitude", "frequency", "phase"},
            "cos": {"amplitude", "frequency", "phase"},
            "exp_decay": {"amplitude", "rate"},
            "sum": set(),
        }[self.kind]
        unknown = set(self.params) - allowed
        if unknown:
            raise ConfigError(f"unknown parameters {sorted(unknown)} for {self.kind!r}")
        if self.kind == "exp_decay" and self.params.get("rate", 1.0) < 0:
            raise ConfigError("exp_decay needs a nonnegative rate")

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items())), self.terms))

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def constant(cls, value):
        return cls("constant", {"value": float(value)})

    @classmethod
    def sin(cls, amplitude=1.0, frequency=1.0, phase=0.0):
        return cls("sin", {"amplitude": float(amplitude), "frequency": float(frequency),
                           "phase": float(phase)})

    @classmethod
    def cos(cls, amplitude=1.0, frequency=1.0, phase=0.0):
        return cls("cos", {"amplitude": float(amplitude), "frequency": float(frequency),
                           "phase": float(phase)})

    @classmethod
    def exp_decay(cls, amplitude=1.0, rate=1.0):
        return cls("exp_decay", {"amplitude": float(amplitude), "rate": float(rate)})

    @classmethod
    def sum_of(cls, *terms):
        return cls("sum", terms=terms)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "constant":
            return np.full_like(t, p.get("value", 0.0))
        if self.kind in ("sin", "cos"):
            fn = np.sin if self.kind == "sin" else np.cos
            return p.get("amplitude", 1.0) * fn(p.get("frequency", 1.0) * t + p.get("phase", 0.0))
        if self.kind == "exp_decay":
            return p.get("amplitude", 1.0) * np.exp(-p.get("rate", 1.0) * t)
        out = np.zeros_like(t)
        for term in self.terms:
            out = out + term(t)
        return out

    def vector(self, t, dim):
        """Values broadcast to shape ``t.shape + (dim,)``."""
        v = self(t)
        return np.repeat(v[..., None], dim, axis=-1)

    @property
    def is_zero(self):
        if self.kind == "zero":
            return True
        if self.kind == "constant":
            return self.params.get("value", 0.0) == 0.0
        if self.kind in ("sin", "cos", "exp_decay"):
            return self.params.get("amplitude", 1.0) == 0.0
        return all(term.is_zero for term in self.terms)

    @property
    def lipschitz(self):
        """Lipschitz constant on ``t >= 0``."""
        p = self.params
        if self.kind in ("zero", "constant"):
            return 0.0
        if self.kind in ("sin", "cos"):
            return abs(p.get("amplitude", 1.0) * p.get("frequency", 1.0))
        if self.kind == "exp_decay":
            return abs(p.get("amplitude", 1.0)) * p.get("rate", 1.0)
        return sum(term.lipschitz for term in self.terms)

    @property
    def bound(self):
        """Sup of ``|value|`` on ``t >= 0``."""
        p = self.params
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return abs(p.get("value", 0.0))
        if self.kind in ("sin", "cos", "exp_decay"):
            return abs(p.get("amplitude", 1.0))
        return sum(term.bound for term in self.terms)

    def to_dict(self):
        d = {"kind": self.kind, **self.params}
        if self.kind == "sum":
            d["terms"] = [term.to_dict() for term in self.terms]
        return d

    @classmethod
    def from_dict(cls, d):
        if d is None:
            return cls.zero()
        if isinstance(d, (int, float)):
            return cls.constant(d)
        d = dict(d)
        kind = d.pop("kind", None)
        if kind is None:
            raise ConfigError("time function needs a 'kind'")
        if kind == "sum":
            terms = d.pop("terms", [])
            if d:
                raise ConfigError(f"unknown parameters {sorted(d)} for 'sum'")
            return cls("sum", terms=tuple(cls.from_dict(t) for t in terms))
        return cls(kind, {k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class MonotoneMap:
    """Nondecreasing map ``R+ -> R+``: ``offset + slope * s**power``."""

    offset: float = 0.0
    slope: float = 0.0
    power: float = 1.0

    def __post_init__(self):
        if self.offset < 0 or self.slope < 0 or self.power < 0:
            raise ConfigError("monotone maps need nonnegative offset, slope and power")

    @classmethod
    def constant(cls, value):
        return cls(offset=float(value))

    def __call__(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        return self.offset + self.slope * s ** self.power

    def plus_identity(self):
        """``s -> self(s) + s``, exact only when ``power == 1``."""
        if self.slope == 0.0 or self.power == 1.0:
            return MonotoneMap(self.offset, self.slope + 1.0, 1.0)
        return _SumMap(self, MonotoneMap(0.0, 1.0, 1.0))

    def to_dict(self):
        return {"offset": self.offset, "slope": self.slope, "power": self.power}

    @classmethod
    def from_dict(cls, d):
        if d is None:
            return cls()
        if isinstance(d, (int, float)):
            return cls.constant(d)
        unknown = set(d) - {"offset", "slope", "power"}
        if unknown:
            raise ConfigError(f"unknown monotone-map keys {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class _SumMap:
    first: MonotoneMap
    second: MonotoneMap

    def __call__(self, s):
        return self.first(s) + self.second(s)

    def to_dict(self):
        return {"sum": [self.first.to_dict(), self.second.to_dict()]}
