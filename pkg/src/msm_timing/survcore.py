"""Counting-process primitives: step functions, Nelson-Aalen, marginal laws."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .data import SubjectRecord


class StepFunction:
    """Right-continuous step function ``v(t) = sum(mass[i] for jump_times[i] <= t)``.

    Parameters
    ----------
    jump_times : array_like
        Strictly increasing jump locations.
    jump_masses : array_like
        Jump sizes, same length as ``jump_times``.
    """

    __slots__ = ("jump_times", "jump_masses", "_values")

    def __init__(self, jump_times=(), jump_masses=()):
        t = np.asarray(jump_times, dtype=float).reshape(-1)
        m = np.asarray(jump_masses, dtype=float).reshape(-1)
        if len(t) != len(m):
            raise ValueError("jump_times and jump_masses differ in length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("jump times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(m))):
            raise ValueError("step function entries must be finite")
        t.flags.writeable = False
        m.flags.writeable = False
        self.jump_times = t
        self.jump_masses = m
        v = np.cumsum(m)
        v.flags.writeable = False
        self._values = v

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def from_values(cls, times, values):
        """Build from the function values just after each jump; the values are kept exactly."""
        values = np.array(values, dtype=float).reshape(-1)
        out = cls(times, np.diff(values, prepend=0.0))
        values.flags.writeable = False
        out._values = values
        return out

    @property
    def values(self) -> np.ndarray:
        """Function value at each jump time."""
        return self._values

    def __len__(self):
        return len(self.jump_times)

    def __call__(self, t):
        idx = np.searchsorted(self.jump_times, t, side="right")
        return self._lookup(idx)

    def left_limit(self, t):
        idx = np.searchsorted(self.jump_times, t, side="left")
        return self._lookup(idx)

    def _lookup(self, idx):
        padded = np.concatenate(([0.0], self._values))
        out = padded[idx]
        return float(out) if np.ndim(out) == 0 else out

    def mass_at(self, t):
        idx = np.searchsorted(self.jump_times, t, side="left")
        idx_c = np.minimum(idx, max(len(self.jump_times) - 1, 0))
        if len(self.jump_times) == 0:
            hit = np.zeros(np.shape(t), dtype=bool)
            out = np.zeros(np.shape(t))
        else:
            hit = (idx < len(self.jump_times)) & (self.jump_times[idx_c] == t)
            out = np.where(hit, self.jump_masses[idx_c], 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def is_jump(self, t) -> bool:
        i = int(np.searchsorted(self.jump_times, t, side="left"))
        return i < len(self.jump_times) and self.jump_times[i] == t

    def __eq__(self, other):
        if not isinstance(other, StepFunction):
            return NotImplemented
        return np.array_equal(self.jump_times, other.jump_times) and np.array_equal(
            self.jump_masses, other.jump_masses
        )

    def __repr__(self):
        return f"StepFunction(jumps={len(self)})"

    # serialisation: two columns, time and cumulative value
    def to_table(self, path, header=("time", "value")):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t, v in zip(self.jump_times, self._values):
                w.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def from_table(cls, path):
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        times = [float(r[0]) for r in rows]
        values = [float(r[1]) for r in rows]
        return cls.from_values(times, values)

    def to_dict(self) -> dict:
        return {"jump_times": self.jump_times.tolist(), "jump_masses": self.jump_masses.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["jump_times"], d["jump_masses"])


def nelson_aalen(times, events) -> StepFunction:
    """Nelson-Aalen cumulative hazard with a pooled risk set.

    The jump at each distinct event time ``u`` is ``d(u) / n(u)`` where
    ``n(u)`` counts subjects with ``time >= u``.
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    events = np.asarray(events, dtype=bool).reshape(-1)
    if len(times) == 0:
        raise ValueError("nelson_aalen needs at least one observation")
    if len(times) != len(events):
        raise ValueError("times and events differ in length")
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    u, d = np.unique(times[events], return_counts=True)
    if len(u) == 0:
        return StepFunction.zero()
    sorted_times = np.sort(times)
    at_risk = len(times) - np.searchsorted(sorted_times, u, side="left")
    return StepFunction(u, d / at_risk)


@dataclass(frozen=True, eq=False)
class MarginalLaw:
    """Distribution implied by a cumulative hazard step function.

    ``cdf(t) = 1 - exp(-H(t))``; the density mass at a jump ``u`` is
    ``dH(u) * S(u-)``, using the survival just before the jump.
    """

    cumhaz: StepFunction

    def __post_init__(self):
        if np.any(self.cumhaz.jump_masses < 0):
            raise ValueError("cumulative hazard has a negative jump")

    def survival(self, t):
        return np.exp(-np.asarray(self.cumhaz(t)))

    def survival_left(self, t):
        return np.exp(-np.asarray(self.cumhaz.left_limit(t)))

    def cdf(self, t):
        out = -np.expm1(-np.asarray(self.cumhaz(t), dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    @cached_property
    def density_masses(self) -> np.ndarray:
        h = self.cumhaz
        before = np.concatenate(([0.0], h.values[:-1]))
        return h.jump_masses * np.exp(-before)

    def density_at(self, u):
        """Density mass at ``u``; zero away from the jump times."""
        h = self.cumhaz
        idx = np.searchsorted(h.jump_times, u, side="left")
        if len(h.jump_times) == 0:
            return 0.0 if np.ndim(u) == 0 else np.zeros(np.shape(u))
        idx_c = np.minimum(idx, len(h.jump_times) - 1)
        hit = (idx < len(h.jump_times)) & (h.jump_times[idx_c] == u)
        out = np.where(hit, self.density_masses[idx_c], 0.0)
        return float(out) if np.ndim(out) == 0 else out


def to_marginal_law(cumhaz: StepFunction) -> MarginalLaw:
    return MarginalLaw(cumhaz)


def risk_indicator(subject: SubjectRecord, t: float) -> bool:
    """At risk for death at ``t``; closed at the subject's own exit time."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return t <= subject.t_star
