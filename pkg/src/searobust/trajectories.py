"""Reference signals with analytic derivatives up to order four."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

ORDER = 4


# smoothstep polynomials on [0, 1]: quintic is C2, septic is C3 so its
# fourth derivative stays bounded
PROFILES = {
    "quintic": Polynomial([0, 0, 0, 10, -15, 6]),
    "septic": Polynomial([0, 0, 0, 0, 35, -84, 70, -20]),
}
_PROFILE_DERIVS = {
    name: [tuple((poly.deriv(k) if k else poly).coef[::-1]) for k in range(ORDER + 1)]
    for name, poly in PROFILES.items()
}


def _horner(coeffs, x):
    acc = 0.0
    for c in coeffs:
        acc = acc * x + c
    return acc


def _smoothstep_array(tau, rise, profile):
    out = np.zeros((tau.size, ORDER + 1))
    inside = (tau > 0.0) & (tau < 1.0)
    ti = tau[inside]
    for k, poly in enumerate(_PROFILE_DERIVS[profile]):
        out[inside, k] = np.polyval(poly, ti) / rise**k
    out[tau >= 1.0, 0] = 1.0
    return out


def smoothstep(tau: float, rise: float, profile: str = "septic") -> np.ndarray:
    """Ramp value and its time derivatives for normalised time ``tau``."""
    out = np.zeros(ORDER + 1)
    if tau <= 0.0:
        return out
    if tau >= 1.0:
        out[0] = 1.0
        return out
    for k, poly in enumerate(_PROFILE_DERIVS[profile]):
        out[k] = _horner(poly, tau) / rise**k
    return out


@dataclass(frozen=True)
class Constant:
    value: float = 0.0

    def derivatives(self, t: float) -> np.ndarray:
        out = np.zeros(ORDER + 1)
        out[0] = self.value
        return out

    def sample(self, ts) -> np.ndarray:
        out = np.zeros((np.size(ts), ORDER + 1))
        out[:, 0] = self.value
        return out

    def event_times(self) -> list[float]:
        return []

    def to_dict(self) -> dict:
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class SmoothedSteps:
    """Piecewise-constant levels joined by smooth ramps of length ``rise_time``.

    ``steps`` is a sequence of ``(start_time, new_level)`` pairs.
    """

    initial: float = 0.0
    steps: tuple[tuple[float, float], ...] = ()
    rise_time: float = 0.2
    profile: str = "septic"

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown ramp profile {self.profile!r}")
        steps = tuple(sorted((float(t), float(v)) for t, v in self.steps))
        object.__setattr__(self, "steps", steps)
        if self.rise_time <= 0:
            raise ValueError("rise_time must be > 0")

    def derivatives(self, t: float) -> np.ndarray:
        out = np.zeros(ORDER + 1)
        out[0] = self.initial
        level = self.initial
        for start, value in self.steps:
            if t < start:
                break
            out += (value - level) * smoothstep((t - start) / self.rise_time, self.rise_time, self.profile)
            level = value
        return out

    def sample(self, ts) -> np.ndarray:
        """``derivatives`` evaluated at every time in ``ts``, one row each."""
        ts = np.asarray(ts, dtype=float)
        out = np.zeros((ts.size, ORDER + 1))
        out[:, 0] = self.initial
        level = self.initial
        for start, value in self.steps:
            tau = (ts - start) / self.rise_time
            out += (value - level) * _smoothstep_array(tau, self.rise_time, self.profile)
            level = value
        return out

    def event_times(self) -> list[float]:
        return [t for t, _ in self.steps]

    def to_dict(self) -> dict:
        return {
            "kind": "steps",
            "initial": self.initial,
            "steps": [list(s) for s in self.steps],
            "rise_time": self.rise_time,
            "profile": self.profile,
        }


@dataclass(frozen=True)
class Sinusoid:
    offset: float = 0.0
    amplitude: float = 0.0
    frequency: float = 0.5
    phase: float = 0.0

    def derivatives(self, t: float) -> np.ndarray:
        w = 2.0 * math.pi * self.frequency
        arg = w * t + self.phase
        s, c = math.sin(arg), math.cos(arg)
        A = self.amplitude
        return np.array(
            [self.offset + A * s, A * w * c, -A * w**2 * s, -A * w**3 * c, A * w**4 * s]
        )

    def sample(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        w = 2.0 * math.pi * self.frequency
        arg = w * ts + self.phase
        s, c = np.sin(arg), np.cos(arg)
        A = self.amplitude
        return np.column_stack(
            [self.offset + A * s, A * w * c, -A * w**2 * s, -A * w**3 * c, A * w**4 * s]
        )

    def event_times(self) -> list[float]:
        return []

    def to_dict(self) -> dict:
        return {
            "kind": "sine",
            "offset": self.offset,
            "amplitude": self.amplitude,
            "frequency": self.frequency,
            "phase": self.phase,
        }


def trajectory_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", "constant")
    if kind == "constant":
        return Constant(**d)
    if kind == "steps":
        if "steps" in d:
            d["steps"] = tuple(tuple(s) for s in d["steps"])
        return SmoothedSteps(**d)
    if kind == "sine":
        return Sinusoid(**d)
    raise ValueError(f"unknown trajectory kind {kind!r}")
