"""Closed vocabulary of time functions used as speed references.

Each reference is a frozen dataclass that is callable on ``t`` and can be
converted to and from a plain ``dict`` for scenario files.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Sinusoid:
    """``amplitude * sin(frequency * t + phase)``"""

    amplitude: float
    frequency: float = 1.0
    phase: float = 0.0

    def __call__(self, t: float) -> float:
        return self.amplitude * math.sin(self.frequency * t + self.phase)


@dataclass(frozen=True)
class Cosine:
    """``amplitude * cos(frequency * t + phase)``"""

    amplitude: float
    frequency: float = 1.0
    phase: float = 0.0

    def __call__(self, t: float) -> float:
        return self.amplitude * math.cos(self.frequency * t + self.phase)


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t: float) -> float:
        return self.value


@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear interpolation through ``(times[k], values[k])``, held flat outside."""

    times: tuple[float, ...]
    values: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("piecewise-linear table needs matching, nonempty times and values")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("piecewise-linear times must be strictly increasing")

    def __call__(self, t: float) -> float:
        ts, vs = self.times, self.values
        if t <= ts[0]:
            return vs[0]
        if t >= ts[-1]:
            return vs[-1]
        k = bisect.bisect_right(ts, t)
        t0, t1 = ts[k - 1], ts[k]
        return vs[k - 1] + (vs[k] - vs[k - 1]) * (t - t0) / (t1 - t0)


_KINDS = {
    "sinusoid": Sinusoid,
    "cosine": Cosine,
    "constant": Constant,
    "piecewise_linear": PiecewiseLinear,
}


def reference_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"unknown reference kind {kind!r}; expected one of {sorted(_KINDS)}")
    if kind == "piecewise_linear":
        return PiecewiseLinear(tuple(float(x) for x in d["times"]), tuple(float(x) for x in d["values"]))
    return _KINDS[kind](**{k: float(v) for k, v in d.items()})


def reference_to_dict(ref) -> dict:
    for name, cls in _KINDS.items():
        if type(ref) is cls:
            if cls is PiecewiseLinear:
                return {"kind": name, "times": list(ref.times), "values": list(ref.values)}
            return {"kind": name, **{k: getattr(ref, k) for k in cls.__dataclass_fields__}}
    raise TypeError(f"reference {ref!r} is not serializable")
