"""JSON scenario files: parsing, serialization and CSV column layout.

Vehicle indices in files are 1-based (``"i": 1`` is the first vehicle);
array positions in error paths (``constraints[0]``) are 0-based, as in
JSON Pointer.  Inside the package everything is 0-based.

Layout::

    {
      "vehicles":    [{"kind": "unicycle" | "constant_speed" | "car",
                       "params": {"v": ..} | {"l": ..} | {},
                       "initial": [x, y, theta(, phi)]}, ...],
      "references":  {"name": {"kind": "sinusoid", "amplitude": 2, ...}, ...},
      "constraints": [{"type": "distance_band", "i": 1, "j": 2,
                       "params": {"d_minus": 1, "d_plus": 2}}, ...],
      "mode":        "graph" | {"tree": {"2": 1, "3": 1}},
      "sim":         {"duration": 20, "step": 0.001, ...},
      "outputs":     {"csv": "run.csv", "report": "run.json"}
    }

References may be given by name or inline as a dict.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Any, Optional

from . import constraints as cons
from .references import reference_from_dict, reference_to_dict
from .sim import POLICIES, Scenario
from .vehicles import CarLike, ConstantSpeed, Unicycle, control_dim, state_dim


class ScenarioError(ValueError):
    """Malformed scenario file; the message starts with the offending field path."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


@dataclass
class ScenarioDoc:
    scenario: Scenario
    csv: Optional[str] = None
    report: Optional[str] = None
    source: dict = field(default_factory=dict)


_SIM_KEYS = {
    "duration": float, "step": float, "integrator": str, "projection": bool, "eps_act": float,
    "margin": float, "bound": float, "policy": str, "projection_tol": float, "seed": int,
}

_CONSTRAINT_PARAMS = {
    "distance_eq": (cons.DistanceEq, ("d",)),
    "distance_band": (cons.DistanceBand, ("d_minus", "d_plus")),
    "heading_eq": (cons.HeadingEq, ("delta",)),
    "heading_band": (cons.HeadingBand, ("delta_minus", "delta_plus")),
    "visibility": (cons.Visibility, ("delta_theta",)),
}


def _num(x, path):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ScenarioError(path, f"expected a number, got {x!r}")
    return float(x)


def _obj(x, path):
    if not isinstance(x, dict):
        raise ScenarioError(path, "expected an object")
    return x


def _vehicle_index(x, n, path):
    if isinstance(x, bool) or not isinstance(x, int) or not 1 <= x <= n:
        raise ScenarioError(path, f"expected a vehicle number in 1..{n}, got {x!r}")
    return x - 1


def _vehicle(d, path):
    d = _obj(d, path)
    kind = d.get("kind")
    params = _obj(d.get("params", {}), path + ".params")
    try:
        if kind == "unicycle":
            k = Unicycle()
        elif kind == "constant_speed":
            k = ConstantSpeed(_num(params.get("v"), path + ".params.v"))
        elif kind == "car":
            k = CarLike(_num(params.get("l"), path + ".params.l"))
        else:
            raise ScenarioError(path + ".kind", f"unknown vehicle kind {kind!r}")
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(path + ".params", str(exc)) from None
    init = d.get("initial")
    if not isinstance(init, list) or len(init) != state_dim(k):
        raise ScenarioError(path + ".initial", f"expected {state_dim(k)} numbers")
    return k, [_num(x, f"{path}.initial[{m}]") for m, x in enumerate(init)]


def _reference(x, named, path):
    if isinstance(x, str):
        if x not in named:
            raise ScenarioError(path, f"unknown reference {x!r}")
        return named[x]
    try:
        return reference_from_dict(_obj(x, path))
    except (ValueError, TypeError, KeyError) as exc:
        raise ScenarioError(path, str(exc)) from None


def _constraint(d, n, named, path):
    d = _obj(d, path)
    typ = d.get("type")
    params = _obj(d.get("params", {}), path + ".params")
    i = _vehicle_index(d.get("i"), n, path + ".i")
    if typ in _CONSTRAINT_PARAMS:
        cls, names = _CONSTRAINT_PARAMS[typ]
        j = _vehicle_index(d.get("j"), n, path + ".j")
        vals = [_num(params.get(k), f"{path}.params.{k}") for k in names]
        return cls(i, j, *vals)
    if typ == "speed_track":
        refs = params.get("refs")
        if not isinstance(refs, list) or not refs:
            raise ScenarioError(path + ".params.refs", "expected a nonempty list")
        refs = tuple(_reference(r, named, f"{path}.params.refs[{m}]") for m, r in enumerate(refs))
        ch = params.get("channels")
        if ch is not None:
            if not isinstance(ch, list) or len(ch) != len(refs):
                raise ScenarioError(path + ".params.channels", "expected one channel per reference")
            ch = tuple(int(_num(c, f"{path}.params.channels[{m}]")) - 1 for m, c in enumerate(ch))
        return cons.SpeedTrack(i, refs, ch)
    if typ == "rate_eq":
        coord = params.get("coord")
        if isinstance(coord, bool) or not isinstance(coord, int) or coord < 1:
            raise ScenarioError(path + ".params.coord", "expected a 1-based state coordinate")
        return cons.RateEq(i, coord - 1, _reference(params.get("ref"), named, path + ".params.ref"))
    raise ScenarioError(path + ".type", f"unknown constraint type {typ!r}")


def from_dict(doc: dict) -> ScenarioDoc:
    doc = _obj(doc, "")
    vs = doc.get("vehicles")
    if not isinstance(vs, list) or not vs:
        raise ScenarioError("vehicles", "expected a nonempty list")
    kinds, initial = [], []
    for m, v in enumerate(vs):
        k, x = _vehicle(v, f"vehicles[{m}]")
        kinds.append(k)
        initial.append(x)
    n = len(kinds)

    named = {}
    for name, r in _obj(doc.get("references", {}), "references").items():
        named[name] = _reference(r, {}, f"references.{name}")

    cs = doc.get("constraints", [])
    if not isinstance(cs, list):
        raise ScenarioError("constraints", "expected a list")
    constraints = [_constraint(c, n, named, f"constraints[{m}]") for m, c in enumerate(cs)]

    sim = _obj(doc.get("sim", {}), "sim")
    kw: dict[str, Any] = {}
    for key, val in sim.items():
        if key == "cruise":
            continue
        if key not in _SIM_KEYS:
            raise ScenarioError(f"sim.{key}", "unknown setting")
        typ = _SIM_KEYS[key]
        if typ is float:
            kw[key] = _num(val, f"sim.{key}")
        elif typ is bool:
            if not isinstance(val, bool):
                raise ScenarioError(f"sim.{key}", "expected true or false")
            kw[key] = val
        elif typ is int:
            if isinstance(val, bool) or not isinstance(val, int):
                raise ScenarioError(f"sim.{key}", "expected an integer")
            kw[key] = val
        else:
            if not isinstance(val, str):
                raise ScenarioError(f"sim.{key}", "expected a string")
            kw[key] = val
    if kw.get("integrator", "rk4") not in ("rk4", "euler"):
        raise ScenarioError("sim.integrator", "expected 'rk4' or 'euler'")
    if kw.get("policy", "cruise") not in POLICIES:
        raise ScenarioError("sim.policy", f"expected one of {list(POLICIES)}")

    mode = doc.get("mode", "graph")
    tree = None
    if isinstance(mode, dict) and set(mode) == {"tree"}:
        pm = _obj(mode["tree"], "mode.tree")
        tree = {v: None for v in range(n)}
        for child, par in pm.items():
            try:
                c = int(child)
            except ValueError:
                raise ScenarioError(f"mode.tree.{child}", "keys must be vehicle numbers") from None
            c = _vehicle_index(c, n, f"mode.tree.{child}")
            tree[c] = None if par is None else _vehicle_index(par, n, f"mode.tree.{child}")
    elif mode != "graph":
        raise ScenarioError("mode", "expected 'graph' or {\"tree\": {child: parent}}")

    cruise = sim.get("cruise")
    if cruise is not None:
        if tree is None:
            if not isinstance(cruise, list):
                raise ScenarioError("sim.cruise", "expected a list of weights in graph mode")
            cruise = [_num(x, f"sim.cruise[{m}]") for m, x in enumerate(cruise)]
        else:
            cm = _obj(cruise, "sim.cruise")
            out = {}
            for key, ws in cm.items():
                v = _vehicle_index(int(key) if key.isdigit() else key, n, f"sim.cruise.{key}")
                if not isinstance(ws, list):
                    raise ScenarioError(f"sim.cruise.{key}", "expected a list of weights")
                out[v] = [_num(x, f"sim.cruise.{key}[{m}]") for m, x in enumerate(ws)]
            cruise = out

    outputs = _obj(doc.get("outputs", {}), "outputs")
    for key in ("csv", "report"):
        if key in outputs and not isinstance(outputs[key], str):
            raise ScenarioError(f"outputs.{key}", "expected a path string")
    scen = Scenario(kinds, initial, constraints, cruise=cruise, tree=tree, **kw)
    return ScenarioDoc(scen, outputs.get("csv"), outputs.get("report"), doc)


def loads(text: str) -> ScenarioDoc:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    return from_dict(doc)


def load(path: str) -> ScenarioDoc:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


# ------------------------------------------------------------ serialization


def _vehicle_dict(k, x) -> dict:
    params = {"v": k.v} if k.kind == "constant_speed" else {"l": k.l} if k.kind == "car" else {}
    return {"kind": k.kind, "params": params, "initial": [float(v) for v in x]}


def to_dict(s: Scenario, csv: Optional[str] = None, report: Optional[str] = None) -> dict:
    refs: dict[str, dict] = {}

    def ref_name(r):
        d = reference_to_dict(r)
        for name, other in refs.items():
            if other == d:
                return name
        name = f"r{len(refs) + 1}"
        refs[name] = d
        return name

    cs = []
    for c in s.constraints:
        if isinstance(c, cons.SpeedTrack):
            params = {"refs": [ref_name(r) for r in c.refs]}
            if c.channels is not None:
                params["channels"] = [ch + 1 for ch in c.channels]
            cs.append({"type": c.name, "i": c.i + 1, "params": params})
        elif isinstance(c, cons.RateEq):
            cs.append({"type": c.name, "i": c.i + 1,
                       "params": {"coord": c.coord + 1, "ref": ref_name(c.ref)}})
        else:
            _, names = _CONSTRAINT_PARAMS[c.name]
            cs.append({"type": c.name, "i": c.i + 1, "j": c.j + 1,
                       "params": {k: getattr(c, k) for k in names}})

    sim = {f.name: getattr(s, f.name) for f in fields(s) if f.name in _SIM_KEYS}
    if s.cruise is not None:
        sim["cruise"] = ({str(v + 1): list(w) for v, w in s.cruise.items()}
                         if isinstance(s.cruise, dict) else list(s.cruise))
    mode: Any = "graph"
    if s.tree is not None:
        mode = {"tree": {str(c + 1): (None if p is None else p + 1) for c, p in sorted(s.tree.items())}}
    doc = {
        "vehicles": [_vehicle_dict(k, x) for k, x in zip(s.kinds, s.initial)],
        "references": refs,
        "constraints": cs,
        "mode": mode,
        "sim": sim,
    }
    outputs = {k: v for k, v in (("csv", csv), ("report", report)) if v is not None}
    if outputs:
        doc["outputs"] = outputs
    return doc


def dumps(s: Scenario, **kw) -> str:
    return json.dumps(to_dict(s, **kw), indent=2) + "\n"


def canonical(doc: dict) -> bytes:
    """Whitespace- and key-order-independent encoding used for digests."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True,
                      allow_nan=False).encode("ascii")


# ------------------------------------------------------------- CSV columns


def _edge(c) -> str:
    if isinstance(c, cons.RateEq):
        return f"{c.i + 1}_c{c.coord + 1}"
    if isinstance(c, cons.SINGLE_VEHICLE_TYPES):
        return f"{c.i + 1}"
    return f"{c.i + 1}_{c.j + 1}"


def _unique(names: list[str]) -> list[str]:
    # repeated constraints on one edge get a counter: g_x, g_x#2, ...
    seen: dict[str, int] = {}
    out = []
    for nm in names:
        seen[nm] = seen.get(nm, 0) + 1
        out.append(nm if seen[nm] == 1 else f"{nm}#{seen[nm]}")
    return out


def residual_columns(s: Scenario) -> list[str]:
    return _unique([f"g_{c.name}_{_edge(c)}_{side}" for c in s.constraints for side in cons.sides(c)])


def active_columns(s: Scenario) -> list[str]:
    return _unique([f"a_{c.name}_{_edge(c)}_{side}" for c in s.constraints
                    if not cons.is_equality(c) for side in cons.sides(c)])


def weight_count(s: Scenario) -> int:
    """Upper bound on the number of free weights: one per control input."""
    return sum(control_dim(k) for k in s.kinds)


def csv_header(s: Scenario) -> list[str]:
    cols = ["t"]
    for v, k in enumerate(s.kinds, start=1):
        cols += [f"x_{v}", f"y_{v}", f"theta_{v}"] + ([f"phi_{v}"] if k.kind == "car" else [])
    for v, k in enumerate(s.kinds, start=1):
        cols += [f"u_{v}_{m}" for m in range(1, control_dim(k) + 1)]
    cols += residual_columns(s) + active_columns(s)
    cols += [f"w_{m}" for m in range(1, weight_count(s) + 1)]
    return cols
