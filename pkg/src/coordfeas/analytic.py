"""Closed-form motion families for two-vehicle groups keeping a fixed distance.

These are written out by hand, independently of the numerical solver, and
serve as oracles for it.  Vectors are returned unnormalized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import constraints as cons
from .feasibility import equality_system, motion_family
from .matlite import rank_of
from .vehicles import CarLike, ConstantSpeed, Unicycle

SINGULAR_TOL = 1e-9


class SingularDirection(ValueError):
    """Heading of the unicycle is perpendicular to the line between the vehicles."""


@dataclass(frozen=True)
class TwoUnicycles:
    name = "two_unicycles"

    def kinds(self):
        return [Unicycle(), Unicycle()]


@dataclass(frozen=True)
class UnicycleConstantSpeed:
    """Vehicle 1 moves at constant speed ``v1``; vehicle 2 is a unicycle."""

    v1: float = 1.0
    name = "unicycle_constant_speed"

    def kinds(self):
        return [ConstantSpeed(self.v1), Unicycle()]


@dataclass(frozen=True)
class UnicycleCar:
    """Vehicle 1 is a unicycle; vehicle 2 is a car with wheelbase ``l2``."""

    l2: float = 1.0
    name = "unicycle_car"

    def kinds(self):
        return [Unicycle(), CarLike(self.l2)]


AnalyticCase = Union[TwoUnicycles, UnicycleConstantSpeed, UnicycleCar]


def basis_at(case: AnalyticCase, p) -> tuple[np.ndarray, list[np.ndarray]]:
    """``(k_bar, [K_1, ..., K_kappa])`` evaluated at composite state ``p``."""
    p = np.asarray(p, dtype=float)
    x1, y1, th1, x2, y2, th2 = p[0], p[1], p[2], p[3], p[4], p[5]
    dx, dy = x1 - x2, y1 - y2
    c1, s1, c2, s2 = math.cos(th1), math.sin(th1), math.cos(th2), math.sin(th2)
    ab1 = c1 * dx + s1 * dy  # <a12, b1>
    ab2 = c2 * dx + s2 * dy  # <a12, b2>

    if isinstance(case, TwoUnicycles):
        if p.shape != (6,):
            raise ValueError("two-unicycle state has 6 entries")
        k1 = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
        k2 = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
        k3 = np.array([c1 * ab2, s1 * ab2, 0.0, c2 * ab1, s2 * ab1, 0.0])
        return np.zeros(6), [k1, k2, k3]

    if isinstance(case, UnicycleConstantSpeed):
        if p.shape != (6,):
            raise ValueError("unicycle/constant-speed state has 6 entries")
        if abs(ab2) <= SINGULAR_TOL:
            raise SingularDirection("<a12, b2> vanishes; the particular motion is undefined")
        v = case.v1
        ratio = (v * c1 * dx + v * s1 * dy) / ab2
        k_bar = np.array([v * c1, v * s1, 0.0, c2 * ratio, s2 * ratio, 0.0])
        k1 = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
        k2 = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
        return k_bar, [k1, k2]

    if isinstance(case, UnicycleCar):
        if p.shape != (7,):
            raise ValueError("unicycle/car state has 7 entries")
        phi2 = p[6]
        k1 = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0])
        k2 = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
        k3 = np.array([c1 * ab2, s1 * ab2, 0.0, c2 * ab1, s2 * ab1,
                       math.tan(phi2) / case.l2 * ab1, 0.0])
        return np.zeros(7), [k1, k2, k3]

    raise TypeError(f"unknown analytic case {case!r}")


@dataclass
class VerifyReport:
    case: str
    kappa_engine: int
    kappa_analytic: int
    span_rank: int
    k_bar_residual: float
    basis_residual: float
    k_bar_offset_rank: int
    span_match: bool
    residual_ok: bool

    @property
    def ok(self) -> bool:
        return self.span_match and self.residual_ok


def _unit_columns(vs):
    m = np.column_stack(vs)
    norms = np.linalg.norm(m, axis=0)
    norms[norms == 0] = 1.0
    return m / norms


def verify_against_engine(case: AnalyticCase, p, tol: float = 1e-10, rank_tol: float = 1e-8,
                          basis_fn=None) -> VerifyReport:
    """Compare the closed-form family at ``p`` with the numerical one.

    The distance constraint is taken at its current value, so ``p`` is on
    the constraint manifold by construction.
    """
    basis_fn = basis_fn or basis_at
    p = np.asarray(p, dtype=float)
    kinds = case.kinds()
    d = math.hypot(p[0] - p[3], p[1] - p[4])
    omega, rhs = equality_system(kinds, [cons.DistanceEq(0, 1, d)], p, 0.0)
    fam = motion_family(omega, rhs)
    k_bar, vecs = basis_fn(case, p)

    scale = 1.0 + float(np.max(np.abs(omega)))
    kb_res = float(np.max(np.abs(omega @ k_bar - rhs))) / scale
    bs_res = max(float(np.max(np.abs(omega @ v))) / (scale * max(1.0, float(np.max(np.abs(v)))))
                 for v in vecs)

    analytic = _unit_columns(vecs)
    kappa_a = rank_of(analytic, rank_tol)
    joint = np.column_stack([fam.basis, analytic])
    span_rank = rank_of(joint, rank_tol)
    # particular solutions may differ only by a null-space element
    off = k_bar - fam.k_bar
    off_rank = rank_of(np.column_stack([fam.basis, off]), rank_tol) if np.linalg.norm(off) > tol else fam.kappa

    span = kappa_a == fam.kappa == span_rank == off_rank == len(vecs)
    return VerifyReport(case.name, fam.kappa, kappa_a, span_rank, kb_res, bs_res, off_rank,
                        span, kb_res <= tol and bs_res <= tol)


def random_state(case: AnalyticCase, rng: np.random.Generator) -> np.ndarray:
    """Random non-degenerate state for ``case``."""
    while True:
        x1, y1 = rng.uniform(-3, 3, size=2)
        r = rng.uniform(0.5, 3.0)
        ang = rng.uniform(-math.pi, math.pi)
        x2, y2 = x1 - r * math.cos(ang), y1 - r * math.sin(ang)
        th1, th2 = rng.uniform(-math.pi, math.pi, size=2)
        p = [x1, y1, th1, x2, y2, th2]
        if isinstance(case, UnicycleCar):
            p.append(rng.uniform(-1.2, 1.2))
        p = np.array(p)
        ab1 = math.cos(th1) * (x1 - x2) + math.sin(th1) * (y1 - y2)
        ab2 = math.cos(th2) * (x1 - x2) + math.sin(th2) * (y1 - y2)
        # keep away from states where K_3 or k_bar degenerate
        if abs(ab1) > 0.05 * r and abs(ab2) > 0.05 * r:
            return p
