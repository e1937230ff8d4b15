"""Variable exponents: conjugation, harmonic means, log-Hoelder estimates,
and membership checks for the exponent classes used by the weight machinery.

All log-Hoelder constants reported here are sampled lower bounds on a
truncated domain, never certified suprema; refining the sampling plan can
only increase them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import DomainError, StructuralError
from .field import ScalarField, constant_field, field_from_callable, fields_identical, reciprocal
from .geometry import Box, Cube, QuadratureGrid, integrate, region_volume

EPS_ID = 1e-12
EPS_CLASS = 1e-9


def _inv(v: float) -> float:
    """Reciprocal with the 1/inf = 0 convention."""
    return 0.0 if math.isinf(v) else 1.0 / v


# --------------------------------------------------------------------------
# Sampling plans
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplingPlan:
    """Nested dyadic lattices over a box.

    Level L uses the corner lattice with 2^L + 1 points per axis; every
    lattice of a lower level is a subset, so sampled extrema and pair maxima
    are monotone under refinement.  The tail value of an exponent is always
    estimated on the fixed shell_level lattice so that refining the plan
    cannot move it.
    """

    level: int = 6
    shell_level: int = 3
    shell_fraction: float = 0.875

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("plan level must be >= 1")

    def points(self, box: Box) -> np.ndarray:
        return self._lattice(box, self.level)

    @staticmethod
    def _lattice(box: Box, level: int) -> np.ndarray:
        lo, _ = box.bounds()
        n = (1 << level) + 1
        axes = [lo[i] + np.arange(n) * (box.side / (n - 1)) for i in range(box.d)]
        if box.d == 1:
            return axes[0][:, None]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def pair_indices(self, box: Box) -> tuple[np.ndarray, np.ndarray]:
        """Index pairs into points(box): each lattice spacing along each axis
        and along the main diagonal."""
        n = (1 << self.level) + 1
        d = box.d
        shape = (n,) * d
        ids = np.arange(n ** d).reshape(shape)
        offsets = []
        for j in range(self.level + 1):
            step = 1 << j
            if step >= n:
                break
            for axis in range(d):
                off = [0] * d
                off[axis] = step
                offsets.append(tuple(off))
            if d > 1:
                offsets.append((step,) * d)
        left, right = [], []
        for off in offsets:
            src = ids[tuple(slice(0, n - o) for o in off)]
            dst = ids[tuple(slice(o, n) for o in off)]
            left.append(src.reshape(-1))
            right.append(dst.reshape(-1))
        return np.concatenate(left), np.concatenate(right)

    def shell_points(self, box: Box) -> np.ndarray:
        pts = self._lattice(box, self.shell_level)
        center = np.asarray(box.center)
        dist = np.max(np.abs(pts - center), axis=1)
        shell = pts[dist >= self.shell_fraction * box.half_width]
        return shell if shell.size else pts


DEFAULT_PLAN = SamplingPlan()


# --------------------------------------------------------------------------
# Variable exponents
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VariableExponent:
    """A scalar exponent field p(.) with cached bounds and LH metadata.

    p_minus/p_plus are the sampled (or analytically supplied and
    sample-verified) essential bounds over the domain; construction rejects
    p_minus < 1 and non-finite p_plus.
    """

    field: ScalarField
    p_minus: float
    p_plus: float
    lh0_constant: float | None = None
    lh_inf_constant: float | None = None
    p_infinity: float | None = None

    def __post_init__(self):
        if self.p_minus < 1.0 - 1e-12:
            raise StructuralError(f"exponent takes values below 1 (p_minus={self.p_minus})")
        if not math.isfinite(self.p_plus):
            raise StructuralError("p_plus must be finite for all in-scope operations")
        if self.p_minus > self.p_plus:
            raise StructuralError("p_minus exceeds p_plus")

    @property
    def domain(self) -> Box:
        return self.field.domain

    @property
    def is_constant(self) -> bool:
        return self.field.is_constant

    def values(self, points) -> np.ndarray:
        return self.field.values(points)

    def __call__(self, *coords: float) -> float:
        return self.field(*coords)

    @classmethod
    def constant(cls, value: float, box: Box) -> "VariableExponent":
        v = float(value)
        return cls(constant_field(v, box), v, v, 0.0, 0.0, v)

    @classmethod
    def from_field(cls, field: ScalarField, plan: SamplingPlan = DEFAULT_PLAN,
                   bounds: tuple[float, float] | None = None,
                   p_infinity: float | None = None,
                   estimate_lh: bool = True) -> "VariableExponent":
        if field.is_constant:
            p = cls.constant(field.constant_value, field.domain)
            return p if p_infinity is None else replace(p, p_infinity=p_infinity)
        vals = field.values(plan.points(field.domain))
        if not np.isfinite(vals).all():
            raise StructuralError("exponent field is not finite on the sampling lattice")
        smin, smax = float(vals.min()), float(vals.max())
        if bounds is not None:
            lo, hi = float(bounds[0]), float(bounds[1])
            if smin < lo - 1e-9 or smax > hi + 1e-9:
                raise StructuralError(
                    f"sampled range [{smin}, {smax}] escapes declared bounds [{lo}, {hi}]")
        else:
            lo, hi = smin, smax
        p = cls(field, lo, hi, p_infinity=p_infinity)
        if estimate_lh:
            est = estimate_lh_constants(p, plan)
            p = replace(p, lh0_constant=est.c0, lh_inf_constant=est.c_inf,
                        p_infinity=est.p_inf)
        return p


def exponents_identical(a: VariableExponent, b: VariableExponent) -> bool:
    return a is b or fields_identical(a.field, b.field)


class LHEstimate(NamedTuple):
    c0: float
    c_inf: float
    p_inf: float


def estimate_lh_constants(p: VariableExponent, plan: SamplingPlan = DEFAULT_PLAN) -> LHEstimate:
    """Sampled lower bounds for the local and decay log-Hoelder constants.

    c0 maximises |p(x)-p(y)| * (-log|x-y|) over lattice pairs with |x-y|<1/2;
    c_inf maximises |p(x)-p_inf| * log(e+|x|).  When p_infinity is not set on
    the exponent, the tail value is the mean of p over the outermost shell of
    the domain, sampled on a plan-independent lattice.
    """
    box = p.domain
    pts = plan.points(box)
    if pts.shape[0] < 2:
        raise ValueError("degenerate sampling plan: fewer than 2 points")
    vals = p.values(pts)

    li, ri = plan.pair_indices(box)
    dist = np.sqrt(np.sum((pts[li] - pts[ri]) ** 2, axis=1))
    mask = dist < 0.5
    if mask.any():
        gaps = np.abs(vals[li[mask]] - vals[ri[mask]])
        c0 = float(np.max(gaps * (-np.log(dist[mask]))))
    else:
        c0 = 0.0

    if p.p_infinity is not None:
        p_inf = float(p.p_infinity)
    else:
        p_inf = float(np.mean(p.values(plan.shell_points(box))))
    radius = np.sqrt(np.sum(pts ** 2, axis=1))
    c_inf = float(np.max(np.abs(vals - p_inf) * np.log(math.e + radius)))
    return LHEstimate(c0, c_inf, p_inf)


def conjugate(p: VariableExponent, plan: SamplingPlan = DEFAULT_PLAN) -> VariableExponent:
    """Pointwise conjugate p'(x) with 1/p(x) + 1/p'(x) = 1."""
    if p.p_minus <= 1.0:
        raise StructuralError(
            "conjugate requires p_minus > 1 (p_minus = 1 gives an unbounded conjugate,"
            " outside every in-scope class)")
    if p.is_constant:
        v = p.field.constant_value
        return VariableExponent.constant(v / (v - 1.0), p.domain)

    base = p.field

    def ev(pts):
        v = base.values(pts)
        return v / (v - 1.0)

    fld = field_from_callable(ev, p.domain)
    bounds = (p.p_plus / (p.p_plus - 1.0), p.p_minus / (p.p_minus - 1.0))
    return VariableExponent.from_field(fld, plan, bounds=bounds)


def scale_exponent(p: VariableExponent, factor: float,
                   plan: SamplingPlan = DEFAULT_PLAN) -> VariableExponent:
    """The exponent x -> factor * p(x)."""
    f = float(factor)
    if f <= 0:
        raise ValueError("factor must be positive")
    if p.is_constant:
        return VariableExponent.constant(f * p.field.constant_value, p.domain)
    base = p.field
    fld = field_from_callable(lambda pts: f * base.values(pts), p.domain)
    return VariableExponent.from_field(fld, plan, bounds=(f * p.p_minus, f * p.p_plus))


def harmonic_mean(p: VariableExponent, cube: Cube | Box,
                  grid: QuadratureGrid | None = None) -> float:
    """p_Q with 1/p_Q the average of 1/p over the cube."""
    lo, hi = cube.bounds()
    if not (p.domain.contains(lo, tol=1e-9) and p.domain.contains(hi, tol=1e-9)):
        raise DomainError("cube is not contained in the exponent's domain")
    avg = integrate(reciprocal(p.field), cube, grid) / region_volume(cube)
    return 1.0 / avg


# --------------------------------------------------------------------------
# Class membership
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentPairSpec:
    """Window parameters (gamma, r1, s1, r2, s2) for a limited-range pair.

    The class is empty unless 1/r1 - 1/r2 = 1/s1 - 1/s2 = gamma; an
    inconsistent spec is flagged (consistent=False), not silently accepted.
    """

    gamma: float
    r1: float
    s1: float
    r2: float
    s2: float

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        for r, s in ((self.r1, self.s1), (self.r2, self.s2)):
            if not (1.0 <= r < s):
                raise ValueError(f"need 1 <= r < s <= inf, got r={r}, s={s}")

    @property
    def consistent(self) -> bool:
        return (abs(_inv(self.r1) - _inv(self.r2) - self.gamma) <= EPS_ID
                and abs(_inv(self.s1) - _inv(self.s2) - self.gamma) <= EPS_ID)

    @classmethod
    def full_range(cls, gamma: float = 0.0) -> "ExponentPairSpec":
        g = float(gamma)
        s1 = math.inf if g == 0.0 else 1.0 / g
        return cls(g, 1.0, s1, 1.0 / (1.0 - g), math.inf)

    @property
    def is_full_range(self) -> bool:
        return self == ExponentPairSpec.full_range(self.gamma)


@dataclass(frozen=True)
class ClassReport:
    """Outcome of a window-membership check r < p_- <= p_+ < s.

    certified is True only for constant exponents, where the bounds and the
    vanishing LH constants are exact rather than sampled.
    """

    member: bool
    lower_ok: bool
    upper_ok: bool
    lh_estimated: bool
    certified: bool
    p_minus: float
    p_plus: float
    r: float
    s: float
    lh0: float | None
    lh_inf: float | None
    p_inf: float | None
    margin: float


def check_class(p: VariableExponent, r: float, s: float,
                eps_class: float = EPS_CLASS,
                plan: SamplingPlan = DEFAULT_PLAN) -> ClassReport:
    if not (1.0 <= r < s):
        raise ValueError("need 1 <= r < s <= inf")
    lower_ok = p.p_minus > r + eps_class
    upper_ok = p.p_plus < s - eps_class if math.isfinite(s) else math.isfinite(p.p_plus)
    if p.lh0_constant is not None:
        lh0, lh_inf, p_inf = p.lh0_constant, p.lh_inf_constant, p.p_infinity
    else:
        est = estimate_lh_constants(p, plan)
        lh0, lh_inf, p_inf = est.c0, est.c_inf, est.p_inf
    lh_ok = math.isfinite(lh0) and math.isfinite(lh_inf)
    return ClassReport(
        member=lower_ok and upper_ok and lh_ok,
        lower_ok=lower_ok, upper_ok=upper_ok, lh_estimated=lh_ok,
        certified=p.is_constant,
        p_minus=p.p_minus, p_plus=p.p_plus, r=r, s=s,
        lh0=lh0, lh_inf=lh_inf, p_inf=p_inf, margin=eps_class)


@dataclass(frozen=True)
class PairReport:
    passed: bool
    spec_consistent: bool
    max_deviation: float
    gamma: float
    p_report: ClassReport
    q_report: ClassReport


def check_pair(p: VariableExponent, q: VariableExponent, spec: ExponentPairSpec,
               eps_id: float = EPS_ID,
               plan: SamplingPlan = DEFAULT_PLAN) -> PairReport:
    """Verify 1/p - 1/q = gamma pointwise and window membership of each leg."""
    if p.domain != q.domain:
        raise DomainError("exponents live on different domains")
    pts = plan.points(p.domain)
    dev = float(np.max(np.abs(1.0 / p.values(pts) - 1.0 / q.values(pts) - spec.gamma)))
    pr = check_class(p, spec.r1, spec.s1, plan=plan)
    qr = check_class(q, spec.r2, spec.s2, plan=plan)
    passed = spec.consistent and dev <= eps_id and pr.member and qr.member
    return PairReport(passed, spec.consistent, dev, spec.gamma, pr, qr)
