"""Muckenhoupt-type weight constants over dyadic cube families.

The supremum over all cubes is approximated from below by a finite dyadic
family with shifted lattices.  Every report carries the family parameters
and a per-level running maximum, so finiteness or divergence of a constant
is an inference drawn from the trace, never a hard claim.  Per-cube norm
failures (non-integrability at the working resolution) are diagnostics:
the cube is excluded from the maximum and recorded with a status.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import IntegrabilityError, NotInSpaceError, StructuralError
from .exponent import (ExponentPairSpec, VariableExponent, _inv, check_pair,
                       conjugate, harmonic_mean, scale_exponent)
from .field import ScalarField, power, reciprocal
from .geometry import (CubeFamily, Cube, QuadratureGrid, DEFAULT_GRID,
                       build_rule, enumerate_dyadic, region_volume)
from .norms import DEFAULT_RTOL, QuadSamples, luxemburg_from_samples

_FAILURE_KINDS = {
    "non-finite": "failed:non-finite",
    "divergent": "failed:divergent",
    "unresolved": "failed:unresolved",
}


@dataclass(frozen=True)
class CubeValue:
    level: int
    shift: int
    cube: Cube
    value: float | None
    status: str  # "ok" or "failed:<kind>"


@dataclass(frozen=True)
class WeightConstantReport:
    """Estimated class constant over a cube family.

    estimate is the maximum of the per-cube quantity over cubes that
    evaluated cleanly; witness_cube attains it; per_level_max[l] is the
    running maximum over levels <= l and is nondecreasing by construction.
    """

    estimate: float
    witness_cube: Cube | None
    per_level_max: tuple[tuple[int, float], ...]
    entries: tuple[CubeValue, ...]
    family: CubeFamily
    norm_tolerance: float

    @property
    def failures(self) -> int:
        return sum(1 for e in self.entries if e.value is None)

    def level_trace(self) -> dict[int, float]:
        return dict(self.per_level_max)


def _status_of(exc: Exception) -> str:
    if isinstance(exc, IntegrabilityError):
        return _FAILURE_KINDS.get(exc.kind, f"failed:{exc.kind}")
    if isinstance(exc, NotInSpaceError):
        return "failed:not-in-space"
    raise exc


def _run_over_family(family: CubeFamily, worker: Callable, threads: int = 1):
    """Evaluate worker on every family entry, deterministically ordered.

    Cubes are independent; with threads > 1 they are processed concurrently
    and gathered back in enumeration order, so the output (and therefore any
    reduction over it) is identical to the sequential run.
    """
    def safe(entry):
        try:
            return worker(entry), "ok"
        except (IntegrabilityError, NotInSpaceError) as exc:
            return None, _status_of(exc)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(safe, family.entries))
    else:
        results = [safe(e) for e in family.entries]
    return [CubeValue(e.level, e.shift, e.cube, v, s)
            for e, (v, s) in zip(family.entries, results)]


def _assemble_report(entries, family, rtol) -> WeightConstantReport:
    best = None
    best_cube = None
    for e in entries:
        if e.value is not None and (best is None or e.value > best):
            best, best_cube = e.value, e.cube
    per_level = []
    running = None
    for level in range(family.depth + 1):
        level_vals = [e.value for e in entries if e.level <= level and e.value is not None]
        if level_vals:
            running = max(level_vals)
        if running is not None:
            per_level.append((level, running))
    return WeightConstantReport(
        estimate=best if best is not None else math.nan,
        witness_cube=best_cube,
        per_level_max=tuple(per_level),
        entries=tuple(entries),
        family=family,
        norm_tolerance=rtol)


def _char_samples(F_vals, P_vals, rule, volume, tail_rtol) -> QuadSamples:
    return QuadSamples(F=F_vals, P=P_vals, W=rule.weights,
                       ladders=rule.ladders, volume=volume, tail_rtol=tail_rtol)


def _default_family(box) -> CubeFamily:
    return enumerate_dyadic(box, 8, 1)


def apq_constant(w: ScalarField, p: VariableExponent, q: VariableExponent,
                 gamma: float = 0.0,
                 family: CubeFamily | None = None,
                 grid: QuadratureGrid | None = None,
                 rtol: float = DEFAULT_RTOL,
                 threads: int = 1,
                 validate: bool = True) -> WeightConstantReport:
    """Scan of sup_Q |Q|^(gamma-1) ||w chi_Q||_q ||w^-1 chi_Q||_p'."""
    grid = grid or DEFAULT_GRID
    family = family or _default_family(w.domain)
    if validate:
        pr = check_pair(p, q, ExponentPairSpec.full_range(gamma))
        if not pr.passed:
            raise StructuralError(
                f"(p, q) is not an admissible pair for gamma={gamma}: "
                f"max deviation {pr.max_deviation:.3e}, "
                f"p in window: {pr.p_report.member}, q in window: {pr.q_report.member}")
    p_conj = conjugate(p)
    sing = list(w.singular_points) + list(q.field.singular_points) + list(p.field.singular_points)

    def worker(entry):
        cube = entry.cube
        rule = build_rule(cube, grid, sing)
        wv = w.values(rule.points)
        if not np.isfinite(wv).all():
            raise IntegrabilityError("weight not finite on a node", kind="non-finite")
        vol = region_volume(cube)
        qv = q.values(rule.points)
        pv = p_conj.values(rule.points)
        with np.errstate(all="ignore"):
            winv = 1.0 / np.abs(wv)
        if not np.isfinite(winv).all():
            raise IntegrabilityError("weight vanishes on a node", kind="non-finite")
        n1 = luxemburg_from_samples(
            _char_samples(np.abs(wv), qv, rule, vol, grid.tail_rtol), rtol)
        n2 = luxemburg_from_samples(
            _char_samples(winv, pv, rule, vol, grid.tail_rtol), rtol)
        return vol ** (gamma - 1.0) * n1.value * n2.value

    entries = _run_over_family(family, worker, threads)
    return _assemble_report(entries, family, rtol)


def limited_constant(w: ScalarField, p: VariableExponent, q: VariableExponent,
                     spec: ExponentPairSpec,
                     family: CubeFamily | None = None,
                     grid: QuadratureGrid | None = None,
                     rtol: float = DEFAULT_RTOL,
                     threads: int = 1,
                     validate: bool = True) -> WeightConstantReport:
    """Scan of the limited-range quantity

        |Q|^-(1/r1-1/s1) ||w chi_Q||_{1/(1/q - 1/s2)} ||w^-1 chi_Q||_{1/(1/r1 - 1/p)}.

    With the full-range parameters (r1, s1, r2, s2) = (1, 1/gamma, 1/(1-gamma), inf)
    the inner exponents collapse to q(.) and p'(.), recovering apq_constant.
    """
    grid = grid or DEFAULT_GRID
    family = family or _default_family(w.domain)
    if not spec.consistent:
        raise StructuralError(
            "empty limited-range class: 1/r1 - 1/r2 and 1/s1 - 1/s2 must both equal gamma")
    if validate:
        pr = check_pair(p, q, spec)
        if not pr.passed:
            raise StructuralError(
                f"(p, q) fails the limited-range windows: deviation {pr.max_deviation:.3e}, "
                f"p in ({spec.r1}, {spec.s1}): {pr.p_report.member}, "
                f"q in ({spec.r2}, {spec.s2}): {pr.q_report.member}")
    inv_s2 = _inv(spec.s2)
    inv_r1 = _inv(spec.r1)
    exponent_gap = inv_r1 - _inv(spec.s1)
    sing = list(w.singular_points) + list(q.field.singular_points) + list(p.field.singular_points)

    def worker(entry):
        cube = entry.cube
        rule = build_rule(cube, grid, sing)
        wv = w.values(rule.points)
        if not np.isfinite(wv).all():
            raise IntegrabilityError("weight not finite on a node", kind="non-finite")
        vol = region_volume(cube)
        with np.errstate(all="ignore"):
            e_q = 1.0 / (1.0 / q.values(rule.points) - inv_s2)
            e_p = 1.0 / (inv_r1 - 1.0 / p.values(rule.points))
            winv = 1.0 / np.abs(wv)
        for arr, nm in ((e_q, "1/(1/q - 1/s2)"), (e_p, "1/(1/r1 - 1/p)")):
            if not np.isfinite(arr).all() or float(arr.min()) < 1.0 - 1e-9:
                raise StructuralError(
                    f"inner exponent {nm} is invalid on a node: p or q leaves its window")
        if not np.isfinite(winv).all():
            raise IntegrabilityError("weight vanishes on a node", kind="non-finite")
        n1 = luxemburg_from_samples(
            _char_samples(np.abs(wv), e_q, rule, vol, grid.tail_rtol), rtol)
        n2 = luxemburg_from_samples(
            _char_samples(winv, e_p, rule, vol, grid.tail_rtol), rtol)
        return vol ** (-exponent_gap) * n1.value * n2.value

    entries = _run_over_family(family, worker, threads)
    return _assemble_report(entries, family, rtol)


def duality_swap(w: ScalarField, p: VariableExponent, q: VariableExponent
                 ) -> tuple[ScalarField, VariableExponent, VariableExponent]:
    """(w, p, q) -> (w^-1, q', p'); the class constant is invariant under
    this swap, which scans verify to 1e-10 relative."""
    return reciprocal(w), conjugate(q), conjugate(p)


def scaling_transform(w: ScalarField, p: VariableExponent, q: VariableExponent,
                      gamma: float) -> tuple[ScalarField, VariableExponent]:
    """(w, p, q, gamma) -> (w^sigma, q/sigma) with sigma = 1/(1-gamma).

    Membership transfers both ways (the diagonal class of q/sigma on one
    side, the gamma-class of (p, q) on the other); the reports give the
    quantitative comparison, the transform itself is pure algebra.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    sigma = 1.0 / (1.0 - gamma)
    q_scaled = scale_exponent(q, 1.0 / sigma)
    if q_scaled.p_minus <= 1.0 + 1e-12:
        raise StructuralError(
            f"q/sigma has essential infimum {q_scaled.p_minus} <= 1; "
            "the scaled diagonal class is undefined")
    return power(w, sigma), q_scaled


# --------------------------------------------------------------------------
# Reverse Hoelder probe
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RHISample:
    s: float
    level: int
    shift: int
    cube: Cube
    ratio: float | None
    status: str


@dataclass(frozen=True)
class RHILevel:
    s: float
    max_ratio: float | None
    witness: Cube | None
    failures: int


@dataclass(frozen=True)
class RHIReport:
    """Self-improvement probe: for each candidate s the worst cube ratio

        (|Q|^(-1/(s r_Q)) ||u chi_Q||_{s r(.)}) / (|Q|^(-1/r_Q) ||u chi_Q||_{r(.)}),

    and the largest s that stays certified: max ratio below the cap with no
    cube flagged beyond integrability at that s.
    """

    per_s: tuple[RHILevel, ...]
    samples: tuple[RHISample, ...]
    s_max: float | None
    cap: float

    def ratios(self) -> dict[float, float | None]:
        return {lv.s: lv.max_ratio for lv in self.per_s}


def rhi_probe(u: ScalarField, r: VariableExponent,
              family: CubeFamily | None = None,
              grid: QuadratureGrid | None = None,
              s_grid: Sequence[float] = (1.0, 1.25, 1.5, 2.0, 3.0),
              cap: float = 4.0,
              rtol: float = DEFAULT_RTOL,
              threads: int = 1) -> RHIReport:
    """Probe the reverse-Hoelder self-improvement of a weight u in the
    diagonal r(.) class.  s = 1 is the degenerate case with ratio exactly 1."""
    grid = grid or DEFAULT_GRID
    family = family or _default_family(u.domain)
    s_values = tuple(float(s) for s in s_grid)
    if any(s < 1.0 for s in s_values):
        raise ValueError("s_grid entries must be >= 1")
    sing = list(u.singular_points) + list(r.field.singular_points)

    def worker(entry):
        cube = entry.cube
        rule = build_rule(cube, grid, sing)
        uv = np.abs(u.values(rule.points))
        if not np.isfinite(uv).all():
            raise IntegrabilityError("weight not finite on a node", kind="non-finite")
        rv = r.values(rule.points)
        vol = region_volume(cube)
        r_q = harmonic_mean(r, cube, grid)
        base = _char_samples(uv, rv, rule, vol, grid.tail_rtol)
        denom = vol ** (-1.0 / r_q) * luxemburg_from_samples(base, rtol).value
        out = []
        for s in s_values:
            if s == 1.0:
                out.append((1.0, "ok"))
                continue
            try:
                num = (vol ** (-1.0 / (s * r_q))
                       * luxemburg_from_samples(base.scaled(exp_factor=s), rtol).value)
                out.append((num / denom, "ok"))
            except (IntegrabilityError, NotInSpaceError) as exc:
                out.append((None, "beyond-integrability:" + _status_of(exc).split(":", 1)[1]))
        return out

    rows = _run_over_family(family, worker, threads)
    samples: list[RHISample] = []
    per_s: list[RHILevel] = []
    for j, s in enumerate(s_values):
        best = None
        witness = None
        failures = 0
        for row in rows:
            if row.value is None:  # whole-cube failure (denominator)
                failures += 1
                samples.append(RHISample(s, row.level, row.shift, row.cube, None, row.status))
                continue
            ratio, status = row.value[j]
            samples.append(RHISample(s, row.level, row.shift, row.cube, ratio, status))
            if ratio is None:
                failures += 1
            elif best is None or ratio > best:
                best, witness = ratio, row.cube
        per_s.append(RHILevel(s, best, witness, failures))
    certified = [lv.s for lv in per_s
                 if lv.failures == 0 and lv.max_ratio is not None and lv.max_ratio <= cap]
    s_max = max(certified) if certified else None
    return RHIReport(tuple(per_s), tuple(samples), s_max, cap)
