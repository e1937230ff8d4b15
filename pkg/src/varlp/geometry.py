"""Axis-parallel geometry and deterministic midpoint quadrature.

Boxes truncate R^d, cubes come from dyadic subdivision of a box, and
integration uses a tensor midpoint rule with a fixed lexicographic node
order.  A region whose closure meets a declared singular point is split at
the point and integrated on a geometrically graded partition refined toward
it: integrable power singularities then converge at a rate independent of
the cube scale, while non-integrable ones are detected from non-contracting
shell sums instead of silently returning a resolution artifact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EnumerationError, IntegrabilityError

MIN_SIDE_FACTOR = 2.0 ** -20
_MAX_PIECE_NODES = 1 << 23


@dataclass(frozen=True)
class Box:
    """The axis-parallel box prod_i [center_i - h, center_i + h], h = half_width."""

    center: tuple[float, ...]
    half_width: float

    def __post_init__(self):
        if not 1 <= len(self.center) <= 3:
            raise ValueError(f"dimension must be 1, 2 or 3, got {len(self.center)}")
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise ValueError("half_width must be positive and finite")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def side(self) -> float:
        return 2.0 * self.half_width

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, dtype=float)
        return c - self.half_width, c + self.half_width

    def as_cube(self) -> "Cube":
        lo, _ = self.bounds()
        return Cube(tuple(lo), self.side)

    def contains(self, point: Sequence[float], tol: float = 0.0) -> bool:
        lo, hi = self.bounds()
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= lo - tol) and np.all(p <= hi + tol))


def default_box(d: int = 1, half_width: float = 8.0) -> Box:
    return Box((0.0,) * d, half_width)


@dataclass(frozen=True)
class Cube:
    """Axis-parallel cube with the given lower corner and side length."""

    corner: tuple[float, ...]
    side: float

    def __post_init__(self):
        if not (self.side > 0 and math.isfinite(self.side)):
            raise ValueError("side must be positive and finite")
        object.__setattr__(self, "corner", tuple(float(c) for c in self.corner))
        object.__setattr__(self, "side", float(self.side))

    @property
    def d(self) -> int:
        return len(self.corner)

    @property
    def volume(self) -> float:
        return self.side ** self.d

    @property
    def center(self) -> tuple[float, ...]:
        return tuple(c + 0.5 * self.side for c in self.corner)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.corner, dtype=float)
        return lo, lo + self.side

    def contains(self, point: Sequence[float], tol: float = 0.0) -> bool:
        lo, hi = self.bounds()
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= lo - tol) and np.all(p <= hi + tol))

    def children(self) -> tuple["Cube", ...]:
        """The 2^d dyadic children."""
        half = 0.5 * self.side
        out = []
        for mask in itertools.product((0, 1), repeat=self.d):
            corner = tuple(c + m * half for c, m in zip(self.corner, mask))
            out.append(Cube(corner, half))
        return tuple(out)


@dataclass(frozen=True)
class FamilyEntry:
    level: int
    shift: int
    cube: Cube


@dataclass(frozen=True)
class CubeFamily:
    """Finite dyadic surrogate for the supremum over all cubes."""

    box: Box
    depth: int
    shifts: int
    entries: tuple[FamilyEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def cubes(self) -> tuple[Cube, ...]:
        return tuple(e.cube for e in self.entries)


def enumerate_dyadic(box: Box, depth: int, shifts: int = 0) -> CubeFamily:
    """All dyadic subdivisions of `box` down to side 2*half_width/2^depth,
    plus `shifts` fractionally shifted copies of each lattice.

    Order is deterministic: level-major, then shift index, then lexicographic
    corner.  Shift j displaces the level lattice by j/(shifts+1) of a cell
    along every axis; a shifted lattice at level l holds (2^l - 1)^d cubes.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if shifts < 0:
        raise ValueError("shifts must be >= 0")
    if 2.0 ** (1 - depth) < MIN_SIDE_FACTOR:
        raise EnumerationError(
            f"depth {depth} underflows minimum side {MIN_SIDE_FACTOR} * half_width"
        )
    lo, _ = box.bounds()
    d = box.d
    entries = []
    for level in range(depth + 1):
        n = 1 << level
        side = box.side / n
        for shift in range(shifts + 1):
            offset = side * shift / (shifts + 1)
            count = n if shift == 0 else n - 1
            if count <= 0:
                continue
            for idx in itertools.product(range(count), repeat=d):
                corner = tuple(lo[i] + offset + idx[i] * side for i in range(d))
                entries.append(FamilyEntry(level, shift, Cube(corner, side)))
    return CubeFamily(box, depth, shifts, tuple(entries))


@dataclass(frozen=True)
class QuadratureGrid:
    """Midpoint-tensor rule parameters.

    Per-axis node counts are ceil(side * points_per_axis_per_unit), rounded
    up to the next even integer so that nodes never land on cube centers
    (where shifted-lattice singular points sit).  singular_depth controls the
    geometric grading toward declared singular points; 0 disables grading.
    """

    points_per_axis_per_unit: int = 4096
    refinement_level: int = 12
    singular_depth: int = 64
    singular_shell_nodes: int = 8
    tail_rtol: float = 0.005

    def __post_init__(self):
        if self.points_per_axis_per_unit < 1:
            raise ValueError("points_per_axis_per_unit must be >= 1")
        if self.singular_depth < 0 or self.singular_depth > 1000:
            raise ValueError("singular_depth must be in [0, 1000]")
        if self.singular_shell_nodes < 2 or self.singular_shell_nodes % 2:
            raise ValueError("singular_shell_nodes must be even and >= 2")
        if not 0.0 < self.tail_rtol < 1.0:
            raise ValueError("tail_rtol must be in (0, 1)")

    @classmethod
    def from_level(cls, level: int, **kwargs) -> "QuadratureGrid":
        return cls(points_per_axis_per_unit=1 << level, refinement_level=level, **kwargs)

    def nodes_per_axis(self, extent: float) -> int:
        n = int(math.ceil(extent * self.points_per_axis_per_unit - 1e-9))
        if n < 2:
            n = 2
        if n % 2:
            n += 1
        return n


DEFAULT_GRID = QuadratureGrid()


def region_bounds(region) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(region, (Box, Cube)):
        return region.bounds()
    raise TypeError(f"expected Box or Cube, got {type(region).__name__}")


def region_volume(region) -> float:
    lo, hi = region_bounds(region)
    return float(np.prod(hi - lo))


@dataclass(frozen=True)
class RegionRule:
    """Concrete node/weight set for one region.

    ladders records, for each graded descent toward a singular point, the
    contiguous index spans of its shells (outermost first; the final span is
    the unresolved core).  Shell sums drive the divergence diagnostics.
    """

    points: np.ndarray
    weights: np.ndarray
    ladders: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def node_count(self) -> int:
        return int(self.points.shape[0])


def _piece_nodes(lo, hi, grid: QuadratureGrid, per_axis: int | None):
    d = lo.size
    counts = []
    for i in range(d):
        counts.append(per_axis if per_axis is not None else grid.nodes_per_axis(hi[i] - lo[i]))
    total = 1
    for n in counts:
        total *= n
    if total > _MAX_PIECE_NODES:
        raise ValueError(
            f"quadrature piece would allocate {total} nodes; lower the refinement level"
        )
    axes = [
        lo[i] + (np.arange(counts[i]) + 0.5) * ((hi[i] - lo[i]) / counts[i])
        for i in range(d)
    ]
    if d == 1:
        pts = axes[0][:, None]
    else:
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    cell = 1.0
    for i in range(d):
        cell *= (hi[i] - lo[i]) / counts[i]
    return pts, np.full(pts.shape[0], cell)


def _in_closure(point: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> bool:
    tol = 1e-12 * max(1.0, float(np.max(hi - lo)))
    return bool(np.all(point >= lo - tol) and np.all(point <= hi + tol))


def build_rule(region, grid: QuadratureGrid | None = None,
               singular_points: Iterable[Sequence[float]] = ()) -> RegionRule:
    """Assemble the (possibly graded) midpoint rule for a region."""
    grid = grid or DEFAULT_GRID
    lo, hi = region_bounds(region)
    seen = {}
    for s in singular_points:
        p = np.asarray(s, dtype=float)
        if p.size != lo.size:
            raise ValueError("singular point dimension mismatch")
        if _in_closure(p, lo, hi):
            seen[tuple(p)] = p
    sings = list(seen.values())

    pts_pieces: list[np.ndarray] = []
    wts_pieces: list[np.ndarray] = []
    ladders: list[tuple[tuple[int, int], ...]] = []
    count = 0

    def emit(plo, phi, per_axis=None):
        nonlocal count
        pts, wts = _piece_nodes(np.asarray(plo, float), np.asarray(phi, float), grid, per_axis)
        pts_pieces.append(pts)
        wts_pieces.append(wts)
        span = (count, count + pts.shape[0])
        count = span[1]
        return span

    _assemble(lo, hi, sings, grid, emit, ladders, 0)
    points = np.concatenate(pts_pieces, axis=0)
    weights = np.concatenate(wts_pieces, axis=0)
    return RegionRule(points, weights, tuple(ladders))


def _assemble(lo, hi, sings, grid, emit, ladders, depth):
    if not sings:
        emit(lo, hi)
        return
    if len(sings) == 1:
        _split_at_point(lo, hi, sings[0], grid, emit, ladders)
        return
    if depth > 40:
        raise ValueError("singular points too close together to separate")
    mid = 0.5 * (lo + hi)
    for mask in itertools.product((0, 1), repeat=lo.size):
        m = np.asarray(mask, dtype=bool)
        clo = np.where(m, mid, lo)
        chi = np.where(m, hi, mid)
        csings = [s for s in sings if _in_closure(s, clo, chi)]
        _assemble(clo, chi, csings, grid, emit, ladders, depth + 1)


def _split_at_point(lo, hi, xi, grid, emit, ladders):
    # Partition at xi so that each piece has xi at a corner, then grade each
    # piece toward that corner.
    d = lo.size
    segments = []
    for i in range(d):
        x = min(max(float(xi[i]), float(lo[i])), float(hi[i]))
        segs = []
        if x > lo[i]:
            segs.append((float(lo[i]), x))
        if x < hi[i]:
            segs.append((x, float(hi[i])))
        segments.append(segs)
    for combo in itertools.product(*segments):
        plo = np.array([c[0] for c in combo])
        phi = np.array([c[1] for c in combo])
        if grid.singular_depth <= 0:
            emit(plo, phi)
        else:
            ladders.append(_ladder(plo, phi, np.asarray(xi, float), grid, emit))


def _ladder(plo, phi, xi, grid, emit):
    d = plo.size
    cur_lo = plo.copy()
    cur_hi = phi.copy()
    at_lo = np.abs(xi - cur_lo) <= np.abs(xi - cur_hi)
    m = grid.singular_shell_nodes
    spans: list[tuple[int, int]] = []
    for _ in range(grid.singular_depth):
        mid = 0.5 * (cur_lo + cur_hi)
        first = None
        last = None
        for mask in itertools.product((0, 1), repeat=d):
            mb = np.asarray(mask, dtype=bool)
            if bool(np.all(mb != at_lo)):
                continue  # the child hugging xi descends instead
            span = emit(np.where(mb, mid, cur_lo), np.where(mb, cur_hi, mid), per_axis=m)
            if first is None:
                first = span
            last = span
        spans.append((first[0], last[1]))
        cur_lo = np.where(at_lo, cur_lo, mid)
        cur_hi = np.where(at_lo, mid, cur_hi)
    spans.append(emit(cur_lo, cur_hi, per_axis=m))
    return tuple(spans)


def check_shell_contraction(abs_contrib: np.ndarray,
                            ladders: tuple[tuple[tuple[int, int], ...], ...],
                            tail_rtol: float) -> None:
    """Raise if graded shell sums fail to contract toward a singular point.

    Works on |contribution| per node, so it tests absolute integrability.
    """
    if not ladders:
        return
    total = float(abs_contrib.sum())
    for spans in ladders:
        if len(spans) < 4:
            continue
        shells = [float(abs_contrib[a:b].sum()) for a, b in spans[:-1]]
        last, prev = shells[-1], shells[-2]
        if last <= 0.0:
            continue
        if last >= prev:
            raise IntegrabilityError(
                "graded shell sums do not decay toward a singular point",
                kind="divergent",
            )
        rho = last / prev
        tail = last * rho / (1.0 - rho)
        if tail > tail_rtol * max(total, 1e-300):
            raise IntegrabilityError(
                f"estimated singular tail {tail:.3e} exceeds {tail_rtol:.1e} of total",
                kind="unresolved",
            )


def integrate(f, region, grid: QuadratureGrid | None = None,
              singular_points: Iterable[Sequence[float]] | None = None) -> float:
    """Midpoint-tensor integral of f over a cube or box.

    Summation order is fixed (lexicographic nodes, numpy pairwise reduction),
    so repeated calls are bit-identical.  Nodes evaluating to inf/nan, and
    detected non-integrable singularities, raise IntegrabilityError.
    """
    grid = grid or DEFAULT_GRID
    sing = getattr(f, "singular_points", ()) if singular_points is None else singular_points
    rule = build_rule(region, grid, sing)
    vals = f.values(rule.points)
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.argmax(bad))
        raise IntegrabilityError(
            f"integrand is not finite at node {tuple(rule.points[i])}",
            kind="non-finite",
            point=tuple(rule.points[i]),
        )
    contrib = vals * rule.weights
    check_shell_contraction(np.abs(contrib), rule.ladders, grid.tail_rtol)
    return float(contrib.sum())
