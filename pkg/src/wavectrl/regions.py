"""Control-region geometry and the smooth spatial/temporal cutoffs.

A region is a tensor product of interval unions: per Euclidean direction a
union of open intervals inside the fundamental cell [0, 2*pi) (repeated
2*pi-periodically across all supercell copies), and likewise per periodic
direction.  The spatial cutoff chi is a tensor product of 1D windows built
from the C-infinity ramp

    r(u) = e^{-1/u} / (e^{-1/u} + e^{-1/(1-u)}),

which is exactly 0 for u <= 0 and exactly 1 for u >= 1, so the plateau and
support constraints hold with equality at grid points.  Each window equals 1
on the interval shrunk by `margin` on both sides and 0 outside the interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    PHYSICAL,
    SPECTRAL,
    TWO_PI,
    Field,
    WaveguideGrid,
    bessel_potential,
    physical,
    spectral,
)


class RegionError(ValueError):
    pass


def smooth_ramp(u: np.ndarray, sharpness: float = 1.0) -> np.ndarray:
    """C-infinity monotone ramp: 0 for u<=0, 1 for u>=1."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    out[u >= 1.0] = 1.0
    inside = (u > 0.0) & (u < 1.0)
    if np.any(inside):
        ui = u[inside]
        with np.errstate(over="ignore"):
            a = np.exp(-1.0 / ui**sharpness)
            b = np.exp(-1.0 / (1.0 - ui) ** sharpness)
        out[inside] = a / (a + b)
    return out


Intervals = tuple[tuple[float, float], ...]


def _is_full_circle(iv: tuple[float, float]) -> bool:
    return iv[0] <= 0.0 and iv[1] >= TWO_PI


@dataclass(frozen=True)
class ControlRegion:
    """Tensor-product control region with a plateau margin.

    intervals1[j]: open intervals in [0, 2*pi] for Euclidean direction j
    (2*pi Z-periodic, hence identical on every supercell copy);
    intervals2[j]: the same for periodic direction j.  `margin` is the
    half-width by which every non-full interval is shrunk to obtain the
    plateau set (chi == 1 there).
    """

    intervals1: tuple[Intervals, ...]
    intervals2: tuple[Intervals, ...]
    margin: float

    def __post_init__(self):
        iv1 = tuple(tuple(tuple(float(x) for x in iv) for iv in per) for per in self.intervals1)
        iv2 = tuple(tuple(tuple(float(x) for x in iv) for iv in per) for per in self.intervals2)
        object.__setattr__(self, "intervals1", iv1)
        object.__setattr__(self, "intervals2", iv2)
        if self.margin < 0:
            raise RegionError("margin must be nonnegative")
        for name, group in (("intervals1", iv1), ("intervals2", iv2)):
            if not group:
                raise RegionError(f"{name} must cover at least one direction")
            for per in group:
                if not per:
                    raise RegionError(f"{name}: every direction needs at least one interval")
                prev_hi = -np.inf
                for lo, hi in sorted(per):
                    if not (0.0 <= lo < hi <= TWO_PI):
                        raise RegionError(f"{name}: interval ({lo}, {hi}) not inside [0, 2*pi]")
                    if lo < prev_hi:
                        raise RegionError(f"{name}: overlapping intervals")
                    prev_hi = hi
                    if not _is_full_circle((lo, hi)):
                        if self.margin == 0.0:
                            raise RegionError(
                                "margin 0 is only allowed for full-circle intervals "
                                "(chi would degenerate to an indicator)"
                            )
                        if hi - lo <= 2.0 * self.margin:
                            raise RegionError(
                                f"{name}: interval ({lo}, {hi}) too narrow for margin {self.margin}"
                            )

    @property
    def m(self) -> int:
        return len(self.intervals1)

    @property
    def n(self) -> int:
        return len(self.intervals2)

    def per_direction(self) -> tuple[Intervals, ...]:
        return self.intervals1 + self.intervals2

    def _axis_indicator(self, grid: WaveguideGrid, axis: int, shrink: float) -> np.ndarray:
        x = _cell_coords(grid, axis)
        out = np.zeros(len(x), dtype=float)
        for lo, hi in self.per_direction()[axis]:
            if _is_full_circle((lo, hi)):
                out[:] = 1.0
            else:
                out[(x > lo + shrink) & (x < hi - shrink)] = 1.0
        return _tile_cells(out, grid, axis)

    def indicator(self, grid: WaveguideGrid, shrink: float = 0.0) -> np.ndarray:
        """0/1 array of the open region (strict inequalities), optionally shrunk."""
        self._check_grid(grid)
        out = np.ones(grid.shape)
        for j in range(grid.d):
            out = out * grid._bcast(self._axis_indicator(grid, j, shrink), j)
        return out

    def plateau_indicator(self, grid: WaveguideGrid) -> np.ndarray:
        return self.indicator(grid, shrink=self.margin)

    def grid_measure(self, grid: WaveguideGrid) -> float:
        return float(np.sum(self.indicator(grid))) * grid.dvol

    def _check_grid(self, grid: WaveguideGrid):
        if self.m != grid.m or self.n != grid.n:
            raise RegionError(
                f"region is {self.m}+{self.n} dimensional, grid is {grid.m}+{grid.n}"
            )


def whole_domain_region(m: int, n: int) -> ControlRegion:
    iv = ((0.0, TWO_PI),)
    return ControlRegion((iv,) * m, (iv,) * n, margin=0.0)


def _cell_coords(grid: WaveguideGrid, axis: int) -> np.ndarray:
    """Coordinates of one 2*pi cell along an axis (the whole axis if periodic)."""
    if axis < grid.m:
        if grid.N[axis] % grid.L:
            raise RegionError(
                f"N[{axis}]={grid.N[axis]} not divisible by L={grid.L}: "
                "cutoffs cannot repeat exactly across cells"
            )
        M = grid.N[axis] // grid.L
        return grid.spacing(axis) * np.arange(M)
    return grid.coords1d(axis)


def _tile_cells(cell_vals: np.ndarray, grid: WaveguideGrid, axis: int) -> np.ndarray:
    """Repeat one-cell samples across the L copies (exact array equality)."""
    if axis < grid.m:
        return np.tile(cell_vals, grid.L)
    return cell_vals


@dataclass(frozen=True)
class CutoffChi:
    """Smooth spatial cutoff sampled on a grid: 1 on the plateau, 0 outside the region."""

    region: ControlRegion
    samples: Field
    smoothness: float = 1.0

    @property
    def values(self) -> np.ndarray:
        return self.samples.data.real


def _axis_window(x: np.ndarray, intervals: Intervals, margin: float, sharpness: float) -> np.ndarray:
    out = np.zeros_like(x)
    for lo, hi in intervals:
        if _is_full_circle((lo, hi)):
            out[:] = 1.0
        else:
            up = smooth_ramp((x - lo) / margin, sharpness)
            down = smooth_ramp((hi - x) / margin, sharpness)
            out = out + up * down
    return np.minimum(out, 1.0)


def build_chi(region: ControlRegion, grid: WaveguideGrid, smoothness: float = 1.0) -> CutoffChi:
    """Sample the analytic tensor-product cutoff on the grid.

    Requires at least 3 grid points across the margin in every direction so
    the ramp is resolved; the profile itself is grid-independent.
    """
    region._check_grid(grid)
    vals = np.ones(grid.shape)
    for j in range(grid.d):
        per = region.per_direction()[j]
        if all(_is_full_circle(iv) for iv in per):
            continue
        h = grid.spacing(j)
        if region.margin / h < 3.0:
            n_min = int(np.ceil(3.0 * grid.length(j) / region.margin))
            raise RegionError(
                f"margin {region.margin} spans fewer than 3 grid points on axis {j} "
                f"(h={h:.4g}); use N[{j}] >= {n_min}"
            )
        x = _cell_coords(grid, j)
        win = _tile_cells(_axis_window(x, per, region.margin, smoothness), grid, j)
        vals = vals * grid._bcast(win, j)
    return CutoffChi(region, Field(grid, vals.astype(np.complex128), PHYSICAL), smoothness)


@dataclass(frozen=True)
class TimeCutoff:
    """phi_T(t) = phi1(t/T): 1 for t <= T/2, 0 for t >= 3T/4, smooth between."""

    T: float
    nodes: np.ndarray
    values: np.ndarray
    sharpness: float = 1.0

    def __call__(self, t) -> np.ndarray:
        return time_profile(np.asarray(t, dtype=float) / self.T, self.sharpness)


def time_profile(u, sharpness: float = 1.0) -> np.ndarray:
    """phi1: plateau 1 on u <= 1/2, zero on u >= 3/4, monotone ramp between."""
    return smooth_ramp((0.75 - np.asarray(u, dtype=float)) / 0.25, sharpness)


def build_phi(T: float, nodes) -> TimeCutoff:
    if T <= 0:
        raise RegionError(f"time horizon must be positive, got T={T}")
    nodes = np.asarray(nodes, dtype=float)
    return TimeCutoff(T, nodes, time_profile(nodes / T))


def chi_multiply(chi: CutoffChi | None, f: Field) -> Field:
    """Pointwise multiplication by chi (chi=None means chi == 1)."""
    if chi is None:
        return f
    p = physical(f)
    out = Field(f.grid, p.data * chi.values, PHYSICAL)
    return spectral(out) if f.rep == SPECTRAL else out


def commutator_apply(chi: CutoffChi, s: float, f: Field) -> Field:
    """[chi, (1-Delta)^{s/2}] f, composed exactly from the two operator orders."""
    first = chi_multiply(chi, bessel_potential(f, s))
    second = bessel_potential(chi_multiply(chi, f), s)
    return Field(f.grid, first.data - second.data, first.rep)
