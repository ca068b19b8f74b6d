"""Discrete cell decomposition of the supercell into unit-torus fibers.

For quasi-momentum alpha = theta/L (theta in {0..L-1}^m) the fiber of u is

    (P_alpha u)(x', y) = e^{i alpha . x'} sum_c e^{2 pi i alpha . c} u(x' + 2 pi c, y),

summed over the L^m cell translates.  In coefficients this is a pure
re-indexing: the fiber coefficient at integer k equals L^m times the
supercell coefficient at xi = k - alpha, where k runs over the symmetric
truncation of the alpha-shifted lattice (the branch used by
propagators.twisted_frequencies).  The re-indexing is a bijection of the
stored lattices, so the round trip and the norm identity

    ||u||^2_{L2(supercell)} = L^{-m} sum_alpha ||P_alpha u||^2_{L2(fiber)}

hold to machine precision.  The physical-space direct sum is kept as the
independent oracle (floquet_forward_direct).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.linalg

from .grid import (
    SPECTRAL,
    Field,
    GridError,
    WaveguideGrid,
    apply_multiplier,
    l2_norm,
    physical,
    random_field,
    spectral,
)
from .propagators import linear_propagate, twisted_propagate
from .regions import ControlRegion


@dataclass(frozen=True)
class QuasiMomentum:
    """alpha in {0, 1/L, ..., (L-1)/L}^m, stored as the integer offsets theta."""

    theta: tuple[int, ...]
    L: int

    def __post_init__(self):
        if any(not 0 <= t < self.L for t in self.theta):
            raise GridError(f"theta {self.theta} outside {{0..L-1}}^m for L={self.L}")

    @property
    def alpha(self) -> np.ndarray:
        return np.asarray(self.theta, dtype=float) / self.L


def all_quasimomenta(m: int, L: int) -> list[QuasiMomentum]:
    return [QuasiMomentum(theta, L) for theta in product(range(L), repeat=m)]


@dataclass
class FiberBundle:
    """The L^m fibers of a supercell field, all on one unit-torus grid."""

    parent: WaveguideGrid
    fiber_grid: WaveguideGrid
    fibers: dict[tuple[int, ...], Field]

    def fiber(self, q: QuasiMomentum | tuple[int, ...]) -> Field:
        theta = q.theta if isinstance(q, QuasiMomentum) else tuple(q)
        return self.fibers[theta]

    def quasimomenta(self) -> list[QuasiMomentum]:
        return all_quasimomenta(self.parent.m, self.parent.L)


def _axis_maps(grid: WaveguideGrid, axis: int) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Per theta on one Euclidean axis: (supercell indices, fiber slots).

    Supercell kappa with kappa = -theta (mod L) maps to the fiber mode
    k* = (kappa + theta)/L stored at slot k* mod M.
    """
    N = grid.N[axis]
    L = grid.L
    M = N // L
    kappa = np.fft.fftfreq(N, d=1.0 / N).astype(int)
    out = {}
    for theta in range(L):
        src = np.where((-kappa) % L == theta)[0]
        kstar = (kappa[src] + theta) // L
        dst = kstar % M
        out[theta] = (src, dst)
    return out


def floquet_forward(u: Field) -> FiberBundle:
    """Split a supercell field into its L^m fibers (spectral re-indexing)."""
    grid = u.grid
    fiber_grid = grid.fiber_grid()
    uhat = spectral(u).data
    scale = float(grid.L**grid.m)
    maps = [_axis_maps(grid, j) for j in range(grid.m)]
    y_slots = [np.arange(grid.N[j]) for j in range(grid.m, grid.d)]
    fibers = {}
    for theta in product(range(grid.L), repeat=grid.m):
        src = [maps[j][theta[j]][0] for j in range(grid.m)]
        dst = [maps[j][theta[j]][1] for j in range(grid.m)]
        block = uhat[np.ix_(*src, *y_slots)]
        fhat = np.empty(fiber_grid.shape, dtype=np.complex128)
        fhat[np.ix_(*dst, *y_slots)] = scale * block
        fibers[theta] = Field(fiber_grid, fhat, SPECTRAL)
    return FiberBundle(grid, fiber_grid, fibers)


def floquet_inverse(b: FiberBundle) -> Field:
    """Reassemble the supercell field; errors if a fiber is missing."""
    grid = b.parent
    scale = float(grid.L**grid.m)
    maps = [_axis_maps(grid, j) for j in range(grid.m)]
    y_slots = [np.arange(grid.N[j]) for j in range(grid.m, grid.d)]
    uhat = np.empty(grid.shape, dtype=np.complex128)
    for theta in product(range(grid.L), repeat=grid.m):
        if theta not in b.fibers:
            raise GridError(f"bundle is missing the fiber theta={theta}")
        fhat = spectral(b.fibers[theta]).data
        src = [maps[j][theta[j]][0] for j in range(grid.m)]
        dst = [maps[j][theta[j]][1] for j in range(grid.m)]
        uhat[np.ix_(*src, *y_slots)] = fhat[np.ix_(*dst, *y_slots)] / scale
    return Field(grid, uhat, SPECTRAL)


def floquet_forward_direct(u: Field) -> FiberBundle:
    """Physical-space direct sum over cell translates (the test oracle)."""
    grid = u.grid
    fiber_grid = grid.fiber_grid()
    vals = physical(u).data
    # reshape each Euclidean axis N -> (L, M): index p = c*M + p'
    shaped = vals.reshape(
        tuple(s for j in range(grid.m) for s in (grid.L, grid.N[j] // grid.L))
        + grid.N[grid.m :]
    )
    # move the L cell axes up front
    cell_axes = tuple(2 * j for j in range(grid.m))
    shaped = np.moveaxis(shaped, cell_axes, tuple(range(grid.m)))
    fibers = {}
    for theta in product(range(grid.L), repeat=grid.m):
        acc = np.zeros(fiber_grid.shape, dtype=np.complex128)
        alpha = np.asarray(theta, dtype=float) / grid.L
        for cells in product(range(grid.L), repeat=grid.m):
            w = np.exp(2j * np.pi * float(np.dot(alpha, cells)))
            acc = acc + w * shaped[cells]
        for j in range(grid.m):
            xp = fiber_grid.coords1d(j)
            acc = acc * fiber_grid._bcast(np.exp(1j * alpha[j] * xp), j)
        fibers[theta] = Field(fiber_grid, acc, "physical")
    return FiberBundle(grid, fiber_grid, fibers)


def bundle_norm_sq(b: FiberBundle, weight: np.ndarray | None = None) -> float:
    """L^{-m} sum_alpha ||P_alpha u||^2, optionally with a physical weight."""
    grid = b.parent
    total = 0.0
    for f in b.fibers.values():
        if weight is None:
            total += l2_norm(f) ** 2
        else:
            p = physical(f)
            total += float(np.sum(weight * np.abs(p.data) ** 2)) * b.fiber_grid.dvol
    return total / grid.L**grid.m


def fiber_commutes_with_flow(u: Field, t: float) -> float:
    """max_alpha || P_alpha(e^{itD} u) - e^{itH_alpha}(P_alpha u) ||_{L2}."""
    before = floquet_forward(linear_propagate(u, t))
    after = floquet_forward(u)
    worst = 0.0
    for q in before.quasimomenta():
        lhs = before.fiber(q)
        rhs = twisted_propagate(after.fiber(q), q.alpha, t)
        worst = max(worst, l2_norm(Field(lhs.grid, lhs.data - spectral(rhs).data, SPECTRAL)))
    return worst


# ---------------------------------------------------------------------------
# stationary (resolvent) estimate experiments
# ---------------------------------------------------------------------------


@dataclass
class EigenspaceRow:
    lam: float
    dim: int
    worst_ratio: float
    running_max: float


@dataclass
class ProbeRow:
    lam: float
    ratio: float


@dataclass
class ResolventReport:
    eigen_rows: list[EigenspaceRow]
    probe_rows: list[ProbeRow]

    @property
    def empirical_constant(self) -> float:
        return max((r.worst_ratio for r in self.eigen_rows), default=0.0)


def lattice_eigenspaces(grid: WaveguideGrid, cap: float) -> dict[int, list[tuple[int, ...]]]:
    """Group lattice points by |xi|^2 <= cap; keys are L^2 |xi|^2 (exact integers)."""
    L2 = grid.L**2
    spaces: dict[int, list[tuple[int, ...]]] = {}
    ranges = []
    for j in range(grid.d):
        kap = np.fft.fftfreq(grid.N[j], d=1.0 / grid.N[j]).astype(int)
        ranges.append(sorted(kap))
    for mode in product(*ranges):
        key = sum(k * k for k in mode[: grid.m]) + L2 * sum(k * k for k in mode[grid.m :])
        if key <= cap * L2:
            spaces.setdefault(key, []).append(mode)
    return spaces


def _mode_values(grid: WaveguideGrid, mode: tuple[int, ...]) -> np.ndarray:
    out = np.ones(grid.shape, dtype=np.complex128)
    for j, kap in enumerate(mode):
        xi = kap / grid.L if j < grid.m else float(kap)
        out = out * grid._bcast(np.exp(1j * xi * grid.coords1d(j)), j)
    return out


def eigenspace_worst_ratio(grid: WaveguideGrid, region: ControlRegion, modes) -> float:
    """max ||u|| / ||u||_{L2(Omega)} over the span of the given modes.

    The lattice exponentials are orthonormal (up to the volume factor), so
    the worst ratio is sqrt(vol / lambda_min(A)) with A the restriction-to-
    Omega mass matrix in that basis.
    """
    ind = region.indicator(grid).astype(bool)
    dim = len(modes)
    cols = np.stack([_mode_values(grid, m)[ind] for m in modes], axis=1)
    A = grid.dvol * (cols.conj().T @ cols)
    lam_min = float(scipy.linalg.eigh(A, eigvals_only=True, subset_by_index=[0, 0])[0])
    if lam_min <= 1e-14 * grid.volume:
        return float("inf")
    return float(np.sqrt(grid.volume / lam_min))


def resolvent_ratio(
    grid: WaveguideGrid,
    region: ControlRegion,
    eig_cap: float,
    nprobes: int = 20,
    seed: int = 0,
) -> ResolventReport:
    """Empirical constants for the stationary estimate
    ||u|| <= C (||(Delta - lam) u|| + ||u||_{L2(Omega)}).

    Family (a): per lattice eigenvalue lam = -|xi|^2 up to the cap, the exact
    worst eigenspace ratio (f = 0).  Family (b): random band-limited u with
    lam strictly between eigenvalues and f = (Delta - lam) u.
    """
    if region.grid_measure(grid) == 0.0:
        raise ValueError("control region contains no grid points at this resolution")
    spaces = lattice_eigenspaces(grid, eig_cap)
    rows = []
    running = 0.0
    for key in sorted(spaces):
        lam = -key / grid.L**2
        ratio = eigenspace_worst_ratio(grid, region, spaces[key])
        running = max(running, ratio)
        rows.append(EigenspaceRow(lam, len(spaces[key]), ratio, running))

    rng = np.random.default_rng(seed)
    ind = region.indicator(grid)
    eigvals = sorted(set(k / grid.L**2 for k in spaces))
    probes = []
    for _ in range(nprobes):
        u = random_field(grid, rng, decay=1.0)
        i = int(rng.integers(0, len(eigvals) - 1))
        lam = -(0.5 * (eigvals[i] + eigvals[i + 1]))
        f = apply_multiplier(u, (-grid.abs2_xi - lam).astype(np.complex128))
        up = physical(u)
        u_omega = float(np.sqrt(np.sum(ind * np.abs(up.data) ** 2) * grid.dvol))
        probes.append(ProbeRow(lam, l2_norm(u) / (l2_norm(f) + u_omega)))
    return ResolventReport(rows, probes)
