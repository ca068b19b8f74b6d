"""Discrete waveguide geometry and Fourier calculus.

A supercell grid covers [0, 2*pi*L)^m x [0, 2*pi)^n with N[j] equispaced
points per direction.  The frequency lattice is (1/L)Z^m x Z^n, truncated
symmetrically per direction with the Nyquist mode assigned to the negative
side (numpy fftfreq order).

Normalization convention (fixed here, tested in tests/test_grid.py):

* spectral values are Fourier *coefficients*: the forward transform carries
  the 1/volume factor,

      F(xi) = (1/vol) * sum_p f(z_p) exp(-i z_p . xi) * dV,
      f(z)  = sum_xi F(xi) exp(+i z . xi),

  so a pure mode exp(i z . xi0) has a single coefficient 1 at xi0;
* L2 inner product: <f, g> = vol * sum_xi F(xi) conj(G(xi))
                           = dV * sum_p f(z_p) conj(g(z_p)),
  linear in the first slot;
* Sobolev weight: <xi>^2 = 1 + |xi|^2, ||f||_{H^s}^2 = vol * sum <xi>^{2s} |F|^2.

All operations are pure: input fields are never mutated, reductions use
numpy's pairwise summation, so results do not depend on thread count.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi

PHYSICAL = "physical"
SPECTRAL = "spectral"


class GridError(ValueError):
    pass


class RepresentationError(ValueError):
    """Raised when a field's representation tag does not match the operation."""


@dataclass(frozen=True)
class WaveguideGrid:
    """Geometry of the 2*pi*L supercell times the unit torus.

    m Euclidean directions (circumference 2*pi*L each), n periodic
    directions (circumference 2*pi each), N[j] points per direction.
    """

    m: int
    n: int
    L: int
    N: tuple[int, ...]

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise GridError(f"need m >= 1 and n >= 1, got m={self.m}, n={self.n}")
        if int(self.L) != self.L or self.L < 1:
            raise GridError(f"L must be a positive integer, got {self.L}")
        N = tuple(int(v) for v in self.N)
        object.__setattr__(self, "N", N)
        if len(N) != self.m + self.n:
            raise GridError(f"N must have m+n={self.m + self.n} entries, got {len(N)}")
        for j, nj in enumerate(N):
            if nj < 4 or nj % 2 != 0:
                raise GridError(f"N[{j}]={nj}: every N entry must be even and >= 4")

    @property
    def d(self) -> int:
        return self.m + self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return self.N

    @property
    def npoints(self) -> int:
        return int(np.prod(self.N))

    def length(self, axis: int) -> float:
        return TWO_PI * self.L if axis < self.m else TWO_PI

    @property
    def volume(self) -> float:
        return (TWO_PI * self.L) ** self.m * TWO_PI**self.n

    @property
    def dvol(self) -> float:
        return self.volume / self.npoints

    def spacing(self, axis: int) -> float:
        return self.length(axis) / self.N[axis]

    def coords1d(self, axis: int) -> np.ndarray:
        return self.spacing(axis) * np.arange(self.N[axis])

    def xi1d(self, axis: int) -> np.ndarray:
        """Frequencies along one axis, fftfreq ordered (Nyquist negative)."""
        kappa = np.fft.fftfreq(self.N[axis], d=1.0 / self.N[axis])
        return kappa / self.L if axis < self.m else kappa

    def _bcast(self, arr: np.ndarray, axis: int) -> np.ndarray:
        shape = [1] * self.d
        shape[axis] = self.N[axis]
        return arr.reshape(shape)

    @cached_property
    def abs2_xi(self) -> np.ndarray:
        """|xi|^2 on the full lattice, broadcast to the grid shape."""
        out = np.zeros(self.N)
        for j in range(self.d):
            out = out + self._bcast(self.xi1d(j) ** 2, j)
        return out

    def japanese_bracket(self, order: float) -> np.ndarray:
        """<xi>^order = (1 + |xi|^2)^(order/2)."""
        return (1.0 + self.abs2_xi) ** (order / 2.0)

    def fiber_grid(self) -> "WaveguideGrid":
        """The unit-torus grid of one supercell copy (L=1, N/L Euclidean points)."""
        for j in range(self.m):
            if self.N[j] % self.L != 0:
                raise GridError(
                    f"N[{j}]={self.N[j]} not divisible by L={self.L}; "
                    "Euclidean point counts must split evenly across cells"
                )
        N_fiber = tuple(self.N[j] // self.L for j in range(self.m)) + self.N[self.m :]
        return WaveguideGrid(self.m, self.n, 1, N_fiber)


@dataclass(frozen=True)
class SobolevIndex:
    """Regularity exponent s (may be negative); weight <xi>^{2s}."""

    s: float

    def __post_init__(self):
        if not np.isfinite(self.s):
            raise ValueError(f"Sobolev exponent must be finite, got {self.s}")


@dataclass(frozen=True)
class Field:
    """Complex scalar state on a grid, in physical or spectral representation."""

    grid: WaveguideGrid
    data: np.ndarray
    rep: str = PHYSICAL

    def __post_init__(self):
        if self.rep not in (PHYSICAL, SPECTRAL):
            raise RepresentationError(f"unknown representation tag {self.rep!r}")
        data = np.asarray(self.data, dtype=np.complex128)
        if data.shape != self.grid.shape:
            raise GridError(f"data shape {data.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "data", data)

    def copy(self) -> "Field":
        return Field(self.grid, self.data.copy(), self.rep)


def zero_field(grid: WaveguideGrid, rep: str = SPECTRAL) -> Field:
    return Field(grid, np.zeros(grid.shape, dtype=np.complex128), rep)


def constant_field(grid: WaveguideGrid, value: complex) -> Field:
    return Field(grid, np.full(grid.shape, value, dtype=np.complex128), PHYSICAL)


def mode_field(grid: WaveguideGrid, mode: tuple[int, ...], amplitude: complex = 1.0) -> Field:
    """The pure mode amplitude * exp(i z . xi) with xi = mode/L on Euclidean axes.

    `mode` is given in integer lattice units kappa (xi = kappa/L Euclidean,
    xi = kappa periodic), each entry within the symmetric truncation.
    """
    data = np.zeros(grid.shape, dtype=np.complex128)
    idx = []
    for j, kap in enumerate(mode):
        nj = grid.N[j]
        if not -nj // 2 <= kap < nj // 2:
            raise GridError(f"mode index {kap} outside lattice along axis {j}")
        idx.append(kap % nj)
    data[tuple(idx)] = amplitude
    return Field(grid, data, SPECTRAL)


def _check_same_grid(f: Field, g: Field):
    if f.grid != g.grid:
        raise GridError("fields live on different grids")


def to_spectral(f: Field) -> Field:
    """Forward transform; errors if the field is already spectral."""
    if f.rep != PHYSICAL:
        raise RepresentationError("to_spectral expects a physical-representation field")
    coeffs = np.fft.fftn(f.data) / f.grid.npoints
    return Field(f.grid, coeffs, SPECTRAL)


def to_physical(F: Field) -> Field:
    """Inverse transform; errors if the field is already physical."""
    if F.rep != SPECTRAL:
        raise RepresentationError("to_physical expects a spectral-representation field")
    vals = np.fft.ifftn(F.data) * F.grid.npoints
    return Field(F.grid, vals, PHYSICAL)


def spectral(f: Field) -> Field:
    """Spectral view of a field, converting if necessary."""
    return f if f.rep == SPECTRAL else to_spectral(f)


def physical(f: Field) -> Field:
    """Physical view of a field, converting if necessary."""
    return f if f.rep == PHYSICAL else to_physical(f)


def _resolve_symbol(grid: WaveguideGrid, symbol) -> np.ndarray:
    if callable(symbol):
        xi = [grid._bcast(grid.xi1d(j), j) for j in range(grid.d)]
        sym = np.asarray(symbol(*xi), dtype=np.complex128)
        sym = np.broadcast_to(sym, grid.shape)
    else:
        sym = np.broadcast_to(np.asarray(symbol, dtype=np.complex128), grid.shape)
    if not np.all(np.isfinite(sym)):
        bad = np.argwhere(~np.isfinite(sym))[0]
        xi_bad = tuple(float(grid.xi1d(j)[bad[j]]) for j in range(grid.d))
        raise ValueError(f"multiplier symbol is not finite at xi={xi_bad}")
    return sym


def apply_multiplier(f: Field, symbol) -> Field:
    """Diagonal Fourier multiplier.

    `symbol` is either an array over the lattice (grid shape, fftfreq order)
    or a callable acting on the broadcast frequency arrays xi_0..xi_{d-1}.
    Physical input is transformed, multiplied, transformed back.
    """
    sym = _resolve_symbol(f.grid, symbol)
    F = spectral(f)
    out = Field(f.grid, F.data * sym, SPECTRAL)
    return to_physical(out) if f.rep == PHYSICAL else out


def l2_inner(f: Field, g: Field) -> complex:
    """<f, g>_{L2}, linear in f, conjugate in g.

    This unweighted pairing is also the H^s--H^{-s} duality pairing.
    """
    _check_same_grid(f, g)
    if f.rep == PHYSICAL and g.rep == PHYSICAL:
        return f.grid.dvol * complex(np.vdot(g.data, f.data))
    F, G = spectral(f), spectral(g)
    return f.grid.volume * complex(np.vdot(G.data, F.data))


def sobolev_inner(f: Field, g: Field, s: SobolevIndex | float) -> complex:
    _check_same_grid(f, g)
    sval = s.s if isinstance(s, SobolevIndex) else float(s)
    w = f.grid.japanese_bracket(2.0 * sval)
    F, G = spectral(f), spectral(g)
    return f.grid.volume * complex(np.vdot(G.data, w * F.data))


def sobolev_norm(f: Field, s: SobolevIndex | float = 0.0) -> float:
    sval = s.s if isinstance(s, SobolevIndex) else float(s)
    w = f.grid.japanese_bracket(2.0 * sval)
    F = spectral(f)
    return float(np.sqrt(f.grid.volume * np.sum(w * np.abs(F.data) ** 2)))


def l2_norm(f: Field) -> float:
    return sobolev_norm(f, 0.0)


def translate(f: Field, theta) -> Field:
    """tau_theta f(z) = f(z + theta), exact for band-limited fields."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (f.grid.d,):
        raise GridError(f"theta must have length d={f.grid.d}")
    phase = np.ones(f.grid.shape, dtype=np.complex128)
    for j in range(f.grid.d):
        phase = phase * f.grid._bcast(np.exp(1j * theta[j] * f.grid.xi1d(j)), j)
    return apply_multiplier(f, phase)


def bessel_potential(f: Field, order: float) -> Field:
    """(1 - Laplacian)^(order/2): multiplier <xi>^order.

    For the control form (1-Delta)^{-s} pass order = -2*s.
    """
    return apply_multiplier(f, f.grid.japanese_bracket(order).astype(np.complex128))


def field_conj(f: Field) -> Field:
    """Pointwise complex conjugate (in physical space)."""
    p = physical(f)
    out = Field(f.grid, np.conj(p.data), PHYSICAL)
    return spectral(out) if f.rep == SPECTRAL else out


def random_field(
    grid: WaveguideGrid,
    rng: np.random.Generator,
    decay: float = 2.0,
    band: int | None = None,
    rep: str = SPECTRAL,
) -> Field:
    """Random field with spectrally decaying coefficients <xi>^{-decay}.

    The Nyquist planes are zeroed: their frequency branch on an even grid is
    convention-dependent, so identities involving shifted or twisted lattices
    are only well posed away from them.  With `band` set, coefficients are
    restricted to max_j |kappa_j| <= band (integer lattice units).
    """
    coeffs = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    coeffs *= grid.japanese_bracket(-2.0 * decay)
    for j in range(grid.d):
        sl = [slice(None)] * grid.d
        sl[j] = grid.N[j] // 2
        coeffs[tuple(sl)] = 0.0
    if band is not None:
        for j in range(grid.d):
            kappa = np.fft.fftfreq(grid.N[j], d=1.0 / grid.N[j])
            mask = np.abs(kappa) <= band
            coeffs *= grid._bcast(mask.astype(float), j)
    out = Field(grid, coeffs, SPECTRAL)
    return to_physical(out) if rep == PHYSICAL else out
