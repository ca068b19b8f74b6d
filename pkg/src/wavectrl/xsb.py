"""Discrete dispersive space-time norms on a periodic time window.

A SpaceTimeField samples u(t, z) on nt equispaced times over a period
T_per (treated periodically) times a waveguide grid.  Its coefficients use
the basis exp(i z . xi) exp(-i tau t) with tau on the lattice
(2 pi / T_per) Z, so a free solution exp(itD) exp(i z . xi0) sits exactly at
tau = |xi0|^2: the dispersive weight <tau - |xi|^2> equals <0> = 1 on the
paraboloid.  The norm is

    ||u||_{s,b}^2 = vol * T_per * sum <tau - |xi|^2>^{2b} <xi>^{2s} |c|^2.

The inequality constants of the trilinear and gain-of-integration
estimates are unknowable, so those are stress-tested (bounded-ratio
reports); what is asserted exactly is per-mode algebra and agreement with
direct-convolution oracles on tiny grids.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .grid import Field, GridError, WaveguideGrid, spectral
from .propagators import linear_propagate
from .regions import smooth_ramp, time_profile

ST_PHYSICAL = "physical"
ST_SPECTRAL = "spectral"


@dataclass(frozen=True)
class XsbParams:
    s: float = 1.0
    b: float = 0.55
    bprime: float = 0.35
    r: float = 1.0

    def validate_pair(self):
        if not (0.0 < self.bprime < 0.5 < self.b and self.b + self.bprime <= 1.0):
            raise ValueError(
                f"need 0 < b' < 1/2 < b and b + b' <= 1, got b={self.b}, b'={self.bprime}"
            )


@dataclass(frozen=True)
class SpaceTimeField:
    """Complex samples over (time, space...) with a periodic time window."""

    grid: WaveguideGrid
    t_period: float
    values: np.ndarray
    rep: str = ST_PHYSICAL

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.ndim != self.grid.d + 1 or vals.shape[1:] != self.grid.shape:
            raise GridError(f"values shape {vals.shape} != (nt, *grid.shape)")
        if vals.shape[0] < 8 or vals.shape[0] % 2 != 0:
            raise GridError("nt must be even and >= 8")
        if self.t_period <= 0:
            raise GridError("t_period must be positive")
        object.__setattr__(self, "values", vals)

    @property
    def nt(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return (self.t_period / self.nt) * np.arange(self.nt)

    def tau_lattice(self) -> np.ndarray:
        return (2.0 * np.pi / self.t_period) * np.fft.fftfreq(self.nt, d=1.0 / self.nt)


def st_spectral(u: SpaceTimeField) -> SpaceTimeField:
    """Coefficients for the exp(i z xi) exp(-i tau t) basis."""
    if u.rep == ST_SPECTRAL:
        return u
    c = np.fft.fftn(u.values, axes=tuple(range(1, u.grid.d + 1))) / u.grid.npoints
    c = np.fft.ifft(c, axis=0)
    return SpaceTimeField(u.grid, u.t_period, c, ST_SPECTRAL)


def st_physical(u: SpaceTimeField) -> SpaceTimeField:
    if u.rep == ST_PHYSICAL:
        return u
    v = np.fft.fft(u.values, axis=0)
    v = np.fft.ifftn(v, axes=tuple(range(1, u.grid.d + 1))) * u.grid.npoints
    return SpaceTimeField(u.grid, u.t_period, v, ST_PHYSICAL)


def dispersive_weight(u: SpaceTimeField, s: float, b: float) -> np.ndarray:
    """<tau - |xi|^2>^{2b} <xi>^{2s} on the space-time lattice."""
    tau = u.tau_lattice().reshape((-1,) + (1,) * u.grid.d)
    gap = 1.0 + (tau - u.grid.abs2_xi) ** 2
    return gap**b * u.grid.japanese_bracket(2.0 * s)


def xsb_norm(u: SpaceTimeField, s: float, b: float) -> float:
    c = st_spectral(u)
    w = dispersive_weight(u, s, b)
    total = float(np.sum(w * np.abs(c.values) ** 2))
    return float(np.sqrt(u.grid.volume * u.t_period * total))


def st_l2_norm(u: SpaceTimeField) -> float:
    return xsb_norm(u, 0.0, 0.0)


def from_space_spectral_samples(
    grid: WaveguideGrid, t_period: float, samples: np.ndarray
) -> SpaceTimeField:
    """Space-time coefficients from per-time space-spectral samples."""
    return SpaceTimeField(grid, t_period, np.fft.ifft(samples, axis=0), ST_SPECTRAL)


def sample_free_solution(u0: Field, t_period: float, nt: int) -> SpaceTimeField:
    """e^{itD} u0 sampled on the periodic time window."""
    grid = u0.grid
    times = (t_period / nt) * np.arange(nt)
    vals = np.empty((nt,) + grid.shape, dtype=np.complex128)
    what = spectral(u0).data
    for i, t in enumerate(times):
        vals[i] = what * np.exp(-1j * t * grid.abs2_xi)
    return from_space_spectral_samples(grid, t_period, vals)


def st_mode(grid: WaveguideGrid, t_period: float, nt: int, mode, tau_index: int,
            amplitude: complex = 1.0) -> SpaceTimeField:
    """Pure space-time mode amplitude e^{i z xi} e^{-i tau t} (lattice indices)."""
    vals = np.zeros((nt,) + grid.shape, dtype=np.complex128)
    idx = [tau_index % nt]
    for j, kap in enumerate(mode):
        idx.append(int(kap) % grid.N[j])
    vals[tuple(idx)] = amplitude
    return SpaceTimeField(grid, t_period, vals, ST_SPECTRAL)


def random_st_field(
    grid: WaveguideGrid,
    t_period: float,
    nt: int,
    rng: np.random.Generator,
    band_space: int,
    band_time: int,
) -> SpaceTimeField:
    """Random field with coefficients supported on |kappa_j| <= band_space,
    |tau index| <= band_time."""
    c = rng.standard_normal((nt,) + grid.shape) + 1j * rng.standard_normal((nt,) + grid.shape)
    kt = np.fft.fftfreq(nt, d=1.0 / nt)
    mask_t = (np.abs(kt) <= band_time).astype(float).reshape((-1,) + (1,) * grid.d)
    c = c * mask_t
    for j in range(grid.d):
        kap = np.fft.fftfreq(grid.N[j], d=1.0 / grid.N[j])
        mask = (np.abs(kap) <= band_space).astype(float)
        shape = [1] * (grid.d + 1)
        shape[j + 1] = grid.N[j]
        c = c * mask.reshape(shape)
    return SpaceTimeField(grid, t_period, c, ST_SPECTRAL)


def _check_cubic_band(u: SpaceTimeField, band_space: int, band_time: int):
    for j in range(u.grid.d):
        if 3 * band_space >= u.grid.N[j] // 2:
            raise ValueError(
                f"band {band_space} too large: cubic products alias on axis {j} "
                f"(need 3*band < N/2 = {u.grid.N[j] // 2})"
            )
    if 3 * band_time >= u.nt // 2:
        raise ValueError(
            f"time band {band_time} too large: cubic products alias (need 3*band < nt/2)"
        )


def st_pointwise_cubic(*factors: SpaceTimeField, conj_last: bool = True) -> SpaceTimeField:
    """Pointwise product a * b * conj(c) (the cubic shape) on the grid."""
    a, b, c = (st_physical(f).values for f in factors)
    prod = a * b * (np.conj(c) if conj_last else c)
    return SpaceTimeField(factors[0].grid, factors[0].t_period, prod, ST_PHYSICAL)


@dataclass
class TrilinearSampleRow:
    sample: int
    band: int
    estimate: str
    lhs: float
    rhs: float
    ratio: float


@dataclass
class TrilinearReport:
    rows: list[TrilinearSampleRow]
    degenerate: int

    def max_ratio(self, estimate: str, band: Optional[int] = None) -> float:
        vals = [
            r.ratio
            for r in self.rows
            if r.estimate == estimate and (band is None or r.band == band)
        ]
        return max(vals) if vals else 0.0

    def median_ratio(self, estimate: str, band: Optional[int] = None) -> float:
        vals = [
            r.ratio
            for r in self.rows
            if r.estimate == estimate and (band is None or r.band == band)
        ]
        return float(np.median(vals)) if vals else 0.0


def trilinear_ratio(
    grid: WaveguideGrid,
    t_period: float,
    nt: int,
    params: XsbParams,
    bands: tuple[int, ...] = (1, 2),
    nsamples: int = 50,
    seed: int = 0,
) -> TrilinearReport:
    """LHS/RHS ratios for the five trilinear estimates over random
    band-limited samples (dealiased by construction: 3*band fits the lattice)."""
    params.validate_pair()
    s, b1, r = params.s, params.bprime, params.r
    rng = np.random.default_rng(seed)
    rows: list[TrilinearSampleRow] = []
    degenerate = 0
    for band in bands:
        bt = band
        for i in range(nsamples):
            u = random_st_field(grid, t_period, nt, rng, band, bt)
            _check_cubic_band(u, band, bt)
            v = random_st_field(grid, t_period, nt, rng, band, bt)
            a1 = random_st_field(grid, t_period, nt, rng, band, bt)
            a2 = random_st_field(grid, t_period, nt, rng, band, bt)
            if st_l2_norm(u) == 0.0:
                degenerate += 1
                continue
            cubic_u = st_pointwise_cubic(u, u, u)
            # (1) ||u|^2 u||_{r,-b'} <= C ||u||_{s,b'}^2 ||u||_{r,b'}
            lhs = xsb_norm(cubic_u, r, -b1)
            rhs = xsb_norm(u, s, b1) ** 2 * xsb_norm(u, r, b1)
            rows.append(TrilinearSampleRow(i, band, "cubic_r", lhs, rhs, lhs / rhs))
            # (2) ||u|^2 v||_{r,-b'}
            mixed = st_pointwise_cubic(u, v, u)
            lhs = xsb_norm(mixed, r, -b1)
            rhs = xsb_norm(u, s, b1) * xsb_norm(u, r, b1) * xsb_norm(v, r, b1)
            rows.append(TrilinearSampleRow(i, band, "cubic_mixed", lhs, rhs, lhs / rhs))
            # (3) Lipschitz difference form in (s, b')
            cubic_v = st_pointwise_cubic(v, v, v)
            diff = SpaceTimeField(
                grid, t_period, st_physical(cubic_u).values - st_physical(cubic_v).values
            )
            du = SpaceTimeField(grid, t_period, st_physical(u).values - st_physical(v).values)
            lhs = xsb_norm(diff, s, -b1)
            rhs = (xsb_norm(u, s, b1) ** 2 + xsb_norm(v, s, b1) ** 2) * xsb_norm(du, s, b1)
            if rhs > 0:
                rows.append(TrilinearSampleRow(i, band, "lipschitz", lhs, rhs, lhs / rhs))
            # (4) ||a1 conj(a2) u||_{s,-b'} with H^1 controls
            m1 = st_pointwise_cubic(a1, u, a2)
            lhs = xsb_norm(m1, s, -b1)
            rhs = xsb_norm(a1, 1.0, b1) * xsb_norm(a2, 1.0, b1) * xsb_norm(u, s, b1)
            rows.append(TrilinearSampleRow(i, band, "multiplier", lhs, rhs, lhs / rhs))
            # (5) |||a1|^2 u||_{s,-b'} with the compactness-friendly right side
            m2 = st_pointwise_cubic(a1, u, a1)
            lhs = xsb_norm(m2, s, -b1)
            rhs = xsb_norm(a1, 1.0, b1) * xsb_norm(a1, r, b1) * xsb_norm(u, s, b1)
            rows.append(TrilinearSampleRow(i, band, "multiplier_r", lhs, rhs, lhs / rhs))
    return TrilinearReport(rows, degenerate)


def cubic_coefficients_direct(u: SpaceTimeField) -> tuple[np.ndarray, list[np.ndarray]]:
    """Direct (no-FFT) convolution coefficients of |u|^2 u on the padded lattice.

    Returns (coefficients, index lattices per axis) where each axis lattice
    holds the integer frequency index of the padded array slots.  Oracle for
    the pointwise-product path on tiny grids.
    """
    c = st_spectral(u).values
    sizes = (u.nt,) + u.grid.shape
    ndim = c.ndim
    # conj(u): coefficients conj(c(-k)) on every axis
    cbar = np.conj(c[tuple(np.ix_(*[(-np.arange(n)) % n for n in sizes]))])

    half = [n // 2 for n in sizes]
    pad_sizes = [3 * n for n in sizes]
    lattices = [np.arange(-3 * h, 3 * h) for h in half]

    def to_padded(arr):
        out = np.zeros(pad_sizes, dtype=np.complex128)
        idx = [np.fft.fftfreq(n, d=1.0 / n).astype(int) + 3 * h for n, h in zip(sizes, half)]
        out[np.ix_(*idx)] = arr
        return out

    a = to_padded(c)
    b = to_padded(c)
    d = to_padded(cbar)

    def convolve(x, y):
        out = np.zeros(pad_sizes, dtype=np.complex128)
        nz = np.argwhere(y != 0)
        for flat in nz:
            shift = tuple(int(v) - 3 * h for v, h in zip(flat, half))
            rolled = x
            for ax, sh in enumerate(shift):
                rolled = np.roll(rolled, sh, axis=ax)
            out = out + y[tuple(flat)] * rolled
        return out

    return convolve(convolve(a, b), d), lattices


def xsb_norm_on_lattice(
    coeffs: np.ndarray,
    lattices: list[np.ndarray],
    grid: WaveguideGrid,
    t_period: float,
    s: float,
    b: float,
) -> float:
    """X^{s,b} norm from explicit padded-lattice coefficients (oracle path)."""
    tau = (2.0 * np.pi / t_period) * lattices[0]
    shape = [1] * coeffs.ndim
    shape[0] = len(tau)
    tau = tau.reshape(shape)
    abs2 = np.zeros(coeffs.shape)
    for j in range(grid.d):
        xi = lattices[j + 1].astype(float)
        xi = xi / grid.L if j < grid.m else xi
        sh = [1] * coeffs.ndim
        sh[j + 1] = len(xi)
        abs2 = abs2 + (xi**2).reshape(sh)
    bracket = (1.0 + abs2) ** s
    gap = (1.0 + (tau - abs2) ** 2) ** b
    total = float(np.sum(gap * bracket * np.abs(coeffs) ** 2))
    return float(np.sqrt(grid.volume * t_period * total))


# ---------------------------------------------------------------------------
# gain of integration
# ---------------------------------------------------------------------------


def time_sobolev_norm(values: np.ndarray, t_period: float, order: float) -> float:
    """H^order norm of a periodic time signal, <tau>^order weights."""
    nt = len(values)
    c = np.fft.ifft(values)  # coefficients for the e^{-i tau t} basis
    tau = (2.0 * np.pi / t_period) * np.fft.fftfreq(nt, d=1.0 / nt)
    w = (1.0 + tau**2) ** order
    return float(np.sqrt(t_period * np.sum(w * np.abs(c) ** 2)))


@dataclass
class GainRow:
    T: float
    omega: float
    ratio: float
    normalized: float


@dataclass
class GainReport:
    rows: list[GainRow]
    slope: float

    @property
    def max_normalized(self) -> float:
        return max(r.normalized for r in self.rows)


def gain_integration_scaling(
    params: XsbParams,
    t_period: float = 4.0,
    nt: int = 4096,
    t_sweep: tuple[float, ...] = (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125),
    cycles: float = 1.0,
) -> GainReport:
    """||Psi(t/T) int_0^t f||_{H^b} / ||f||_{H^{-b'}} over a dyadic T sweep,
    with oscillatory probes f = e^{i omega t}, omega ~ 2 pi cycles / T.

    The normalized column divides by T^{1-b-b'}; boundedness of that column
    as T -> 0 is the checkable content.  The fitted log-log slope of the raw
    ratio against T is reported.
    """
    params.validate_pair()
    b, bp = params.b, params.bprime
    times = (t_period / nt) * np.arange(nt)
    rows = []
    for T in t_sweep:
        if not 0.0 < T <= 1.0:
            raise ValueError("T sweep must lie in (0, 1]")
        k = max(1, int(round(cycles * t_period / T)))
        omega = (2.0 * np.pi / t_period) * k
        f = np.exp(1j * omega * times)
        integral = cumulative_trapezoid(f, times, initial=0.0)
        F = time_profile(times / T) * integral
        num = time_sobolev_norm(F, t_period, b)
        den = time_sobolev_norm(f, t_period, -bp)
        ratio = num / den
        rows.append(GainRow(T, omega, ratio, ratio / T ** (1.0 - b - bp)))
    ts = np.log([r.T for r in rows])
    rs = np.log([r.ratio for r in rows])
    slope = float(np.polyfit(ts, rs, 1)[0])
    return GainReport(rows, slope)


# ---------------------------------------------------------------------------
# restriction-norm upper bound
# ---------------------------------------------------------------------------


def extend_and_restrict_norm(
    fields: list[Field],
    sample_times: np.ndarray,
    T: float,
    t_period: float,
    nt: int,
    s: float,
    b: float,
    cutoff: str = "default",
    cutoff_width: Optional[float] = None,
) -> float:
    """Upper bound for the [0, T]-restriction norm via one smooth extension.

    The trajectory samples on [0, T] (which must land on the periodic time
    grid) are extended by the free flow from both endpoints, multiplied by a
    smooth time cutoff equal to 1 on [0, T], and measured globally.  This is
    an upper bound, never the infimum over extensions.  cutoff="ones"
    skips the cutoff (valid when the input is globally periodic already).
    """
    grid = fields[0].grid
    times = (t_period / nt) * np.arange(nt)
    vals = np.empty((nt,) + grid.shape, dtype=np.complex128)
    known = {}
    for f, tf in zip(fields, sample_times):
        i = int(round(tf / (t_period / nt)))
        if abs(times[i] - tf) > 1e-9 * max(1.0, t_period):
            raise ValueError(f"sample time {tf} not on the periodic grid")
        known[i] = spectral(f)
    i_last = max(known)
    u_end = known[i_last]
    u_start = known[min(known)]
    for i, t in enumerate(times):
        if i in known:
            vals[i] = known[i].data
        elif t > times[i_last]:
            mid = 0.5 * (times[i_last] + t_period)
            if t <= mid:
                vals[i] = spectral(linear_propagate(u_end, t - times[i_last])).data
            else:
                vals[i] = spectral(linear_propagate(u_start, t - t_period)).data
        else:
            raise ValueError("trajectory must cover [0, T] contiguously on the grid")
    if cutoff == "ones":
        window = np.ones(nt)
    else:
        width = cutoff_width if cutoff_width is not None else 0.25 * (t_period - T)
        if width <= 0 or T + width > t_period - width:
            raise ValueError("cutoff width must fit between T and the period end")
        # 1 on [0, T], down-ramp on [T, T+w], up-ramp on [T_per - w, T_per)
        # (the circle wraps back to t = 0 where the window is 1 again)
        down = smooth_ramp(((T + width) - times) / width)
        up = smooth_ramp((times - (t_period - width)) / width)
        window = np.where(times <= T, 1.0, np.maximum(down, up))
    st = from_space_spectral_samples(
        grid, t_period, vals * window.reshape((-1,) + (1,) * grid.d)
    )
    return xsb_norm(st, s, b)
