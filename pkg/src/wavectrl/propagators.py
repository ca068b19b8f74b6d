"""Time evolution: exact linear flow, twisted fiber flow, and a
time-reversible Strang splitting for the cubic equation with a source.

Conventions:

* linear flow exp(i t Delta): spectral phase exp(-i t |xi|^2);
* twisted flow exp(i t H_alpha), H_alpha = (d_x - i alpha)^2 + Delta_y,
  on a unit-torus fiber grid: phase exp(-i t (|k* - alpha|^2 + |l|^2)).
  The Euclidean frequency k* is the representative of the stored mode with
  k* - alpha in [-M/2, M/2): the symmetric truncation of the alpha-shifted
  lattice.  This is the branch induced by the supercell's symmetric lattice,
  so the flow intertwines exactly with the supercell flow under the
  cell decomposition; only the Nyquist slot is affected, and only for
  alpha != 0.
* cubic stage is the exact pointwise phase u -> u exp(i eps |u|^2 dt);
  the source enters by symmetric midpoint half-increments, which keeps the
  step time-symmetric and makes the epsilon=0 limit an exact composite
  midpoint Duhamel sum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import (
    PHYSICAL,
    SPECTRAL,
    Field,
    GridError,
    WaveguideGrid,
    bessel_potential,
    l2_norm,
    physical,
    sobolev_norm,
    spectral,
    zero_field,
)
from .regions import CutoffChi, TimeCutoff, chi_multiply


class BlowUpError(RuntimeError):
    def __init__(self, t: float, last_good=None):
        super().__init__(f"non-finite values in the state at t={t:.6g}")
        self.t = t
        self.last_good = last_good


def linear_propagate(f: Field, t: float) -> Field:
    """exp(i t Delta) f: unitary in every H^s, exact group law."""
    phase = np.exp(-1j * t * f.grid.abs2_xi)
    F = spectral(f)
    out = Field(f.grid, F.data * phase, SPECTRAL)
    return physical(out) if f.rep == PHYSICAL else out


def twisted_frequencies(grid: WaveguideGrid, alpha: np.ndarray) -> list[np.ndarray]:
    """Per-Euclidean-axis shifted frequencies k* with k* - alpha in [-M/2, M/2)."""
    out = []
    for j in range(grid.m):
        k = grid.xi1d(j)  # L == 1 on fibers: integers, Nyquist negative
        M = grid.N[j]
        kstar = np.where(k - alpha[j] < -M / 2.0, k + M, k)
        out.append(kstar)
    return out


def twisted_propagate(f: Field, alpha, t: float) -> Field:
    """exp(i t H_alpha) f on a unit-torus fiber grid (grid.L == 1)."""
    grid = f.grid
    if grid.L != 1:
        raise GridError("twisted_propagate expects a fiber grid (L == 1)")
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if alpha.shape != (grid.m,):
        raise GridError(f"alpha must have length m={grid.m}")
    if np.any(alpha < 0.0) or np.any(alpha >= 1.0):
        warnings.warn("quasi-momentum outside [0,1)^m reduced mod 1", stacklevel=2)
        alpha = np.mod(alpha, 1.0)
    sym = np.zeros(grid.shape)
    for j, kstar in enumerate(twisted_frequencies(grid, alpha)):
        sym = sym + grid._bcast((kstar - alpha[j]) ** 2, j)
    for j in range(grid.m, grid.d):
        sym = sym + grid._bcast(grid.xi1d(j) ** 2, j)
    F = spectral(f)
    out = Field(grid, F.data * np.exp(-1j * t * sym), SPECTRAL)
    return physical(out) if f.rep == PHYSICAL else out


@dataclass(frozen=True)
class NlsParams:
    """Cubic-equation parameters: i u_t + Delta u + epsilon |u|^2 u = source.

    epsilon is +1 (focusing), -1 (defocusing), or 0 to disable the cubic
    term (linear limit).  Negative dt integrates backward.  The 2/3-rule
    mask is applied around the nonlinear stage when dealias is on.
    """

    epsilon: float
    dt: float
    dealias: bool = True

    def __post_init__(self):
        if self.epsilon not in (-1.0, 0.0, 1.0):
            raise ValueError(f"epsilon must be -1, 0 or +1, got {self.epsilon}")
        if self.dt == 0.0:
            raise ValueError("dt must be nonzero")


class SourceSchedule:
    """Deterministic time-indexed source field; subclasses implement at(t)."""

    def at(self, t: float) -> Field:
        raise NotImplementedError


class ZeroSource(SourceSchedule):
    def __init__(self, grid: WaveguideGrid):
        self._zero = zero_field(grid, SPECTRAL)

    def at(self, t: float) -> Field:
        return self._zero


class CallableSource(SourceSchedule):
    def __init__(self, fn):
        self._fn = fn

    def at(self, t: float) -> Field:
        return self._fn(t)


class HumControlSource(SourceSchedule):
    """Theorem-4 control form evaluated from the HUM multiplier w0:

    source(t) = phi(t) chi (1-Delta)^{-s} [ phi(t) chi (i exp(i t Delta) w0) ].
    """

    def __init__(self, w0: Field, chi: CutoffChi | None, phi: TimeCutoff | None, s: float):
        self.w0 = spectral(w0)
        self.chi = chi
        self.phi = phi
        self.s = float(s)

    def at(self, t: float) -> Field:
        phi_t = 1.0 if self.phi is None else float(self.phi(t))
        if phi_t == 0.0:
            return zero_field(self.w0.grid, SPECTRAL)
        g = linear_propagate(self.w0, t)
        g = Field(g.grid, 1j * phi_t * g.data, SPECTRAL)
        g = chi_multiply(self.chi, g)
        g = bessel_potential(g, -2.0 * self.s)
        g = chi_multiply(self.chi, g)
        return Field(g.grid, phi_t * g.data, SPECTRAL)


def dealias_mask(grid: WaveguideGrid) -> np.ndarray:
    """2/3-rule mask: keep |kappa_j| < N_j/3 in integer lattice units."""
    mask = np.ones(grid.shape)
    for j in range(grid.d):
        kappa = np.fft.fftfreq(grid.N[j], d=1.0 / grid.N[j])
        keep = np.abs(kappa) < grid.N[j] / 3.0
        mask = mask * grid._bcast(keep.astype(float), j)
    return mask


def _nonlinear_stage(
    uhat: np.ndarray,
    grid: WaveguideGrid,
    t_mid: float,
    dt: float,
    params: NlsParams,
    source: SourceSchedule,
    mask: np.ndarray | None,
) -> np.ndarray:
    src = spectral(source.at(t_mid)).data
    uhat = uhat - 0.5j * dt * src
    if params.epsilon != 0.0:
        u = np.fft.ifftn(uhat) * grid.npoints
        incr = np.fft.fftn(u * np.expm1(1j * params.epsilon * dt * np.abs(u) ** 2)) / grid.npoints
        if mask is not None:
            # dealias the multiplicative (cubic-and-higher) increment only;
            # linear content passes through untouched
            incr = incr * mask
        uhat = uhat + incr
    return uhat - 0.5j * dt * src


def nls_step(u: Field, t: float, params: NlsParams, source: SourceSchedule) -> Field:
    """One Strang step from t to t + params.dt."""
    dt = params.dt
    grid = u.grid
    mask = dealias_mask(grid) if (params.dealias and params.epsilon != 0.0) else None
    half = np.exp(-0.5j * dt * grid.abs2_xi)
    uhat = spectral(u).data * half
    uhat = _nonlinear_stage(uhat, grid, t + 0.5 * dt, dt, params, source, mask)
    uhat = uhat * half
    if not np.all(np.isfinite(uhat)):
        raise BlowUpError(t + dt)
    out = Field(grid, uhat, SPECTRAL)
    return physical(out) if u.rep == PHYSICAL else out


@dataclass
class Trajectory:
    times: np.ndarray
    fields: list[Field]
    diagnostics: list[dict]

    def at(self, t: float) -> Field:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"no checkpoint at t={t}")
        return self.fields[i]

    @property
    def final(self) -> Field:
        return self.fields[-1]


def _diag_row(t: float, f: Field) -> dict:
    p = physical(f)
    return {
        "t": float(t),
        "mass": l2_norm(f),
        "h1": sobolev_norm(f, 1.0),
        "max_abs": float(np.max(np.abs(p.data))),
    }


def nls_solve(
    u0: Field,
    t0: float,
    t1: float,
    params: NlsParams,
    source: SourceSchedule | None = None,
    checkpoints=None,
) -> Trajectory:
    """Compose nls_step from t0 to t1 (backward when t1 < t0).

    Checkpoint times must lie on the step grid; the step count is
    round(|t1-t0| / |params.dt|) so dt is matched in magnitude and its sign
    follows the integration direction.
    """
    if t0 == t1:
        raise ValueError("t0 and t1 must differ")
    span = t1 - t0
    nsteps = max(1, int(round(abs(span) / abs(params.dt))))
    dt = span / nsteps
    stepped = NlsParams(params.epsilon, dt, params.dealias)
    if source is None:
        source = ZeroSource(u0.grid)
    if checkpoints is None:
        checkpoints = [t1]
    idx = {}
    for tc in checkpoints:
        i = int(round((tc - t0) / dt))
        if not 0 <= i <= nsteps or abs(t0 + i * dt - tc) > 1e-9 * max(1.0, abs(span)):
            raise ValueError(f"checkpoint t={tc} not on the step grid of [{t0}, {t1}]")
        idx[i] = tc

    out_times, out_fields, diag = [], [], []
    u = spectral(u0)
    if 0 in idx:
        out_times.append(t0)
        out_fields.append(u)
        diag.append(_diag_row(t0, u))
    t = t0
    mask = dealias_mask(u.grid) if (params.dealias and params.epsilon != 0.0) else None
    half = np.exp(-0.5j * dt * u.grid.abs2_xi)
    uhat = u.data
    for k in range(1, nsteps + 1):
        v = uhat * half
        v = _nonlinear_stage(v, u.grid, t + 0.5 * dt, dt, stepped, source, mask)
        uhat = v * half
        t = t0 + k * dt
        if not np.all(np.isfinite(uhat)):
            last = Trajectory(np.asarray(out_times), out_fields, diag)
            raise BlowUpError(t, last_good=last)
        if k in idx:
            f = Field(u.grid, uhat.copy(), SPECTRAL)
            out_times.append(t)
            out_fields.append(f)
            diag.append(_diag_row(t, f))
    return Trajectory(np.asarray(out_times), out_fields, diag)


def duhamel_linear_solve(
    u0: Field,
    source: SourceSchedule,
    t: float,
    nodes: np.ndarray,
    weights: np.ndarray,
) -> Field:
    """Quadrature Duhamel solution of i u_t + Delta u = source at time t:

    u(t) = exp(i t Delta) [u0 - i * sum_j w_j exp(-i t_j Delta) source(t_j)]

    using the supplied nodes/weights on [0, t].
    """
    acc = spectral(u0).data.copy()
    for tj, wj in zip(nodes, weights):
        s = spectral(source.at(float(tj))).data
        acc = acc - 1j * wj * s * np.exp(1j * tj * u0.grid.abs2_xi)
    out = Field(u0.grid, acc * np.exp(-1j * t * u0.grid.abs2_xi), SPECTRAL)
    return out
