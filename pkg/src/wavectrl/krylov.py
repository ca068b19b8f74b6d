"""Matrix-free Krylov drivers on flat complex arrays.

Conjugate gradient for Hermitian positive operators and a shift-invert
Lanczos loop for the smallest eigenvalue (inner solves by CG).  All
reductions go through numpy's pairwise sums, so results are deterministic
and independent of thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class CGStagnation(RuntimeError):
    pass


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    relres: float
    converged: bool
    residuals: list[float] = field(default_factory=list)


def cg(apply_op, b: np.ndarray, x0: np.ndarray | None = None, rtol: float = 1e-10,
       maxiter: int = 2000) -> CGResult:
    """CG for Hermitian positive definite apply_op; plain l2 inner product.

    Raises CGStagnation on indefiniteness or a stalled residual, which the
    observability driver turns into a failure report rather than a crash.
    """
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), 0, 0.0, True, [0.0])
    x = np.zeros_like(b) if x0 is None else x0.astype(np.complex128).copy()
    r = b - apply_op(x) if x0 is not None else b.copy()
    p = r.copy()
    rs = float(np.vdot(r, r).real)
    hist = [np.sqrt(rs) / bnorm]
    best = hist[0]
    stalled = 0
    for it in range(1, maxiter + 1):
        ap = apply_op(p)
        pap = float(np.vdot(p, ap).real)
        if pap <= 0.0:
            raise CGStagnation(f"operator not positive definite at iteration {it} (pAp={pap:.3e})")
        alpha = rs / pap
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = float(np.vdot(r, r).real)
        rel = np.sqrt(rs_new) / bnorm
        hist.append(rel)
        if rel <= rtol:
            return CGResult(x, it, rel, True, hist)
        # ill-conditioned solves plateau for long stretches; only a hard
        # stall (no halving of the best residual over many iterations near
        # the roundoff floor) counts as stagnation
        if rel < 0.5 * best:
            best = rel
            stalled = 0
        else:
            stalled += 1
            if stalled >= 2000 and best > 0.9 * hist[0]:
                raise CGStagnation(f"residual stuck at {rel:.3e} after {it} iterations")
        p = r + (rs_new / rs) * p
        rs = rs_new
    return CGResult(x, maxiter, hist[-1], False, hist)


def power_norm_estimate(apply_op, n: int, seed: int = 0, iters: int = 10) -> float:
    """Operator-norm estimate by power iteration with a seeded start."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = apply_op(v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    return lam


@dataclass
class EigenResult:
    value: float
    vector: np.ndarray
    residual: float
    outer_iterations: int
    cg_iterations: int
    converged: bool


def smallest_eigenvalue_shift_invert(
    apply_op,
    n: int,
    norm_estimate: float,
    rtol: float = 1e-8,
    inner_rtol: float = 1e-11,
    inner_maxiter: int = 20000,
    max_outer: int = 40,
    seed: int = 0,
) -> EigenResult:
    """Smallest eigenvalue of a Hermitian positive operator.

    Lanczos on the inverse (shift 0) with full reorthogonalization; each
    inverse apply is a CG solve.  Stops when the Ritz residual
    ||A v - lam v|| <= rtol * norm_estimate.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    basis = [v]
    alphas: list[float] = []
    betas: list[float] = []
    total_cg = 0
    best: tuple[float, np.ndarray, float] | None = None
    for it in range(1, max_outer + 1):
        res = cg(apply_op, basis[-1], rtol=inner_rtol, maxiter=inner_maxiter)
        total_cg += res.iterations
        w = res.x
        alpha = float(np.vdot(basis[-1], w).real)
        w = w - alpha * basis[-1]
        if len(basis) > 1:
            w = w - betas[-1] * basis[-2]
        # full reorthogonalization keeps the small tridiagonal honest
        for q in basis:
            w = w - np.vdot(q, w) * q
        alphas.append(alpha)
        beta = float(np.linalg.norm(w))
        evals, evecs = scipy.linalg.eigh_tridiagonal(np.asarray(alphas), np.asarray(betas))
        mu = float(evals[-1])
        y = evecs[:, -1]
        ritz = np.zeros(n, dtype=np.complex128)
        for c, q in zip(y, basis):
            ritz += c * q
        ritz /= np.linalg.norm(ritz)
        lam = 1.0 / mu
        resid = float(np.linalg.norm(apply_op(ritz) - lam * ritz))
        if best is None or resid < best[2]:
            best = (lam, ritz, resid)
        if resid <= rtol * norm_estimate:
            return EigenResult(lam, ritz, resid, it, total_cg, True)
        if beta <= 1e-14 * max(abs(a) for a in alphas):
            break
        betas.append(beta)
        basis.append(w / beta)
    lam, ritz, resid = best
    return EigenResult(lam, ritz, resid, len(alphas), total_cg, False)
