"""Experiment execution: wiring configs to module calls and persisting results.

Each run writes, under its output directory: result CSVs, binary field
dumps, and a manifest.json (config echo, version, timings, file checksums,
headline summary, pass/fail verdicts).  The manifest is written atomically
at the end.  CSV bytes depend only on the config and seed.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, apply_overrides, validate
from .control import (
    FixedPointConfig,
    HumSolveConfig,
    control_source,
    duality_check,
    exact_control,
    linear_control_trajectory,
    linear_null_control,
    nonlinear_null_control,
    v_equation_residual,
)
from .fieldio import dump_field, sha256_file, write_csv
from .floquet import resolvent_ratio
from .grid import Field, WaveguideGrid, l2_inner, l2_norm, random_field, sobolev_norm, spectral
from .observability import (
    converge_quadrature,
    eigenmode_observation_table,
    gramian_apply,
    make_gramian_spec,
    observability_constant,
    observability_constant_banded,
    quadrature_rule,
)
from .propagators import NlsParams, nls_solve
from .regions import ControlRegion, build_chi, build_phi
from .xsb import (
    XsbParams,
    cubic_coefficients_direct,
    gain_integration_scaling,
    random_st_field,
    st_pointwise_cubic,
    trilinear_ratio,
    xsb_norm,
    xsb_norm_on_lattice,
)


@dataclass
class RunOutcome:
    ok: bool
    failures: list[str]
    summary: dict
    files: list[str]


def build_grid(cfg: ExperimentConfig) -> WaveguideGrid:
    g = cfg.grid
    return WaveguideGrid(g["m"], g["n"], g["L"], tuple(g["N"]))


def build_region(cfg: ExperimentConfig) -> ControlRegion:
    r = cfg.region
    iv1 = tuple(tuple(tuple(iv) for iv in per) for per in r["intervals1"])
    iv2 = tuple(tuple(tuple(iv) for iv in per) for per in r["intervals2"])
    return ControlRegion(iv1, iv2, float(r["margin"]))


def region_id(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.region, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:10]


class _Stages:
    def __init__(self):
        self.rows = []
        self._t0 = None
        self._name = None

    def start(self, name: str):
        self._name, self._t0 = name, time.perf_counter()

    def stop(self):
        self.rows.append({"name": self._name, "seconds": time.perf_counter() - self._t0})


def _seeded_probes(grid, seed, count=3, decay=2.0, s_norm=None, scale=None):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        f = random_field(grid, rng, decay=decay)
        if scale is not None:
            cur = sobolev_norm(f, s_norm if s_norm is not None else 0.0)
            f = Field(grid, spectral(f).data * (scale / cur), "spectral")
        out.append(f)
    return out


# ---------------------------------------------------------------------------
# experiment implementations
# ---------------------------------------------------------------------------


def _run_observability(cfg: ExperimentConfig, outdir: Path, stages: _Stages) -> RunOutcome:
    failures = []
    grid = build_grid(cfg)
    region = build_region(cfg)
    T = float(cfg.time["T"])
    rule = cfg.time.get("rule", "gauss")
    opts = cfg.raw.get("observability", {})
    method = opts.get("method", "banded")
    band = int(opts.get("band", 16))

    stages.start("setup")
    chi = build_chi(region, grid)
    nodes, _ = quadrature_rule(T, cfg.time["nt"], rule)
    phi = build_phi(T, nodes)
    probes = _seeded_probes(grid, cfg.seed, decay=1.0, band=band)
    stages.stop()

    stages.start("quadrature-convergence")
    spec = converge_quadrature(grid, T, 0.0, chi, phi, probes, rule, nt0=cfg.time["nt"])
    stages.stop()

    stages.start("gramian-structure")
    u, v = probes[0], probes[1]
    gu, gv = gramian_apply(spec, u), gramian_apply(spec, v)
    sym = abs(l2_inner(gu, v) - l2_inner(u, gv)) / (l2_norm(u) * l2_norm(v))
    pos = min(float(np.real(l2_inner(gramian_apply(spec, p), p))) for p in probes)
    if sym > 1e-10:
        failures.append(f"Gramian symmetry defect {sym:.3e} > 1e-10")
    if pos < -1e-12:
        failures.append(f"Gramian positivity defect {pos:.3e} < -1e-12")
    table = eigenmode_observation_table(grid, chi, cap=25.0)
    min_obs = min(r["observed_mass"] for r in table)
    if min_obs <= 0.0:
        failures.append("an eigenmode is invisible to the observation (zero table row)")
    stages.stop()

    rows = []
    extremal_files = []
    summary = {"nt": spec.nt, "symmetry_defect": sym, "min_eigenmode_observation": min_obs,
               "method": method, "band": band}
    for label, weight in (("chi", None), ("sharp", region.indicator(grid))):
        stages.start(f"eigensolve-{label}")
        wspec = (
            spec
            if weight is None
            else make_gramian_spec(grid, T, 0.0, None, None, spec.nt, rule, chi_weight=weight)
        )
        if method == "banded":
            res = observability_constant_banded(wspec, band=band, seed=cfg.seed)
            rows.append(
                [T, region_id(cfg), 0.0, grid.N[0], grid.L, wspec.nt, label, band,
                 res.lambda_min, res.c_obs, res.residual_compressed, res.leakage_full,
                 res.norm_estimate]
            )
            if res.residual_compressed > 1e-8 * res.norm_estimate:
                failures.append(f"{label}: compressed eigensolve residual too large")
            extremal = res.extremal
            summary[f"c_obs_{label}"] = res.c_obs
            summary[f"lambda_min_{label}"] = res.lambda_min
            summary[f"leakage_{label}"] = res.leakage_full
        else:
            res = observability_constant(wspec, seed=cfg.seed)
            if res.failed:
                failures.append(f"{label}: {res.message}")
            elif not res.converged:
                failures.append(f"{label}: Ritz residual target not reached")
            rows.append(
                [T, region_id(cfg), 0.0, grid.N[0], grid.L, wspec.nt, label, -1,
                 res.lambda_min, res.c_obs, res.residual, float("nan"), res.norm_estimate]
            )
            extremal = res.extremal
            summary[f"c_obs_{label}"] = res.c_obs
            summary[f"lambda_min_{label}"] = res.lambda_min
        stages.stop()
        if extremal is not None:
            p = outdir / f"extremal_{label}.wgf"
            dump_field(extremal, p)
            extremal_files.append(str(p))

    csv_path = outdir / "observability.csv"
    write_csv(
        csv_path,
        ["T", "region", "s", "N0", "L", "nt", "weight", "band", "lambda_min", "c_obs",
         "residual", "leakage", "gramian_norm_est"],
        rows,
    )
    return RunOutcome(not failures, failures, summary, [str(csv_path)] + extremal_files)


def _run_stationary(cfg: ExperimentConfig, outdir: Path, stages: _Stages) -> RunOutcome:
    failures = []
    grid = build_grid(cfg)
    region = build_region(cfg)
    opts = cfg.raw.get("stationary", {})
    cap = float(opts.get("eig_cap", 100.0))
    nprobes = int(opts.get("nprobes", 20))

    stages.start("resolvent-ratios")
    report = resolvent_ratio(grid, region, cap, nprobes=nprobes, seed=cfg.seed)
    stages.stop()

    rows = [[r.lam, r.dim, r.worst_ratio, r.running_max] for r in report.eigen_rows]
    path_a = outdir / "stationary_eigenspaces.csv"
    write_csv(path_a, ["lambda", "dim", "worst_ratio", "empirical_C"], rows)
    path_b = outdir / "stationary_probes.csv"
    write_csv(path_b, ["lambda", "ratio"], [[r.lam, r.ratio] for r in report.probe_rows])
    worst = report.empirical_constant
    if not np.isfinite(worst):
        failures.append("eigenspace ratio is not finite (region misses an eigenspace)")
    summary = {
        "empirical_C": worst,
        "eigenvalues": len(report.eigen_rows),
        "probe_max": max((r.ratio for r in report.probe_rows), default=0.0),
    }
    return RunOutcome(not failures, failures, summary, [str(path_a), str(path_b)])


def _control_setup(cfg: ExperimentConfig, T: float, rule: str, nt: int):
    grid = build_grid(cfg)
    region = build_region(cfg)
    chi = build_chi(region, grid)
    nodes, _ = quadrature_rule(T, nt, rule)
    phi = build_phi(T, nodes)
    s = float(cfg.solver.get("s", 1.0))
    spec = make_gramian_spec(grid, T, s, chi, phi, nt, rule)
    return grid, region, chi, phi, spec


def _run_linear_control(cfg: ExperimentConfig, outdir: Path, stages: _Stages) -> RunOutcome:
    failures = []
    T = float(cfg.time["T"])
    rule = cfg.time.get("rule", "gauss")
    target = float(cfg.solver.get("target", 1e-6))
    stages.start("setup")
    grid, region, chi, phi, spec = _control_setup(cfg, T, rule, cfg.time["nt"])
    probes = _seeded_probes(grid, cfg.seed)
    spec = converge_quadrature(grid, T, spec.s, chi, phi, probes, rule, nt0=spec.nt)
    hum = HumSolveConfig(spec, cg_tol=float(cfg.solver.get("cg_tol", 1e-10)),
                         max_iterations=int(cfg.solver.get("cg_maxiter", 20000)))
    rng = np.random.default_rng(cfg.seed + 17)
    u0 = random_field(grid, rng, decay=2.0)
    stages.stop()

    stages.start("hum-solve")
    sol = linear_null_control(u0, hum)
    stages.stop()

    stages.start("duality")
    probe_field = _seeded_probes(grid, cfg.seed + 5, count=1)[0]
    dual = duality_check(lambda t: probe_field, sol.w0, spec)
    stages.stop()

    times = np.linspace(0.0, T, 9)
    traj = linear_control_trajectory(u0, sol, spec, times)
    rows = [[d["t"], d["mass"], d["h1"]] for d in traj.diagnostics]
    path = outdir / "linear_control_trajectory.csv"
    write_csv(path, ["t", "mass", "h1"], rows)
    cg_path = outdir / "cg_residuals.csv"
    write_csv(cg_path, ["iteration", "relres"],
              [[i, r] for i, r in enumerate(sol.cg_residuals)])
    summary_path = outdir / "linear_control.csv"
    write_csv(summary_path,
              ["T", "s", "N0", "L", "nt", "cg_iterations", "final_rel", "duality"],
              [[T, spec.s, grid.N[0], grid.L, spec.nt, sol.cg_iterations,
                sol.final_relative, dual]])
    dump_field(sol.w0, outdir / "w0.wgf")
    if sol.final_relative > target:
        failures.append(f"final state ratio {sol.final_relative:.3e} > target {target:.1e}")
    if dual > 1e-8:
        failures.append(f"duality identity discrepancy {dual:.3e} > 1e-8")
    if not sol.converged:
        failures.append("CG did not converge")
    summary = {
        "final_relative": sol.final_relative,
        "cg_iterations": sol.cg_iterations,
        "duality": dual,
        "nt": spec.nt,
    }
    return RunOutcome(not failures, failures, summary,
                      [str(path), str(cg_path), str(summary_path), str(outdir / "w0.wgf")])


def _nls_params(cfg: ExperimentConfig) -> NlsParams:
    return NlsParams(
        epsilon=float(cfg.solver.get("epsilon", -1)),
        dt=float(cfg.solver.get("dt", 5e-3)),
        dealias=bool(cfg.solver.get("dealias", True)),
    )


def _fixed_point_cfg(cfg: ExperimentConfig) -> FixedPointConfig:
    s = cfg.solver
    return FixedPointConfig(
        eta=float(s.get("eta", 1.0)),
        delta=float(s.get("delta", 0.1)),
        max_sweeps=int(s.get("max_sweeps", 30)),
        tol=float(s.get("fp_tol", 1e-7)),
        rho=float(s.get("rho", 1.0)),
    )


def _run_nonlinear_control(cfg: ExperimentConfig, outdir: Path, stages: _Stages) -> RunOutcome:
    failures = []
    T = float(cfg.time["T"])
    params = _nls_params(cfg)
    steps = max(8, int(round(T / abs(params.dt))))
    rule = cfg.time.get("rule", "midpoint")
    nt = steps if rule == "midpoint" else int(cfg.time["nt"])
    target = float(cfg.solver.get("target", 1e-4))

    stages.start("setup")
    grid, region, chi, phi, spec = _control_setup(cfg, T, rule, nt)
    hum = HumSolveConfig(spec, cg_tol=float(cfg.solver.get("cg_tol", 1e-10)),
                         max_iterations=int(cfg.solver.get("cg_maxiter", 20000)))
    fp = _fixed_point_cfg(cfg)
    s = spec.s
    u0_norm = float(cfg.solver.get("u0_norm", 1e-2))
    u0 = _seeded_probes(grid, cfg.seed + 17, count=1, s_norm=s, scale=u0_norm)[0]
    stages.stop()

    stages.start("fixed-point")
    sol = nonlinear_null_control(u0, params, fp, hum)
    stages.stop()

    rows = []
    for k, un in enumerate(sol.update_norms):
        contraction = sol.contraction_factors[k - 1] if k >= 1 else float("nan")
        rows.append([k + 1, sol.cg_residuals[k], un, contraction])
    path = outdir / "fixed_point.csv"
    write_csv(path, ["sweep", "gramian_residual", "update_norm", "contraction"], rows)
    final_path = outdir / "nonlinear_control.csv"
    write_csv(final_path,
              ["T", "s", "epsilon", "dt", "nt", "sweeps", "final_norm", "final_rel"],
              [[T, s, params.epsilon, params.dt, spec.nt,
                len(sol.update_norms), sol.final_state_norm, sol.final_relative]])
    dump_field(sol.w0, outdir / "w0.wgf")
    dump_field(sol.psi0, outdir / "psi0.wgf")
    src_files = []
    for frac in (0.0, 0.25, 0.5):
        p = outdir / f"source_t{frac:.2f}.wgf"
        dump_field(sol.source.at(frac * T), p)
        src_files.append(str(p))

    if not sol.converged:
        failures.append("fixed point did not converge")
    if any(b >= a for a, b in zip(sol.update_norms, sol.update_norms[1:])):
        failures.append("update norms are not strictly decreasing")
    if sol.contraction_factors and max(sol.contraction_factors) >= 1.0:
        failures.append("contraction factor >= 1")
    if sol.final_relative > target:
        failures.append(f"certified ratio {sol.final_relative:.3e} > target {target:.1e}")
    summary = {
        "sweeps": len(sol.update_norms),
        "final_relative": sol.final_relative,
        "contraction_max": max(sol.contraction_factors) if sol.contraction_factors else 0.0,
        "cg_iterations": sol.cg_iterations,
    }
    return RunOutcome(not failures, failures, summary,
                      [str(path), str(final_path), str(outdir / "w0.wgf"),
                       str(outdir / "psi0.wgf")] + src_files)


def _run_exact_control(cfg: ExperimentConfig, outdir: Path, stages: _Stages) -> RunOutcome:
    failures = []
    T = float(cfg.time["T"])
    params = _nls_params(cfg)
    target = float(cfg.solver.get("target", 1e-3))
    grid = build_grid(cfg)
    region = build_region(cfg)
    chi = build_chi(region, grid)
    s = float(cfg.solver.get("s", 1.0))
    cg_tol = float(cfg.solver.get("cg_tol", 1e-10))
    cg_maxiter = int(cfg.solver.get("cg_maxiter", 20000))

    def hum_factory(t_half: float) -> HumSolveConfig:
        steps = max(8, int(round(t_half / abs(params.dt))))
        nodes, _ = quadrature_rule(t_half, steps, "midpoint")
        phi = build_phi(t_half, nodes)
        spec = make_gramian_spec(grid, t_half, s, chi, phi, steps, "midpoint")
        return HumSolveConfig(spec, cg_tol=cg_tol, max_iterations=cg_maxiter)

    fp = _fixed_point_cfg(cfg)
    size = float(cfg.solver.get("u0_norm", 1e-2))
    u0 = _seeded_probes(grid, cfg.seed + 17, count=1, s_norm=s, scale=size)[0]
    uf = _seeded_probes(grid, cfg.seed + 39, count=1, s_norm=s, scale=size)[0]

    stages.start("glued-control")
    sol = exact_control(u0, uf, T, params, fp, hum_factory)
    stages.stop()

    path = outdir / "exact_control.csv"
    write_csv(path,
              ["T", "s", "epsilon", "final_mismatch", "final_rel",
               "junction_before", "junction_after", "fwd_sweeps", "bwd_sweeps"],
              [[T, s, params.epsilon, sol.final_mismatch, sol.final_relative,
                sol.junction_norms[0], sol.junction_norms[1],
                len(sol.forward.update_norms), len(sol.backward.update_norms)]])
    if sol.final_relative > target:
        failures.append(f"final mismatch {sol.final_relative:.3e} > target {target:.1e}")
    if max(sol.junction_norms) > 1e-12:
        failures.append(f"glued control does not vanish at the junction: {sol.junction_norms}")
    summary = {
        "final_relative": sol.final_relative,
        "junction": max(sol.junction_norms),
        "forward_sweeps": len(sol.forward.update_norms),
        "backward_sweeps": len(sol.backward.update_norms),
    }
    return RunOutcome(not failures, failures, summary, [str(path)])


def _run_xsb(cfg: ExperimentConfig, outdir: Path, stages: _Stages) -> RunOutcome:
    failures = []
    grid = build_grid(cfg)
    x = cfg.xsb
    params = XsbParams(
        s=float(x.get("s", 1.0)),
        b=float(x.get("b", 0.55)),
        bprime=float(x.get("bprime", 0.35)),
        r=float(x.get("r", 1.0)),
    )
    t_period = float(x.get("t_period", 2.0 * np.pi))
    nt = int(x.get("nt", 16))
    bands = tuple(x.get("bands", [1, 2]))
    nsamples = int(x.get("nsamples", 50))

    stages.start("trilinear")
    report = trilinear_ratio(grid, t_period, nt, params, bands, nsamples, seed=cfg.seed)
    stages.stop()
    rows = [[r.sample, r.band, r.estimate, r.lhs, r.rhs, r.ratio] for r in report.rows]
    path_t = outdir / "trilinear.csv"
    write_csv(path_t, ["sample", "band", "estimate", "lhs", "rhs", "ratio"], rows)

    stages.start("oracle")
    rng = np.random.default_rng(cfg.seed + 3)
    small_grid = WaveguideGrid(1, 1, 1, (8, 8))
    u_small = random_st_field(small_grid, t_period, 8, rng, 1, 1)
    cubic = st_pointwise_cubic(u_small, u_small, u_small)
    lhs_grid = xsb_norm(cubic, params.r, -params.bprime)
    coeffs, lattices = cubic_coefficients_direct(u_small)
    lhs_direct = xsb_norm_on_lattice(coeffs, lattices, small_grid, t_period,
                                     params.r, -params.bprime)
    oracle_err = abs(lhs_grid - lhs_direct) / max(lhs_direct, 1e-300)
    if oracle_err > 1e-10:
        failures.append(f"cubic evaluation disagrees with direct convolution: {oracle_err:.3e}")
    stages.stop()

    stages.start("gain")
    gain = gain_integration_scaling(params)
    stages.stop()
    path_g = outdir / "gain.csv"
    write_csv(path_g, ["T", "omega", "ratio", "normalized"],
              [[r.T, r.omega, r.ratio, r.normalized] for r in gain.rows])
    norm0 = gain.rows[0].normalized
    if gain.max_normalized > 10.0 * norm0:
        failures.append("gain-of-integration normalized ratio blows up along the sweep")

    summary = {
        "oracle_err": oracle_err,
        "gain_slope": gain.slope,
        "gain_max_normalized": gain.max_normalized,
        "trilinear_max": {e: report.max_ratio(e) for e in
                          ("cubic_r", "cubic_mixed", "lipschitz", "multiplier", "multiplier_r")},
        "degenerate_samples": report.degenerate,
    }
    return RunOutcome(not failures, failures, summary, [str(path_t), str(path_g)])


_RUNNERS = {
    "observability-sweep": _run_observability,
    "stationary-estimate": _run_stationary,
    "linear-null-control": _run_linear_control,
    "nonlinear-null-control": _run_nonlinear_control,
    "exact-control": _run_exact_control,
    "xsb-checks": _run_xsb,
}


def run_experiment(cfg: ExperimentConfig, outdir) -> RunOutcome:
    """Execute one experiment, writing CSVs, dumps and manifest.json."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stages = _Stages()
    t0 = time.perf_counter()
    error = None
    try:
        outcome = _RUNNERS[cfg.kind](cfg, outdir, stages)
    except Exception as exc:  # recorded in the manifest, then re-raised
        error = f"{type(exc).__name__}: {exc}"
        outcome = RunOutcome(False, [error], {}, [])
    wall = time.perf_counter() - t0
    manifest = {
        "config": cfg.raw,
        "version": __version__,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "wall_clock_seconds": wall,
        "stages": stages.rows,
        "files": [
            {"path": os.path.relpath(p, outdir), "sha256": sha256_file(p)}
            for p in outcome.files
        ],
        "summary": outcome.summary,
        "ok": outcome.ok,
        "failures": outcome.failures,
    }
    tmp = outdir / "manifest.json.tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, outdir / "manifest.json")
    if error is not None:
        raise RuntimeError(error)
    return outcome


def run_with_sweep(cfg: ExperimentConfig, outdir, max_workers: int = 1) -> list[RunOutcome]:
    """Run the base config, or its sweep entries into per-entry subdirectories."""
    outdir = Path(outdir)
    if not cfg.sweep:
        return [run_experiment(cfg, outdir)]
    entries = [(e["name"], validate(apply_overrides(cfg.raw, e.get("overrides", {}))))
               for e in cfg.sweep]
    outcomes: list[RunOutcome | None] = [None] * len(entries)
    if max_workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            futs = {
                pool.submit(run_experiment, sub, outdir / name): i
                for i, (name, sub) in enumerate(entries)
            }
            for fut, i in futs.items():
                outcomes[i] = fut.result()
    else:
        for i, (name, sub) in enumerate(entries):
            outcomes[i] = run_experiment(sub, outdir / name)
    return outcomes
