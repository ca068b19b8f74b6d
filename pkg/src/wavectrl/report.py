"""Collate run outputs into a flat bundle and render summary figures.

Works on a directory holding one run (manifest.json at top level) or a
sweep (one subdirectory per run).  The bundle CSV has one row per run keyed
by the run name; figures are rendered per experiment kind next to the
delimited output.  matplotlib stays confined to this module.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .fieldio import write_csv


class ReportError(RuntimeError):
    pass


def _load_manifest(d: Path) -> dict:
    p = d / "manifest.json"
    if not p.exists():
        raise ReportError(f"{d}: no manifest.json")
    try:
        with open(p) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ReportError(f"{p}: corrupt manifest: {exc}") from exc


def discover_runs(run_dir) -> list[tuple[str, Path, dict]]:
    run_dir = Path(run_dir)
    if (run_dir / "manifest.json").exists():
        return [(run_dir.name or "run", run_dir, _load_manifest(run_dir))]
    runs = []
    for sub in sorted(run_dir.iterdir()):
        if sub.is_dir() and (sub / "manifest.json").exists():
            runs.append((sub.name, sub, _load_manifest(sub)))
    if not runs:
        raise ReportError(f"{run_dir}: no run manifests found")
    return runs


def _flatten(prefix: str, obj, out: dict):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}{k}." if prefix else f"{k}.", v, out) if isinstance(
                v, dict
            ) else out.__setitem__(f"{prefix}{k}", v)
    else:
        out[prefix.rstrip(".")] = obj


def collate(run_dir, out_dir) -> Path:
    """One bundle row per run: name, kind, ok, then the flattened summary."""
    runs = discover_runs(run_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    flat_rows = []
    keys: list[str] = []
    for name, _, manifest in runs:
        flat: dict = {}
        _flatten("", manifest.get("summary", {}), flat)
        flat_rows.append((name, manifest, flat))
        for k in flat:
            if k not in keys:
                keys.append(k)
    header = ["run", "kind", "ok"] + keys
    rows = [
        [name, m.get("kind", ""), int(bool(m.get("ok")))] + [f.get(k, "") for k in keys]
        for name, m, f in flat_rows
    ]
    bundle = out_dir / "bundle.csv"
    write_csv(bundle, header, rows)
    return bundle


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        r = csv.reader(fh)
        rows = list(r)
    return rows[0], rows[1:]


def _figure_for_run(name: str, d: Path, manifest: dict, out_dir: Path, plt) -> list[Path]:
    kind = manifest.get("kind")
    made = []

    def save(fig, stem):
        p = out_dir / f"{name}_{stem}.png"
        fig.savefig(p, dpi=150, bbox_inches="tight")
        plt.close(fig)
        made.append(p)

    if kind == "stationary-estimate" and (d / "stationary_eigenspaces.csv").exists():
        _, rows = _read_csv(d / "stationary_eigenspaces.csv")
        lam = [float(r[0]) for r in rows]
        ratio = [float(r[2]) for r in rows]
        running = [float(r[3]) for r in rows]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(lam, ratio, ".", ms=4, label="worst eigenspace ratio")
        ax.plot(lam, running, "-", lw=1, label="running max (empirical C)")
        ax.set_xlabel(r"eigenvalue $\lambda$")
        ax.set_ylabel("ratio")
        ax.legend()
        save(fig, "stationary")
    elif kind == "observability-sweep" and (d / "observability.csv").exists():
        header, rows = _read_csv(d / "observability.csv")
        fig, ax = plt.subplots(figsize=(5, 4))
        labels = [r[header.index("weight")] for r in rows]
        vals = [float(r[header.index("c_obs")]) for r in rows]
        ax.bar(labels, vals)
        ax.set_ylabel(r"$C_{\mathrm{obs}}$")
        save(fig, "observability")
    elif kind == "linear-null-control" and (d / "cg_residuals.csv").exists():
        _, rows = _read_csv(d / "cg_residuals.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.semilogy([int(r[0]) for r in rows], [float(r[1]) for r in rows], "-")
        ax.set_xlabel("CG iteration")
        ax.set_ylabel("relative residual")
        save(fig, "cg")
        if (d / "linear_control_trajectory.csv").exists():
            _, rows = _read_csv(d / "linear_control_trajectory.csv")
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.semilogy([float(r[0]) for r in rows], [float(r[2]) for r in rows], "o-")
            ax.set_xlabel("t")
            ax.set_ylabel(r"$\|\Psi(t)\|_{H^1}$")
            save(fig, "trajectory")
    elif kind == "nonlinear-null-control" and (d / "fixed_point.csv").exists():
        _, rows = _read_csv(d / "fixed_point.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.semilogy([int(r[0]) for r in rows], [float(r[2]) for r in rows], "o-")
        ax.set_xlabel("sweep")
        ax.set_ylabel("update norm")
        save(fig, "fixed_point")
    elif kind == "xsb-checks":
        if (d / "gain.csv").exists():
            _, rows = _read_csv(d / "gain.csv")
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.loglog([float(r[0]) for r in rows], [float(r[2]) for r in rows], "o-")
            ax.set_xlabel("T")
            ax.set_ylabel("ratio")
            save(fig, "gain")
        if (d / "trilinear.csv").exists():
            header, rows = _read_csv(d / "trilinear.csv")
            i_est, i_ratio = header.index("estimate"), header.index("ratio")
            by_est: dict[str, list[float]] = {}
            for r in rows:
                by_est.setdefault(r[i_est], []).append(float(r[i_ratio]))
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.boxplot(list(by_est.values()), tick_labels=list(by_est.keys()))
            ax.set_ylabel("LHS/RHS")
            ax.tick_params(axis="x", rotation=30)
            save(fig, "trilinear")
    return made


def render(run_dir, out_dir=None) -> list[Path]:
    """Write bundle.csv and the per-run figures; returns created paths."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir / "report"
    bundle = collate(run_dir, out_dir)
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    made = [bundle]
    for name, d, manifest in discover_runs(run_dir):
        made.extend(_figure_for_run(name, d, manifest, out_dir, plt))
    return made
