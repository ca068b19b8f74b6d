"""Field dump format and CSV helpers.

Binary layout (all little-endian): magic b"WGF1"; uint32 m, n, L; uint32
N[0..m+n-1]; uint32 representation tag (0 physical, 1 spectral); then
complex128 values (interleaved re/im doubles) in row-major grid order.

CSV floats are written with repr (shortest round-trip), which is
deterministic, so reruns with the same seed produce byte-identical files.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .grid import PHYSICAL, SPECTRAL, Field, WaveguideGrid

MAGIC = b"WGF1"
_REP_CODE = {PHYSICAL: 0, SPECTRAL: 1}
_REP_NAME = {0: PHYSICAL, 1: SPECTRAL}


def dump_field(f: Field, path) -> None:
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<3I", g.m, g.n, g.L))
        fh.write(struct.pack(f"<{g.d}I", *g.N))
        fh.write(struct.pack("<I", _REP_CODE[f.rep]))
        fh.write(np.ascontiguousarray(f.data).astype("<c16").tobytes())


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a WGF1 field dump")
        m, n, L = struct.unpack("<3I", fh.read(12))
        N = struct.unpack(f"<{m + n}I", fh.read(4 * (m + n)))
        (rep_code,) = struct.unpack("<I", fh.read(4))
        grid = WaveguideGrid(m, n, L, N)
        raw = fh.read(16 * grid.npoints)
        data = np.frombuffer(raw, dtype="<c16").reshape(grid.shape)
    return Field(grid, data.astype(np.complex128), _REP_NAME[rep_code])


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def export_slice_csv(f: Field, path, fixed: dict[int, int] | None = None) -> None:
    """CSV of a 1D or 2D physical slice: free axes' coordinates then re, im.

    `fixed` maps axis index -> grid index; the remaining axes (at most two)
    are exported.
    """
    from .grid import physical

    fixed = fixed or {}
    g = f.grid
    free = [j for j in range(g.d) if j not in fixed]
    if len(free) not in (1, 2):
        raise ValueError(f"slice must leave 1 or 2 free axes, got {len(free)}")
    vals = physical(f).data
    idx = [slice(None) if j in free else fixed[j] for j in range(g.d)]
    sub = vals[tuple(idx)]
    rows = []
    if len(free) == 1:
        x = g.coords1d(free[0])
        for i in range(len(x)):
            rows.append([x[i], sub[i].real, sub[i].imag])
        header = [f"coord{free[0]}", "re", "im"]
    else:
        x0, x1 = g.coords1d(free[0]), g.coords1d(free[1])
        for i in range(len(x0)):
            for k in range(len(x1)):
                rows.append([x0[i], x1[k], sub[i, k].real, sub[i, k].imag])
        header = [f"coord{free[0]}", f"coord{free[1]}", "re", "im"]
    write_csv(path, header, rows)


def trajectory_diagnostics_csv(traj, path) -> None:
    rows = [[d["t"], d["mass"], d["h1"], d.get("max_abs", float("nan"))] for d in traj.diagnostics]
    write_csv(path, ["t", "mass", "h1", "max_abs"], rows)


def sha256_file(path) -> str:
    import hashlib

    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
