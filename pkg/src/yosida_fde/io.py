"""Trajectory CSV files with JSON sidecars, and atomic artifact writes."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import StructuralError
from .grid import DelayGeometry, HistorySegment, TimeGrid, Trajectory
from .reports import to_jsonable

FORMAT_VERSION = 1


def _atomic_write(path, write):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(obj, path):
    """Write ``obj`` as indented JSON (numpy values converted) atomically."""
    return _atomic_write(path, lambda fh: json.dump(to_jsonable(obj), fh, indent=2,
                                                    sort_keys=True))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def sidecar_path(csv_path):
    return Path(csv_path).with_suffix(".json")


def trajectory_metadata(traj):
    """Grid, geometry and initial history needed to rebuild ``traj``."""
    seg = traj.initial_history
    return {
        "format_version": FORMAT_VERSION,
        "dim": traj.dim,
        "grid": traj.grid.to_dict(),
        "geometry": seg.geometry.to_dict(),
        "initial_history": {"times": seg.times.tolist(), "states": seg.states.tolist()},
        "blend_lambda": traj.blend_lambda,
    }


def write_trajectory(traj, path, extra=None):
    """CSV with header ``t,x0,...,x{d-1}`` at 17 significant digits plus a sidecar.

    Returns the CSV path.  ``extra`` is merged into the sidecar.
    """
    path = Path(path)
    header = ",".join(["t"] + [f"x{k}" for k in range(traj.dim)])
    data = np.column_stack([traj.times, traj.states])
    _atomic_write(path, lambda fh: np.savetxt(fh, data, delimiter=",", header=header,
                                              comments="", fmt="%.17g"))
    meta = trajectory_metadata(traj)
    if extra:
        meta.update(extra)
    write_json(meta, sidecar_path(path))
    return path


def read_trajectory(path, check_history=True):
    """Inverse of :func:`write_trajectory`."""
    path = Path(path)
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise StructuralError(f"missing sidecar {meta_path}")
    meta = read_json(meta_path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    dim = int(meta["dim"])
    if header != ["t"] + [f"x{k}" for k in range(dim)]:
        raise StructuralError("trajectory CSV header does not match the sidecar dimension")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    grid = TimeGrid(**meta["grid"])
    if data.shape[0] != grid.n_nodes:
        raise StructuralError("trajectory CSV row count does not match its grid")
    if np.max(np.abs(data[:, 0] - grid.times)) > 1e-9 * grid.h:
        raise StructuralError("trajectory CSV times do not match its grid")
    geom = DelayGeometry.from_dict(meta["geometry"])
    ih = meta["initial_history"]
    seg = HistorySegment(geom, np.asarray(ih["times"], dtype=float),
                         np.asarray(ih["states"], dtype=float))
    return Trajectory(grid, data[:, 1:], seg, meta.get("blend_lambda"),
                      check_history=check_history)


def write_table(rows, path, columns=None):
    """CSV table from a list of dicts; missing entries are left empty."""
    columns = columns or sorted({k for r in rows for k in r})

    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, (float, np.floating)):
            return format(float(v), ".17g")
        return str(v).replace(",", ";")

    def write(fh):
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(fmt(r.get(c)) for c in columns) + "\n")
    return _atomic_write(path, write)
