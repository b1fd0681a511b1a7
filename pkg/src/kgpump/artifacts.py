"""Artifact writers. CSV doubles carry 17 significant digits, '.' separator."""
import json
import os
from pathlib import Path

import numpy as np

FMT = "%.17g"


def ensure_dir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def write_csv(path, columns, data, comment=None):
    """``data`` is a 2-D array (rows x len(columns)) or a sequence of 1-D columns."""
    arr = np.asarray(data, float)
    if arr.ndim == 2 and arr.shape[1] != len(columns) and arr.shape[0] == len(columns):
        arr = arr.T
    arr = np.atleast_2d(arr)
    if arr.shape[1] != len(columns):
        raise ValueError(f"{arr.shape[1]} data columns for {len(columns)} names")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        # np.savetxt formats with the C locale conversions of python floats
        np.savetxt(fh, arr, fmt=FMT, delimiter=",")
    return Path(path)


def read_csv(path):
    """Header names and data of a file written by write_csv."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty CSV")
    names = [c.strip() for c in lines[0].split(",")]
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2) if len(lines) > 1 else np.empty((0, len(names)))
    return names, data


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return Path(path)


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return Path(path)


def write_snapshots(traj, grid, directory, eps):
    d = ensure_dir(directory)
    paths = []
    for k, s in enumerate(traj.snapshots):
        paths.append(write_csv(d / f"snapshot_{k:03d}.csv", ("x", "u", "v"), (grid.x, s.u, s.v),
                               comment=f"t = {float(s.t)!r}\nt2 = {float(eps ** 2 * s.t)!r}"))
    return paths


def write_probes(traj, directory):
    d = ensure_dir(directory)
    paths = []
    for j, xp in enumerate(traj.probe_x):
        t, u, v = traj.probe(j)
        paths.append(write_csv(d / f"probe_{j:02d}.csv", ("t", "u", "v"), (t, u, v),
                               comment=f"x = {float(xp)!r}"))
    return paths


def output_dir(cfg, override=None):
    return ensure_dir(override or os.environ.get("KGPUMP_OUTPUT_DIR") or cfg.output_dir())
