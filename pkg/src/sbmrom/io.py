"""File formats: legacy VTK, the binary matrix container and small CSV tables.

Binary matrix container
-----------------------
All integers and floats are little-endian.

========  ==========================  =====================================
offset    content                     type
========  ==========================  =====================================
0         magic ``b"SBMROM\\x00\\x01"``  8 bytes
8         ``n_rows``                  uint64
16        ``n_cols``                  uint64
24        ``n_params``                uint64
32        parameter values            ``n_params`` x float64
...       matrix entries              ``n_rows * n_cols`` x float64,
                                      column-major (one column after another)
========  ==========================  =====================================

Snapshot matrices store one parameter per column; a POD basis stores the
training parameters it was built from.
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .mesh import BackgroundMesh

__all__ = [
    "MAGIC",
    "write_matrix",
    "read_matrix",
    "write_vtk",
    "read_vtk_point_data",
    "write_eigenvalues",
    "read_eigenvalues",
    "write_table",
]

MAGIC = b"SBMROM\x00\x01"
_HEADER = struct.Struct("<8sQQQ")


def write_matrix(path, matrix: np.ndarray, parameters=()) -> None:
    """Write a dense 2-D float matrix and its parameter list."""
    A = np.asarray(matrix, dtype="<f8")
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ValueError("only 1-D or 2-D arrays can be stored")
    params = np.asarray(parameters, dtype="<f8").ravel()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, A.shape[0], A.shape[1], params.size))
        fh.write(params.tobytes())
        fh.write(A.tobytes(order="F"))


def read_matrix(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_matrix`; returns ``(matrix, parameters)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, nr, nc, npar = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a matrix container (bad magic {magic!r})")
    expected = _HEADER.size + 8 * (npar + nr * nc)
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    params = np.frombuffer(raw, dtype="<f8", count=npar, offset=_HEADER.size).astype(float)
    data = np.frombuffer(raw, dtype="<f8", count=nr * nc, offset=_HEADER.size + 8 * npar)
    return data.reshape((nr, nc), order="F").astype(float), params


def write_vtk(path, mesh: BackgroundMesh, fields: dict[str, np.ndarray] | None = None,
              title: str = "sbmrom field") -> None:
    """Legacy ASCII VTK unstructured grid of linear triangles with nodal scalars."""
    fields = fields or {}
    n = mesh.n_nodes
    for name, values in fields.items():
        if np.shape(values) != (n,):
            raise ValueError(f"field {name!r} must have one value per node ({n})")
        if " " in name:
            raise ValueError(f"field name {name!r} must not contain spaces")
    ne = mesh.n_elements
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n} double\n")
        pts = np.column_stack([mesh.nodes, np.zeros(n)])
        np.savetxt(fh, pts, fmt="%.17g")
        fh.write(f"CELLS {ne} {4 * ne}\n")
        np.savetxt(fh, np.column_stack([np.full(ne, 3), mesh.elements]), fmt="%d")
        fh.write(f"CELL_TYPES {ne}\n")
        np.savetxt(fh, np.full(ne, 5), fmt="%d")
        if fields:
            fh.write(f"POINT_DATA {n}\n")
            for name, values in fields.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                np.savetxt(fh, np.asarray(values, dtype=float), fmt="%.17g")


def read_vtk_point_data(path) -> dict[str, np.ndarray]:
    """Read the nodal scalar fields back from a file written by :func:`write_vtk`."""
    lines = Path(path).read_text().splitlines()
    out: dict[str, np.ndarray] = {}
    n = None
    k = 0
    while k < len(lines):
        parts = lines[k].split()
        if parts and parts[0] == "POINT_DATA":
            n = int(parts[1])
        elif parts and parts[0] == "SCALARS":
            if n is None:
                raise ValueError(f"{path}: SCALARS before POINT_DATA")
            out[parts[1]] = np.array([float(v) for v in lines[k + 2 : k + 2 + n]])
            k += 1 + n
        k += 1
    return out


def write_eigenvalues(path, eigenvalues: np.ndarray) -> None:
    """CSV with columns ``index, eigenvalue, ratio`` (``ratio = lambda_i / lambda_1``)."""
    lam = np.asarray(eigenvalues, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "ratio"])
        for i, v in enumerate(lam, start=1):
            w.writerow([i, repr(float(v)), repr(float(v / lam[0]))])


def read_eigenvalues(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([float(row["eigenvalue"]) for row in csv.DictReader(fh)])


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_table(path, header: list[str], rows) -> None:
    """CSV with a fixed header; floats are written with full round-trip precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row {row!r} does not match header {header!r}")
            w.writerow([_cell(v) for v in row])
