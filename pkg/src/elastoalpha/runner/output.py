"""CSV time series and legacy VTK snapshots."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..fem import Mesh

log = logging.getLogger(__name__)

VTK_CELL_TYPES = {2: 5, 3: 10}  # triangle, tetrahedron


def _vec3(field: np.ndarray, n_nodes: int) -> np.ndarray:
    f = np.asarray(field, dtype=float).reshape(n_nodes, -1)
    out = np.zeros((n_nodes, 3))
    out[:, : min(3, f.shape[1])] = f[:, :3]
    return out


def write_vtk(path, mesh: Mesh, displacement: np.ndarray, velocity: np.ndarray, title: str = "snapshot") -> Path:
    """Legacy ASCII unstructured grid; higher-order elements are written by their vertices.

    Scalar fields are stored in the first vector component.
    """
    path = Path(path)
    n = mesh.n_nodes
    pts = np.zeros((n, 3))
    pts[:, : mesh.dim] = mesh.nodes
    cells = mesh.vertices
    nv = cells.shape[1]
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n} double"]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in pts]
    lines.append(f"CELLS {cells.shape[0]} {cells.shape[0] * (nv + 1)}")
    lines += [f"{nv} " + " ".join(str(int(i)) for i in c) for c in cells]
    lines.append(f"CELL_TYPES {cells.shape[0]}")
    lines += [str(VTK_CELL_TYPES[mesh.dim])] * cells.shape[0]
    lines.append(f"POINT_DATA {n}")
    for name, fld in (("displacement", displacement), ("velocity", velocity)):
        lines.append(f"VECTORS {name} double")
        lines += [f"{a:.17g} {b:.17g} {c:.17g}" for a, b, c in _vec3(fld, n)]
    path.write_text("\n".join(lines) + "\n")
    return path


class VTKSnapshots:
    """Observer writing a snapshot every ``stride`` accepted steps (and at step 0)."""

    def __init__(self, directory, mesh: Mesh, stride: int, prefix: str = "snapshot"):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.mesh = mesh
        self.stride = int(stride)
        self.prefix = prefix
        self.written: list[Path] = []

    def __call__(self, step, t, state, report):
        if self.stride <= 0 or step % self.stride:
            return
        p = self.directory / f"{self.prefix}_{step:06d}.vtk"
        self.written.append(write_vtk(p, self.mesh, state.u, state.v, f"t={t!r}"))
