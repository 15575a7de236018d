"""Writers for CSV tables, JSON summaries, legacy VTK fields and matrix dumps."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .vem import projector
from .mesh import cell_geometry

VTK_POLYGON = 7
VTK_LINE = 3


def fmt(x) -> str:
    """Six significant digits, stable across runs."""
    if x is None:
        return ""
    x = float(x)
    if not np.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return f"{x:.6g}"


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([c if isinstance(c, str) else fmt(c) for c in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, data) -> None:
    """Write ``data`` atomically (temporary file then rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def dump_matrices(pencil, directory) -> list:
    """Coordinate-format ``row col value`` dumps of A, B and M."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, mat in (("A", pencil.A), ("B", pencil.B), ("M", sp.diags(pencil.mass))):
        coo = sp.coo_matrix(mat)
        order = np.lexsort((coo.col, coo.row))
        path = directory / f"{name}.txt"
        with open(path, "w") as fh:
            fh.write(f"% {name} {mat.shape[0]} {mat.shape[1]} {coo.nnz}\n")
            for i, j, v in zip(coo.row[order].tolist(), coo.col[order].tolist(), coo.data[order].tolist()):
                fh.write(f"{i} {j} {v!r}\n")
        out.append(path)
    return out


def edge_fluxes(mesh, dofs, sigma) -> np.ndarray:
    """Canonical-orientation flux per mesh edge (zero on Neumann edges)."""
    flux = np.zeros(mesh.n_edges)
    free = dofs.edge_dof >= 0
    flux[free] = sigma[dofs.edge_dof[free]]
    return flux


def projected_flux(mesh, flux) -> np.ndarray:
    """Cellwise constant projection of an edge-flux field, shape (n_cells, 2)."""
    out = np.empty((mesh.n_cells, 2))
    for k in range(mesh.n_cells):
        g = cell_geometry(mesh, k)
        local = flux[list(mesh.cell_edges[k])] * np.array(mesh.cell_signs[k])
        out[k] = projector(g) @ local
    return out


def write_vtk_modes(mesh, dofs, result, directory, stem="mode") -> list:
    """One legacy-VTK unstructured grid per mode (cells) plus one for edge fluxes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pts = "\n".join(f"{x!r} {y!r} 0.0" for x, y in mesh.vertices.tolist())
    files = []
    for j, lam in enumerate(result.lambdas):
        u = result.u_modes[:, j]
        flux = edge_fluxes(mesh, dofs, result.sigma_modes[:, j])
        vec = projected_flux(mesh, flux)
        size = sum(len(c) + 1 for c in mesh.cells)
        lines = ["# vtk DataFile Version 3.0", f"mixed VEM mode {j + 1} lambda={lam!r}", "ASCII",
                 "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_vertices} double", pts,
                 f"CELLS {mesh.n_cells} {size}"]
        lines += [f"{len(c)} " + " ".join(map(str, c)) for c in mesh.cells]
        lines += [f"CELL_TYPES {mesh.n_cells}"] + [str(VTK_POLYGON)] * mesh.n_cells
        lines += [f"CELL_DATA {mesh.n_cells}", "SCALARS u double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in u]
        lines += ["VECTORS sigma double"] + [f"{a!r} {b!r} 0.0" for a, b in vec.tolist()]
        path = directory / f"{stem}_{j + 1:02d}.vtk"
        path.write_text("\n".join(lines) + "\n")
        files.append(path)

        lines = ["# vtk DataFile Version 3.0", f"mixed VEM mode {j + 1} edge fluxes", "ASCII",
                 "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_vertices} double", pts,
                 f"CELLS {mesh.n_edges} {3 * mesh.n_edges}"]
        lines += [f"2 {a} {b}" for a, b in mesh.edges.tolist()]
        lines += [f"CELL_TYPES {mesh.n_edges}"] + [str(VTK_LINE)] * mesh.n_edges
        lines += [f"CELL_DATA {mesh.n_edges}", "SCALARS flux double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in flux]
        path = directory / f"{stem}_{j + 1:02d}_edges.vtk"
        path.write_text("\n".join(lines) + "\n")
        files.append(path)
    return files
