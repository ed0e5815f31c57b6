"""Legacy-format VTK snapshots of cell data on rectilinear grids.

One file per snapshot, DATASET RECTILINEAR_GRID, CELL_DATA attributes.
ASCII output prints doubles with 17 significant digits so values survive
a round trip exactly; BINARY output stores big-endian float64 / int32 as
the legacy format requires.  Cell values are reordered from our C-order
linear index (last axis fastest) to the VTK convention (x fastest).
"""

import numpy as np

_FLOAT = "%.17g"


def _vtk_order(grid, arr):
    # linear index -> (i, j[, k]) -> flatten x-fastest
    return np.asarray(arr, dtype=float).reshape(grid.dims).ravel(order="F")


def _scalars(fh, name, vals, binary, kind="double"):
    fh.write(f"SCALARS {name} {kind} 1\n".encode())
    fh.write(b"LOOKUP_TABLE default\n")
    if binary:
        dt = ">f8" if kind == "double" else ">i4"
        fh.write(np.ascontiguousarray(vals).astype(dt).tobytes())
        fh.write(b"\n")
    else:
        fmt = _FLOAT if kind == "double" else "%d"
        fh.write(("\n".join(fmt % v for v in vals) + "\n").encode())


def _vectors(fh, name, comps, binary):
    vec = np.stack(comps, axis=1)  # (ncell, 3)
    fh.write(f"VECTORS {name} double\n".encode())
    if binary:
        fh.write(vec.astype(">f8").tobytes())
        fh.write(b"\n")
    else:
        lines = (" ".join(_FLOAT % v for v in row) for row in vec)
        fh.write(("\n".join(lines) + "\n").encode())


def _coordinates(fh, axis_name, coords, binary):
    fh.write(f"{axis_name}_COORDINATES {coords.size} double\n".encode())
    if binary:
        fh.write(coords.astype(">f8").tobytes())
        fh.write(b"\n")
    else:
        fh.write((" ".join(_FLOAT % v for v in coords) + "\n").encode())


def write_snapshot(path, grid, fields, kinds=None, title="ghostflow",
                   binary=True):
    """Write rho, velocity, p, T, cell kind, and the forcing fields.

    2-D grids are emitted as a one-cell-thick z slab; vectors get a zero
    z component.  `title` lands on the second header line (VTK allows up
    to 256 characters), which is where the run provenance hash goes.
    """
    if len(title) > 255 or "\n" in title:
        raise ValueError("title must be a single line under 256 chars")
    pad = 3 - grid.ndim
    coords = list(grid.faces) + [np.array([0.0])] * pad
    dims_pts = [c.size for c in coords]

    def comp3(vec_field):
        comps = [_vtk_order(grid, vec_field[:, d]) for d in range(grid.ndim)]
        comps += [np.zeros(grid.ncells)] * pad
        return comps

    with open(path, "wb") as fh:
        fh.write(b"# vtk DataFile Version 3.0\n")
        fh.write((title + "\n").encode())
        fh.write(b"BINARY\n" if binary else b"ASCII\n")
        fh.write(b"DATASET RECTILINEAR_GRID\n")
        fh.write(("DIMENSIONS %d %d %d\n" % tuple(dims_pts)).encode())
        for name, c in zip(("X", "Y", "Z"), coords):
            _coordinates(fh, name, c, binary)
        fh.write(("CELL_DATA %d\n" % grid.ncells).encode())
        _scalars(fh, "rho", _vtk_order(grid, fields.rho), binary)
        _vectors(fh, "velocity", comp3(fields.u), binary)
        _scalars(fh, "p", _vtk_order(grid, fields.p), binary)
        _scalars(fh, "T", _vtk_order(grid, fields.T), binary)
        if kinds is None:
            kinds = np.zeros(grid.ncells, dtype=np.int32)
        _scalars(fh, "cell_kind",
                 np.asarray(kinds).reshape(grid.dims).ravel(order="F"),
                 binary, kind="int")
        _scalars(fh, "f_rho", _vtk_order(grid, fields.f_rho), binary)
        _vectors(fh, "forcing_u", comp3(fields.f_u), binary)
        _scalars(fh, "f_T", _vtk_order(grid, fields.f_T), binary)


__all__ = ["write_snapshot"]
