"""Rectilinear structured grid, graded-zone construction, and field storage."""

import numpy as np
from scipy.optimize import brentq

MAX_SPACING_RATIO = 1.3

FLUID = 0
SOLID = 1
GHOST = 2


class GridError(ValueError):
    pass


def _uniform_zone(x0, x1, h=None, n=None):
    L = x1 - x0
    if L <= 0:
        raise GridError(f"zone end {x1} not beyond start {x0}")
    if n is None:
        if h is None or h <= 0:
            raise GridError("uniform zone needs positive h or n")
        n = max(1, int(round(L / h)))
    elif n < 1:
        raise GridError("zone cell count must be >= 1")
    return x0 + L * np.arange(1, n + 1) / n


def _geometric_zone(x0, x1, h0, h1):
    """Spacings grade geometrically from ~h0 to ~h1 over [x0, x1].

    The cell count is the nearest integer realizing the requested end
    spacings; the common ratio is then re-solved so the faces land exactly
    on x1.
    """
    L = x1 - x0
    if L <= 0:
        raise GridError(f"zone end {x1} not beyond start {x0}")
    if h0 <= 0 or h1 <= 0:
        raise GridError("zone spacings must be positive")
    if abs(h1 - h0) < 1e-12 * max(h0, h1):
        return _uniform_zone(x0, x1, h=h0)
    # exact continuous relation: L = h0 (r^n - 1)/(r - 1) with
    # r^(n-1) = h1/h0 collapses to r = (L - h0)/(L - h1)
    if L <= h1 or L <= h0:
        n = 2
    else:
        r_est = (L - h0) / (L - h1)
        n_est = 1.0 + np.log(h1 / h0) / np.log(r_est)
        n = max(2, int(round(n_est)))

    def total(r):
        return h0 * (r ** n - 1.0) / (r - 1.0) - L

    lo, hi = (1.0 + 1e-12, MAX_SPACING_RATIO) if h1 > h0 else \
             (1.0 / MAX_SPACING_RATIO, 1.0 - 1e-12)
    if total(lo) * total(hi) > 0:
        raise GridError(
            f"geometric zone [{x0}, {x1}] h0={h0} h1={h1}: no ratio within "
            f"the {MAX_SPACING_RATIO} spacing-ratio cap realizes this grading")
    r = brentq(total, lo, hi, xtol=1e-15, rtol=8.9e-16)
    spacing = h0 * r ** np.arange(n)
    faces = x0 + np.cumsum(spacing)
    faces[-1] = x1
    return faces


def build_axis(start, zones):
    """Face coordinates for one axis from contiguous zone descriptions.

    Each zone dict carries ``end`` plus either ``h`` (uniform), ``n``
    (uniform by count), or ``h0``/``h1`` (geometric grading).
    """
    faces = [np.array([float(start)])]
    x0 = float(start)
    for z in zones:
        if "end" not in z:
            raise GridError(f"zone missing 'end': {z}")
        x1 = float(z["end"])
        if "h0" in z or "h1" in z:
            if not ("h0" in z and "h1" in z):
                raise GridError(f"geometric zone needs both h0 and h1: {z}")
            faces.append(_geometric_zone(x0, x1, float(z["h0"]), float(z["h1"])))
        else:
            h = z.get("h")
            n = z.get("n")
            faces.append(_uniform_zone(x0, x1, h=h, n=n))
        x0 = x1
    out = np.concatenate(faces)
    if not np.all(np.diff(out) > 0):
        raise GridError("axis faces not strictly increasing")
    ratio = np.diff(out)[1:] / np.diff(out)[:-1]
    bad = (ratio > MAX_SPACING_RATIO + 1e-9) | (ratio < 1.0 / MAX_SPACING_RATIO - 1e-9)
    if np.any(bad):
        worst = max(ratio.max(), 1.0 / ratio.min())
        raise GridError(
            f"adjacent spacing ratio {worst:.4f} exceeds cap {MAX_SPACING_RATIO}")
    return out


class RectilinearGrid:
    """Tensor-product grid over 2 or 3 axes of strictly increasing faces.

    Cells are indexed (i, j[, k]) with the linear index in C order
    (last axis fastest). Fields live on cells as flat float64 arrays.
    """

    def __init__(self, axis_faces, periodic=None):
        if len(axis_faces) not in (2, 3):
            raise GridError("grid must be 2D or 3D")
        self.faces = [np.asarray(f, dtype=np.float64) for f in axis_faces]
        for f in self.faces:
            if f.ndim != 1 or f.size < 4:
                raise GridError("each axis needs >= 3 cells")
            if not np.all(np.diff(f) > 0):
                raise GridError("axis faces not strictly increasing")
        self.ndim = len(self.faces)
        self.dims = tuple(f.size - 1 for f in self.faces)
        self.ncells = int(np.prod(self.dims))
        self.centers = [0.5 * (f[1:] + f[:-1]) for f in self.faces]
        self.spacings = [np.diff(f) for f in self.faces]
        self.periodic = tuple(bool(p) for p in (periodic or [False] * self.ndim))
        if len(self.periodic) != self.ndim:
            raise GridError("periodic flags must match dimensionality")
        self.lo = np.array([f[0] for f in self.faces])
        self.hi = np.array([f[-1] for f in self.faces])
        vol = self.spacings[0]
        for d in range(1, self.ndim):
            vol = np.multiply.outer(vol, self.spacings[d])
        self.volumes = vol.reshape(-1)
        self._face_index = None

    # --- indexing -----------------------------------------------------
    def lin(self, *ijk):
        return int(np.ravel_multi_index(ijk, self.dims))

    def unravel(self, lin):
        return tuple(int(v) for v in np.unravel_index(lin, self.dims))

    def cell_center(self, index):
        """Center point of a cell given (i, j[, k]) or a linear index."""
        if np.isscalar(index):
            index = self.unravel(index)
        if len(index) != self.ndim:
            raise GridError(f"index arity {len(index)} != ndim {self.ndim}")
        for d, i in enumerate(index):
            if not (0 <= i < self.dims[d]):
                raise GridError(f"cell index {index} out of range {self.dims}")
        return np.array([self.centers[d][i] for d, i in enumerate(index)])

    def all_centers(self):
        """(ncells, ndim) array of cell-center points, linear-index order."""
        mesh = np.meshgrid(*self.centers, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def locate(self, point):
        """(i, j[, k]) of the cell containing a point (clamped to range)."""
        ijk = []
        for d in range(self.ndim):
            i = int(np.searchsorted(self.faces[d], point[d], side="right") - 1)
            ijk.append(min(max(i, 0), self.dims[d] - 1))
        return tuple(ijk)

    def spacing_at(self, point):
        """Per-axis spacings of the cell containing the point."""
        ijk = self.locate(point)
        return np.array([self.spacings[d][ijk[d]] for d in range(self.ndim)])

    def contains(self, point):
        return all(self.lo[d] <= point[d] <= self.hi[d] for d in range(self.ndim))

    # --- face connectivity --------------------------------------------
    def interior_faces(self, axis):
        """Connectivity for faces normal to `axis`, periodic wrap included.

        Returns a dict of flat arrays over faces: ``left``/``right`` cell
        linear indices, ``area``, ``dist`` (center-to-center distance), and
        ``wl`` (linear-interpolation weight of the left cell for face values).
        """
        if self._face_index is None:
            self._face_index = [None] * self.ndim
        if self._face_index[axis] is not None:
            return self._face_index[axis]
        dims = self.dims
        nd = self.ndim
        n = dims[axis]
        nface = n if self.periodic[axis] else n - 1
        left_i = np.arange(nface)
        right_i = (left_i + 1) % n

        xc = self.centers[axis]
        dist_i = xc[right_i] - xc[left_i]
        xf = self.faces[axis][1:n] if not self.periodic[axis] else \
            np.concatenate([self.faces[axis][1:n], self.faces[axis][-1:]])
        if self.periodic[axis]:
            # wrap face: half-spacing on each side of the boundary
            dist_i[-1] = 0.5 * self.spacings[axis][-1] + 0.5 * self.spacings[axis][0]
        wl_i = 1.0 - (xf - xc[left_i]) / dist_i
        if self.periodic[axis]:
            wl_i[-1] = 0.5 * self.spacings[axis][-1] / dist_i[-1]

        # meshed indices: face index along `axis`, cell index along the others
        grids = [left_i if d == axis else np.arange(dims[d]) for d in range(nd)]
        mesh = list(np.meshgrid(*grids, indexing="ij"))
        strides = [int(np.prod(dims[d + 1:])) for d in range(nd)]
        area = np.ones(mesh[0].shape)
        for d in range(nd):
            if d != axis:
                area = area * self.spacings[d][mesh[d]]
        dist = dist_i[mesh[axis]].reshape(-1)
        wl = wl_i[mesh[axis]].reshape(-1)
        left = sum(mesh[d] * strides[d] for d in range(nd)).reshape(-1)
        mesh[axis] = right_i[mesh[axis]]
        right = sum(mesh[d] * strides[d] for d in range(nd)).reshape(-1)
        out = {"left": left, "right": right, "area": area.reshape(-1),
               "dist": dist, "wl": wl, "nface": left.size}
        self._face_index[axis] = out
        return out

    def boundary_faces(self, axis, side):
        """Cells and face areas on a non-periodic boundary (side 0 = low)."""
        if self.periodic[axis]:
            raise GridError("no boundary faces on a periodic axis")
        dims = self.dims
        nd = self.ndim
        grids = []
        for d in range(nd):
            if d == axis:
                grids.append(np.array([0 if side == 0 else dims[d] - 1]))
            else:
                grids.append(np.arange(dims[d]))
        mesh = np.meshgrid(*grids, indexing="ij")
        strides = [int(np.prod(dims[d + 1:])) for d in range(nd)]
        cells = sum(mesh[d] * strides[d] for d in range(nd)).reshape(-1)
        area = np.ones(mesh[0].shape)
        for d in range(nd):
            if d != axis:
                area = area * self.spacings[d][mesh[d]]
        half = 0.5 * self.spacings[axis][0 if side == 0 else -1]
        return {"cells": cells, "area": area.reshape(-1), "half_dist": half}


def build_grid(axes_spec, periodic=None):
    """Grid from per-axis ``{"start": x0, "zones": [...]}`` descriptions."""
    faces = []
    for ax in axes_spec:
        if "start" not in ax or "zones" not in ax:
            raise GridError("axis spec needs 'start' and 'zones'")
        faces.append(build_axis(ax["start"], ax["zones"]))
    return RectilinearGrid(faces, periodic=periodic)


class FieldSet:
    """Cell-centered flow fields plus the ghost-cell forcing fields."""

    SCALARS = ("rho", "p", "T", "e_s", "f_rho", "f_T")

    def __init__(self, grid):
        n = grid.ncells
        self.grid = grid
        self.rho = np.zeros(n)
        self.u = np.zeros((n, grid.ndim))
        self.p = np.zeros(n)
        self.T = np.zeros(n)
        self.e_s = np.zeros(n)
        self.f_rho = np.zeros(n)
        self.f_u = np.zeros((n, grid.ndim))
        self.f_T = np.zeros(n)

    def forcing_zero_outside(self, kinds):
        """True if all forcing fields vanish on non-ghost cells."""
        non_ghost = kinds != GHOST
        return (np.all(self.f_rho[non_ghost] == 0.0)
                and np.all(self.f_u[non_ghost] == 0.0)
                and np.all(self.f_T[non_ghost] == 0.0))
