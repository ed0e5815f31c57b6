"""Cell classification and the ghost / wall / mirror linkage."""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..grid import FLUID, SOLID, GHOST
from ..kernels import gather_weighted

log = logging.getLogger(__name__)

SURFACE_TIE_EPS = 1e-9  # times l_ref; centers this close count as solid


class GeometryError(ValueError):
    pass


@dataclass
class GhostLink:
    """Geometric record of one ghost cell.

    ``wall_coincident`` marks ghosts whose center lies on the surface
    (|GW| below round-off); their mirror is pushed half a cell into the
    fluid for sampling and targets degenerate to the wall values.
    """
    ghost_index: int
    G: np.ndarray
    W: np.ndarray
    M: np.ndarray
    normal: np.ndarray
    stencil: list = field(default_factory=list)  # (fluid cell index, weight)
    wall_coincident: bool = False
    clamped: bool = False


def classify(grid, body, allow_boundary_contact=False):
    """Cell kinds from the body's signed distance at cell centers.

    SOLID iff sd(center) <= tie epsilon; GHOST = solid cells with at least
    one fluid face-neighbor. Unless `allow_boundary_contact`, the body must
    keep two fully fluid cells of clearance from every non-periodic domain
    boundary.
    """
    centers = grid.all_centers()
    sd = np.asarray(body.sd(centers))
    solid = sd <= SURFACE_TIE_EPS * body.l_ref
    solid_nd = solid.reshape(grid.dims)

    if not allow_boundary_contact:
        for d in range(grid.ndim):
            if grid.periodic[d]:
                continue
            sl_lo = [slice(None)] * grid.ndim
            sl_lo[d] = slice(0, 2)
            sl_hi = [slice(None)] * grid.ndim
            sl_hi[d] = slice(-2, None)
            if solid_nd[tuple(sl_lo)].any() or solid_nd[tuple(sl_hi)].any():
                raise GeometryError(
                    f"body intersects or is within 2 cells of the axis-{d} "
                    "domain boundary")

    fluid_nd = ~solid_nd
    has_fluid_neighbor = np.zeros_like(solid_nd)
    for d in range(grid.ndim):
        for shift in (1, -1):
            rolled = np.roll(fluid_nd, shift, axis=d)
            if not grid.periodic[d]:
                edge = [slice(None)] * grid.ndim
                edge[d] = 0 if shift == 1 else -1
                rolled[tuple(edge)] = False
            has_fluid_neighbor |= rolled
    kinds = np.full(grid.ncells, FLUID, dtype=np.int8)
    kinds[solid] = SOLID
    kinds[(solid_nd & has_fluid_neighbor).reshape(-1)] = GHOST
    return kinds


def interpolate_stencil(grid, kinds, M):
    """Bilinear/trilinear stencil over the cell-center box enclosing M.

    Non-fluid corners are dropped and the remaining weights renormalized;
    zero-weight corners are omitted. Raises when no fluid corner carries
    weight (grid too coarse near the surface).
    """
    if not grid.contains(M):
        raise GeometryError(f"point {M} outside domain")
    lo_idx = []
    t = []
    for d in range(grid.ndim):
        c = grid.centers[d]
        i = int(np.searchsorted(c, M[d]) - 1)
        i = min(max(i, 0), grid.dims[d] - 2)
        lo_idx.append(i)
        td = (M[d] - c[i]) / (c[i + 1] - c[i])
        t.append(min(max(td, 0.0), 1.0))

    cells = []
    weights = []
    for corner in range(2 ** grid.ndim):
        idx = []
        w = 1.0
        for d in range(grid.ndim):
            bit = (corner >> d) & 1
            idx.append(lo_idx[d] + bit)
            w *= t[d] if bit else 1.0 - t[d]
        cells.append(grid.lin(*idx))
        weights.append(w)
    cells = np.array(cells)
    weights = np.array(weights)
    keep = (kinds[cells] == FLUID) & (weights > 0.0)
    total = weights[keep].sum()
    if total <= 0.0:
        raise GeometryError(
            f"no admissible fluid cell around {M}; grid too coarse near the "
            "surface")
    order = np.argsort(cells[keep], kind="stable")
    return list(zip(cells[keep][order].tolist(),
                    (weights[keep][order] / total).tolist()))


def build_ghost_links(grid, body, kinds):
    """One GhostLink per ghost cell, ordered by linear cell index."""
    ghost_cells = np.flatnonzero(kinds == GHOST)
    if ghost_cells.size == 0:
        return []
    G = grid.all_centers()[ghost_cells]
    W, normals = body.project(G)
    links = []
    eps = 1e-12 * body.l_ref
    for g_lin, Gp, Wp, n in zip(ghost_cells, G, W, normals):
        gw = np.linalg.norm(Wp - Gp)
        coincident = gw < eps
        M = 2.0 * Wp - Gp
        clamped = False
        if coincident:
            # degenerate |GW|: sample half a cell into the fluid
            h = grid.spacing_at(Wp).max()
            M = Wp + 0.5 * h * n
            clamped = True
        elif body.sd(M[None])[0] < 0.0:
            # concave surface folded the mirror back into the solid
            M = Gp + 1.5 * gw * n
            clamped = True
            log.warning("mirror of ghost %d clamped to 1.5|GW| along the "
                        "normal", int(g_lin))
        if not grid.contains(M):
            raise GeometryError(
                f"mirror point {M} of ghost cell {int(g_lin)} falls outside "
                "the domain")
        stencil = interpolate_stencil(grid, kinds, M)
        links.append(GhostLink(ghost_index=int(g_lin), G=Gp, W=Wp, M=M,
                               normal=n, stencil=stencil,
                               wall_coincident=coincident, clamped=clamped))
    return links


class StencilTable:
    """Flattened CSR view of all link stencils for fast repeated sampling."""

    def __init__(self, links):
        self.ghost_indices = np.array([l.ghost_index for l in links],
                                      dtype=np.int64)
        counts = [len(l.stencil) for l in links]
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.idx = np.array([c for l in links for c, _ in l.stencil],
                            dtype=np.int64)
        self.w = np.array([w for l in links for _, w in l.stencil])
        self.r_ratio = np.array([
            0.0 if l.wall_coincident else
            np.linalg.norm(l.W - l.G) / np.linalg.norm(l.M - l.W)
            for l in links])
        self.normals = np.array([l.normal for l in links]) if links else \
            np.zeros((0, 0))

    def sample(self, field):
        return gather_weighted(np.ascontiguousarray(field, dtype=np.float64),
                               self.idx, self.w, self.indptr)


def sample_at_mirror(links, field):
    """Interpolated field values at each link's mirror point."""
    if isinstance(links, StencilTable):
        return links.sample(field)
    return StencilTable(links).sample(field)
