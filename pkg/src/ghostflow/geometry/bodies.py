"""Immersed-body shapes: signed distance (negative inside) and projection."""

import numpy as np


class ImplicitBody:
    """Shape with vectorized signed distance and surface projection.

    ``sd(points)`` is negative inside the solid. ``project(points)`` returns
    the nearest surface points and the outward (solid-to-fluid) unit normals
    there. ``l_ref`` is the reference length used for tolerances.
    """

    l_ref = 1.0

    def sd(self, points):
        raise NotImplementedError

    def project(self, points):
        raise NotImplementedError


class EmptyBody(ImplicitBody):
    """No solid anywhere; classification yields all-fluid."""

    def sd(self, points):
        points = np.atleast_2d(points)
        return np.full(points.shape[0], np.inf)

    def project(self, points):
        raise ValueError("empty body has no surface")


class Circle(ImplicitBody):
    def __init__(self, center, radius):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.l_ref = 2.0 * radius

    def sd(self, points):
        d = np.atleast_2d(points) - self.center
        return np.sqrt(np.einsum("ij,ij->i", d, d)) - self.radius

    def project(self, points):
        pts = np.atleast_2d(points).astype(float)
        d = pts - self.center
        r = np.sqrt(np.einsum("ij,ij->i", d, d))
        n = np.empty_like(d)
        deg = r < 1e-300
        n[deg] = 0.0
        n[deg, 0] = 1.0
        ok = ~deg
        n[ok] = d[ok] / r[ok, None]
        return self.center + self.radius * n, n


class Sphere(Circle):
    """Same closed forms as Circle; points are 3D."""


def _polygon_signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


class Polygon2D(ImplicitBody):
    """Simple closed polygon; distance to edges, sign by even-odd crossing."""

    CHUNK = 2048

    def __init__(self, vertices, l_ref=None):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("polygon needs >= 3 (x, y) vertices")
        if np.allclose(v[0], v[-1]):
            v = v[:-1]
        self.v = v
        self.a = v
        self.b = np.roll(v, -1, axis=0)
        self.e = self.b - self.a
        self.elen2 = np.einsum("ij,ij->i", self.e, self.e)
        if np.any(self.elen2 <= 0):
            raise ValueError("degenerate polygon edge")
        # outward edge normals (right of travel for counterclockwise loops)
        ccw = _polygon_signed_area(v) > 0
        nrm = np.stack([self.e[:, 1], -self.e[:, 0]], axis=1)
        if not ccw:
            nrm = -nrm
        self.edge_normals = nrm / np.sqrt(self.elen2)[:, None]
        span = v.max(axis=0) - v.min(axis=0)
        self.l_ref = float(l_ref) if l_ref is not None else float(span.max())

    def _nearest(self, pts):
        """Per point: (distance, nearest surface point, nearest edge id)."""
        n = pts.shape[0]
        dist = np.empty(n)
        proj = np.empty((n, 2))
        edge = np.empty(n, dtype=np.int64)
        for s in range(0, n, self.CHUNK):
            p = pts[s:s + self.CHUNK]
            w = p[:, None, :] - self.a[None, :, :]
            t = np.einsum("pej,ej->pe", w, self.e) / self.elen2
            t = np.clip(t, 0.0, 1.0)
            foot = self.a[None, :, :] + t[:, :, None] * self.e[None, :, :]
            d2 = np.einsum("pej,pej->pe", p[:, None, :] - foot,
                           p[:, None, :] - foot)
            k = np.argmin(d2, axis=1)
            rows = np.arange(p.shape[0])
            dist[s:s + self.CHUNK] = np.sqrt(d2[rows, k])
            proj[s:s + self.CHUNK] = foot[rows, k]
            edge[s:s + self.CHUNK] = k
        return dist, proj, edge

    def _inside(self, pts):
        inside = np.zeros(pts.shape[0], dtype=bool)
        ay, by = self.a[:, 1], self.b[:, 1]
        for s in range(0, pts.shape[0], self.CHUNK):
            p = pts[s:s + self.CHUNK]
            px = p[:, 0:1]
            py = p[:, 1:2]
            cond = (ay[None, :] > py) != (by[None, :] > py)
            # x coordinate where the edge crosses the horizontal through py
            with np.errstate(divide="ignore", invalid="ignore"):
                xi = (self.a[None, :, 0]
                      + (py - ay[None, :]) * self.e[None, :, 0]
                      / np.where(self.e[None, :, 1] == 0, 1.0,
                                 self.e[None, :, 1]))
            crossings = np.sum(cond & (px < xi), axis=1)
            inside[s:s + self.CHUNK] = (crossings % 2) == 1
        return inside

    def sd(self, points):
        pts = np.atleast_2d(points).astype(float)
        dist, _, _ = self._nearest(pts)
        sign = np.where(self._inside(pts), -1.0, 1.0)
        return sign * dist

    def project(self, points):
        pts = np.atleast_2d(points).astype(float)
        dist, proj, edge = self._nearest(pts)
        inside = self._inside(pts)
        n = np.empty_like(pts)
        on_surface = dist < 1e-12 * self.l_ref
        d = proj - pts
        inward = inside & ~on_surface
        outward = ~inside & ~on_surface
        n[inward] = d[inward] / dist[inward, None]
        n[outward] = -d[outward] / dist[outward, None]
        n[on_surface] = self.edge_normals[edge[on_surface]]
        return proj, n


def _naca4_thickness(xc, t):
    return 5.0 * t * (0.2969 * np.sqrt(xc) - 0.1260 * xc - 0.3516 * xc ** 2
                      + 0.2843 * xc ** 3 - 0.1036 * xc ** 4)


class Naca4(Polygon2D):
    """Four-digit airfoil as a dense closed polyline.

    The polyline is the body: signed distance and projection are the exact
    polygon operations, so the mirror/stencil invariants hold to round-off.
    ``code`` like "0012"; ``alpha_deg`` pitches the nose up (clockwise) about
    the leading edge for a free stream along +x.
    """

    def __init__(self, chord, code="0012", alpha_deg=0.0,
                 le_pos=(0.0, 0.0), n_side=400):
        code = str(code)
        if len(code) != 4 or not code.isdigit():
            raise ValueError("NACA code must be 4 digits")
        m = int(code[0]) / 100.0
        p = int(code[1]) / 10.0
        t = int(code[2:]) / 100.0
        if t <= 0:
            raise ValueError("zero-thickness airfoil")
        beta = np.linspace(0.0, np.pi, n_side)
        xc = 0.5 * (1.0 - np.cos(beta))  # clustered at both ends
        yt = _naca4_thickness(xc, t)
        if m > 0 and p > 0:
            yc = np.where(xc < p,
                          m / p ** 2 * (2 * p * xc - xc ** 2),
                          m / (1 - p) ** 2 * ((1 - 2 * p) + 2 * p * xc - xc ** 2))
            dyc = np.where(xc < p,
                           2 * m / p ** 2 * (p - xc),
                           2 * m / (1 - p) ** 2 * (p - xc))
            th = np.arctan(dyc)
            xu = xc - yt * np.sin(th)
            yu = yc + yt * np.cos(th)
            xl = xc + yt * np.sin(th)
            yl = yc - yt * np.cos(th)
        else:
            xu, yu = xc, yt
            xl, yl = xc, -yt
        # closed loop: TE -> upper -> LE -> lower -> TE
        xs = np.concatenate([xu[::-1], xl[1:-1]])
        ys = np.concatenate([yu[::-1], yl[1:-1]])
        pts = np.stack([xs, ys], axis=1) * chord
        a = np.deg2rad(alpha_deg)
        rot = np.array([[np.cos(a), np.sin(a)], [-np.sin(a), np.cos(a)]])
        pts = pts @ rot.T + np.asarray(le_pos, dtype=float)
        super().__init__(pts, l_ref=chord)
        self.chord = float(chord)
        self.alpha_deg = float(alpha_deg)


def channel_walls_polygon(x_lo, x_hi, y_lo, y_hi, margin=None):
    """C-shaped polygon whose in-domain parts are two horizontal wall slabs.

    Fluid occupies y_lo < y < y_hi; the slabs extend `margin` beyond the
    x-range and the connector closes the loop outside x_lo, so points inside
    [x_lo, x_hi] only ever see the two horizontal wall lines.
    """
    m = margin if margin is not None else 2.0 * (x_hi - x_lo)
    t = 0.5 * (y_hi - y_lo)  # slab thickness
    return Polygon2D([
        (x_hi + m, y_lo), (x_hi + m, y_lo - t),
        (x_lo - 2 * m, y_lo - t), (x_lo - 2 * m, y_hi + t),
        (x_hi + m, y_hi + t), (x_hi + m, y_hi),
        (x_lo - m, y_hi), (x_lo - m, y_lo),
    ], l_ref=(y_hi - y_lo))
