from .bodies import (ImplicitBody, EmptyBody, Circle, Sphere, Polygon2D,
                     Naca4, channel_walls_polygon)
from .links import (GhostLink, StencilTable, classify, build_ghost_links,
                    interpolate_stencil, sample_at_mirror, GeometryError)

__all__ = [
    "ImplicitBody", "EmptyBody", "Circle", "Sphere", "Polygon2D", "Naca4",
    "channel_walls_polygon", "GhostLink", "StencilTable", "classify",
    "build_ghost_links", "interpolate_stencil", "sample_at_mirror",
    "GeometryError",
]
