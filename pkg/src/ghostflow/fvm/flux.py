"""Central-upwind convective fluxes with limited linear reconstruction.

The convected variables (rho, rho u, rho e_t) are fluxed with the
two-speed central-upwind formula; the pressure is deliberately NOT folded
into these fluxes. Each face instead reports the wave-speed-weighted face
pressure, which the compressible stepper uses for its separate -grad(p)
and -div(p u) terms. Face states come from van Leer limited piecewise
linear reconstruction along each axis (first-order at non-periodic ends).
"""

from dataclasses import dataclass, field

import numpy as np

from ..kernels import knp_flux_batch, muscl_faces

TRANSMISSIVE = "transmissive"
FREESTREAM = "freestream"


def _gamma_of(gas):
    return float(getattr(gas, "gamma", gas))


def kt_flux(left, right, normal, gas):
    """Reference single-face flux; states are (rho, u_vec, p) tuples.

    Returns (mass flux, momentum flux vector, total-energy flux, face
    pressure, max signal speed), all per unit area, positive along
    `normal`. The batch kernel is checked against this implementation.
    """
    gamma = _gamma_of(gas)
    rhoL, uL, pL = left
    rhoR, uR, pR = right
    uL = np.asarray(uL, dtype=float)
    uR = np.asarray(uR, dtype=float)
    n = np.asarray(normal, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise ValueError("face normal must be a unit vector")
    if rhoL <= 0 or rhoR <= 0:
        raise ValueError("nonpositive density in a face state")
    if pL <= 0 or pR <= 0:
        raise ValueError("nonpositive pressure in a face state")
    unL = float(uL @ n)
    unR = float(uR @ n)
    cL = np.sqrt(gamma * pL / rhoL)
    cR = np.sqrt(gamma * pR / rhoR)
    ap = max(unL + cL, unR + cR, 0.0)
    am = min(unL - cL, unR - cR, 0.0)
    spread = ap - am
    psi = ap / spread
    omg = -ap * am / spread
    etL = pL / ((gamma - 1.0) * rhoL) + 0.5 * float(uL @ uL)
    etR = pR / ((gamma - 1.0) * rhoR) + 0.5 * float(uR @ uR)
    volL = psi * unL
    volR = (1.0 - psi) * unR
    fm = rhoL * volL + rhoR * volR - omg * (rhoR - rhoL)
    fmom = (rhoL * uL * volL + rhoR * uR * volR
            - omg * (rhoR * uR - rhoL * uL))
    fe = (rhoL * etL * volL + rhoR * etR * volR
          - omg * (rhoR * etR - rhoL * etL))
    pf = psi * pL + (1.0 - psi) * pR
    return fm, fmom, fe, pf, max(abs(ap), abs(am))


@dataclass
class KnpFaces:
    """Per-face flux data for one evaluation of the compressible RHS."""
    interior: dict = field(default_factory=dict)
    boundary: dict = field(default_factory=dict)
    max_signal_over_dx: float = 0.0


def _pencils(grid, arr, axis):
    Q = np.asarray(arr).reshape(grid.dims)
    return np.ascontiguousarray(np.moveaxis(Q, axis, -1)).reshape(
        -1, grid.dims[axis])


def _faces_to_flat(grid, F, axis):
    """Pencil-ordered face values -> the grid's flat interior-face order."""
    dims_other = tuple(d for i, d in enumerate(grid.dims) if i != axis)
    G = F.reshape(dims_other + (F.shape[1],))
    return np.ascontiguousarray(np.moveaxis(G, -1, axis)).reshape(-1)


def _check_positive(name, *arrs):
    bad = 0
    for a in arrs:
        bad += int(np.count_nonzero(a <= 0.0))
    if bad:
        raise ValueError(f"{bad} nonpositive {name} face states")


def compute_knp_faces(grid, fields, gas, bc=None):
    """Evaluate convective face fluxes for the whole grid.

    `bc` maps (axis, side) to (TRANSMISSIVE,) or (FREESTREAM, state) for
    non-periodic boundaries, where state is a dict with rho, u, p; the
    default is transmissive. Face arrays follow grid.interior_faces
    ordering; boundary entries follow grid.boundary_faces.
    """
    gamma = _gamma_of(gas)
    bc = bc or {}
    ndim = grid.ndim
    names = ["rho"] + [f"u{d}" for d in range(ndim)] + ["p"]
    prim = [fields.rho] + [fields.u[:, d] for d in range(ndim)] + [fields.p]
    out = KnpFaces()
    worst = 0.0
    for axis in range(ndim):
        fc = grid.interior_faces(axis)
        n = grid.dims[axis]
        xc = grid.centers[axis]
        f = grid.faces[axis]
        q = np.concatenate([_pencils(grid, a, axis) for a in prim], axis=0)
        m = q.shape[0] // len(prim)
        if grid.periodic[axis]:
            period = grid.hi[axis] - grid.lo[axis]
            qp = np.concatenate([q[:, -2:], q, q[:, :2]], axis=1)
            xcp = np.concatenate([xc[-2:] - period, xc, xc[:2] + period])
            xfp = np.concatenate([[f[-2] - period], f, [f[1] + period]])
            qLp, qRp = muscl_faces(qp, xcp, xfp)
            qLp = qLp[:, 2:n + 2]
            qRp = qRp[:, 2:n + 2]
        else:
            qLp, qRp = muscl_faces(q, xc, f[1:-1])
        # reorder pencil face values into the flat face ordering
        sL = {names[k]: _faces_to_flat(grid, qLp[k * m:(k + 1) * m], axis)
              for k in range(len(names))}
        sR = {names[k]: _faces_to_flat(grid, qRp[k * m:(k + 1) * m], axis)
              for k in range(len(names))}
        _check_positive("density", sL["rho"], sR["rho"])
        _check_positive("pressure", sL["p"], sR["p"])
        uL3 = np.zeros((fc["nface"], 3))
        uR3 = np.zeros((fc["nface"], 3))
        for d in range(ndim):
            uL3[:, d] = sL[f"u{d}"]
            uR3[:, d] = sR[f"u{d}"]
        fm, fmom, fe, pf, amax = knp_flux_batch(
            sL["rho"], sR["rho"], uL3, uR3, sL["p"], sR["p"], axis, gamma)
        out.interior[axis] = {"fm": fm, "fmom": fmom[:, :ndim], "fe": fe,
                              "pf": pf}
        worst = max(worst, float(np.max(amax / fc["dist"])) if fc["nface"]
                    else 0.0)
        if grid.periodic[axis]:
            continue
        for side in (0, 1):
            bf = grid.boundary_faces(axis, side)
            cells = bf["cells"]
            inside = {nm: prim[k][cells] for k, nm in enumerate(names)}
            kind = bc.get((axis, side), (TRANSMISSIVE,))
            if kind[0] == FREESTREAM:
                fs = kind[1]
                outside = {"rho": np.full(cells.size, float(fs["rho"])),
                           "p": np.full(cells.size, float(fs["p"]))}
                for d in range(ndim):
                    outside[f"u{d}"] = np.full(cells.size, float(fs["u"][d]))
            elif kind[0] == TRANSMISSIVE:
                outside = inside
            else:
                raise ValueError(f"unknown boundary kind {kind[0]!r}")
            lo, hi = (outside, inside) if side == 0 else (inside, outside)
            uL3 = np.zeros((cells.size, 3))
            uR3 = np.zeros((cells.size, 3))
            for d in range(ndim):
                uL3[:, d] = lo[f"u{d}"]
                uR3[:, d] = hi[f"u{d}"]
            fm, fmom, fe, pf, amax = knp_flux_batch(
                lo["rho"], hi["rho"], uL3, uR3, lo["p"], hi["p"], axis, gamma)
            u_out = (np.asarray(kind[1]["u"], dtype=float)
                     if kind[0] == FREESTREAM else None)
            out.boundary[(axis, side)] = {
                "fm": fm, "fmom": fmom[:, :ndim], "fe": fe, "pf": pf,
                "cells": cells, "area": bf["area"], "u_out": u_out}
            dx = grid.spacings[axis][0 if side == 0 else -1]
            worst = max(worst, float(np.max(amax)) / dx)
    out.max_signal_over_dx = worst
    return out


def divergence(grid, faces, key, component=None):
    """(1/V) sum of outward face fluxes of one stored flux component."""
    div = np.zeros(grid.ncells)
    for axis, data in faces.interior.items():
        fc = grid.interior_faces(axis)
        F = data[key] if component is None else data[key][:, component]
        FA = F * fc["area"]
        np.add.at(div, fc["left"], FA)
        np.add.at(div, fc["right"], -FA)
    for (axis, side), data in faces.boundary.items():
        F = data[key] if component is None else data[key][:, component]
        FA = F * data["area"]
        np.add.at(div, data["cells"], -FA if side == 0 else FA)
    return div / grid.volumes


def pressure_gradient(grid, faces):
    """(ncells, ndim) gradient of the face pressures, (1/V) sum p_f n A."""
    grad = np.zeros((grid.ncells, grid.ndim))
    for axis, data in faces.interior.items():
        fc = grid.interior_faces(axis)
        pA = data["pf"] * fc["area"]
        np.add.at(grad[:, axis], fc["left"], pA)
        np.add.at(grad[:, axis], fc["right"], -pA)
    for (axis, side), data in faces.boundary.items():
        pA = data["pf"] * data["area"]
        np.add.at(grad[:, axis], data["cells"], -pA if side == 0 else pA)
    return grad / grid.volumes[:, None]


def div_pu(grid, faces, u):
    """(1/V) sum p_f (u . n) A with face-normal velocity from `u`.

    The stored face pressures are combined with linear face interpolation
    of the given (typically end-of-step) velocity field.
    """
    out = np.zeros(grid.ncells)
    for axis, data in faces.interior.items():
        fc = grid.interior_faces(axis)
        un = (fc["wl"] * u[fc["left"], axis]
              + (1.0 - fc["wl"]) * u[fc["right"], axis])
        FA = data["pf"] * un * fc["area"]
        np.add.at(out, fc["left"], FA)
        np.add.at(out, fc["right"], -FA)
    for (axis, side), data in faces.boundary.items():
        un = (data["u_out"][axis] if data["u_out"] is not None
              else u[data["cells"], axis])
        FA = data["pf"] * un * data["area"]
        np.add.at(out, data["cells"], -FA if side == 0 else FA)
    return out / grid.volumes
