"""Pure-numpy reference implementations of the hot kernels."""

import numpy as np


def muscl_faces(q, xc, xf):
    """Limited piecewise-linear face states along the last axis.

    Parameters
    ----------
    q : (m, n) array
        Cell values along m independent lines.
    xc : (n,) array
        Cell-center coordinates.
    xf : (n-1,) array
        Interior face coordinates.

    Returns
    -------
    qL, qR : (m, n-1) arrays
        Left/right extrapolated states at each interior face, using van Leer
        (harmonic-mean) limited slopes. End cells get zero slope.
    """
    q = np.ascontiguousarray(q, dtype=np.float64)
    dq = q[:, 1:] - q[:, :-1]
    g = dq / (xc[1:] - xc[:-1])
    gm = g[:, :-1]
    gp = g[:, 1:]
    prod = gm * gp
    denom = np.where(prod > 0.0, gm + gp, 1.0)
    slopes = np.zeros_like(q)
    slopes[:, 1:-1] = np.where(prod > 0.0, 2.0 * prod / denom, 0.0)
    qL = q[:, :-1] + slopes[:, :-1] * (xf - xc[:-1])
    qR = q[:, 1:] + slopes[:, 1:] * (xf - xc[1:])
    return qL, qR


def knp_flux_batch(rhoL, rhoR, uL, uR, pL, pR, nax, gamma):
    """Central-upwind convective fluxes for a batch of faces.

    States are primitives at the two sides of each face; `uL`/`uR` are
    (nf, 3) velocity vectors and `nax` selects the normal component
    (0, 1 or 2; the face normal is the positive axis direction).
    Pressure is NOT part of the returned fluxes; the weighted face pressure
    is returned separately for the split -grad p / -grad(p u) terms.

    Returns
    -------
    fm : (nf,) mass flux rho u_n
    fmom : (nf, 3) momentum flux (rho u) u_n
    fe : (nf,) total-energy flux (rho e_t) u_n
    pf : (nf,) central-upwind weighted face pressure
    amax : (nf,) max signal speed (for diagnostics)
    """
    nf = rhoL.shape[0]
    unL = uL[:, nax]
    unR = uR[:, nax]
    cL = np.sqrt(gamma * pL / rhoL)
    cR = np.sqrt(gamma * pR / rhoR)
    ap = np.maximum(np.maximum(unL + cL, unR + cR), 0.0)
    am = np.minimum(np.minimum(unL - cL, unR - cR), 0.0)
    spread = ap - am
    # spread > 0 always (c > 0); psi in [0, 1]
    psi = ap / spread
    omg = -ap * am / spread

    keL = 0.5 * np.einsum('ij,ij->i', uL, uL)
    keR = 0.5 * np.einsum('ij,ij->i', uR, uR)
    etL = pL / ((gamma - 1.0) * rhoL) + keL
    etR = pR / ((gamma - 1.0) * rhoR) + keR

    volL = psi * unL
    volR = (1.0 - psi) * unR
    fm = rhoL * volL + rhoR * volR - omg * (rhoR - rhoL)
    fmom = np.empty((nf, 3))
    for k in range(3):
        fmom[:, k] = (rhoL * uL[:, k] * volL + rhoR * uR[:, k] * volR
                      - omg * (rhoR * uR[:, k] - rhoL * uL[:, k]))
    fe = (rhoL * etL * volL + rhoR * etR * volR
          - omg * (rhoR * etR - rhoL * etL))
    pf = psi * pL + (1.0 - psi) * pR
    amax = np.maximum(np.abs(ap), np.abs(am))
    return fm, fmom, fe, pf, amax


def gather_weighted(values, idx, w, indptr):
    """CSR-style weighted gather: out[k] = sum w[j]*values[idx[j]] over segment k."""
    nseg = indptr.shape[0] - 1
    seg = np.repeat(np.arange(nseg), np.diff(indptr))
    return np.bincount(seg, weights=w * values[idx], minlength=nseg)
