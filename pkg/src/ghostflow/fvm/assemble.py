"""Finite-volume operator assembly on the structured grid.

Sign convention: a system A phi = b discretizes the equation with all
implicit operators moved to the left, scaled by cell volume. Convection is
assembled in advective form, sum_f phi_conv(phi_f - phi_P), so a constant
field produces an exactly zero interior residual for any face-flux field;
diffusion rows are sum_f D_f (phi_P - phi_N) with D_f = Gamma_f A_f / d_f,
which keeps the pure-diffusion block symmetric.
"""

import numpy as np
import scipy.sparse as sp

CENTRAL_LINEAR = "central_linear"
UPWIND = "upwind"
UPWIND_LIMITED = "upwind_limited"
SCHEMES = (CENTRAL_LINEAR, UPWIND, UPWIND_LIMITED)


class SparseSystem:
    """Diagonal + face-pair off-diagonal coefficients and a RHS.

    Off-diagonal entries are accumulated in COO pieces and merged on
    demand; duplicate (row, col) pairs sum, so contributions from several
    operators can be concatenated freely.
    """

    def __init__(self, n):
        self.n = n
        self.diag = np.zeros(n)
        self.rhs = np.zeros(n)
        self._rows = []
        self._cols = []
        self._vals = []

    def add_offdiag(self, rows, cols, vals):
        self._rows.append(np.asarray(rows, dtype=np.int64))
        self._cols.append(np.asarray(cols, dtype=np.int64))
        self._vals.append(np.asarray(vals, dtype=np.float64))

    def add(self, other):
        """Accumulate another contribution in place."""
        if other.n != self.n:
            raise ValueError("system size mismatch")
        self.diag += other.diag
        self.rhs += other.rhs
        self._rows.extend(other._rows)
        self._cols.extend(other._cols)
        self._vals.extend(other._vals)
        return self

    def offdiag_matrix(self):
        """CSR matrix of the off-diagonal coefficients only."""
        if self._rows:
            rows = np.concatenate(self._rows)
            cols = np.concatenate(self._cols)
            vals = np.concatenate(self._vals)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        return sp.coo_matrix((vals, (rows, cols)),
                             shape=(self.n, self.n)).tocsr()

    def matrix(self):
        return self.offdiag_matrix() + sp.diags(self.diag, format="csr")

    def residual(self, x):
        return self.rhs - self.matrix() @ x


def _face_gamma(gamma, fc, axis, n):
    """Per-face diffusivity from a scalar, per-cell, or per-axis-face input."""
    if isinstance(gamma, dict):
        g = np.asarray(gamma[axis], dtype=float)
        if g.shape != (fc["nface"],):
            raise ValueError("per-face diffusivity has wrong length")
        return g
    g = np.asarray(gamma, dtype=float)
    if g.ndim == 0:
        return np.full(fc["nface"], float(g))
    if g.shape != (n,):
        raise ValueError("diffusivity must be scalar, per-cell, or per-face")
    # distance-weighted linear interpolation to the face
    return fc["wl"] * g[fc["left"]] + (1.0 - fc["wl"]) * g[fc["right"]]


def assemble_convection_diffusion(grid, u_face=None, gamma=0.0,
                                  scheme=CENTRAL_LINEAR, phi_old=None):
    """Implicit convection-diffusion contribution.

    u_face: per-axis dict of signed face fluxes (positive along +axis) on
    the grid's interior-face ordering; None means pure diffusion. The
    limited scheme assembles implicit upwind plus a deferred van Leer
    correction evaluated at `phi_old`.
    """
    gmin = np.min(list(map(np.min, gamma.values()))) if isinstance(gamma, dict) \
        else np.min(gamma)
    if gmin < 0:
        raise ValueError("negative diffusivity")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == UPWIND_LIMITED and u_face is not None and phi_old is None:
        raise ValueError("limited scheme needs phi_old for the correction")
    sysm = SparseSystem(grid.ncells)
    for axis in range(grid.ndim):
        fc = grid.interior_faces(axis)
        L, R = fc["left"], fc["right"]
        D = _face_gamma(gamma, fc, axis, grid.ncells) * fc["area"] / fc["dist"]
        np.add.at(sysm.diag, L, D)
        np.add.at(sysm.diag, R, D)
        sysm.add_offdiag(L, R, -D)
        sysm.add_offdiag(R, L, -D)
        if u_face is None:
            continue
        phi = np.asarray(u_face[axis], dtype=float)
        if scheme == CENTRAL_LINEAR:
            cL = phi * (1.0 - fc["wl"])
            cR = phi * fc["wl"]
            np.add.at(sysm.diag, L, -cL)
            sysm.add_offdiag(L, R, cL)
            np.add.at(sysm.diag, R, cR)
            sysm.add_offdiag(R, L, -cR)
        else:
            # advective upwind: only the downwind row sees the face
            pos = phi >= 0.0
            np.add.at(sysm.diag, R[pos], phi[pos])
            sysm.add_offdiag(R[pos], L[pos], -phi[pos])
            neg = ~pos
            np.add.at(sysm.diag, L[neg], -phi[neg])
            sysm.add_offdiag(L[neg], R[neg], phi[neg])
            if scheme == UPWIND_LIMITED:
                delta = _limited_correction(grid, axis, fc, phi, phi_old)
                np.add.at(sysm.rhs, L, -phi * delta)
                np.add.at(sysm.rhs, R, phi * delta)
    return sysm


def _limited_correction(grid, axis, fc, flux, phi_old):
    """Face-value increment (limited minus upwind) from the old field.

    van Leer limiter on the upwind slope ratio; faces lacking a far-upwind
    neighbor (non-periodic ends) or with a flat downwind gap revert to
    plain upwind.
    """
    n_ax = grid.dims[axis]
    stride = int(np.prod(grid.dims[axis + 1:]))
    pos = flux >= 0.0
    C = np.where(pos, fc["left"], fc["right"])
    Dn = np.where(pos, fc["right"], fc["left"])
    i_c = (C // stride) % n_ax
    step = np.where(pos, -1, 1)
    i_uu_raw = i_c + step
    if grid.periodic[axis]:
        have_uu = np.ones(i_c.shape, dtype=bool)
        i_uu = i_uu_raw % n_ax
    else:
        have_uu = (i_uu_raw >= 0) & (i_uu_raw < n_ax)
        i_uu = np.where(have_uu, i_uu_raw, i_c)
    UU = C + (i_uu - i_c) * stride
    pC, pD, pUU = phi_old[C], phi_old[Dn], phi_old[UU]
    dcd = pD - pC
    ducd = pC - pUU
    tiny = np.abs(dcd) < 1e-300
    r = np.where(tiny, 0.0, ducd / np.where(tiny, 1.0, dcd))
    psi = (r + np.abs(r)) / (1.0 + np.abs(r))
    psi = np.where(have_uu, psi, 0.0)
    w_c = np.where(pos, fc["wl"], 1.0 - fc["wl"])
    return psi * (1.0 - w_c) * dcd


def assemble_time_derivative(grid, phi_n, dt, order=1, phi_nm1=None,
                             dt_prev=None, coeff=None):
    """Backward time-derivative contribution (V/dt scaled).

    Order 2 is the variable-step backward-difference formula using the
    previous step length; missing history falls back to order 1. `coeff`
    optionally scales V/dt per cell (e.g. a density for conservative
    variables).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if order not in (1, 2):
        raise ValueError("time order must be 1 or 2")
    sysm = SparseSystem(grid.ncells)
    w = grid.volumes / dt
    if coeff is not None:
        w = w * np.asarray(coeff, dtype=float)
    if order == 1 or phi_nm1 is None:
        sysm.diag += w
        sysm.rhs += w * phi_n
        return sysm
    r = dt / (dt_prev if dt_prev is not None else dt)
    sysm.diag += w * (1.0 + 2.0 * r) / (1.0 + r)
    sysm.rhs += w * ((1.0 + r) * phi_n - r * r / (1.0 + r) * phi_nm1)
    return sysm
