"""Segregated pressure-velocity solver with ghost-cell observer forcing.

One time step: freeze the observer forcings from the state at n, then loop
(momentum solve with the latest pressure) + (pressure correction) a fixed
number of times with an early exit. Face fluxes are momentum-weighted
(Rhie-Chow style): the pressure-free velocity u_hat = H/a_P is
interpolated to faces, and the pressure solve

    sum_f (V/(a_P rho))_f A_f (p_N - p_P)/d_f = sum_f u_hat_f . n A_f

restores a solenoidal face-flux field; cell velocities get the matching
(V/(a_P rho)) grad p correction. Solid cells away from the ghost layer are
held quiescent; ghost cells evolve under the PDE plus the forcing.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fvm import (
    CENTRAL_LINEAR,
    UPWIND,
    UPWIND_LIMITED,
    assemble_convection_diffusion,
    solve_general,
    solve_spd,
)
from .fvm.assemble import SCHEMES
from .grid import FLUID, SOLID, FieldSet
from .observer import ObserverParams, ObserverState, apply_velocity_forcing

log = logging.getLogger(__name__)

INLET = "inlet"
OUTLET = "outlet"
SLIP = "slip"
NOSLIP = "noslip"


class BlowupError(RuntimeError):
    """Runaway velocity detected; carries the offending magnitude."""

    def __init__(self, umax, limit, step):
        super().__init__(
            f"max|u| = {umax:.3e} exceeded {limit:.3e} at step {step}")
        self.umax = umax


@dataclass
class PisoConfig:
    nu: float
    rho: float = 1.0
    n_correctors: int = 3
    dt: float = None              # fixed step; None -> CFL-bound
    cfl: float = 0.5
    dt_max: float = None
    corrector_threshold: float = 1e-7  # on max|div u_hat| L_ref/U_ref
    scheme: str = CENTRAL_LINEAR
    time_order: int = 2
    p_tol: float = 1e-8
    u_tol: float = 1e-7
    U_ref: float = 1.0
    L_ref: float = 1.0
    blowup_factor: float = 100.0
    body_force: tuple = None
    max_iter: int = 4000

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("viscosity must be nonnegative")
        if self.n_correctors < 2:
            raise ValueError("need at least two pressure correctors")
        if self.dt is None and not (0 < self.cfl <= 0.9):
            raise ValueError("CFL must lie in (0, 0.9]")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown convection scheme {self.scheme!r}")


class PisoSolver:
    """Transient incompressible solver on one grid, optional immersed body.

    `bc` maps (axis, side) on non-periodic boundaries to (INLET, u_vec),
    (OUTLET, p_value), (SLIP,) or (NOSLIP,); slip is the default.
    """

    def __init__(self, grid, config, kinds=None, table=None,
                 observer_params=None, bc=None):
        self.grid = grid
        self.cfg = config
        self.fields = FieldSet(grid)
        self.kinds = kinds if kinds is not None else \
            np.full(grid.ncells, FLUID, dtype=np.int8)
        self.table = table
        t_advect = config.L_ref / config.U_ref
        self.obs_params = observer_params or ObserverParams(
            f0=config.U_ref / t_advect)
        self.obs_state = ObserverState(
            0 if table is None else table.ghost_indices.size)
        self.bc = dict(bc or {})
        for axis in range(grid.ndim):
            if not grid.periodic[axis]:
                for side in (0, 1):
                    self.bc.setdefault((axis, side), (SLIP,))
        self.phi = {ax: np.zeros(grid.interior_faces(ax)["nface"])
                    for ax in range(grid.ndim)}
        self.u_prev = None
        self.dt_prev = None
        self.time = 0.0
        self.step_count = 0
        self.last = {}
        self._fluid = self.kinds == FLUID
        self._solid_interior = self.kinds == SOLID

    # -- helpers -------------------------------------------------------

    def init_fluxes_from_cells(self):
        """Linear face interpolation of the current cell velocity."""
        for ax in range(self.grid.ndim):
            fc = self.grid.interior_faces(ax)
            u = self.fields.u[:, ax]
            uf = fc["wl"] * u[fc["left"]] + (1 - fc["wl"]) * u[fc["right"]]
            self.phi[ax] = uf * fc["area"]

    def _boundary_outflux(self, axis, side, u=None):
        """Outward volumetric flux at one boundary, per boundary face."""
        u = self.fields.u if u is None else u
        bf = self.grid.boundary_faces(axis, side)
        sign = 1.0 if side == 1 else -1.0
        kind = self.bc[(axis, side)]
        if kind[0] == INLET:
            fb = np.full(bf["cells"].size, float(kind[1][axis]) * sign)
        elif kind[0] == OUTLET:
            fb = u[bf["cells"], axis] * sign
        else:
            fb = np.zeros(bf["cells"].size)
        return fb * bf["area"], bf

    def div_flux(self, phi=None, u=None):
        """Per-cell divergence (1/V) of a face-flux field plus boundaries."""
        phi = self.phi if phi is None else phi
        g = self.grid
        div = np.zeros(g.ncells)
        for ax in range(g.ndim):
            fc = g.interior_faces(ax)
            np.add.at(div, fc["left"], phi[ax])
            np.add.at(div, fc["right"], -phi[ax])
            if not g.periodic[ax]:
                for side in (0, 1):
                    fb, bf = self._boundary_outflux(ax, side, u=u)
                    np.add.at(div, bf["cells"], fb)
        return div / g.volumes

    def pressure_gradient(self, p):
        """Green-Gauss cell gradient with boundary-consistent face values."""
        g = self.grid
        grad = np.zeros((g.ncells, g.ndim))
        for ax in range(g.ndim):
            fc = g.interior_faces(ax)
            pf = fc["wl"] * p[fc["left"]] + (1 - fc["wl"]) * p[fc["right"]]
            pA = pf * fc["area"]
            np.add.at(grad[:, ax], fc["left"], pA)
            np.add.at(grad[:, ax], fc["right"], -pA)
            if g.periodic[ax]:
                continue
            for side in (0, 1):
                bf = g.boundary_faces(ax, side)
                kind = self.bc[(ax, side)]
                pb = np.full(bf["cells"].size, float(kind[1])) \
                    if kind[0] == OUTLET else p[bf["cells"]]
                pA = pb * bf["area"]
                np.add.at(grad[:, ax], bf["cells"], -pA if side == 0 else pA)
        return grad / g.volumes[:, None]

    def _source(self):
        """Volume-integrated forcing + body-force momentum source.

        The body force stands in for a mean pressure gradient and is
        applied to fluid cells only; wall/ghost cells would otherwise
        need a larger counteracting forcing and jitter more.
        """
        src = self.fields.f_u * self.grid.volumes[:, None]
        if self.cfg.body_force is not None:
            w = self.grid.volumes * self._fluid
            src = src + np.asarray(self.cfg.body_force, dtype=float) \
                * w[:, None]
        return src

    def _time_rhs(self, u_n, dt):
        """(rhs arrays, diag coefficient, BDF ratio) of the time term."""
        w = self.grid.volumes / dt
        if self.cfg.time_order == 2 and self.u_prev is not None:
            r = dt / (self.dt_prev if self.dt_prev else dt)
            diag_t = w * (1.0 + 2.0 * r) / (1.0 + r)
            rhs_t = w[:, None] * ((1.0 + r) * u_n
                                  - (r * r / (1.0 + r)) * self.u_prev)
        else:
            diag_t = w
            rhs_t = w[:, None] * u_n
        return rhs_t, diag_t

    # -- PISO pieces ---------------------------------------------------

    def momentum_predict(self, dt, u_n=None, p=None):
        """Implicit momentum solve against the given (lagged) pressure.

        Returns (ustar, diag, A_off, rhs_t, src); the last three are the
        pieces pressure_correct reuses to form H without reassembly. src
        carries the boundary Dirichlet contributions so that H is the
        complete pressure-free right-hand side.
        """
        g = self.grid
        cfg = self.cfg
        f = self.fields
        u_n = f.u if u_n is None else u_n
        p = f.p if p is None else p
        limited = cfg.scheme == UPWIND_LIMITED
        sysm = assemble_convection_diffusion(
            g, self.phi, cfg.nu, scheme=UPWIND if limited else cfg.scheme)
        self._add_momentum_bc(sysm)
        rhs_t, diag_t = self._time_rhs(u_n, dt)
        diag = sysm.diag + diag_t
        A_off = sysm.offdiag_matrix()
        A = A_off + sp.diags(diag, format="csr")
        src = self._source()
        src = src + np.stack([self._momentum_bc_rhs(d)
                              for d in range(g.ndim)], axis=1)
        gp = self.pressure_gradient(p)
        ustar = np.empty_like(f.u)
        # absolute floor: a component at rest has |b| ~ roundoff and the
        # relative test tol*|b| is then unreachable
        u_floor = 1e-12 * np.linalg.norm(diag) * cfg.U_ref
        for d in range(g.ndim):
            b = (rhs_t[:, d] + src[:, d]
                 - gp[:, d] / cfg.rho * g.volumes)
            if limited:
                corr = assemble_convection_diffusion(
                    g, self.phi, 0.0, scheme=UPWIND_LIMITED,
                    phi_old=f.u[:, d])
                b = b + corr.rhs
            x, rep = solve_general(A, b, x0=f.u[:, d], tol=cfg.u_tol,
                                   tol_abs=u_floor, max_iter=cfg.max_iter)
            ustar[:, d] = x
            self.last[f"mom{d}"] = rep
        return ustar, diag, A_off, rhs_t, src

    def _add_momentum_bc(self, sysm):
        """Implicit boundary-face terms shared by all velocity components."""
        g = self.grid
        cfg = self.cfg
        for ax in range(g.ndim):
            if g.periodic[ax]:
                continue
            for side in (0, 1):
                kind = self.bc[(ax, side)]
                if kind[0] not in (INLET, NOSLIP):
                    continue  # outlet/slip boundary terms vanish
                bf = g.boundary_faces(ax, side)
                D = cfg.nu * bf["area"] / bf["half_dist"]
                np.add.at(sysm.diag, bf["cells"], D)
                if kind[0] == INLET:
                    fb, _ = self._boundary_outflux(ax, side)
                    np.add.at(sysm.diag, bf["cells"], -fb)

    def _momentum_bc_rhs(self, comp):
        g = self.grid
        cfg = self.cfg
        rhs = np.zeros(g.ncells)
        for ax in range(g.ndim):
            if g.periodic[ax]:
                continue
            for side in (0, 1):
                kind = self.bc[(ax, side)]
                if kind[0] != INLET:
                    continue
                bf = g.boundary_faces(ax, side)
                ub = float(kind[1][comp])
                D = cfg.nu * bf["area"] / bf["half_dist"]
                fb, _ = self._boundary_outflux(ax, side)
                np.add.at(rhs, bf["cells"], (D - fb) * ub)
        return rhs

    def pressure_correct(self, ustar, diag, A_off, rhs_t, src):
        """Pressure solve on u_hat and the conservative flux/cell update.

        Returns (p, u, phi, max_div_fluid, provisional_div).
        """
        g = self.grid
        cfg = self.cfg
        H = rhs_t + src - np.stack([A_off @ ustar[:, d]
                                    for d in range(g.ndim)], axis=1)
        uhat = H / diag[:, None]
        rD = g.volumes / diag  # (V/a_P), seconds
        gamma = {}
        phi_hat = {}
        div_hat = np.zeros(g.ncells)  # volume-integrated
        for ax in range(g.ndim):
            fc = g.interior_faces(ax)
            rDf = fc["wl"] * rD[fc["left"]] + (1 - fc["wl"]) * rD[fc["right"]]
            gamma[ax] = rDf / cfg.rho
            uf = (fc["wl"] * uhat[fc["left"], ax]
                  + (1 - fc["wl"]) * uhat[fc["right"], ax])
            phi_hat[ax] = uf * fc["area"]
            np.add.at(div_hat, fc["left"], phi_hat[ax])
            np.add.at(div_hat, fc["right"], -phi_hat[ax])
        anchored = False
        psys = assemble_convection_diffusion(g, None, gamma)
        for ax in range(g.ndim):
            if g.periodic[ax]:
                continue
            for side in (0, 1):
                kind = self.bc[(ax, side)]
                fb, bf = self._boundary_outflux(ax, side, u=uhat)
                np.add.at(div_hat, bf["cells"], fb)
                if kind[0] == OUTLET:
                    anchored = True
                    Db = (rD[bf["cells"]] / cfg.rho) * bf["area"] \
                        / bf["half_dist"]
                    np.add.at(psys.diag, bf["cells"], Db)
                    np.add.at(psys.rhs, bf["cells"], Db * float(kind[1]))
        psys.rhs -= div_hat
        Vmin = float(np.min(g.volumes))
        tol_abs = 0.1 * 1e-8 * (cfg.U_ref / cfg.L_ref) * Vmin
        # Jacobi-preconditioned CG: an incomplete factorization is not
        # symmetric under M-inner products and stalls on the singular
        # periodic operator
        A_p = psys.matrix()
        p_new, rep = solve_spd(
            A_p, psys.rhs, x0=self.fields.p, tol=cfg.p_tol,
            tol_abs=tol_abs, max_iter=cfg.max_iter,
            nullspace=None if anchored else "constant")
        self.last["poisson"] = rep
        phi = {}
        for ax in range(g.ndim):
            fc = g.interior_faces(ax)
            dp = p_new[fc["right"]] - p_new[fc["left"]]
            phi[ax] = phi_hat[ax] - gamma[ax] * fc["area"] * dp / fc["dist"]
        u_new = uhat - (rD / cfg.rho)[:, None] * self.pressure_gradient(p_new)
        # the Poisson residual is (minus) the divergence of the corrected
        # fluxes, including the boundary-face corrections the operator
        # models; the cell-velocity divergence differs at outlets
        div = (psys.rhs - A_p @ p_new) / g.volumes
        max_div = float(np.max(np.abs(div[self._fluid])))
        prov = float(np.max(np.abs(div_hat / g.volumes)))
        return p_new, u_new, phi, max_div, prov

    # -- time stepping -------------------------------------------------

    def pick_dt(self):
        if self.cfg.dt is not None:
            return self.cfg.dt
        worst = 0.0
        for ax in range(self.grid.ndim):
            fc = self.grid.interior_faces(ax)
            un = np.abs(self.phi[ax]) / fc["area"]
            worst = max(worst, float(np.max(un / fc["dist"])))
        if worst <= 0.0:
            if self.cfg.dt_max is None:
                raise ValueError(
                    "CFL-bound dt undefined on a quiescent field; set dt "
                    "or dt_max")
            return self.cfg.dt_max
        dt = self.cfg.cfl / worst
        if self.cfg.dt_max is not None:
            dt = min(dt, self.cfg.dt_max)
        return dt

    def piso_advance(self, dt=None):
        """One full time step; returns a diagnostics dict."""
        g = self.grid
        cfg = self.cfg
        f = self.fields
        dt = self.pick_dt() if dt is None else dt
        if self.table is not None and self.table.ghost_indices.size:
            apply_velocity_forcing(self.table, f, self.obs_state,
                                   self.obs_params)
        u_n = f.u.copy()
        p = f.p
        info = {"dt": dt, "correctors": 0}
        max_div = 0.0
        for k in range(cfg.n_correctors):
            ustar, diag, A_off, rhs_t, src = self.momentum_predict(
                dt, u_n=u_n, p=p)
            p, u_new, self.phi, max_div, prov = self.pressure_correct(
                ustar, diag, A_off, rhs_t, src)
            f.u[:] = u_new
            f.p[:] = p
            info["correctors"] = k + 1
            scaled = prov * cfg.L_ref / cfg.U_ref
            if k >= 1 and scaled < cfg.corrector_threshold:
                break
        f.u[self._solid_interior] = 0.0
        umax = float(np.max(np.abs(f.u)))
        if umax > cfg.blowup_factor * cfg.U_ref:
            raise BlowupError(umax, cfg.blowup_factor * cfg.U_ref,
                              self.step_count)
        self.u_prev = u_n
        self.dt_prev = dt
        self.time += dt
        self.step_count += 1
        info.update(max_div_fluid=max_div, umax=umax,
                    max_abs_E=self.obs_state.max_abs_E(), time=self.time)
        self.last["step"] = info
        return info

    def run(self, t_end, max_steps=10 ** 9, callback=None):
        while self.time < t_end - 1e-12 and self.step_count < max_steps:
            dt = self.pick_dt()
            dt = min(dt, t_end - self.time)
            info = self.piso_advance(dt)
            if callback is not None:
                callback(self, info)
        return self.last.get("step", {})


def taylor_green(grid, nu, t, rho=1.0):
    """Analytic decaying-vortex fields on the 2 pi periodic square."""
    xc = grid.all_centers()
    x, y = xc[:, 0], xc[:, 1]
    decay = np.exp(-2.0 * nu * t)
    u = np.sin(x) * np.cos(y) * decay
    v = -np.cos(x) * np.sin(y) * decay
    p = 0.25 * rho * (np.cos(2 * x) + np.cos(2 * y)) * decay * decay
    return u, v, p


def kinetic_energy(grid, fields, mask=None):
    w = grid.volumes if mask is None else grid.volumes * mask
    return 0.5 * float(np.sum(w * np.einsum("ij,ij->i", fields.u, fields.u)))
