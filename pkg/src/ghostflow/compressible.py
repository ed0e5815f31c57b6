"""Five-step density-based stepper for viscous compressible flow.

Convective face fluxes are evaluated once per step from the old state
with the central-upwind scheme; face pressures ride along separately so
the pressure work and gradient terms reuse exactly the same surface
values. The sequence per step: explicit mass, explicit inviscid
momentum, an implicit constant-viscosity diffusion correction, explicit
total energy, explicit sensible-energy conduction, then a perfect-gas
sync of temperature and pressure.

Immersed walls act through observer forcings at ghost cells. Interior
solid cells stay frozen at a quiescent reference state and are cut out
of the diffusion operators at assembly time, so conservation sums over
the active cells close against the bookkept boundary and solid-face
exchange terms.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fvm.assemble import assemble_convection_diffusion
from .fvm.flux import (FREESTREAM, TRANSMISSIVE, compute_knp_faces, div_pu,
                       divergence, pressure_gradient)
from .fvm.linsolve import solve_spd
from .grid import FLUID, SOLID, FieldSet
from .observer import (ADIABATIC, ISOTHERMAL, ObserverParams, ObserverState,
                       apply_thermal_forcings, apply_velocity_forcing)

log = logging.getLogger(__name__)

__all__ = ["GasModel", "CompressibleConfig", "CompressibleSolver",
           "PositivityError", "freestream_bc"]


@dataclass(frozen=True)
class GasModel:
    """Calorically perfect gas with constant transport coefficients.

    Conductivity follows from the viscosity through a fixed Prandtl
    number, so an inviscid gas is also non-conducting.
    """

    R: float = 287.0
    gamma: float = 1.4
    mu: float = 0.0
    Pr: float = 0.72

    def __post_init__(self):
        if self.R <= 0.0 or self.gamma <= 1.0:
            raise ValueError("need R > 0 and gamma > 1")
        if self.mu < 0.0 or self.Pr <= 0.0:
            raise ValueError("need mu >= 0 and Pr > 0")

    @property
    def cv(self):
        return self.R / (self.gamma - 1.0)

    @property
    def cp(self):
        return self.gamma * self.R / (self.gamma - 1.0)

    @property
    def conductivity(self):
        return self.mu * self.cp / self.Pr

    def sound_speed(self, rho, p):
        return np.sqrt(self.gamma * np.asarray(p) / np.asarray(rho))


class PositivityError(RuntimeError):
    """Density or sensible energy left the physical range."""

    def __init__(self, name, value, cell, point, step, time):
        pt = tuple(float(np.round(c, 8)) for c in point)
        super().__init__(f"{name} = {value:.6e} at cell {cell} {pt} "
                         f"(step {step}, t = {time:.6e})")
        self.name = name
        self.value = value
        self.cell = cell


@dataclass
class CompressibleConfig:
    gas: GasModel = None
    dt: float = None            # fixed step; None picks from the CFL number
    cfl: float = 0.4            # acoustic Courant number over active cells
    dt_max: float = None
    wall_mode: str = ADIABATIC
    T_wall: float = None
    u_tol: float = 1e-10        # implicit diffusion solve, relative
    max_iter: int = 4000
    U_ref: float = None         # only needed for default observer scaling
    L_ref: float = None

    def __post_init__(self):
        if self.gas is None:
            raise ValueError("a GasModel is required")
        if not 0.0 < self.cfl <= 0.5:
            raise ValueError("acoustic CFL must lie in (0, 0.5]")
        if self.dt is not None and self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.wall_mode not in (ADIABATIC, ISOTHERMAL):
            raise ValueError(f"unknown wall mode {self.wall_mode!r}")
        if self.wall_mode == ISOTHERMAL and (self.T_wall is None
                                             or self.T_wall <= 0.0):
            raise ValueError("isothermal walls need T_wall > 0")


def freestream_bc(grid, rho, u, p, inflow=(0, 0)):
    """Fixed far-field state on one side, transmissive everywhere else.

    `inflow` is the (axis, side) pair holding the full state; every
    other non-periodic side extrapolates with zero gradient.
    """
    state = {"rho": float(rho), "u": np.asarray(u, dtype=float),
             "p": float(p)}
    bc = {}
    for ax in range(grid.ndim):
        if grid.periodic[ax]:
            continue
        for side in (0, 1):
            if (ax, side) == tuple(inflow):
                bc[(ax, side)] = (FREESTREAM, state)
            else:
                bc[(ax, side)] = (TRANSMISSIVE,)
    return bc


class CompressibleSolver:
    """Marches the coupled mass, momentum, and energy updates.

    Cells tagged SOLID never change and carry the quiescent reference
    state; ghost cells evolve freely under the same discrete equations
    plus the observer forcings that steer them toward mirrored wall
    targets. Pass `observer_params` as one ObserverParams (shared) or a
    dict with "u", "T", "rho" entries to tune each variable.
    """

    def __init__(self, grid, config, kinds=None, table=None,
                 observer_params=None, bc=None):
        self.grid = grid
        self.cfg = config
        self.gas = config.gas
        self.fields = FieldSet(grid)
        self.kinds = kinds if kinds is not None else \
            np.full(grid.ncells, FLUID, dtype=np.int8)
        self.table = table
        self.bc = bc if bc is not None else {}
        self.alive = self.kinds != SOLID
        self.fluid = self.kinds == FLUID

        if table is not None:
            self.obs = ObserverState(table.ghost_indices.size)
            if observer_params is None:
                if config.U_ref is None or config.L_ref is None:
                    raise ValueError("observer forcing needs U_ref and "
                                     "L_ref or explicit parameters")
                f0 = config.U_ref * config.U_ref / config.L_ref
                observer_params = ObserverParams(f0=f0)
            if isinstance(observer_params, ObserverParams):
                observer_params = {v: observer_params
                                   for v in ("u", "T", "rho")}
            for v in ("u", "T", "rho"):
                if v not in observer_params:
                    raise ValueError(f"missing observer parameters for {v!r}")
            self.obs_params = observer_params
        else:
            self.obs = None
            self.obs_params = None

        # per-cell spacing along each axis, for the acoustic step limit
        self._h = []
        for ax in range(grid.ndim):
            stride = int(np.prod(grid.dims[ax + 1:]))
            ia = (np.arange(grid.ncells) // stride) % grid.dims[ax]
            self._h.append(grid.spacings[ax][ia])

        sysm = self._masked_diffusion(self.gas.mu) if self.gas.mu > 0 else None
        self._visc_off = sysm.offdiag_matrix() if sysm is not None else None
        self._visc_diag = sysm.diag if sysm is not None else None
        lam = self.gas.conductivity
        self._A_lam = self._masked_diffusion(lam).matrix() if lam > 0 else None

        # interior faces with exactly one frozen side, for the mass audit
        self._solid_faces = []
        for ax in range(grid.ndim):
            fc = grid.interior_faces(ax)
            la, ra = self.alive[fc["left"]], self.alive[fc["right"]]
            mixed = la != ra
            if np.any(mixed):
                sel = np.where(mixed)[0]
                # +1 where the frozen cell sits on the right: positive
                # flux then drains the active side
                sgn = np.where(ra[sel], -1.0, 1.0)
                self._solid_faces.append((ax, sel, sgn, fc["area"][sel]))

        self.quiescent = None
        self.rho_et = np.zeros(grid.ncells)
        self.time = 0.0
        self.step_count = 0
        self.mass_injected = 0.0     # sum f_rho V dt
        self.mass_boundary = 0.0     # net outflow through domain sides
        self.mass_solid = 0.0        # net leak into frozen cells

    # --- setup --------------------------------------------------------

    def _masked_diffusion(self, gamma0):
        """Diffusion operator with faces to frozen cells blanked.

        Zeroing the per-face coefficient (rather than the assembled
        rows) keeps the matrix symmetric with zero row sums, so global
        sums over the active cells still telescope.
        """
        gam = {}
        for ax in range(self.grid.ndim):
            fc = self.grid.interior_faces(ax)
            open_face = self.alive[fc["left"]] & self.alive[fc["right"]]
            gam[ax] = np.where(open_face, float(gamma0), 0.0)
        return assemble_convection_diffusion(self.grid, None, gam)

    def set_state(self, rho, u, p, quiescent=None):
        """Load primitive fields and derive the thermodynamic rest.

        `quiescent` optionally fixes the frozen solid state as a
        (rho, p) pair; by default the fluid volume means are used.
        """
        f = self.fields
        f.rho[:] = rho
        f.u[:] = np.broadcast_to(np.asarray(u, dtype=float), f.u.shape)
        f.p[:] = p
        if np.any(f.rho[self.alive] <= 0.0) or np.any(f.p[self.alive] <= 0.0):
            raise ValueError("initial state must have positive rho and p")
        if quiescent is not None:
            r0, p0 = float(quiescent[0]), float(quiescent[1])
        else:
            sel = self.fluid if np.any(self.fluid) else self.alive
            w = self.grid.volumes[sel]
            r0 = float(np.sum(f.rho[sel] * w) / np.sum(w))
            p0 = float(np.sum(f.p[sel] * w) / np.sum(w))
        T0 = p0 / (r0 * self.gas.R)
        self.quiescent = {"rho": r0, "p": p0, "T": T0,
                          "e_s": self.gas.cv * T0}
        self._freeze_solid()
        f.T[:] = f.p / (f.rho * self.gas.R)
        f.e_s[:] = self.gas.cv * f.T
        self.rho_et = f.rho * (f.e_s + 0.5 * np.sum(f.u ** 2, axis=1))

    def _freeze_solid(self):
        sol = ~self.alive
        if not np.any(sol):
            return
        q = self.quiescent
        f = self.fields
        f.rho[sol] = q["rho"]
        f.u[sol] = 0.0
        f.p[sol] = q["p"]
        f.T[sol] = q["T"]
        f.e_s[sol] = q["e_s"]

    # --- step pieces --------------------------------------------------

    def pick_dt(self):
        """Acoustic limit over active cells plus an explicit-diffusion
        guard for the conduction and stress-remainder terms."""
        f = self.fields
        c = self.gas.sound_speed(f.rho, f.p)
        s = np.zeros(self.grid.ncells)
        for ax in range(self.grid.ndim):
            s += (np.abs(f.u[:, ax]) + c) / self._h[ax]
        dt = self.cfg.cfl / float(np.max(s[self.alive]))
        diff = max(4.0 * self.gas.mu / 3.0,
                   self.gas.conductivity / self.gas.cv)
        if diff > 0.0:
            r = np.zeros(self.grid.ncells)
            for ax in range(self.grid.ndim):
                r += 1.0 / self._h[ax] ** 2
            sv = diff * r / f.rho
            dt = min(dt, 0.25 / float(np.max(sv[self.alive])))
        if self.cfg.dt_max is not None:
            dt = min(dt, self.cfg.dt_max)
        return dt

    def mass_step(self, faces, dt):
        """Explicit conservative density update with the ghost source."""
        f = self.fields
        rho_new = f.rho - dt * divergence(self.grid, faces, "fm") \
            + dt * f.f_rho
        rho_new[~self.alive] = f.rho[~self.alive]
        self._require_positive("density", rho_new)
        return rho_new

    def momentum_inviscid_step(self, faces, dt):
        """Explicit momentum update from convection and old pressure."""
        f = self.fields
        g = self.grid
        mom = f.rho[:, None] * f.u
        gp = pressure_gradient(g, faces)
        for d in range(g.ndim):
            mom[:, d] -= dt * (divergence(g, faces, "fmom", component=d)
                               + gp[:, d])
        return mom

    def momentum_viscous_correct(self, rho_new, mom_star, dt):
        """Implicit diffusion solve on the provisional velocity.

        The straight Laplacian part of the stress goes implicit; the
        transpose and dilatation remainder, a third of grad(div u) for
        constant viscosity, is added explicitly at the provisional
        velocity. Ghost momentum forcing enters here scaled by the new
        density. Inviscid gas reduces to plain algebra plus forcing.
        """
        f = self.fields
        g = self.grid
        u_star = mom_star / rho_new[:, None]
        if self._visc_off is None:
            u_new = u_star + dt * f.f_u
            u_new[~self.alive] = 0.0
            return u_new
        rem = (self.gas.mu / 3.0) * self._cell_grad(self._cell_div(u_star))
        w = g.volumes
        a_t = w / dt * rho_new
        diag = a_t + self._visc_diag
        A = self._visc_off + sp.diags(diag, format="csr")
        scale = max(float(np.max(np.abs(u_star[self.alive]))),
                    float(np.max(self.gas.sound_speed(
                        f.rho[self.alive], f.p[self.alive]))))
        floor = 1e-12 * float(np.linalg.norm(diag)) * scale
        u_new = np.empty_like(u_star)
        x0 = np.where(self.alive[:, None], u_star, 0.0)
        for d in range(g.ndim):
            b = a_t * u_star[:, d] + rem[:, d] * w \
                + rho_new * f.f_u[:, d] * w
            b[~self.alive] = 0.0
            u_new[:, d], rep = solve_spd(
                A, b, x0=x0[:, d], tol=self.cfg.u_tol, tol_abs=floor,
                max_iter=self.cfg.max_iter)
        u_new[~self.alive] = 0.0
        return u_new

    def energy_steps(self, faces, rho_new, u_new, dt):
        """Total-energy update, then the sensible-energy correction.

        Pressure work uses the stored old-time face pressures with the
        end-of-step velocity; viscous work is a cell-level divergence of
        tau(u_new) . u_new. Conduction acts explicitly on the
        provisional sensible temperature, and the ghost heat source
        lands on the corrected equation.
        """
        f = self.fields
        g = self.grid
        ke_new = 0.5 * np.sum(u_new ** 2, axis=1)
        et_n = f.rho * (f.e_s + 0.5 * np.sum(f.u ** 2, axis=1))
        rhs = -divergence(g, faces, "fe") - div_pu(g, faces, u_new)
        if self.gas.mu > 0.0:
            rhs = rhs + self._cell_div(self._stress_power(u_new))
        ret_star = et_n + dt * rhs
        es_star = ret_star / rho_new - ke_new
        self._require_positive("sensible energy", es_star)
        es_new = es_star
        if self._A_lam is not None:
            T_star = es_star / self.gas.cv
            es_new = es_new - dt * (self._A_lam @ T_star) \
                / (g.volumes * rho_new)
        es_new = es_new + dt * self.gas.cv * f.f_T
        es_new[~self.alive] = f.e_s[~self.alive]
        self._require_positive("sensible energy", es_new)
        return es_new

    # --- cell-level derivatives ---------------------------------------

    def _cell_grad(self, s):
        """Green-Gauss gradient with zero-gradient closure at walls."""
        g = self.grid
        out = np.zeros((g.ncells, g.ndim))
        for ax in range(g.ndim):
            fc = g.interior_faces(ax)
            sf = fc["wl"] * s[fc["left"]] + (1.0 - fc["wl"]) * s[fc["right"]]
            fa = sf * fc["area"]
            np.add.at(out[:, ax], fc["left"], fa)
            np.add.at(out[:, ax], fc["right"], -fa)
            if not g.periodic[ax]:
                for side, sgn in ((0, -1.0), (1, 1.0)):
                    bf = g.boundary_faces(ax, side)
                    out[bf["cells"], ax] += sgn * s[bf["cells"]] * bf["area"]
        return out / g.volumes[:, None]

    def _cell_div(self, w):
        g = self.grid
        out = np.zeros(g.ncells)
        for ax in range(g.ndim):
            fc = g.interior_faces(ax)
            wf = fc["wl"] * w[fc["left"], ax] \
                + (1.0 - fc["wl"]) * w[fc["right"], ax]
            fa = wf * fc["area"]
            np.add.at(out, fc["left"], fa)
            np.add.at(out, fc["right"], -fa)
            if not g.periodic[ax]:
                for side, sgn in ((0, -1.0), (1, 1.0)):
                    bf = g.boundary_faces(ax, side)
                    out[bf["cells"]] += sgn * w[bf["cells"], ax] * bf["area"]
        return out / g.volumes

    def _stress_power(self, u):
        """tau(u) . u at cell centers from Green-Gauss gradients."""
        g = self.grid
        nd = g.ndim
        mu = self.gas.mu
        G = np.stack([self._cell_grad(u[:, i]) for i in range(nd)], axis=1)
        divu = np.trace(G, axis1=1, axis2=2)
        tau = mu * (G + np.swapaxes(G, 1, 2))
        idx = np.arange(nd)
        tau[:, idx, idx] -= (2.0 * mu / 3.0) * divu[:, None]
        return np.einsum("cij,ci->cj", tau, u)

    # --- stepping -----------------------------------------------------

    def _require_positive(self, name, arr):
        bad = (arr <= 0.0) & self.alive
        if np.any(bad):
            masked = np.where(self.alive, arr, np.inf)
            i = int(np.argmin(masked))
            raise PositivityError(name, float(arr[i]), i,
                                  self.grid.all_centers()[i],
                                  self.step_count, self.time)

    def advance(self, dt=None):
        """One full step; returns a small diagnostics dict."""
        if self.quiescent is None:
            raise RuntimeError("call set_state before advancing")
        f = self.fields
        if dt is None:
            dt = self.cfg.dt if self.cfg.dt is not None else self.pick_dt()
        faces = compute_knp_faces(self.grid, f, self.gas, self.bc)
        if self.table is not None:
            apply_velocity_forcing(self.table, f, self.obs,
                                   self.obs_params["u"])
            apply_thermal_forcings(self.table, f, self.obs,
                                   self.obs_params["T"],
                                   self.obs_params["rho"],
                                   self.cfg.wall_mode, self.cfg.T_wall)
        rho_new = self.mass_step(faces, dt)
        mom_star = self.momentum_inviscid_step(faces, dt)
        u_new = self.momentum_viscous_correct(rho_new, mom_star, dt)
        es_new = self.energy_steps(faces, rho_new, u_new, dt)
        self._bookkeep(faces, dt)
        self._commit(rho_new, u_new, es_new, dt)
        return {"dt": dt, "time": self.time, "step": self.step_count,
                "min_rho": float(np.min(rho_new[self.alive])),
                "min_T": float(np.min(es_new[self.alive]) / self.gas.cv),
                "max_umag": float(np.max(np.linalg.norm(
                    u_new[self.alive], axis=1))),
                "max_abs_E": self.obs.max_abs_E() if self.obs else {}}

    def _bookkeep(self, faces, dt):
        f = self.fields
        self.mass_injected += dt * float(
            np.sum(f.f_rho * self.grid.volumes))
        for (ax, side), bd in faces.boundary.items():
            out = float(np.sum(bd["fm"] * bd["area"]))
            self.mass_boundary += dt * (out if side == 1 else -out)
        for ax, sel, sgn, area in self._solid_faces:
            fm = faces.interior[ax]["fm"][sel]
            self.mass_solid += dt * float(np.sum(fm * sgn * area))

    def _commit(self, rho_new, u_new, es_new, dt):
        f = self.fields
        f.rho[:] = rho_new
        f.u[:] = u_new
        f.e_s[:] = es_new
        f.T[:] = es_new / self.gas.cv
        f.p[:] = rho_new * self.gas.R * f.T
        self._freeze_solid()
        self.rho_et = f.rho * (f.e_s + 0.5 * np.sum(f.u ** 2, axis=1))
        self.time += dt
        self.step_count += 1

    def mass_totals(self):
        """Closure data for the global mass audit.

        Over any number of steps the identity
        mass - mass0 = injected - boundary_out - into_solid
        holds to round-off because every term reuses the same face
        fluxes the density update consumed.
        """
        M = float(np.sum(self.fields.rho[self.alive]
                         * self.grid.volumes[self.alive]))
        return {"mass": M, "injected": self.mass_injected,
                "boundary_out": self.mass_boundary,
                "into_solid": self.mass_solid}

    def run(self, t_end=None, max_steps=None, callback=None):
        """Advance until a target time or step count, whichever first.

        With a time target the last step is clipped to land exactly on
        t_end. Returns the final diagnostics dict."""
        if t_end is None and max_steps is None:
            raise ValueError("need t_end or max_steps")
        info = None
        steps = 0
        while True:
            if max_steps is not None and steps >= max_steps:
                break
            if t_end is not None:
                left = t_end - self.time
                if left <= 1e-12 * max(abs(t_end), 1.0):
                    break
                dt = self.cfg.dt if self.cfg.dt is not None else self.pick_dt()
                info = self.advance(min(dt, left))
            else:
                info = self.advance()
            steps += 1
            if callback is not None:
                callback(self, info)
        return info
