"""Ghost-cell target values and the observer forcing laws.

The forcing is a saturated feedback on the normalized discrepancy
E = (target - value) / max(|target|, eps): seeded as f0 E/(a+|E|) and then
evolved multiplicatively, f += |f| E/(a+|E|). Since the update scales with
|f| it can shrink the forcing toward zero but never flip its sign, so f = 0
is absorbing and a forcing stuck on the wrong side of zero can only creep
toward it. Components that oppose the discrepancy AND have decayed to a
small fraction of f0 are re-seeded from the init law, which restores the
correct sign at the saturated-proportional magnitude. Large opposing
forcings are left to the bare update on purpose: when the equilibrium
forcing is far from zero (a wall cell balancing shear from the fluid side),
a transient sign flip of E must shrink f gradually, not reset it, or the
learned magnitude is lost every time the controlled value crosses its
target. Vector variables are treated fully componentwise.
"""

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

ADIABATIC = "adiabatic"
ISOTHERMAL = "isothermal"


@dataclass
class ObserverParams:
    """Gain parameters for one controlled variable.

    f0: seed forcing magnitude (host-equation RHS units).
    a: stiffness of the saturated gain, > 0.
    eps_target: floor for |target| in the normalization. For targets that
        are exactly zero this floor sets the proportional band of the
        feedback; leaving it at machine-small values makes the update
        bang-bang there.
    seed_floor: multiple of f0 below which an opposing forcing is
        re-seeded instead of decayed. f0 is the scale that separates
        "re-seedable" from "learned" magnitudes.
    """
    f0: float
    a: float = 1.0
    eps_target: float = 1e-8
    seed_floor: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.f0):
            raise ValueError("f0 must be finite")
        if self.a <= 0:
            raise ValueError("a must be positive")
        if self.eps_target <= 0:
            raise ValueError("eps_target must be positive")
        if self.seed_floor < 0:
            raise ValueError("seed_floor must be nonnegative")


def normalized_discrepancy(alpha_G, alpha_target, eps_target):
    alpha_G = np.asarray(alpha_G, dtype=float)
    alpha_target = np.asarray(alpha_target, dtype=float)
    denom = np.maximum(np.abs(alpha_target), eps_target)
    return (alpha_target - alpha_G) / denom


def forcing_init(params, alpha_G, alpha_target):
    """Seed forcing f0 E/(a+|E|); saturates below f0 for any E."""
    E = normalized_discrepancy(alpha_G, alpha_target, params.eps_target)
    return params.f0 * E / (params.a + np.abs(E))


def forcing_update(f_prev, params, alpha_G, alpha_target):
    """One forcing step f + |f| E/(a+|E|), re-seeding the absorbing basin.

    Components whose forcing is (near) zero while opposing the current
    discrepancy can only decay asymptotically under the bare update, so
    they restart from the init law. Opposing forcings still larger than
    seed_floor*f0 keep their magnitude and shrink multiplicatively.
    """
    f_prev = np.asarray(f_prev, dtype=float)
    E = normalized_discrepancy(alpha_G, alpha_target, params.eps_target)
    gain = E / (params.a + np.abs(E))
    updated = f_prev + np.abs(f_prev) * gain
    reseed = ((f_prev * E <= 0.0) & (E != 0.0)
              & (np.abs(f_prev) <= params.seed_floor * params.f0))
    return np.where(reseed, params.f0 * gain, updated), E


def target_velocity(u_M):
    """No-slip by antisymmetry: the ghost mirrors the fluid velocity."""
    return -np.asarray(u_M, dtype=float)


def target_temperature(mode, T_M, T_W=None):
    T_M = np.asarray(T_M, dtype=float)
    if mode == ADIABATIC:
        return T_M.copy()
    if mode == ISOTHERMAL:
        if T_W is None:
            raise ValueError("isothermal mode needs the wall temperature")
        out = 2.0 * np.asarray(T_W, dtype=float) - T_M
        nbad = int(np.count_nonzero(out <= 0.0))
        if nbad:
            log.warning("clamped %d nonpositive isothermal targets", nbad)
            out = np.where(out <= 0.0, np.finfo(float).tiny, out)
        return out
    raise ValueError(f"unknown thermal mode {mode!r}")


def target_density(rho_M, T_M, T_G_target):
    """Perfect-gas wall target: ghost pressure matches the mirror pressure."""
    rho_M = np.asarray(rho_M, dtype=float)
    T_G_target = np.asarray(T_G_target, dtype=float)
    if np.any(T_G_target <= 0):
        raise ValueError("nonpositive target temperature")
    return rho_M * np.asarray(T_M, dtype=float) / T_G_target


class ObserverState:
    """Per-ghost, per-variable forcing memory.

    Arrays are allocated on first update: scalars as (nghost,), the velocity
    as (nghost, ndim). Keeps the previous forcing and the last normalized
    discrepancy for logging and checkpointing.
    """

    def __init__(self, nghost):
        self.nghost = nghost
        self.f = {}
        self.f_prev = {}
        self.E = {}

    def advance(self, var, params, alpha_G, alpha_target):
        """Init-or-update the forcing for one variable; returns the field."""
        if var not in self.f:
            f_new = forcing_init(params, alpha_G, alpha_target)
            E = normalized_discrepancy(alpha_G, alpha_target,
                                       params.eps_target)
        else:
            f_new, E = forcing_update(self.f[var], params, alpha_G,
                                      alpha_target)
        if not np.all(np.isfinite(f_new)):
            raise FloatingPointError(f"non-finite {var} forcing")
        self.f_prev[var] = self.f.get(var)
        self.f[var] = f_new
        self.E[var] = E
        return f_new

    def max_abs_E(self):
        return {var: (float(np.max(np.abs(E))) if E.size else 0.0)
                for var, E in self.E.items()}

    def to_arrays(self):
        out = {}
        for var, arr in self.f.items():
            out[f"obs_f_{var}"] = arr
            out[f"obs_E_{var}"] = self.E[var]
        return out

    def load_arrays(self, data):
        for key, arr in data.items():
            if key.startswith("obs_f_"):
                self.f[key[6:]] = np.array(arr)
            elif key.startswith("obs_E_"):
                self.E[key[6:]] = np.array(arr)


def apply_velocity_forcing(table, fields, state, params):
    """Write f_u at ghost cells from mirror-sampled velocity targets.

    `table` is the StencilTable of the ghost links; targets scale with the
    ratio r = |GW|/|WM| so wall-coincident ghosts (r = 0) are driven to the
    wall value itself.
    """
    gi = table.ghost_indices
    ndim = fields.u.shape[1]
    u_M = np.stack([table.sample(fields.u[:, d]) for d in range(ndim)],
                   axis=1)
    target = table.r_ratio[:, None] * target_velocity(u_M)
    f_new = state.advance("u", params, fields.u[gi], target)
    fields.f_u[:] = 0.0
    fields.f_u[gi] = f_new
    return target


def apply_thermal_forcings(table, fields, state, params_T, params_rho,
                           mode, T_wall=None):
    """Write f_T and f_rho at ghost cells (compressible solver only)."""
    gi = table.ghost_indices
    T_M = table.sample(fields.T)
    rho_M = table.sample(fields.rho)
    if mode == ADIABATIC:
        T_target = target_temperature(ADIABATIC, T_M)
    else:
        r = table.r_ratio
        # r-scaled linear extrapolation through the wall value
        T_target = T_wall + r * (T_wall - T_M)
        bad = T_target <= 0.0
        if np.any(bad):
            T_target = np.where(bad, np.finfo(float).tiny, T_target)
    rho_target = target_density(rho_M, T_M, T_target)
    f_T = state.advance("T", params_T, fields.T[gi], T_target)
    f_rho = state.advance("rho", params_rho, fields.rho[gi], rho_target)
    fields.f_T[:] = 0.0
    fields.f_T[gi] = f_T
    fields.f_rho[:] = 0.0
    fields.f_rho[gi] = f_rho
    return T_target, rho_target
