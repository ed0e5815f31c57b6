"""Case files: strict schema checks, derived scales, solver assembly.

A case is a YAML mapping with sections ``case / solver / grid / body /
regime / numerics / init / run / output``.  Parsing is strict: unknown
keys anywhere are rejected, and every violation found is reported in one
shot rather than bailing at the first.  The normalized form (defaults
filled in) is what gets hashed, so two files that mean the same case get
the same hash.

All cases are nondimensional: unit free-stream speed, unit reference
length and unit density.  The Reynolds and Mach numbers then fix the
viscosity and the gas constants.
"""

import hashlib
import json

import numpy as np
import yaml

from .compressible import (
    ADIABATIC,
    ISOTHERMAL,
    CompressibleConfig,
    CompressibleSolver,
    GasModel,
    freestream_bc,
)
from .geometry import (
    Circle,
    Naca4,
    Polygon2D,
    Sphere,
    StencilTable,
    build_ghost_links,
    channel_walls_polygon,
    classify,
)
from .grid import FLUID, GridError, build_grid
from .incompressible import (
    INLET,
    NOSLIP,
    OUTLET,
    SLIP,
    PisoConfig,
    PisoSolver,
    taylor_green,
)
from .observer import ObserverParams

INCOMPRESSIBLE = "incompressible"
COMPRESSIBLE = "compressible"


class ConfigError(ValueError):
    """Invalid case file; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join("  - " + v for v in self.violations)
        super().__init__(f"invalid case configuration:\n{lines}")


_TOP = {"case", "solver", "grid", "body", "regime", "numerics",
        "init", "run", "output"}
_GRID = {"axes", "periodic"}
_AXIS = {"start", "zones"}
_ZONE = {"end", "h", "n", "h0", "h1"}
_BODY = {
    "circle": {"shape", "center", "radius"},
    "sphere": {"shape", "center", "radius"},
    "naca4": {"shape", "chord", "code", "alpha_deg", "le_pos", "n_side"},
    "polygon": {"shape", "vertices", "l_ref"},
    "channel": {"shape", "x_lo", "x_hi", "y_lo", "y_hi"},
}
_REGIME = {"Re", "Ma", "TR", "adiabatic", "Pr", "gamma",
           "U_inf", "rho_inf", "L_ref"}
_NUMERICS = {"scheme", "time_order", "cfl", "dt", "dt_max", "n_correctors",
             "p_tol", "u_tol", "corrector_threshold", "body_force",
             "max_iter", "observer"}
_OBSERVER = {"f0", "a", "eps_target", "seed_floor"}
_INIT = {"uniform": {"type"},
         "quiescent": {"type"},
         "taylor_green": {"type"},
         "sod": {"type", "x0", "left", "right"}}
_RUN = {"t_end_tA", "max_steps", "snapshot_every_tA", "checkpoint_every_tA",
        "series_every_steps", "averaging_window_tA"}
_OUTPUT = {"dir", "snapshot_format"}


def _unknown(section, allowed, path, bad):
    for key in section:
        if key not in allowed:
            bad.append(f"{path}.{key}: unknown key")


def _number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _need_pos(section, key, path, bad, strict=True):
    if key not in section:
        return None
    v = section[key]
    if not _number(v) or (v <= 0 if strict else v < 0):
        bad.append(f"{path}.{key}: must be a positive number")
        return None
    return float(v)


def _check_grid(grid, bad):
    if not isinstance(grid, dict):
        bad.append("grid: must be a mapping")
        return
    _unknown(grid, _GRID, "grid", bad)
    axes = grid.get("axes")
    if not isinstance(axes, list) or not 2 <= len(axes) <= 3:
        bad.append("grid.axes: need a list of 2 or 3 axis specs")
        return
    for i, ax in enumerate(axes):
        path = f"grid.axes[{i}]"
        if not isinstance(ax, dict):
            bad.append(f"{path}: must be a mapping")
            continue
        _unknown(ax, _AXIS, path, bad)
        if not _number(ax.get("start")):
            bad.append(f"{path}.start: required number")
        zones = ax.get("zones")
        if not isinstance(zones, list) or not zones:
            bad.append(f"{path}.zones: need a non-empty list")
            continue
        for j, z in enumerate(zones):
            zp = f"{path}.zones[{j}]"
            if not isinstance(z, dict):
                bad.append(f"{zp}: must be a mapping")
                continue
            _unknown(z, _ZONE, zp, bad)
            if not _number(z.get("end")):
                bad.append(f"{zp}.end: required number")
            ways = [k for k in ("h", "n") if k in z]
            if "h0" in z or "h1" in z:
                ways.append("h0/h1")
                if ("h0" in z) != ("h1" in z):
                    bad.append(f"{zp}: h0 and h1 go together")
            if len(ways) != 1:
                bad.append(f"{zp}: give exactly one of h, n, or h0+h1")
    per = grid.get("periodic")
    if per is not None:
        if (not isinstance(per, list) or len(per) != len(axes)
                or not all(isinstance(b, bool) for b in per)):
            bad.append("grid.periodic: need one bool per axis")


def _check_body(body, bad):
    if body is None:
        return
    if not isinstance(body, dict):
        bad.append("body: must be a mapping")
        return
    shape = body.get("shape")
    if shape not in _BODY:
        bad.append(f"body.shape: one of {sorted(_BODY)} required")
        return
    _unknown(body, _BODY[shape], "body", bad)
    if shape in ("circle", "sphere"):
        _need_pos(body, "radius", "body", bad)
        if "radius" not in body:
            bad.append("body.radius: required")
        dim = 3 if shape == "sphere" else 2
        c = body.get("center")
        if not (isinstance(c, list) and len(c) == dim
                and all(_number(v) for v in c)):
            bad.append(f"body.center: need {dim} numbers")
    elif shape == "naca4":
        if "chord" in body:
            _need_pos(body, "chord", "body", bad)
        code = body.get("code", "0012")
        if not (isinstance(code, (str, int))
                and len(str(code)) == 4 and str(code).isdigit()):
            bad.append("body.code: four digits expected")
    elif shape == "polygon":
        v = body.get("vertices")
        if not (isinstance(v, list) and len(v) >= 3):
            bad.append("body.vertices: need at least three points")
    elif shape == "channel":
        for key in ("x_lo", "x_hi", "y_lo", "y_hi"):
            if not _number(body.get(key)):
                bad.append(f"body.{key}: required number")


def _check_observer(obs, path, bad):
    if not isinstance(obs, dict):
        bad.append(f"{path}: must be a mapping")
        return
    per_var = any(k in ("u", "T", "rho") for k in obs)
    if per_var:
        _unknown(obs, {"u", "T", "rho"}, path, bad)
        for var, sub in obs.items():
            if isinstance(sub, dict):
                _unknown(sub, _OBSERVER, f"{path}.{var}", bad)
            else:
                bad.append(f"{path}.{var}: must be a mapping")
    else:
        _unknown(obs, _OBSERVER, path, bad)


def parse_config(text):
    """Parse a YAML case.  Returns a CaseConfig or raises ConfigError
    carrying every violation found."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"yaml: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a mapping"])

    bad = []
    _unknown(raw, _TOP, "top", bad)

    name = raw.get("case")
    if not isinstance(name, str) or not name:
        bad.append("case: required name string")
    solver = raw.get("solver")
    if solver not in (INCOMPRESSIBLE, COMPRESSIBLE):
        bad.append(f"solver: one of '{INCOMPRESSIBLE}', '{COMPRESSIBLE}'"
                   " required")
        solver = None

    _check_grid(raw.get("grid", {}) or {}, bad)
    _check_body(raw.get("body"), bad)

    regime = raw.get("regime", {}) or {}
    if not isinstance(regime, dict):
        bad.append("regime: must be a mapping")
        regime = {}
    _unknown(regime, _REGIME, "regime", bad)
    _need_pos(regime, "Re", "regime", bad)
    _need_pos(regime, "Ma", "regime", bad)
    _need_pos(regime, "TR", "regime", bad)
    _need_pos(regime, "Pr", "regime", bad)
    if "gamma" in regime and (not _number(regime["gamma"])
                              or regime["gamma"] <= 1.0):
        bad.append("regime.gamma: must exceed 1")
    if "adiabatic" in regime and not isinstance(regime["adiabatic"], bool):
        bad.append("regime.adiabatic: must be a bool")
    if solver == COMPRESSIBLE and "Ma" not in regime:
        bad.append("regime.Ma: required when solver=compressible")
    if solver == INCOMPRESSIBLE and "Ma" in regime:
        bad.append("regime.Ma: not allowed with solver=incompressible "
                   "(drop regime.Ma or set solver=compressible)")
    if "TR" in regime:
        if regime.get("adiabatic") is True:
            bad.append("regime.TR: conflicts with regime.adiabatic=true")
        if solver == INCOMPRESSIBLE:
            bad.append("regime.TR: wall heating needs solver=compressible")
        if raw.get("body") is None:
            bad.append("regime.TR: meaningless without a body")
    elif regime.get("adiabatic") is False:
        bad.append("regime.TR: required when regime.adiabatic=false")

    numerics = raw.get("numerics", {}) or {}
    if not isinstance(numerics, dict):
        bad.append("numerics: must be a mapping")
        numerics = {}
    _unknown(numerics, _NUMERICS, "numerics", bad)
    _need_pos(numerics, "cfl", "numerics", bad)
    _need_pos(numerics, "dt", "numerics", bad)
    _need_pos(numerics, "dt_max", "numerics", bad)
    _need_pos(numerics, "p_tol", "numerics", bad)
    _need_pos(numerics, "u_tol", "numerics", bad)
    if "observer" in numerics:
        _check_observer(numerics["observer"], "numerics.observer", bad)
    if "body_force" in numerics:
        bf = numerics["body_force"]
        if not (isinstance(bf, list) and all(_number(v) for v in bf)):
            bad.append("numerics.body_force: need a list of numbers")

    init = raw.get("init", {"type": "uniform"}) or {}
    if not isinstance(init, dict):
        bad.append("init: must be a mapping")
        init = {"type": "uniform"}
    itype = init.get("type", "uniform")
    if itype not in _INIT:
        bad.append(f"init.type: one of {sorted(_INIT)}")
    else:
        _unknown(init, _INIT[itype], "init", bad)
        if itype == "taylor_green" and solver == COMPRESSIBLE:
            bad.append("init.type: taylor_green needs the incompressible"
                       " solver")
        if itype == "sod":
            if solver == INCOMPRESSIBLE:
                bad.append("init.type: sod needs the compressible solver")
            for side in ("left", "right"):
                v = init.get(side)
                if v is not None and not (isinstance(v, list) and len(v) == 3
                                          and all(_number(x) for x in v)):
                    bad.append(f"init.{side}: need [rho, u, p]")

    run = raw.get("run")
    if not isinstance(run, dict):
        bad.append("run: section with t_end_tA required")
        run = {}
    _unknown(run, _RUN, "run", bad)
    t_end = _need_pos(run, "t_end_tA", "run", bad)
    if "t_end_tA" not in run:
        bad.append("run.t_end_tA: required")
    _need_pos(run, "snapshot_every_tA", "run", bad)
    _need_pos(run, "checkpoint_every_tA", "run", bad)
    avg = _need_pos(run, "averaging_window_tA", "run", bad)
    if avg is not None and t_end is not None and avg > t_end:
        bad.append("run.averaging_window_tA: exceeds run.t_end_tA")
    if "max_steps" in run and (not isinstance(run["max_steps"], int)
                               or run["max_steps"] <= 0):
        bad.append("run.max_steps: must be a positive integer")
    if "series_every_steps" in run and (
            not isinstance(run["series_every_steps"], int)
            or run["series_every_steps"] <= 0):
        bad.append("run.series_every_steps: must be a positive integer")

    output = raw.get("output", {}) or {}
    if not isinstance(output, dict):
        bad.append("output: must be a mapping")
        output = {}
    _unknown(output, _OUTPUT, "output", bad)
    if output.get("snapshot_format") not in (None, "ascii", "binary"):
        bad.append("output.snapshot_format: 'ascii' or 'binary'")

    if bad:
        raise ConfigError(bad)

    cfg = CaseConfig(_normalize(raw))
    try:
        cfg.build_grid()
        cfg.build_body()
    except (GridError, ValueError) as exc:
        raise ConfigError([str(exc)]) from exc
    return cfg


def load_case(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _normalize(raw):
    """Fill defaults; the result is the hashed, echoed form."""
    solver = raw["solver"]
    body = raw.get("body")
    regime = dict(raw.get("regime") or {})
    regime.setdefault("U_inf", 1.0)
    regime.setdefault("rho_inf", 1.0)
    regime.setdefault("gamma", 1.4)
    regime.setdefault("Pr", 0.72)
    regime.setdefault("adiabatic", "TR" not in regime)
    numerics = dict(raw.get("numerics") or {})
    numerics.setdefault("scheme", "central_linear")
    numerics.setdefault("time_order", 2)
    numerics.setdefault("cfl", 0.5 if solver == INCOMPRESSIBLE else 0.4)
    numerics.setdefault("n_correctors", 3)
    init = dict(raw.get("init") or {"type": "uniform"})
    init.setdefault("type", "uniform")
    if init["type"] == "sod":
        init.setdefault("x0", 0.5)
        init.setdefault("left", [1.0, 0.0, 1.0])
        init.setdefault("right", [0.125, 0.0, 0.1])
    run = dict(raw["run"])
    run.setdefault("series_every_steps", 5)
    output = dict(raw.get("output") or {})
    output.setdefault("dir", f"runs/{raw['case']}")
    output.setdefault("snapshot_format", "binary")
    data = {
        "case": raw["case"],
        "solver": solver,
        "grid": raw["grid"],
        "regime": regime,
        "numerics": numerics,
        "init": init,
        "run": run,
        "output": output,
    }
    if body is not None:
        data["body"] = body
    return data


def _canonical(data):
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


class CaseConfig:
    """Validated, normalized case.  Builds the grid, body, and solver."""

    def __init__(self, data):
        self.data = data

    @property
    def name(self):
        return self.data["case"]

    @property
    def solver_kind(self):
        return self.data["solver"]

    @property
    def hash(self):
        return hashlib.sha256(_canonical(self.data).encode()).hexdigest()

    def as_yaml(self):
        return yaml.safe_dump(self.data, sort_keys=True)

    # -- derived scales -------------------------------------------------

    @property
    def scales(self):
        """Free-stream scales; gas constants follow from Ma with T_inf=1."""
        r = self.data["regime"]
        U = float(r["U_inf"])
        rho = float(r["rho_inf"])
        L = float(r.get("L_ref", self._body_lref()))
        out = {"U": U, "rho": rho, "L": L, "t_A": L / U,
               "gamma": float(r["gamma"]), "Pr": float(r["Pr"])}
        if "Re" in r:
            out["mu"] = rho * U * L / float(r["Re"])
            out["nu"] = U * L / float(r["Re"])
        else:
            out["mu"] = 0.0
            out["nu"] = 0.0
        if "Ma" in r:
            c = U / float(r["Ma"])
            out["Ma"] = float(r["Ma"])
            out["c"] = c
            out["T_inf"] = 1.0
            out["R"] = c * c / out["gamma"]
            out["p_inf"] = rho * c * c / out["gamma"]
        return out

    def _body_lref(self):
        body = self.data.get("body")
        if body is None:
            return 1.0
        shape = body["shape"]
        if shape in ("circle", "sphere"):
            return 2.0 * float(body["radius"])
        if shape == "naca4":
            return float(body.get("chord", 1.0))
        if shape == "channel":
            return float(body["y_hi"]) - float(body["y_lo"])
        return float(body.get("l_ref") or 1.0)

    # -- construction ---------------------------------------------------

    def build_grid(self):
        g = self.data["grid"]
        per = g.get("periodic")
        return build_grid(g["axes"], periodic=per)

    def build_body(self):
        body = self.data.get("body")
        if body is None:
            return None
        shape = body["shape"]
        if shape == "circle":
            return Circle(tuple(body["center"]), body["radius"])
        if shape == "sphere":
            return Sphere(tuple(body["center"]), body["radius"])
        if shape == "naca4":
            return Naca4(body.get("chord", 1.0),
                         code=str(body.get("code", "0012")),
                         alpha_deg=body.get("alpha_deg", 0.0),
                         le_pos=tuple(body.get("le_pos", (0.0, 0.0))),
                         n_side=body.get("n_side", 400))
        if shape == "polygon":
            return Polygon2D([tuple(v) for v in body["vertices"]],
                             l_ref=body.get("l_ref"))
        return channel_walls_polygon(body["x_lo"], body["x_hi"],
                                     body["y_lo"], body["y_hi"])

    def _observer_params(self, sc):
        spec = self.data["numerics"].get("observer")
        default = ObserverParams(f0=sc["U"] ** 2 / sc["L"])
        if spec is None:
            return default
        if any(k in ("u", "T", "rho") for k in spec):
            out = {}
            for var in ("u", "T", "rho"):
                sub = spec.get(var)
                out[var] = ObserverParams(**sub) if sub else default
            return out
        kw = dict(spec)
        kw.setdefault("f0", sc["U"] ** 2 / sc["L"])
        return ObserverParams(**kw)

    def _classify(self, grid, body):
        if body is None:
            return None, None
        contact = self.data["body"]["shape"] == "channel"
        kinds = classify(grid, body, allow_boundary_contact=contact)
        table = StencilTable(build_ghost_links(grid, body, kinds))
        return kinds, table

    def build_solver(self):
        """Grid, body, regime, and initial state wired into a solver."""
        sc = self.scales
        grid = self.build_grid()
        body = self.build_body()
        kinds, table = self._classify(grid, body)
        num = self.data["numerics"]
        obs = self._observer_params(sc) if table is not None else None

        if self.solver_kind == INCOMPRESSIBLE:
            cfg = PisoConfig(
                nu=sc["nu"],
                rho=sc["rho"],
                n_correctors=num["n_correctors"],
                dt=num.get("dt"),
                cfl=num["cfl"],
                dt_max=num.get("dt_max"),
                scheme=num["scheme"],
                time_order=num["time_order"],
                corrector_threshold=num.get("corrector_threshold", 1e-7),
                p_tol=num.get("p_tol", 1e-8),
                u_tol=num.get("u_tol", 1e-7),
                U_ref=sc["U"],
                L_ref=sc["L"],
                body_force=tuple(num["body_force"])
                if num.get("body_force") else None,
                max_iter=num.get("max_iter", 4000),
            )
            solver = PisoSolver(grid, cfg, kinds=kinds, table=table,
                                observer_params=obs,
                                bc=self._incompressible_bc(grid, sc))
            self._init_incompressible(solver, sc)
        else:
            r = self.data["regime"]
            gas = GasModel(R=sc["R"], gamma=sc["gamma"],
                           mu=sc["mu"], Pr=sc["Pr"])
            cfg = CompressibleConfig(
                gas=gas,
                dt=num.get("dt"),
                cfl=num["cfl"],
                dt_max=num.get("dt_max"),
                wall_mode=ADIABATIC if r["adiabatic"] else ISOTHERMAL,
                T_wall=float(r["TR"]) * sc["T_inf"]
                if "TR" in r else None,
                u_tol=num.get("u_tol", 1e-10),
                max_iter=num.get("max_iter", 4000),
                U_ref=sc["U"],
                L_ref=sc["L"],
            )
            bc = {}
            if not all(grid.periodic):
                bc = freestream_bc(grid, sc["rho"],
                                   (sc["U"],) + (0.0,) * (grid.ndim - 1),
                                   sc["p_inf"])
            solver = CompressibleSolver(grid, cfg, kinds=kinds, table=table,
                                        observer_params=obs, bc=bc)
            self._init_compressible(solver, sc)
        return solver

    def _incompressible_bc(self, grid, sc):
        bc = {}
        channel = (self.data.get("body") or {}).get("shape") == "channel"
        for ax in range(grid.ndim):
            if grid.periodic[ax]:
                continue
            if ax == 0:
                u_in = (sc["U"],) + (0.0,) * (grid.ndim - 1)
                bc[(0, 0)] = (INLET, u_in)
                bc[(0, 1)] = (OUTLET, 0.0)
            else:
                kind = (NOSLIP,) if channel else (SLIP,)
                bc[(ax, 0)] = kind
                bc[(ax, 1)] = kind
        return bc

    def _init_incompressible(self, solver, sc):
        itype = self.data["init"]["type"]
        f = solver.fields
        if itype == "taylor_green":
            u, v, p = taylor_green(solver.grid, sc["nu"], 0.0, rho=sc["rho"])
            f.u[:, 0] = u
            f.u[:, 1] = v
            f.p[:] = p
        elif itype == "uniform":
            f.u[:] = 0.0
            f.u[solver.kinds == FLUID, 0] = sc["U"]
        elif itype == "quiescent":
            f.u[:] = 0.0
        else:
            raise ConfigError([f"init.type: {itype} not valid for the "
                               "incompressible solver"])
        solver.init_fluxes_from_cells()

    def _init_compressible(self, solver, sc):
        init = self.data["init"]
        n = solver.grid.ncells
        ndim = solver.grid.ndim
        if init["type"] == "sod":
            x = solver.grid.all_centers()[:, 0]
            left = np.asarray(init["left"], dtype=float)
            right = np.asarray(init["right"], dtype=float)
            sel = x < float(init["x0"])
            rho = np.where(sel, left[0], right[0])
            p = np.where(sel, left[2], right[2])
            u = np.zeros((n, ndim))
            u[:, 0] = np.where(sel, left[1], right[1])
            solver.set_state(rho, u, p)
            return
        u = np.zeros((n, ndim))
        if init["type"] == "uniform":
            u[solver.kinds == FLUID, 0] = sc["U"]
        solver.set_state(sc["rho"], u, sc["p_inf"],
                         quiescent=(sc["rho"], sc["p_inf"]))


__all__ = ["COMPRESSIBLE", "INCOMPRESSIBLE", "CaseConfig", "ConfigError",
           "load_case", "parse_config"]
