"""Run orchestration: the time loop and every artifact it leaves behind.

A run directory belongs to exactly one configuration.  The config hash
is stamped into ``run.json``, the series CSV, snapshot titles, and the
checkpoints; a directory whose stamp disagrees with the active config is
refused rather than silently mixed.

Checkpoints capture the complete marching state (including the pressure
fluxes, the previous-step velocity, and the observer forcing memory), so
a resumed run reproduces an uninterrupted one bit for bit.
"""

import json
import math
import time as _time
from pathlib import Path

import numpy as np
import yaml

from .compressible import CompressibleSolver, ISOTHERMAL
from .config import CaseConfig
from .geometry import Sphere
from .incompressible import kinetic_energy
from .kernels import set_workers
from .post import (
    CoefficientSeries,
    Reference,
    force_coefficients,
    nusselt,
    panelize,
    strouhal,
    surface_sample,
)
from .vtk_io import write_snapshot


class ProvenanceError(RuntimeError):
    """Output directory holds artifacts from a different configuration."""


def reference_area(body):
    """Frontal reference: disk area for spheres, l_ref per unit span."""
    if isinstance(body, Sphere):
        return math.pi * body.radius ** 2
    return body.l_ref


class Runner:
    def __init__(self, case, out_dir=None, workers=1, max_steps=None):
        if not isinstance(case, CaseConfig):
            raise TypeError("case must be a CaseConfig")
        self.case = case
        self.sc = case.scales
        self.out = Path(out_dir or case.data["output"]["dir"])
        self.workers = int(workers)
        set_workers(self.workers)
        run = case.data["run"]
        self.max_steps = max_steps if max_steps is not None \
            else run.get("max_steps")
        self.out.mkdir(parents=True, exist_ok=True)
        self._claim_output()

        self.solver = case.build_solver()
        self.body = case.build_body()
        self.series = CoefficientSeries()
        self.nu_t = []
        self.nu_vals = []
        self._wire_surface()
        if case.data["init"]["type"] == "taylor_green":
            self.ke0 = kinetic_energy(self.solver.grid, self.solver.fields)
        else:
            self.ke0 = None
        if isinstance(self.solver, CompressibleSolver):
            self.mass0 = self.solver.mass_totals()["mass"]
        else:
            self.mass0 = None

    # -- provenance -----------------------------------------------------

    def _claim_output(self):
        stamp = self.out / "run.json"
        if stamp.exists():
            with open(stamp, encoding="utf-8") as fh:
                seen = json.load(fh)
            if seen.get("hash") != self.case.hash:
                raise ProvenanceError(
                    f"{self.out} was produced by config {seen.get('hash')}"
                    f" but the active case hashes to {self.case.hash};"
                    " refusing to mix outputs")
        elif any(self.out.iterdir()):
            raise ProvenanceError(
                f"{self.out} is not empty and carries no run.json;"
                " refusing to write into it")
        else:
            self._write_stamp([])

    def _write_stamp(self, artifacts, runtime=None):
        data = {"case": self.case.name, "hash": self.case.hash,
                "artifacts": sorted(artifacts)}
        if runtime is not None:
            data["runtime_s"] = round(float(runtime), 3)
        tmp = self.out / "run.json.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=1)
            fh.write("\n")
        tmp.replace(self.out / "run.json")

    # -- surface sampling ----------------------------------------------

    def _wire_surface(self):
        shape = (self.case.data.get("body") or {}).get("shape")
        if self.body is None or shape == "channel":
            self.panels = None
            self.ref = None
            return
        self.panels = panelize(self.body)
        sc = self.sc
        self.ref = Reference(sc["rho"], sc["U"], sc.get("p_inf", 0.0),
                             reference_area(self.body), mu=sc["mu"])

    def _sample_surface(self):
        if self.panels is None:
            return
        s = self.solver
        samples = surface_sample(s.grid, s.fields, self.panels)
        co = force_coefficients(self.panels, samples, self.ref)
        self.series.append(s.time, co)
        cfg = getattr(s, "cfg", None)
        if (isinstance(s, CompressibleSolver)
                and cfg.wall_mode == ISOTHERMAL):
            nu = nusselt(self.panels, samples, s.gas.conductivity,
                         cfg.T_wall, self.sc["T_inf"], self.body.l_ref)
            self.nu_t.append(s.time)
            self.nu_vals.append(nu)

    # -- checkpoints ----------------------------------------------------

    def save_checkpoint(self, path):
        s = self.solver
        f = s.fields
        data = {
            "config_hash": self.case.hash,
            "solver": self.case.solver_kind,
            "time": s.time, "step": s.step_count,
            "rho": f.rho, "u": f.u, "p": f.p, "T": f.T, "e_s": f.e_s,
            "f_rho": f.f_rho, "f_u": f.f_u, "f_T": f.f_T,
            "series_t": np.asarray(self.series.t),
            "series_CL": np.asarray(self.series.C_L),
            "series_CD": np.asarray(self.series.C_D),
            "series_CDp": np.asarray(self.series.C_Dp),
            "series_CDv": np.asarray(self.series.C_Dv),
            "nu_t": np.asarray(self.nu_t),
            "nu_vals": np.asarray(self.nu_vals),
        }
        if isinstance(s, CompressibleSolver):
            data["rho_et"] = s.rho_et
            data["mass_acc"] = np.array([s.mass_injected, s.mass_boundary,
                                         s.mass_solid, self.mass0])
            data["quiescent"] = np.array([s.quiescent["rho"],
                                          s.quiescent["p"]])
        else:
            for ax, phi in s.phi.items():
                data[f"phi_{ax}"] = phi
            if s.u_prev is not None:
                data["u_prev"] = s.u_prev
                data["dt_prev"] = s.dt_prev
        obs = getattr(s, "obs", None) or getattr(s, "obs_state", None)
        if obs is not None:
            data.update(obs.to_arrays())
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, **data)
        tmp.replace(path)

    def load_checkpoint(self, path):
        z = np.load(path)
        if str(z["config_hash"]) != self.case.hash:
            raise ProvenanceError(
                f"checkpoint {path} belongs to config {z['config_hash']}")
        s = self.solver
        f = s.fields
        for name in ("rho", "u", "p", "T", "e_s", "f_rho", "f_u", "f_T"):
            getattr(f, name)[...] = z[name]
        s.time = float(z["time"])
        s.step_count = int(z["step"])
        if isinstance(s, CompressibleSolver):
            s.rho_et = np.array(z["rho_et"])
            acc = z["mass_acc"]
            s.mass_injected, s.mass_boundary, s.mass_solid = (
                float(acc[0]), float(acc[1]), float(acc[2]))
            self.mass0 = float(acc[3])
            r0, p0 = float(z["quiescent"][0]), float(z["quiescent"][1])
            T0 = p0 / (r0 * s.gas.R)
            s.quiescent = {"rho": r0, "p": p0, "T": T0,
                           "e_s": s.gas.cv * T0}
        else:
            for ax in s.phi:
                s.phi[ax][...] = z[f"phi_{ax}"]
            if "u_prev" in z.files:
                s.u_prev = np.array(z["u_prev"])
                s.dt_prev = float(z["dt_prev"])
        obs = getattr(s, "obs", None) or getattr(s, "obs_state", None)
        if obs is not None:
            obs.load_arrays({k: z[k] for k in z.files
                             if k.startswith("obs_")})
        self.series = CoefficientSeries()
        self.series.t.extend(z["series_t"].tolist())
        self.series.C_L.extend(z["series_CL"].tolist())
        self.series.C_D.extend(z["series_CD"].tolist())
        self.series.C_Dp.extend(z["series_CDp"].tolist())
        self.series.C_Dv.extend(z["series_CDv"].tolist())
        self.nu_t = z["nu_t"].tolist()
        self.nu_vals = z["nu_vals"].tolist()

    # -- artifacts ------------------------------------------------------

    def _snapshot(self):
        s = self.solver
        name = f"step_{s.step_count:08d}.vtk"
        path = self.out / "snapshots" / name
        path.parent.mkdir(exist_ok=True)
        title = f"{self.case.name} config={self.case.hash}"
        write_snapshot(
            path, s.grid, s.fields, kinds=s.kinds, title=title,
            binary=self.case.data["output"]["snapshot_format"] == "binary")
        return f"snapshots/{name}"

    def _flush_series(self):
        if self.series.t:
            self.series.write_csv(self.out / "series.csv",
                                  comment=f"config: {self.case.hash}")
            return ["series.csv"]
        return []

    # -- the loop -------------------------------------------------------

    def run(self, resume=None):
        """March to the configured end time; returns the summary dict."""
        if resume is not None:
            self.load_checkpoint(resume)
        sc = self.sc
        run = self.case.data["run"]
        t_end = float(run["t_end_tA"]) * sc["t_A"]
        every = int(run["series_every_steps"])
        cad_snap = run.get("snapshot_every_tA")
        cad_chk = run.get("checkpoint_every_tA")
        mark_snap = self._next_mark(cad_snap)
        mark_chk = self._next_mark(cad_chk)

        s = self.solver
        artifacts = {"run.json", "summary.yaml"}
        steps_done = 0
        t0 = _time.perf_counter()
        if s.step_count == 0:
            self._sample_surface()
        while s.time < t_end * (1.0 - 1e-13):
            if self.max_steps is not None and steps_done >= self.max_steps:
                break
            dt = min(s.pick_dt(), t_end - s.time)
            if isinstance(s, CompressibleSolver):
                s.advance(dt)
            else:
                s.piso_advance(dt)
            steps_done += 1
            if s.step_count % every == 0:
                self._sample_surface()
            if mark_snap is not None and s.time >= mark_snap:
                artifacts.add(self._snapshot())
                mark_snap = self._next_mark(cad_snap)
            if mark_chk is not None and s.time >= mark_chk:
                name = f"checkpoints/step_{s.step_count:08d}.npz"
                self.save_checkpoint(self.out / name)
                artifacts.add(name)
                artifacts.update(self._flush_series())
                mark_chk = self._next_mark(cad_chk)
        runtime = _time.perf_counter() - t0

        self.save_checkpoint(self.out / "checkpoints" / "final.npz")
        artifacts.add("checkpoints/final.npz")
        if cad_snap is not None:
            artifacts.add(self._snapshot())
        artifacts.update(self._flush_series())
        summary = self._summary(finished=s.time >= t_end * (1.0 - 1e-13))
        with open(self.out / "summary.yaml", "w", encoding="utf-8") as fh:
            yaml.safe_dump(summary, fh, sort_keys=False)
        # wall time goes in run.json, not the summary, so summaries stay
        # byte-identical across worker counts and resume splits
        self._write_stamp(artifacts, runtime=runtime)
        return summary

    def _next_mark(self, cadence):
        if cadence is None:
            return None
        cad = float(cadence) * self.sc["t_A"]
        return (math.floor(self.solver.time / cad + 1e-12) + 1) * cad

    # -- summary --------------------------------------------------------

    def _summary(self, finished=True):
        s = self.solver
        sc = self.sc
        run = self.case.data["run"]
        out = {
            "case": self.case.name,
            "config": self.case.hash,
            "solver": self.case.solver_kind,
            "finished": bool(finished),
            "steps": int(s.step_count),
            "time": float(s.time),
            "time_tA": float(s.time / sc["t_A"]),
        }
        avg = run.get("averaging_window_tA")
        if self.series.t:
            t_start = (s.time - float(avg) * sc["t_A"]) if avg else None
            window = self.series.window(t_start) if t_start is not None \
                else self.series
            if window.t:
                out["coefficients"] = {k: round(v, 8) for k, v in
                                       window.means().items()}
                out["averaged_from_t"] = float(window.t[0])
                try:
                    st = strouhal(np.asarray(window.t),
                                  np.asarray(window.C_L),
                                  sc["U"], sc["L"])
                    out["strouhal"] = {
                        "st": round(st["st"], 6),
                        "n_periods": round(st["n_periods"], 2),
                        "st_spectral": None if st["st_spectral"] is None
                        else round(st["st_spectral"], 6),
                    }
                except ValueError:
                    out["strouhal"] = None
        if self.nu_t:
            t_arr = np.asarray(self.nu_t)
            vals = np.asarray(self.nu_vals)
            if avg:
                vals = vals[t_arr >= s.time - float(avg) * sc["t_A"]]
            out["nusselt"] = round(float(np.mean(vals)), 6)
        if isinstance(s, CompressibleSolver):
            tot = s.mass_totals()
            gap = (tot["mass"] - self.mass0 - tot["injected"]
                   + tot["boundary_out"] + tot["into_solid"])
            out["mass_audit"] = {
                "injected": float(tot["injected"]),
                "boundary_out": float(tot["boundary_out"]),
                "into_solid": float(tot["into_solid"]),
                "closure_gap": float(gap),
            }
        if self.ke0 is not None and s.time > 0.0:
            ke = kinetic_energy(s.grid, s.fields)
            exact = self.ke0 * math.exp(-4.0 * sc["nu"] * s.time)
            out["taylor_green"] = {
                "ke": float(ke),
                "ke_exact": float(exact),
                "ke_rel_err": float(abs(ke - exact) / exact),
            }
        return out

    def postprocess(self):
        """Rebuild the summary from the final checkpoint and series."""
        final = self.out / "checkpoints" / "final.npz"
        if not final.exists():
            raise FileNotFoundError(f"{final}: run first, then post")
        self.load_checkpoint(final)
        summary = self._summary()
        summary["postprocessed"] = True
        with open(self.out / "summary.yaml", "w", encoding="utf-8") as fh:
            yaml.safe_dump(summary, fh, sort_keys=False)
        return summary


__all__ = ["ProvenanceError", "Runner", "reference_area"]
