"""Sparse linear solvers with iteration reporting.

solve_spd is a hand-rolled preconditioned conjugate gradient with residual
smoothing: alongside the CG iterates a minimal-residual combination is
tracked whose 2-norm is non-increasing by construction, which is the
sequence the stopping test and the returned solution use. solve_general
wraps a stabilized bi-conjugate gradient for the nonsymmetric systems.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assemble import SparseSystem


@dataclass
class SolveReport:
    solver: str
    iterations: int
    initial_residual: float
    final_residual: float
    target: float
    converged: bool
    compatibility_defect: float = 0.0
    residual_history: tuple = ()

    def __str__(self):
        return (f"{self.solver}: it={self.iterations} "
                f"r0={self.initial_residual:.3e} "
                f"r={self.final_residual:.3e} tol={self.target:.3e}")


class LinSolveError(RuntimeError):
    def __init__(self, msg, report):
        super().__init__(f"{msg} ({report})")
        self.report = report


def jacobi_preconditioner(A):
    d = A.diagonal().copy()
    if np.any(d == 0.0):
        raise LinSolveError(
            "zero diagonal entry, Jacobi preconditioner undefined",
            SolveReport("jacobi", 0, np.nan, np.nan, np.nan, False))
    inv = 1.0 / d

    def apply(r):
        return inv * r
    return apply


def ilu_preconditioner(A, drop_tol=None, fill_factor=10):
    ilu = spla.spilu(A.tocsc(), drop_tol=drop_tol, fill_factor=fill_factor)

    def apply(r):
        return ilu.solve(r)
    return apply


def _as_matrix(system):
    if isinstance(system, SparseSystem):
        return system.matrix()
    return sp.csr_matrix(system)


def _project_constant(v):
    return v - v.mean()


def solve_spd(system, b=None, x0=None, tol=1e-8, tol_abs=0.0,
              max_iter=2000, precond=None, nullspace=None,
              record_residuals=False):
    """Preconditioned CG for symmetric positive (semi)definite systems.

    nullspace="constant" handles the pure-Neumann case: the RHS is
    projected onto the compatible range (defect reported), and iterates
    are kept zero-mean. Raises LinSolveError if the smoothed residual has
    not met tol*|b| + tol_abs within max_iter iterations.
    """
    A = _as_matrix(system)
    n = A.shape[0]
    if b is None:
        if not isinstance(system, SparseSystem):
            raise ValueError("need an explicit RHS")
        b = system.rhs
    b = np.asarray(b, dtype=float).copy()
    defect = 0.0
    if nullspace == "constant":
        b_norm0 = np.linalg.norm(b)
        b = _project_constant(b)
        if b_norm0 > 0:
            defect = abs(np.linalg.norm(b) - b_norm0) / b_norm0
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    if nullspace == "constant":
        x = _project_constant(x)
    if precond is None:
        precond = jacobi_preconditioner(A)

    r = b - A @ x
    stop = tol * np.linalg.norm(b) + tol_abs
    # smoothed sequence: returned iterate, monotone residual norm
    xs = x.copy()
    rs = r.copy()
    r0_norm = np.linalg.norm(r)
    history = [r0_norm]
    if r0_norm <= stop:
        return xs, SolveReport("pcg", 0, r0_norm, r0_norm, stop, True,
                               defect, tuple(history))

    z = precond(r)
    if nullspace == "constant":
        z = _project_constant(z)
    p = z.copy()
    rz = r @ z
    it = 0
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            break  # lost positive-definiteness; report as non-convergence
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        # minimal-residual smoothing of (x, r) into (xs, rs)
        d = r - rs
        dd = d @ d
        if dd > 0.0:
            eta = min(1.0, max(0.0, -(rs @ d) / dd))
            xs += eta * (x - xs)
            rs += eta * d
        rs_norm = float(np.linalg.norm(rs))
        if record_residuals:
            history.append(rs_norm)
        if rs_norm <= stop:
            if nullspace == "constant":
                xs = _project_constant(xs)
            return xs, SolveReport("pcg", it, r0_norm, rs_norm, stop, True,
                                   defect, tuple(history))
        z = precond(r)
        if nullspace == "constant":
            z = _project_constant(z)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    rep = SolveReport("pcg", it, r0_norm, float(np.linalg.norm(rs)), stop,
                      False, defect, tuple(history))
    raise LinSolveError("conjugate gradient did not converge", rep)


def solve_general(system, b=None, x0=None, tol=1e-7, tol_abs=0.0,
                  max_iter=2000, precond=None):
    """Stabilized bi-conjugate gradient for general sparse systems."""
    A = _as_matrix(system)
    if b is None:
        if not isinstance(system, SparseSystem):
            raise ValueError("need an explicit RHS")
        b = system.rhs
    b = np.asarray(b, dtype=float)
    b_norm = np.linalg.norm(b)
    stop = tol * b_norm + tol_abs
    if precond is None:
        precond = jacobi_preconditioner(A)
    M = spla.LinearOperator(A.shape, matvec=precond)
    count = [0]

    def cb(_):
        count[0] += 1

    x0a = None if x0 is None else np.asarray(x0, dtype=float)
    r0 = np.linalg.norm(b if x0a is None else b - A @ x0a)
    if r0 <= stop:
        x = np.zeros(A.shape[0]) if x0a is None else x0a.copy()
        return x, SolveReport("bicgstab", 0, r0, r0, stop, True)
    # scipy's criterion is max(rtol*|b|, atol); feed the combined target
    # as the absolute part so the stop matches tol*|b| + tol_abs
    x, info = spla.bicgstab(A, b, x0=x0a, rtol=tol, atol=stop, M=M,
                            maxiter=max_iter, callback=cb)
    final = float(np.linalg.norm(b - A @ x))
    # recursive residual can drift from the true one; allow slack on the
    # recomputed norm but never accept a scipy-reported failure
    rep = SolveReport("bicgstab", count[0], float(r0), final, stop,
                      info == 0 and final <= 10.0 * stop)
    if not rep.converged:
        raise LinSolveError("bicgstab did not converge", rep)
    return x, rep
