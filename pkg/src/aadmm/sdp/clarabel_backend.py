"""Clarabel interior-point backend."""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .base import FAILED, INFEASIBLE, OPTIMAL, UNBOUNDED, SDPProblem, SDPResult

try:
    import clarabel
except ImportError:  # pragma: no cover - exercised only without clarabel
    clarabel = None


def svec_indices(n: int):
    """Upper-triangle, column-major index pairs used by Clarabel's PSD cone."""
    rows, cols = [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def svec(M: np.ndarray) -> np.ndarray:
    """Scaled vectorization; works on a trailing pair of axes."""
    n = M.shape[-1]
    i, j = svec_indices(n)
    scale = np.where(i == j, 1.0, np.sqrt(2.0))
    return M[..., i, j] * scale


_STATUS = {
    "Solved": OPTIMAL,
    "AlmostSolved": OPTIMAL,
    "PrimalInfeasible": INFEASIBLE,
    "AlmostPrimalInfeasible": INFEASIBLE,
    "DualInfeasible": UNBOUNDED,
    "AlmostDualInfeasible": UNBOUNDED,
}


class ClarabelBackend:
    name = "clarabel"

    def __init__(self):
        if clarabel is None:
            raise RuntimeError("clarabel is not installed")

    def solve(self, prob: SDPProblem, tight: bool = False) -> SDPResult:
        n = prob.n_vars
        rows, rhs, cones = [], [], []
        if prob.b_eq.size:
            rows.append(prob.A_eq)
            rhs.append(prob.b_eq)
            cones.append(clarabel.ZeroConeT(prob.b_eq.size))
        if prob.b_lin.size:
            rows.append(prob.A_lin)
            rhs.append(prob.b_lin)
            cones.append(clarabel.NonnegativeConeT(prob.b_lin.size))
        for F0, F in prob.blocks:
            # slack -(F0 + sum y F) in the PSD cone
            rows.append(svec(F).T)
            rhs.append(-svec(F0))
            cones.append(clarabel.PSDTriangleConeT(F0.shape[0]))
        A = sparse.csc_matrix(np.vstack(rows)) if rows else sparse.csc_matrix((0, n))
        b = np.concatenate(rhs) if rhs else np.zeros(0)
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        if tight:
            # shorter steps and stronger regularization; tighter tolerances
            # make these small degenerate problems fail more often, not less
            settings.max_iter = 400
            settings.max_step_fraction = 0.9
            settings.static_regularization_constant = 1e-7
        solver = clarabel.DefaultSolver(sparse.csc_matrix((n, n)), prob.c, A, b, cones, settings)
        sol = solver.solve()
        status = _STATUS.get(str(sol.status), FAILED)
        x = np.array(sol.x)
        info = {"raw_status": str(sol.status)}
        if status != OPTIMAL:
            # last iterate, for callers that verify candidates independently
            info["last_iterate"] = x if np.all(np.isfinite(x)) else None
            return SDPResult(status, None, float("nan"), int(sol.iterations), info)
        return SDPResult(status, x, float(sol.obj_val), int(sol.iterations), info)
