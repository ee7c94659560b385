"""Self-contained dense primal-dual interior-point method.

Equalities are eliminated first (``y = y0 + N u``); the remaining problem is
put in the standard dual form

    max  b'u   s.t.  sum_i u_i A_i + Z = C,  Z >= 0

over a block-diagonal cone (dense PSD blocks plus one nonnegative block),
and solved with the HKM search direction and Mehrotra's predictor-corrector
scheme.  Intended for the desk-sized problems of this package (LMIs up to
about 20 x 20, a few hundred variables); every operation is dense.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
from scipy import linalg

from .base import FAILED, OPTIMAL, SDPProblem, SDPResult


@dataclass
class _Std:
    """Standard-form data: PSD blocks ``(C, A)`` and an LP block ``(c, a)``."""

    b: np.ndarray
    sdp: List[tuple]
    lp_c: np.ndarray
    lp_a: np.ndarray
    y0: np.ndarray
    N: np.ndarray


def _standardize(prob: SDPProblem) -> _Std:
    n = prob.n_vars
    if prob.b_eq.size:
        y0 = np.linalg.lstsq(prob.A_eq, prob.b_eq, rcond=None)[0]
        N = linalg.null_space(prob.A_eq)
    else:
        y0, N = np.zeros(n), np.eye(n)
    blocks = []
    for F0, F in prob.blocks:
        F0u = F0 + np.tensordot(y0, F, 1)
        Fu = np.tensordot(N.T, F, 1)
        blocks.append((-F0u, Fu))
    lp_a = prob.A_lin @ N
    lp_c = prob.b_lin - prob.A_lin @ y0
    return _Std(-(N.T @ prob.c), blocks, lp_c, lp_a.T.copy(), y0, N)


def _max_step(X, dX) -> float:
    """Largest ``a`` with ``X + a dX >= 0`` (``inf`` if unbounded)."""
    try:
        Lc = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = linalg.solve_triangular(Lc, np.eye(X.shape[0]), lower=True)
    lam = np.linalg.eigvalsh(Li @ dX @ Li.T)[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x, dx) -> float:
    neg = dx < 0
    return np.inf if not neg.any() else float(np.min(-x[neg] / dx[neg]))


class DenseIPM:
    """Infeasible-start HKM predictor-corrector method."""

    name = "ipm"

    def __init__(self, tol: float = 1e-9, max_iter: int = 80, step: float = 0.95,
                 tol_reduced: float = 1e-5):
        self.tol = tol
        self.tol_reduced = tol_reduced
        self.max_iter = max_iter
        self.step = step

    def solve(self, prob: SDPProblem, tight: bool = False) -> SDPResult:
        std = _standardize(prob)
        m = std.b.size
        if m == 0:
            y = std.y0
            ok = prob.violation(y) <= self.tol
            return SDPResult(OPTIMAL if ok else FAILED, y if ok else None,
                             float(prob.c @ y), 0, {"raw_status": "trivial"})
        max_iter = 2 * self.max_iter if tight else self.max_iter
        gamma = 0.9 if tight else self.step
        out = self._run(std, max_iter, gamma)
        u, status, it, info = out
        if u is None:
            return SDPResult(FAILED, None, float("nan"), it, info)
        y = std.y0 + std.N @ u
        if status != OPTIMAL:
            info["last_iterate"] = y
            return SDPResult(status, None, float("nan"), it, info)
        return SDPResult(OPTIMAL, y, float(prob.c @ y), it, info)

    def _run(self, std: _Std, max_iter: int, gamma: float):
        b, m = std.b, std.b.size
        blocks = std.sdp
        lp_c, lp_a = std.lp_c, std.lp_a
        n_lp = lp_c.size
        dims = [C.shape[0] for C, _ in blocks]
        n_tot = sum(dims) + n_lp

        # starting point in the spirit of SDPT3
        normA = max([np.linalg.norm(A.reshape(m, -1), axis=1).max() for _, A in blocks]
                    + ([np.abs(lp_a).max()] if n_lp else [0.0]) + [1.0])
        normC = max([np.linalg.norm(C) for C, _ in blocks] + ([np.abs(lp_c).max()] if n_lp else [0.0]))
        xi = max(10.0, np.sqrt(n_tot), np.sqrt(n_tot) * np.abs(b).max() / (1 + normA))
        eta = max(10.0, np.sqrt(n_tot), normA, normC)
        X = [xi * np.eye(d) for d in dims]
        Z = [eta * np.eye(d) for d in dims]
        x = xi * np.ones(n_lp)
        z = eta * np.ones(n_lp)
        u = np.zeros(m)
        nb = 1 + np.linalg.norm(b)
        nc = 1 + normC

        def AX(Ms, v):
            out = np.zeros(m)
            for (_, A), M in zip(blocks, Ms):
                out += np.tensordot(A, M, 2)
            if n_lp:
                out += lp_a @ v
            return out

        def ATu(w):
            return [np.tensordot(w, A, 1) for _, A in blocks], (lp_a.T @ w if n_lp else np.zeros(0))

        status, it = FAILED, 0
        info = {}
        best = (np.inf, None, {})
        stall = 0
        for it in range(1, max_iter + 1):
            Zi = [np.linalg.inv(Zk) for Zk in Z]
            rp = b - AX(X, x)
            At, at = ATu(u)
            Rd = [C - Zk - Ak for (C, _), Zk, Ak in zip(blocks, Z, At)]
            rd = lp_c - z - at
            gap = sum(np.vdot(Xk, Zk) for Xk, Zk in zip(X, Z)) + x @ z
            mu = gap / n_tot
            pobj = sum(np.vdot(C, Xk) for (C, _), Xk in zip(blocks, X)) + lp_c @ x
            dobj = b @ u
            pinf = np.linalg.norm(rp) / nb
            dinf = np.sqrt(sum(np.linalg.norm(R) ** 2 for R in Rd) + rd @ rd) / nc
            relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
            info = {"pinf": pinf, "dinf": dinf, "relgap": relgap, "mu": mu}
            merit = max(pinf, dinf, relgap)
            if merit < self.tol:
                status = OPTIMAL
                break
            if not np.isfinite(mu) or max(np.abs(u).max(), mu) > 1e14:
                break
            # once mu is tiny the Schur system loses accuracy and the
            # residuals drift back up; keep the best iterate seen
            if merit < best[0]:
                best = (merit, u.copy(), dict(info))
                stall = 0
            else:
                stall += 1
            if stall >= 5:
                break

            # Schur complement M_ij = <A_i, X A_j Z^-1>
            Msc = np.zeros((m, m))
            for (_, A), Xk, Zik in zip(blocks, X, Zi):
                T = Xk @ A @ Zik
                Msc += A.reshape(m, -1) @ T.reshape(m, -1).T
            if n_lp:
                Msc += (lp_a * (x / z)) @ lp_a.T
            Msc = 0.5 * (Msc + Msc.T)
            try:
                fac = linalg.cho_factor(Msc + 1e-14 * np.trace(Msc) / m * np.eye(m))
                solve = lambda r: linalg.cho_solve(fac, r)
            except linalg.LinAlgError:
                lu = linalg.lu_factor(Msc)
                solve = lambda r: linalg.lu_solve(lu, r)

            def direction(sigma, corr=None):
                G = []
                for k, (Xk, Zik) in enumerate(zip(X, Zi)):
                    Gk = sigma * mu * Zik - Xk
                    if corr is not None:
                        Gk = Gk - corr[0][k] @ corr[1][k] @ Zik
                    G.append(Gk)
                g = sigma * mu / z - x
                if corr is not None:
                    g = g - corr[2] * corr[3] / z
                XRZ = [Xk @ R @ Zik for Xk, R, Zik in zip(X, Rd, Zi)]
                rhs = rp - AX(G, g) + AX(XRZ, x * rd / z)
                du = solve(rhs)
                for sweep in range(3):
                    dAt, dat = ATu(du)
                    dZ = [R - Ak for R, Ak in zip(Rd, dAt)]
                    dz = rd - dat
                    dX = []
                    for Gk, Xk, dZk, Zik in zip(G, X, dZ, Zi):
                        D = Gk - Xk @ dZk @ Zik
                        dX.append(0.5 * (D + D.T))
                    dx = g - x * dz / z
                    if sweep == 2:
                        break
                    # iterative refinement of the Schur solve
                    res = rp - AX(dX, dx)
                    if np.linalg.norm(res) <= 1e-3 * self.tol * nb:
                        break
                    du = du + solve(res)
                return dX, du, dZ, dx, dz

            def steps(dX, dZ, dx, dz):
                ap = min([_max_step(Xk, D) for Xk, D in zip(X, dX)] + [_max_step_lp(x, dx)])
                ad = min([_max_step(Zk, D) for Zk, D in zip(Z, dZ)] + [_max_step_lp(z, dz)])
                return min(1.0, gamma * ap), min(1.0, gamma * ad)

            dX, du, dZ, dx, dz = direction(0.0)
            ap, ad = steps(dX, dZ, dx, dz)
            new_gap = (sum(np.vdot(Xk + ap * a, Zk + ad * c) for Xk, a, Zk, c in zip(X, dX, Z, dZ))
                       + (x + ap * dx) @ (z + ad * dz))
            sigma = min(1.0, (new_gap / gap) ** 3)
            dX, du, dZ, dx, dz = direction(sigma, (dX, dZ, dx, dz))
            ap, ad = steps(dX, dZ, dx, dz)
            if ap == 0.0 and ad == 0.0:
                break
            X = [Xk + ap * D for Xk, D in zip(X, dX)]
            x = x + ap * dx
            u = u + ad * du
            Z = [Zk + ad * D for Zk, D in zip(Z, dZ)]
            z = z + ad * dz
        if status != OPTIMAL and best[1] is not None and best[0] < self.tol_reduced:
            u, info = best[1], best[2]
            status = OPTIMAL
            info["reduced_accuracy"] = True
        info["raw_status"] = status
        return u, status, it, info
