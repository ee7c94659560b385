"""LASSO benchmark: instance generation, A-ADMM, FISTA and error traces."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy import linalg

from .lure import AlgorithmParams, ProblemClass, iterate_direct
from .tuning import gs_params, tm_params, vanilla_params

__all__ = [
    "LassoInstance",
    "ReferenceSolution",
    "RunTrace",
    "DivergenceError",
    "lasso_generate",
    "soft_threshold",
    "kkt_residual",
    "reference_solution",
    "aadmm_lasso_run",
    "aadmm_lasso_direct",
    "fista_run",
    "error_trace",
    "lasso_scheme_params",
    "SCHEMES",
    "run_scheme",
]

DAMPING = 0.1


class DivergenceError(FloatingPointError):
    """Iterates became non-finite."""


@dataclass(frozen=True)
class LassoInstance:
    """``min 0.5 ||F x - b||^2 + tau ||x||_1`` with curvature bounds of ``F'F``."""

    F: np.ndarray
    b: np.ndarray
    tau: float
    w0: np.ndarray
    seed: Optional[int] = None
    m: float = field(init=False)
    L: float = field(init=False)

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).ravel())
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        ev = np.linalg.eigvalsh(F.T @ F)
        if ev[0] <= 0:
            raise ValueError("F must have full column rank")
        object.__setattr__(self, "m", float(ev[0]))
        object.__setattr__(self, "L", float(ev[-1]))

    @property
    def p(self) -> int:
        return self.F.shape[1]

    @property
    def problem_class(self) -> ProblemClass:
        return ProblemClass(self.m, self.L)

    def objective(self, x) -> float:
        r = self.F @ x - self.b
        return float(0.5 * r @ r + self.tau * np.abs(x).sum())

    def describe(self) -> Dict:
        n, p = self.F.shape
        return {"seed": self.seed, "n": n, "p": p, "nnz": int(np.count_nonzero(self.w0)),
                "tau": self.tau}


def lasso_generate(seed, n: int = 250, p: int = 100, nnz: int = 50, noise_var: float = 1e-3,
                   tau: float = 0.01, max_retries: int = 10) -> LassoInstance:
    """Gaussian design with unit-norm columns and a sparse Gaussian generator."""
    if not n >= p >= nnz >= 0:
        raise ValueError("need n >= p >= nnz >= 0")
    for sub in range(max_retries):
        rng = np.random.default_rng([int(seed), sub])
        F = rng.standard_normal((n, p))
        F /= np.linalg.norm(F, axis=0)
        if np.linalg.matrix_rank(F) < p:
            continue
        w0 = np.zeros(p)
        idx = rng.choice(p, size=nnz, replace=False)
        w0[idx] = rng.standard_normal(nnz)
        b = F @ w0
        if noise_var > 0:
            b = b + np.sqrt(noise_var) * rng.standard_normal(n)
        return LassoInstance(F, b, tau, w0, seed)
    raise RuntimeError(f"no full-rank design after {max_retries} draws")


def soft_threshold(y, t: float):
    """Elementwise ``sign(y) * max(|y| - t, 0)``."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)


def kkt_residual(inst: LassoInstance, x) -> float:
    """Fixed-point residual of the proximal-gradient map with step ``1/L``."""
    g = inst.F.T @ (inst.F @ x - inst.b)
    return float(np.abs(x - soft_threshold(x - g / inst.L, inst.tau / inst.L)).max())


@dataclass(frozen=True)
class ReferenceSolution:
    x_star: np.ndarray
    objective: float
    residual: float
    method: str = "fista-restart"
    tol: float = 1e-12


def reference_solution(inst: LassoInstance, tol: float = 1e-12,
                       max_iter: int = 200_000) -> ReferenceSolution:
    """Accelerated proximal gradient with adaptive restart, run to ``tol``.

    Raises
    ------
    RuntimeError
        If the residual does not fall below ``tol`` within ``max_iter``.
    """
    F, b, L, tau = inst.F, inst.b, inst.L, inst.tau
    FtF, Ftb = F.T @ F, F.T @ b
    x = np.zeros(inst.p)
    y, t = x.copy(), 1.0
    res = np.inf
    for _ in range(max_iter):
        x_new = soft_threshold(y - (FtF @ y - Ftb) / L, tau / L)
        res = float(np.abs(x_new - soft_threshold(x_new - (FtF @ x_new - Ftb) / L, tau / L)).max())
        if res <= tol:
            x = x_new
            break
        if (y - x_new) @ (x_new - x) > 0:
            t = 1.0
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = x_new + (t - 1) / t_new * (x_new - x)
        x, t = x_new, t_new
    else:
        raise RuntimeError(f"reference solve stalled at residual {res:.3e}")
    return ReferenceSolution(x, inst.objective(x), res, tol=tol)


@dataclass
class RunTrace:
    """Normalized errors ``Delta_k`` with optional iterates and objectives."""

    deltas: np.ndarray
    iterates: Optional[np.ndarray] = None
    objectives: Optional[np.ndarray] = None
    degenerate: bool = False
    label: str = ""

    def iterations_to(self, eps: float = 1e-6) -> Optional[int]:
        """First ``k`` with ``Delta_k <= eps``; None when never reached."""
        hit = np.nonzero(self.deltas <= eps)[0]
        return int(hit[0]) if hit.size else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        with_obj = self.objectives is not None
        w.writerow(["k", "delta"] + (["objective"] if with_obj else []))
        for k, dk in enumerate(self.deltas):
            row = [k, repr(float(dk))]
            if with_obj:
                row.append(repr(float(self.objectives[k])))
            w.writerow(row)
        return buf.getvalue()


def error_trace(iterates, x_star, x0=None, label: str = "") -> RunTrace:
    """``Delta_k = ||x_k - x*|| / ||x_0 - x*||``; ``iterates[0]`` is ``x_0`` unless given."""
    X = np.atleast_2d(np.asarray(iterates, dtype=float))
    x0 = X[0] if x0 is None else np.asarray(x0, dtype=float)
    denom = np.linalg.norm(x0 - x_star)
    if denom == 0:
        return RunTrace(np.zeros(X.shape[0]), X, degenerate=True, label=label)
    return RunTrace(np.linalg.norm(X - x_star, axis=1) / denom, X, label=label)


class _QuadProx:
    """``argmin nu1 * 0.5||F x - b||^2 + 0.5||x - y||^2`` with a cached factorization."""

    def __init__(self, inst: LassoInstance, nu1: float):
        p = inst.p
        self.fac = linalg.cho_factor(nu1 * (inst.F.T @ inst.F) + np.eye(p))
        self.rhs = nu1 * (inst.F.T @ inst.b)

    def __call__(self, y):
        return linalg.cho_solve(self.fac, y + self.rhs)


def aadmm_lasso_run(inst: LassoInstance, params: AlgorithmParams, K: int = 500,
                    x_star=None, stop: float = 1e-12, keep_iterates: bool = False,
                    label: str = "") -> RunTrace:
    """A-ADMM on the split ``x = -z`` form of the LASSO.

    Starts from ``x = z = lambda = 0`` with zero momentum history.  The
    over-relaxed point ``alpha x + (alpha - 1) z_hat`` is used in both the
    ``z`` and the dual update.  Stops early once ``Delta_k <= stop``.

    Raises
    ------
    DivergenceError
        When an iterate becomes non-finite.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if x_star is None:
        x_star = reference_solution(inst).x_star
    x_star = getattr(x_star, "x_star", x_star)
    nu1, nu2, a, d = params.nu1, params.nu2, params.alpha, params.d
    prox = _QuadProx(inst, nu1)
    thr = inst.tau * nu1
    p = inst.p
    x = np.zeros(p)
    z = z_prev = lam = lam_prev = np.zeros(p)
    denom = np.linalg.norm(x - x_star)
    xs = [x]
    for k in range(K):
        z_hat = z + nu2 * (z - z_prev)
        lam_hat = lam + nu2 * (lam - lam_prev)
        x = prox(-z_hat - lam_hat)
        relaxed = a * x + (a - 1) * z_hat
        z_new = soft_threshold(-relaxed - lam_hat, thr)
        step = relaxed + z_new + lam_hat
        lam_new = step if d == 1 else d * (step + lam)
        if not np.all(np.isfinite(lam_new)):
            raise DivergenceError(f"non-finite iterate at k={k + 1} with {params}")
        z_prev, z, lam_prev, lam = z, z_new, lam, lam_new
        xs.append(x)
        if denom > 0 and np.linalg.norm(x - x_star) <= stop * denom:
            break
    tr = error_trace(np.array(xs), x_star, label=label)
    if not keep_iterates:
        tr.iterates = None
    return tr


def aadmm_lasso_direct(inst: LassoInstance, params: AlgorithmParams, K: int):
    """Same run through the generic engine; returns its :class:`~aadmm.lure.Trace`."""
    prox = _QuadProx(inst, params.nu1)
    thr = inst.tau * params.nu1
    z0 = np.zeros(inst.p)
    return iterate_direct(params, prox, lambda y: soft_threshold(y, thr), 0.0, (z0, z0), K)


def fista_run(inst: LassoInstance, K: int = 500, x_star=None, x0=None, stop: float = 1e-12,
              keep_iterates: bool = False, label: str = "fista") -> RunTrace:
    """FISTA with constant step ``1/L``; objective values are recorded."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if x_star is None:
        x_star = reference_solution(inst).x_star
    x_star = getattr(x_star, "x_star", x_star)
    F, b, L, tau = inst.F, inst.b, inst.L, inst.tau
    FtF, Ftb = F.T @ F, F.T @ b
    x = np.zeros(inst.p) if x0 is None else np.asarray(x0, dtype=float).copy()
    y, t = x.copy(), 1.0
    xs, objs = [x], [inst.objective(x)]
    denom = np.linalg.norm(x - x_star)
    for _ in range(K):
        x_new = soft_threshold(y - (FtF @ y - Ftb) / L, tau / L)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = x_new + (t - 1) / t_new * (x_new - x)
        x, t = x_new, t_new
        xs.append(x)
        objs.append(inst.objective(x))
        if denom > 0 and np.linalg.norm(x - x_star) <= stop * denom:
            break
    tr = error_trace(np.array(xs), x_star, label=label)
    tr.objectives = np.array(objs)
    if not keep_iterates:
        tr.iterates = None
    return tr


SCHEMES = ["admm", "or-admm", "a-admm-tm", "a-admm-tm-damped", "a-admm-gs", "or-a-admm-gs", "fista"]


def lasso_scheme_params(scheme: str, pc: ProblemClass) -> Optional[AlgorithmParams]:
    """Parameters of a named scheme on the instance's sector; None for FISTA."""
    table = {
        "admm": lambda: vanilla_params(pc),
        "or-admm": lambda: vanilla_params(pc, True),
        "a-admm-tm": lambda: tm_params(pc),
        "a-admm-tm-damped": lambda: tm_params(pc, d=DAMPING),
        "a-admm-gs": lambda: gs_params(pc),
        "or-a-admm-gs": lambda: gs_params(pc, True),
        "fista": lambda: None,
    }
    try:
        return table[scheme]()
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}") from None


def run_scheme(inst: LassoInstance, scheme: str, K: int = 500, ref=None) -> RunTrace:
    ref = ref if ref is not None else reference_solution(inst)
    params = lasso_scheme_params(scheme, inst.problem_class)
    if params is None:
        return fista_run(inst, K, ref)
    return aadmm_lasso_run(inst, params, K, ref, label=scheme)
