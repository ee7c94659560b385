"""Convergence-rate certificates from the OZF/Lyapunov LMI.

For a fixed rate ``rho`` the certificate conditions are

    [[A'PA - rho^2 P, A'PB], [B'PA, B'PB]] + [C D]' blkdiag(M, M) [C D]  <=  0

with ``P >= 0`` and valid filter coefficients.  The left side is linear in
``(P, h_f, h_g)``; strict feasibility is decided by minimizing ``t`` subject
to ``LMI <= t W`` and the smallest certified rate is found by bisection.

The cone of solutions is normalized by ``trace(P) = 1`` while solving.
Witnesses are then rescaled so that ``lambda_min(P) = 1`` and the margin
is recomputed from the plant matrices directly, so every issued
certificate satisfies ``P >= I`` and ``lambda_max(LMI) <= -delta`` as
checked in floating point, independently of solver tolerances.
"""

from __future__ import annotations

import json
import math
import time
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import sdp
from .lure import AlgorithmParams, ProblemClass, build_plant
from .ozf import M_IQC, AugmentedPlant, build_augmented_plant, coeff_weights, validate_coeffs

__all__ = [
    "DELTA",
    "H_MAX",
    "VarLayout",
    "LMIProblem",
    "Witness",
    "FeasibilityResult",
    "BisectionOptions",
    "RateCertificate",
    "CertificationError",
    "LMIAssembler",
    "assemble_lmi",
    "lmi_matrix",
    "solve_feasibility",
    "certify_at",
    "min_rate",
    "theoretical_rates",
    "exact_weighted_sum",
]

DELTA = 1e-8
H_MAX = 1e3
# weight of filter states in W; rescales the margin, not the feasible set
FILTER_WEIGHT = 0.25
T_FLOOR = -1.0

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
FAILED = "numerical-failure"


class CertificationError(RuntimeError):
    """The SDP backend failed to converge, even with tightened settings."""


@dataclass(frozen=True)
class VarLayout:
    """Decision vector ``y = (vech(P), h_f, h_g)``.

    ``P`` entries are the upper triangle in row-major order; an off-diagonal
    variable contributes to both ``P[i, j]`` and ``P[j, i]``.
    """

    n_state: int
    n_ozf: int

    @property
    def n_p(self) -> int:
        return self.n_state * (self.n_state + 1) // 2

    @property
    def n_h(self) -> int:
        return self.n_ozf + 1

    @property
    def size(self) -> int:
        return self.n_p + 2 * self.n_h

    @property
    def p(self) -> slice:
        return slice(0, self.n_p)

    @property
    def h_f(self) -> slice:
        return slice(self.n_p, self.n_p + self.n_h)

    @property
    def h_g(self) -> slice:
        return slice(self.n_p + self.n_h, self.size)

    def p_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.triu_indices(self.n_state)

    def pack(self, P, h_f, h_g) -> np.ndarray:
        i, j = self.p_pairs()
        return np.concatenate([np.asarray(P, float)[i, j], np.ravel(h_f), np.ravel(h_g)])

    def unpack(self, y):
        y = np.asarray(y, dtype=float)
        i, j = self.p_pairs()
        P = np.zeros((self.n_state, self.n_state))
        P[i, j] = y[self.p]
        P[j, i] = y[self.p]
        return P, y[self.h_f].copy(), y[self.h_g].copy()

    def names(self) -> List[str]:
        i, j = self.p_pairs()
        out = [f"P[{a},{b}]" for a, b in zip(i, j)]
        out += [f"h_f[{t}]" for t in range(self.n_h)]
        out += [f"h_g[{t}]" for t in range(self.n_h)]
        return out


@dataclass
class LMIProblem:
    """``F0 + sum_i y_i F_i <= 0`` plus linear and normalization constraints.

    ``lin_A y <= lin_b`` holds the coefficient constraints and box bounds;
    ``side`` holds extra LMI blocks (the normalization of ``P``) and
    ``eq_A y = eq_b`` the trace normalization when used.
    """

    F0: np.ndarray
    basis: np.ndarray
    lin_A: Optional[np.ndarray] = None
    lin_b: Optional[np.ndarray] = None
    eq_A: Optional[np.ndarray] = None
    eq_b: Optional[np.ndarray] = None
    side: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    weight: Optional[np.ndarray] = None
    var_layout: Optional[VarLayout] = None
    rho: Optional[float] = None
    normalization: str = "none"
    aug: Optional[AugmentedPlant] = None

    def __post_init__(self):
        self.F0 = np.asarray(self.F0, dtype=float)
        S = self.F0.shape[0]
        self.basis = np.asarray(self.basis, dtype=float).reshape(-1, S, S)
        n = self.basis.shape[0]
        if self.lin_A is None:
            self.lin_A, self.lin_b = np.zeros((0, n)), np.zeros(0)
        if self.eq_A is None:
            self.eq_A, self.eq_b = np.zeros((0, n)), np.zeros(0)
        if self.weight is None:
            self.weight = np.eye(S)

    @property
    def size(self) -> int:
        return self.F0.shape[0]

    @property
    def n_vars(self) -> int:
        return self.basis.shape[0]

    @property
    def linear_ineqs(self) -> List[Tuple[np.ndarray, float]]:
        """Rows ``(a, b)`` meaning ``a @ y <= b``."""
        return [(a, float(b)) for a, b in zip(self.lin_A, self.lin_b)]

    def value(self, y) -> np.ndarray:
        return self.F0 + np.tensordot(np.asarray(y, dtype=float), self.basis, 1)

    def to_sdp(self, t_floor: float = T_FLOOR) -> sdp.SDPProblem:
        """``min t`` over ``(y, t)`` with the main block relaxed by ``t W``."""
        n = self.n_vars
        c = np.zeros(n + 1)
        c[-1] = 1.0
        main = (self.F0, np.concatenate([self.basis, -self.weight[None]], axis=0))
        blocks = [main]
        for G0, G in self.side:
            blocks.append((G0, np.concatenate([G, np.zeros((1,) + G0.shape)], axis=0)))
        pad = np.zeros((self.lin_A.shape[0], 1))
        floor = np.zeros((1, n + 1))
        floor[0, -1] = -1.0
        lin_A = np.vstack([np.hstack([self.lin_A, pad]), floor])
        lin_b = np.concatenate([self.lin_b, [-t_floor]])
        eq_A = np.hstack([self.eq_A, np.zeros((self.eq_A.shape[0], 1))])
        return sdp.SDPProblem(c, blocks, lin_A, lin_b, eq_A, self.eq_b)


def lmi_matrix(aug: AugmentedPlant, rho: float, P, h_f, h_g) -> np.ndarray:
    """Evaluate the certificate LMI directly from the plant matrices."""
    N = aug.state_dim
    AB = np.hstack([aug.A, aug.B])
    E = np.zeros((N + 2, N))
    E[:N] = np.eye(N)
    X = np.hstack([aug.C(h_f, h_g), aug.D(h_f, h_g)])
    M2 = np.kron(np.eye(2), M_IQC)
    L = AB.T @ P @ AB - rho ** 2 * (E @ P @ E.T) + X.T @ M2 @ X
    return 0.5 * (L + L.T)


def _weight(n_ozf: int, q: float = FILTER_WEIGHT) -> np.ndarray:
    qs = q ** np.arange(1, n_ozf + 1)
    return np.diag(np.concatenate([np.ones(4), qs, qs, np.ones(2)]))


class LMIAssembler:
    """Precomputes the rho-independent parts of the LMI for one plant."""

    def __init__(self, aug: AugmentedPlant):
        self.aug = aug
        N = aug.state_dim
        self.layout = VarLayout(N, aug.n_ozf)
        i, j = self.layout.p_pairs()
        AB = np.hstack([aug.A, aug.B])
        E = np.zeros((N, N + 2))
        E[:, :N] = np.eye(N)
        offdiag = (i != j)[:, None, None]

        def sym_outer(R):
            O = R[i][:, :, None] * R[j][:, None, :]
            return O + offdiag * np.swapaxes(O, 1, 2)

        # P basis is G - rho^2 H
        self._G = sym_outer(AB)
        self._H = sym_outer(E)
        M2 = np.kron(np.eye(2), M_IQC)
        X0 = np.hstack([aug.C0, aug.D0])
        mats = []
        for Cs, Ds in ((aug.Cf, aug.Df), (aug.Cg, aug.Dg)):
            for Ct, Dt in zip(Cs, Ds):
                Xt = np.hstack([Ct, Dt])
                K = X0.T @ M2 @ Xt
                mats.append(K + K.T)
        S = N + 2
        self._K = np.array(mats).reshape(-1, S, S)
        self._F0 = X0.T @ M2 @ X0
        self.weight = _weight(aug.n_ozf)

    def at(self, rho: float, normalization: str = "trace", h_max: float = H_MAX) -> LMIProblem:
        rho = float(rho)
        if not 0 < rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {rho}")
        lay = self.layout
        N, nh, nv = lay.n_state, lay.n_h, lay.size
        basis = np.concatenate([self._G - rho ** 2 * self._H, self._K], axis=0)

        rows, rhs = [], []
        w = coeff_weights(lay.n_ozf, rho)
        w = np.asarray(w / w.max(), dtype=float)
        for sl in (lay.h_f, lay.h_g):
            idx = np.arange(nv)[sl]
            for t in range(1, nh):
                r = np.zeros(nv)
                r[idx[t]] = 1.0
                rows.append(r)
                rhs.append(0.0)
            r = np.zeros(nv)
            r[idx] = -w
            rows.append(r)
            rhs.append(0.0)
            for sgn in (1.0, -1.0):
                for t in range(nh):
                    r = np.zeros(nv)
                    r[idx[t]] = sgn
                    rows.append(r)
                    rhs.append(h_max)

        i, j = lay.p_pairs()
        Pb = np.zeros((nv, N, N))
        k = np.arange(lay.n_p)
        Pb[k, i, j] = 1.0
        Pb[k, j, i] = 1.0
        eq_A = eq_b = None
        if normalization == "trace":
            side = [(np.zeros((N, N)), -Pb)]
            eq_A = np.zeros((1, nv))
            eq_A[0, k[i == j]] = 1.0
            eq_b = np.ones(1)
        elif normalization == "identity":
            side = [(np.eye(N), -Pb)]
        else:
            raise ValueError(f"unknown normalization {normalization!r}")
        return LMIProblem(self._F0, basis, np.array(rows), np.array(rhs), eq_A, eq_b, side,
                          self.weight, lay, rho, normalization, self.aug)


def assemble_lmi(aug: AugmentedPlant, rho: float, normalization: str = "trace",
                 h_max: float = H_MAX) -> LMIProblem:
    """Build the certificate LMI at rate ``rho``.

    Parameters
    ----------
    normalization : {"trace", "identity"}
        ``trace(P) = 1, P >= 0`` (used for solving) or ``P >= I``.  Both
        select one ray of the homogeneous solution cone; see the module
        docstring for how witnesses are rescaled.
    h_max : float
        Box bound on every filter coefficient.
    """
    return LMIAssembler(aug).at(rho, normalization, h_max)


@dataclass
class Witness:
    P: Optional[np.ndarray]
    h_f: Optional[np.ndarray]
    h_g: Optional[np.ndarray]
    margin: float
    y: Optional[np.ndarray] = None


@dataclass
class FeasibilityResult:
    status: str
    witness: Optional[Witness] = None
    t: float = float("nan")
    stats: Dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.witness is not None) != (self.status == FEASIBLE):
            raise ValueError("witness must be present exactly when feasible")

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


def exact_weighted_sum(h, rho) -> Fraction:
    """``sum_t rho^(-2t) h_t`` in rational arithmetic on the stored floats."""
    r2 = Fraction(float(rho)) ** 2
    return sum((Fraction(float(v)) / r2 ** t for t, v in enumerate(h)), Fraction(0))


def _repair_coeffs(h, rho):
    """Project tiny solver violations of the coefficient constraints away.

    Afterwards the constraints hold exactly for the stored floating-point
    values, not only up to rounding.
    """
    h = np.array(h, dtype=float)
    h[1:] = np.minimum(h[1:], 0.0)
    w = coeff_weights(h.size - 1, rho)
    total = float((w * h.astype(np.longdouble)).sum())
    if total < 0:
        h[0] += -total * (1 + 1e-12)
    while exact_weighted_sum(h, rho) < 0:
        h[0] = np.nextafter(h[0], np.inf) + 4 * np.finfo(float).eps * abs(h[0])
    return h


def _verify(lmi: LMIProblem, y, delta: float) -> Optional[Witness]:
    """Rescale a raw solution to ``P >= I`` and recheck every condition."""
    lay = lmi.var_layout
    if lmi.aug is None or lay is None:
        margin = float(np.linalg.eigvalsh(lmi.value(y))[-1])
        return Witness(None, None, None, margin, np.asarray(y)) if margin <= -delta else None
    P, h_f, h_g = lay.unpack(y)
    rho = lmi.rho
    lam = np.linalg.eigvalsh(P)[0]
    if not lam > 0:
        return None
    P, h_f, h_g = P / lam, np.asarray(h_f) / lam, np.asarray(h_g) / lam
    h_f, h_g = _repair_coeffs(h_f, rho), _repair_coeffs(h_g, rho)
    P = 0.5 * (P + P.T)
    lam = np.linalg.eigvalsh(P)[0]
    if lam < 1:
        P = P + (1 - lam) * np.eye(P.shape[0])
    if not (validate_coeffs(h_f, rho) and validate_coeffs(h_g, rho)):
        return None
    margin = float(np.linalg.eigvalsh(lmi_matrix(lmi.aug, rho, P, h_f, h_g))[-1])
    if margin > -delta:
        return None
    return Witness(P, h_f, h_g, margin, lay.pack(P, h_f, h_g))


def solve_feasibility(lmi: LMIProblem, backend=None, delta: float = DELTA,
                      retry: bool = True) -> FeasibilityResult:
    """Decide strict feasibility of ``lmi``.

    Solves ``min t`` subject to ``F(y) <= t W`` and the side constraints.
    The problem is declared feasible when ``t <= -delta`` *and* the rescaled
    witness passes an independent recheck; a solver that does not converge
    is retried once with tightened settings before ``numerical-failure`` is
    reported.
    """
    if backend is None or isinstance(backend, str):
        backend = sdp.get_backend(backend)
    prob = lmi.to_sdp()
    t0 = time.perf_counter()
    res = backend.solve(prob)
    tries = 1
    if res.status in (sdp.FAILED, sdp.UNBOUNDED) and retry:
        res = backend.solve(prob, tight=True)
        tries += 1
    stats = {"backend": backend.name, "iterations": res.iterations, "tries": tries,
             "seconds": time.perf_counter() - t0, "raw_status": res.info.get("raw_status", res.status)}
    if res.status == sdp.INFEASIBLE:
        return FeasibilityResult(INFEASIBLE, None, float("nan"), stats)
    if res.status != sdp.OPTIMAL:
        # an unconverged iterate still certifies if it passes the recheck
        y = res.info.get("last_iterate")
        if y is not None and y[-1] <= -delta:
            wit = _verify(lmi, y[:-1], delta)
            if wit is not None:
                stats["from_unconverged"] = True
                return FeasibilityResult(FEASIBLE, wit, float(y[-1]), stats)
        return FeasibilityResult(FAILED, None, float("nan"), stats)
    t = float(res.y[-1])
    if t > -delta:
        return FeasibilityResult(INFEASIBLE, None, t, stats)
    wit = _verify(lmi, res.y[:-1], delta)
    if wit is None:
        stats["unverified"] = True
        return FeasibilityResult(INFEASIBLE, None, t, stats)
    return FeasibilityResult(FEASIBLE, wit, t, stats)


@dataclass(frozen=True)
class BisectionOptions:
    rho_lo: float = 1e-3
    rho_hi: float = 1 - 1e-6
    tol: float = 2.0 ** -10
    delta: float = DELTA
    backend: Optional[str] = None
    refine_kappa: bool = True
    check_monotone: bool = True
    max_restarts: int = 3


@dataclass
class RateCertificate:
    rho: float
    P: np.ndarray
    h_f: np.ndarray
    h_g: np.ndarray
    kappa_P: float
    margin: float
    meta: Dict = field(default_factory=dict)

    @property
    def n_ozf(self) -> int:
        return len(self.h_f) - 1

    def to_dict(self) -> Dict:
        meta = dict(self.meta)
        return {
            "rho": self.rho,
            "kappa_P": self.kappa_P,
            "margin": self.margin,
            "n_ozf": self.n_ozf,
            "params": meta.pop("params", {}),
            "problem": meta.pop("problem", {}),
            "h_f": [float(v) for v in self.h_f],
            "h_g": [float(v) for v in self.h_g],
            "P": [[float(v) for v in row] for row in self.P],
            "solver": meta.pop("solver", {}),
        }

    def to_json(self, **kw) -> str:
        kw.setdefault("indent", 2)
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: Dict) -> "RateCertificate":
        meta = {k: d[k] for k in ("params", "problem", "solver") if k in d}
        return cls(float(d["rho"]), np.array(d["P"], dtype=float), np.array(d["h_f"], dtype=float),
                   np.array(d["h_g"], dtype=float), float(d["kappa_P"]), float(d["margin"]), meta)

    @classmethod
    def from_json(cls, text: str) -> "RateCertificate":
        return cls.from_dict(json.loads(text))


def _condition(P) -> float:
    ev = np.linalg.eigvalsh(P)
    return float(ev[-1] / ev[0])


def _refine_kappa(lmi: LMIProblem, backend, delta: float, margin: float = 1e-3) -> Optional[Witness]:
    """Minimize the condition number of ``P`` at a fixed feasible rate."""
    lay = lmi.var_layout
    N, n = lay.n_state, lmi.n_vars
    i, j = lay.p_pairs()
    Pb = np.zeros((n + 1, N, N))
    k = np.arange(lay.n_p)
    Pb[k, i, j] = 1.0
    Pb[k, j, i] = 1.0
    eta = np.zeros((n + 1, N, N))
    eta[-1] = -np.eye(N)
    S = lmi.size
    # kappa_P is invariant under scaling (P, h) up, so the required margin
    # can sit far above solver tolerances without changing the optimum
    main = (lmi.F0 + margin * np.eye(S), np.concatenate([lmi.basis, np.zeros((1, S, S))]))
    blocks = [main, (np.eye(N), -Pb), (np.zeros((N, N)), Pb + eta)]
    c = np.zeros(n + 1)
    c[-1] = 1.0
    # coefficient constraints only; the box would bind after scaling
    keep = lmi.lin_b == 0
    lin_A = np.hstack([lmi.lin_A[keep], np.zeros((int(keep.sum()), 1))])
    prob = sdp.SDPProblem(c, blocks, lin_A, lmi.lin_b[keep])
    res = backend.solve(prob)
    y = res.y if res.status == sdp.OPTIMAL else res.info.get("last_iterate")
    if y is None:
        return None
    return _verify(lmi, y[:-1], delta)


def certify_at(params: AlgorithmParams, pc: ProblemClass, rho: float, n_ozf: int = 6,
               backend=None, delta: float = DELTA) -> FeasibilityResult:
    """Feasibility of the certificate LMI at one rate."""
    aug = build_augmented_plant(build_plant(params), pc, n_ozf)
    return solve_feasibility(assemble_lmi(aug, rho), backend, delta)


def min_rate(params: AlgorithmParams, pc: ProblemClass, n_ozf: int = 6,
             opts: Optional[BisectionOptions] = None) -> Optional[RateCertificate]:
    """Smallest certified rate, located by bisection on ``rho``.

    Returns ``None`` when the LMI is infeasible at ``opts.rho_hi``.

    Raises
    ------
    CertificationError
        When a probe fails numerically twice in a row.
    """
    opts = opts or BisectionOptions()
    backend = sdp.get_backend(opts.backend)
    aug = build_augmented_plant(build_plant(params), pc, n_ozf)
    asm = LMIAssembler(aug)
    t_start = time.perf_counter()
    log: List[Tuple[float, str]] = []
    iters = 0

    def probe(rho):
        nonlocal iters
        res = solve_feasibility(asm.at(rho), backend, opts.delta)
        iters += res.stats.get("iterations", 0)
        log.append((rho, res.status))
        if res.status == FAILED:
            raise CertificationError(f"SDP backend {backend.name} failed at rho={rho:.6g}")
        return res

    best = probe(opts.rho_hi)
    if not best.feasible:
        return None
    hi, lo = opts.rho_hi, opts.rho_lo
    restarts = 0
    while True:
        while hi - lo > opts.tol:
            mid = 0.5 * (lo + hi)
            res = probe(mid)
            if res.feasible:
                hi, best = mid, res
            else:
                lo = mid
        if not opts.check_monotone:
            break
        below = hi - 2 * opts.tol
        if below <= opts.rho_lo or restarts >= opts.max_restarts:
            break
        res = probe(below)
        if not res.feasible:
            break
        # feasibility was not monotone on the bracket; search below again
        restarts += 1
        hi, best, lo = below, res, opts.rho_lo

    wit = best.witness
    rho = hi
    if opts.refine_kappa:
        refined = _refine_kappa(asm.at(rho), backend, opts.delta)
        if refined is not None and _condition(refined.P) < _condition(wit.P):
            wit = refined
    stats = {
        "backend": backend.name,
        "solves": len(log),
        "iterations": iters,
        "seconds": time.perf_counter() - t_start,
        "nonmonotone_restarts": restarts,
        "tol": opts.tol,
        "delta": opts.delta,
    }
    meta = {"params": params.as_dict(), "problem": pc.as_dict(), "n_ozf": n_ozf, "solver": stats}
    return RateCertificate(rho, wit.P, wit.h_f, wit.h_g, _condition(wit.P), wit.margin, meta)


def theoretical_rates(kappa: float) -> Tuple[float, float]:
    """Reference rates ``1 - 1/sqrt(k)`` and ``sqrt(1 - sqrt(2k - 1)/k)``."""
    kappa = float(kappa)
    if not kappa >= 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    rho1 = 1.0 - 1.0 / math.sqrt(kappa)
    rho2 = math.sqrt(max(0.0, 1.0 - math.sqrt(2.0 * kappa - 1.0) / kappa))
    return rho1, rho2
