"""Lur'e (state-space) model of accelerated, over-relaxed and damped ADMM.

The algorithm is written in the transformed coordinates ``r = Ax``, ``s = Bz``
and analysed as a linear system ``G = (A_hat, B_hat, C_hat, D_hat)`` in
feedback with ``w = (grad f(r), gamma)``, ``gamma in dg(s)``.  All matrices
are dimension free; a ``p``-dimensional problem uses ``kron(M, I_p)``.

State ordering is fixed to ``xi_k = (lambda_{k-1}, s_{k-1}, lambda_k, s_k)``
and the output is ``v_k = (r_{k+1}, s_{k+1})``, carried with the constant
offset ``v_bar = (-c, 0)`` so that ``v_hat_k = v_k + v_bar = C xi + D w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

__all__ = [
    "AlgorithmParams",
    "ProblemClass",
    "StateSpacePlant",
    "Trace",
    "QuadraticFunction",
    "SectorError",
    "SingularLoopError",
    "ImplicitSolveError",
    "normalize_problem",
    "build_plant",
    "iterate_direct",
    "simulate_lure",
    "closed_loop_matrix",
    "lifted_closed_loop",
    "lure_fixed_point",
]


class SectorError(ValueError):
    """A curvature lies outside the sector of the problem class."""


class SingularLoopError(ArithmeticError):
    """The algebraic loop ``I - D Theta`` is not invertible."""


class ImplicitSolveError(RuntimeError):
    """The implicit output equation of the Lur'e system could not be solved."""


def _freeze(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AlgorithmParams:
    """Tuning of A-ADMM.

    ``nu1`` is the step size, ``nu2`` the momentum, ``alpha`` the
    over-relaxation and ``d`` the dual damping (``d = 1`` is undamped).
    """

    nu1: float
    nu2: float = 0.0
    alpha: float = 1.0
    d: float = 1.0

    def __post_init__(self):
        for name in ("nu1", "nu2", "alpha", "d"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.nu1 <= 0:
            raise ValueError(f"nu1 must be positive, got {self.nu1}")
        if self.nu2 < 0:
            raise ValueError(f"nu2 must be nonnegative, got {self.nu2}")
        if not 0 < self.alpha <= 4:
            raise ValueError(f"alpha must lie in (0, 4], got {self.alpha}")
        if not 0 < self.d <= 1:
            raise ValueError(f"d must lie in (0, 1], got {self.d}")

    @property
    def is_vanilla(self) -> bool:
        return self.nu2 == 0 and self.alpha == 1 and self.d == 1

    @property
    def is_damped(self) -> bool:
        return self.d < 1

    def as_dict(self) -> dict:
        return {"nu1": self.nu1, "nu2": self.nu2, "alpha": self.alpha, "d": self.d}


@dataclass(frozen=True)
class ProblemClass:
    """Normalized sector ``[m_hat, L_hat]`` of the smooth, strongly convex part."""

    m_hat: float
    L_hat: float

    def __post_init__(self):
        m, L = float(self.m_hat), float(self.L_hat)
        if not (np.isfinite(m) and np.isfinite(L)) or m <= 0 or L <= 0:
            raise ValueError(f"sector bounds must be positive, got m={m}, L={L}")
        if m > L:
            raise ValueError(f"need m_hat <= L_hat, got m={m}, L={L}")
        object.__setattr__(self, "m_hat", m)
        object.__setattr__(self, "L_hat", L)

    @property
    def kappa(self) -> float:
        return self.L_hat / self.m_hat

    @classmethod
    def from_kappa(cls, kappa: float, L_hat: float = 1.0) -> "ProblemClass":
        """Problem class with ``L_hat`` fixed and ``m_hat = L_hat / kappa``."""
        kappa = float(kappa)
        if not kappa >= 1:
            raise ValueError(f"kappa must be >= 1, got {kappa}")
        return cls(L_hat / kappa, L_hat)

    def contains(self, theta: float) -> bool:
        return self.m_hat <= theta <= self.L_hat

    def as_dict(self) -> dict:
        return {"m_hat": self.m_hat, "L_hat": self.L_hat, "kappa": self.kappa}


def normalize_problem(m, L, sigma_max_A, sigma_min_A) -> ProblemClass:
    """Sector of ``f o A^{-1}`` for ``f`` in ``S(m, L)`` and invertible ``A``.

    Returns ``m_hat = m / sigma_max^2`` and ``L_hat = L / sigma_min^2``, so that
    ``kappa = (L/m) * (sigma_max/sigma_min)^2``.
    """
    m, L = float(m), float(L)
    smax, smin = float(sigma_max_A), float(sigma_min_A)
    if min(m, L, smax, smin) <= 0:
        raise ValueError("curvature bounds and singular values must be positive")
    if m > L:
        raise ValueError(f"need m <= L, got m={m}, L={L}")
    if smin > smax:
        raise ValueError("sigma_min_A exceeds sigma_max_A")
    return ProblemClass(m / smax**2, L / smin**2)


@dataclass(frozen=True)
class StateSpacePlant:
    """LTI part ``(A_hat, B_hat, C_hat, D_hat)`` of an ADMM variant."""

    A_hat: np.ndarray
    B_hat: np.ndarray
    C_hat: np.ndarray
    D_hat: np.ndarray
    params: Optional[AlgorithmParams] = None
    v_bar: str = "(-c, 0)"

    state_dim = 4
    in_dim = 2
    out_dim = 2

    def __post_init__(self):
        for name, shape in (("A_hat", (4, 4)), ("B_hat", (4, 2)),
                            ("C_hat", (2, 4)), ("D_hat", (2, 2))):
            arr = _freeze(getattr(self, name))
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            object.__setattr__(self, name, arr)

    def lifted(self, p: int):
        """Matrices of ``G kron I_p``."""
        eye = np.eye(p)
        return tuple(np.kron(M, eye) for M in (self.A_hat, self.B_hat, self.C_hat, self.D_hat))

    @property
    def step(self) -> float:
        """ADMM step size read back from ``D_hat``."""
        return -float(self.D_hat[0, 0])


def build_plant(params: AlgorithmParams) -> StateSpacePlant:
    """State-space realization of A-ADMM for the given tuning.

    With ``d < 1`` the dual recursion becomes
    ``lambda_{k+1} = d * lambda_k - d * nu1 * gamma_k``, which only touches the
    third rows of ``A_hat`` and ``B_hat``.
    """
    nu1, nu2, a, d = params.nu1, params.nu2, params.alpha, params.d
    row4 = [-nu2 * (a - 1), -nu2, (a - 1) * (1 + nu2), 1 + nu2]
    A = np.array([
        [0, 0, 1, 0],
        [0, 0, 0, 1],
        [0, 0, 0, 0],
        row4,
    ], dtype=float)
    B = np.array([
        [0, 0],
        [0, 0],
        [0, -nu1],
        [a * nu1, -nu1],
    ], dtype=float)
    C = np.array([
        [nu2, nu2, -(1 + nu2), -(1 + nu2)],
        row4,
    ], dtype=float)
    D = np.array([
        [-nu1, 0],
        [a * nu1, -nu1],
    ], dtype=float)
    if d < 1:
        A[2, 2] = d
        B[2, 1] = -d * nu1
    return StateSpacePlant(A, B, C, D, params=params)


@dataclass(frozen=True)
class Trace:
    """Trajectory of a Lur'e system or of the algorithm itself.

    ``states`` has shape ``(K+1, 4p)`` in block order
    ``(lambda_{k-1}, s_{k-1}, lambda_k, s_k)``; ``outputs`` holds
    ``v_k = (r_{k+1}, s_{k+1})`` and ``inputs`` holds ``w_k`` with shape
    ``(K, 2p)`` each.
    """

    states: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        K = self.outputs.shape[0]
        if self.states.shape[0] != K + 1 or self.inputs.shape[0] != K:
            raise ValueError("trace lengths are inconsistent with the horizon")

    @property
    def horizon(self) -> int:
        return self.outputs.shape[0]

    @property
    def p(self) -> int:
        return self.states.shape[1] // 4

    def blocks(self):
        """States reshaped to ``(K+1, 4, p)``."""
        return self.states.reshape(self.states.shape[0], 4, self.p)

    @property
    def r(self) -> np.ndarray:
        return self.outputs[:, : self.p]

    @property
    def s(self) -> np.ndarray:
        return self.outputs[:, self.p:]

    @property
    def lam(self) -> np.ndarray:
        """``lambda_k`` for ``k = 0..K``."""
        return self.blocks()[:, 2, :]


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float)).copy()


def _initial_blocks(init, p=None):
    if len(init) == 2:
        s0, lam0 = (_vec(v) for v in init)
        s_prev, lam_prev = s0.copy(), lam0.copy()
    elif len(init) == 4:
        s_prev, lam_prev, s0, lam0 = init
        s0, lam0 = _vec(s0), _vec(lam0)
        s_prev = s0.copy() if s_prev is None else _vec(s_prev)
        lam_prev = lam0.copy() if lam_prev is None else _vec(lam_prev)
    else:
        raise ValueError("init must be (s0, lam0) or (s_prev, lam_prev, s0, lam0)")
    return s_prev, lam_prev, s0, lam0


def iterate_direct(params: AlgorithmParams, prox_f, prox_g, c, init, K: int) -> Trace:
    """Run A-ADMM in transformed coordinates.

    Parameters
    ----------
    params : AlgorithmParams
    prox_f, prox_g : callable
        Exact proximal maps of ``nu1 * f_hat`` and ``nu1 * g_hat`` (one vector
        argument each).
    c : array_like
        Right-hand side of the coupling constraint.
    init : tuple
        ``(s_prev, lam_prev, s0, lam0)``; ``None`` entries for the previous
        iterates (or a 2-tuple ``(s0, lam0)``) mean zero initial momentum.
    K : int
        Number of iterations.

    Returns
    -------
    Trace
        States ``xi_0..xi_K``, outputs ``(r_{k+1}, s_{k+1})`` and the inputs
        ``w_k = (grad f_hat(r_{k+1}), gamma_k)`` recovered from the
        optimality conditions of the two proximal steps.
    """
    nu1, nu2, a, d = params.nu1, params.nu2, params.alpha, params.d
    s_prev, lam_prev, s, lam = _initial_blocks(init)
    c = np.broadcast_to(_vec(c), s.shape).astype(float)
    p = s.size
    states = np.empty((K + 1, 4 * p))
    outputs = np.empty((K, 2 * p))
    inputs = np.empty((K, 2 * p))
    states[0] = np.concatenate([lam_prev, s_prev, lam, s])
    for k in range(K):
        s_hat = s + nu2 * (s - s_prev)
        lam_hat = lam + nu2 * (lam - lam_prev)
        y_r = c - s_hat - lam_hat
        r_new = _vec(prox_f(y_r))
        y_s = a * c - a * r_new - (a - 1) * s_hat - lam_hat
        s_new = _vec(prox_g(y_s))
        dual_step = a * r_new + (a - 1) * s_hat + s_new - a * c + lam_hat
        lam_new = dual_step if d == 1 else d * (dual_step + lam)
        inputs[k, :p] = (y_r - r_new) / nu1
        inputs[k, p:] = -dual_step / nu1
        outputs[k, :p] = r_new
        outputs[k, p:] = s_new
        s_prev, lam_prev, s, lam = s, lam, s_new, lam_new
        states[k + 1] = np.concatenate([lam_prev, s_prev, lam, s])
    return Trace(states, outputs, inputs)


def _implicit_prox(grad_f, y, sigma, x0, tol):
    # r + sigma * grad_f(r) = y, the optimality condition of prox_{sigma f}(y)
    sol = optimize.root(lambda r: r + sigma * _vec(grad_f(r)) - y, x0, method="hybr",
                        tol=tol)
    resid = np.max(np.abs(sol.x + sigma * _vec(grad_f(sol.x)) - y)) if sol.x.size else 0.0
    if not sol.success and resid > 1e3 * tol * max(1.0, np.max(np.abs(y))):
        raise ImplicitSolveError(f"implicit gradient step did not converge: {sol.message}")
    return sol.x


def simulate_lure(plant: StateSpacePlant, grad_f, prox_g, c, xi0, K: int, *,
                  prox_f=None, tol: float = 1e-14) -> Trace:
    """Simulate ``xi+ = A xi + B w``, ``v_hat = C xi + D w`` with ``w`` in feedback.

    The output equation is implicit because ``D_hat`` couples ``v`` and ``w``.
    Since ``D_hat`` is lower triangular with diagonal ``-sigma`` it is resolved
    one channel at a time: ``r = prox_{sigma f}(c + C_1 xi)`` and then
    ``s = prox_{sigma g}(C_2 xi + D_21 grad f(r))``, after which
    ``w = (grad f(r), gamma)`` with ``gamma`` read from the prox residual.
    ``prox_f(y, sigma)`` is used when supplied; otherwise the first
    equation is solved numerically from ``grad_f``.

    ``prox_g(y, sigma)`` must be the proximal map of ``sigma * g_hat``.
    """
    A, B, C, D = (np.asarray(M) for M in (plant.A_hat, plant.B_hat, plant.C_hat, plant.D_hat))
    xi = _vec(xi0)
    if xi.size % 4:
        raise ValueError("state length must be a multiple of 4")
    p = xi.size // 4
    c = np.broadcast_to(_vec(c), (p,)).astype(float)
    sig_f, sig_g = -D[0, 0], -D[1, 1]
    if sig_f <= 0 or sig_g <= 0 or D[0, 1] != 0:
        raise ValueError("D_hat must be lower triangular with negative diagonal")
    eye = np.eye(p)
    Ak, Bk = np.kron(A, eye), np.kron(B, eye)
    states = np.empty((K + 1, 4 * p))
    outputs = np.empty((K, 2 * p))
    inputs = np.empty((K, 2 * p))
    states[0] = xi
    r = np.zeros(p)
    for k in range(K):
        blocks = xi.reshape(4, p)
        y_r = c + C[0] @ blocks
        if prox_f is not None:
            r = _vec(prox_f(y_r, sig_f))
        else:
            r = _implicit_prox(grad_f, y_r, sig_f, r, tol)
        w1 = (y_r - r) / sig_f
        y_s = C[1] @ blocks + D[1, 0] * w1
        s = _vec(prox_g(y_s, sig_g))
        gamma = (y_s - s) / sig_g
        w = np.concatenate([w1, gamma])
        xi = Ak @ xi + Bk @ w
        states[k + 1] = xi
        outputs[k, :p] = r
        outputs[k, p:] = s
        inputs[k] = w
    return Trace(states, outputs, inputs)


def closed_loop_matrix(plant: StateSpacePlant, theta_f: float, theta_g: float,
                       pc: Optional[ProblemClass] = None) -> np.ndarray:
    """``A_cl = A + B Theta (I - D Theta)^{-1} C`` for linear feedback ``w = Theta v``.

    ``Theta = diag(theta_f, theta_g)`` models quadratic ``f_hat`` and
    ``g_hat`` with those curvatures.  When ``pc`` is given, ``theta_f`` must
    lie in ``[m_hat, L_hat]``; ``theta_g`` must be nonnegative.
    """
    theta_f, theta_g = float(theta_f), float(theta_g)
    if pc is not None and not pc.contains(theta_f):
        raise SectorError(f"theta_f={theta_f} outside [{pc.m_hat}, {pc.L_hat}]")
    if theta_g < 0:
        raise SectorError(f"theta_g must be nonnegative, got {theta_g}")
    Th = np.diag([theta_f, theta_g])
    loop = np.eye(2) - plant.D_hat @ Th
    if abs(np.linalg.det(loop)) < 1e-14 * max(1.0, np.abs(loop).max() ** 2):
        raise SingularLoopError("I - D_hat Theta is singular")
    return plant.A_hat + plant.B_hat @ Th @ np.linalg.solve(loop, plant.C_hat)


def lifted_closed_loop(plant: StateSpacePlant, Qf, Qg) -> np.ndarray:
    """Closed loop of ``G kron I_p`` with ``w = blockdiag(Qf, Qg) v``.

    Unlike :func:`closed_loop_matrix` the two Hessians need not commute.
    """
    Qf, Qg = np.atleast_2d(Qf), np.atleast_2d(Qg)
    p = Qf.shape[0]
    A, B, C, D = plant.lifted(p)
    Th = np.zeros((2 * p, 2 * p))
    Th[:p, :p] = Qf
    Th[p:, p:] = Qg
    loop = np.eye(2 * p) - D @ Th
    try:
        return A + B @ Th @ np.linalg.solve(loop, C)
    except np.linalg.LinAlgError as exc:
        raise SingularLoopError(str(exc)) from exc


@dataclass(frozen=True)
class QuadraticFunction:
    """``f(x) = 0.5 x'Qx + q'x`` with symmetric ``Q``; used for test instances."""

    Q: np.ndarray
    q: np.ndarray = field(default=None)

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        Q = 0.5 * (Q + Q.T)
        q = np.zeros(Q.shape[0]) if self.q is None else _vec(self.q)
        object.__setattr__(self, "Q", _freeze(Q))
        object.__setattr__(self, "q", _freeze(q))

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    def __call__(self, x):
        x = _vec(x)
        return 0.5 * x @ self.Q @ x + self.q @ x

    def grad(self, x):
        return self.Q @ _vec(x) + self.q

    def prox(self, y, sigma):
        """``argmin_x sigma f(x) + 0.5 |x - y|^2``."""
        return np.linalg.solve(np.eye(self.dim) + sigma * self.Q, _vec(y) - sigma * self.q)

    def bind_prox(self, sigma):
        return lambda y: self.prox(y, sigma)


def lure_fixed_point(plant: StateSpacePlant, f: QuadraticFunction, g: QuadraticFunction,
                     c) -> np.ndarray:
    """Fixed point ``xi*`` of the plant in feedback with quadratic ``f``, ``g``.

    Solves the affine equation ``xi = A_cl xi + b`` obtained by substituting
    the linear feedback (including the linear terms and the offset ``c``).
    """
    p = f.dim
    c = np.broadcast_to(_vec(c), (p,)).astype(float)
    A, B, C, D = plant.lifted(p)
    Th = np.zeros((2 * p, 2 * p))
    Th[:p, :p] = f.Q
    Th[p:, p:] = g.Q
    # w = Th (v_hat - v_bar) + q with v_hat = C xi + D w and v_bar = (-c, 0)
    offset = np.concatenate([c, np.zeros(p)])
    q = np.concatenate([f.q, g.q])
    loop = np.eye(2 * p) - Th @ D
    W_xi = np.linalg.solve(loop, Th @ C)
    w0 = np.linalg.solve(loop, Th @ offset + q)
    A_cl = A + B @ W_xi
    b = B @ w0
    return np.linalg.solve(np.eye(4 * p) - A_cl, b)
