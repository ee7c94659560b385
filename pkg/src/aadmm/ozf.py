"""rho-hard O'Shea-Zames-Falb multipliers and the augmented plant.

Each nonlinearity gets an FIR filter ``Psi(h) = diag(sum_t h_t z^-t, 1)``
acting on its (input, output) pair; for the smooth part the pair is first
mapped through the sector transform ``[[L, -1], [-m, 1]]``.  Filters are
realized as shift registers, so their ``A``/``B`` matrices do not depend on
the coefficients and the resulting LMI is affine in ``(P, h_f, h_g)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import signal

from .lure import ProblemClass, StateSpacePlant

__all__ = [
    "M_IQC",
    "OZFMultiplier",
    "ParametricFilter",
    "AugmentedPlant",
    "SignalPair",
    "validate_coeffs",
    "coeff_weights",
    "filter_g_realization",
    "filter_f_realization",
    "build_augmented_plant",
    "filter_signals",
    "iqc_partial_sums",
    "iqc_sample_check",
]

M_IQC = np.array([[0.0, 1.0], [1.0, 0.0]])
M_IQC.setflags(write=False)

# rounding slack for the weighted-sum condition, in units of sum |terms|
_SUM_SLACK = 8 * np.finfo(float).eps


def _check_rho(rho):
    rho = float(rho)
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    return rho


def coeff_weights(n_ozf: int, rho: float) -> np.ndarray:
    """Weights ``rho^(-2 tau)``, ``tau = 0..n_ozf``, in extended precision."""
    rho = _check_rho(rho)
    tau = np.arange(n_ozf + 1)
    return np.longdouble(rho) ** (-2 * tau)


def validate_coeffs(h, rho: float) -> bool:
    """True iff ``h_t <= 0`` for ``t >= 1`` and ``sum_t rho^(-2t) h_t >= 0``."""
    w = coeff_weights(len(h) - 1, rho)
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or h.size == 0:
        raise ValueError("h must be a nonempty vector")
    if np.any(h[1:] > 0):
        return False
    terms = w * h.astype(np.longdouble)
    total = terms.sum()
    return bool(total >= -_SUM_SLACK * np.abs(terms).sum())


@dataclass(frozen=True)
class OZFMultiplier:
    """Coefficients of the two filters, validated at discount ``rho``."""

    h_f: np.ndarray
    h_g: np.ndarray
    rho: float

    def __post_init__(self):
        h_f = np.array(self.h_f, dtype=float)
        h_g = np.array(self.h_g, dtype=float)
        if h_f.shape != h_g.shape or h_f.ndim != 1:
            raise ValueError("h_f and h_g must be vectors of equal length")
        for h in (h_f, h_g):
            h.setflags(write=False)
        object.__setattr__(self, "h_f", h_f)
        object.__setattr__(self, "h_g", h_g)
        object.__setattr__(self, "rho", _check_rho(self.rho))

    @property
    def n_ozf(self) -> int:
        return self.h_f.size - 1

    def is_valid(self) -> bool:
        return validate_coeffs(self.h_f, self.rho) and validate_coeffs(self.h_g, self.rho)

    @classmethod
    def sector(cls, n_ozf: int = 0, rho: float = 0.5) -> "OZFMultiplier":
        e0 = np.zeros(n_ozf + 1)
        e0[0] = 1.0
        return cls(e0, e0, rho)


@dataclass(frozen=True)
class ParametricFilter:
    """Realization ``(A, B, C(h), D(h))`` of ``diag(H(z), 1) @ pre``.

    ``A`` is the ``n x n`` down-shift and ``B`` loads the first channel of
    ``pre @ u``; the state holds the last ``n`` values of that channel.
    """

    n_ozf: int
    pre: np.ndarray

    def __post_init__(self):
        pre = np.array(self.pre, dtype=float)
        pre.setflags(write=False)
        object.__setattr__(self, "pre", pre)

    @property
    def A(self) -> np.ndarray:
        return np.eye(self.n_ozf, k=-1)

    @property
    def B(self) -> np.ndarray:
        B = np.zeros((self.n_ozf, 2))
        if self.n_ozf:
            B[0] = self.pre[0]
        return B

    def _check(self, h):
        h = np.asarray(h, dtype=float)
        if h.shape != (self.n_ozf + 1,):
            raise ValueError(f"expected {self.n_ozf + 1} coefficients, got {h.shape}")
        return h

    def C(self, h) -> np.ndarray:
        h = self._check(h)
        C = np.zeros((2, self.n_ozf))
        C[0] = h[1:]
        return C

    def D(self, h) -> np.ndarray:
        h = self._check(h)
        return np.diag([h[0], 1.0]) @ self.pre

    def simulate(self, h, u) -> np.ndarray:
        """Filter a sequence ``u`` of shape ``(T, 2)`` or ``(T, 2, p)`` from rest."""
        u = np.asarray(u, dtype=float)
        z = np.einsum("ij,tj...->ti...", self.pre, u)
        out = np.empty_like(z)
        out[:, 0] = signal.lfilter(self._check(h), [1.0], z[:, 0], axis=0)
        out[:, 1] = z[:, 1]
        return out


def filter_g_realization(n_ozf: int) -> ParametricFilter:
    """``Psi_g(h) = diag(sum h_t z^-t, 1)``; pure feed-through when ``n_ozf = 0``."""
    if n_ozf < 0:
        raise ValueError("n_ozf must be nonnegative")
    return ParametricFilter(int(n_ozf), np.eye(2))


def filter_f_realization(n_ozf: int, m_hat: float, L_hat: float) -> ParametricFilter:
    """``Psi_f(h) = Psi_g(h) [[L, -1], [-m, 1]]`` for the sector ``[m, L]``."""
    if n_ozf < 0:
        raise ValueError("n_ozf must be nonnegative")
    if not 0 < m_hat <= L_hat:
        raise ValueError(f"invalid sector [{m_hat}, {L_hat}]")
    return ParametricFilter(int(n_ozf), np.array([[L_hat, -1.0], [-m_hat, 1.0]]))


@dataclass(frozen=True)
class AugmentedPlant:
    """Series interconnection ``Psi [G; I]`` mapping ``w~`` to ``psi``.

    The state is ``(xi, zeta_f, zeta_g)`` of size ``4 + 2 n_ozf``; outputs
    are ``psi = (psi_1, psi_2)``.  ``C``/``D`` are affine in the coefficients:
    ``C(h) = C0 + sum_t h_f[t] Cf[t] + sum_t h_g[t] Cg[t]`` and likewise for
    ``D``.
    """

    A: np.ndarray
    B: np.ndarray
    C0: np.ndarray
    D0: np.ndarray
    Cf: np.ndarray
    Df: np.ndarray
    Cg: np.ndarray
    Dg: np.ndarray
    n_ozf: int
    pc: ProblemClass
    plant: StateSpacePlant

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    def C(self, h_f, h_g) -> np.ndarray:
        return (self.C0 + np.tensordot(np.asarray(h_f, float), self.Cf, 1)
                + np.tensordot(np.asarray(h_g, float), self.Cg, 1))

    def D(self, h_f, h_g) -> np.ndarray:
        return (self.D0 + np.tensordot(np.asarray(h_f, float), self.Df, 1)
                + np.tensordot(np.asarray(h_g, float), self.Dg, 1))

    def simulate(self, h_f, h_g, w) -> np.ndarray:
        """Response ``psi`` to inputs ``w`` of shape ``(T, 2)`` from zero state."""
        from .kernels import lti_response

        w = np.asarray(w, dtype=float)
        return lti_response(self.A, self.B, self.C(h_f, h_g), self.D(h_f, h_g), w)[0]


def build_augmented_plant(plant: StateSpacePlant, pc: ProblemClass, n_ozf: int) -> AugmentedPlant:
    """Augment the algorithm's LTI part with the two OZF filters.

    The filters see the pairs ``(v1, w1)`` and ``(v2, w2)``, i.e. the
    signals ``(v1, v2, w1, w2)`` are regrouped as ``(v1, w1, v2, w2)``.
    """
    n = int(n_ozf)
    if n < 0:
        raise ValueError("n_ozf must be nonnegative")
    Ah, Bh, Ch, Dh = (np.asarray(M) for M in (plant.A_hat, plant.B_hat, plant.C_hat, plant.D_hat))
    psi_f = filter_f_realization(n, pc.m_hat, pc.L_hat)
    psi_g = filter_g_realization(n)
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    # filter inputs as maps of (xi, w)
    Jf_C, Jf_D = np.vstack([Ch[0], np.zeros(4)]), np.vstack([Dh[0], e1])
    Jg_C, Jg_D = np.vstack([Ch[1], np.zeros(4)]), np.vstack([Dh[1], e2])

    N = 4 + 2 * n
    sf, sg = slice(4, 4 + n), slice(4 + n, N)
    A = np.zeros((N, N))
    B = np.zeros((N, 2))
    A[:4, :4] = Ah
    B[:4] = Bh
    A[sf, :4] = psi_f.B @ Jf_C
    A[sf, sf] = psi_f.A
    B[sf] = psi_f.B @ Jf_D
    A[sg, :4] = psi_g.B @ Jg_C
    A[sg, sg] = psi_g.A
    B[sg] = psi_g.B @ Jg_D

    def output(h_f, h_g):
        C = np.zeros((4, N))
        D = np.zeros((4, 2))
        C[:2, :4] = psi_f.D(h_f) @ Jf_C
        C[:2, sf] = psi_f.C(h_f)
        D[:2] = psi_f.D(h_f) @ Jf_D
        C[2:, :4] = psi_g.D(h_g) @ Jg_C
        C[2:, sg] = psi_g.C(h_g)
        D[2:] = psi_g.D(h_g) @ Jg_D
        return C, D

    zero = np.zeros(n + 1)
    C0, D0 = output(zero, zero)
    Cf, Df, Cg, Dg = [], [], [], []
    for t in range(n + 1):
        e = np.zeros(n + 1)
        e[t] = 1.0
        C, D = output(e, zero)
        Cf.append(C - C0)
        Df.append(D - D0)
        C, D = output(zero, e)
        Cg.append(C - C0)
        Dg.append(D - D0)
    arrays = [A, B, C0, D0, np.array(Cf), np.array(Df), np.array(Cg), np.array(Dg)]
    for arr in arrays:
        arr.setflags(write=False)
    return AugmentedPlant(*arrays, n_ozf=n, pc=pc, plant=plant)


@dataclass(frozen=True)
class SignalPair:
    """Error signals ``v~ = (a~, b~)`` and ``w~ = (grad f~, gamma~)``.

    Arrays have shape ``(T, 2)`` or ``(T, 2, ...)``; trailing axes hold
    vector components (and, for batches, trajectory indices).
    """

    v_tilde: np.ndarray
    w_tilde: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v_tilde, dtype=float)
        w = np.asarray(self.w_tilde, dtype=float)
        if v.shape != w.shape or v.ndim < 2 or v.shape[1] != 2:
            raise ValueError(f"signal shapes {v.shape} and {w.shape} do not match")
        object.__setattr__(self, "v_tilde", v)
        object.__setattr__(self, "w_tilde", w)

    def __len__(self):
        return self.v_tilde.shape[0]


def filter_signals(mult: OZFMultiplier, pc: ProblemClass, signals: SignalPair):
    """Filtered sequences ``psi_1`` (smooth part) and ``psi_2`` (nonsmooth part)."""
    n = mult.n_ozf
    v, w = signals.v_tilde, signals.w_tilde
    psi1 = filter_f_realization(n, pc.m_hat, pc.L_hat).simulate(
        mult.h_f, np.stack([v[:, 0], w[:, 0]], axis=1))
    psi2 = filter_g_realization(n).simulate(mult.h_g, np.stack([v[:, 1], w[:, 1]], axis=1))
    return psi1, psi2


def iqc_partial_sums(psi, rho: float):
    """Discounted partial sums of ``psi' (M kron I) psi``, rescaled by ``rho^(2T)``.

    Returns ``(S, scale)`` where ``S[T] = sum_{k<=T} rho^(2(T-k)) q_k`` and
    ``scale[T]`` is the same recursion applied to ``|psi_k|^2``; the sign of
    ``S`` equals the sign of the undiscounted-weight sum of the IQC.
    """
    from .kernels import discounted_cumsum

    psi = np.asarray(psi, dtype=float)
    q = 2.0 * psi[:, 0] * psi[:, 1]
    mag = psi[:, 0] ** 2 + psi[:, 1] ** 2
    if q.ndim > 1:
        q = q.sum(axis=tuple(range(1, q.ndim)))
        mag = mag.sum(axis=tuple(range(1, mag.ndim)))
    r2 = float(rho) ** 2
    return discounted_cumsum(q, r2), discounted_cumsum(mag, r2)


def _magnitude_signals(mult: OZFMultiplier, pc: ProblemClass, signals: SignalPair):
    """Filter outputs with every coefficient and signal replaced by its magnitude.

    These bound the size of the terms that enter ``psi``, which is the scale
    of the rounding error in ``psi' M psi``.
    """
    n = mult.n_ozf
    v, w = np.abs(signals.v_tilde), np.abs(signals.w_tilde)
    out = []
    for filt, h, k in ((filter_f_realization(n, pc.m_hat, pc.L_hat), mult.h_f, 0),
                       (filter_g_realization(n), mult.h_g, 1)):
        mag = ParametricFilter(n, np.abs(filt.pre))
        out.append(mag.simulate(np.abs(h), np.stack([v[:, k], w[:, k]], axis=1)))
    return out


def iqc_sample_check(mult: OZFMultiplier, pc: ProblemClass, signals: SignalPair,
                     rho: Optional[float] = None, tol: float = 1e-9) -> bool:
    """Check the discounted IQC on a finite sample for every horizon ``T``.

    Passes when each partial sum is ``>= -tol * scale`` for both filters,
    where ``scale`` is the same discounted sum evaluated on magnitudes
    (absolute coefficients, absolute signals), i.e. the size of the terms
    the rounding error is relative to.
    """
    rho = _check_rho(mult.rho if rho is None else rho)
    psis = filter_signals(mult, pc, signals)
    mags = _magnitude_signals(mult, pc, signals)
    for psi, mag in zip(psis, mags):
        S, _ = iqc_partial_sums(psi, rho)
        scale, _ = iqc_partial_sums(mag, rho)
        if np.any(S < -tol * np.maximum(scale, np.finfo(float).tiny)):
            return False
    return True
