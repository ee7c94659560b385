"""Independent checks of issued certificates on concrete function classes.

Quadratic instances give exact linear closed loops, so a certificate must
bound their spectral radius and their trajectories.  Random gradient maps
give signals on which the filter coefficients must satisfy the discounted
IQC for every horizon.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from scipy.stats import ortho_group

from .certify import RateCertificate, min_rate
from .lure import (AlgorithmParams, ProblemClass, QuadraticFunction, build_plant,
                   closed_loop_matrix, lure_fixed_point, simulate_lure)
from .ozf import OZFMultiplier, SignalPair, iqc_sample_check

__all__ = [
    "theta_grid",
    "quadratic_rate_bound",
    "random_quadratic_instance",
    "trajectory_bound_ratio",
    "random_gradient_signals",
    "random_gradient_batch",
    "iqc_batch_margin",
    "check_certificate",
    "SelfTestReport",
    "selftest",
]


def theta_grid(pc: ProblemClass, n_f: int = 41, n_g: int = 41):
    """Curvatures probed by the quadratic oracle: ``f`` on its sector, ``g >= 0``."""
    tf = np.linspace(pc.m_hat, pc.L_hat, n_f)
    tg = np.concatenate([[0.0], np.logspace(-3, 3, n_g - 1)]) * pc.L_hat
    return tf, tg


def quadratic_rate_bound(params: AlgorithmParams, pc: ProblemClass, n_f: int = 41,
                         n_g: int = 41) -> float:
    """Largest spectral radius of the closed loop over the curvature grid."""
    plant = build_plant(params)
    tf, tg = theta_grid(pc, n_f, n_g)
    worst = 0.0
    for a in tf:
        for b in tg:
            ev = np.linalg.eigvals(closed_loop_matrix(plant, a, b, pc))
            worst = max(worst, float(np.abs(ev).max()))
    return worst


def _spd(rng, p, lo, hi):
    U = ortho_group.rvs(p, random_state=rng) if p > 1 else np.ones((1, 1))
    return U @ np.diag(rng.uniform(lo, hi, p)) @ U.T


def random_quadratic_instance(pc: ProblemClass, rng, p: Optional[int] = None):
    """``(f, g, c)`` with ``spec(Q_f)`` in the sector and ``Q_g >= 0``."""
    p = p or int(rng.integers(1, 4))
    ev = np.concatenate([[pc.m_hat, pc.L_hat], rng.uniform(pc.m_hat, pc.L_hat, p)])
    ev = rng.permutation(ev)[:p]
    U = ortho_group.rvs(p, random_state=rng) if p > 1 else np.ones((1, 1))
    f = QuadraticFunction(U @ np.diag(ev) @ U.T, rng.standard_normal(p))
    g_scale = float(np.exp(rng.uniform(np.log(1e-2), np.log(1e2)))) * pc.L_hat
    g = QuadraticFunction(_spd(rng, p, 0.0, g_scale), rng.standard_normal(p))
    return f, g, rng.standard_normal(p)


def trajectory_bound_ratio(cert: RateCertificate, params: AlgorithmParams, pc: ProblemClass,
                           rng, K: int = 200, floor: float = 1e-12) -> float:
    """Worst ``|xi_k - xi*| / (sqrt(kappa_P) rho^k |xi_0 - xi*| + eps_k)`` on one instance.

    ``eps_k = floor * (1 + |xi*| + |xi_0 - xi*|)`` absorbs rounding once the
    bound drops below machine precision.  Values ``<= 1`` mean the bound holds.
    """
    plant = build_plant(params)
    f, g, c = random_quadratic_instance(pc, rng)
    xi_star = lure_fixed_point(plant, f, g, c)
    xi0 = xi_star + rng.standard_normal(xi_star.size) * 10.0 ** rng.uniform(-2, 2)
    tr = simulate_lure(plant, f.grad, g.prox, c, xi0, K, prox_f=f.prox)
    err = np.linalg.norm(tr.states - xi_star, axis=1)
    e0 = err[0]
    bound = np.sqrt(cert.kappa_P) * cert.rho ** np.arange(K + 1) * e0
    eps = floor * (1.0 + np.linalg.norm(xi_star) + e0)
    return float(np.max(err / (bound + eps)))


def _tanh_increment(a, d):
    """``tanh(a + d) - tanh(a)`` with error relative to ``d``, not to ``tanh(a)``."""
    return np.tanh(d) * (1.0 - np.tanh(a) * np.tanh(a + d))


def _grad_increment(rng, p, lo, hi):
    """Increment map ``(x, dx) -> grad(x + dx) - grad(x)`` of a random convex function.

    The gradient is ``lo x + (hi - lo) U' tanh(g U x) / g`` (slopes in
    ``[lo, hi]``).  Both parts are evaluated on ``dx`` directly so that the
    rounding error stays relative to the increment; differencing two
    gradient values would leave an absolute error of order ``eps`` that
    swamps decayed increments.
    """
    U = ortho_group.rvs(p, random_state=rng) if p > 1 else np.ones((1, 1))
    gain = rng.uniform(0.5, 5.0, p)
    span = hi - lo

    def inc(x, dx):
        t = _tanh_increment(gain * (U @ x), gain * (U @ dx))
        return lo * dx + span * U.T @ (t / gain)

    return inc


def random_gradient_signals(pc: ProblemClass, rng, T: int = 60,
                            p: Optional[int] = None) -> SignalPair:
    """Error signals ``v~``, ``w~ = grad(v* + v~) - grad(v*)`` for random convex maps.

    The smooth channel uses a gradient with slopes in ``[m_hat, L_hat]``; the
    nonsmooth channel a monotone gradient with slopes in ``[0, 100 L_hat]``.
    """
    p = p or int(rng.integers(1, 4))
    inc_f = _grad_increment(rng, p, pc.m_hat, pc.L_hat)
    inc_g = _grad_increment(rng, p, 0.0, 100.0 * pc.L_hat * rng.uniform())
    v_star = rng.standard_normal((2, p)) * 3
    growth = rng.uniform(0.5, 1.2)
    v = rng.standard_normal((T, 2, p)) * (growth ** np.arange(T))[:, None, None]
    v *= 10.0 ** rng.uniform(-2, 1)
    w = np.empty_like(v)
    for k in range(T):
        w[k, 0] = inc_f(v_star[0], v[k, 0])
        w[k, 1] = inc_g(v_star[1], v[k, 1])
    return SignalPair(v, w)


def random_gradient_batch(pc: ProblemClass, rng, n: int, T: int = 60, p: int = 2) -> SignalPair:
    """``n`` independent trajectories stacked as ``(T, 2, n, p)``; vectorized form of
    :func:`random_gradient_signals`.
    """
    U = ortho_group.rvs(p, size=2 * n, random_state=rng).reshape(2, n, p, p) if p > 1 \
        else np.ones((2, n, 1, 1))
    gain = rng.uniform(0.5, 5.0, (2, n, p))
    lo = np.array([pc.m_hat, 0.0])[:, None, None]
    span = np.stack([np.full(n, pc.L_hat - pc.m_hat), 100.0 * pc.L_hat * rng.uniform(size=n)])
    v_star = rng.standard_normal((2, n, p)) * 3
    growth = rng.uniform(0.5, 1.2, n)
    v = rng.standard_normal((T, 2, n, p)) * (growth[None, :] ** np.arange(T)[:, None])[:, None, :, None]
    v *= 10.0 ** rng.uniform(-2, 1, n)[None, None, :, None]
    Ux = np.einsum("cnij,cnj->cni", U, v_star)
    Ud = np.einsum("cnij,tcnj->tcni", U, v)
    t = _tanh_increment(gain * Ux[None], gain * Ud) / gain
    w = lo * v + span[None, :, :, None] * np.einsum("cnji,tcnj->tcni", U, t)
    return SignalPair(v, w)


def iqc_batch_margin(mult: OZFMultiplier, pc: ProblemClass, batch: SignalPair) -> np.ndarray:
    """Worst ``S_T / scale_T`` over horizons, one value per trajectory of a batch."""
    from .kernels import discounted_cumsum
    from .ozf import _magnitude_signals, filter_signals

    r2 = mult.rho ** 2
    worst = np.full(batch.v_tilde.shape[2], np.inf)
    for psi, mag in zip(filter_signals(mult, pc, batch), _magnitude_signals(mult, pc, batch)):
        S = discounted_cumsum((2 * psi[:, 0] * psi[:, 1]).sum(-1), r2)
        scale = discounted_cumsum((2 * mag[:, 0] * mag[:, 1]).sum(-1), r2)
        worst = np.minimum(worst, (S / np.maximum(scale, np.finfo(float).tiny)).min(axis=0))
    return worst


def check_certificate(cert: RateCertificate, params: AlgorithmParams, pc: ProblemClass, rng,
                      n_traj: int = 20, n_iqc: int = 50, K: int = 200) -> Dict[str, float]:
    """Run every oracle on one certificate and return the worst margins."""
    spectral = quadratic_rate_bound(params, pc)
    ratio = max(trajectory_bound_ratio(cert, params, pc, rng, K) for _ in range(n_traj))
    mult = OZFMultiplier(cert.h_f, cert.h_g, cert.rho)
    iqc_ok = all(iqc_sample_check(mult, pc, random_gradient_signals(pc, rng))
                 for _ in range(n_iqc))
    return {"rho": cert.rho, "spectral_radius": spectral, "trajectory_ratio": ratio,
            "iqc_ok": float(iqc_ok), "coeffs_ok": float(mult.is_valid())}


@dataclass
class SelfTestReport:
    name: str
    passed: bool
    detail: str


def selftest(seed: int = 0, n_ozf: int = 2) -> List[SelfTestReport]:
    """Certify a few presets and check each certificate against the oracles."""
    from .tuning import get_preset

    rng = np.random.default_rng(seed)
    out = []
    for scheme, kappa in (("nm", 1.0), ("nm", 10.0), ("tm-damped", 50.0), ("vanilla", 5.0)):
        pc = ProblemClass.from_kappa(kappa)
        params = get_preset(scheme)(pc)
        cert = min_rate(params, pc, n_ozf)
        name = f"{scheme} kappa={kappa:g}"
        if cert is None:
            out.append(SelfTestReport(name, False, "no certificate"))
            continue
        r = check_certificate(cert, params, pc, rng, n_traj=5, n_iqc=10, K=100)
        ok = (r["spectral_radius"] <= cert.rho + 1e-6 and r["trajectory_ratio"] <= 1.0
              and r["iqc_ok"] == 1.0 and r["coeffs_ok"] == 1.0)
        detail = (f"rho={cert.rho:.4f} spectral={r['spectral_radius']:.4f} "
                  f"traj_ratio={r['trajectory_ratio']:.3g} iqc={'ok' if r['iqc_ok'] else 'FAIL'}")
        out.append(SelfTestReport(name, ok, detail))
    return out
