import numpy as np
import pytest

from aadmm.certify import min_rate
from aadmm.lure import AlgorithmParams, ProblemClass
from aadmm.ozf import OZFMultiplier
from aadmm.soundness import (check_certificate, iqc_batch_margin, quadratic_rate_bound,
                             random_gradient_batch, random_quadratic_instance, selftest, theta_grid)
from aadmm.tuning import nm_params


def test_theta_grid():
    tf, tg = theta_grid(ProblemClass.from_kappa(10), 5, 4)
    assert tf[0] == pytest.approx(0.1) and tf[-1] == 1 and tg[0] == 0 and len(tg) == 4


def test_random_instance_in_class(rng):
    pc = ProblemClass.from_kappa(50)
    for _ in range(20):
        f, g, c = random_quadratic_instance(pc, rng, 3)
        ev_f = np.linalg.eigvalsh(f.Q)
        assert ev_f[0] >= pc.m_hat - 1e-12 and ev_f[-1] <= pc.L_hat + 1e-12
        assert np.linalg.eigvalsh(g.Q)[0] >= -1e-12


def test_quadratic_bound_below_certified():
    pc = ProblemClass.from_kappa(10)
    params = nm_params(pc)
    cert = min_rate(params, pc, 2)
    assert quadratic_rate_bound(params, pc) <= cert.rho + 1e-6


def test_vanilla_quadratic_bound_tight():
    # classical step 1/sqrt(m L) at kappa 100: the certificate is tight against the quadratic bound
    pc = ProblemClass.from_kappa(100)
    params = AlgorithmParams(10.0)
    cert = min_rate(params, pc, 2)
    lb = quadratic_rate_bound(params, pc)
    assert lb <= cert.rho + 1e-6 and cert.rho - lb < 0.005


def test_batch_negative_control(rng):
    pc = ProblemClass.from_kappa(10)
    batch = random_gradient_batch(ProblemClass(pc.m_hat, 3 * pc.L_hat), rng, 200)
    assert iqc_batch_margin(OZFMultiplier.sector(0, 0.9), pc, batch).min() < -1e-3


def test_check_certificate(rng):
    pc = ProblemClass.from_kappa(5)
    params = nm_params(pc)
    cert = min_rate(params, pc, 2)
    r = check_certificate(cert, params, pc, rng, n_traj=5, n_iqc=10, K=100)
    assert r["spectral_radius"] <= cert.rho + 1e-6
    assert r["trajectory_ratio"] <= 1 and r["iqc_ok"] == 1 and r["coeffs_ok"] == 1


def test_selftest_passes():
    assert all(r.passed for r in selftest(0))


def test_decayed_increments_stay_monotone(rng):
    # increments far below eps relative to the base point must keep the sign of <w, v>
    pc = ProblemClass.from_kappa(3)
    batch = random_gradient_batch(pc, rng, 200, T=80)
    v, w = batch.v_tilde, batch.w_tilde
    inner = np.einsum("tcnp,tcnp->tcn", v, w)
    assert inner[:, 1].min() >= 0
    assert np.all(inner[:, 0] >= pc.m_hat * np.einsum("tnp,tnp->tn", v[:, 0], v[:, 0]) * (1 - 1e-12))
