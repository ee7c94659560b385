import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aadmm.certify import (DELTA, BisectionOptions, RateCertificate, assemble_lmi, certify_at,
                           lmi_matrix, min_rate, solve_feasibility, theoretical_rates)
from aadmm.lure import AlgorithmParams, ProblemClass, build_plant
from aadmm.ozf import build_augmented_plant, validate_coeffs
from aadmm.tuning import nm_params, tm_params


def _aug(params, pc, n):
    return build_augmented_plant(build_plant(params), pc, n)


@pytest.mark.parametrize("n, size, nvars", [(0, 6, 12), (6, 18, 150)])
def test_lmi_dimensions(n, size, nvars):
    lmi = assemble_lmi(_aug(AlgorithmParams(1.0), ProblemClass.from_kappa(1), n), 0.5)
    assert lmi.size == size and lmi.n_vars == nvars


def test_lmi_affine_matches_direct(rng):
    pc = ProblemClass.from_kappa(30)
    aug = _aug(AlgorithmParams(0.9, 0.4, 1.3), pc, 3)
    lmi = assemble_lmi(aug, 0.8)
    lay = lmi.var_layout
    for _ in range(5):
        X = rng.standard_normal((10, 10))
        P = X @ X.T
        h_f, h_g = rng.standard_normal((2, 4))
        y = lay.pack(P, h_f, h_g)
        np.testing.assert_allclose(lmi.value(y), lmi_matrix(aug, 0.8, P, h_f, h_g), atol=1e-9)
        P2, hf2, hg2 = lay.unpack(y)
        np.testing.assert_allclose(P2, P)
        np.testing.assert_allclose(hf2, h_f)


def test_lmi_homogeneous(rng):
    aug = _aug(AlgorithmParams(1.0, 0.2), ProblemClass.from_kappa(5), 2)
    X = rng.standard_normal((8, 8))
    P, (h_f, h_g) = X @ X.T, rng.standard_normal((2, 3))
    base = lmi_matrix(aug, 0.7, P, h_f, h_g)
    np.testing.assert_allclose(lmi_matrix(aug, 0.7, 3.5 * P, 3.5 * h_f, 3.5 * h_g), 3.5 * base,
                               rtol=1e-12, atol=1e-12)


def test_feasible_above_minimum():
    pc = ProblemClass.from_kappa(1)
    res = certify_at(nm_params(pc), pc, 0.6, 6)
    assert res.feasible
    w = res.witness
    assert w.margin <= -DELTA
    assert np.linalg.eigvalsh(w.P)[0] >= 1 - 1e-12
    assert validate_coeffs(w.h_f, 0.6) and validate_coeffs(w.h_g, 0.6)


def test_infeasible_below_minimum():
    pc = ProblemClass.from_kappa(1)
    assert not certify_at(nm_params(pc), pc, 0.4, 6).feasible


@pytest.fixture(scope="module")
def nm_cert():
    pc = ProblemClass.from_kappa(1)
    return min_rate(nm_params(pc), pc, 6), pc


def test_min_rate_nm_kappa1(nm_cert):
    cert, _ = nm_cert
    assert cert.rho == pytest.approx(0.500, abs=0.01)


def test_certificate_invariants(nm_cert):
    cert, pc = nm_cert
    assert np.linalg.eigvalsh(cert.P)[0] >= 1 - 1e-9
    ev = np.linalg.eigvalsh(cert.P)
    assert cert.kappa_P == pytest.approx(ev[-1] / ev[0], rel=1e-9)
    assert validate_coeffs(cert.h_f, cert.rho) and validate_coeffs(cert.h_g, cert.rho)
    aug = _aug(nm_params(pc), pc, 6)
    margin = np.linalg.eigvalsh(lmi_matrix(aug, cert.rho, cert.P, cert.h_f, cert.h_g))[-1]
    assert margin <= -DELTA


def test_certificate_json_roundtrip(nm_cert):
    cert, _ = nm_cert
    text = cert.to_json()
    back = RateCertificate.from_json(text)
    assert back.rho == cert.rho and back.kappa_P == cert.kappa_P
    np.testing.assert_array_equal(back.P, cert.P)
    np.testing.assert_array_equal(back.h_f, cert.h_f)
    d = json.loads(text)
    assert d["n_ozf"] == 6 and d["params"]["nu1"] == 1.0


def test_bisection_tolerance_and_monotone():
    # the reported rate is feasible and one tolerance below it is not
    pc = ProblemClass.from_kappa(10)
    params = nm_params(pc)
    opts = BisectionOptions(refine_kappa=False)
    cert = min_rate(params, pc, 2, opts)
    assert certify_at(params, pc, cert.rho, 2).feasible
    assert not certify_at(params, pc, cert.rho - 2 * opts.tol, 2).feasible


def test_more_filter_taps_never_worse():
    pc = ProblemClass.from_kappa(10)
    params = nm_params(pc)
    opts = BisectionOptions(refine_kappa=False)
    certs = [min_rate(params, pc, n, opts) for n in (0, 1, 3)]
    rates = [c.rho if c is not None else 1.0 for c in certs]
    assert certs[2] is not None
    tol = opts.tol
    assert rates[1] <= rates[0] + tol and rates[2] <= rates[1] + tol


def test_no_certificate_undamped_tm():
    pc = ProblemClass.from_kappa(1000)
    assert min_rate(tm_params(pc), pc, 2, BisectionOptions(refine_kappa=False)) is None


def test_backends_agree():
    pc = ProblemClass.from_kappa(10)
    params = nm_params(pc)
    a = min_rate(params, pc, 2, BisectionOptions(backend="ipm", refine_kappa=False))
    b = min_rate(params, pc, 2, BisectionOptions(backend="clarabel", refine_kappa=False))
    assert abs(a.rho - b.rho) <= 2 * 2.0 ** -10


# reference values evaluated with mpmath at 40 digits
@pytest.mark.parametrize("kappa, expected", [(1, (0.0, 0.0)), (4, (0.5, 0.58186095610021160)),
                                             (100, (0.9, 0.92678618904434540))])
def test_theoretical_rates(kappa, expected):
    assert theoretical_rates(kappa) == pytest.approx(expected, abs=1e-14)


def test_theoretical_rates_domain():
    with pytest.raises(ValueError):
        theoretical_rates(0.9)


@given(kappa=st.floats(1, 1e6))
def test_theoretical_rates_order(kappa):
    r1, r2 = theoretical_rates(kappa)
    assert 0 <= r1 < 1 and 0 <= r2 < 1
    assert r1 <= r2 + 1e-12
