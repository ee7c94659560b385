import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aadmm.certify import BisectionOptions
from aadmm.lure import ProblemClass
from aadmm.tuning import (PRESETS, GridSpec, SweepCurve, default_kappas, default_workers, get_preset,
                          grid_search, gs_nu2, gs_nu2_or, gs_params, nm_params, sweep_kappa,
                          tm_params, vanilla_params)

FAST = BisectionOptions(refine_kappa=False)


@pytest.mark.parametrize("m, L, expected", [(1, 1, (1.0, 0.0)), (1, 100, (0.01, 9 / 11)),
                                             (0.25, 4, (0.25, 0.6))])
def test_nm_params(m, L, expected):
    p = nm_params(ProblemClass(m, L))
    assert (p.nu1, p.nu2) == pytest.approx(expected, rel=1e-14, abs=1e-15)


def test_tm_params():
    p = tm_params(ProblemClass.from_kappa(1))
    assert (p.nu1, p.nu2) == (1.0, 0.0)
    p = tm_params(ProblemClass.from_kappa(100))
    assert p.nu1 == pytest.approx(1.9, rel=1e-14)
    assert p.nu2 == pytest.approx(0.81 / 1.1, rel=1e-14)
    assert tm_params(ProblemClass.from_kappa(100), d=0.1).d == 0.1


def test_gs_formulas():
    assert gs_nu2(1) == pytest.approx(0.1817, abs=1e-4)
    assert gs_nu2(1000) == pytest.approx(0.7879, abs=1e-4)
    assert gs_nu2_or(1000) == pytest.approx(0.7122, abs=1e-4)


def test_gs_params():
    pc = ProblemClass.from_kappa(1)
    p = gs_params(pc)
    assert (p.nu1, p.alpha) == (1.0, 1.0) and p.nu2 == pytest.approx(0.1817, abs=1e-4)
    assert gs_params(pc, True).alpha == 1.45
    assert gs_params(ProblemClass.from_kappa(100)).nu1 == pytest.approx(1.9, rel=1e-14)


def test_vanilla_params():
    p = vanilla_params(ProblemClass(0.1, 2.0))
    assert (p.nu1, p.nu2, p.alpha) == (0.5, 0.0, 1.0)
    assert vanilla_params(ProblemClass(0.1, 2.0), True).alpha == 1.45


@given(kappa=st.floats(1, 1e4))
def test_presets_produce_valid_params(kappa):
    pc = ProblemClass.from_kappa(kappa)
    for preset in PRESETS.values():
        p = preset(pc)
        assert p.nu1 > 0 and 0 <= p.nu2 < 1


def test_get_preset():
    assert get_preset("tm", 0.3)(ProblemClass.from_kappa(10)).d == 0.3
    assert get_preset("tm-damped")(ProblemClass.from_kappa(10)).d == 0.1
    with pytest.raises(ValueError):
        get_preset("bogus")


def test_default_workers(monkeypatch):
    monkeypatch.setenv("AADMM_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.delenv("AADMM_WORKERS")
    assert default_workers() == 1


def test_grid_axes_contain_tm():
    pc = ProblemClass.from_kappa(100)
    spec = GridSpec()
    tm = tm_params(pc)
    assert len(spec.nu1_axis(pc)) == 20 and len(spec.nu2_axis(pc)) == 20
    assert tm.nu1 in spec.nu1_axis(pc)
    assert tm.nu2 in spec.nu2_axis(pc)
    assert spec.nu2_axis(pc).min() >= 0
    np.testing.assert_allclose(np.diff(spec.nu2_axis(pc)), 0.05)
    alphas = GridSpec(with_alpha=True).alpha_axis()
    assert len(alphas) == 20 and alphas[0] == pytest.approx(0.2) and alphas[-1] == pytest.approx(4.0)
    assert len(GridSpec(with_alpha=True).points(pc)) == 8000


def test_one_point_grid_returns_center():
    pc = ProblemClass.from_kappa(10)
    res = grid_search(pc, GridSpec(n=1), n_ozf=2, opts=FAST)
    tm = tm_params(pc)
    assert (res.best_params.nu1, res.best_params.nu2) == (tm.nu1, tm.nu2)
    assert len(res.points) == 1 and res.certificate.rho == res.points[0].rho


def test_grid_invariant_under_scaling():
    # certified rates depend on nu1 * L_hat, so both normalizations give one grid
    spec = GridSpec(n=3, nu2_step=0.2)
    a = grid_search(ProblemClass.from_kappa(10), spec, 2, FAST, prune=False)
    b = grid_search(ProblemClass.from_kappa(10, L_hat=10.0), spec, 2, FAST, prune=False)
    np.testing.assert_allclose(a.rho_grid(), b.rho_grid(), atol=2 * FAST.tol, equal_nan=True)
    assert b.best_params.nu1 == pytest.approx(a.best_params.nu1 / 10, rel=1e-12)


def test_pruning_keeps_winner():
    spec = GridSpec(n=3, nu2_step=0.2)
    pc = ProblemClass.from_kappa(10)
    a = grid_search(pc, spec, 2, FAST, prune=False)
    b = grid_search(pc, spec, 2, FAST, prune=True)
    assert a.best_params == b.best_params
    csv_text = b.to_csv()
    assert csv_text.splitlines()[0].endswith(",status")
    assert len(csv_text.splitlines()) == 1 + 9


def test_default_kappas():
    k = default_kappas()
    assert len(k) == 20 and k[0] == 1 and k[-1] == pytest.approx(1000)
    assert np.all(np.diff(k) > 0)


def test_sweep_csv_roundtrip():
    curve = sweep_kappa("nm", [1.0, 10.0], n_ozf=2, opts=FAST)
    text = curve.to_csv()
    lines = text.splitlines()
    assert lines[0] == "kappa,rho,nu1,nu2,alpha,d,n_ozf,kappa_P,feasible"
    assert len(lines) == 3
    back = SweepCurve.from_csv(text, "nm")
    np.testing.assert_array_equal(back.rhos, curve.rhos)
    assert back.to_csv() == text


def test_sweep_records_infeasible():
    curve = sweep_kappa("tm", [1000.0], n_ozf=2, opts=FAST)
    assert not curve.rows[0].feasible
    assert curve.to_csv().strip().endswith(",0")


def test_sweep_validation():
    with pytest.raises(ValueError):
        sweep_kappa("nm", [])
    with pytest.raises(ValueError):
        sweep_kappa("nm", [0.5])
    with pytest.raises(ValueError):
        SweepCurve("x", [sweep_kappa("nm", [2.0], 0, FAST).rows[0],
                         sweep_kappa("nm", [1.5], 0, FAST).rows[0]])


def test_sweep_nm_monotone_in_kappa():
    curve = sweep_kappa("nm", [1.0, 3.0, 10.0], n_ozf=2, opts=FAST)
    assert np.all(np.diff(curve.rhos) > 0)
    assert math.isclose(curve.rhos[0], 0.5, abs_tol=0.01)
