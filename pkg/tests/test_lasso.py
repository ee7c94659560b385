import numpy as np
import pytest
from hypothesis import given, strategies as st

from aadmm.lasso import (SCHEMES, DivergenceError, LassoInstance, aadmm_lasso_direct,
                         aadmm_lasso_run, error_trace, fista_run, kkt_residual, lasso_generate,
                         lasso_scheme_params, reference_solution, run_scheme, soft_threshold)
from aadmm.lure import AlgorithmParams


def scalar_instance(tau=0.01):
    return LassoInstance(np.array([[1.0]]), np.array([1.0]), tau, np.array([1.0]))


@pytest.fixture(scope="module")
def inst():
    return lasso_generate(7)


@pytest.fixture(scope="module")
def ref(inst):
    return reference_solution(inst)


def test_soft_threshold_examples():
    assert soft_threshold([0.3], 0.5)[0] == 0
    np.testing.assert_allclose(soft_threshold([1.2, -1.2], 0.5), [0.7, -0.7])
    with pytest.raises(ValueError):
        soft_threshold([1.0], -1)


@given(y=st.floats(-1e6, 1e6), t=st.floats(0, 1e3))
def test_soft_threshold_is_prox(y, t):
    # optimality: y - x is in t * subdifferential of |x|
    x = soft_threshold([y], t)[0]
    g = y - x
    if x != 0:
        assert g == pytest.approx(t * np.sign(x), abs=1e-9 * (1 + abs(y)))
    else:
        assert abs(g) <= t + 1e-12


def test_generate_shapes_and_norms(inst):
    assert inst.F.shape == (250, 100)
    np.testing.assert_allclose(np.linalg.norm(inst.F, axis=0), 1, atol=1e-12)
    assert np.count_nonzero(inst.w0) == 50
    assert 0 < inst.m <= inst.L


def test_generate_deterministic(inst):
    again = lasso_generate(7)
    assert np.array_equal(inst.F, again.F) and np.array_equal(inst.b, again.b)
    assert not np.array_equal(inst.F, lasso_generate(8).F)


def test_zero_signal():
    z = lasso_generate(1, nnz=0, noise_var=0)
    assert not z.b.any()
    assert not reference_solution(z).x_star.any()


def test_generate_domain():
    with pytest.raises(ValueError):
        lasso_generate(0, n=10, p=20)


def test_scalar_reference():
    r = reference_solution(scalar_instance())
    assert r.x_star[0] == pytest.approx(0.99, abs=1e-12)
    assert r.residual <= 1e-12


def test_reference_kkt(inst, ref):
    assert kkt_residual(inst, ref.x_star) <= 1e-11
    assert ref.objective == pytest.approx(inst.objective(ref.x_star))


def test_scalar_vanilla_converges():
    s = scalar_instance()
    tr = aadmm_lasso_run(s, AlgorithmParams(1.0), 200, np.array([0.99]), keep_iterates=True)
    assert tr.iterates[-1, 0] == pytest.approx(0.99, abs=1e-10)
    assert tr.deltas[0] == 1.0


def test_scalar_fista_converges():
    tr = fista_run(scalar_instance(), 200, np.array([0.99]), keep_iterates=True)
    assert tr.iterates[-1, 0] == pytest.approx(0.99, abs=1e-10)


def test_fista_from_solution(inst, ref):
    tr = fista_run(inst, 20, ref, x0=ref.x_star)
    assert tr.degenerate and not tr.deltas.any()


def test_fista_objective_eventually_decreases(inst, ref):
    tr = fista_run(inst, 300, ref, stop=0)
    obj = tr.objectives
    assert obj[-1] <= obj[0]
    assert obj[-1] - ref.objective <= 1e-8 * (1 + abs(ref.objective))
    assert np.all(np.diff(obj[200:]) <= 1e-12)


def test_error_trace_examples():
    x0, xs = np.array([2.0, 0.0]), np.array([0.0, 0.0])
    tr = error_trace([x0, 0.5 * (x0 + xs), xs], xs)
    np.testing.assert_allclose(tr.deltas, [1.0, 0.5, 0.0])
    deg = error_trace([xs, xs], xs)
    assert deg.degenerate and not deg.deltas.any()
    assert tr.iterations_to(0.5) == 1 and error_trace([x0], xs).iterations_to() is None


def test_trace_csv():
    tr = error_trace([[2.0], [1.0]], np.array([0.0]))
    assert tr.to_csv() == "k,delta\n0,1.0\n1,0.5\n"


@pytest.mark.parametrize("params", [AlgorithmParams(0.5), AlgorithmParams(0.8, 0.4, 1.3),
                                    AlgorithmParams(1.2, 0.6, 1.0, 0.1)])
def test_matches_generic_engine(inst, ref, params):
    tr = aadmm_lasso_run(inst, params, 60, ref, stop=0, keep_iterates=True)
    eng = aadmm_lasso_direct(inst, params, 60)
    x_eng = eng.outputs[:, :inst.p]
    np.testing.assert_allclose(tr.iterates[1:], x_eng, atol=1e-12)


def test_tau_zero_is_least_squares():
    s = lasso_generate(3, n=40, p=10, nnz=5, tau=0.0)
    r = reference_solution(s)
    np.testing.assert_allclose(r.x_star, np.linalg.lstsq(s.F, s.b, rcond=None)[0], atol=1e-9)
    tr = run_scheme(s, "a-admm-gs", 500, r)
    assert tr.iterations_to(1e-6) is not None


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_detected():
    s = lasso_generate(3, n=40, p=10, nnz=5)
    with pytest.raises(DivergenceError):
        aadmm_lasso_run(s, AlgorithmParams(1e3, 0.99, 4.0), 2000, np.zeros(10))


def test_scheme_table(inst):
    pc = inst.problem_class
    assert lasso_scheme_params("fista", pc) is None
    assert lasso_scheme_params("a-admm-tm-damped", pc).d == 0.1
    assert lasso_scheme_params("or-a-admm-gs", pc).alpha == 1.45
    with pytest.raises(ValueError):
        lasso_scheme_params("newton", pc)
    assert len(SCHEMES) == 7


def test_gs_beats_vanilla(inst, ref):
    K = 150
    gs = run_scheme(inst, "or-a-admm-gs", K, ref)
    van = run_scheme(inst, "admm", K, ref)
    assert gs.deltas[-1] < van.deltas[-1]
