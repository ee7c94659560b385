import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aadmm.lure import AlgorithmParams, ProblemClass, build_plant
from aadmm.ozf import (OZFMultiplier, SignalPair, build_augmented_plant, filter_f_realization,
                       filter_g_realization, filter_signals, iqc_partial_sums, iqc_sample_check,
                       validate_coeffs)
from aadmm.soundness import iqc_batch_margin, random_gradient_batch, random_gradient_signals

rhos = st.floats(0.01, 0.99)


@given(rho=rhos, n=st.integers(0, 8))
def test_sector_coeffs_valid(rho, n):
    h = np.zeros(n + 1)
    h[0] = 1
    assert validate_coeffs(h, rho)


@given(rho=rhos)
def test_boundary_coeffs_valid(rho):
    assert validate_coeffs([1.0, -rho ** 2], rho)


@given(rho=rhos)
def test_negative_sum_invalid(rho):
    assert not validate_coeffs([0.0, -1.0], rho)


def test_positive_tail_invalid():
    assert not validate_coeffs([1.0, 0.1], 0.5)


@settings(max_examples=200)
@given(rho=rhos, h=st.lists(st.floats(-10, 10), min_size=1, max_size=7))
def test_valid_implies_nonnegative_h0(rho, h):
    if validate_coeffs(h, rho):
        assert h[0] >= 0


@pytest.mark.parametrize("rho", [0.0, 1.0, -0.2, 1.5])
def test_validate_rho_domain(rho):
    with pytest.raises(ValueError):
        validate_coeffs([1.0], rho)


def test_multiplier_shapes():
    with pytest.raises(ValueError):
        OZFMultiplier([1.0, 0.0], [1.0], 0.5)
    m = OZFMultiplier.sector(3, 0.7)
    assert m.n_ozf == 3 and m.is_valid()


def test_g_filter_static_identity():
    filt = filter_g_realization(0)
    np.testing.assert_array_equal(filt.D([1.0]), np.eye(2))
    assert filt.A.shape == (0, 0)


def test_g_filter_impulse():
    filt = filter_g_realization(2)
    u = np.zeros((6, 2))
    u[0, 0] = 1
    out = filt.simulate([1.0, -0.3, -0.1], u)
    np.testing.assert_allclose(out[:, 0], [1, -0.3, -0.1, 0, 0, 0])
    assert not out[:, 1].any()


@pytest.mark.parametrize("n", [0, 1, 4])
def test_g_filter_passthrough(n):
    u = np.zeros((5, 2))
    u[0, 1] = 1
    h = -np.ones(n + 1)
    out = filter_g_realization(n).simulate(h, u)
    np.testing.assert_array_equal(out[:, 1], [1, 0, 0, 0, 0])


def test_f_filter_static():
    filt = filter_f_realization(0, 1.0, 2.0)
    np.testing.assert_allclose(filt.D([1.0]) @ [1.0, 1.0], [1.0, 0.0])
    filt = filter_f_realization(0, 1.0, 1.0)
    np.testing.assert_allclose(filt.D([1.0]) @ [1.0, 1.0], [0.0, 0.0])


def test_f_filter_domain():
    with pytest.raises(ValueError):
        filter_f_realization(1, 2.0, 1.0)
    with pytest.raises(ValueError):
        filter_f_realization(1, 0.0, 1.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(0, 5))
def test_state_space_matches_convolution(seed, n):
    # the shift-register realization must equal direct FIR convolution
    rng = np.random.default_rng(seed)
    filt = filter_f_realization(n, 0.3, 1.0)
    h = rng.standard_normal(n + 1)
    u = rng.standard_normal((20, 2))
    z = u @ filt.pre.T
    expect0 = np.convolve(h, z[:, 0])[:20]
    x = np.zeros(n)
    out = []
    for k in range(20):
        out.append(filt.C(h) @ x + filt.D(h) @ u[k])
        x = filt.A @ x + filt.B @ u[k]
    out = np.array(out)
    np.testing.assert_allclose(out[:, 0], expect0, atol=1e-12)
    np.testing.assert_allclose(filt.simulate(h, u), out, atol=1e-12)


@pytest.mark.parametrize("n, dim", [(0, 4), (1, 6), (6, 16)])
def test_augmented_dims(n, dim):
    aug = build_augmented_plant(build_plant(AlgorithmParams(1.0, 0.2)), ProblemClass.from_kappa(10), n)
    assert aug.state_dim == dim
    assert aug.B.shape == (dim, 2)
    h = np.zeros(n + 1)
    assert aug.C(h, h).shape == (4, dim) and aug.D(h, h).shape == (4, 2)


def test_augmented_static_stacking():
    pc = ProblemClass(0.2, 1.0)
    plant = build_plant(AlgorithmParams(0.8, 0.3, 1.2))
    aug = build_augmented_plant(plant, pc, 0)
    C, D = aug.C([1.0], [1.0]), aug.D([1.0], [1.0])
    Mf = np.array([[1.0, -1.0], [-0.2, 1.0]])
    # rows: Mf (v1, w1), then (v2, w2)
    np.testing.assert_allclose(C[:2], Mf @ np.vstack([plant.C_hat[0], np.zeros(4)]))
    np.testing.assert_allclose(D[:2], Mf @ np.vstack([plant.D_hat[0], [1, 0]]))
    np.testing.assert_allclose(C[2:], np.vstack([plant.C_hat[1], np.zeros(4)]))
    np.testing.assert_allclose(D[2:], np.vstack([plant.D_hat[1], [0, 1]]))


def test_augmented_affine_in_coeffs(rng):
    aug = build_augmented_plant(build_plant(AlgorithmParams(1.0, 0.5)), ProblemClass.from_kappa(5), 3)
    a, b = rng.standard_normal((2, 2, 4))
    t = 0.37
    mix = lambda u, v: t * u + (1 - t) * v
    np.testing.assert_allclose(aug.C(mix(a[0], b[0]), mix(a[1], b[1])),
                               mix(aug.C(*a), aug.C(*b)), atol=1e-12)
    np.testing.assert_allclose(aug.D(mix(a[0], b[0]), mix(a[1], b[1])),
                               mix(aug.D(*a), aug.D(*b)), atol=1e-12)


def test_augmented_simulation_matches_filters(rng):
    # feeding the plant output through the filters equals simulating the augmented plant
    pc = ProblemClass.from_kappa(8)
    plant = build_plant(AlgorithmParams(1.2, 0.4, 1.1))
    aug = build_augmented_plant(plant, pc, 3)
    h_f, h_g = rng.standard_normal((2, 4))
    w = rng.standard_normal((30, 2))
    xi = np.zeros(4)
    v = []
    for k in range(30):
        v.append(plant.C_hat @ xi + plant.D_hat @ w[k])
        xi = plant.A_hat @ xi + plant.B_hat @ w[k]
    psi1, psi2 = filter_signals(OZFMultiplier(h_f, h_g, 0.5), pc, SignalPair(np.array(v), w))
    out = aug.simulate(h_f, h_g, w)
    np.testing.assert_allclose(out[:, :2], psi1, atol=1e-10)
    np.testing.assert_allclose(out[:, 2:], psi2, atol=1e-10)


def test_signal_shapes():
    with pytest.raises(ValueError):
        SignalPair(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        SignalPair(np.zeros((3, 3)), np.zeros((3, 3)))


def test_zero_signals_pass():
    pc = ProblemClass.from_kappa(10)
    z = np.zeros((10, 2))
    S, _ = iqc_partial_sums(np.zeros((10, 2)), 0.5)
    assert not S.any()
    assert iqc_sample_check(OZFMultiplier.sector(2, 0.5), pc, SignalPair(z, z))


def test_partial_sum_oracle(rng):
    # direct summation oracle
    psi = rng.standard_normal((15, 2))
    rho = 0.8
    S, _ = iqc_partial_sums(psi, rho)
    for T in range(15):
        direct = sum(rho ** (-2 * k) * 2 * psi[k, 0] * psi[k, 1] for k in range(T + 1))
        assert S[T] == pytest.approx(rho ** (2 * T) * direct, rel=1e-10, abs=1e-12)


def test_sector_multiplier_on_random_signals(rng):
    pc = ProblemClass.from_kappa(20)
    mult = OZFMultiplier.sector(0, 0.9)
    for _ in range(200):
        assert iqc_sample_check(mult, pc, random_gradient_signals(pc, rng))
    batch = random_gradient_batch(pc, rng, 1000)
    assert iqc_batch_margin(mult, pc, batch).min() >= -1e-9


def test_sector_violation_negative_control(rng):
    # slope 3 L > L violates the smooth sector
    pc = ProblemClass.from_kappa(10)
    v = rng.standard_normal((20, 2))
    w = np.stack([3.0 * v[:, 0], v[:, 1]], axis=1)
    assert not iqc_sample_check(OZFMultiplier.sector(0, 0.9), pc, SignalPair(v, w))


def test_batch_matches_single_checks(rng):
    pc = ProblemClass.from_kappa(30)
    mult = OZFMultiplier([1.0, -0.2], [1.0, -0.5], 0.8)
    batch = random_gradient_batch(pc, rng, 30, T=40)
    margins = iqc_batch_margin(mult, pc, batch)
    for j in range(30):
        single = SignalPair(batch.v_tilde[:, :, j], batch.w_tilde[:, :, j])
        assert iqc_sample_check(mult, pc, single, tol=1e-9) == (margins[j] >= -1e-9)
