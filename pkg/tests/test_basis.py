import numpy as np
import pytest

from ldsf import basis, linalg
from ldsf.basis import BasisSpec, BasisTerm

from conftest import gauss_gramian_oracle


def test_build_basis_trivial_constant():
    spec = basis.build_basis([(0, 0.0)], r=1.0)
    assert spec.d == 1
    assert spec.companion_matrix() == pytest.approx(np.zeros((1, 1)))
    assert spec.f0() == pytest.approx(np.array([1.0]))


def test_build_basis_four_exponentials():
    spec = basis.build_basis([(0, 1.0), (0, 2.0), (0, 3.0), (0, -0.1)], r=5.0)
    assert spec.d == 4
    assert np.allclose(spec.companion_matrix(), np.diag([-0.1, 1.0, 2.0, 3.0]))
    assert np.allclose(spec.f0(), np.ones(4))


def test_build_basis_polynomial_chain_closure():
    # requesting only tau^3 pulls in all lower degrees with subdiagonal 1,2,3
    spec = basis.build_basis([(3, 0.0), (0, 1.0), (0, 2.0), (0, 3.0), (0, -0.1)],
                             r=5.0)
    assert spec.d == 8
    m = spec.companion_matrix()
    poly = [i for i, t in enumerate(spec.terms) if t.rate == 0.0]
    assert len(poly) == 4
    sub = m[np.ix_(poly, poly)]
    assert np.allclose(sub, np.diag([1.0, 2.0, 3.0], -1))


def test_build_basis_idempotent():
    terms = [(2, -1.0), (0, 0.5)]
    spec1 = basis.build_basis(terms, r=2.0)
    spec2 = basis.build_basis([(t.poly_degree, t.rate) for t in spec1.terms], r=2.0)
    assert spec1.terms == spec2.terms


def test_build_basis_rejects_duplicates():
    with pytest.raises(ValueError, match="duplicate"):
        basis.build_basis([(0, 1.0), (0, 1.0)], r=1.0)


def test_derivative_identity_finite_differences():
    spec = basis.build_basis([(2, 0.3), (0, -0.5)], r=3.0)
    m = spec.companion_matrix()
    rng = np.random.default_rng(0)
    taus = rng.uniform(-3.0, 0.0, 50)
    eps = 1e-6
    for tau in taus:
        fd = (spec.eval_f(tau + eps) - spec.eval_f(tau - eps)) / (2 * eps)
        exact = m @ spec.eval_f(tau)
        assert np.abs(fd - exact).max() < 1e-6 * (1 + np.abs(exact).max())


def test_realize_trivial_constant():
    spec = basis.build_basis([(0, 0.0)], r=5.0)
    real = basis.realize(spec, nu=1)
    assert real.gram[0, 0] == pytest.approx(5.0, rel=1e-13)
    assert real.gram_inv_sqrt[0, 0] == pytest.approx(1.0 / np.sqrt(5.0), rel=1e-13)


def test_realize_gramian_vs_quadrature(example_realization):
    real = example_realization
    oracle = gauss_gramian_oracle(real.M, real.f0_vec, real.r)
    assert np.abs(real.gram - oracle).max() < 1e-9 * (1 + np.abs(oracle).max())


def test_realize_inv_sqrt_roundtrip(example_realization):
    real = example_realization
    eye = real.gram_inv_sqrt @ real.gram @ real.gram_inv_sqrt
    assert np.abs(eye - np.eye(real.d)).max() < 1e-9


def test_realize_rejects_dependent_terms():
    # two nearly equal rates over a short window are numerically dependent
    spec = basis.build_basis([(0, 1.0), (0, 1.0 + 1e-9)], r=1.0)
    with pytest.raises(ValueError, match="nearly dependent"):
        basis.realize(spec, nu=1, cond_cap=1e12)


def test_eval_f_values(example_realization):
    real = example_realization
    assert np.allclose(real.eval_f(0.0), real.f0_vec)
    # canonical order: rates -0.1, 0, 1, 2, 3
    expect = np.array([np.exp(0.5), 1.0, np.exp(-5.0), np.exp(-10.0), np.exp(-15.0)])
    assert np.allclose(real.eval_f(-5.0), expect, rtol=1e-12)


def test_eval_F_shape_and_warning(example_realization):
    real = example_realization
    f_at_0 = real.eval_F(0.0)
    assert f_at_0.shape == (real.d * real.nu, real.nu)
    with pytest.warns(UserWarning, match="outside"):
        real.eval_f(1.0)


def test_normalization_integral_is_identity(example_realization):
    # int_{-r}^0 F F' dtau = I via an independent quadrature
    real = example_realization
    nodes, wts = np.polynomial.legendre.leggauss(120)
    taus = -real.r / 2.0 * (1.0 - nodes)
    wts = wts * real.r / 2.0
    acc = np.zeros((real.d * real.nu, real.d * real.nu))
    for tau, w in zip(taus, wts):
        f = real.eval_F(tau)
        acc += w * (f @ f.T)
    assert np.abs(acc - np.eye(real.d * real.nu)).max() < 1e-8


def test_fit_kernel_exact(example_problem, example_realization, example_c3):
    assert example_c3.residual < 1e-10
    kern = example_problem.plant.dd_output_kernel
    rng = np.random.default_rng(1)
    for tau in rng.uniform(-5.0, 0.0, 200):
        recon = example_c3.reconstruct(example_realization, tau)
        assert np.abs(recon - kern(tau)).max() < 1e-8


def test_fit_kernel_raw_layout(example_realization, example_c3):
    # unpacking G^{1/2} recovers the declared coefficients slot by slot
    real = example_realization
    raw = example_c3.coeffs @ np.kron(real.gram_inv_sqrt, np.eye(real.nu))
    by_rate = {t.rate: i for i, t in enumerate(real.spec.terms)}
    blk = lambda i: raw[:, 3 * i : 3 * (i + 1)]
    assert np.abs(blk(by_rate[0.0]) - np.array([[0.2, 0.1, 0.0],
                                                [-0.2, 0.3, 0.0]])).max() < 1e-9
    assert np.abs(blk(by_rate[1.0]) - np.array([[0.1, 0.0, 0.0],
                                                [0.0, 0.0, 0.0]])).max() < 1e-9
    assert np.abs(blk(by_rate[3.0]) - np.array([[0.0, 0.0, 0.12],
                                                [0.0, 0.0, 0.11]])).max() < 1e-9


def test_fit_kernel_zero():
    spec = basis.build_basis([(0, 0.0), (0, 1.0)], r=2.0)
    real = basis.realize(spec, nu=2)
    dec = basis.fit_kernel(lambda tau: np.zeros((1, 2)), real)
    assert dec.residual == 0.0
    assert np.abs(dec.coeffs).max() == 0.0


def test_fit_kernel_unrepresentable_rate():
    spec = basis.build_basis([(0, 1.0), (0, 2.0), (0, 3.0), (0, -0.1)], r=5.0)
    real = basis.realize(spec, nu=1)
    with pytest.raises(ValueError, match="not representable"):
        basis.fit_kernel(lambda tau: np.array([[np.exp(4.0 * tau)]]), real,
                         tol=1e-8)


def test_predictor_kernel_published_coefficient(example_problem, example_realization):
    # (KA - XK) e^{-A tau} B = -2.2 e^{-0.1 tau} for the bundled example
    pl = example_problem.plant
    dec = basis.predictor_kernel(pl.A, pl.B, np.array([[0.0, -2.0]]),
                                 np.array([[-1.0]]), example_realization)
    assert dec.residual < 1e-9
    raw = dec.coeffs @ np.kron(example_realization.gram_inv_sqrt, np.eye(3))
    idx = [i for i, t in enumerate(example_realization.spec.terms)
           if t.rate == -0.1][0]
    blk = raw[:, 3 * idx : 3 * (idx + 1)]
    assert blk[0, :2] == pytest.approx([0.0, 0.0], abs=1e-9)
    assert blk[0, 2] == pytest.approx(-2.2, rel=1e-9)
    # all other slots vanish
    mask = np.ones(15, dtype=bool)
    mask[3 * idx : 3 * (idx + 1)] = False
    assert np.abs(raw[:, mask]).max() < 1e-9


def test_predictor_kernel_zero_when_commuting():
    # K = 0 makes KA - XK vanish, so the kernel is identically zero
    a = -np.eye(2)
    b = np.array([[1.0], [0.0]])
    spec = basis.build_basis([(0, 1.0)], r=1.0)
    real = basis.realize(spec, nu=3)
    dec = basis.predictor_kernel(a, b, np.zeros((1, 2)), -np.eye(1), real)
    assert np.abs(dec.coeffs).max() < 1e-12


def test_predictor_kernel_random_stable_plant():
    rng = np.random.default_rng(7)
    for _ in range(5):
        lam = -rng.uniform(0.2, 2.0, 2)
        v = rng.standard_normal((2, 2)) + np.eye(2)
        a = v @ np.diag(lam) @ np.linalg.inv(v)
        b = rng.standard_normal((2, 1))
        k = rng.standard_normal((1, 2)) * 0.1
        spec = basis.build_basis([(0, float(-l)) for l in lam], r=1.5)
        real = basis.realize(spec, nu=3)
        x = np.array([[-1.0]])
        dec = basis.predictor_kernel(a, b, k, x, real, tol=1e-8)
        left = k @ a - x @ k
        for tau in np.linspace(-1.5, 0.0, 30):
            target = np.hstack([np.zeros((1, 2)),
                                left @ linalg.expm(-a * tau) @ b])
            recon = dec.coeffs @ real.eval_F(tau)
            assert np.abs(recon - target).max() < 1e-8


def test_weighted_integral_inequality_random():
    rng = np.random.default_rng(11)
    for _ in range(50):
        d = int(rng.integers(1, 4))
        rates = rng.uniform(-1.5, 1.5, d)
        spec = basis.build_basis([(0, float(v)) for v in rates], r=2.0)
        nu = int(rng.integers(1, 4))
        a = rng.standard_normal((nu, nu))
        y_coef = rng.standard_normal((nu, 3))

        def y(t):
            return y_coef @ np.array([1.0, t, np.sin(2 * t)])

        ymat = a @ a.T + 0.1 * np.eye(nu)
        gap = basis.weighted_integral_inequality_gap(y, spec, ymat, r=2.0)
        scale = 1.0 + abs(gap)
        assert gap >= -1e-9 * scale


def test_weighted_integral_inequality_tight_in_span():
    # y spanned by the basis makes the inequality an equality
    spec = basis.build_basis([(0, 0.0), (0, 1.0)], r=1.0)

    def y(t):
        return np.array([2.0 - np.exp(t)])

    gap = basis.weighted_integral_inequality_gap(y, spec, np.array([[3.0]]), r=1.0)
    assert abs(gap) < 1e-10
