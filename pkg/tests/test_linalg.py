import numpy as np
import pytest

from ldsf import linalg

from conftest import gauss_gramian_oracle


def test_expm_zero_is_identity():
    assert np.allclose(linalg.expm(np.zeros((2, 2))), np.eye(2), atol=1e-15)


def test_expm_diagonal():
    out = linalg.expm(np.diag([-1.0, 0.1]) * 5.0)
    assert np.allclose(out, np.diag([np.exp(-5.0), np.exp(0.5)]), rtol=1e-12)


def test_expm_matches_published_warm_start_entry():
    # row [0, -2.2] of the delay-compensating gain, propagated through e^{5A}
    a = np.array([[-1.0, 1.0], [0.0, 0.1]])
    row = np.array([0.0, -2.2]) @ linalg.expm(5.0 * a)
    assert abs(row[0]) < 1e-12
    assert row[1] == pytest.approx(-3.6272, abs=5e-5)


def test_expm_inverse_property():
    rng = np.random.default_rng(1)
    for _ in range(10):
        a = rng.standard_normal((5, 5))
        a *= 5.0 / max(np.linalg.norm(a), 1.0)
        prod = linalg.expm(a) @ linalg.expm(-a)
        assert np.abs(prod - np.eye(5)).max() < 1e-10


def test_expm_rejects_nonsquare_and_nonfinite():
    with pytest.raises(ValueError):
        linalg.expm(np.ones((2, 3)))
    with pytest.raises(ValueError):
        linalg.expm(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_sqrtm_spd_identity_and_diag():
    assert np.allclose(linalg.sqrtm_spd(np.eye(3)), np.eye(3))
    assert np.allclose(linalg.sqrtm_spd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def test_sqrtm_spd_hilbert2():
    h = np.array([[1.0, 0.5], [0.5, 1.0 / 3.0]])
    w = linalg.sqrtm_spd(h)
    assert np.abs(w - w.T).max() == 0.0
    assert np.abs(w @ w - h).max() < 1e-12


def test_sqrtm_spd_random_roundtrip():
    rng = np.random.default_rng(2)
    for _ in range(10):
        a = rng.standard_normal((6, 6))
        s = a @ a.T + 0.5 * np.eye(6)
        w = linalg.sqrtm_spd(s)
        assert np.linalg.eigvalsh(w).min() > 0
        assert np.linalg.norm(w @ w - s) < 1e-10 * np.linalg.norm(s)


def test_sqrtm_spd_rejects_indefinite():
    with pytest.raises(ValueError, match="min eigenvalue"):
        linalg.sqrtm_spd(np.diag([1.0, -0.5]))


def test_kron_blocks():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = linalg.kron(np.eye(2), m)
    assert np.allclose(out[:2, :2], m)
    assert np.allclose(out[2:, 2:], m)
    assert np.abs(out[:2, 2:]).max() == 0.0
    row = linalg.kron(np.array([[1.0, 2.0]]), np.eye(2))
    assert np.allclose(row, np.hstack([np.eye(2), 2 * np.eye(2)]))


def test_kron_rank_one_vectors():
    a = np.array([[1.0], [2.0], [-1.0]])
    b = np.array([[3.0], [5.0]])
    assert np.linalg.matrix_rank(linalg.kron(a, b)) == 1


def test_kron_mixed_product():
    rng = np.random.default_rng(3)
    for _ in range(5):
        a = rng.standard_normal((2, 3))
        b = rng.standard_normal((3, 2))
        c = rng.standard_normal((3, 4))
        d = rng.standard_normal((2, 5))
        lhs = linalg.kron(a, b) @ linalg.kron(c, d)
        rhs = linalg.kron(a @ c, b @ d)
        assert np.abs(lhs - rhs).max() < 1e-12 * (1 + np.abs(rhs).max())


def test_van_loan_gramian_hilbert():
    # f(t) = [1, t] on [0, 1] realized as the flow of the shift companion
    # matrix over [-1, 0] with reversed sign pattern
    m = np.array([[0.0, 0.0], [-1.0, 0.0]])
    out = linalg.van_loan_gramian(m, np.array([1.0, 0.0]), 1.0)
    # e^{Mt} f0 = [1, -t]; over [-1,0] this traces [1, s] for s in [0,1]
    assert np.abs(out - np.array([[1.0, 0.5], [0.5, 1.0 / 3.0]])).max() < 1e-14


def test_van_loan_gramian_scalar():
    out = linalg.van_loan_gramian(np.zeros((1, 1)), np.array([1.0]), 5.0)
    assert out[0, 0] == pytest.approx(5.0, rel=1e-14)


def test_van_loan_gramian_vs_quadrature():
    rng = np.random.default_rng(4)
    for _ in range(8):
        d = rng.integers(2, 5)
        m = rng.standard_normal((d, d))
        m *= 3.0 / max(np.linalg.norm(m), 1.0)
        f0 = rng.standard_normal(d)
        r = float(rng.uniform(0.3, 5.0))
        ours = linalg.van_loan_gramian(m, f0, r)
        oracle = gauss_gramian_oracle(m, f0, r)
        assert np.abs(ours - oracle).max() < 1e-9 * (1 + np.abs(oracle).max())


def test_eig_diag_and_rotation():
    assert sorted(linalg.eig_general(np.diag([1.0, 2.0, 3.0])).real) == [1, 2, 3]
    eigs = linalg.eig_general(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    assert sorted(np.round(eigs.imag, 12)) == [-1.0, 1.0]


def test_eig_closed_loop_triangular():
    a = np.array([[-1.0, 1.0], [0.0, 0.1]])
    b = np.array([[0.0], [1.0]])
    k = np.array([[0.0, -2.0]])
    eigs = sorted(linalg.eig_general(a + b @ k).real)
    assert eigs == pytest.approx([-1.9, -1.0])


def test_eig_residuals_random():
    rng = np.random.default_rng(5)
    for _ in range(5):
        a = rng.standard_normal((20, 20))
        eigs, vecs = np.linalg.eig(a)
        ours = np.sort_complex(linalg.eig_general(a))
        theirs = np.sort_complex(eigs)
        assert np.abs(ours - theirs).max() < 1e-8 * np.linalg.norm(a)
        for lam, v in zip(eigs[:5], vecs.T[:5]):
            assert np.linalg.norm(a @ v - lam * v) < 1e-8 * np.linalg.norm(a)


def test_is_hurwitz():
    assert linalg.is_hurwitz(-np.eye(3))
    assert not linalg.is_hurwitz(np.array([[-1.0, 1.0], [0.0, 0.1]]))
    assert linalg.is_hurwitz(np.array([[-1.0, 1.0], [0.0, -1.9]]))
    assert not linalg.is_hurwitz(-0.5 * np.eye(2), margin=1.0)
    with pytest.raises(ValueError):
        linalg.is_hurwitz(-np.eye(2), margin=-1.0)


def test_symmetrize_gate():
    m = np.eye(3)
    m[0, 1] = 1e-14
    out = linalg.symmetrize(m)
    assert np.abs(out - out.T).max() == 0.0
    bad = np.eye(3)
    bad[0, 1] = 1e-6
    with pytest.raises(ValueError, match="not symmetric"):
        linalg.symmetrize(bad)
