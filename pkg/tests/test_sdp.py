import numpy as np
import pytest

from ldsf import sdp


def eig_problem(a):
    """min t s.t. t I - A >= 0; optimum is the largest eigenvalue of A."""
    s = a.shape[0]
    return sdp.SdpProblem(c=np.array([1.0]),
                          blocks=[sdp.SdpBlock(F0=-a, coeffs=np.eye(s)[None])])


def test_two_by_two_toy():
    # min x s.t. [[x, 1], [1, x]] >= 0  ->  x* = 1
    prob = sdp.SdpProblem(
        c=np.array([1.0]),
        blocks=[sdp.SdpBlock(F0=np.array([[0.0, 1.0], [1.0, 0.0]]),
                             coeffs=np.eye(2)[None])])
    sol = sdp.solve(prob)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-7)


def test_eigenvalue_oracle_100_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        s = int(rng.integers(2, 30))
        a = rng.standard_normal((s, s))
        a = 0.5 * (a + a.T)
        sol = sdp.solve(eig_problem(a))
        truth = float(np.linalg.eigvalsh(a).max())
        assert sol.status == "optimal"
        assert abs(sol.objective - truth) <= 1e-5 * (1.0 + abs(truth))


def test_max_of_scalars_oracle():
    rng = np.random.default_rng(1)
    for _ in range(30):
        n = int(rng.integers(2, 25))
        a = rng.standard_normal(n)
        blocks = [sdp.SdpBlock(F0=np.array([[-v]]), coeffs=np.array([[[1.0]]]))
                  for v in a]
        sol = sdp.solve(sdp.SdpProblem(c=np.array([1.0]), blocks=blocks))
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(a.max(), abs=1e-6)


def test_infeasible_constant_block():
    prob = sdp.SdpProblem(c=np.array([1.0]),
                          blocks=[sdp.SdpBlock(F0=np.array([[-1.0]]),
                                               coeffs=np.zeros((1, 1, 1)))])
    sol = sdp.solve(prob)
    assert sol.status == "infeasible"


def test_infeasible_conflicting_bounds():
    # x >= 1 and x <= 0
    b1 = sdp.SdpBlock(F0=np.array([[-1.0]]), coeffs=np.array([[[1.0]]]))
    b2 = sdp.SdpBlock(F0=np.array([[0.0]]), coeffs=np.array([[[-1.0]]]))
    sol = sdp.solve(sdp.SdpProblem(c=np.array([0.0]), blocks=[b1, b2]))
    assert sol.status == "infeasible"
    assert "certificate" in sol.message


def test_infeasible_psd_coupling():
    # [[x, 1], [1, -x]] >= 0 is impossible
    co = np.array([[[1.0, 0.0], [0.0, -1.0]]])
    blk = sdp.SdpBlock(F0=np.array([[0.0, 1.0], [1.0, 0.0]]), coeffs=co)
    sol = sdp.solve(sdp.SdpProblem(c=np.array([0.0]), blocks=[blk]))
    assert sol.status == "infeasible"


def test_deterministic_repeat_logs():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((12, 12))
    a = 0.5 * (a + a.T)
    sol1 = sdp.solve(eig_problem(a))
    sol2 = sdp.solve(eig_problem(a))
    assert sol1.log == sol2.log
    assert sol1.log  # non-empty
    assert repr(sol1.x.tolist()) == repr(sol2.x.tolist())


def test_mu_decreases_after_initial_phase():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((15, 15))
    a = 0.5 * (a + a.T)
    sol = sdp.solve(eig_problem(a))
    mus = [float(line.split("mu=")[1].split()[0]) for line in sol.log]
    assert all(m2 <= m1 * 1.0 + 1e-12 for m1, m2 in zip(mus[2:], mus[3:]))


def test_solution_invariants_on_optimal():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((10, 10))
    a = 0.5 * (a + a.T)
    prob = eig_problem(a)
    sol = sdp.solve(prob)
    assert sol.status == "optimal"
    for blk, eig in zip(prob.blocks, sol.block_min_eigs):
        assert eig >= -1e-7 * (1.0 + np.linalg.norm(blk.F0))
    assert sol.gap <= 1e-6 * (1.0 + abs(sol.objective))


def test_verify_roundtrip_and_perturbation():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((8, 8))
    a = 0.5 * (a + a.T)
    prob = eig_problem(a)
    sol = sdp.solve(prob)
    rep = sdp.verify(prob, sol.x)
    assert rep["feasible"]
    assert rep["objective"] == pytest.approx(sol.objective)
    bad = sol.x - 0.5  # strictly inside -> now violated
    rep_bad = sdp.verify(prob, bad)
    assert not rep_bad["feasible"]
    assert min(rep_bad["block_min_eigs"]) < 0


def test_verify_rejects_wrong_length():
    prob = eig_problem(np.eye(3))
    with pytest.raises(ValueError):
        sdp.verify(prob, np.zeros(2))


def test_validation_rejects_asymmetric_blocks():
    co = np.zeros((1, 2, 2))
    co[0, 0, 1] = 1.0  # not symmetric
    prob = sdp.SdpProblem(c=np.array([1.0]),
                          blocks=[sdp.SdpBlock(F0=np.eye(2), coeffs=co)])
    with pytest.raises(ValueError, match="symmetric"):
        sdp.solve(prob)


def test_unbounded_reports_failure():
    # min x with x only bounded above: x <= 1
    blk = sdp.SdpBlock(F0=np.array([[1.0]]), coeffs=np.array([[[-1.0]]]))
    sol = sdp.solve(sdp.SdpProblem(c=np.array([1.0]), blocks=[blk]))
    assert sol.status == "numerical_failure"
    assert "unbounded" in sol.message


def test_dump_sdpa_format(tmp_path):
    prob = eig_problem(np.array([[2.0, 0.5], [0.5, 1.0]]))
    path = tmp_path / "prob.dat-s"
    sdp.dump_sdpa(prob, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "1"       # one variable
    assert lines[1] == "1"       # one block
    assert lines[2] == "2"       # block size
    # constant matrix is written negated (SDPA convention)
    entries = [ln.split() for ln in lines[4:]]
    f0 = [e for e in entries if e[0] == "0"]
    assert any(float(e[4]) == 2.0 for e in f0)
