import numpy as np
import pytest

from ldsf import linalg, plant


def test_validate_example_plant(example_problem):
    report = plant.validate_plant(example_problem.plant)
    assert (report["n"], report["p"], report["q"], report["m"]) == (2, 1, 1, 2)
    assert report["nu"] == 3
    assert report["r"] == 5.0
    assert not report["A_hurwitz"]
    assert report["A_abscissa"] == pytest.approx(0.1)


def test_make_plant_rejects_bad_dimensions():
    a = np.eye(2)
    with pytest.raises(ValueError, match="B must have"):
        plant.make_plant(a, np.zeros((3, 1)), np.zeros((2, 1)), np.zeros((1, 1)),
                         np.zeros((1, 3)), np.zeros((1, 3)), None,
                         np.zeros((1, 1)), 1.0)


def test_make_plant_rejects_zero_delay():
    a = np.eye(2)
    with pytest.raises(ValueError, match="positive"):
        plant.make_plant(a, np.zeros((2, 1)), np.zeros((2, 1)), np.zeros((1, 1)),
                         np.zeros((1, 3)), np.zeros((1, 3)), None,
                         np.zeros((1, 1)), 0.0)


def test_hurwitz_plant_warns():
    rep = plant.validate_plant(plant.make_plant(
        -np.eye(2), np.ones((2, 1)), np.zeros((2, 1)), np.zeros((1, 1)),
        np.zeros((1, 3)), np.zeros((1, 3)), None, np.zeros((1, 1)), 1.0))
    assert rep["warnings"]


def test_l2_gain_supply_fixed():
    sup = plant.l2_gain_supply(1.0, m=2, q=1)
    assert np.allclose(sup.J1, -np.eye(2))
    assert np.allclose(sup.J3, np.eye(1))
    assert not sup.gamma_is_variable
    # supply value: -(1/g)|z|^2 + g|w|^2 at gamma=1
    assert sup.value([1.0, 0.0], [2.0]) == pytest.approx(-1.0 + 4.0)


def test_l2_gain_supply_rejects_nonpositive_gamma():
    with pytest.raises(ValueError):
        plant.l2_gain_supply(0.0, m=1, q=1)


def test_l2_gain_supply_variable_resolves():
    sup = plant.l2_gain_supply(None, m=2, q=1)
    assert sup.gamma_is_variable
    res = sup.with_gamma(2.0)
    assert np.allclose(res.J1, -2.0 * np.eye(2))
    assert np.allclose(res.J3, 2.0 * np.eye(1))


def test_passivity_preset():
    sup = plant.passivity_supply(2)
    assert np.abs(sup.Jtilde).max() == 0.0
    assert np.allclose(sup.J2, np.eye(2))
    assert np.abs(sup.J3).max() == 0.0
    # s(z, w) = 2 z'w
    assert sup.value([1.0, 2.0], [3.0, -1.0]) == pytest.approx(2.0 * (3.0 - 2.0))


def test_supply_rejects_indefinite_j1():
    with pytest.raises(ValueError, match="negative definite"):
        plant.make_supply(np.eye(1), np.array([[1e-13]]), np.zeros((1, 1)),
                          np.zeros((1, 1)))


def test_controller_gains_shape_validation():
    with pytest.raises(ValueError, match="K3"):
        plant.ControllerGains(K1=np.zeros((1, 3)), K2=np.zeros((1, 3)),
                              K3=np.zeros((1, 5)), d=2, nu=3)


def test_certificate_margins_report():
    cert = plant.KfCertificate(P=np.eye(3), Q=np.zeros((3, 6)), R=np.eye(6),
                               S=np.eye(3), U=np.eye(3), gamma=1.0, d=2, nu=3)
    marg = cert.condition_14a_margins()
    assert marg["S"] == pytest.approx(1.0)
    assert marg["PQ_block"] > 0


def test_ackermann_places_poles():
    a = np.array([[-1.0, 1.0], [0.0, 0.1]])
    b = np.array([[0.0], [1.0]])
    k = plant.ackermann_gain(a, b, [-1.0, -1.9])
    assert sorted(linalg.eig_general(a + b @ k).real) == pytest.approx([-1.9, -1.0])
    assert k == pytest.approx(np.array([[0.0, -2.0]]), abs=1e-10)


def test_ackermann_rejects_uncontrollable():
    a = np.diag([1.0, 2.0])
    b = np.array([[1.0], [0.0]])
    with pytest.raises(ValueError, match="not controllable"):
        plant.ackermann_gain(a, b, [-1.0, -2.0])


def test_output_kernel_evaluates_sum(example_problem):
    kern = example_problem.plant.dd_output_kernel
    val = kern(-1.0)
    expect_00 = 0.2 + 0.1 * np.exp(-1.0)
    assert val[0, 0] == pytest.approx(expect_00)
    assert val[1, 2] == pytest.approx(0.11 * np.exp(-3.0))
