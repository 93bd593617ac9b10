"""Spectral abscissa of the nominal closed loop by pseudospectral collocation.

The solution-operator generator of the retarded system

    chi'(t) = L0 chi(t) + L1 chi(t-r) + int_{-r}^0 L3 F(tau) chi(t+tau) dtau

acts as d/dtheta on history segments, with the boundary row at theta = 0
replaced by the right-hand side.  Collocating on Chebyshev-Gauss-Lobatto
nodes over [-r, 0] (differentiation matrix for the transport part,
Clenshaw-Curtis weights for the kernel integral) turns the generator into
a dense matrix whose rightmost eigenvalues approximate the true
characteristic roots with spectral accuracy.
"""

from __future__ import annotations

import numpy as np

from .basis import KdrRealization
from .plant import ControllerGains, PlantModel

__all__ = [
    "cheb_nodes_diff",
    "clenshaw_curtis_weights",
    "spectral_abscissa",
    "spa_report",
]


def cheb_nodes_diff(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev-Gauss-Lobatto nodes on [-1, 1] (descending) and the
    differentiation matrix."""
    if n == 0:
        return np.array([1.0]), np.zeros((1, 1))
    k = np.arange(n + 1)
    x = np.cos(np.pi * k / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c = c * (-1.0) ** k
    xx = np.tile(x, (n + 1, 1)).T
    dx = xx - xx.T + np.eye(n + 1)
    d = np.outer(c, 1.0 / c) / dx
    d -= np.diag(d.sum(axis=1))
    return x, d


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Quadrature weights on [-1, 1] for the CGL nodes of cheb_nodes_diff."""
    if n == 0:
        return np.array([2.0])
    w = np.zeros(n + 1)
    theta = np.pi * np.arange(n + 1) / n
    for j in range(n + 1):
        s = 0.0
        for k in range(1, n // 2 + 1):
            factor = 1.0 if 2 * k != n else 0.5
            s += factor * np.cos(2 * k * theta[j]) / (4 * k * k - 1)
        w[j] = (1.0 - 2.0 * s) * (2.0 / n)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _generator_matrix(plant: PlantModel, realization: KdrRealization,
                      gains: ControllerGains, n_cheb: int) -> np.ndarray:
    n, p, nu, r = plant.n, plant.p, plant.nu, plant.r
    l0 = np.vstack([np.hstack([plant.A, np.zeros((n, p))]), gains.K1])
    l1 = np.vstack([np.hstack([np.zeros((n, n)), plant.B]), gains.K2])
    l3 = np.vstack([np.zeros((n, realization.d * nu)), gains.K3])
    x, dmat = cheb_nodes_diff(n_cheb)
    # theta = r/2 (x - 1) maps [-1, 1] to [-r, 0], node 0 at theta = 0
    theta = r / 2.0 * (x - 1.0)
    dmat = dmat * (2.0 / r)
    wts = clenshaw_curtis_weights(n_cheb) * (r / 2.0)
    big = np.kron(dmat, np.eye(nu))
    fstack = realization.eval_F_stack(theta)  # (n_cheb+1, d*nu, nu)
    # boundary row at theta = 0: the dynamics
    row = np.zeros((nu, (n_cheb + 1) * nu))
    for j in range(n_cheb + 1):
        row[:, j * nu : (j + 1) * nu] = wts[j] * (l3 @ fstack[j])
    row[:, :nu] += l0
    row[:, n_cheb * nu :] += l1
    big[:nu, :] = row
    return big


def spectral_abscissa(plant: PlantModel, realization: KdrRealization,
                      gains: ControllerGains, n_cheb: int = 40,
                      refine_tol: float = 1e-3, max_refinements: int = 2) -> float:
    """Rightmost real part of the closed-loop spectrum.

    Convergence is checked by doubling the collocation order until two
    consecutive values agree to ``refine_tol``.
    """
    if n_cheb < 8:
        raise ValueError("n_cheb must be at least 8")
    prev = None
    n = n_cheb
    for _ in range(max_refinements + 1):
        mat = _generator_matrix(plant, realization, gains, n)
        val = float(np.max(np.linalg.eigvals(mat).real))
        if prev is not None and abs(val - prev) < refine_tol:
            return val
        prev = val
        n *= 2
    raise RuntimeError(
        f"spectral abscissa did not converge (last two values differ by "
        f"{abs(val - prev):.3e} at order {n // 2})")


def spa_report(plant: PlantModel, realization: KdrRealization,
               gains_list, n_cheb: int = 40) -> list[dict]:
    """Abscissa for each gain set; certified designs must all be negative."""
    out = []
    for label, gains in gains_list:
        try:
            val = spectral_abscissa(plant, realization, gains, n_cheb)
            out.append({"label": label, "abscissa": val, "stable": val < 0})
        except RuntimeError as exc:
            out.append({"label": label, "abscissa": float("nan"),
                        "stable": False, "error": str(exc)})
    return out
