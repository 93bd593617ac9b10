"""Predictor-equivalent feedback gains used to initialize the synthesis loop.

Given a stabilizing static gain ``K`` (``A + BK`` Hurwitz) and any Hurwitz
``X``, the dynamical feedback

    u'(t) = (KB + X) u(t) + (KA - XK) (e^{Ar} x(t) + int_{-r}^0 e^{-A tau} B u(t+tau) dtau)

compensates the input delay exactly; its gains expressed in the kernel
basis provide a feasible starting point for the optimization.
"""

from __future__ import annotations

import numpy as np

from . import basis, linalg
from .plant import ControllerGains, PlantModel

__all__ = ["construct_gains", "warm_start_spectrum"]


def construct_gains(
    plant: PlantModel, K, X, realization: basis.KdrRealization, tol: float = 1e-8
) -> ControllerGains:
    """Delay-compensating gains: K1 = [(KA-XK)e^{Ar}  KB+X], K2 = 0, K3 = Gamma."""
    K = linalg.as_matrix(K, "K")
    X = linalg.as_matrix(X, "X")
    n, p = plant.n, plant.p
    if K.shape != (p, n):
        raise ValueError(f"K must be {p}x{n}, got {K.shape}")
    if X.shape != (p, p):
        raise ValueError(f"X must be {p}x{p}, got {X.shape}")
    acl = plant.A + plant.B @ K
    if not linalg.is_hurwitz(acl):
        raise ValueError(
            f"A + BK is not Hurwitz (abscissa "
            f"{linalg.spectral_abscissa_of(acl):.4f}); choose a stabilizing K"
        )
    if not linalg.is_hurwitz(X):
        raise ValueError(
            f"X is not Hurwitz (abscissa {linalg.spectral_abscissa_of(X):.4f})"
        )
    left = K @ plant.A - X @ K
    k1 = np.hstack([left @ linalg.expm(plant.A * plant.r), K @ plant.B + X])
    gamma = basis.predictor_kernel(plant.A, plant.B, K, X, realization, tol=tol)
    return ControllerGains(
        K1=k1,
        K2=np.zeros((p, plant.nu)),
        K3=gamma.coeffs,
        d=realization.d,
        nu=realization.nu,
    )


def warm_start_spectrum(plant: PlantModel, K, X) -> np.ndarray:
    """Closed-loop spectrum under exact delay compensation: eig(A+BK) u eig(X)."""
    K = linalg.as_matrix(K, "K")
    X = linalg.as_matrix(X, "X")
    return np.concatenate(
        [linalg.eig_general(plant.A + plant.B @ K), linalg.eig_general(X)]
    )
