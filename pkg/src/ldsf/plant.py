"""Open-loop system data, supply rates and controller containers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg

__all__ = [
    "KernelTerm",
    "OutputKernel",
    "PlantModel",
    "SupplyRate",
    "ControllerGains",
    "KfCertificate",
    "validate_plant",
    "l2_gain_supply",
    "passivity_supply",
    "ackermann_gain",
]


@dataclass(frozen=True)
class KernelTerm:
    """One term ``coeff * tau^degree * exp(rate*tau)`` of a matrix kernel."""

    poly_degree: int
    rate: float
    coeff: np.ndarray


@dataclass(frozen=True)
class OutputKernel:
    """Closed-form matrix kernel given as a finite sum of basis terms."""

    terms: tuple[KernelTerm, ...]
    shape: tuple[int, int]

    def __call__(self, tau: float) -> np.ndarray:
        out = np.zeros(self.shape)
        for t in self.terms:
            out += t.coeff * (tau**t.poly_degree * np.exp(t.rate * tau))
        return out

    @staticmethod
    def zero(shape) -> "OutputKernel":
        return OutputKernel(terms=(), shape=tuple(shape))


@dataclass(frozen=True)
class PlantModel:
    """Input-delay plant with distributed-delay regulated output.

        x'(t) = A x(t) + B u(t-r) + D1 w(t)
        z(t)  = C1 chi(t) + C2 chi(t-r) + int_{-r}^0 C3t(tau) chi(t+tau) dtau + D3 w(t)

    with ``chi = [x; u]`` the augmented state and ``D2`` the loop-disturbance
    gain entering the controller dynamics.
    """

    A: np.ndarray
    B: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    dd_output_kernel: OutputKernel
    D3: np.ndarray
    r: float

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.D1.shape[1]

    @property
    def m(self) -> int:
        return self.C1.shape[0]

    @property
    def nu(self) -> int:
        return self.n + self.p


def make_plant(A, B, D1, D2, C1, C2, dd_output_kernel, D3, r) -> PlantModel:
    """Build and dimension-check a plant model."""
    A = linalg.as_matrix(A, "A")
    B = linalg.as_matrix(B, "B")
    D1 = linalg.as_matrix(D1, "D1")
    D2 = linalg.as_matrix(D2, "D2")
    C1 = linalg.as_matrix(C1, "C1")
    C2 = linalg.as_matrix(C2, "C2")
    D3 = linalg.as_matrix(D3, "D3")
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError(f"A must be square, got {A.shape}")
    p = B.shape[1]
    q = D1.shape[1]
    m = C1.shape[0]
    nu = n + p
    checks = [
        (B.shape[0] == n, f"B must have {n} rows, got {B.shape}"),
        (D1.shape[0] == n, f"D1 must have {n} rows, got {D1.shape}"),
        (D2.shape == (p, q), f"D2 must be {p}x{q}, got {D2.shape}"),
        (C1.shape == (m, nu), f"C1 must be {m}x{nu}, got {C1.shape}"),
        (C2.shape == (m, nu), f"C2 must be {m}x{nu}, got {C2.shape}"),
        (D3.shape == (m, q), f"D3 must be {m}x{q}, got {D3.shape}"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ValueError(msg)
    if dd_output_kernel is None:
        dd_output_kernel = OutputKernel.zero((m, nu))
    if dd_output_kernel.shape != (m, nu):
        raise ValueError(
            f"distributed output kernel must be {m}x{nu}, got {dd_output_kernel.shape}"
        )
    if not (np.isfinite(r) and r > 0):
        raise ValueError(f"delay r must be positive, got {r}")
    return PlantModel(A=A, B=B, D1=D1, D2=D2, C1=C1, C2=C2,
                      dd_output_kernel=dd_output_kernel, D3=D3, r=float(r))


def validate_plant(plant: PlantModel) -> dict:
    """Dimension report; warns when the open loop is already stable."""
    a_abscissa = linalg.spectral_abscissa_of(plant.A)
    report = {
        "n": plant.n,
        "p": plant.p,
        "q": plant.q,
        "m": plant.m,
        "nu": plant.nu,
        "r": plant.r,
        "A_hurwitz": bool(a_abscissa < 0),
        "A_abscissa": a_abscissa,
        "warnings": [],
    }
    if a_abscissa < 0:
        report["warnings"].append(
            "A is already Hurwitz; delay compensation is not required"
        )
    return report


@dataclass(frozen=True)
class SupplyRate:
    """Quadratic supply rate s(z, w) = [z; w]^T [[Jt^T J1^{-1} Jt, J2], [*, J3]] [z; w]."""

    Jtilde: np.ndarray
    J1: np.ndarray
    J2: np.ndarray
    J3: np.ndarray
    gamma_is_variable: bool = False

    @property
    def m(self) -> int:
        return self.J1.shape[0]

    @property
    def q(self) -> int:
        return self.J3.shape[0]

    def value(self, z, w) -> float:
        z = np.asarray(z, dtype=float).reshape(-1)
        w = np.asarray(w, dtype=float).reshape(-1)
        core = self.Jtilde.T @ np.linalg.solve(self.J1, self.Jtilde)
        return float(z @ core @ z + 2.0 * z @ self.J2 @ w + w @ self.J3 @ w)

    def with_gamma(self, gamma: float) -> "SupplyRate":
        """Resolve a variable-gamma supply at a concrete gain level."""
        if not self.gamma_is_variable:
            return self
        m, q = self.m, self.q
        return make_supply(np.eye(m), -gamma * np.eye(m), np.zeros((m, q)),
                           gamma * np.eye(q))


def make_supply(Jtilde, J1, J2, J3, gamma_is_variable: bool = False) -> SupplyRate:
    Jt = linalg.as_matrix(Jtilde, "Jtilde")
    J1m = linalg.symmetrize(J1, "J1")
    J2m = linalg.as_matrix(J2, "J2")
    J3m = linalg.symmetrize(J3, "J3")
    m = J1m.shape[0]
    q = J3m.shape[0]
    if Jt.shape != (m, m):
        raise ValueError(f"Jtilde must be {m}x{m}, got {Jt.shape}")
    if J2m.shape != (m, q):
        raise ValueError(f"J2 must be {m}x{q}, got {J2m.shape}")
    eig_j1 = np.linalg.eigvalsh(J1m)
    if eig_j1.max() >= -1e-12:
        raise ValueError(
            f"J1 must be negative definite; max eigenvalue = {eig_j1.max():.3e}"
        )
    core = Jt.T @ np.linalg.solve(J1m, Jt)
    core = 0.5 * (core + core.T)
    if np.linalg.eigvalsh(core).max() > 1e-10 * (1.0 + np.abs(core).max()):
        raise ValueError("Jtilde^T J1^{-1} Jtilde must be negative semidefinite")
    return SupplyRate(Jtilde=Jt, J1=J1m, J2=J2m, J3=J3m,
                      gamma_is_variable=gamma_is_variable)


def l2_gain_supply(gamma=None, m: int = 1, q: int = 1) -> SupplyRate:
    """L2-gain supply rate; pass ``gamma=None`` to make it a decision variable."""
    if gamma is None:
        sup = make_supply(np.eye(m), -np.eye(m), np.zeros((m, q)), np.eye(q))
        return SupplyRate(Jtilde=sup.Jtilde, J1=sup.J1, J2=sup.J2, J3=sup.J3,
                          gamma_is_variable=True)
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return make_supply(np.eye(m), -gamma * np.eye(m), np.zeros((m, q)),
                       gamma * np.eye(q))


def passivity_supply(m: int, J1=None) -> SupplyRate:
    """Strict passivity preset: s(z, w) = 2 z^T w (requires m == q)."""
    if J1 is None:
        J1 = -np.eye(m)
    return make_supply(np.zeros((m, m)), J1, np.eye(m), np.zeros((m, m)))


@dataclass(frozen=True)
class ControllerGains:
    """Gains of the dynamical state feedback u' = K1 chi + K2 chi(t-r) + K3 int F chi."""

    K1: np.ndarray
    K2: np.ndarray
    K3: np.ndarray
    d: int
    nu: int
    gamma: float | None = None

    def __post_init__(self):
        p = self.K1.shape[0]
        if self.K1.shape != (p, self.nu) or self.K2.shape != (p, self.nu):
            raise ValueError("K1/K2 must be p x nu")
        if self.K3.shape != (p, self.d * self.nu):
            raise ValueError(
                f"K3 must be p x d*nu = {p}x{self.d * self.nu}, got {self.K3.shape}"
            )

    @property
    def p(self) -> int:
        return self.K1.shape[0]


@dataclass(frozen=True)
class KfCertificate:
    """Krasovskii functional data certifying dissipativity, plus achieved gamma."""

    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray
    U: np.ndarray
    gamma: float
    d: int = 0
    nu: int = 0

    def condition_14a_margins(self) -> dict:
        """Minimum eigenvalues of the three positivity blocks."""
        d = self.R.shape[0] // self.S.shape[0]
        top = np.block([[self.P, self.Q],
                        [self.Q.T, self.R + np.kron(np.eye(d), self.S)]])
        return {
            "PQ_block": float(np.linalg.eigvalsh(0.5 * (top + top.T)).min()),
            "S": float(np.linalg.eigvalsh(self.S).min()),
            "U": float(np.linalg.eigvalsh(self.U).min()),
        }


def ackermann_gain(A, B, poles) -> np.ndarray:
    """Single-input pole placement: K with eig(A + B K) = poles.

    Convenience helper only; never invoked implicitly.
    """
    A = linalg.as_matrix(A, "A")
    B = linalg.as_matrix(B, "B")
    n = A.shape[0]
    if B.shape != (n, 1):
        raise ValueError("ackermann_gain requires a single-input plant")
    ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
    if np.linalg.matrix_rank(ctrb) < n:
        raise ValueError("plant is not controllable; pole placement impossible")
    coeffs = np.real(np.poly(np.asarray(poles, dtype=complex)))
    qa = np.zeros((n, n))
    for c in coeffs:
        qa = qa @ A + c * np.eye(n)
    k_row = np.linalg.solve(ctrb.T, np.eye(n)[:, -1]).T @ qa
    return -k_row.reshape(1, n)
