"""Dense matrix kernels shared by the toolkit.

Thin, contract-checked wrappers around LAPACK-backed routines plus the
block-exponential Gramian used to normalize delay kernels.  Everything
operates on plain ``numpy`` arrays in double precision; inputs are
validated for finiteness so NaN/Inf never propagate silently.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = [
    "as_matrix",
    "check_finite",
    "symmetrize",
    "expm",
    "sqrtm_spd",
    "inv_sqrtm_spd",
    "kron",
    "van_loan_gramian",
    "eig_general",
    "is_hurwitz",
    "spectral_abscissa_of",
]

# Relative symmetry slack used before symmetrizing an allegedly symmetric input.
_SYM_RTOL = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float array and reject non-finite entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    check_finite(m, name)
    return m


def check_finite(a: np.ndarray, name: str = "matrix") -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")


def symmetrize(a, name: str = "matrix") -> np.ndarray:
    """Verify near-symmetry and return the symmetric part.

    Rejects matrices whose asymmetry exceeds ``1e-12 * (1 + max|A|)``;
    anything below that is attributed to round-off and folded away.
    """
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    scale = 1.0 + np.max(np.abs(m)) if m.size else 1.0
    skew = np.max(np.abs(m - m.T)) if m.size else 0.0
    if skew > _SYM_RTOL * scale:
        raise ValueError(
            f"{name} is not symmetric: max|M - M^T| = {skew:.3e} "
            f"exceeds {_SYM_RTOL * scale:.3e}"
        )
    return 0.5 * (m + m.T)


def _square(a, name: str) -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


def expm(a) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring with Pade approximation)."""
    m = _square(a, "expm input")
    out = scipy.linalg.expm(m)
    check_finite(out, "expm output")
    return out


def sqrtm_spd(s) -> np.ndarray:
    """Principal square root of a symmetric positive-definite matrix.

    Computed from the eigendecomposition; the result is symmetric by
    construction and satisfies ``W @ W == S`` to round-off.
    """
    m = symmetrize(s, "sqrtm_spd input")
    w, v = np.linalg.eigh(m)
    if w.min(initial=np.inf) <= 0.0:
        raise ValueError(
            f"sqrtm_spd requires a positive-definite input; "
            f"min eigenvalue = {w.min():.6e}"
        )
    root = (v * np.sqrt(w)) @ v.T
    return 0.5 * (root + root.T)


def inv_sqrtm_spd(s) -> np.ndarray:
    """Inverse principal square root of an SPD matrix (eigendecomposition)."""
    m = symmetrize(s, "inv_sqrtm_spd input")
    w, v = np.linalg.eigh(m)
    if w.min(initial=np.inf) <= 0.0:
        raise ValueError(
            f"inv_sqrtm_spd requires a positive-definite input; "
            f"min eigenvalue = {w.min():.6e}"
        )
    root = (v / np.sqrt(w)) @ v.T
    return 0.5 * (root + root.T)


def kron(a, b) -> np.ndarray:
    """Kronecker product with finiteness checks."""
    am = as_matrix(a, "kron first factor")
    bm = as_matrix(b, "kron second factor")
    return np.kron(am, bm)


def van_loan_gramian(m, f0, r: float) -> np.ndarray:
    """Gramian ``int_{-r}^{0} e^{M t} f0 f0^T e^{M^T t} dt`` for r > 0.

    Uses the block-matrix-exponential construction: with
    ``H = [[M, f0 f0^T], [0, -M^T]]`` the integral equals
    ``expm(-M r) @ U`` where ``U`` is the upper-right block of
    ``expm(H r)``.  Exact up to the accuracy of the matrix exponential,
    which keeps positive-definiteness checks free of quadrature noise.
    """
    mm = _square(m, "van_loan_gramian M")
    f = np.asarray(f0, dtype=float).reshape(-1)
    check_finite(f, "van_loan_gramian f0")
    d = mm.shape[0]
    if f.shape[0] != d:
        raise ValueError(f"f0 has length {f.shape[0]}, expected {d}")
    if not (np.isfinite(r) and r > 0):
        raise ValueError(f"delay horizon r must be positive, got {r}")
    q = np.outer(f, f)
    h = np.zeros((2 * d, 2 * d))
    h[:d, :d] = mm
    h[:d, d:] = q
    h[d:, d:] = -mm.T
    big = expm(h * r)
    upper_right = big[:d, d:]
    gram = expm(-mm * r) @ upper_right
    return 0.5 * (gram + gram.T)


def eig_general(a) -> np.ndarray:
    """Eigenvalues of a general square matrix (Hessenberg + shifted QR)."""
    m = _square(a, "eig_general input")
    return np.linalg.eigvals(m)


def spectral_abscissa_of(a) -> float:
    """Maximum real part of the eigenvalues of a square matrix."""
    return float(np.max(eig_general(a).real))


def is_hurwitz(a, margin: float = 0.0) -> bool:
    """True iff every eigenvalue has real part < -margin."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    return spectral_abscissa_of(a) < -margin
