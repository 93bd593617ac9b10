"""Kronecker decomposition of distributed-delay kernels.

A kernel basis is a list of functions ``tau^i * exp(l*tau)`` that is closed
under differentiation, so the stacked vector ``f`` satisfies ``f' = M f``
for a constant companion matrix ``M``.  The realization bundles ``M`` with
the Gramian ``G = int_{-r}^0 f f^T`` and its inverse square root, which
normalize the evaluator ``F(tau) = (G^{-1/2} f(tau)) kron I_nu``.  Matrix
kernels are then written as a constant coefficient matrix times ``F(tau)``,
with the fit validated numerically.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import linalg

__all__ = [
    "BasisTerm",
    "BasisSpec",
    "KdrRealization",
    "KernelDecomposition",
    "build_basis",
    "realize",
    "fit_kernel",
    "predictor_kernel",
    "weighted_integral_inequality_gap",
]


@dataclass(frozen=True, order=True)
class BasisTerm:
    """One basis function ``tau**poly_degree * exp(rate*tau)``."""

    rate: float
    poly_degree: int

    def __post_init__(self):
        if self.poly_degree < 0:
            raise ValueError("poly_degree must be nonnegative")
        if not np.isfinite(self.rate):
            raise ValueError("rate must be finite")


@dataclass(frozen=True)
class BasisSpec:
    """Ordered, differentiation-closed list of basis terms on [-r, 0]."""

    terms: tuple[BasisTerm, ...]
    r: float

    @property
    def d(self) -> int:
        return len(self.terms)

    def companion_matrix(self) -> np.ndarray:
        """Matrix M with d/dtau f = M f for the stacked basis vector."""
        d = self.d
        m = np.zeros((d, d))
        index = {(t.rate, t.poly_degree): k for k, t in enumerate(self.terms)}
        for k, t in enumerate(self.terms):
            m[k, k] = t.rate
            if t.poly_degree > 0:
                m[k, index[(t.rate, t.poly_degree - 1)]] = t.poly_degree
        return m

    def f0(self) -> np.ndarray:
        return np.array([1.0 if t.poly_degree == 0 else 0.0 for t in self.terms])

    def eval_f(self, taus) -> np.ndarray:
        """Evaluate f at one or more points; returns shape (d,) or (d, nt)."""
        t = np.asarray(taus, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        out = np.empty((self.d, tt.size))
        for k, term in enumerate(self.terms):
            out[k] = tt**term.poly_degree * np.exp(term.rate * tt)
        return out[:, 0] if scalar else out


def build_basis(terms, r: float) -> BasisSpec:
    """Close a term list under differentiation and canonicalize it.

    ``tau^i e^(l tau)`` differentiates into the degree-(i-1) term with the
    same rate, so every lower degree is inserted automatically.  Terms are
    deduplicated against the auto-inserted ones and sorted by ascending
    rate, then degree.  Exact duplicates in the explicit input are
    rejected.
    """
    if not (np.isfinite(r) and r > 0):
        raise ValueError(f"delay horizon r must be positive, got {r}")
    explicit = [
        t if isinstance(t, BasisTerm) else BasisTerm(rate=float(t[1]), poly_degree=int(t[0]))
        for t in terms
    ]
    if not explicit:
        raise ValueError("basis term list must be non-empty")
    seen = set()
    for t in explicit:
        key = (t.rate, t.poly_degree)
        if key in seen:
            raise ValueError(f"duplicate basis term (degree={t.poly_degree}, rate={t.rate})")
        seen.add(key)
    closed: set[tuple[float, int]] = set()
    for t in explicit:
        for j in range(t.poly_degree + 1):
            closed.add((t.rate, j))
    ordered = tuple(
        BasisTerm(rate=rate, poly_degree=deg) for rate, deg in sorted(closed)
    )
    return BasisSpec(terms=ordered, r=float(r))


@dataclass(frozen=True)
class KdrRealization:
    """Realized kernel basis: companion matrix, Gramian and evaluators.

    For well-conditioned Gramians the normalized basis is evaluated as
    ``G^{-1/2} f(tau)`` directly.  Ill-conditioned Gramians (rich bases on
    long windows) get their normalizers computed in extended precision and
    the normalized basis is carried as a Chebyshev interpolant, since the
    normalized functions themselves are tame even when ``G^{-1/2}`` is not
    representable in double precision.
    """

    spec: BasisSpec
    nu: int
    M: np.ndarray
    f0_vec: np.ndarray
    gram: np.ndarray
    gram_sqrt: np.ndarray
    gram_inv_sqrt: np.ndarray
    gram_cond: float
    mconj: np.ndarray
    fnorm_cheb: np.ndarray | None = None  # (deg+1, d) coefficients or None

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def r(self) -> float:
        return self.spec.r

    def eval_f(self, taus) -> np.ndarray:
        t = np.asarray(taus, dtype=float)
        if np.any(t < -self.r - 1e-12) or np.any(t > 1e-12):
            warnings.warn(
                "basis evaluated outside [-r, 0]", stacklevel=2
            )
        return self.spec.eval_f(taus)

    def eval_fnorm(self, taus) -> np.ndarray:
        """Normalized basis G^{-1/2} f at one or more points; (d,) or (d, nt)."""
        t = np.asarray(taus, dtype=float)
        if self.fnorm_cheb is None:
            return self.gram_inv_sqrt @ self.eval_f(t)
        x = 2.0 * t / self.r + 1.0
        return np.polynomial.chebyshev.chebval(x, self.fnorm_cheb)

    def eval_F(self, tau: float) -> np.ndarray:
        """Normalized evaluator F(tau) = (G^{-1/2} f(tau)) kron I_nu."""
        fnorm = self.eval_fnorm(float(tau))
        return np.kron(fnorm.reshape(-1, 1), np.eye(self.nu))

    def eval_F_stack(self, taus) -> np.ndarray:
        """F at many points, shape (nt, d*nu, nu)."""
        fs = np.atleast_2d(self.eval_fnorm(np.atleast_1d(taus)))
        eye = np.eye(self.nu)
        # (nt, d, 1, 1) * (1, 1, nu, nu) -> (nt, d, nu, nu) -> (nt, d*nu, nu)
        stack = fs.T[:, :, None, None] * eye[None, None, :, :]
        nt = fs.shape[1]
        return stack.reshape(nt, self.d * self.nu, self.nu)

    def normalized_companion(self) -> np.ndarray:
        """G^{-1/2} M G^{1/2}, the companion matrix in normalized coordinates."""
        return self.mconj

    def fingerprint(self) -> dict:
        """Serialization-stable identity of this realization."""
        import hashlib

        gram_repr = ",".join(f"{v:.12e}" for v in np.ravel(self.gram))
        return {
            "d": self.d,
            "nu": self.nu,
            "r": self.r,
            "terms": [[t.poly_degree, t.rate] for t in self.spec.terms],
            "gram_sha256": hashlib.sha256(gram_repr.encode()).hexdigest()[:16],
        }


# Above this condition number the normalizers are computed in extended
# precision (the plain eigendecomposition route loses the small eigenspace).
_HP_SWITCH = 1e10


def realize(spec: BasisSpec, nu: int, cond_cap: float = 1e18) -> KdrRealization:
    """Compute the Gramian and normalizers for a basis spec.

    Fails with a diagnostic naming the most nearly dependent terms when the
    Gramian condition number exceeds ``cond_cap``.
    """
    if nu < 1:
        raise ValueError("nu must be >= 1")
    m = spec.companion_matrix()
    f0 = spec.f0()
    gram = linalg.van_loan_gramian(m, f0, spec.r)
    w, v = np.linalg.eigh(gram)
    cond = np.inf if w[0] <= 0 else w[-1] / w[0]
    if cond > cond_cap:
        weights = np.abs(v[:, 0])
        worst = np.argsort(weights)[::-1][:3]
        names = ", ".join(
            f"tau^{spec.terms[i].poly_degree}*exp({spec.terms[i].rate}*tau)"
            f" (weight {weights[i]:.2f})"
            for i in worst
        )
        raise ValueError(
            f"basis Gramian is numerically singular (condition "
            f"{w[-1] / max(w[0], 1e-300):.3e} > {cond_cap:.1e}); nearly "
            f"dependent combination dominated by: {names}"
        )
    if cond > _HP_SWITCH:
        return _realize_extended(spec, nu, m, f0, gram, cond)
    gram_sqrt = (v * np.sqrt(w)) @ v.T
    inv_sqrt = (v / np.sqrt(w)) @ v.T
    # One Newton-Schulz refinement keeps W G W = I near round-off even for
    # moderately conditioned Gramians.
    for _ in range(2):
        err = np.eye(spec.d) - inv_sqrt @ gram @ inv_sqrt
        if np.max(np.abs(err)) < 1e-15:
            break
        inv_sqrt = inv_sqrt + 0.5 * (err @ inv_sqrt + inv_sqrt @ err) / 2.0
        inv_sqrt = 0.5 * (inv_sqrt + inv_sqrt.T)
    inv_sqrt = 0.5 * (inv_sqrt + inv_sqrt.T)
    return KdrRealization(
        spec=spec,
        nu=int(nu),
        M=m,
        f0_vec=f0,
        gram=gram,
        gram_sqrt=0.5 * (gram_sqrt + gram_sqrt.T),
        gram_inv_sqrt=inv_sqrt,
        gram_cond=float(cond),
        mconj=inv_sqrt @ m @ (0.5 * (gram_sqrt + gram_sqrt.T)),
    )


def _realize_extended(spec: BasisSpec, nu: int, m: np.ndarray, f0: np.ndarray,
                      gram_dbl: np.ndarray, cond: float) -> KdrRealization:
    """Extended-precision normalizers for ill-conditioned Gramians.

    The square roots are taken at 60 digits; everything exported to double
    is a well-scaled product (the conjugated companion matrix, the packing
    root, and Chebyshev coefficients of the normalized basis functions,
    which form an L2-orthonormal family and are pointwise tame).
    """
    import mpmath as mp

    d = spec.d
    with mp.workdps(60):
        m_mp = mp.matrix(d, d)
        for i in range(d):
            for j in range(d):
                m_mp[i, j] = mp.mpf(m[i, j])
        gram_mp = mp.zeros(d, d)
        for i, ti in enumerate(spec.terms):
            for j, tj in enumerate(spec.terms):
                if j < i:
                    gram_mp[i, j] = gram_mp[j, i]
                    continue
                gram_mp[i, j] = mp.quad(
                    lambda t, a=ti, b=tj: (t**a.poly_degree
                                           * mp.e**(mp.mpf(a.rate) * t)
                                           * t**b.poly_degree
                                           * mp.e**(mp.mpf(b.rate) * t)),
                    [-mp.mpf(spec.r), 0])
        evals, q = mp.eigsy(gram_mp)
        if min(evals) <= 0:
            raise ValueError("basis Gramian not positive definite at extended "
                             "precision; terms are exactly dependent")
        sq = mp.diag([mp.sqrt(e) for e in evals])
        isq = mp.diag([1 / mp.sqrt(e) for e in evals])
        gram_sqrt_mp = q * sq * q.T
        gram_isqrt_mp = q * isq * q.T
        mconj_mp = gram_isqrt_mp * m_mp * gram_sqrt_mp
        # sample the normalized basis at Chebyshev nodes and interpolate
        deg = max(24, 8 * d + 4 * int(np.ceil(np.max(np.abs(
            [t.rate for t in spec.terms])) * spec.r)))
        nodes = np.cos(np.pi * np.arange(deg + 1) / deg)
        samples = np.empty((deg + 1, d))
        for k, xk in enumerate(nodes):
            tau = mp.mpf(spec.r) / 2 * (mp.mpf(xk) - 1)
            fv = mp.matrix([tau**t.poly_degree * mp.e**(mp.mpf(t.rate) * tau)
                            for t in spec.terms])
            fn = gram_isqrt_mp * fv
            samples[k] = [float(fn[i]) for i in range(d)]
        to_np = lambda mat: np.array(
            [[float(mat[i, j]) for j in range(d)] for i in range(d)])
        gram_sqrt = to_np(gram_sqrt_mp)
        gram_inv_sqrt = to_np(gram_isqrt_mp)
        mconj = to_np(mconj_mp)
    coeffs = np.polynomial.chebyshev.chebfit(nodes, samples, deg)
    return KdrRealization(
        spec=spec, nu=int(nu), M=m, f0_vec=f0, gram=gram_dbl,
        gram_sqrt=0.5 * (gram_sqrt + gram_sqrt.T),
        gram_inv_sqrt=0.5 * (gram_inv_sqrt + gram_inv_sqrt.T),
        gram_cond=float(cond), mconj=mconj,
        fnorm_cheb=coeffs)


@dataclass(frozen=True)
class KernelDecomposition:
    """Packed coefficients C with kernel(tau) = C F(tau), plus fit residual."""

    coeffs: np.ndarray
    residual: float
    kernel_cols: int = field(default=0)

    def reconstruct(self, realization: KdrRealization, tau: float) -> np.ndarray:
        b = self.kernel_cols or realization.nu
        fnorm = realization.eval_fnorm(float(tau))
        fb = np.kron(fnorm.reshape(-1, 1), np.eye(b))
        return self.coeffs @ fb


def _chebyshev_points(r: float, n: int) -> np.ndarray:
    # Chebyshev-Gauss-Lobatto nodes mapped to [-r, 0]
    k = np.arange(n)
    return -r / 2.0 * (1.0 - np.cos(np.pi * k / (n - 1)))


def fit_kernel(kernel, realization: KdrRealization, tol: float = 1e-8) -> KernelDecomposition:
    """Least-squares decomposition of a matrix kernel in the realized basis.

    Samples the kernel at Chebyshev points (at least 4d), solves one
    least-squares problem per matrix entry against the basis functions and
    packs the raw coefficient blocks with ``G^{1/2} kron I``.  The residual
    is the worst reconstruction error over fresh validation points; it must
    stay below ``tol`` or the kernel is declared unrepresentable.
    """
    spec = realization.spec
    d, r = spec.d, spec.r
    probe = np.asarray(kernel(0.0), dtype=float)
    if probe.ndim != 2:
        raise ValueError("kernel must return a 2-D matrix")
    a, b = probe.shape
    n_samp = max(4 * d, 12)
    taus = _chebyshev_points(r, n_samp)
    design = spec.eval_f(taus).T  # (n_samp, d)
    rhs = np.empty((n_samp, a * b))
    for i, tau in enumerate(taus):
        rhs[i] = np.asarray(kernel(tau), dtype=float).ravel()
    sol, *_ = np.linalg.lstsq(design, rhs, rcond=None)  # (d, a*b)
    # raw layout [C^(1) ... C^(d)] with C^(k) the (a, b) coefficient of f_k
    raw = np.hstack([sol[k].reshape(a, b) for k in range(d)])
    packed = raw @ np.kron(realization.gram_sqrt, np.eye(b))
    # validate on a fresh uniform grid
    val_taus = np.linspace(-r, 0.0, 200)
    fnorm = realization.gram_inv_sqrt @ spec.eval_f(val_taus)  # (d, 200)
    residual = 0.0
    worst = (0, 0)
    for i, tau in enumerate(val_taus):
        fb = np.kron(fnorm[:, i].reshape(-1, 1), np.eye(b))
        err = np.abs(packed @ fb - np.asarray(kernel(tau), dtype=float))
        e = float(err.max())
        if e > residual:
            residual = e
            worst = np.unravel_index(int(err.argmax()), (a, b))
    if residual > tol:
        rates = sorted({t.rate for t in spec.terms})
        raise ValueError(
            f"kernel entry {worst} is not representable in the basis "
            f"(residual {residual:.3e} > tol {tol:.1e}); basis rates are "
            f"{rates} - add the missing exponential rates or polynomial "
            f"degrees of the kernel and rebuild"
        )
    return KernelDecomposition(coeffs=packed, residual=residual, kernel_cols=b)


def predictor_kernel(A, B, K, X, realization: KdrRealization, tol: float = 1e-8) -> KernelDecomposition:
    """Decomposition of ``[0  (KA - XK) exp(-A tau) B]`` as Gamma F(tau).

    The left ``n`` columns are structural zeros; only the input-driven part
    is fitted.  Fails when the basis lacks the modes of ``-A`` excited by
    ``B``.
    """
    A = linalg.as_matrix(A, "A")
    B = linalg.as_matrix(B, "B")
    K = linalg.as_matrix(K, "K")
    X = linalg.as_matrix(X, "X")
    n = A.shape[0]
    p = B.shape[1]
    if realization.nu != n + p:
        raise ValueError(
            f"realization has nu={realization.nu}, expected n+p={n + p}"
        )
    left = K @ A - X @ K

    def gpart(tau):
        return left @ linalg.expm(-A * tau) @ B

    part = fit_kernel(gpart, realization, tol=tol)
    d = realization.d
    gamma = np.zeros((p, d * realization.nu))
    for k in range(d):
        gamma[:, k * realization.nu + n : (k + 1) * realization.nu] = part.coeffs[
            :, k * p : (k + 1) * p
        ]
    return KernelDecomposition(coeffs=gamma, residual=part.residual, kernel_cols=realization.nu)


def weighted_integral_inequality_gap(
    y, g_basis: BasisSpec, Y, r: float, weight=None, n_quad: int = 240
) -> float:
    """Gap of the weighted least-squares integral inequality.

    For ``y : [-r, 0] -> R^nu``, a basis vector ``g`` with nonsingular
    weighted Gramian and ``Y > 0``, the inequality

        int w y^T Y y  >=  [int w (g kron I) y]^T (Gram^{-1} kron Y) [int w (g kron I) y]

    holds with equality iff ``Y^(1/2) y`` lies in the span of ``g``.  All
    integrals (including the Gramian) are evaluated with one Gauss-Legendre
    rule, which preserves the inequality at the discrete level.  Returns
    LHS - RHS.
    """
    Ym = linalg.symmetrize(Y, "Y")
    nodes, wts = np.polynomial.legendre.leggauss(n_quad)
    taus = -r / 2.0 * (1.0 - nodes)
    wts = wts * (r / 2.0)
    if weight is not None:
        wts = wts * np.asarray([float(weight(t)) for t in taus])
        if np.any(wts < 0):
            raise ValueError("weight function must be nonnegative")
    gv = g_basis.eval_f(taus)  # (d, nq)
    ys = np.column_stack([np.asarray(y(t), dtype=float).reshape(-1) for t in taus])
    lhs = float(np.sum(wts * np.einsum("in,ij,jn->n", ys, Ym, ys)))
    gram = (gv * wts) @ gv.T
    proj = (gv * wts) @ ys.T  # (d, nu): rows int w g_k y^T
    rhs = float(np.trace(np.linalg.solve(gram, proj) @ Ym @ proj.T))
    return lhs - rhs
