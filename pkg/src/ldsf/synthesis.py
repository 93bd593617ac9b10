"""Assembly and solution of the dissipative-synthesis matrix inequalities.

The certificate variables are a quadratic Krasovskii functional
(P, Q, R, S, U) and the feedback gains (K1, K2, K3); the conditions are

  (i)  [[P, Q], [Q', R + I_d kron S]] > 0,  S > 0,  U > 0
  (ii) Theta(P, Q, R, S, U, K; gamma) < 0

where Theta couples the closed-loop dynamics with the supply rate and is
bilinear in (P, Q) x K.  With either side frozen the conditions are linear
matrix inequalities; both convex sub-solves are provided here, and the
iterative refinement module alternates/overestimates around the bilinear
form.  Strict inequalities carry an explicit margin so certificates can be
re-verified independently after the fact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import basis as basis_mod
from . import sdp
from .plant import ControllerGains, KfCertificate, PlantModel, SupplyRate

__all__ = [
    "LmiAssembly",
    "VariableLayout",
    "LmiBuilder",
    "assemble",
    "variable_count",
    "enumerate_variable_count",
    "theorem1_layout",
    "build_14a",
    "build_14b",
    "evaluate_theta",
    "evaluate_14a",
    "analysis_solve",
    "gain_solve",
    "SynthesisError",
    "InfeasibleSynthesis",
    "strictness_margin",
]


class SynthesisError(RuntimeError):
    pass


class InfeasibleSynthesis(SynthesisError):
    def __init__(self, message: str, solution: sdp.SdpSolution | None = None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class LmiAssembly:
    """Constant matrices of the synthesis conditions for one plant/basis pair."""

    bold_A: np.ndarray  # nu x ltilde
    bold_B: np.ndarray  # nu x p
    bold_F: np.ndarray  # d*nu x ltilde
    Sigma: np.ndarray   # m x ltilde
    n: int
    p: int
    q: int
    m: int
    nu: int
    d: int
    r: float

    @property
    def ltilde(self) -> int:
        return 2 * self.nu + self.d * self.nu + self.q

    @property
    def l(self) -> int:
        return self.ltilde + self.m

    def col_slices(self) -> dict:
        nu, dnu, q, m = self.nu, self.d * self.nu, self.q, self.m
        out = {}
        off = 0
        for name, width in (("chi", nu), ("chir", nu), ("eta", dnu),
                            ("w", q), ("zeta", m)):
            out[name] = slice(off, off + width)
            off += width
        return out


def assemble(plant: PlantModel, realization: basis_mod.KdrRealization,
             c3_decomposition: basis_mod.KernelDecomposition) -> LmiAssembly:
    """Build the constant closed-loop matrices from a plant and kernel basis."""
    n, p, q, m, nu = plant.n, plant.p, plant.q, plant.m, plant.nu
    d = realization.d
    if realization.nu != nu:
        raise ValueError(f"realization nu={realization.nu} does not match plant nu={nu}")
    if c3_decomposition.coeffs.shape != (m, d * nu):
        raise ValueError(
            f"output-kernel coefficients must be {m}x{d * nu}, "
            f"got {c3_decomposition.coeffs.shape}"
        )
    dnu = d * nu
    ltilde = 2 * nu + dnu + q
    bold_a = np.zeros((nu, ltilde))
    bold_a[:n, :n] = plant.A
    bold_a[:n, nu + n : 2 * nu] = plant.B
    bold_a[:n, 2 * nu + dnu :] = plant.D1
    bold_a[n:, 2 * nu + dnu :] = plant.D2
    bold_b = np.vstack([np.zeros((n, p)), np.eye(p)])
    bold_f = np.zeros((dnu, ltilde))
    bold_f[:, :nu] = realization.eval_F(0.0)
    bold_f[:, nu : 2 * nu] = -realization.eval_F(-plant.r)
    bold_f[:, 2 * nu : 2 * nu + dnu] = -np.kron(realization.normalized_companion(),
                                                np.eye(nu))
    sigma = np.zeros((m, ltilde))
    sigma[:, :nu] = plant.C1
    sigma[:, nu : 2 * nu] = plant.C2
    sigma[:, 2 * nu : 2 * nu + dnu] = c3_decomposition.coeffs
    sigma[:, 2 * nu + dnu :] = plant.D3
    return LmiAssembly(bold_A=bold_a, bold_B=bold_b, bold_F=bold_f, Sigma=sigma,
                       n=n, p=p, q=q, m=m, nu=nu, d=d, r=plant.r)


def variable_count(d: int, nu: int, p: int) -> int:
    """Closed-form count of certificate + gain unknowns (gamma excluded)."""
    if min(d, nu, p) < 1:
        raise ValueError("dimensions must be positive")
    return round((0.5 * d * d + d + 1.5) * nu * nu
                 + (0.5 * d + p * d + 2 * p + 1.5) * nu)


def enumerate_variable_count(d: int, nu: int, p: int) -> int:
    """Same count by explicit enumeration of the variable blocks."""
    sym = lambda s: s * (s + 1) // 2
    return (sym(nu) + nu * (d * nu) + sym(d * nu) + sym(nu) + sym(nu)
            + p * nu + p * nu + p * d * nu)


# ---------------------------------------------------------------------------
# variable layout and affine-LMI builder


@dataclass(frozen=True)
class _VarBlock:
    name: str
    kind: str  # "sym" | "full" | "scalar"
    shape: tuple[int, int]
    offset: int

    @property
    def size(self) -> int:
        a, b = self.shape
        if self.kind == "sym":
            return a * (a + 1) // 2
        if self.kind == "scalar":
            return 1
        return a * b


class VariableLayout:
    """Index map from named matrix variables into one flat vector."""

    def __init__(self, spec: list[tuple[str, str, tuple[int, int]]]):
        self.blocks: dict[str, _VarBlock] = {}
        off = 0
        for name, kind, shape in spec:
            blk = _VarBlock(name=name, kind=kind, shape=shape, offset=off)
            self.blocks[name] = blk
            off += blk.size
        self.size = off

    def names(self):
        return list(self.blocks)

    def __contains__(self, name: str) -> bool:
        return name in self.blocks

    @staticmethod
    def _tri_index(i: int, j: int, s: int) -> int:
        # upper-triangle row-major position of (i, j) with i <= j
        return i * s - i * (i - 1) // 2 + (j - i)

    def pack(self, values: dict) -> np.ndarray:
        x = np.zeros(self.size)
        for name, blk in self.blocks.items():
            v = np.asarray(values[name], dtype=float)
            if blk.kind == "scalar":
                x[blk.offset] = float(v)
                continue
            a, b = blk.shape
            if blk.kind == "sym":
                iu = np.triu_indices(a)
                x[blk.offset : blk.offset + blk.size] = v[iu]
            else:
                x[blk.offset : blk.offset + blk.size] = v.reshape(a * b)
        return x

    def unpack(self, x: np.ndarray) -> dict:
        out = {}
        for name, blk in self.blocks.items():
            seg = x[blk.offset : blk.offset + blk.size]
            if blk.kind == "scalar":
                out[name] = float(seg[0])
            elif blk.kind == "sym":
                a = blk.shape[0]
                m = np.zeros((a, a))
                iu = np.triu_indices(a)
                m[iu] = seg
                m = m + m.T - np.diag(np.diag(m))
                out[name] = m
            else:
                out[name] = seg.reshape(blk.shape)
        return out


class LmiBuilder:
    """Accumulates an affine symmetric matrix expression over a layout.

    Variables not present in the layout must be supplied as fixed numeric
    values; their contributions land in the constant term.
    """

    def __init__(self, layout: VariableLayout, size: int, fixed: dict | None = None):
        self.layout = layout
        self.s = size
        self.fixed = fixed or {}
        self.const = np.zeros((size, size))
        self.coef = np.zeros((layout.size, size, size))

    def _resolve(self, name: str):
        if name in self.layout:
            return None
        if name in self.fixed:
            return np.asarray(self.fixed[name], dtype=float)
        raise KeyError(f"variable {name!r} is neither free nor fixed")

    def add_const(self, mat) -> None:
        self.const += np.asarray(mat, dtype=float)

    def add_sy_const(self, mat) -> None:
        m = np.asarray(mat, dtype=float)
        self.const += m + m.T

    def add_scalar_term(self, name: str, mat) -> None:
        """Add value(name) * mat for a scalar variable."""
        m = np.asarray(mat, dtype=float)
        fixed = self._resolve(name)
        if fixed is not None:
            self.const += float(fixed) * m
            return
        blk = self.layout.blocks[name]
        self.coef[blk.offset] += m

    def add_sy(self, L, name: str, R, transpose: bool = False) -> None:
        """Add Sy(L @ V @ R) (or Sy(L @ V' @ R)) for matrix variable V."""
        L = np.asarray(L, dtype=float)
        R = np.asarray(R, dtype=float)
        fixed = self._resolve(name)
        if fixed is not None:
            v = fixed.T if transpose else fixed
            t = L @ v @ R
            self.const += t + t.T
            return
        blk = self.layout.blocks[name]
        a, b = blk.shape
        if transpose:
            # coefficient of V[alpha, beta] is Sy(L[:, beta] outer R[alpha, :])
            t = np.einsum("ib,aj->abij", L, R)
        else:
            t = np.einsum("ia,bj->abij", L, R)
        t = t + np.transpose(t, (0, 1, 3, 2))
        if blk.kind == "sym":
            s = a
            for i in range(s):
                for j in range(i, s):
                    k = blk.offset + VariableLayout._tri_index(i, j, s)
                    self.coef[k] += t[i, j]
                    if i != j:
                        self.coef[k] += t[j, i]
        elif blk.kind == "full":
            self.coef[blk.offset : blk.offset + a * b] += t.reshape(a * b, self.s, self.s)
        else:
            raise ValueError(f"add_sy does not apply to scalar variable {name!r}")

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.const + np.tensordot(x, self.coef, axes=(0, 0))

    def to_block(self, negate: bool = False, shift: float = 0.0) -> sdp.SdpBlock:
        """Export as an SDP block ``const + sum x_i coef_i (+ shift I) >= 0``."""
        sign = -1.0 if negate else 1.0
        f0 = sign * self.const + shift * np.eye(self.s)
        return sdp.SdpBlock(F0=0.5 * (f0 + f0.T), coeffs=sign * self.coef)


def strictness_margin(const_term: np.ndarray) -> float:
    """Margin used to encode strict definiteness: 1e-6 * (1 + |const|_F)."""
    return 1e-6 * (1.0 + float(np.linalg.norm(const_term, "fro")))


def theorem1_layout(asm: LmiAssembly, free: tuple[str, ...],
                    with_gamma: bool) -> VariableLayout:
    nu, d, p = asm.nu, asm.d, asm.p
    dnu = d * nu
    spec_all = {
        "P": ("sym", (nu, nu)),
        "Q": ("full", (nu, dnu)),
        "R": ("sym", (dnu, dnu)),
        "S": ("sym", (nu, nu)),
        "U": ("sym", (nu, nu)),
        "K1": ("full", (p, nu)),
        "K2": ("full", (p, nu)),
        "K3": ("full", (p, dnu)),
    }
    spec = [(name, *spec_all[name]) for name in
            ("P", "Q", "R", "S", "U", "K1", "K2", "K3") if name in free]
    if with_gamma:
        spec.append(("gamma", "scalar", (1, 1)))
    return VariableLayout(spec)


def _selectors(asm: LmiAssembly, size: int) -> dict:
    """Column-embedding matrices for each block of the Theta coordinates."""
    cols = asm.col_slices()
    out = {}
    for name, sl in cols.items():
        e = np.zeros((size, sl.stop - sl.start))
        e[sl, :] = np.eye(sl.stop - sl.start)
        out[name] = e
    return out


def build_14a(asm: LmiAssembly, layout: VariableLayout,
              fixed: dict | None = None) -> list[LmiBuilder]:
    """Positivity conditions: the coupled (P, Q, R, S) block plus S, U."""
    nu, d = asm.nu, asm.d
    dnu = d * nu
    top = LmiBuilder(layout, nu + dnu, fixed)
    e1 = np.vstack([np.eye(nu), np.zeros((dnu, nu))])
    e2 = np.vstack([np.zeros((nu, dnu)), np.eye(dnu)])
    top.add_sy(0.5 * e1, "P", e1.T)
    top.add_sy(e1, "Q", e2.T)
    top.add_sy(0.5 * e2, "R", e2.T)
    for j in range(d):
        ej = e2[:, j * nu : (j + 1) * nu]
        top.add_sy(0.5 * ej, "S", ej.T)
    s_blk = LmiBuilder(layout, nu, fixed)
    s_blk.add_sy(0.5 * np.eye(nu), "S", np.eye(nu))
    u_blk = LmiBuilder(layout, nu, fixed)
    u_blk.add_sy(0.5 * np.eye(nu), "U", np.eye(nu))
    return [top, s_blk, u_blk]


def add_theta_hat_terms(b: LmiBuilder, asm: LmiAssembly, supply: SupplyRate,
                        embed: np.ndarray | None = None,
                        corner_mode: str = "j1") -> None:
    """All Theta terms except the bilinear coupling Sy(P_bold' B K_ext).

    ``embed`` places the l x l expression inside a larger block (used by the
    lifted overestimate LMI); default is the identity embedding.
    """
    nu, d, q, m, r = asm.nu, asm.d, asm.q, asm.m, asm.r
    dnu = d * nu
    l = asm.l
    sel = _selectors(asm, l)
    if embed is None:
        embed = np.eye(l)
    e_chi, e_chir, e_eta, e_w, e_z = (embed @ sel["chi"], embed @ sel["chir"],
                                      embed @ sel["eta"], embed @ sel["w"],
                                      embed @ sel["zeta"])
    f_ext = np.hstack([asm.bold_F, np.zeros((dnu, m))]) @ embed.T
    a_ext = np.hstack([asm.bold_A, np.zeros((nu, m))]) @ embed.T
    b.add_sy(e_chi, "P", a_ext)
    b.add_sy(e_eta, "Q", a_ext, transpose=True)
    b.add_sy(e_chi, "Q", f_ext)
    b.add_sy(e_eta, "R", f_ext)
    # diagonal: (S + rU) on chi, -S on chi(t-r), -(I_d kron U) on eta
    b.add_sy(0.5 * e_chi, "S", e_chi.T)
    b.add_sy(0.5 * r * e_chi, "U", e_chi.T)
    b.add_sy(-0.5 * e_chir, "S", e_chir.T)
    for j in range(d):
        ej = e_eta[:, j * nu : (j + 1) * nu]
        b.add_sy(-0.5 * ej, "U", ej.T)
    # supply terms
    sigma_ext = np.hstack([asm.Sigma, np.zeros((m, m))]) @ embed.T
    if supply.gamma_is_variable:
        if "gamma" not in b.layout and "gamma" not in b.fixed:
            raise SynthesisError("variable-gamma supply requires a gamma variable")
        b.add_scalar_term("gamma", -(e_w @ e_w.T))  # -J3 = -gamma I_q
        b.add_scalar_term("gamma", -(e_z @ e_z.T))  # J1 = -gamma I_m
    else:
        b.add_const(-e_w @ supply.J3 @ e_w.T)
        if corner_mode == "j1":
            corner = supply.J1
        elif corner_mode == "j1_inv":
            corner = np.linalg.inv(supply.J1)
            corner = 0.5 * (corner + corner.T)
        else:
            raise ValueError(f"unknown corner_mode {corner_mode!r}")
        b.add_const(e_z @ corner @ e_z.T)
    b.add_sy_const(e_z @ supply.Jtilde @ sigma_ext)
    b.add_sy_const(-e_w @ supply.J2.T @ sigma_ext)


def build_14b(asm: LmiAssembly, supply: SupplyRate, layout: VariableLayout,
              fixed: dict | None = None, corner_mode: str = "j1") -> LmiBuilder:
    """The dissipation matrix Theta as an affine expression (one side fixed).

    ``corner_mode`` selects the lower-right diagonal block: ``"j1"`` uses J1
    (the Schur-complement form, default); ``"j1_inv"`` uses J1^{-1} and is
    only available for fixed supplies.
    """
    fixed = fixed or {}
    nu, q, m = asm.nu, asm.q, asm.m
    l = asm.l
    gains_free = any(k in layout for k in ("K1", "K2", "K3"))
    lambda_free = ("P" in layout) or ("Q" in layout)
    if gains_free and lambda_free:
        raise SynthesisError(
            "Theta is bilinear: freeze either the gains or (P, Q) "
            "(use the iterative refinement module for the joint problem)"
        )
    b = LmiBuilder(layout, l, fixed)
    add_theta_hat_terms(b, asm, supply, corner_mode=corner_mode)
    sel = _selectors(asm, l)
    e_chi, e_chir, e_eta = sel["chi"], sel["chir"], sel["eta"]
    if gains_free:
        pval = np.asarray(fixed["P"], dtype=float)
        qval = np.asarray(fixed["Q"], dtype=float)
        lp = e_chi @ pval @ asm.bold_B  # l x p
        lq = e_eta @ qval.T @ asm.bold_B
        for lmat in (lp, lq):
            b.add_sy(lmat, "K1", e_chi.T)
            b.add_sy(lmat, "K2", e_chir.T)
            b.add_sy(lmat, "K3", e_eta.T)
    else:
        k1 = np.asarray(fixed["K1"], dtype=float)
        k2 = np.asarray(fixed["K2"], dtype=float)
        k3 = np.asarray(fixed["K3"], dtype=float)
        k_ext = np.hstack([k1, k2, k3, np.zeros((asm.p, q + m))])
        bk = asm.bold_B @ k_ext
        b.add_sy(e_chi, "P", bk)
        b.add_sy(e_eta, "Q", bk, transpose=True)
    return b


# ---------------------------------------------------------------------------
# direct dense evaluation (used for post-hoc verification)


def evaluate_theta(asm: LmiAssembly, supply: SupplyRate, cert: KfCertificate,
                   gains: ControllerGains, corner_mode: str = "j1") -> np.ndarray:
    """Dense Theta at numeric values; independent of the builder path."""
    nu, d, q, m, r = asm.nu, asm.d, asm.q, asm.m, asm.r
    dnu = d * nu
    lt = asm.ltilde
    sup = supply.with_gamma(cert.gamma) if supply.gamma_is_variable else supply
    k_ext = np.hstack([gains.K1, gains.K2, gains.K3, np.zeros((asm.p, q))])
    pi = asm.bold_A + asm.bold_B @ k_ext
    lam_full = np.block([[cert.P, cert.Q], [cert.Q.T, cert.R]])
    e = np.zeros((nu + dnu, lt))
    e[:nu, :nu] = np.eye(nu)
    e[nu:, 2 * nu : 2 * nu + dnu] = np.eye(dnu)
    pif = np.vstack([pi, asm.bold_F])
    big = e.T @ lam_full @ pif
    psi = big + big.T
    psi[:nu, :nu] += cert.S + r * cert.U
    psi[nu : 2 * nu, nu : 2 * nu] -= cert.S
    psi[2 * nu : 2 * nu + dnu, 2 * nu : 2 * nu + dnu] -= np.kron(np.eye(d), cert.U)
    psi[2 * nu + dnu :, 2 * nu + dnu :] -= sup.J3
    wsel = np.zeros((q, lt))
    wsel[:, 2 * nu + dnu :] = np.eye(q)
    cross = asm.Sigma.T @ sup.J2 @ wsel
    psi -= cross + cross.T
    if corner_mode == "j1":
        corner = sup.J1
    else:
        corner = np.linalg.inv(sup.J1)
        corner = 0.5 * (corner + corner.T)
    return np.block([[psi, asm.Sigma.T @ sup.Jtilde.T],
                     [sup.Jtilde @ asm.Sigma, corner]])


def evaluate_14a(cert: KfCertificate, d: int) -> list[np.ndarray]:
    top = np.block([[cert.P, cert.Q],
                    [cert.Q.T, cert.R + np.kron(np.eye(d), cert.S)]])
    return [top, cert.S, cert.U]


# ---------------------------------------------------------------------------
# convex sub-solves


def _gamma_objective(layout: VariableLayout) -> np.ndarray:
    c = np.zeros(layout.size)
    if "gamma" in layout:
        c[layout.blocks["gamma"].offset] = 1.0
    return c


def _solve_theorem1(asm: LmiAssembly, supply: SupplyRate, layout: VariableLayout,
                    fixed: dict, corner_mode: str, options: dict | None):
    opts = {"tol": 1e-8, "max_iter": 100}
    opts.update(options or {})
    blocks = []
    for builder in build_14a(asm, layout, fixed):
        margin = strictness_margin(builder.const)
        blocks.append(builder.to_block(negate=False, shift=-margin))
    theta = build_14b(asm, supply, layout, fixed, corner_mode)
    margin = strictness_margin(theta.const)
    blocks.append(theta.to_block(negate=True, shift=-margin))
    problem = sdp.SdpProblem(c=_gamma_objective(layout), blocks=blocks)
    sol = sdp.solve(problem, **opts)
    if sol.status == "infeasible":
        raise InfeasibleSynthesis(
            f"synthesis conditions infeasible: {sol.message}", sol)
    if sol.status not in ("optimal",):
        raise SynthesisError(
            f"solver did not converge (status={sol.status}: {sol.message})")
    return sol, problem


def analysis_solve(plant: PlantModel, realization: basis_mod.KdrRealization,
                   gains: ControllerGains, supply: SupplyRate,
                   c3_decomposition: basis_mod.KernelDecomposition | None = None,
                   corner_mode: str = "j1",
                   options: dict | None = None) -> KfCertificate:
    """Certificate search with the gains fixed (minimizes gamma if variable)."""
    if c3_decomposition is None:
        c3_decomposition = basis_mod.fit_kernel(plant.dd_output_kernel, realization)
    asm = assemble(plant, realization, c3_decomposition)
    layout = theorem1_layout(asm, ("P", "Q", "R", "S", "U"),
                             with_gamma=supply.gamma_is_variable)
    fixed = {"K1": gains.K1, "K2": gains.K2, "K3": gains.K3}
    sol, _ = _solve_theorem1(asm, supply, layout, fixed, corner_mode, options)
    vals = layout.unpack(sol.x)
    return KfCertificate(
        P=vals["P"], Q=vals["Q"], R=vals["R"], S=vals["S"], U=vals["U"],
        gamma=vals.get("gamma", float("nan")), d=asm.d, nu=asm.nu)


def gain_solve(plant: PlantModel, realization: basis_mod.KdrRealization,
               P, Q, supply: SupplyRate,
               c3_decomposition: basis_mod.KernelDecomposition | None = None,
               corner_mode: str = "j1",
               options: dict | None = None) -> tuple[ControllerGains, KfCertificate]:
    """Gain search with the functional coupling (P, Q) frozen."""
    if c3_decomposition is None:
        c3_decomposition = basis_mod.fit_kernel(plant.dd_output_kernel, realization)
    asm = assemble(plant, realization, c3_decomposition)
    layout = theorem1_layout(asm, ("R", "S", "U", "K1", "K2", "K3"),
                             with_gamma=supply.gamma_is_variable)
    fixed = {"P": np.asarray(P, dtype=float), "Q": np.asarray(Q, dtype=float)}
    sol, _ = _solve_theorem1(asm, supply, layout, fixed, corner_mode, options)
    vals = layout.unpack(sol.x)
    gains = ControllerGains(K1=vals["K1"], K2=vals["K2"], K3=vals["K3"],
                            d=asm.d, nu=asm.nu,
                            gamma=vals.get("gamma"))
    cert = KfCertificate(
        P=fixed["P"], Q=fixed["Q"], R=vals["R"], S=vals["S"], U=vals["U"],
        gamma=vals.get("gamma", float("nan")), d=asm.d, nu=asm.nu)
    return gains, cert
