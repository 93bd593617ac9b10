"""Iterative inner convex approximation of the bilinear synthesis condition.

The dissipation inequality couples the functional variables (P, Q) with the
gains bilinearly through Sy(P_bold' B K_ext).  Around a feasible anchor
(tilde point) the bilinear term admits a positive-semidefinite
overestimate

    Sy(Pt'N + P'Nt - Pt'Nt) + [P - Pt; N - Nt]' [Z + (I-Z)]^{-1} [*]

whose Schur-complement lift is one joint LMI in all variables plus the new
slack Z.  Each sweep solves one SDP that minimizes the performance level
plus proximal penalties on the move away from the anchor, then re-anchors.
Feasibility of the anchor itself (with Z = I/2) guarantees every subproblem
is solvable, so the achieved gamma sequence never increases.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import basis as basis_mod
from . import sdp, synthesis
from .plant import ControllerGains, KfCertificate, PlantModel, SupplyRate
from .synthesis import (
    InfeasibleSynthesis,
    LmiBuilder,
    SynthesisError,
    strictness_margin,
)

__all__ = [
    "IcaConfig",
    "IcaState",
    "IterationRecord",
    "SynthesisResult",
    "psd_overestimate_lmi",
    "overestimate_gap",
    "ica_iterate",
    "run",
]


@dataclass
class IcaConfig:
    rho1: float = 1e-3
    rho2: float = 1e-3
    eps: float = 1e-10
    max_iters: int = 100
    z_init: str = "half_identity"
    corner_mode: str = "j1"
    sdp_tol: float = 1e-8
    sdp_max_iter: int = 100

    def __post_init__(self):
        if self.rho1 <= 0 or self.rho2 <= 0:
            raise ValueError("rho1 and rho2 must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


@dataclass
class IcaState:
    """Anchor point of the current overestimate plus the iteration trace."""

    Lambda_tilde: np.ndarray  # nu x (nu + d*nu), i.e. [P Q]
    K_tilde: np.ndarray       # p x l, i.e. [K1 K2 K3 0]
    Z: np.ndarray
    gamma_trace: list[float] = field(default_factory=list)
    iter: int = 0


@dataclass
class IterationRecord:
    iteration: int
    gamma: float
    delta_lambda: float
    delta_k: float
    sdp_status: str
    solve_time: float
    theta_max_eig: float


@dataclass
class SynthesisResult:
    gains: ControllerGains
    certificate: KfCertificate
    gamma_trace: list[float]
    stop_reason: str
    records: list[IterationRecord]
    state: IcaState


def _k_ext(gains: ControllerGains, q: int, m: int) -> np.ndarray:
    return np.hstack([gains.K1, gains.K2, gains.K3,
                      np.zeros((gains.K1.shape[0], q + m))])


def _lambda_of(cert: KfCertificate) -> np.ndarray:
    return np.hstack([cert.P, cert.Q])


def overestimate_gap(G, Gt, N, Nt, Z) -> float:
    """Min eigenvalue of (overestimate - exact term); >= 0 for 0 < Z < I.

    Evaluates Delta(G, Gt, N, Nt) - T - Sy(G'N) with the common T cancelled:
    the quadratic form in the increments minus Sy((G-Gt)'(N-Nt)).
    """
    G, Gt, N, Nt, Z = (np.asarray(a, dtype=float) for a in (G, Gt, N, Nt, Z))
    nu = Z.shape[0]
    dg = G - Gt
    dn = N - Nt
    gap = dg.T @ np.linalg.solve(Z, dg) + dn.T @ np.linalg.solve(np.eye(nu) - Z, dn)
    cross = dg.T @ dn
    gap -= cross + cross.T
    return float(np.linalg.eigvalsh(0.5 * (gap + gap.T)).min())


def psd_overestimate_lmi(asm: synthesis.LmiAssembly, supply: SupplyRate,
                         layout: synthesis.VariableLayout,
                         lambda_tilde: np.ndarray, k_tilde: np.ndarray,
                         fixed: dict | None = None,
                         corner_mode: str = "j1") -> LmiBuilder:
    """The Schur-lifted overestimate LMI (size l + 2 nu, negative definite).

    Top-left: Theta_hat + Sy(Pt'N + P'Nt - Pt'Nt); borders P' - Pt' and
    N' - Nt'; corners -Z and Z - I.
    """
    nu, q, m, l = asm.nu, asm.q, asm.m, asm.l
    dnu = asm.d * nu
    if lambda_tilde.shape != (nu, nu + dnu):
        raise ValueError(f"lambda_tilde must be {nu}x{nu + dnu}")
    if k_tilde.shape != (asm.p, l):
        raise ValueError(f"k_tilde must be {asm.p}x{l}")
    big = l + 2 * nu
    e1 = np.vstack([np.eye(l), np.zeros((2 * nu, l))])
    e2 = np.zeros((big, nu)); e2[l : l + nu] = np.eye(nu)
    e3 = np.zeros((big, nu)); e3[l + nu :] = np.eye(nu)
    b = LmiBuilder(layout, big, fixed)
    synthesis.add_theta_hat_terms(b, asm, supply, embed=e1, corner_mode=corner_mode)

    sel = synthesis._selectors(asm, l)
    e_chi = e1 @ sel["chi"]
    e_chir = e1 @ sel["chir"]
    e_eta = e1 @ sel["eta"]
    pt_bold = np.zeros((nu, l))
    pt_bold[:, :nu] = lambda_tilde[:, :nu]
    pt_bold[:, 2 * nu : 2 * nu + dnu] = lambda_tilde[:, nu:]
    n_tilde = asm.bold_B @ k_tilde  # nu x l

    # Sy(Pt' N) with N = B K_ext affine in the gains
    lp = e1 @ pt_bold.T @ asm.bold_B  # big x p
    b.add_sy(lp, "K1", e_chi.T)
    b.add_sy(lp, "K2", e_chir.T)
    b.add_sy(lp, "K3", e_eta.T)
    # Sy(P' Nt) with P_bold affine in (P, Q)
    nt_ext = n_tilde @ e1.T  # nu x big
    b.add_sy(e_chi, "P", nt_ext)
    b.add_sy(e_eta, "Q", nt_ext, transpose=True)
    # constant -Sy(Pt' Nt)
    b.add_sy_const(-e1 @ pt_bold.T @ n_tilde @ e1.T)
    # border (1,2): P_bold' - Pt_bold'
    b.add_sy(e_chi, "P", e2.T)
    b.add_sy(e_eta, "Q", e2.T, transpose=True)
    b.add_sy_const(-e1 @ pt_bold.T @ e2.T)
    # border (1,3): N' - Nt'
    bt_e3 = asm.bold_B.T @ e3.T  # p x big
    b.add_sy(e_chi, "K1", bt_e3, transpose=True)
    b.add_sy(e_chir, "K2", bt_e3, transpose=True)
    b.add_sy(e_eta, "K3", bt_e3, transpose=True)
    b.add_sy_const(-e1 @ n_tilde.T @ e3.T)
    # corners -Z and Z - I
    b.add_sy(-0.5 * e2, "Z", e2.T)
    b.add_sy(0.5 * e3, "Z", e3.T)
    b.add_const(-e3 @ e3.T)
    return b


def _ica_layout(asm: synthesis.LmiAssembly) -> synthesis.VariableLayout:
    nu, d, p = asm.nu, asm.d, asm.p
    dnu = d * nu
    n_lam = nu * (nu + 1) // 2 + nu * dnu
    n_k = 2 * p * nu + p * dnu
    return synthesis.VariableLayout([
        ("P", "sym", (nu, nu)),
        ("Q", "full", (nu, dnu)),
        ("R", "sym", (dnu, dnu)),
        ("S", "sym", (nu, nu)),
        ("U", "sym", (nu, nu)),
        ("K1", "full", (p, nu)),
        ("K2", "full", (p, nu)),
        ("K3", "full", (p, dnu)),
        ("gamma", "scalar", (1, 1)),
        ("Z", "sym", (nu, nu)),
        ("t_lam", "full", (1, n_lam)),
        ("t_k", "full", (1, n_k)),
    ])


def _proximal_blocks(layout: synthesis.VariableLayout, asm: synthesis.LmiAssembly,
                     lambda_tilde: np.ndarray, k_tilde: np.ndarray):
    """Epigraph blocks t_j >= (v_j - vt_j)^2 plus objective weights.

    Off-diagonal entries of the symmetric P block carry weight 2 so the sum
    of the t variables equals the squared Frobenius norm of the move.
    """
    nu, d, p = asm.nu, asm.d, asm.p
    dnu = d * nu
    n = layout.size
    blocks = []
    weights_lam = []
    weights_k = []

    def epigraph(t_index: int, v_index: int, v_tilde: float):
        co = np.zeros((n, 2, 2))
        co[t_index, 0, 0] = 1.0
        co[v_index, 0, 1] = 1.0
        co[v_index, 1, 0] = 1.0
        f0 = np.array([[0.0, -v_tilde], [-v_tilde, 1.0]])
        blocks.append(sdp.SdpBlock(F0=f0, coeffs=co))

    t_lam_off = layout.blocks["t_lam"].offset
    j = 0
    p_off = layout.blocks["P"].offset
    for i in range(nu):
        for k in range(i, nu):
            epigraph(t_lam_off + j, p_off + synthesis.VariableLayout._tri_index(i, k, nu),
                     lambda_tilde[i, k])
            weights_lam.append(1.0 if i == k else 2.0)
            j += 1
    q_off = layout.blocks["Q"].offset
    qt = lambda_tilde[:, nu:]
    for i in range(nu):
        for k in range(dnu):
            epigraph(t_lam_off + j, q_off + i * dnu + k, qt[i, k])
            weights_lam.append(1.0)
            j += 1
    t_k_off = layout.blocks["t_k"].offset
    j = 0
    for name, width, col0 in (("K1", nu, 0), ("K2", nu, nu), ("K3", dnu, 2 * nu)):
        off = layout.blocks[name].offset
        for i in range(p):
            for k in range(width):
                epigraph(t_k_off + j, off + i * width + k, k_tilde[i, col0 + k])
                weights_k.append(1.0)
                j += 1
    return blocks, np.array(weights_lam), np.array(weights_k)


def ica_iterate(plant: PlantModel, realization: basis_mod.KdrRealization,
                supply: SupplyRate, state: IcaState, config: IcaConfig,
                c3_decomposition: basis_mod.KernelDecomposition | None = None,
                asm: synthesis.LmiAssembly | None = None,
                ) -> tuple[ControllerGains, KfCertificate, IcaState, IterationRecord]:
    """One sweep: solve the lifted LMI at the anchor, then re-anchor."""
    if asm is None:
        if c3_decomposition is None:
            c3_decomposition = basis_mod.fit_kernel(plant.dd_output_kernel, realization)
        asm = synthesis.assemble(plant, realization, c3_decomposition)
    layout = _ica_layout(asm)
    t0 = time.perf_counter()
    blocks = []
    for builder in synthesis.build_14a(asm, layout):
        margin = strictness_margin(builder.const)
        blocks.append(builder.to_block(negate=False, shift=-margin))
    lifted = psd_overestimate_lmi(asm, supply, layout, state.Lambda_tilde,
                                  state.K_tilde, corner_mode=config.corner_mode)
    margin_l = strictness_margin(lifted.const)
    blocks.append(lifted.to_block(negate=True, shift=-margin_l))
    nu = asm.nu
    z_margin = 1e-6
    zb = LmiBuilder(layout, nu)
    zb.add_sy(0.5 * np.eye(nu), "Z", np.eye(nu))
    blocks.append(zb.to_block(shift=-z_margin))
    izb = LmiBuilder(layout, nu)
    izb.add_const(np.eye(nu))
    izb.add_sy(-0.5 * np.eye(nu), "Z", np.eye(nu))
    blocks.append(izb.to_block(shift=-z_margin))
    prox_blocks, w_lam, w_k = _proximal_blocks(layout, asm, state.Lambda_tilde,
                                               state.K_tilde)
    blocks.extend(prox_blocks)

    c = np.zeros(layout.size)
    c[layout.blocks["gamma"].offset] = 1.0
    tl = layout.blocks["t_lam"]
    c[tl.offset : tl.offset + tl.size] = config.rho1 * w_lam
    tk = layout.blocks["t_k"]
    c[tk.offset : tk.offset + tk.size] = config.rho2 * w_k

    sol = sdp.solve(sdp.SdpProblem(c=c, blocks=blocks),
                    tol=config.sdp_tol, max_iter=config.sdp_max_iter)
    if sol.status == "infeasible":
        raise InfeasibleSynthesis(
            "overestimate subproblem infeasible despite feasible anchor "
            f"(iteration {state.iter + 1}): {sol.message}", sol)
    if sol.status != "optimal":
        raise SynthesisError(
            f"subproblem solve failed at iteration {state.iter + 1} "
            f"(status={sol.status}: {sol.message})")
    vals = layout.unpack(sol.x)
    gains = ControllerGains(K1=vals["K1"], K2=vals["K2"], K3=vals["K3"],
                            d=asm.d, nu=asm.nu, gamma=vals["gamma"])
    cert = KfCertificate(P=vals["P"], Q=vals["Q"], R=vals["R"], S=vals["S"],
                         U=vals["U"], gamma=vals["gamma"], d=asm.d, nu=asm.nu)
    theta = synthesis.evaluate_theta(asm, supply, cert, gains,
                                     corner_mode=config.corner_mode)
    theta_max = float(np.linalg.eigvalsh(0.5 * (theta + theta.T)).max())
    new_lambda = _lambda_of(cert)
    new_k = _k_ext(gains, asm.q, asm.m)
    rec = IterationRecord(
        iteration=state.iter + 1,
        gamma=vals["gamma"],
        delta_lambda=float(np.linalg.norm(new_lambda - state.Lambda_tilde)),
        delta_k=float(np.linalg.norm(new_k - state.K_tilde)),
        sdp_status=sol.status,
        solve_time=time.perf_counter() - t0,
        theta_max_eig=theta_max,
    )
    new_state = IcaState(
        Lambda_tilde=new_lambda, K_tilde=new_k, Z=vals["Z"],
        gamma_trace=state.gamma_trace + [vals["gamma"]],
        iter=state.iter + 1,
    )
    return gains, cert, new_state, rec


def run(plant: PlantModel, realization: basis_mod.KdrRealization,
        supply: SupplyRate, warm_gains: ControllerGains, config: IcaConfig,
        c3_decomposition: basis_mod.KernelDecomposition | None = None,
        log_path=None) -> SynthesisResult:
    """Full refinement: certificate solve, gain re-solve, then the sweep loop."""
    if c3_decomposition is None:
        c3_decomposition = basis_mod.fit_kernel(plant.dd_output_kernel, realization)
    asm = synthesis.assemble(plant, realization, c3_decomposition)
    cert0 = synthesis.analysis_solve(plant, realization, warm_gains, supply,
                                     c3_decomposition,
                                     corner_mode=config.corner_mode,
                                     options={"tol": config.sdp_tol})
    gains, cert = synthesis.gain_solve(plant, realization, cert0.P, cert0.Q,
                                       supply, c3_decomposition,
                                       corner_mode=config.corner_mode,
                                       options={"tol": config.sdp_tol})
    nu = asm.nu
    state = IcaState(
        Lambda_tilde=_lambda_of(cert),
        K_tilde=_k_ext(gains, asm.q, asm.m),
        Z=0.5 * np.eye(nu) if config.z_init == "half_identity" else np.eye(nu) * 0.5,
        gamma_trace=[cert.gamma],
    )
    records: list[IterationRecord] = []
    stop_reason = "max_iters"
    for _ in range(config.max_iters):
        prev_v = np.concatenate([state.Lambda_tilde.ravel(), state.K_tilde.ravel()])
        gains, cert, state, rec = ica_iterate(
            plant, realization, supply, state, config, c3_decomposition, asm)
        records.append(rec)
        new_v = np.concatenate([state.Lambda_tilde.ravel(), state.K_tilde.ravel()])
        rel_change = (np.abs(new_v - prev_v).max()
                      / (np.abs(prev_v).max() + 1.0))
        if rel_change < config.eps:
            stop_reason = "converged"
            break
    if log_path is not None:
        write_iteration_csv(log_path, records)
    return SynthesisResult(gains=gains, certificate=cert,
                           gamma_trace=state.gamma_trace,
                           stop_reason=stop_reason, records=records, state=state)


def write_iteration_csv(path, records: list[IterationRecord]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "gamma", "delta_lambda", "delta_k", "sdp_status",
                    "solve_time"])
        for r in records:
            w.writerow([r.iteration, repr(r.gamma), repr(r.delta_lambda),
                        repr(r.delta_k), r.sdp_status, f"{r.solve_time:.4f}"])
