"""Command-line front end.

Subcommands:
  synthesize  warm-start construction, certificate analysis, or the full
              iterative refinement; writes gains/certificate JSON, the
              per-iteration CSV and a plain-text report
  simulate    closed-loop trajectory CSV plus summary metrics
  spectrum    spectral abscissa of the nominal closed loop
  validate    re-verification of a gains/certificate pair

Exit codes: 0 success, 2 problem-file error, 3 infeasible, 4 solver
failure, 5 simulation blow-up.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import basis as basis_mod
from . import fileio, ica, sdp, simulator, spectrum, synthesis, warm_start
from .fileio import ProblemFormatError
from .plant import validate_plant
from .synthesis import InfeasibleSynthesis, SynthesisError

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4
EXIT_BLOWUP = 5


def _load(path, delta):
    problem = fileio.load_problem(path, delta_override=delta)
    realization = basis_mod.realize(problem.basis_spec, nu=problem.plant.nu)
    return problem, realization


def _disturbance_from_arg(arg: str) -> simulator.DisturbanceSpec:
    if arg in ("zero", "sine_burst"):
        return simulator.DisturbanceSpec(kind=arg)
    if arg.startswith("expr:"):
        return simulator.DisturbanceSpec(kind="expression", expression=arg[5:])
    raise ProblemFormatError(
        f"unknown disturbance {arg!r} (use zero, sine_burst, or expr:<python>)")


def cmd_synthesize(args) -> int:
    problem, realization = _load(args.problem, args.delta)
    plant = problem.plant
    if problem.warm_K is None:
        print("problem file has no warm_start section", file=sys.stderr)
        return EXIT_PARSE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    gains0 = warm_start.construct_gains(plant, problem.warm_K, problem.warm_X,
                                        realization)
    c3 = basis_mod.fit_kernel(plant.dd_output_kernel, realization)
    report = [
        f"problem: {args.problem}",
        f"mode: {args.mode}",
        f"dimensions: n={plant.n} p={plant.p} q={plant.q} m={plant.m} "
        f"nu={plant.nu} d={realization.d} r={plant.r}",
        f"basis terms: {[(t.poly_degree, t.rate) for t in realization.spec.terms]}",
        f"decision variables (certificate + gains): "
        f"{synthesis.variable_count(realization.d, plant.nu, plant.p)}",
        "rng: all computations deterministic (no random source)",
    ]
    gains, cert, extra = gains0, None, {}
    if args.mode == "warmstart":
        pass
    elif args.mode == "analysis":
        cert = synthesis.analysis_solve(plant, realization, gains0,
                                        problem.supply, c3,
                                        corner_mode=args.corner_mode,
                                        options={"tol": args.tol})
        report.append(f"achieved gamma: {cert.gamma:.6f}")
    elif args.mode == "ica":
        config = ica.IcaConfig(rho1=args.rho1, rho2=args.rho2, eps=args.eps,
                               max_iters=args.iters,
                               corner_mode=args.corner_mode, sdp_tol=args.tol)
        result = ica.run(plant, realization, problem.supply, gains0, config,
                         c3, log_path=out / "iterations.csv")
        gains, cert = result.gains, result.certificate
        report.append(f"iterations: {len(result.records)} "
                      f"(stop: {result.stop_reason})")
        report.append(f"gamma trace: start {result.gamma_trace[0]:.6f} "
                      f"final {result.gamma_trace[-1]:.6f}")
        extra["iterations"] = len(result.records)
    fileio.save_gains(out / "gains.json", gains, realization, extra or None)
    if cert is not None:
        fileio.save_certificate(out / "certificate.json", cert, realization)
    spa = spectrum.spectral_abscissa(plant, realization, gains,
                                     n_cheb=args.ncheb)
    report.append(f"closed-loop spectral abscissa: {spa:.6f}")
    report.append(f"wall time: {time.perf_counter() - t0:.2f} s")
    (out / "report.txt").write_text("\n".join(report) + "\n")
    print("\n".join(report))
    return EXIT_OK


def cmd_simulate(args) -> int:
    problem, realization = _load(args.problem, args.delta)
    plant = problem.plant
    gains = fileio.load_gains(args.gains, realization)
    noise = None
    if args.noise:
        amp, cutoff, sample, seed = (float(v) for v in args.noise.split(","))
        noise = simulator.NoiseSpec(amplitude=amp, cutoff=cutoff,
                                    sample_time=sample, seed=int(seed))
    history = None
    if args.history:
        history = np.array([float(v) for v in args.history.split(",")])
    config = simulator.SimConfig(
        h=args.step, T=args.horizon, dd_points=args.ddpoints,
        history=history, disturbance=_disturbance_from_arg(args.disturbance),
        noise=noise)
    traj = simulator.simulate(plant, realization, gains, config)
    traj.to_csv(args.csv)
    lines = [f"trajectory written to {args.csv}",
             f"samples: {traj.times.size}  horizon: {args.horizon}  "
             f"step: {args.step}  dd nodes: {args.ddpoints}"]
    if noise is not None:
        lines.append(f"noise: amplitude={noise.amplitude} cutoff={noise.cutoff} "
                     f"sample_time={noise.sample_time} seed={noise.seed}")
    wn = float(np.trapezoid(np.sum(traj.w**2, axis=1), dx=traj.h))
    if wn > 0:
        zn = float(np.trapezoid(np.sum(traj.z**2, axis=1), dx=traj.h))
        lines.append(f"empirical L2 gain ||z||/||w||: {np.sqrt(zn / wn):.6f}")
    if args.certificate:
        cert = fileio.load_certificate(args.certificate, realization)
        resid = simulator.dissipation_residual(traj, cert, problem.supply,
                                               realization)
        lines.append(f"dissipation residual sup (dv/dt - s): {resid:.3e}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_spectrum(args) -> int:
    problem, realization = _load(args.problem, args.delta)
    gains = fileio.load_gains(args.gains, realization)
    val = spectrum.spectral_abscissa(problem.plant, realization, gains,
                                     n_cheb=args.ncheb)
    print(f"spectral abscissa: {val:.6f} ({'stable' if val < 0 else 'unstable'})")
    return EXIT_OK


def cmd_validate(args) -> int:
    problem, realization = _load(args.problem, args.delta)
    plant = problem.plant
    gains = fileio.load_gains(args.gains, realization)
    cert = fileio.load_certificate(args.certificate, realization)
    c3 = basis_mod.fit_kernel(plant.dd_output_kernel, realization)
    asm = synthesis.assemble(plant, realization, c3)
    checks = []
    report = validate_plant(plant)
    checks.append(("plant dimensions", True, f"nu={report['nu']}"))
    if problem.warm_K is not None:
        from . import linalg
        acl = plant.A + plant.B @ problem.warm_K
        checks.append(("warm-start A+BK Hurwitz", linalg.is_hurwitz(acl),
                       f"abscissa {linalg.spectral_abscissa_of(acl):.4f}"))
        checks.append(("warm-start X Hurwitz", linalg.is_hurwitz(problem.warm_X),
                       f"abscissa {linalg.spectral_abscissa_of(problem.warm_X):.4f}"))
    checks.append(("kernel decomposition residual", c3.residual <= 1e-8,
                   f"{c3.residual:.2e}"))
    mats = synthesis.evaluate_14a(cert, realization.d)
    names = ["coupled positivity block", "S positive", "U positive"]
    for name, mat in zip(names, mats):
        eig = float(np.linalg.eigvalsh(np.atleast_2d(mat)).min())
        scale = 1.0 + float(np.linalg.norm(np.atleast_2d(mat), "fro"))
        checks.append((name, eig >= -1e-7 * scale, f"min eig {eig:.3e}"))
    theta = synthesis.evaluate_theta(asm, problem.supply, cert, gains)
    eig = float(np.linalg.eigvalsh(theta).max())
    scale = 1.0 + float(np.linalg.norm(theta, "fro"))
    checks.append(("dissipation matrix negative", eig <= 1e-7 * scale,
                   f"max eig {eig:.3e}"))
    ok = all(c[1] for c in checks)
    for name, passed, detail in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    print(f"overall: {'PASS' if ok else 'FAIL'} (gamma = {cert.gamma:.6f})")
    return EXIT_OK if ok else EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ldsf",
        description="Dynamical state-feedback synthesis for input-delay "
                    "systems with dissipative performance constraints")
    sub = ap.add_subparsers(dest="command", required=True)

    syn = sub.add_parser("synthesize", help="compute controller gains")
    syn.add_argument("problem")
    syn.add_argument("--mode", choices=["warmstart", "analysis", "ica"],
                     default="analysis")
    syn.add_argument("--delta", type=int, default=None,
                     help="override the basis polynomial degree")
    syn.add_argument("--iters", type=int, default=100)
    syn.add_argument("--rho1", type=float, default=1e-3)
    syn.add_argument("--rho2", type=float, default=1e-3)
    syn.add_argument("--eps", type=float, default=1e-10)
    syn.add_argument("--tol", type=float, default=1e-8)
    syn.add_argument("--ncheb", type=int, default=40)
    syn.add_argument("--corner-mode", choices=["j1", "j1_inv"], default="j1")
    syn.add_argument("--out", default="out")
    syn.set_defaults(func=cmd_synthesize)

    sim = sub.add_parser("simulate", help="integrate the closed loop")
    sim.add_argument("problem")
    sim.add_argument("gains")
    sim.add_argument("--delta", type=int, default=None)
    sim.add_argument("--horizon", type=float, default=25.0)
    sim.add_argument("--step", type=float, default=0.002)
    sim.add_argument("--ddpoints", type=int, default=500)
    sim.add_argument("--disturbance", default="sine_burst")
    sim.add_argument("--history", default=None,
                     help="comma-separated constant initial segment")
    sim.add_argument("--noise", default=None,
                     help="amplitude,cutoff,sample_time,seed")
    sim.add_argument("--certificate", default=None)
    sim.add_argument("--csv", default="trajectory.csv")
    sim.set_defaults(func=cmd_simulate)

    spc = sub.add_parser("spectrum", help="closed-loop spectral abscissa")
    spc.add_argument("problem")
    spc.add_argument("gains")
    spc.add_argument("--delta", type=int, default=None)
    spc.add_argument("--ncheb", type=int, default=40)
    spc.set_defaults(func=cmd_spectrum)

    val = sub.add_parser("validate", help="re-verify a gains/certificate pair")
    val.add_argument("problem")
    val.add_argument("gains")
    val.add_argument("certificate")
    val.add_argument("--delta", type=int, default=None)
    val.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ProblemFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleSynthesis as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SynthesisError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except simulator.SimulationBlowUp as exc:
        print(f"simulation blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
