"""JSON problem, gains and certificate files.

The problem file is declarative: plant matrices, the distributed output
kernel as a list of (degree, rate, coefficient-matrix) terms, basis knobs
(polynomial degree ``delta`` plus extra exponential rates), the warm-start
pair (K, X) and the supply-rate choice.  Matrices are row-major nested
arrays.  Gains and certificate files embed a fingerprint of the kernel
realization (dimensions, term list, Gramian hash) so a file produced for
one basis cannot be silently applied to another.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import basis as basis_mod
from . import linalg
from .plant import (
    ControllerGains,
    KernelTerm,
    KfCertificate,
    OutputKernel,
    PlantModel,
    SupplyRate,
    l2_gain_supply,
    make_plant,
    make_supply,
    passivity_supply,
)


class ProblemFormatError(ValueError):
    pass


@dataclass
class ProblemDef:
    plant: PlantModel
    basis_spec: basis_mod.BasisSpec
    warm_K: np.ndarray | None
    warm_X: np.ndarray | None
    supply: SupplyRate
    delta: int
    extra_rates: list[float]


def _mat(obj, name: str) -> np.ndarray:
    try:
        m = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemFormatError(f"field {name!r} is not a numeric matrix: {exc}")
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    return m


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ProblemFormatError(f"missing field {key!r} in {where}")
    return d[key]


def predictor_rates(A: np.ndarray) -> list[float]:
    """Rates of exp(-A tau) needed to express the warm-start kernel.

    Requires the plant to have real eigenvalues (complex basis rates are
    out of scope); repeated eigenvalues are deduplicated.
    """
    eigs = linalg.eig_general(A)
    if np.max(np.abs(eigs.imag)) > 1e-9 * (1.0 + np.max(np.abs(eigs))):
        raise ProblemFormatError(
            "plant matrix A has complex eigenvalues; the exponential kernel "
            "basis only supports real rates - supply gains without a warm "
            "start or extend the basis manually")
    return sorted({round(float(-ev.real), 12) for ev in eigs})


def assemble_basis_terms(kernel_terms, delta: int, extra_rates,
                         A: np.ndarray | None, r: float) -> basis_mod.BasisSpec:
    """Union of kernel terms, polynomial block, extra rates and predictor modes."""
    terms = [(t.poly_degree, t.rate) for t in kernel_terms]
    terms += [(i, 0.0) for i in range(delta + 1)]
    terms += [(0, float(rate)) for rate in extra_rates]
    if A is not None:
        terms += [(0, rate) for rate in predictor_rates(A)]
    dedup = sorted(set(terms), key=lambda t: (t[1], t[0]))
    return basis_mod.build_basis(dedup, r)


def load_problem(path, delta_override: int | None = None) -> ProblemDef:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"invalid JSON in {path}: {exc}")
    pl = _require(raw, "plant", "problem file")
    r = float(_require(pl, "r", "plant"))
    A = _mat(_require(pl, "A", "plant"), "plant.A")
    B = _mat(_require(pl, "B", "plant"), "plant.B")
    n = A.shape[0]
    if B.shape[0] != n and B.shape == (1, n):
        B = B.T  # accept a flat list for single-input plants
    m_rows = _mat(_require(pl, "C1", "plant"), "plant.C1").shape[0]
    kern_raw = raw.get("dd_output_kernel", [])
    kterms = []
    for i, term in enumerate(kern_raw):
        kterms.append(KernelTerm(
            poly_degree=int(term.get("degree", 0)),
            rate=float(_require(term, "rate", f"dd_output_kernel[{i}]")),
            coeff=_mat(_require(term, "coeff_matrix", f"dd_output_kernel[{i}]"),
                       f"dd_output_kernel[{i}].coeff_matrix"),
        ))
    C1 = _mat(pl["C1"], "plant.C1")
    nu = C1.shape[1]
    kernel = OutputKernel(terms=tuple(kterms), shape=(m_rows, nu))
    try:
        plant = make_plant(
            A=A, B=B,
            D1=_mat(_require(pl, "D1", "plant"), "plant.D1"),
            D2=_mat(_require(pl, "D2", "plant"), "plant.D2"),
            C1=C1,
            C2=_mat(_require(pl, "C2", "plant"), "plant.C2"),
            dd_output_kernel=kernel,
            D3=_mat(_require(pl, "D3", "plant"), "plant.D3"),
            r=r,
        )
    except ValueError as exc:
        raise ProblemFormatError(f"plant definition invalid: {exc}")

    warm = raw.get("warm_start")
    warm_K = _mat(_require(warm, "K", "warm_start"), "warm_start.K") if warm else None
    warm_X = _mat(_require(warm, "X", "warm_start"), "warm_start.X") if warm else None

    b = raw.get("basis", {})
    delta = int(b.get("delta", 0))
    if delta_override is not None:
        delta = int(delta_override)
    extra_rates = [float(v) for v in b.get("extra_rates", [])]
    spec = assemble_basis_terms(kernel.terms, delta, extra_rates,
                                plant.A if warm is not None else None, r)

    sup_raw = raw.get("supply", {"preset": "l2_gain_variable"})
    supply = _parse_supply(sup_raw, plant.m, plant.q)
    return ProblemDef(plant=plant, basis_spec=spec, warm_K=warm_K, warm_X=warm_X,
                      supply=supply, delta=delta, extra_rates=extra_rates)


def _parse_supply(raw: dict, m: int, q: int) -> SupplyRate:
    preset = raw.get("preset")
    if preset == "l2_gain_variable":
        return l2_gain_supply(None, m=m, q=q)
    if preset == "l2_gain":
        return l2_gain_supply(float(_require(raw, "gamma", "supply")), m=m, q=q)
    if preset == "passivity":
        return passivity_supply(m)
    if preset is None:
        try:
            return make_supply(
                _mat(_require(raw, "Jtilde", "supply"), "supply.Jtilde"),
                _mat(_require(raw, "J1", "supply"), "supply.J1"),
                _mat(_require(raw, "J2", "supply"), "supply.J2"),
                _mat(_require(raw, "J3", "supply"), "supply.J3"),
            )
        except ValueError as exc:
            raise ProblemFormatError(f"supply definition invalid: {exc}")
    raise ProblemFormatError(f"unknown supply preset {preset!r}")


# ---------------------------------------------------------------------------
# gains / certificate files


def _listify(m: np.ndarray):
    return np.asarray(m, dtype=float).tolist()


def save_gains(path, gains: ControllerGains, realization: basis_mod.KdrRealization,
               extra: dict | None = None) -> None:
    doc = {
        "K1": _listify(gains.K1), "K2": _listify(gains.K2), "K3": _listify(gains.K3),
        "realization": realization.fingerprint(),
    }
    if gains.gamma is not None and np.isfinite(gains.gamma):
        doc["gamma"] = float(gains.gamma)
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_gains(path, realization: basis_mod.KdrRealization) -> ControllerGains:
    with open(path) as fh:
        doc = json.load(fh)
    fp = doc.get("realization", {})
    expect = realization.fingerprint()
    for key in ("d", "nu", "r", "terms"):
        if fp.get(key) != expect[key]:
            raise ProblemFormatError(
                f"gains file {path} was produced for a different kernel basis "
                f"({key}: file has {fp.get(key)!r}, problem needs {expect[key]!r})")
    if fp.get("gram_sha256") != expect["gram_sha256"]:
        raise ProblemFormatError(
            f"gains file {path} Gramian hash mismatch; regenerate the gains "
            f"for this problem file")
    return ControllerGains(
        K1=_mat(doc["K1"], "K1"), K2=_mat(doc["K2"], "K2"), K3=_mat(doc["K3"], "K3"),
        d=realization.d, nu=realization.nu,
        gamma=float(doc["gamma"]) if "gamma" in doc else None)


def save_certificate(path, cert: KfCertificate,
                     realization: basis_mod.KdrRealization) -> None:
    doc = {
        "P": _listify(cert.P), "Q": _listify(cert.Q), "R": _listify(cert.R),
        "S": _listify(cert.S), "U": _listify(cert.U), "gamma": float(cert.gamma),
        "realization": realization.fingerprint(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_certificate(path, realization: basis_mod.KdrRealization) -> KfCertificate:
    with open(path) as fh:
        doc = json.load(fh)
    fp = doc.get("realization", {})
    expect = realization.fingerprint()
    if fp.get("gram_sha256") != expect["gram_sha256"]:
        raise ProblemFormatError(
            f"certificate file {path} was produced for a different kernel basis")
    return KfCertificate(
        P=_mat(doc["P"], "P"), Q=_mat(doc["Q"], "Q"), R=_mat(doc["R"], "R"),
        S=_mat(doc["S"], "S"), U=_mat(doc["U"], "U"),
        gamma=float(doc.get("gamma", "nan")),
        d=realization.d, nu=realization.nu)
