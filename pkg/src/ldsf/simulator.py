"""Closed-loop simulation of the delay system and trajectory-level checks.

Integrates the augmented state chi = [x; u] of the controlled plant

    chi'(t) = L0 chi(t) + L1 chi(t-r) + int_{-r}^0 L3 F(tau) chi(t+tau) dtau
              + [D1; D2] w(t)

with classical fixed-step RK4.  The pointwise delay is read from the
stored history by cubic Hermite interpolation (exact stage derivatives are
kept alongside the samples); the distributed term uses the trapezoidal
rule over uniform nodes.  On top of the integrator sit evaluators for the
certifying functional, an empirical dissipation residual, the L2 gain
ratio, and a discretization-order self-check of the kernel derivative
identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import KdrRealization
from .plant import ControllerGains, KfCertificate, PlantModel, SupplyRate

__all__ = [
    "DisturbanceSpec",
    "NoiseSpec",
    "SimConfig",
    "Trajectory",
    "SimulationBlowUp",
    "simulate",
    "kf_value",
    "dissipation_residual",
    "empirical_l2_gain",
    "dd_identity_check",
]


class SimulationBlowUp(RuntimeError):
    pass


@dataclass(frozen=True)
class DisturbanceSpec:
    """Disturbance signal: zero, the bundled sine burst, samples, or expression.

    ``sine_burst`` is w(t) = 10 sin(10 t) t^2 e^{-0.8 t} (scalar), the
    benchmark disturbance used throughout the examples.
    """

    kind: str = "zero"
    samples: np.ndarray | None = None
    sample_times: np.ndarray | None = None
    expression: str | None = None

    def __call__(self, t: float, q: int) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(q)
        if self.kind == "sine_burst":
            w = 10.0 * np.sin(10.0 * t) * t * t * np.exp(-0.8 * t) if t >= 0 else 0.0
            return np.full(q, w)
        if self.kind == "samples":
            w = np.array([np.interp(t, self.sample_times, self.samples[:, i])
                          for i in range(self.samples.shape[1])])
            return w
        if self.kind == "expression":
            env = {"t": t, "np": np, "sin": np.sin, "cos": np.cos,
                   "exp": np.exp, "sqrt": np.sqrt, "pi": np.pi, "abs": abs}
            w = eval(self.expression, {"__builtins__": {}}, env)  # noqa: S307
            return np.full(q, float(w)) if np.isscalar(w) else np.asarray(w, dtype=float)
        raise ValueError(f"unknown disturbance kind {self.kind!r}")


@dataclass(frozen=True)
class NoiseSpec:
    """Seeded sample-and-hold noise added to every entry of B until cutoff."""

    amplitude: float = 0.1
    cutoff: float = 10.0
    sample_time: float = 0.002
    seed: int = 0

    def realize_lookup(self, t_end: float):
        n_samples = int(np.ceil(max(self.cutoff, 0.0) / self.sample_time)) + 1
        rng = np.random.default_rng(self.seed)
        vals = rng.uniform(-self.amplitude, self.amplitude, size=n_samples)

        def beta(t: float) -> float:
            if t < 0 or t >= self.cutoff:
                return 0.0
            return float(vals[int(t / self.sample_time)])

        return beta


@dataclass
class SimConfig:
    h: float = 0.002
    T: float = 25.0
    dd_points: int = 500
    history: object = None  # constant vector, callable of t, or None for zero
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    noise: NoiseSpec | None = None

    def __post_init__(self):
        if self.h <= 0 or self.T <= 0:
            raise ValueError("step and horizon must be positive")
        if self.dd_points < 10:
            raise ValueError("dd_points must be at least 10")


@dataclass
class Trajectory:
    times: np.ndarray            # (nt,) from t0 = 0
    chi: np.ndarray              # (nt, nu)
    chi_deriv: np.ndarray        # (nt, nu) RK4 stage-1 derivatives
    z: np.ndarray                # (nt, m)
    w: np.ndarray                # (nt, q)
    pre_times: np.ndarray        # history grid on [-r, 0)
    pre_chi: np.ndarray
    pre_deriv: np.ndarray
    n: int
    p: int
    h: float
    r: float

    @property
    def u(self) -> np.ndarray:
        return self.chi[:, self.n :]

    @property
    def x(self) -> np.ndarray:
        return self.chi[:, : self.n]

    def full_grid(self):
        """Concatenated (times, values, derivatives) over [-r, T]."""
        return (np.concatenate([self.pre_times, self.times]),
                np.vstack([self.pre_chi, self.chi]),
                np.vstack([self.pre_deriv, self.chi_deriv]))

    def to_csv(self, path) -> None:
        m = self.z.shape[1]
        q = self.w.shape[1]
        cols = (["t"] + [f"x{i+1}" for i in range(self.n)]
                + [f"u{i+1}" for i in range(self.p)]
                + [f"z{i+1}" for i in range(m)] + [f"w{i+1}" for i in range(q)])
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for i in range(self.times.size):
                row = ([self.times[i]] + list(self.chi[i]) + list(self.z[i])
                       + list(self.w[i]))
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _hermite_eval(tq, t0: float, h: float, ys: np.ndarray, ds: np.ndarray,
                  nmax: int) -> np.ndarray:
    """Cubic Hermite interpolation on a uniform grid, vectorized in tq."""
    tq = np.atleast_1d(np.asarray(tq, dtype=float))
    pos = (tq - t0) / h
    idx = np.clip(np.floor(pos).astype(int), 0, nmax - 2)
    th = pos - idx
    th2 = th * th
    th3 = th2 * th
    h00 = 2 * th3 - 3 * th2 + 1
    h10 = th3 - 2 * th2 + th
    h01 = -2 * th3 + 3 * th2
    h11 = th3 - th2
    return (h00[:, None] * ys[idx] + (h * h10)[:, None] * ds[idx]
            + h01[:, None] * ys[idx + 1] + (h * h11)[:, None] * ds[idx + 1])


def simulate(plant: PlantModel, realization: KdrRealization,
             gains: ControllerGains, config: SimConfig) -> Trajectory:
    """Integrate the closed loop from t0 = 0 with the given configuration."""
    n, p, q, m, nu, r = plant.n, plant.p, plant.q, plant.m, plant.nu, plant.r
    if gains.nu != nu or gains.d != realization.d:
        raise ValueError("gains are dimensioned for a different realization")
    h = config.h
    if h > r / 10:
        raise ValueError(f"step h={h} too large; need h <= r/10 = {r / 10}")
    nq = config.dd_points
    dtau = r / nq
    if dtau < h - 1e-12:
        raise ValueError(
            f"distributed-delay node spacing r/dd_points = {dtau:.4g} must "
            f"not be below the step h = {h}")
    n_steps = int(round(config.T / h))
    n_pre = int(round(r / h))

    # history on the pre-grid [-r, 0]
    pre_times = -r + h * np.arange(n_pre + 1)
    hist = config.history
    if hist is None:
        pre_chi = np.zeros((n_pre + 1, nu))
        pre_deriv = np.zeros((n_pre + 1, nu))
    elif callable(hist):
        pre_chi = np.vstack([np.asarray(hist(t), dtype=float).reshape(nu)
                             for t in pre_times])
        pre_deriv = np.gradient(pre_chi, h, axis=0)
    else:
        v = np.asarray(hist, dtype=float).reshape(nu)
        pre_chi = np.tile(v, (n_pre + 1, 1))
        pre_deriv = np.zeros((n_pre + 1, nu))

    # pre-history followed by the forward trajectory; zero-filled so that
    # zero-coefficient Hermite terms never touch garbage
    total = n_pre + n_steps + 1
    buf_y = np.zeros((total, nu))
    buf_d = np.zeros((total, nu))
    buf_y[: n_pre + 1] = pre_chi
    buf_d[: n_pre + 1] = pre_deriv
    t_buf0 = -r

    taus = -r + dtau * np.arange(nq + 1)       # tau_0 = -r ... tau_nq = 0
    wts = np.full(nq + 1, dtau)
    wts[0] = wts[-1] = dtau / 2.0
    f_nodes = realization.eval_F_stack(taus)   # (nq+1, d*nu, nu)
    wf_nodes = f_nodes * wts[:, None, None]
    wf_interior = wf_nodes[:-1]

    l0 = np.vstack([np.hstack([plant.A, np.zeros((n, p))]), gains.K1])
    l1 = np.vstack([np.hstack([np.zeros((n, n)), plant.B]), gains.K2])
    l3 = np.vstack([np.zeros((n, realization.d * nu)), gains.K3])
    dw = np.vstack([plant.D1, plant.D2])
    beta = config.noise.realize_lookup(config.T) if config.noise else None
    dist = config.disturbance

    def rhs(t: float, y: np.ndarray, filled: int) -> np.ndarray:
        wv = dist(t, q)
        node_times = t + taus[:-1]
        past = _hermite_eval(node_times, t_buf0, h, buf_y, buf_d, filled)
        eta = np.einsum("kij,kj->i", wf_interior, past) + wf_nodes[-1] @ y
        delayed = past[0]  # tau_0 = -r exactly
        dy = l0 @ y + l1 @ delayed + l3 @ eta + dw @ wv
        if beta is not None:
            b = beta(t)
            if b != 0.0:
                dy[:n] += b * np.sum(delayed[n:]) * np.ones(n)
        return dy

    times = h * np.arange(n_steps + 1)
    w_arr = np.vstack([dist(t, q) for t in times])
    y = pre_chi[-1].copy()
    for step in range(n_steps):
        t = times[step]
        filled = n_pre + step + 1
        k1 = rhs(t, y, filled)
        buf_d[n_pre + step] = k1
        k2 = rhs(t + h / 2, y + (h / 2) * k1, filled)
        k3 = rhs(t + h / 2, y + (h / 2) * k2, filled)
        k4 = rhs(t + h, y + h * k3, filled)
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)) or np.linalg.norm(y) > 1e12:
            raise SimulationBlowUp(
                f"state norm exceeded 1e12 at t = {t + h:.4f}")
        buf_y[n_pre + step + 1] = y
    buf_d[-1] = rhs(times[-1], y, total)
    chi = buf_y[n_pre:].copy()
    chi_d = buf_d[n_pre:].copy()

    traj = Trajectory(times=times, chi=chi, chi_deriv=chi_d,
                      z=np.zeros((n_steps + 1, m)), w=w_arr,
                      pre_times=pre_times[:-1], pre_chi=pre_chi[:-1],
                      pre_deriv=pre_deriv[:-1], n=n, p=p, h=h, r=r)
    traj.z[:] = _regulated_output(plant, realization, traj, nq)
    return traj


def _window_values(traj: Trajectory, taus: np.ndarray) -> np.ndarray:
    """chi(t_i + tau_j) for all trajectory times; shape (nt, n_tau, nu).

    Uses direct indexing when the offsets are grid-aligned, otherwise
    Hermite interpolation.
    """
    tg, yg, dg = traj.full_grid()
    h = traj.h
    nt = traj.times.size
    offs = taus / h
    aligned = np.max(np.abs(offs - np.round(offs))) < 1e-9
    base = int(round(traj.r / h))  # index of t = 0 in the full grid
    if aligned:
        offs_i = np.round(offs).astype(int)
        idx = base + np.arange(nt)[:, None] + offs_i[None, :]
        return yg[idx]
    out = np.empty((nt, taus.size, yg.shape[1]))
    for j, tau in enumerate(taus):
        out[:, j, :] = _hermite_eval(traj.times + tau, tg[0], h, yg, dg, tg.size)
    return out


def _regulated_output(plant: PlantModel, realization: KdrRealization,
                      traj: Trajectory, nq: int) -> np.ndarray:
    """z = C1 chi + C2 chi(t-r) + int C3 F(tau) chi(t+tau) dtau + D3 w."""
    from .basis import fit_kernel

    r = plant.r
    dtau = r / nq
    taus = -r + dtau * np.arange(nq + 1)
    wts = np.full(nq + 1, dtau)
    wts[0] = wts[-1] = dtau / 2.0
    c3 = fit_kernel(plant.dd_output_kernel, realization)
    kernel_nodes = np.stack([c3.coeffs @ realization.eval_F(t) for t in taus])
    win = _window_values(traj, taus)  # (nt, nq+1, nu)
    dd = np.einsum("kij,nkj,k->ni", kernel_nodes, win, wts)
    delayed = win[:, 0, :]
    return (traj.chi @ plant.C1.T + delayed @ plant.C2.T + dd
            + traj.w @ plant.D3.T)


def kf_value(trajectory: Trajectory, certificate: KfCertificate,
             realization: KdrRealization, t: float) -> float:
    """Functional value v(chi_t) by trapezoidal quadrature on the step grid."""
    r, h = trajectory.r, trajectory.h
    if t < -1e-12 or t > trajectory.times[-1] + 1e-12:
        raise ValueError(f"t = {t} outside the simulated horizon")
    tg, yg, dg = trajectory.full_grid()
    n_win = int(round(r / h))
    i1 = int(round((t - tg[0]) / h))
    i0 = i1 - n_win
    if i0 < 0:
        raise ValueError(f"insufficient history to evaluate the functional at t = {t}")
    window = yg[i0 : i1 + 1]
    taus = -r + h * np.arange(n_win + 1)
    wts = np.full(n_win + 1, h)
    wts[0] = wts[-1] = h / 2.0
    fstack = realization.eval_F_stack(taus)
    eta = np.einsum("kij,kj,k->i", fstack, window, wts)
    chi_t = yg[i1]
    top = np.concatenate([chi_t, eta])
    lam = np.block([[certificate.P, certificate.Q],
                    [certificate.Q.T, certificate.R]])
    quad = float(top @ lam @ top)
    s_plus = certificate.S + (taus + r)[:, None, None] * certificate.U
    integrand = np.einsum("kj,kji,ki->k", window, s_plus, window)
    return quad + float(np.sum(wts * integrand))


def dissipation_residual(trajectory: Trajectory, certificate: KfCertificate,
                         supply: SupplyRate, realization: KdrRealization,
                         max_samples: int = 200) -> float:
    """max_t of (v(chi_{t+h}) - v(chi_t))/h - s(z(t), w(t)) over sampled t."""
    sup = (supply.with_gamma(certificate.gamma)
           if supply.gamma_is_variable else supply)
    h = trajectory.h
    nt = trajectory.times.size
    start = 1  # full history is available from t0 with the prescribed history
    stride = max(1, (nt - 2) // max_samples)
    worst = -np.inf
    for i in range(start, nt - 1, stride):
        t = trajectory.times[i]
        v0 = kf_value(trajectory, certificate, realization, t)
        v1 = kf_value(trajectory, certificate, realization, t + h)
        sval = sup.value(trajectory.z[i], trajectory.w[i])
        worst = max(worst, (v1 - v0) / h - sval)
    return float(worst)


def empirical_l2_gain(plant: PlantModel, realization: KdrRealization,
                      gains: ControllerGains, disturbance: DisturbanceSpec,
                      T: float, h: float = 0.002, dd_points: int = 500,
                      ) -> tuple[float, Trajectory]:
    """||z||_2 / ||w||_2 over [0, T] from zero initial history."""
    config = SimConfig(h=h, T=T, dd_points=dd_points, history=None,
                       disturbance=disturbance)
    traj = simulate(plant, realization, gains, config)
    wn = np.trapezoid(np.sum(traj.w**2, axis=1), dx=h)
    if wn <= 0:
        raise ValueError("disturbance is identically zero; gain ratio undefined")
    zn = np.trapezoid(np.sum(traj.z**2, axis=1), dx=h)
    return float(np.sqrt(zn / wn)), traj


def dd_identity_check(trajectory: Trajectory, realization: KdrRealization,
                      max_samples: int = 120) -> float:
    """Residual of the kernel integral derivative identity along the path.

    For any C1 path, d/dt int F(tau) chi(t+tau) dtau equals
    F(0) chi(t) - F(-r) chi(t-r) - (G^{-1/2} M G^{1/2} kron I) int F chi.
    Both the integral (trapezoid on the step grid) and the time derivative
    (central difference) carry O(h^2) errors, so the reported maximum
    shrinks by ~4x when the step is halved.
    """
    r, h = trajectory.r, trajectory.h
    nu = trajectory.chi.shape[1]
    tg, yg, dg = trajectory.full_grid()
    n_win = int(round(r / h))
    taus = -r + h * np.arange(n_win + 1)
    wts = np.full(n_win + 1, h)
    wts[0] = wts[-1] = h / 2.0
    fstack = realization.eval_F_stack(taus)
    wf = fstack * wts[:, None, None]
    f0 = realization.eval_F(0.0)
    fmr = realization.eval_F(-r)
    mconj = np.kron(realization.normalized_companion(), np.eye(nu))

    nt = trajectory.times.size
    idx = np.arange(1, nt - 1)
    if idx.size > max_samples:
        idx = idx[:: max(1, idx.size // max_samples)]
    base = n_win  # index of t=0 in full grid

    def eta_at(i):
        window = yg[base + i - n_win : base + i + 1]
        return np.einsum("kij,kj->i", wf, window)

    worst = 0.0
    for i in idx:
        d_eta = (eta_at(i + 1) - eta_at(i - 1)) / (2 * h)
        rhs = f0 @ yg[base + i] - fmr @ yg[base + i - n_win] - mconj @ eta_at(i)
        worst = max(worst, float(np.max(np.abs(d_eta - rhs))))
    return worst
