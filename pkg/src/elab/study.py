"""Coupled H-NLS / Euler runs and (hbar, N) convergence studies.

Euler runs on its own, coarser grid and is Fourier-resampled onto the H-NLS
grid at every snapshot: the CFL limit on the fine grid would otherwise force a
time step orders of magnitude below the H-NLS accuracy requirement.
"""

from __future__ import annotations

import math
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import euler, grid, hnls, modulated, potentials, scenes
from .grid import BoxSpec
from .potentials import PhysicalScales
from .rates import fit_rate

MOMENTUM_EXPONENTS = (1.0, 1.25)


@dataclass(frozen=True)
class PotentialSpec:
    width: float = 0.5
    amplitude: float = 2.0

    def build(self, box: BoxSpec) -> potentials.Potential:
        return potentials.gaussian_potential(box, self.width, self.amplitude)


@dataclass(frozen=True)
class Job:
    """One (hbar, N) point of a sweep; everything a worker needs."""
    scene: str
    scene_params: tuple
    L: float
    n: int
    euler_n: int
    potential: PotentialSpec
    hbar: float
    N: float
    beta: float
    dt: float
    T: float
    every: int
    d: int = 1

    @property
    def scales(self) -> PhysicalScales:
        return PhysicalScales(self.hbar, self.N, self.beta, self.d)

    @property
    def key(self) -> tuple:
        return (self.hbar, self.N, self.beta, self.T)


@dataclass
class JobResult:
    job: Job
    row: dict
    times: np.ndarray
    series: dict
    gronwall: modulated.GronwallReport
    growth_constant: float
    certified_T: float
    horizon_short: bool
    header: dict
    warnings: list = field(default_factory=list)


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def restriction_diagnostic(N: float, hbar: float, T0: float, C_V: float, E0: float) -> dict:
    """N >= exp(exp((C_V^2 E0^2 T0 / hbar^7)^2)), compared in log-log form."""
    need = (C_V**2 * E0**2 * T0 / hbar**7) ** 2
    have = math.log(math.log(N)) if N > math.e else -math.inf
    return {"loglog_N": have, "required_loglog_N": need, "satisfied": bool(have >= need),
            "C_V": C_V, "E0": E0}


def run_header(scales: PhysicalScales, box: BoxSpec, dt: float, **extra) -> dict:
    h = {"hbar": scales.hbar, "N": scales.N, "beta": scales.beta, "d": box.d, "n": box.n,
         "L": box.L, "dt": dt, "git_describe": git_describe(),
         "theorem_regime": scales.theorem_regime}
    h.update(extra)
    return h


def initial_states(job: Job):
    box = BoxSpec(job.d, job.L, job.n)
    ebox = BoxSpec(job.d, job.L, job.euler_n)
    params = dict(job.scene_params)
    fine = scenes.build(job.scene, box, **params)
    coarse = scenes.build(job.scene, ebox, **params)
    phi = hnls.wkb_initial_data(fine.rho_phi, fine.S_phi, box, job.scales)
    return box, phi, euler.FluidState(coarse.rho, coarse.u, ebox)


def coupled_run(job: Job, monitor: euler.RegularityMonitor | None = None) -> JobResult:
    """Run both dynamics on one clock and reduce observables on the fly."""
    box, phi0, state0 = initial_states(job)
    V = job.potential.build(box)
    b0 = V.b0
    V_N = potentials.scale_potential(V, job.scales)
    Vhat = grid.kernel_transform(V_N, box)
    steps = int(round(job.T / job.dt))
    if steps % job.every:
        raise ValueError("T / dt must be a multiple of the snapshot cadence")
    er = euler.evolve_euler(state0, job.T, job.dt, b0, monitor, every=job.every)
    fluid = {round(t / (job.every * job.dt)): s for t, s in zip(er.times, er.states)}
    hbar = job.hbar
    series = {k: [] for k in ("t", "err_density_L2", "err_momentum_L1", "err_momentum_L54",
                               "pressure_L1", "M")}

    def observe(t, psi):
        idx = round(t / (job.every * job.dt))
        if idx not in fluid:
            return {}
        st = fluid[idx].resampled(box.n)
        grad = grid.gradient(psi, box)
        rho = np.abs(psi) ** 2
        dJ = hbar * np.imag(np.conj(psi)[None] * grad) - st.momentum
        U = grid.convolve_with(Vhat, rho, box, real=True)
        M = modulated.modulated_energy(psi, st, Vhat, b0, hbar, grad_psi=grad, U=U).total
        vals = {"t": t, "err_density_L2": grid.l2_norm(rho - st.rho, box),
                "err_momentum_L1": grid.lp_norm(dJ, box, 1.0),
                "err_momentum_L54": grid.lp_norm(dJ, box, 1.25),
                "pressure_L1": grid.lp_norm(rho * U - b0 * st.rho**2, box, 1), "M": M}
        for k, v in vals.items():
            series[k].append(float(v))
        return {"M": M}

    last = int(round(er.certified_T / job.dt))
    last -= last % job.every
    traj = hnls.evolve_hnls(phi0, V_N, job.dt, max(last, job.every), job.every, keep=False,
                            observer=observe)
    t = np.asarray(series["t"])
    M = np.asarray(series["M"])
    g = modulated.gronwall_certificate(t, M, hbar, job.N, job.beta)
    rate = modulated.growth_constant(t, M, hbar)
    pressure = float(np.trapezoid(series["pressure_L1"], t)) if len(t) > 1 else 0.0
    row = {"hbar": job.hbar, "N": job.N, "beta": job.beta, "T": job.T,
           "err_density_L2": max(series["err_density_L2"]),
           "err_momentum_L1": max(series["err_momentum_L1"]),
           "err_momentum_L54": max(series["err_momentum_L54"]),
           "err_pressure_L1": pressure, "M0": float(M[0]), "Mmax": float(M.max()),
           "Cstar": g.C_star, "certified_T": er.certified_T}
    e0 = traj.records[0]
    E0 = 1.0 + e0["energy_kinetic"] + e0["energy_interaction"]
    header = run_header(job.scales, box, job.dt, scene=job.scene, euler_n=job.euler_n,
                        T=job.T, certified_T=er.certified_T, certified_T_kind="numerical surrogate",
                        lap_div_u_sup=max(euler.laplacian_div_sup(s) for s in er.states),
                        restriction=restriction_diagnostic(job.N, hbar, job.T, V.b0, E0))
    return JobResult(job, row, t, series, g, rate, er.certified_T,
                     er.certified_T < job.T - 1e-12, header, list(traj.warnings))


def run_jobs(jobs: list[Job], threads: int = 1) -> list[JobResult]:
    """Execute jobs (in a process pool when threads > 1); results sorted by key."""
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(coupled_run, jobs))
    else:
        results = [coupled_run(j) for j in jobs]
    return sorted(results, key=lambda r: r.job.key)


@dataclass
class ConvergenceReport:
    results: list
    hbar_fits: dict
    N_fits: dict
    partial: bool

    @property
    def rows(self) -> list[dict]:
        return [r.row for r in self.results]


def convergence_study(jobs: list[Job], threads: int = 1) -> ConvergenceReport:
    """Run the sweep and fit hbar-slopes at the largest N and N-slopes at the smallest hbar."""
    results = run_jobs(jobs, threads)
    keys = ("err_density_L2", "err_momentum_L1", "err_momentum_L54", "err_pressure_L1")
    hbar_fits, N_fits = {}, {}
    Nmax = max(r.job.N for r in results)
    at_N = sorted((r for r in results if r.job.N == Nmax), key=lambda r: r.job.hbar)
    if len(at_N) >= 3:
        for k in keys:
            hbar_fits[k] = fit_rate([r.job.hbar for r in at_N], [r.row[k] for r in at_N])
    hmin = min(r.job.hbar for r in results)
    at_h = sorted((r for r in results if r.job.hbar == hmin), key=lambda r: r.job.N)
    if len(at_h) >= 3:
        for k in keys:
            N_fits[k] = fit_rate([r.job.N for r in at_h], [r.row[k] for r in at_h])
    return ConvergenceReport(results, hbar_fits, N_fits, any(r.horizon_short for r in results))


def train_validate(hbars, errors, train) -> dict:
    """Fit C = max err/hbar on the training subset and check held-out points.

    Returns the fitted C, the held-out ratios err/hbar and whether every
    held-out ratio lies within a factor two of C.
    """
    hbars = np.asarray(hbars, dtype=float)
    errors = np.asarray(errors, dtype=float)
    train = np.asarray(train, dtype=bool)
    C = float((errors[train] / hbars[train]).max())
    held = errors[~train] / hbars[~train]
    ok = bool(np.all(held <= 2 * C) and np.all(held >= C / 2))
    return {"C": C, "held_out_ratios": held.tolist(), "stable": ok,
            "below_bound": bool(np.all(held <= 2 * C))}
