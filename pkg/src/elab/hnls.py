"""Hartree-type NLS  i hbar phi_t = -(hbar^2/2) Lap phi + (V_N * |phi|^2) phi.

Time stepping is Strang splitting: half kinetic phase in Fourier space, full
nonlinear phase in position space using the midpoint density, half kinetic
phase.  Both sub-steps are unitary, so the discrete mass is conserved to
round-off.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import grid
from .grid import BoxSpec
from .potentials import PhysicalScales

log = logging.getLogger(__name__)


@dataclass
class WaveFunction:
    psi: np.ndarray
    box: BoxSpec
    scales: PhysicalScales
    t: float = 0.0

    def __post_init__(self):
        self.box.check(self.psi)
        m = self.mass
        if abs(m - 1) > 1e-10:
            raise ValueError(f"wave function must be normalized, mass is {m!r}")

    @property
    def mass(self) -> float:
        return float(grid.integrate(np.abs(self.psi) ** 2, self.box))


@dataclass
class QuantumDensities:
    rho: np.ndarray
    J: np.ndarray


@dataclass(frozen=True)
class HNLSEnergy:
    kinetic: float
    interaction: float

    @property
    def total(self) -> float:
        return self.kinetic + self.interaction


def wkb_initial_data(rho_in: np.ndarray, S: np.ndarray, box: BoxSpec, scales: PhysicalScales,
                     mass_tol: float = 1e-10) -> WaveFunction:
    """phi = sqrt(rho_in) exp(i S / hbar)."""
    rho_in = box.check(rho_in)
    S = box.check(S)
    if np.iscomplexobj(S):
        raise ValueError("phase S must be real")
    if rho_in.min() < 0:
        raise ValueError("rho_in must be nonnegative")
    m = float(grid.integrate(rho_in, box))
    if abs(m - 1) > mass_tol:
        raise ValueError(f"rho_in must have unit mass, got {m!r}")
    psi = np.sqrt(rho_in) * np.exp(1j * S / scales.hbar)
    return WaveFunction(psi, box, scales)


def densities(phi: WaveFunction | np.ndarray, box: BoxSpec | None = None,
              hbar: float | None = None) -> QuantumDensities:
    """rho = |phi|^2 and J = hbar Im(conj(phi) grad phi)."""
    psi, box, hbar = _unpack(phi, box, hbar)
    rho = np.abs(psi) ** 2
    J = hbar * np.imag(np.conj(psi)[None] * grid.gradient(psi, box))
    return QuantumDensities(rho, J)


def _unpack(phi, box, hbar):
    if isinstance(phi, WaveFunction):
        return phi.psi, phi.box, phi.scales.hbar
    if box is None or hbar is None:
        raise TypeError("raw arrays need box and hbar")
    return phi, box, hbar


def kinetic_energy(psi: np.ndarray, box: BoxSpec, hbar: float) -> float:
    """(1/2) ||hbar grad psi||^2 by Plancherel."""
    F = grid.fft(psi, box)
    return float(0.5 * hbar**2 * np.sum(box.k2 * np.abs(F) ** 2) * box.dv / box.size)


def hnls_energy(phi: WaveFunction | np.ndarray, V_N: np.ndarray, box: BoxSpec | None = None,
                hbar: float | None = None, Vhat: np.ndarray | None = None) -> HNLSEnergy:
    psi, box, hbar = _unpack(phi, box, hbar)
    rho = np.abs(psi) ** 2
    if Vhat is None:
        Vhat = grid.kernel_transform(V_N, box)
    U = grid.convolve_with(Vhat, rho, box, real=True)
    return HNLSEnergy(kinetic_energy(psi, box, hbar), float(0.5 * grid.integrate(U * rho, box)))


def dt_budget(psi: np.ndarray, Vhat: np.ndarray, box: BoxSpec, hbar: float) -> float:
    """0.5 hbar / max|V_N * rho|: accuracy guard for the nonlinear phase."""
    U = grid.convolve_with(Vhat, np.abs(psi) ** 2, box, real=True)
    peak = float(np.abs(U).max())
    return np.inf if peak == 0 else 0.5 * hbar / peak


class HNLSSolver:
    """Strang splitting integrator with precomputed phases."""

    def __init__(self, box: BoxSpec, V_N: np.ndarray, hbar: float, dt: float):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.box = box
        self.hbar = hbar
        self.dt = dt
        self.V_N = box.check(V_N)
        self.Vhat = grid.kernel_transform(V_N, box)
        self.half_kick = np.exp(-0.25j * hbar * box.k2 * dt)
        self.full_kick = self.half_kick**2
        self.warnings: list[str] = []

    def potential(self, psi: np.ndarray) -> np.ndarray:
        return grid.convolve_with(self.Vhat, np.abs(psi) ** 2, self.box, real=True)

    def check_budget(self, psi: np.ndarray) -> None:
        budget = dt_budget(psi, self.Vhat, self.box, self.hbar)
        if self.dt > budget:
            msg = f"dt={self.dt:g} exceeds the accuracy budget {budget:.3g}"
            self.warnings.append(msg)
            log.warning(msg)

    def _nonlinear(self, psi: np.ndarray) -> np.ndarray:
        return psi * np.exp(-1j * self.potential(psi) * (self.dt / self.hbar))

    def step(self, psi: np.ndarray) -> np.ndarray:
        b = self.box
        psi = grid.ifft(self.half_kick * grid.fft(psi, b), b)
        psi = self._nonlinear(psi)
        return grid.ifft(self.half_kick * grid.fft(psi, b), b)

    def advance(self, psi: np.ndarray, steps: int) -> np.ndarray:
        """``steps`` Strang steps with adjacent half kicks fused."""
        if steps <= 0:
            return psi
        b = self.box
        F = self.half_kick * grid.fft(psi, b)
        for i in range(steps):
            psi = self._nonlinear(grid.ifft(F, b))
            kick = self.half_kick if i == steps - 1 else self.full_kick
            F = kick * grid.fft(psi, b)
        return grid.ifft(F, b)


def hnls_step(phi: WaveFunction, V_N: np.ndarray, dt: float) -> WaveFunction:
    solver = HNLSSolver(phi.box, V_N, phi.scales.hbar, dt)
    solver.check_budget(phi.psi)
    return WaveFunction(solver.step(phi.psi), phi.box, phi.scales, phi.t + dt)


@dataclass
class Trajectory:
    box: BoxSpec
    times: np.ndarray
    snapshots: list = field(default_factory=list)
    records: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def evolve_hnls(phi0: WaveFunction, V_N: np.ndarray, dt: float, steps: int, every: int = 1,
                keep: bool = True, observer: Callable | None = None) -> Trajectory:
    """Integrate ``steps`` steps, visiting a snapshot every ``every`` steps.

    ``observer(t, psi)`` may return a dict merged into the per-snapshot record.
    """
    if steps % every:
        raise ValueError("steps must be a multiple of the snapshot cadence")
    box, hbar = phi0.box, phi0.scales.hbar
    solver = HNLSSolver(box, V_N, hbar, dt)
    solver.check_budget(phi0.psi)
    psi = phi0.psi.astype(complex)
    times, snaps, records = [], [], []

    def visit(t, psi):
        times.append(t)
        if keep:
            snaps.append(psi.copy())
        e = hnls_energy(psi, V_N, box, hbar, Vhat=solver.Vhat)
        rec = {"t": t, "mass": float(grid.integrate(np.abs(psi) ** 2, box)),
               "energy_kinetic": e.kinetic, "energy_interaction": e.interaction}
        if observer is not None:
            rec.update(observer(t, psi) or {})
        records.append(rec)

    visit(phi0.t, psi)
    for s in range(steps // every):
        psi = solver.advance(psi, every)
        visit(phi0.t + (s + 1) * every * dt, psi)
    return Trajectory(box, np.asarray(times), snaps, records, solver.warnings)


def continuity_residual(prev: np.ndarray, cur: np.ndarray, nxt: np.ndarray, dt2: float,
                        box: BoxSpec, hbar: float) -> np.ndarray:
    """d_t rho + div J with d_t by a centered difference over ``dt2`` = 2 Delta t."""
    drho = (np.abs(nxt) ** 2 - np.abs(prev) ** 2) / dt2
    return drho + grid.divergence(densities(cur, box, hbar).J, box)


def momentum_flux(psi: np.ndarray, box: BoxSpec, hbar: float) -> np.ndarray:
    """T_jk = hbar^2 Re(conj(d_j phi) d_k phi) - (hbar^2/4) d_jk rho."""
    d = box.d
    g = grid.gradient(psi, box)
    rho = np.abs(psi) ** 2
    grho = grid.gradient(rho, box)
    T = np.empty((d, d) + box.shape)
    for j in range(d):
        for k in range(d):
            T[j, k] = hbar**2 * np.real(np.conj(g[j]) * g[k]) \
                - 0.25 * hbar**2 * grid.spectral_derivative(grho[j], box, k)
    return T


def momentum_residual(prev: np.ndarray, cur: np.ndarray, nxt: np.ndarray, dt2: float,
                      box: BoxSpec, hbar: float, Vhat: np.ndarray) -> np.ndarray:
    """d_t J^j + d_k T_jk + rho d_j(V_N * rho), per component."""
    dJ = (densities(nxt, box, hbar).J - densities(prev, box, hbar).J) / dt2
    T = momentum_flux(cur, box, hbar)
    rho = np.abs(cur) ** 2
    gU = grid.gradient(grid.convolve_with(Vhat, rho, box, real=True), box)
    out = np.empty_like(dJ)
    for j in range(box.d):
        out[j] = dJ[j] + sum(grid.spectral_derivative(T[j, k], box, k) for k in range(box.d)) \
            + rho * gU[j]
    return out


def _resolved(f: np.ndarray, box: BoxSpec) -> np.ndarray:
    """Projection onto the dealiased band |m| < n/3."""
    return grid.ifft(box.dealias_mask * grid.fft(f, box), box)


def local_conservation_residuals(snapshots, times, box: BoxSpec, hbar: float, V_N: np.ndarray,
                                 resolved: bool = True):
    """L^2 norms of the continuity and momentum residuals at interior snapshots.

    With ``resolved`` the residuals are projected onto the dealiased band
    first: the momentum flux carries three derivatives, which lift round-off
    level content near the Nyquist mode above the time-stepping error.
    """
    times = np.asarray(times)
    _require_uniform(times)
    Vhat = grid.kernel_transform(V_N, box)
    cont, mom = [], []
    for i in range(1, len(snapshots) - 1):
        dt2 = times[i + 1] - times[i - 1]
        a, b, c = snapshots[i - 1], snapshots[i], snapshots[i + 1]
        rc = continuity_residual(a, b, c, dt2, box, hbar)
        rm = momentum_residual(a, b, c, dt2, box, hbar, Vhat)
        if resolved:
            rc = _resolved(rc, box)
            rm = np.stack([_resolved(x, box) for x in rm])
        cont.append(grid.l2_norm(rc, box))
        mom.append(grid.l2_norm(rm, box))
    return np.asarray(cont), np.asarray(mom)


def _require_uniform(times: np.ndarray, rtol: float = 1e-9) -> float:
    if len(times) < 3:
        raise ValueError("need at least three snapshots")
    dts = np.diff(times)
    if np.any(np.abs(dts - dts[0]) > rtol * abs(dts[0])):
        raise ValueError("snapshot cadence is not uniform")
    return float(dts[0])


def pressure_defect(psi: np.ndarray, Vhat: np.ndarray, box: BoxSpec, b0: float) -> float:
    """||rho (V_N * rho) - b0 rho^2||_{L^1}."""
    rho = np.abs(psi) ** 2
    U = grid.convolve_with(Vhat, rho, box, real=True)
    return grid.lp_norm(rho * U - b0 * rho**2, box, 1)
