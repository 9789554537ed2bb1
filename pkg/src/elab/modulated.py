"""Modulated energy between an H-NLS state and an Euler state.

    M = 1/2 int |(hbar grad - i u) phi|^2 + 1/2 <V_N * rho_N, rho_N>
        + b0/2 int rho^2 - b0 int rho rho_N

together with its evolution identity, the error functional Er and a Gronwall
certificate for sampled M(t) series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import grid
from .euler import FluidState
from .grid import BoxSpec


@dataclass(frozen=True)
class ModulatedEnergyBreakdown:
    kinetic_mod: float
    interaction: float
    euler_sq: float
    cross: float

    @property
    def total(self) -> float:
        return self.kinetic_mod + self.interaction + self.euler_sq + self.cross

    def as_dict(self) -> dict:
        return {"kinetic_mod": self.kinetic_mod, "interaction": self.interaction,
                "euler_sq": self.euler_sq, "cross": self.cross, "total": self.total}


def _same_box(psi: np.ndarray, state: FluidState, box: BoxSpec) -> None:
    if state.box != box:
        raise ValueError(f"box mismatch: wave function on {box}, fluid on {state.box}")
    box.check(psi)


def modulated_derivative(psi: np.ndarray, u: np.ndarray, box: BoxSpec, hbar: float) -> np.ndarray:
    """Components (hbar d_j - i u^j) phi."""
    return hbar * grid.gradient(psi, box) - 1j * u * psi[None]


def modulated_energy(psi: np.ndarray, state: FluidState, Vhat: np.ndarray, b0: float,
                     hbar: float, grad_psi: np.ndarray | None = None,
                     U: np.ndarray | None = None) -> ModulatedEnergyBreakdown:
    """Four-term breakdown by position-space quadrature.

    ``Vhat`` is the convolution symbol of V_N (see ``grid.kernel_transform``).
    Callers that already hold grad psi or V_N * |psi|^2 may pass them in.
    """
    box = state.box
    _same_box(psi, state, box)
    if grad_psi is None:
        grad_psi = grid.gradient(psi, box)
    D = hbar * grad_psi - 1j * state.u * psi[None]
    rho_N = np.abs(psi) ** 2
    if U is None:
        U = grid.convolve_with(Vhat, rho_N, box, real=True)
    return ModulatedEnergyBreakdown(
        kinetic_mod=float(0.5 * grid.integrate((np.abs(D) ** 2).sum(axis=0), box)),
        interaction=float(0.5 * grid.integrate(U * rho_N, box)),
        euler_sq=float(0.5 * b0 * grid.integrate(state.rho**2, box)),
        cross=float(-b0 * grid.integrate(state.rho * rho_N, box)),
    )


def modulated_energy_regrouped(psi: np.ndarray, state: FluidState, Vhat: np.ndarray, b0: float,
                               hbar: float) -> float:
    """Independent assembly: Fourier-side kinetic energy, momentum coupling,
    squared density mismatch and the mollifier defect <W_N * rho_N, rho_N>."""
    box = state.box
    _same_box(psi, state, box)
    rho_N = np.abs(psi) ** 2
    F = grid.fft(psi, box)
    # same Nyquist convention as grid.gradient
    k2 = sum(k**2 for k in box._odd_wavenumbers)
    kin = np.sum(k2 * np.abs(F) ** 2) * box.dv / box.size * hbar**2
    J = hbar * np.imag(np.conj(psi)[None] * grid.gradient(psi, box))
    u2 = (state.u**2).sum(axis=0)
    kinetic = 0.5 * (kin + grid.integrate(u2 * rho_N, box) - 2 * grid.integrate((J * state.u).sum(axis=0), box))
    R = grid.fft(rho_N, box)
    defect = np.sum((Vhat - b0).real * np.abs(R) ** 2) * box.dv / box.size
    mismatch = grid.integrate((rho_N - state.rho) ** 2, box)
    return float(kinetic + 0.5 * b0 * mismatch + 0.5 * defect)


@dataclass(frozen=True)
class ErrorTerm:
    value: float
    budget: float


def error_term(psi: np.ndarray, state: FluidState, Vhat: np.ndarray, b0: float,
               hbar: float | None = None, N: float | None = None,
               beta: float | None = None) -> ErrorTerm:
    """Er = int u.grad(V_N * rho_N) rho_N + (b0/2) int div u rho_N^2."""
    box = state.box
    _same_box(psi, state, box)
    rho_N = np.abs(psi) ** 2
    U = grid.convolve_with(Vhat, rho_N, box, real=True)
    gU = grid.gradient(U, box)
    first = grid.integrate((state.u * gU).sum(axis=0) * rho_N, box)
    second = 0.5 * b0 * grid.integrate(grid.divergence(state.u, box) * rho_N**2, box)
    budget = math.nan
    if hbar is not None and N is not None and beta is not None:
        budget = 1.0 / (hbar**4 * N**beta)
    return ErrorTerm(float(first + second), budget)


AUDIT_TERMS = ("rhs_strain", "rhs_div", "rhs_hbar", "rhs_err")


def audit_terms(psi: np.ndarray, state: FluidState, Vhat: np.ndarray, b0: float,
                hbar: float) -> dict:
    """Right-hand side of the modulated-energy evolution identity at one instant."""
    box = state.box
    _same_box(psi, state, box)
    u = state.u
    d = box.d
    D = modulated_derivative(psi, u, box, hbar)
    gu = np.stack([grid.gradient(u[j], box) for j in range(d)])  # gu[j, k] = d_k u^j
    strain = 0.0
    for j in range(d):
        for k in range(d):
            strain += grid.integrate(gu[j, k] * np.real(D[k] * np.conj(D[j])), box)
    rho_N = np.abs(psi) ** 2
    divu = grid.divergence(u, box)
    return {
        "rhs_strain": float(-strain),
        "rhs_div": float(-0.5 * b0 * grid.integrate(divu * (rho_N - state.rho) ** 2, box)),
        "rhs_hbar": float(0.25 * hbar**2 * grid.integrate(rho_N * grid.laplacian(divu, box), box)),
        "rhs_err": error_term(psi, state, Vhat, b0).value,
    }


@dataclass
class EvolutionAudit:
    t: float
    lhs: float
    rhs_strain: float
    rhs_div: float
    rhs_hbar: float
    rhs_err: float

    @property
    def residual(self) -> float:
        return self.lhs - (self.rhs_strain + self.rhs_div + self.rhs_hbar + self.rhs_err)

    def residual_without(self, term: str) -> float:
        return self.residual + getattr(self, term)


@dataclass
class AuditSummary:
    audits: list
    max_residual: float
    max_residual_without: dict = field(default_factory=dict)

    @property
    def detection_ratios(self) -> dict:
        return {k: v / self.max_residual if self.max_residual > 0 else math.inf
                for k, v in self.max_residual_without.items()}


def _check_clock(times, other_times=None, rtol: float = 1e-9) -> float:
    times = np.asarray(times, dtype=float)
    if len(times) < 3:
        raise ValueError("need at least three snapshots")
    if other_times is not None:
        other = np.asarray(other_times, dtype=float)
        if other.shape != times.shape or np.any(np.abs(other - times) > rtol * max(1.0, times.max())):
            raise ValueError("clock mismatch between wave-function and fluid trajectories")
    dts = np.diff(times)
    if np.any(np.abs(dts - dts[0]) > rtol * abs(dts[0])):
        raise ValueError("snapshot cadence is not uniform")
    return float(dts[0])


def audit_from_series(times, M, terms: list[dict]) -> AuditSummary:
    """Centered-difference dM/dt against the identity's right-hand side.

    Endpoints are excluded: only interior snapshots enter the summary.
    """
    _check_clock(times)
    times = np.asarray(times, dtype=float)
    M = np.asarray(M, dtype=float)
    audits = []
    for i in range(1, len(times) - 1):
        lhs = (M[i + 1] - M[i - 1]) / (times[i + 1] - times[i - 1])
        audits.append(EvolutionAudit(float(times[i]), float(lhs), **terms[i]))
    res = max(abs(a.residual) for a in audits)
    without = {k: max(abs(a.residual_without(k)) for a in audits) for k in AUDIT_TERMS}
    return AuditSummary(audits, res, without)


def evolution_audit(times_phi, psis, times_fluid, states, Vhat: np.ndarray, b0: float,
                    hbar: float) -> AuditSummary:
    """Audit coupled trajectories sharing one clock."""
    _check_clock(times_phi, times_fluid)
    M = [modulated_energy(p, s, Vhat, b0, hbar).total for p, s in zip(psis, states)]
    terms = [audit_terms(p, s, Vhat, b0, hbar) for p, s in zip(psis, states)]
    return audit_from_series(times_phi, M, terms)


@dataclass(frozen=True)
class GronwallReport:
    C_star: float
    holds: bool
    budget: float
    hbar: float
    N: float
    beta: float
    lower_bound_ok: bool

    def as_dict(self) -> dict:
        return {"C_star": self.C_star, "holds": self.holds, "budget": self.budget,
                "hbar": self.hbar, "N": self.N, "beta": self.beta,
                "lower_bound_ok": self.lower_bound_ok}


def _certificate_ok(C: float, t: np.ndarray, M: np.ndarray, b: float, hbar: float,
                    slack: float = 1e-12) -> bool:
    """M + C b >= 0 and M(t) + C b <= exp(C t) (M(0) + C b + C hbar^2 t) for all t."""
    shifted = M + C * b
    if np.any(shifted < -slack * max(1.0, np.abs(M).max())):
        return False
    base = M[0] + C * b + C * hbar**2 * t
    if np.any(base <= 0):
        # only acceptable where the left side vanishes as well
        return bool(np.all(shifted[base <= 0] <= slack))
    lhs = np.log(np.maximum(shifted, 1e-300)) - np.log(base)
    return bool(np.all(lhs <= C * t + slack))


def gronwall_certificate(times, M, hbar: float, N: float, beta: float,
                         T0: float | None = None, rtol: float = 1e-6,
                         budget: float | None = None) -> GronwallReport:
    """Smallest C* >= 0 certifying the modulated-energy Gronwall bound on the series.

    ``budget`` overrides the default 1/(hbar^4 N^beta); passing 0 isolates the
    exponential growth rate from the mean-field budget.
    """
    t = np.asarray(times, dtype=float)
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        raise ValueError("empty modulated-energy series")
    if T0 is not None:
        keep = t <= T0 + 1e-12
        t, M = t[keep], M[keep]
    t = t - t[0]
    b = 1.0 / (hbar**4 * N**beta) if budget is None else float(budget)
    if _certificate_ok(0.0, t, M, b, hbar):
        C = 0.0
    else:
        hi = 1.0
        while not _certificate_ok(hi, t, M, b, hbar):
            hi *= 2.0
            if hi > 1e12:
                raise ArithmeticError("no finite Gronwall constant certifies this series")
        lo = 0.0
        while hi - lo > rtol * hi:
            mid = 0.5 * (lo + hi)
            if _certificate_ok(mid, t, M, b, hbar):
                hi = mid
            else:
                lo = mid
        C = hi
    lower = bool(np.all(M + C * b >= -1e-12 * max(1.0, np.abs(M).max())))
    return GronwallReport(C, _certificate_ok(C, t, M, b, hbar), b, hbar, N, beta, lower)


def growth_constant(times, M, hbar: float, T0: float | None = None) -> float:
    """Gronwall constant with the mean-field budget switched off."""
    return gronwall_certificate(times, M, hbar, 1.0, 0.5, T0, budget=0.0).C_star


def certificate_spread(reports) -> float:
    """max C* / min C* over a sweep (1 when all are equal)."""
    cs = [r.C_star for r in reports]
    if max(cs) == 0:
        return 1.0
    if min(cs) == 0:
        return math.inf
    return max(cs) / min(cs)
