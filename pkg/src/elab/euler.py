"""Pseudo-spectral compressible Euler with pressure b0 rho^2 / 2.

Velocity form is primary; the momentum form is kept as a cross-check.
Quadratic products are dealiased with the 2/3 rule.  Integration is classical
RK4 and is only meaningful before gradient blow-up, which the regularity
monitor watches for.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import grid
from .grid import BoxSpec

CFL_LIMIT = 0.5


class MonitorViolation(ValueError):
    pass


@dataclass
class FluidState:
    rho: np.ndarray
    u: np.ndarray
    box: BoxSpec
    t: float = 0.0

    def __post_init__(self):
        self.box.check(self.rho)
        self.box.check(self.u, vector=True)

    @property
    def mass(self) -> float:
        return float(grid.integrate(self.rho, self.box))

    @property
    def momentum(self) -> np.ndarray:
        return self.rho[None] * self.u

    def resampled(self, n: int) -> "FluidState":
        b = self.box
        rho = grid.fourier_resample(self.rho, b, n)
        u = np.stack([grid.fourier_resample(c, b, n) for c in self.u])
        return FluidState(rho, u, b.with_n(n), self.t)


def _dealias(f: np.ndarray, box: BoxSpec) -> np.ndarray:
    return grid.ifft(box.dealias_mask * grid.fft(f, box), box).real


def euler_rhs(state: FluidState, b0: float) -> tuple[np.ndarray, np.ndarray]:
    """(d rho/dt, du/dt) of the velocity form."""
    box, rho, u = state.box, state.rho, state.u
    d = box.d
    drho = -sum(grid.spectral_derivative(_dealias(rho * u[j], box), box, j) for j in range(d))
    grad_rho = grid.gradient(rho, box)
    du = np.empty_like(u)
    for j in range(d):
        gu = grid.gradient(u[j], box)
        adv = _dealias(sum(u[k] * gu[k] for k in range(d)), box)
        du[j] = -adv - b0 * grad_rho[j]
    return drho, du


def momentum_rhs(rho: np.ndarray, J: np.ndarray, box: BoxSpec, b0: float):
    """(d rho/dt, dJ/dt) of the momentum form."""
    d = box.d
    drho = -grid.divergence(J, box)
    p = _dealias(0.5 * b0 * rho**2, box)
    gp = grid.gradient(p, box)
    dJ = np.empty_like(J)
    for j in range(d):
        flux = sum(grid.spectral_derivative(_dealias(J[j] * J[k] / rho, box), box, k)
                   for k in range(d))
        dJ[j] = -flux - gp[j]
    return drho, dJ


def max_signal_speed(state: FluidState, b0: float) -> float:
    speed = np.sqrt((state.u**2).sum(axis=0)).max()
    return float(speed + np.sqrt(b0 * max(float(state.rho.max()), 0.0)))


def laplacian_div_sup(state: FluidState) -> float:
    """sup |Laplacian(div u)|, computed spectrally."""
    box = state.box
    return float(np.abs(grid.laplacian(grid.divergence(state.u, box), box)).max())


def admissible_dt(state: FluidState, b0: float) -> float:
    s = max_signal_speed(state, b0)
    return np.inf if s == 0 else CFL_LIMIT * state.box.h / s


def _check_cfl(state: FluidState, dt: float, b0: float) -> None:
    lim = admissible_dt(state, b0)
    if abs(dt) > lim * (1 + 1e-12):
        raise ValueError(f"CFL violated: |dt|={abs(dt):g} exceeds admissible dt={lim:.6g}")


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(tuple(a + 0.5 * dt * b for a, b in zip(y, k1)))
    k3 = f(tuple(a + 0.5 * dt * b for a, b in zip(y, k2)))
    k4 = f(tuple(a + dt * b for a, b in zip(y, k3)))
    return tuple(a + dt / 6 * (p + 2 * q + 2 * r + s)
                 for a, p, q, r, s in zip(y, k1, k2, k3, k4))


def euler_step(state: FluidState, dt: float, b0: float, check_cfl: bool = True) -> FluidState:
    """One RK4 step; negative dt integrates backwards."""
    if check_cfl:
        _check_cfl(state, dt, b0)
    box = state.box

    def f(y):
        return euler_rhs(FluidState(y[0], y[1], box), b0)

    rho, u = _rk4(f, (state.rho, state.u), dt)
    return FluidState(rho, u, box, state.t + dt)


def momentum_step(rho: np.ndarray, J: np.ndarray, box: BoxSpec, dt: float, b0: float):
    return _rk4(lambda y: momentum_rhs(y[0], y[1], box, b0), (rho, J), dt)


@dataclass
class RegularityMonitor:
    stop_threshold: float = 1e-6
    rho_floor: float = -1e-8

    def measure(self, state: FluidState) -> dict:
        box = state.box
        parts = np.concatenate([(state.rho - state.rho.mean())[None], state.u])
        tail = grid.band_tail_fraction(parts, box)
        grads = [grid.gradient(c, box) for c in state.u]
        gmax = max(float(np.abs(g).max()) for g in grads)
        return {"tail_fraction": tail, "max_gradient": gmax, "rho_min": float(state.rho.min())}

    def violated(self, m: dict) -> str | None:
        if m["tail_fraction"] > self.stop_threshold:
            return f"spectral tail {m['tail_fraction']:.3e} above {self.stop_threshold:g}"
        if m["rho_min"] < self.rho_floor:
            return f"density minimum {m['rho_min']:.3e} below {self.rho_floor:g}"
        return None


@dataclass
class EulerRun:
    times: np.ndarray
    states: list
    records: list
    certified_T: float
    stop_reason: str | None
    final: FluidState = field(repr=False, default=None)

    @property
    def completed(self) -> bool:
        return self.stop_reason is None


def evolve_euler(state0: FluidState, T: float, dt: float, b0: float,
                 monitor: RegularityMonitor | None = None, every: int = 1,
                 keep: bool = True) -> EulerRun:
    """Integrate to T or until the monitor trips.

    The certified horizon is the last snapshot time at which the monitor
    still passed; it is a numerical surrogate for the smooth-solution window.
    """
    monitor = monitor or RegularityMonitor()
    if b0 < 0:
        raise ValueError("b0 < 0: Euler system is not hyperbolic")
    m0 = monitor.measure(state0)
    why = monitor.violated(m0)
    if why is not None:
        raise MonitorViolation(f"initial data already violates the monitor: {why}")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(T, 1):
        raise ValueError("T must be an integer multiple of dt")
    state = replace(state0)
    times, states, records = [], [], []

    def visit(s, m):
        times.append(s.t)
        if keep:
            states.append(s)
        records.append({"t": s.t, "mass": s.mass, **m})

    visit(state, m0)
    certified, reason = state.t, None
    for i in range(1, steps + 1):
        state = euler_step(state, dt, b0)
        if i % every and i != steps:
            continue
        m = monitor.measure(state)
        why = monitor.violated(m)
        if why is not None:
            reason = f"t={state.t:.6g}: {why}"
            break
        visit(state, m)
        certified = state.t
    return EulerRun(np.asarray(times), states, records, certified, reason, state)
