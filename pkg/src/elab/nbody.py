"""Exact few-body bosonic dynamics in one dimension.

The wave function of N particles on a 1-d periodic grid is an array of shape
``(n,) * N``.  The Hamiltonian is

    H = sum_j -(hbar^2/2) d_j^2 + (1/N) sum_{j<k} V_N(x_j - x_k)

and marginals gamma^(k) are stored as arrays of shape ``(n,) * 2k`` indexed
``(x_1..x_k, x_1'..x_k')``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import grid
from .grid import BoxSpec
from .potentials import PhysicalScales

DEFAULT_MEMORY_CAP = 2**24
# triple-jump coefficients for the fourth-order composition of Strang steps
_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = 1.0 - 2.0 * _W1


def _require_1d(box: BoxSpec) -> None:
    if box.d != 1:
        raise ValueError("few-body dynamics is implemented for d = 1 only")


def check_memory(box: BoxSpec, N: int, cap: int = DEFAULT_MEMORY_CAP) -> None:
    size = box.n**N
    if size > cap:
        fit = 8
        while (2 * fit) ** N <= cap:
            fit *= 2
        raise MemoryError(
            f"{N}-body grid with n={box.n} needs {size} values, above the cap {cap}; "
            f"use n <= {fit}")


def max_transposition_error(psi: np.ndarray) -> float:
    N = psi.ndim
    err = 0.0
    for a, b in itertools.combinations(range(N), 2):
        perm = list(range(N))
        perm[a], perm[b] = b, a
        err = max(err, float(np.abs(psi - psi.transpose(perm)).max()))
    return err


@dataclass
class NBodyWaveFunction:
    psi: np.ndarray
    box: BoxSpec
    scales: PhysicalScales
    t: float = 0.0

    def __post_init__(self):
        _require_1d(self.box)
        N = self.scales.N
        if N != int(N):
            raise ValueError(f"particle number must be an integer, got {N}")
        N = int(N)
        if self.psi.shape != (self.box.n,) * N:
            raise ValueError(f"expected shape {(self.box.n,) * N}, got {self.psi.shape}")
        nrm = self.norm
        if abs(nrm - 1) > 1e-10:
            raise ValueError(f"wave function is not normalized (norm {nrm!r})")
        asym = max_transposition_error(self.psi)
        if asym > 1e-10:
            raise ValueError(f"wave function is not bosonic (transposition error {asym:.2e})")

    @property
    def N(self) -> int:
        return int(self.scales.N)

    @property
    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.psi) ** 2)) * self.box.h**self.psi.ndim)


def product_state(phi: np.ndarray, N: int) -> np.ndarray:
    """phi tensored with itself N times."""
    out = phi
    for _ in range(N - 1):
        out = np.multiply.outer(out, phi)
    return out


def pair_sum(V_N: np.ndarray, box: BoxSpec, N: int) -> np.ndarray:
    """sum_{j<k} V_N(x_j - x_k) on the N-fold grid.

    ``V_N`` is sampled with the origin at index n//2, so x_a - x_b sits at
    index (a - b + n//2) mod n.
    """
    _require_1d(box)
    n = box.n
    pair = _pair_matrix(V_N, box)
    W = np.zeros((n,) * N)
    for a, b in itertools.combinations(range(N), 2):
        shape = [1] * N
        shape[a], shape[b] = n, n
        W = W + pair.reshape(shape)
    return W


def kinetic_symbol(box: BoxSpec, N: int) -> np.ndarray:
    k2 = box.axis_wavenumbers**2
    out = np.zeros((box.n,) * N)
    for a in range(N):
        shape = [1] * N
        shape[a] = box.n
        out = out + k2.reshape(shape)
    return out


class NBodySolver:
    """Strang splitting for the N-body Schroedinger equation.

    ``order=4`` composes three Strang steps (triple jump) for runs that need
    tight energy conservation.
    """

    def __init__(self, box: BoxSpec, V_N: np.ndarray, N: int, hbar: float, dt: float,
                 order: int = 2, memory_cap: int = DEFAULT_MEMORY_CAP):
        _require_1d(box)
        check_memory(box, N, memory_cap)
        if order not in (2, 4):
            raise ValueError("order must be 2 or 4")
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.box, self.N, self.hbar, self.dt, self.order = box, N, hbar, dt, order
        self.K = kinetic_symbol(box, N)
        self.W = pair_sum(box.check(V_N), box, N)
        subs = [dt] if order == 2 else [_W1 * dt, _W0 * dt, _W1 * dt]
        self._phases = [(np.exp(-0.25j * hbar * self.K * s), np.exp(-1j * s / (N * hbar) * self.W))
                        for s in subs]

    def step(self, psi: np.ndarray) -> np.ndarray:
        for kick, pot in self._phases:
            psi = np.fft.ifftn(kick * np.fft.fftn(psi))
            psi = pot * psi
            psi = np.fft.ifftn(kick * np.fft.fftn(psi))
        return psi

    def advance(self, psi: np.ndarray, steps: int) -> np.ndarray:
        for _ in range(steps):
            psi = self.step(psi)
        return psi


def nbody_step(wf: NBodyWaveFunction, V_N: np.ndarray, dt: float) -> NBodyWaveFunction:
    solver = NBodySolver(wf.box, V_N, wf.N, wf.scales.hbar, dt)
    return NBodyWaveFunction(solver.step(wf.psi), wf.box, wf.scales, wf.t + dt)


@dataclass
class NBodyTrajectory:
    box: BoxSpec
    times: np.ndarray
    snapshots: list
    scales: PhysicalScales


def evolve_nbody(wf: NBodyWaveFunction, V_N: np.ndarray, dt: float, steps: int, every: int = 1,
                 order: int = 2) -> NBodyTrajectory:
    if steps % every:
        raise ValueError("steps must be a multiple of the snapshot cadence")
    solver = NBodySolver(wf.box, V_N, wf.N, wf.scales.hbar, dt, order=order)
    psi = wf.psi.astype(complex)
    times, snaps = [wf.t], [psi]
    for s in range(steps // every):
        psi = solver.advance(psi, every)
        times.append(wf.t + (s + 1) * every * dt)
        snaps.append(psi)
    return NBodyTrajectory(wf.box, np.asarray(times), snaps, wf.scales)


# ---------------------------------------------------------------- marginals

@dataclass
class DensityKernel:
    gamma: np.ndarray
    k: int
    box: BoxSpec

    def __post_init__(self):
        if self.gamma.shape != (self.box.n,) * (2 * self.k):
            raise ValueError("kernel shape does not match order and grid")

    @property
    def dim(self) -> int:
        return self.box.n**self.k

    def matrix(self) -> np.ndarray:
        return self.gamma.reshape(self.dim, self.dim)

    def trace(self) -> float:
        return float(np.trace(self.matrix()).real) * self.box.h**self.k

    def hermiticity_error(self) -> float:
        G = self.matrix()
        return float(np.abs(G - G.conj().T).max())

    def diagonal(self) -> np.ndarray:
        """gamma(x; x) as an array of shape (n,) * k."""
        return np.diagonal(self.matrix()).real.reshape((self.box.n,) * self.k)

    def min_eigenvalue(self, rank: int = 64, seed: int = 0) -> float:
        """Smallest eigenvalue of the integral operator (h^k-weighted matrix).

        Order one uses the full spectrum; higher orders use a random
        ``rank``-dimensional orthonormal compression.
        """
        G = self.matrix() * self.box.h**self.k
        G = 0.5 * (G + G.conj().T)
        if self.k == 1 or self.dim <= rank:
            return float(np.linalg.eigvalsh(G).min())
        rng = np.random.default_rng(seed)
        Z = rng.standard_normal((self.dim, rank)) + 1j * rng.standard_normal((self.dim, rank))
        Q, _ = np.linalg.qr(Z)
        return float(np.linalg.eigvalsh(Q.conj().T @ G @ Q).min())

    def partial_trace(self) -> "DensityKernel":
        """Trace out the last particle."""
        if self.k < 2:
            raise ValueError("cannot trace out of an order-one kernel")
        n, k = self.box.n, self.k
        g = self.gamma.reshape(n**(k - 1), n, n**(k - 1), n)
        out = np.einsum("aibi->ab", g) * self.box.h
        return DensityKernel(out.reshape((n,) * (2 * k - 2)), k - 1, self.box)


def _as_rows(psi: np.ndarray, k: int) -> np.ndarray:
    n = psi.shape[0]
    return psi.reshape(n**k, n ** (psi.ndim - k))


def marginal(psi: np.ndarray, k: int, box: BoxSpec) -> DensityKernel:
    """Contract the last N - k coordinates of psi conj(psi)."""
    N = psi.ndim
    if not 1 <= k < N:
        raise ValueError(f"marginal order must satisfy 1 <= k < N={N}, got {k}")
    A = _as_rows(psi, k)
    G = (A @ A.conj().T) * box.h ** (N - k)
    return DensityKernel(G.reshape((box.n,) * (2 * k)), k, box)


@dataclass
class TraceObservables:
    mass: np.ndarray
    momentum: np.ndarray
    pair_pressure: np.ndarray


def pair_density(psi: np.ndarray, box: BoxSpec) -> np.ndarray:
    """gamma^(2)(x1, x2; x1, x2) straight from psi (valid for any N >= 2)."""
    n, N = box.n, psi.ndim
    if N < 2:
        raise ValueError("pair density needs at least two particles")
    return (np.abs(psi) ** 2).reshape(n, n, -1).sum(axis=-1) * box.h ** (N - 2)


def trace_observables(g1: DensityKernel, g2, V_N: np.ndarray, hbar: float) -> TraceObservables:
    """Mass, momentum and pair-pressure densities.

    ``g2`` is an order-two ``DensityKernel`` or its (n, n) diagonal.
    """
    box = g1.box
    if g1.k != 1:
        raise ValueError("first argument must be an order-one kernel")
    if isinstance(g2, DensityKernel):
        if g2.box != box or g2.k != 2:
            raise ValueError("need an order-two kernel on the same grid")
        diag2 = g2.diagonal()
    else:
        diag2 = np.asarray(g2)
        if diag2.shape != (box.n, box.n):
            raise ValueError("pair diagonal has the wrong shape")
    mass = g1.diagonal()
    dg = _d_first(g1.gamma, box)
    momentum = hbar * np.imag(np.diagonal(dg))
    pair = _pair_matrix(V_N, box)
    return TraceObservables(mass, momentum, (pair * diag2).sum(axis=1) * box.h)


def _d_first(g: np.ndarray, box: BoxSpec) -> np.ndarray:
    """Spectral derivative along the unprimed axis of an order-one kernel."""
    k = box.axis_wavenumbers.copy()
    k[box.n // 2] = 0.0
    return np.fft.ifft(1j * k[:, None] * np.fft.fft(g, axis=0), axis=0)


# ---------------------------------------------------------------- hierarchy

def _second_derivative(g: np.ndarray, box: BoxSpec, axis: int) -> np.ndarray:
    k2 = box.axis_wavenumbers**2
    shape = [1] * g.ndim
    shape[axis] = box.n
    return np.fft.ifft(-k2.reshape(shape) * np.fft.fft(g, axis=axis), axis=axis)


def _pair_matrix(V_N: np.ndarray, box: BoxSpec) -> np.ndarray:
    n = box.n
    idx = np.arange(n)
    return V_N[(idx[:, None] - idx[None, :] + n // 2) % n]


def bbgky_rhs(psi: np.ndarray, k: int, V_N: np.ndarray, box: BoxSpec, hbar: float,
              drop: str | None = None) -> np.ndarray:
    """Right side of i hbar d_t gamma^(k) assembled from psi.

    Terms: ``kinetic``, ``pair`` (the 1/N commutator among the first k
    particles) and ``collision`` (the (N-k)/N traced commutator).  ``drop``
    omits one of them.
    """
    N = psi.ndim
    if not 1 <= k < N:
        raise ValueError(f"need 1 <= k < N, got k={k}, N={N}")
    n = box.n
    g = marginal(psi, k, box).gamma
    out = np.zeros_like(g, dtype=complex)
    if drop != "kinetic":
        for j in range(k):
            out += -0.5 * hbar**2 * (_second_derivative(g, box, j) - _second_derivative(g, box, k + j))
    P = _pair_matrix(V_N, box)
    if drop != "pair" and k >= 2:
        for a, b in itertools.combinations(range(k), 2):
            shape = [1] * (2 * k)
            shape[a], shape[b] = n, n
            left = P.reshape(shape)
            shape = [1] * (2 * k)
            shape[k + a], shape[k + b] = n, n
            right = P.reshape(shape)
            out += (left - right) * g / N
    if drop != "collision":
        A = _as_rows(psi, k)
        coll = np.zeros((n**k, n**k), dtype=complex)
        rest = n ** (N - k - 1)
        for j in range(k):
            # B[x, y, z] = V_N(x_j - y) psi(x, y, z)
            shape = [1] * k + [n]
            shape[j] = n
            Vj = P.reshape(shape)
            B = (psi.reshape((n,) * k + (n, rest)) * Vj[..., None]).reshape(n**k, -1)
            coll += B @ A.conj().T - A @ B.conj().T
        out += (N - k) / N * coll.reshape(g.shape) * box.h ** (N - k)
    return out


def bbgky_residual(snapshots, times, k: int, V_N: np.ndarray, box: BoxSpec, hbar: float,
                   drop: str | None = None) -> np.ndarray:
    """L^2 kernel norm of i hbar d_t gamma^(k) - RHS at interior snapshots."""
    times = np.asarray(times, dtype=float)
    if len(times) < 3:
        raise ValueError("need at least three snapshots")
    dts = np.diff(times)
    if np.any(np.abs(dts - dts[0]) > 1e-9 * abs(dts[0])):
        raise ValueError("snapshot cadence is not uniform")
    out = []
    for i in range(1, len(snapshots) - 1):
        g_next = marginal(snapshots[i + 1], k, box).gamma
        g_prev = marginal(snapshots[i - 1], k, box).gamma
        lhs = 1j * hbar * (g_next - g_prev) / (times[i + 1] - times[i - 1])
        r = lhs - bbgky_rhs(snapshots[i], k, V_N, box, hbar, drop)
        out.append(math.sqrt(float(np.sum(np.abs(r) ** 2))) * box.h**k)
    return np.asarray(out)


# ---------------------------------------------------------------- energy

def apply_hamiltonian(psi: np.ndarray, V_N: np.ndarray, box: BoxSpec, hbar: float,
                      W: np.ndarray | None = None) -> np.ndarray:
    N = psi.ndim
    K = kinetic_symbol(box, N)
    if W is None:
        W = pair_sum(V_N, box, N)
    return np.fft.ifftn(0.5 * hbar**2 * K * np.fft.fftn(psi)) + W * psi / N


def energy_moment(psi: np.ndarray, k: int, V_N: np.ndarray, box: BoxSpec, hbar: float) -> float:
    """<psi, (H/N + 1)^k psi> for k in {1, 2}."""
    if k not in (1, 2):
        raise ValueError("energy moments are available for k = 1, 2 only")
    N = psi.ndim
    W = pair_sum(V_N, box, N)
    phi = psi
    for _ in range(k):
        phi = apply_hamiltonian(phi, V_N, box, hbar, W) / N + phi
    return float(np.vdot(psi, phi).real) * box.h**N


# ---------------------------------------------------------------- comparison

def compare_with_hnls(nbody_snaps, hnls_snaps, times_nbody, times_hnls, V_N: np.ndarray,
                      box: BoxSpec, hbar: float, r_list=(1.0, 1.25)) -> list[dict]:
    """Distances between few-body trace observables and H-NLS densities per snapshot."""
    if len(nbody_snaps) != len(hnls_snaps) or \
            np.any(np.abs(np.asarray(times_nbody) - np.asarray(times_hnls)) > 1e-12):
        raise ValueError("trajectories do not share a clock")
    Vhat = grid.kernel_transform(V_N, box)
    out = []
    for t, psi, phi in zip(times_nbody, nbody_snaps, hnls_snaps):
        if phi.shape != (box.n,):
            raise ValueError("H-NLS snapshot is not on the few-body grid")
        obs = trace_observables(marginal(psi, 1, box), pair_density(psi, box), V_N, hbar)
        rho = np.abs(phi) ** 2
        J = hbar * np.imag(np.conj(phi) * grid.spectral_derivative(phi, box, 0))
        U = grid.convolve_with(Vhat, rho, box, real=True)
        rec = {"t": float(t), "err_density_L2": grid.l2_norm(obs.mass - rho, box),
               "err_pressure_L1": grid.lp_norm(obs.pair_pressure - rho * U, box, 1)}
        for r in r_list:
            rec[f"err_momentum_L{r:g}"] = grid.lp_norm(obs.momentum - J, box, r)
        out.append(rec)
    return out
