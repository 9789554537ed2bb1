"""Pair interaction V, its mean-field scaling V_N and the mollifier defect W_N."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import grid
from .grid import BoxSpec
from .rates import RateFit, fit_rate

THEOREM_BETA_LIMIT = 0.4
# points required across the scaled interaction length
MIN_POINTS_PER_WIDTH = 8
BOUNDARY_DECAY = 1e-12


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicalScales:
    hbar: float
    N: float
    beta: float
    d: int = 1

    def __post_init__(self):
        if not self.hbar > 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if not self.N >= 2:
            raise ValueError(f"N must be >= 2, got {self.N}")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")

    @property
    def theorem_regime(self) -> bool:
        return self.beta < THEOREM_BETA_LIMIT

    @property
    def mean_field_budget(self) -> float:
        """1 / (hbar^4 N^beta)."""
        return 1.0 / (self.hbar**4 * self.N**self.beta)

    def as_dict(self) -> dict:
        return {"hbar": self.hbar, "N": self.N, "beta": self.beta, "d": self.d,
                "theorem_regime": self.theorem_regime}


@dataclass
class Potential:
    box: BoxSpec
    profile: np.ndarray
    b0: float
    length: float
    kind: str = "samples"
    # analytic evaluator V(r2) when available; used for exact rescaling
    evaluator: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.box.check(self.profile)
        validate_profile(self.profile, self.box)

    @property
    def moments(self) -> dict:
        return potential_norms(self)


def validate_profile(profile: np.ndarray, box: BoxSpec) -> float:
    """Check evenness, sign and positivity of mass; return b0."""
    if np.iscomplexobj(profile):
        raise ValueError("potential profile must be real")
    if profile.min() < 0:
        raise ValueError("potential must be nonnegative pointwise")
    scale = max(float(np.abs(profile).max()), 1e-300)
    asym = float(np.abs(profile - reflect(profile, box)).max())
    if asym > 1e-12 * scale:
        raise ValueError(f"potential is not even about the box center (asymmetry {asym:.3e})")
    b0 = float(grid.integrate(profile, box))
    if not b0 > 0:
        raise ValueError(
            "coupling constant b0 = int V must be positive: the Euler system is "
            "not hyperbolic for focusing interactions (b0 < 0)")
    return b0


def reflect(f: np.ndarray, box: BoxSpec) -> np.ndarray:
    """f(-x) on the grid: index i maps to (n - i) mod n on every axis."""
    idx = (-np.arange(box.n)) % box.n
    out = f
    for a in range(box.d):
        out = np.take(out, idx, axis=a)
    return out


def gaussian_potential(box: BoxSpec, width: float, amplitude: float) -> Potential:
    """V(x) = amplitude * exp(-|x|^2 / width^2) centered in the box."""
    if not width > 0:
        raise ValueError("width must be positive")
    if amplitude < 0:
        raise ValueError(
            "amplitude must be positive: focusing interactions (b0 < 0) make the "
            "Euler system non-hyperbolic")
    if not amplitude > 0:
        raise ValueError("amplitude must be positive")
    edge = np.exp(-(box.L / 2) ** 2 / width**2)
    if edge > BOUNDARY_DECAY:
        raise ValueError(
            f"width {width} too large for box L={box.L}: profile is {edge:.2e} "
            f"of its peak at the boundary (need < {BOUNDARY_DECAY})")

    def evaluator(r2):
        return amplitude * np.exp(-r2 / width**2)

    profile = evaluator(box.r2)
    b0 = float(grid.integrate(profile, box))
    return Potential(box, profile, b0, width, kind="gaussian", evaluator=evaluator)


def sampled_potential(box: BoxSpec, profile: np.ndarray) -> Potential:
    """Potential from arbitrary even nonnegative samples on ``box``."""
    profile = np.asarray(profile, dtype=float)
    b0 = validate_profile(profile, box)
    if grid.boundary_mass(profile, box) > BOUNDARY_DECAY * profile.max():
        raise ValueError("sampled potential does not decay at the box boundary")
    length = float(np.sqrt(2 * grid.integrate(box.r2 * profile, box) / (box.d * b0)))
    return Potential(box, profile, b0, length, kind="samples")


def scaled_length(V: Potential, N: float, beta: float) -> float:
    return V.length / N**beta


def required_n(V: Potential, N: float, beta: float) -> int:
    """Smallest power-of-two grid meeting the resolution rule."""
    need = MIN_POINTS_PER_WIDTH * V.box.L / scaled_length(V, N, beta)
    n = 8
    while n < need - 1e-9:
        n *= 2
    return n


def mean_field_scale(V: Potential, N: float, beta: float,
                     enforce_resolution: bool = True) -> np.ndarray:
    """V_N(x) = N^{d beta} V(N^beta x) sampled on V's grid (any N > 0).

    ``enforce_resolution=False`` skips the points-per-width rule; the few-body
    solvers use it on grids that are deliberately coarse.
    """
    box = V.box
    if enforce_resolution and box.h > scaled_length(V, N, beta) / MIN_POINTS_PER_WIDTH * (1 + 1e-12):
        raise ResolutionError(
            f"V_N with N={N}, beta={beta} is under-resolved on n={box.n}: "
            f"need n >= {required_n(V, N, beta)} for L={box.L}")
    s = N**beta
    if V.evaluator is not None:
        return s**box.d * V.evaluator(s**2 * box.r2)
    return s**box.d * _trig_rescale(V.profile, box, s)


def scale_potential(V: Potential, scales: PhysicalScales) -> np.ndarray:
    if scales.d != V.box.d:
        raise ValueError("scales and potential disagree on dimension")
    return mean_field_scale(V, scales.N, scales.beta)


def _trig_rescale(profile: np.ndarray, box: BoxSpec, s: float) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``profile`` at s*x (zero outside the box)."""
    x = box.axis_coords
    y = s * x
    inside = np.abs(y) < box.L / 2
    m = np.fft.fftfreq(box.n, d=1.0 / box.n)
    k = 2 * np.pi * m / box.L
    # M[i, j]: value at y_i of the interpolant through unit sample j
    E = np.exp(1j * np.outer(y - x[0], k))
    Finv = np.exp(-1j * np.outer(k, x - x[0])) / box.n
    M = (E @ Finv).real * inside[:, None]
    out = profile
    for a in range(box.d):
        out = np.moveaxis(np.tensordot(M, out, axes=([1], [a])), 0, a)
    return out


def defect_symbol(V: Potential, N: float, beta: float) -> np.ndarray:
    """Fourier symbol of W_N = V_N - b0 delta."""
    VN = mean_field_scale(V, N, beta)
    return grid.kernel_transform(VN, V.box) - V.b0


def mollifier_defects(V: Potential, f: np.ndarray, beta: float, N_list) -> list[float]:
    """||V_N * f - b0 f||_{L^2} for each N."""
    box = V.box
    f = box.check(f)
    F = grid.fft(f, box)
    out = []
    for N in N_list:
        W = defect_symbol(V, N, beta)
        g = grid.ifft(W * F, box)
        out.append(grid.l2_norm(g, box))
    return out


def mollifier_defect_rate(V: Potential, f: np.ndarray, beta: float, N_list) -> RateFit:
    N_list = list(N_list)
    if len(N_list) < 3 or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be ascending with at least three entries")
    return fit_rate(N_list, mollifier_defects(V, f, beta, N_list))


def potential_norms(V: Potential) -> dict:
    """Candidate norms for the interaction-dependent constant."""
    box, p = V.box, V.profile
    grad = grid.gradient(p, box)
    xs = np.stack([x * np.ones(box.shape) for x in box.coords])
    x_dot_grad = (xs * grad).sum(axis=0)
    grad_abs = np.sqrt((grad**2).sum(axis=0))
    return {
        "L1": grid.lp_norm(p, box, 1),
        "L3/2": grid.lp_norm(p, box, 1.5),
        "Linf": float(np.abs(p).max()),
        "x2_grad_L1": float(grid.integrate(box.r2 * grad_abs, box)),
        "x_dot_grad_L1": float(grid.integrate(np.abs(x_dot_grad), box)),
        "japanese_x_L1": float(grid.integrate(np.sqrt(1 + box.r2) * np.abs(p), box)),
    }
