"""Collision operators, the collapsing-estimate probe and collision-history counting."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import BoxSpec
from .nbody import DensityKernel, _pair_matrix
from .rates import fit_rate

HISTORY_BUDGET = 12


@dataclass(frozen=True)
class CollisionHistory:
    k: int
    j: int
    mu: tuple[int, ...]  # mu[i] is the image of k + 1 + i

    def __post_init__(self):
        if len(self.mu) != self.j:
            raise ValueError("map length must equal the depth j")
        for i, m in enumerate(self.mu):
            l = self.k + 1 + i
            if not 1 <= m < l:
                raise ValueError(f"inadmissible map: mu({l}) = {m}")

    def __call__(self, l: int) -> int:
        return self.mu[l - self.k - 1]

    @property
    def nondecreasing(self) -> bool:
        return all(a <= b for a, b in zip(self.mu, self.mu[1:]))


def _check_budget(k: int, j: int) -> None:
    if k < 1 or j < 1:
        raise ValueError("need k >= 1 and j >= 1")
    if k + j > HISTORY_BUDGET:
        raise ValueError(f"k + j = {k + j} exceeds the enumeration budget {HISTORY_BUDGET}")


def admissible_count(k: int, j: int) -> int:
    """(k+j-1)! / (k-1)!"""
    return math.factorial(k + j - 1) // math.factorial(k - 1)


def enumerate_histories(k: int, j: int) -> list[CollisionHistory]:
    _check_budget(k, j)
    ranges = [range(1, l) for l in range(k + 1, k + j + 1)]
    return [CollisionHistory(k, j, mu) for mu in itertools.product(*ranges)]


def km_class_count(k: int, j: int) -> int:
    """Number of admissible maps whose values are nondecreasing.

    Raises AssertionError if the count ever exceeds 2^(k+2j-2).
    """
    _check_budget(k, j)
    # ways[v]: sequences so far ending in value v
    ways = {v: 1 for v in range(1, k + 1)}
    for l in range(k + 2, k + j + 1):
        nxt = {}
        for v in range(1, l):
            nxt[v] = sum(c for u, c in ways.items() if u <= v)
        ways = nxt
    count = sum(ways.values())
    bound = 2 ** (k + 2 * j - 2)
    if count > bound:
        raise AssertionError(f"class count {count} exceeds 2^(k+2j-2) = {bound}")
    return count


# ---------------------------------------------------------------- collision operator

def collision_apply(gamma: DensityKernel, V_N: np.ndarray, j: int, sign: str = "both") -> DensityKernel:
    """B^+ (``"+"``), B^- (``"-"``) or B^+ - B^- (``"both"``) on a kernel of order k+1.

    ``j`` is 1-based and must satisfy 1 <= j <= k.
    """
    k = gamma.k - 1
    if k < 1:
        raise ValueError("collision needs a kernel of order >= 2")
    if not 1 <= j <= k:
        raise IndexError(f"particle index j={j} outside 1..{k}")
    if sign not in ("+", "-", "both"):
        raise ValueError("sign must be '+', '-' or 'both'")
    box = gamma.box
    n = box.n
    # diagonal y = y' over the traced particle, appended as the last axis
    g = np.diagonal(gamma.gamma, axis1=k, axis2=2 * k + 1)
    P = _pair_matrix(V_N, box)

    def side(axis):
        shape = [1] * (2 * k) + [n]
        shape[axis] = n
        return (P.reshape(shape) * g).sum(axis=-1) * box.h

    if sign == "+":
        out = side(j - 1)
    elif sign == "-":
        out = side(k + j - 1)
    else:
        out = side(j - 1) - side(k + j - 1)
    return DensityKernel(out, k, box)


# ---------------------------------------------------------------- collapsing probe

@dataclass
class CollapsingProbeReport:
    d: int
    alpha: float
    hbar_grid: list
    ratios: np.ndarray  # (samples, len(hbar_grid)), max over both signs
    max_ratio_per_hbar: list
    fitted_exponent: float
    samples: int
    seed: int
    T_probe: float
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"d": self.d, "alpha": self.alpha, "hbar_grid": list(self.hbar_grid),
                "max_ratio_per_hbar": list(self.max_ratio_per_hbar),
                "fitted_exponent": self.fitted_exponent, "samples": self.samples,
                "seed": self.seed}


def band_limited_kernel(box: BoxSpec, rng: np.random.Generator, band: int = 3) -> np.ndarray:
    """Random order-two kernel with Fourier support |m| <= band on every axis."""
    n = box.n
    m = np.fft.fftfreq(n, d=1.0 / n)
    keep = np.abs(m) <= band
    F = np.zeros((n,) * 4, dtype=complex)
    idx = np.ix_(keep, keep, keep, keep)
    shape = F[idx].shape
    F[idx] = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    f = np.fft.ifftn(F)
    return f / np.sqrt(np.sum(np.abs(f) ** 2) * box.h**4)


def _japanese(box: BoxSpec, hbar: float) -> np.ndarray:
    return np.sqrt(1.0 + (hbar * box.axis_wavenumbers) ** 2)


def _S_norm2(f: np.ndarray, box: BoxSpec, hbar: float) -> float:
    """|| S_hbar f ||^2 for a kernel over any number of 1-d variables."""
    w = _japanese(box, hbar)
    F = np.fft.fftn(f)
    weight = np.ones(())
    for a in range(f.ndim):
        shape = [1] * f.ndim
        shape[a] = box.n
        weight = weight * w.reshape(shape) ** 2
    return float(np.sum(weight * np.abs(F) ** 2)) * box.h**f.ndim / f.size


def probe_ratio(f: np.ndarray, V: np.ndarray, box: BoxSpec, hbar: float, T_probe: float,
                nodes: int = 96, alpha: float = 1.5) -> dict:
    """LHS / (||V||_1 hbar^-alpha RHS) for B^+ and B^- on one order-two kernel."""
    n = box.n
    k = box.axis_wavenumbers
    F = np.fft.fftn(f)
    omega = 0.5 * hbar * (k[:, None, None, None] ** 2 + k[None, :, None, None] ** 2
                          - k[None, None, :, None] ** 2 - k[None, None, None, :] ** 2)
    x, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * T_probe * (x + 1)
    w = 0.5 * T_probe * w
    P = _pair_matrix(V, box)
    S1 = _japanese(box, hbar)
    S2 = (S1[:, None] * S1[None, :]) ** 2
    lhs2 = {"+": 0.0, "-": 0.0}
    for ti, wi in zip(t, w):
        g = np.fft.ifftn(np.exp(-1j * omega * ti) * F)
        diag = np.einsum("aibi->abi", g)  # (x1, x1', y)
        plus = (P[:, None, :] * diag).sum(axis=-1) * box.h / hbar
        minus = (P[None, :, :] * diag).sum(axis=-1) * box.h / hbar
        for key, b in (("+", plus), ("-", minus)):
            B = np.fft.fft2(b)
            lhs2[key] += wi * float(np.sum(S2 * np.abs(B) ** 2)) * box.h**2 / b.size
    rhs = math.sqrt(_S_norm2(f, box, hbar))
    vnorm = float(np.sum(np.abs(V))) * box.h
    scale = vnorm * hbar**-alpha * rhs
    return {key: (math.sqrt(v) / scale if scale > 0 else 0.0) for key, v in lhs2.items()}


def collapsing_probe(V: np.ndarray, box: BoxSpec, hbar_grid, samples: int, seed: int,
                     T_probe: float = 2.0, band: int = 3, nodes: int = 96) -> CollapsingProbeReport:
    """Random-kernel probe of the hbar-weighted collapsing estimate (d = 1, k = 1).

    Sample ``i`` draws its kernel from ``default_rng(seed + i)``, so any
    partition of the samples across workers reproduces the same report.
    """
    if box.d != 1:
        raise ValueError("the collapsing probe is implemented for d = 1")
    alpha = box.d + 0.5
    hbar_grid = [float(h) for h in hbar_grid]
    ratios = np.zeros((samples, len(hbar_grid)))
    for i in range(samples):
        f = band_limited_kernel(box, np.random.default_rng(seed + i), band)
        for jh, hb in enumerate(hbar_grid):
            r = probe_ratio(f, V, box, hb, T_probe, nodes, alpha)
            ratios[i, jh] = max(r.values())
    max_ratio = ratios.max(axis=0) if samples else np.zeros(len(hbar_grid))
    inv = [1.0 / h for h in hbar_grid]
    exponent = fit_rate(inv, max_ratio).slope if len(hbar_grid) >= 3 and np.all(max_ratio > 0) \
        else math.nan
    return CollapsingProbeReport(box.d, alpha, hbar_grid, ratios, [float(v) for v in max_ratio],
                                 float(exponent), samples, seed, T_probe)
