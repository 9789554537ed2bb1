"""Periodic-box discretization and spectral calculus.

Fields are plain numpy arrays of shape ``box.shape`` (scalars) or
``(d,) + box.shape`` (vectors).  Grid coordinates run over
``[-L/2, L/2)`` on every axis so the box center sits at index ``n // 2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class BoxSpec:
    d: int
    L: float
    n: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not self.L > 0:
            raise ValueError(f"box length must be positive, got {self.L}")
        n = int(self.n)
        if n < 8 or n & (n - 1):
            raise ValueError(f"points per axis must be a power of two >= 8, got {self.n}")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def dv(self) -> float:
        """Quadrature weight h**d."""
        return self.h ** self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n ** self.d

    @cached_property
    def axis_coords(self) -> np.ndarray:
        return -0.5 * self.L + self.h * np.arange(self.n)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per axis."""
        return tuple(_along(self.axis_coords, a, self.d) for a in range(self.d))

    @cached_property
    def r2(self) -> np.ndarray:
        return sum(x**2 for x in self.coords) * np.ones(self.shape)

    @cached_property
    def axis_wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        return tuple(_along(self.axis_wavenumbers, a, self.d) for a in range(self.d))

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers) * np.ones(self.shape)

    @cached_property
    def _odd_wavenumbers(self) -> tuple[np.ndarray, ...]:
        # Nyquist mode zeroed for odd derivatives so real fields stay real
        k = self.axis_wavenumbers.copy()
        k[self.n // 2] = 0.0
        return tuple(_along(k, a, self.d) for a in range(self.d))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep modes with |m| < n/3 on every axis."""
        m = np.abs(np.fft.fftfreq(self.n, d=1.0 / self.n))
        keep = m < self.n / 3
        mask = np.ones(self.shape, dtype=bool)
        for a in range(self.d):
            mask = mask & _along(keep, a, self.d)
        return mask

    def check(self, f: np.ndarray, vector: bool = False) -> np.ndarray:
        f = np.asarray(f)
        want = ((self.d,) if vector else ()) + self.shape
        if f.shape != want:
            raise ValueError(f"field shape {f.shape} does not match box shape {want}")
        return f

    def with_n(self, n: int) -> "BoxSpec":
        return BoxSpec(self.d, self.L, n)


def _along(v: np.ndarray, axis: int, d: int) -> np.ndarray:
    shape = [1] * d
    shape[axis] = -1
    return v.reshape(shape)


def _is_real(f) -> bool:
    return not np.iscomplexobj(f)


def _restore(out: np.ndarray, real: bool) -> np.ndarray:
    return out.real if real else out


def fft(f: np.ndarray, box: BoxSpec) -> np.ndarray:
    axes = tuple(range(-box.d, 0))
    return np.fft.fftn(f, axes=axes)


def ifft(F: np.ndarray, box: BoxSpec) -> np.ndarray:
    axes = tuple(range(-box.d, 0))
    return np.fft.ifftn(F, axes=axes)


def spectral_derivative(f: np.ndarray, box: BoxSpec, axis: int, order: int = 1) -> np.ndarray:
    """Fourier-multiplier derivative of order ``order`` along ``axis``."""
    if not 0 <= axis < box.d:
        raise ValueError(f"axis {axis} out of range for d={box.d}")
    f = box.check(f)
    k = (box._odd_wavenumbers if order % 2 else box.wavenumbers)[axis]
    out = ifft((1j * k) ** order * fft(f, box), box)
    return _restore(out, _is_real(f))


def gradient(f: np.ndarray, box: BoxSpec) -> np.ndarray:
    f = box.check(f)
    F = fft(f, box)
    out = np.stack([ifft(1j * k * F, box) for k in box._odd_wavenumbers])
    return _restore(out, _is_real(f))


def divergence(v: np.ndarray, box: BoxSpec) -> np.ndarray:
    v = box.check(v, vector=True)
    F = sum(1j * k * fft(v[a], box) for a, k in enumerate(box._odd_wavenumbers))
    return _restore(ifft(F, box), _is_real(v))


def laplacian(f: np.ndarray, box: BoxSpec) -> np.ndarray:
    f = box.check(f)
    return _restore(ifft(-box.k2 * fft(f, box), box), _is_real(f))


def kernel_transform(g: np.ndarray, box: BoxSpec) -> np.ndarray:
    """Fourier symbol of convolution with ``g`` (sampled about the box center)."""
    g = box.check(g)
    axes = tuple(range(box.d))
    return fft(np.fft.ifftshift(g, axes=axes), box) * box.dv


def convolve_with(ghat: np.ndarray, f: np.ndarray, box: BoxSpec, real: bool | None = None) -> np.ndarray:
    """Convolution with a kernel given by its precomputed symbol.

    With ``real`` set (or inferred from a real ``f``) the kernel is taken to be
    real as well, and the half-spectrum transform is used.
    """
    if real is None:
        real = _is_real(f)
    if real and _is_real(f):
        axes = tuple(range(-box.d, 0))
        half = ghat[..., : box.n // 2 + 1]
        return np.fft.irfftn(half * np.fft.rfftn(f, axes=axes), s=box.shape, axes=axes)
    out = ifft(ghat * fft(f, box), box)
    return out.real if real else out


def periodic_convolution(f: np.ndarray, g: np.ndarray, box: BoxSpec) -> np.ndarray:
    """(f*g)(x) = sum_y f(x - y) g(y) h^d on the periodic grid."""
    f = box.check(f)
    g = box.check(g)
    real = _is_real(f) and _is_real(g)
    return convolve_with(kernel_transform(f, box), g, box, real=real)


def integrate(f: np.ndarray, box: BoxSpec):
    f = np.asarray(f)
    return f.sum(axis=tuple(range(-box.d, 0))) * box.dv


def lp_norm(f: np.ndarray, box: BoxSpec, p: float = 2.0) -> float:
    a = np.abs(np.asarray(f))
    if a.ndim == box.d + 1:
        a = np.sqrt((a**2).sum(axis=0))
    if np.isinf(p):
        return float(a.max())
    return float(integrate(a**p, box) ** (1.0 / p))


def l2_norm(f: np.ndarray, box: BoxSpec) -> float:
    return lp_norm(f, box, 2.0)


def spectral_l2_norm(f: np.ndarray, box: BoxSpec) -> float:
    F = fft(box.check(f), box)
    return float(np.sqrt(np.sum(np.abs(F) ** 2) * box.dv / box.size))


def weighted_sobolev_norm(f: np.ndarray, box: BoxSpec, hbar: float) -> float:
    """||<hbar grad> f||_{L^2} computed on the Fourier side."""
    if not hbar > 0:
        raise ValueError("hbar must be positive")
    F = fft(box.check(f), box)
    w = 1.0 + hbar**2 * box.k2
    return float(np.sqrt(np.sum(w * np.abs(F) ** 2) * box.dv / box.size))


def fourier_resample(f: np.ndarray, box: BoxSpec, n_new: int) -> np.ndarray:
    """Trigonometric interpolation of ``f`` onto an ``n_new``-point grid of the same box."""
    f = box.check(f)
    n = box.n
    if n_new == n:
        return f.copy()
    F = np.fft.fftshift(fft(f, box), axes=tuple(range(-box.d, 0)))
    if n_new > n:
        pad = (n_new - n) // 2
        # split the Nyquist row so the interpolant of a real field stays real
        G = np.zeros((n_new,) * box.d, dtype=complex)
        G[(slice(pad, pad + n + 1),) * box.d] = _split_nyquist(F, box.d)
    else:
        cut = (n - n_new) // 2
        G = F[(slice(cut, cut + n_new),) * box.d]
    G = np.fft.ifftshift(G, axes=tuple(range(-box.d, 0)))
    out = np.fft.ifftn(G, axes=tuple(range(-box.d, 0))) * (n_new / n) ** box.d
    return _restore(out, _is_real(f))


def _split_nyquist(F: np.ndarray, d: int) -> np.ndarray:
    """Extend a shifted spectrum by one row per axis, halving Nyquist entries."""
    for a in range(d):
        first = np.take(F, [0], axis=a) * 0.5
        F = np.concatenate([first, np.take(F, range(1, F.shape[a]), axis=a), first], axis=a)
    return F


def band_tail_fraction(f: np.ndarray, box: BoxSpec) -> float:
    """Spectral energy fraction at |m| >= 2n/9: the top third of the dealiased
    band together with everything beyond it."""
    F = np.abs(fft(f, box)) ** 2
    m = np.abs(np.fft.fftfreq(box.n, d=1.0 / box.n))
    mmax = np.maximum.reduce([_along(m, a, box.d) * np.ones(box.shape) for a in range(box.d)])
    cut = box.n / 3
    tail = mmax >= 2 * cut / 3
    F = F.reshape((-1,) + box.shape)
    total = F.sum(axis=0)
    total[(0,) * box.d] = 0.0
    s = total.sum()
    return float(total[tail].sum() / s) if s > 0 else 0.0


def boundary_mass(f: np.ndarray, box: BoxSpec) -> float:
    """max |f| over the outermost grid shell."""
    a = np.abs(box.check(f))
    m = 0.0
    for ax in range(box.d):
        m = max(m, float(np.take(a, 0, axis=ax).max()), float(np.take(a, -1, axis=ax).max()))
    return m


def gaussian(box: BoxSpec, sigma: float, center=None) -> np.ndarray:
    """Normalized isotropic Gaussian density with standard deviation ``sigma``."""
    if center is None:
        center = (0.0,) * box.d
    r2 = sum((x - c) ** 2 for x, c in zip(box.coords, center)) * np.ones(box.shape)
    return np.exp(-r2 / (2 * sigma**2)) / (2 * np.pi * sigma**2) ** (box.d / 2)


def grid_delta(box: BoxSpec) -> np.ndarray:
    """Discrete delta of unit mass at the box center."""
    f = np.zeros(box.shape)
    f[(box.n // 2,) * box.d] = 1.0 / box.dv
    return f
