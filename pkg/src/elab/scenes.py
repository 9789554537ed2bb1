"""Named initial-data recipes shared by the pipelines and the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid
from .grid import BoxSpec


@dataclass
class SceneData:
    """Fluid data (rho, u) and wave-function data sqrt(rho_phi) exp(i S_phi / hbar)."""
    rho: np.ndarray
    u: np.ndarray
    rho_phi: np.ndarray
    S_phi: np.ndarray
    matched: bool


def _normalized(f: np.ndarray, box: BoxSpec) -> np.ndarray:
    return f / grid.integrate(f, box)


def _sine_flow(box: BoxSpec, a: float):
    """u = -a sin(2 pi x / L) e_1 and its potential S with grad S = u."""
    kx = 2 * np.pi / box.L
    x = box.coords[0] * np.ones(box.shape)
    u = np.zeros((box.d,) + box.shape)
    u[0] = -a * np.sin(kx * x)
    S = (a / kx) * np.cos(kx * x)
    return u, S


def gaussian_rest(box: BoxSpec, sigma: float = 0.5) -> SceneData:
    rho = _normalized(grid.gaussian(box, sigma), box)
    zero = np.zeros(box.shape)
    return SceneData(rho, np.zeros((box.d,) + box.shape), rho, zero, True)


def wkb_sine(box: BoxSpec, sigma: float = 0.5, amplitude: float = 0.5) -> SceneData:
    rho = _normalized(grid.gaussian(box, sigma), box)
    u, S = _sine_flow(box, amplitude)
    return SceneData(rho, u, rho, S, True)


def generic(box: BoxSpec, sigma: float = 0.5, amplitude: float = 0.5, sigma_phi: float = 0.6,
            shift: float = 0.3, phase: float = 0.3) -> SceneData:
    """Fluid and wave function deliberately mismatched in width, center and phase."""
    rho = _normalized(grid.gaussian(box, sigma), box)
    u, _ = _sine_flow(box, amplitude)
    center = (shift,) + (0.0,) * (box.d - 1)
    rho_phi = _normalized(grid.gaussian(box, sigma_phi, center=center), box)
    kx = 2 * np.pi / box.L
    S_phi = phase * np.cos(kx * box.coords[0]) * np.ones(box.shape)
    return SceneData(rho, u, rho_phi, S_phi, False)


def equilibrium(box: BoxSpec) -> SceneData:
    rho = np.full(box.shape, 1.0 / box.L**box.d)
    zero = np.zeros(box.shape)
    return SceneData(rho, np.zeros((box.d,) + box.shape), rho, zero, True)


def acoustic(box: BoxSpec, b0: float, eps: float = 1e-4, mode: int = 1) -> SceneData:
    """Small right-moving sound wave on the uniform state: u = c eps cos(kx)."""
    rho0 = 1.0 / box.L**box.d
    c = np.sqrt(b0 * rho0)
    kx = 2 * np.pi * mode / box.L
    wave = np.cos(kx * box.coords[0]) * np.ones(box.shape)
    rho = rho0 * (1 + eps * wave)
    u = np.zeros((box.d,) + box.shape)
    u[0] = c * eps * wave
    return SceneData(rho, u, rho, np.zeros(box.shape), False)


RECIPES = {
    "gaussian_rest": gaussian_rest,
    "wkb_sine": wkb_sine,
    "generic": generic,
    "equilibrium": equilibrium,
    "acoustic": acoustic,
}


def build(name: str, box: BoxSpec, **params) -> SceneData:
    try:
        recipe = RECIPES[name]
    except KeyError:
        raise KeyError(f"unknown scene {name!r}; known: {sorted(RECIPES)}") from None
    return recipe(box, **params)
