import numpy as np
import pytest

from elab import grid, scenes
from elab.grid import BoxSpec

BOX = BoxSpec(1, 8.0, 256)


@pytest.mark.parametrize("name", ["gaussian_rest", "wkb_sine", "generic", "equilibrium"])
def test_densities_are_probability(name):
    s = scenes.build(name, BOX)
    for rho in (s.rho, s.rho_phi):
        assert rho.min() >= 0
        assert abs(grid.integrate(rho, BOX) - 1) < 1e-12
    assert s.u.shape == (1,) + BOX.shape


def test_wkb_velocity_is_phase_gradient():
    s = scenes.build("wkb_sine", BOX)
    assert s.matched
    assert np.abs(grid.gradient(s.S_phi, BOX) - s.u).max() < 1e-10


def test_generic_is_mismatched():
    s = scenes.build("generic", BOX)
    assert not s.matched
    assert np.abs(s.rho - s.rho_phi).max() > 0.01


def test_acoustic_mode():
    s = scenes.build("acoustic", BOX, b0=1.0, eps=1e-3)
    rho0 = 1 / BOX.L
    assert abs(grid.integrate(s.rho, BOX) - 1) < 1e-12
    assert np.abs(s.u[0] - np.sqrt(rho0) * (s.rho - rho0) / rho0).max() < 1e-12


def test_unknown_scene():
    with pytest.raises(KeyError, match="known"):
        scenes.build("vortex", BOX)
