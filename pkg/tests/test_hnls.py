import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elab import grid, hnls, modulated, potentials
from elab.grid import BoxSpec
from elab.potentials import PhysicalScales
from elab.rates import fit_rate


BOX = BoxSpec(1, 8.0, 256)


def standard(hbar=0.5, N=4.0):
    V = potentials.gaussian_potential(BOX, 0.5, 2.0)
    sc = PhysicalScales(hbar, N, 0.5)
    rho = grid.gaussian(BOX, 0.5)
    return V, potentials.scale_potential(V, sc), hnls.wkb_initial_data(rho, 0 * rho, BOX, sc)


def plane_wave(box, m):
    xi = 2 * np.pi * m / box.L
    return xi, np.exp(1j * xi * box.coords[0]) * np.ones(box.shape) / np.sqrt(box.L**box.d)


def modulated_kinetic(phi, gradS, hbar, box):
    D = modulated.modulated_derivative(phi, gradS, box, hbar)
    return grid.integrate((np.abs(D) ** 2).sum(axis=0), box)


def sqrt_rho_gradient_sq(rho, box):
    return grid.integrate((grid.gradient(np.sqrt(rho), box) ** 2).sum(axis=0), box)


# ---------------------------------------------------------------- initial data

def test_wkb_real_profile():
    sc = PhysicalScales(0.3, 4.0, 0.5)
    rho = grid.gaussian(BOX, 0.5)
    phi = hnls.wkb_initial_data(rho, np.zeros(BOX.shape), BOX, sc)
    assert not np.any(phi.psi.imag)
    assert phi.psi.real.min() > 0
    assert abs(phi.mass - 1) < 1e-12
    lhs = modulated_kinetic(phi.psi, np.zeros((1,) + BOX.shape), 0.3, BOX)
    rhs = 0.3**2 * sqrt_rho_gradient_sq(rho, BOX)
    assert abs(lhs - rhs) < 1e-10 * rhs


def test_wkb_identity_with_phase():
    box = BoxSpec(1, 8.0, 512)
    x = box.axis_coords
    rho = grid.gaussian(box, 0.5)
    S = 0.4 * np.cos(2 * np.pi * x / box.L)
    gradS = grid.gradient(S, box)
    sc = PhysicalScales(0.1, 4.0, 0.5)
    phi = hnls.wkb_initial_data(rho, S, box, sc)
    lhs = modulated_kinetic(phi.psi, gradS, sc.hbar, box)
    rhs = sc.hbar**2 * sqrt_rho_gradient_sq(rho, box)
    assert abs(lhs - rhs) < 1e-8 * rhs


def test_halving_hbar_quarters_modulated_kinetic_term():
    rho = grid.gaussian(BOX, 0.5)
    vals = []
    for h in (0.4, 0.2):
        phi = hnls.wkb_initial_data(rho, np.zeros(BOX.shape), BOX, PhysicalScales(h, 4.0, 0.5))
        vals.append(modulated_kinetic(phi.psi, np.zeros((1,) + BOX.shape), h, BOX))
    assert vals[0] / vals[1] == pytest.approx(4.0, abs=1e-8)


def test_wkb_domain_errors():
    sc = PhysicalScales(0.3, 4.0, 0.5)
    rho = grid.gaussian(BOX, 0.5)
    with pytest.raises(ValueError, match="nonnegative"):
        hnls.wkb_initial_data(rho - 0.01, 0 * rho, BOX, sc)
    with pytest.raises(ValueError, match="unit mass"):
        hnls.wkb_initial_data(2 * rho, 0 * rho, BOX, sc)
    with pytest.raises(ValueError, match="real"):
        hnls.wkb_initial_data(rho, 1j * rho, BOX, sc)


def test_wave_function_must_be_normalized():
    with pytest.raises(ValueError, match="normalized"):
        hnls.WaveFunction(np.ones(BOX.shape, complex), BOX, PhysicalScales(0.3, 4.0, 0.5))


# ---------------------------------------------------------------- stepping

@pytest.mark.parametrize("d", [1, 2])
def test_free_plane_wave_phase(d):
    box = BoxSpec(d, 2 * np.pi, 32)
    xi, psi = plane_wave(box, 3)
    hbar, dt = 0.7, 0.013
    sc = PhysicalScales(hbar, 4.0, 0.5, d)
    out = hnls.hnls_step(hnls.WaveFunction(psi, box, sc), np.zeros(box.shape), dt)
    assert np.abs(out.psi - psi * np.exp(-0.5j * hbar * xi**2 * dt)).max() < 1e-12
    assert out.t == dt


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), dt=st.floats(1e-4, 5e-2))
def test_step_is_unitary(seed, dt):
    rng = np.random.default_rng(seed)
    V, V_N, _ = standard()
    psi = rng.standard_normal(BOX.n) + 1j * rng.standard_normal(BOX.n)
    psi /= np.sqrt(grid.integrate(np.abs(psi) ** 2, BOX))
    out = hnls.hnls_step(hnls.WaveFunction(psi, BOX, PhysicalScales(0.5, 4.0, 0.5)), V_N, dt)
    assert abs(out.mass - 1) < 1e-13


def test_over_budget_step_warns_but_runs():
    V, V_N, phi = standard(hbar=0.05)
    tr = hnls.evolve_hnls(phi, 50 * V_N, 0.2, 1)
    assert tr.warnings and "budget" in tr.warnings[0]
    assert abs(tr.records[-1]["mass"] - 1) < 1e-12


def test_global_error_is_second_order():
    V, V_N, phi = standard()
    T = 0.5

    def final(dt):
        return hnls.evolve_hnls(phi, V_N, dt, int(round(T / dt)), int(round(T / dt)),
                                ).snapshots[-1]

    ref = final(2.5e-4)
    dts = [4e-3, 2e-3, 1e-3]
    errs = [grid.l2_norm(final(dt) - ref, BOX) for dt in dts]
    assert abs(fit_rate(dts, errs).slope - 2) < 0.2


def test_fused_advance_matches_single_steps():
    V, V_N, phi = standard()
    solver = hnls.HNLSSolver(BOX, V_N, 0.5, 1e-2)
    a = solver.advance(phi.psi, 7)
    b = phi.psi
    for _ in range(7):
        b = solver.step(b)
    assert np.abs(a - b).max() < 1e-13


# ---------------------------------------------------------------- energy and densities

def test_energy_of_plane_wave():
    box = BoxSpec(1, 4.0, 64)
    xi, psi = plane_wave(box, 2)
    e = hnls.hnls_energy(psi, np.zeros(box.shape), box, 0.3)
    assert e.total == pytest.approx(0.5 * 0.09 * xi**2, rel=1e-12)
    assert e.interaction == 0


def test_kinetic_energy_of_real_function():
    V, V_N, phi = standard(hbar=0.25)
    e = hnls.hnls_energy(phi, V_N)
    direct = 0.5 * 0.25**2 * grid.integrate(grid.gradient(phi.psi.real, BOX)[0] ** 2, BOX)
    assert e.kinetic == pytest.approx(direct, rel=1e-12)


def test_conservation_over_unit_time():
    V, V_N, phi = standard()
    tr = hnls.evolve_hnls(phi, V_N, 1e-3, 1000, 100, keep=False)
    mass = np.array([r["mass"] for r in tr.records])
    E = np.array([r["energy_kinetic"] + r["energy_interaction"] for r in tr.records])
    assert np.abs(mass - 1).max() < 1e-10
    assert np.abs(E - E[0]).max() / E[0] < 1e-6
    assert tr.snapshots == []


def test_real_wave_has_no_current():
    _, _, phi = standard()
    assert np.abs(hnls.densities(phi).J).max() < 1e-12


def test_wkb_current_is_rho_grad_S():
    x = BOX.axis_coords
    rho = grid.gaussian(BOX, 0.5)
    S = 0.3 * np.sin(2 * np.pi * x / BOX.L) + 0.1 * np.cos(4 * np.pi * x / BOX.L)
    sc = PhysicalScales(0.2, 4.0, 0.5)
    dens = hnls.densities(hnls.wkb_initial_data(rho, S, BOX, sc))
    assert np.abs(dens.J - rho * grid.gradient(S, BOX)).max() < 1e-8
    assert dens.rho.min() >= -1e-12


def test_raw_arrays_need_box_and_hbar():
    _, _, phi = standard()
    with pytest.raises(TypeError):
        hnls.densities(phi.psi)


def test_local_conservation_residuals_second_order():
    V, V_N, phi = standard()
    cont, mom = [], []
    dts = [4e-3, 2e-3, 1e-3]
    for dt in dts:
        tr = hnls.evolve_hnls(phi, V_N, dt, int(round(0.1 / dt)), 1)
        c, m = hnls.local_conservation_residuals(tr.snapshots, tr.times, BOX, 0.5, V_N)
        cont.append(c.max())
        mom.append(m.max())
    assert abs(fit_rate(dts, cont).slope - 2) <= 0.3
    assert abs(fit_rate(dts, mom).slope - 2) <= 0.3


def test_residuals_require_uniform_cadence():
    _, V_N, phi = standard()
    snaps = [phi.psi] * 3
    with pytest.raises(ValueError, match="uniform"):
        hnls.local_conservation_residuals(snaps, [0.0, 0.1, 0.3], BOX, 0.5, V_N)


def test_pressure_defect_decreases_with_N():
    box = BoxSpec(1, 8.0, 2048)
    V = potentials.gaussian_potential(box, 0.5, 2.0)
    rho = grid.gaussian(box, 0.5)
    phi = np.sqrt(rho)
    Ns = [4.0, 16.0, 64.0, 256.0]
    defects = [hnls.pressure_defect(phi, grid.kernel_transform(
        potentials.mean_field_scale(V, N, 0.5), box), box, V.b0) for N in Ns]
    assert fit_rate(Ns, defects).slope <= -0.5 + 0.1
