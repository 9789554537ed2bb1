import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elab import euler, grid, hnls, modulated, potentials, scenes
from elab.euler import FluidState
from elab.grid import BoxSpec
from elab.potentials import PhysicalScales

BOX = BoxSpec(1, 8.0, 512)


def setup(N=16.0, hbar=0.3, amplitude=2.0, scene="wkb_sine", box=BOX, **params):
    V = potentials.gaussian_potential(box, 0.5, amplitude)
    sc = PhysicalScales(hbar, N, 0.5)
    V_N = potentials.scale_potential(V, sc)
    s = scenes.build(scene, box, **params)
    phi = hnls.wkb_initial_data(s.rho_phi, s.S_phi, box, sc)
    return V, grid.kernel_transform(V_N, box), phi.psi, FluidState(s.rho, s.u, box)


def defect_pairing(Vhat, b0, rho, box):
    """<W_N * rho, rho> with W_N = V_N - b0 delta."""
    return grid.integrate(rho * grid.convolve_with(Vhat, rho, box, real=True), box) \
        - b0 * grid.integrate(rho**2, box)


def test_breakdown_terms_sum_to_total():
    V, Vhat, psi, st_ = setup(scene="generic")
    m = modulated.modulated_energy(psi, st_, Vhat, V.b0, 0.3)
    parts = m.kinetic_mod + m.interaction + m.euler_sq + m.cross
    assert abs(m.total - parts) < 1e-12
    assert m.as_dict()["total"] == m.total


@pytest.mark.parametrize("scene", ["generic", "wkb_sine", "gaussian_rest"])
def test_two_assemblies_agree(scene):
    V, Vhat, psi, st_ = setup(scene=scene)
    a = modulated.modulated_energy(psi, st_, Vhat, V.b0, 0.3).total
    b = modulated.modulated_energy_regrouped(psi, st_, Vhat, V.b0, 0.3)
    assert abs(a - b) < 1e-12 * max(1.0, abs(a))


def test_matched_wkb_energy():
    hbar = 0.3
    V, Vhat, psi, st_ = setup(hbar=hbar)
    rho = st_.rho
    expected = 0.5 * hbar**2 * grid.integrate(grid.gradient(np.sqrt(rho), BOX)[0] ** 2, BOX) \
        + 0.5 * defect_pairing(Vhat, V.b0, rho, BOX)
    got = modulated.modulated_energy(psi, st_, Vhat, V.b0, hbar).total
    assert got == pytest.approx(expected, rel=1e-8)


def test_real_profile_at_rest():
    hbar = 0.4
    V, Vhat, psi, st_ = setup(hbar=hbar, scene="gaussian_rest")
    expected = 0.5 * hbar**2 * grid.integrate(grid.gradient(psi.real, BOX)[0] ** 2, BOX) \
        + 0.5 * defect_pairing(Vhat, V.b0, st_.rho, BOX)
    got = modulated.modulated_energy(psi, st_, Vhat, V.b0, hbar).total
    assert got == pytest.approx(expected, rel=1e-12)


def test_doubling_V_doubles_potential_terms():
    V1, Vhat1, psi, st_ = setup(scene="generic", amplitude=1.0)
    V2, Vhat2, _, _ = setup(scene="generic", amplitude=2.0)
    a = modulated.modulated_energy(psi, st_, Vhat1, V1.b0, 0.3)
    b = modulated.modulated_energy(psi, st_, Vhat2, V2.b0, 0.3)
    assert b.interaction + b.euler_sq + b.cross == pytest.approx(
        2 * (a.interaction + a.euler_sq + a.cross), rel=1e-12)
    assert b.kinetic_mod == a.kinetic_mod


def test_box_mismatch_rejected():
    V, Vhat, psi, st_ = setup()
    other = FluidState(st_.rho[::2], st_.u[:, ::2], BOX.with_n(256))
    with pytest.raises(ValueError, match="shape"):
        modulated.modulated_energy(psi, other, Vhat, V.b0, 0.3)


def test_precomputed_inputs_change_nothing():
    V, Vhat, psi, st_ = setup(scene="generic")
    plain = modulated.modulated_energy(psi, st_, Vhat, V.b0, 0.3)
    U = grid.convolve_with(Vhat, np.abs(psi) ** 2, BOX, real=True)
    fast = modulated.modulated_energy(psi, st_, Vhat, V.b0, 0.3,
                                      grad_psi=grid.gradient(psi, BOX), U=U)
    assert fast == plain


# ---------------------------------------------------------------- error term

def test_error_term_vanishes_at_rest():
    V, Vhat, psi, st_ = setup(scene="gaussian_rest")
    assert modulated.error_term(psi, st_, Vhat, V.b0).value == 0.0


WIDE = BoxSpec(1, 8.0, 2048)


def test_error_term_shrinks_with_N():
    vals = []
    for N in (4.0, 256.0):
        V, Vhat, psi, st_ = setup(N=N, scene="gaussian_rest", box=WIDE)
        u = 0.7 * np.sin(2 * np.pi * WIDE.coords[0] / WIDE.L)
        moving = FluidState(st_.rho, u[None], WIDE)
        vals.append(abs(modulated.error_term(psi, moving, Vhat, V.b0).value))
    assert vals[1] < vals[0]


def test_error_term_scaled_by_budget_is_bounded():
    scaled = []
    for hbar in (0.1, 0.2):
        for N in (16.0, 64.0, 256.0):
            V, Vhat, psi, st_ = setup(N=N, hbar=hbar, box=WIDE)
            e = modulated.error_term(psi, st_, Vhat, V.b0, hbar, N, 0.5)
            assert e.budget == pytest.approx(1 / (hbar**4 * N**0.5))
            scaled.append(abs(e.value) / e.budget)
    assert max(scaled) < 1.0


# ---------------------------------------------------------------- evolution identity

def run_audit(scene, dt, T=0.048, hbar=0.5, N=16.0):
    box, ebox = BoxSpec(1, 8.0, 512), BoxSpec(1, 8.0, 128)
    V = potentials.gaussian_potential(box, 0.5, 2.0)
    sc = PhysicalScales(hbar, N, 0.5)
    V_N = potentials.scale_potential(V, sc)
    fine, coarse = scenes.build(scene, box), scenes.build(scene, ebox)
    phi = hnls.wkb_initial_data(fine.rho_phi, fine.S_phi, box, sc)
    steps = int(round(T / dt))
    er = euler.evolve_euler(FluidState(coarse.rho, coarse.u, ebox), T, dt, V.b0)
    tr = hnls.evolve_hnls(phi, V_N, dt, steps, 1)
    states = [s.resampled(box.n) for s in er.states]
    return modulated.evolution_audit(tr.times, tr.snapshots, er.times, states,
                                     grid.kernel_transform(V_N, box), V.b0, hbar)


def test_equilibrium_audit_is_silent():
    audit = run_audit("equilibrium", 4e-3)
    for a in audit.audits:
        assert abs(a.rhs_strain) + abs(a.rhs_div) + abs(a.rhs_hbar) + abs(a.rhs_err) < 1e-14
    assert audit.max_residual < 1e-12


def test_audit_residual_is_second_order_and_detects_omissions():
    coarse, fine = run_audit("generic", 4e-3), run_audit("generic", 2e-3)
    assert 3 <= coarse.max_residual / fine.max_residual <= 5
    assert all(r > 10 for r in fine.detection_ratios.values())


def test_dropped_hbar_term_shows_up_at_its_size():
    audit = run_audit("generic", 2e-3)
    a = audit.audits[len(audit.audits) // 2]
    assert abs(a.residual_without("rhs_hbar") - a.residual) == pytest.approx(abs(a.rhs_hbar))


def test_audit_rejects_clock_mismatch():
    V, Vhat, psi, st_ = setup()
    with pytest.raises(ValueError, match="clock"):
        modulated.evolution_audit([0, 1, 2], [psi] * 3, [0, 1, 3], [st_] * 3, Vhat, V.b0, 0.3)
    with pytest.raises(ValueError, match="uniform"):
        modulated.audit_from_series([0, 1, 3], [0, 0, 0], [{}] * 3)


# ---------------------------------------------------------------- Gronwall certificate

def test_constant_series_needs_no_growth():
    t = np.linspace(0, 1, 50)
    g = modulated.gronwall_certificate(t, np.full(50, 0.3), 0.1, 1e4, 0.5)
    assert g.C_star == 0 and g.holds and g.lower_bound_ok


@pytest.mark.parametrize("rate", [2.0, 10.0, 25.0])
def test_injected_growth_is_recovered(rate):
    t = np.linspace(0, 0.5, 101)
    C = modulated.gronwall_certificate(t, np.exp(rate * t), 0.1, 1e30, 0.5).C_star
    assert C == pytest.approx(rate, rel=0.1)


@settings(max_examples=30, deadline=None)
@given(rate=st.floats(0.1, 20), M0=st.floats(1e-3, 10), hbar=st.floats(0.05, 1), N=st.floats(2, 1e8))
def test_certificate_holds_with_lower_bound(rate, M0, hbar, N):
    t = np.linspace(0, 0.3, 31)
    M = M0 * np.exp(rate * t) - 0.5 * M0 * np.sin(3 * t) ** 2
    g = modulated.gronwall_certificate(t, M, hbar, N, 0.5)
    assert g.holds
    assert np.all(M + g.C_star * g.budget >= -1e-12 * np.abs(M).max())


def test_budget_override_and_growth_constant():
    t = np.linspace(0, 0.5, 51)
    M = 1e-3 * np.exp(4 * t)
    big = modulated.gronwall_certificate(t, M, 0.1, 10.0, 0.5)
    assert big.budget == pytest.approx(1 / (0.1**4 * 10**0.5))
    assert modulated.growth_constant(t, M / M[0], 1e-3) == pytest.approx(4.0, rel=0.1)
    # the hbar^2 t allowance lowers the constant for a small series
    assert modulated.growth_constant(t, M, 0.1) < 4.0
    # a large budget absorbs the growth
    assert big.C_star < 1.0


def test_certificate_rejects_empty_series():
    with pytest.raises(ValueError, match="empty"):
        modulated.gronwall_certificate([], [], 0.1, 10.0, 0.5)


def test_certificate_window():
    t = np.linspace(0, 1, 101)
    M = np.where(t < 0.5, 1.0, np.exp(10 * (t - 0.5)))
    assert modulated.gronwall_certificate(t, M, 0.1, 1e30, 0.5, T0=0.5).C_star == 0


def test_certificate_spread():
    def rep(c):
        return modulated.GronwallReport(c, True, 1.0, 0.1, 10.0, 0.5, True)
    assert modulated.certificate_spread([rep(1.0), rep(1.5)]) == 1.5
    assert modulated.certificate_spread([rep(0.0), rep(0.0)]) == 1.0
    assert math.isinf(modulated.certificate_spread([rep(0.0), rep(1.0)]))
