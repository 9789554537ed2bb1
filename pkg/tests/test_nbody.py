import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elab import grid, hnls, nbody
from elab.acceptance import nbody_scene
from elab.grid import BoxSpec
from elab.potentials import PhysicalScales
from elab.rates import fit_rate


def symmetric_state(box, N, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((box.n,) * N) + 1j * rng.standard_normal((box.n,) * N)
    S = sum(A.transpose(p) for p in itertools.permutations(range(N)))
    return S / math.sqrt(np.sum(np.abs(S) ** 2) * box.h**N)


def plane(box, m):
    xi = 2 * np.pi * m / box.L
    return xi, np.exp(1j * xi * box.axis_coords) / math.sqrt(box.L)


# ---------------------------------------------------------------- wave function

def test_validation():
    box = BoxSpec(1, 8.0, 16)
    sc = PhysicalScales(0.5, 2.0, 0.5)
    psi = symmetric_state(box, 2, 0)
    nbody.NBodyWaveFunction(psi, box, sc)
    with pytest.raises(ValueError, match="normalized"):
        nbody.NBodyWaveFunction(2 * psi, box, sc)
    skew = psi + 0.1 * (np.arange(16)[:, None] - np.arange(16)[None, :])
    skew /= math.sqrt(np.sum(np.abs(skew) ** 2) * box.h**2)
    with pytest.raises(ValueError, match="bosonic"):
        nbody.NBodyWaveFunction(skew, box, sc)
    with pytest.raises(ValueError, match="integer"):
        nbody.NBodyWaveFunction(psi, box, PhysicalScales(0.5, 2.5, 0.5))
    with pytest.raises(ValueError, match="d = 1"):
        nbody.NBodyWaveFunction(psi, BoxSpec(2, 8.0, 16), sc)


def test_memory_cap_names_grid_size():
    box = BoxSpec(1, 8.0, 64)
    with pytest.raises(MemoryError, match="n <= 16"):
        nbody.check_memory(box, 3, cap=2**14)
    nbody.check_memory(box, 2, cap=2**14)


# ---------------------------------------------------------------- stepping

def test_free_product_of_plane_waves():
    box = BoxSpec(1, 2 * np.pi, 16)
    hbar, dt = 0.6, 0.02
    xi, phi = plane(box, 2)
    psi = nbody.product_state(phi, 2)
    wf = nbody.NBodyWaveFunction(psi, box, PhysicalScales(hbar, 2.0, 0.5))
    out = nbody.nbody_step(wf, np.zeros(box.n), dt)
    exact = psi * np.exp(-1j * hbar * xi**2 * dt)
    assert np.abs(out.psi - exact).max() < 1e-12
    assert out.t == dt


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), dt=st.floats(1e-4, 1e-2))
def test_step_preserves_norm(seed, dt):
    box, V_N, _, _ = nbody_scene(2, n=16)
    psi = symmetric_state(box, 2, seed)
    solver = nbody.NBodySolver(box, V_N, 2, 0.5, dt)
    out = solver.step(psi)
    assert abs(math.sqrt(np.sum(np.abs(out) ** 2) * box.h**2) - 1) < 1e-13
    assert nbody.max_transposition_error(out) < 1e-12


@pytest.mark.parametrize("order,dts,ref_dt,tol", [(2, [4e-2, 2e-2, 1e-2], 6.25e-4, 0.2),
                                                   (4, [1e-1, 5e-2, 4e-2], 5e-3, 0.5)])
def test_self_convergence_order(order, dts, ref_dt, tol):
    box, V_N, _, wf = nbody_scene(2, n=16)
    T = 0.2

    def final(dt):
        steps = int(round(T / dt))
        return nbody.evolve_nbody(wf, V_N, dt, steps, steps, order=order).snapshots[-1]

    ref = final(ref_dt)
    errs = [np.abs(final(dt) - ref).max() for dt in dts]
    assert abs(fit_rate(dts, errs).slope - order) < tol


def test_solver_rejects_bad_arguments():
    box, V_N, _, _ = nbody_scene(2, n=16)
    with pytest.raises(ValueError, match="order"):
        nbody.NBodySolver(box, V_N, 2, 0.5, 1e-3, order=3)
    with pytest.raises(ValueError, match="positive"):
        nbody.NBodySolver(box, V_N, 2, 0.5, 0.0)
    with pytest.raises(MemoryError):
        nbody.NBodySolver(box, V_N, 3, 0.5, 1e-3, memory_cap=1000)


# ---------------------------------------------------------------- marginals

def test_product_state_marginal_is_projection():
    box, _, phi, wf = nbody_scene(3, n=16)
    g1 = nbody.marginal(wf.psi, 1, box)
    assert np.abs(g1.gamma - np.outer(phi, phi.conj())).max() < 1e-12
    assert abs(nbody.marginal(wf.psi, 2, box).trace() - 1) < 1e-10


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_kernel_invariants(seed):
    box = BoxSpec(1, 8.0, 8)
    psi = symmetric_state(box, 3, seed)
    g1, g2 = nbody.marginal(psi, 1, box), nbody.marginal(psi, 2, box)
    for g in (g1, g2):
        assert g.hermiticity_error() < 1e-10
        assert abs(g.trace() - 1) < 1e-8
        assert g.min_eigenvalue() >= -1e-8
    assert np.abs(g2.partial_trace().gamma - g1.gamma).max() < 1e-10


def test_marginal_order_checked():
    box = BoxSpec(1, 8.0, 8)
    psi = symmetric_state(box, 2, 1)
    with pytest.raises(ValueError, match="1 <= k"):
        nbody.marginal(psi, 2, box)
    with pytest.raises(ValueError, match="order-one"):
        nbody.marginal(psi, 1, box).partial_trace()


# ---------------------------------------------------------------- trace observables

def test_product_state_pair_pressure():
    box, V_N, phi, wf = nbody_scene(3, n=16)
    obs = nbody.trace_observables(nbody.marginal(wf.psi, 1, box),
                                  nbody.marginal(wf.psi, 2, box), V_N, 0.5)
    rho = np.abs(phi) ** 2
    U = grid.periodic_convolution(V_N, rho, box).real
    assert np.abs(obs.pair_pressure - rho * U).max() < 1e-10
    assert abs(grid.integrate(obs.mass, box) - 1) < 1e-10
    # the diagonal shortcut agrees with the full kernel
    short = nbody.trace_observables(nbody.marginal(wf.psi, 1, box),
                                    nbody.pair_density(wf.psi, box), V_N, 0.5)
    assert np.abs(short.pair_pressure - obs.pair_pressure).max() < 1e-12


def test_real_state_carries_no_momentum():
    box = BoxSpec(1, 8.0, 16)
    psi = symmetric_state(box, 2, 3).real
    psi /= math.sqrt(np.sum(psi**2) * box.h**2)
    obs = nbody.trace_observables(nbody.marginal(psi, 1, box), nbody.pair_density(psi, box),
                                  np.zeros(16), 0.5)
    assert np.abs(obs.momentum).max() < 1e-12


def test_trace_observables_shape_checks():
    box = BoxSpec(1, 8.0, 8)
    psi = symmetric_state(box, 3, 2)
    g1, g2 = nbody.marginal(psi, 1, box), nbody.marginal(psi, 2, box)
    with pytest.raises(ValueError):
        nbody.trace_observables(g2, g2, np.zeros(8), 0.5)
    with pytest.raises(ValueError):
        nbody.trace_observables(g1, np.zeros((8, 4)), np.zeros(8), 0.5)


# ---------------------------------------------------------------- hierarchy

def bbgky(N, dt, k=1, interacting=True, drop=None, T=0.06):
    box, V_N, _, wf = nbody_scene(N, n=16, interacting=interacting)
    tr = nbody.evolve_nbody(wf, V_N, dt, int(round(T / dt)), 1)
    return nbody.bbgky_residual(tr.snapshots, tr.times, k, V_N, box, 0.5, drop).max()


def test_free_hierarchy_residual_is_time_discretization_only():
    a, b = bbgky(2, 4e-3, interacting=False), bbgky(2, 2e-3, interacting=False)
    assert a / b == pytest.approx(4.0, abs=0.3)


@pytest.mark.parametrize("N,k", [(2, 1), (3, 1), (3, 2)])
def test_interacting_residual_refines_at_second_order(N, k):
    assert 3 <= bbgky(N, 4e-3, k) / bbgky(N, 2e-3, k) <= 5


def test_dropping_collision_term_is_detected():
    full = bbgky(2, 2e-3)
    assert bbgky(2, 2e-3, drop="collision") > 10 * full


def test_residual_requires_uniform_cadence():
    box, V_N, _, wf = nbody_scene(2, n=16)
    with pytest.raises(ValueError, match="uniform"):
        nbody.bbgky_residual([wf.psi] * 3, [0.0, 0.1, 0.3], 1, V_N, box, 0.5)


# ---------------------------------------------------------------- energy

def test_plane_wave_energy_moment():
    box = BoxSpec(1, 2 * np.pi, 16)
    xi, phi = plane(box, 3)
    hbar = 0.4
    m = nbody.energy_moment(nbody.product_state(phi, 2), 1, np.zeros(16), box, hbar)
    assert m == pytest.approx(1 + hbar**2 * xi**2 / 2, rel=1e-12)


def test_second_moment_dominates_square_and_is_conserved():
    box, V_N, _, wf = nbody_scene(2, n=16)
    tr = nbody.evolve_nbody(wf, V_N, 1e-2, 30, 10, order=4)
    E1 = [nbody.energy_moment(p, 1, V_N, box, 0.5) for p in tr.snapshots]
    E2 = [nbody.energy_moment(p, 2, V_N, box, 0.5) for p in tr.snapshots]
    assert all(b >= a**2 - 1e-8 for a, b in zip(E1, E2))
    assert max(abs(e - E1[0]) for e in E1) / E1[0] < 1e-8
    with pytest.raises(ValueError, match="k = 1, 2"):
        nbody.energy_moment(wf.psi, 3, V_N, box, 0.5)


# ---------------------------------------------------------------- comparison

def free_runs(N, n=16, steps=20):
    box, V0, phi, wf = nbody_scene(N, n=n, interacting=False)
    tn = nbody.evolve_nbody(wf, V0, 1e-2, steps, 5)
    sc = PhysicalScales(0.5, float(N), 0.5)
    th = hnls.evolve_hnls(hnls.WaveFunction(phi, box, sc), V0, 1e-2, steps, 5)
    return box, V0, tn, th


def test_free_dynamics_agree():
    box, V0, tn, th = free_runs(2)
    recs = nbody.compare_with_hnls(tn.snapshots, th.snapshots, tn.times, th.times, V0, box, 0.5)
    for r in recs:
        assert max(v for k, v in r.items() if k != "t") < 1e-10
    assert max(v for k, v in recs[0].items() if k != "t") < 1e-12


def test_comparison_requires_shared_clock():
    box, V0, tn, th = free_runs(2)
    with pytest.raises(ValueError, match="clock"):
        nbody.compare_with_hnls(tn.snapshots, th.snapshots, tn.times, th.times + 1e-3, V0, box, 0.5)
