"""Acceptance suite: twelve numbered checks with runtime budgets.

Each check returns a ``CriterionResult``; ``run_acceptance`` runs a selection
and shares expensive sweeps between checks through an ``AcceptanceContext``.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import euler, grid, hierarchy, hnls, modulated, nbody, potentials, scenes, study
from .grid import BoxSpec
from .potentials import PhysicalScales
from .rates import fit_rate

L_STD = 8.0
V_STD = study.PotentialSpec(0.5, 2.0)
SINE = (("amplitude", 0.5), ("sigma", 0.5))
REST = (("sigma", 0.5),)
SWEEP_HBARS = (0.2, 0.1, 0.05)
DIAGONAL = ((0.2, 16.0), (0.1, 256.0), (0.05, 4096.0))


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    seconds: float
    budget: float
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.number:2d} {self.title} ({self.seconds:.1f}s / {self.budget:g}s)"

    def as_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": self.passed,
                "seconds": self.seconds, "budget": self.budget, "detail": self.detail}


@dataclass
class AcceptanceContext:
    threads: int = 1
    cache: dict = field(default_factory=dict)
    # (owning criterion, seconds) for every cached result
    cost: dict = field(default_factory=dict)

    def get(self, key, producer, owner: int):
        if key not in self.cache:
            t0 = time.perf_counter()
            self.cache[key] = producer()
            self.cost[key] = (owner, time.perf_counter() - t0)
        return self.cache[key]


def _std_box(n: int = 256) -> BoxSpec:
    return BoxSpec(1, L_STD, n)


def _sweep_jobs(scene, params, pairs, T=0.3, dt=1e-3, every=3, euler_n=512):
    jobs = []
    for h, N in pairs:
        V = V_STD.build(_std_box(1024))
        n = max(1024, potentials.required_n(V, N, 0.5))
        jobs.append(study.Job(scene, params, L_STD, n, euler_n, V_STD, h, N, 0.5, dt, T, every))
    return jobs


def semiclassical_sweep(ctx: AcceptanceContext, scene: str = "wkb_sine"):
    params = SINE if scene == "wkb_sine" else REST
    pairs = [(h, 1e6) for h in SWEEP_HBARS]
    return ctx.get(("sweep", scene),
                   lambda: study.run_jobs(_sweep_jobs(scene, params, pairs), ctx.threads),
                   owner=5 if scene == "wkb_sine" else 8)


def diagonal_sweep(ctx: AcceptanceContext):
    return ctx.get(("diagonal",),
                   lambda: study.run_jobs(_sweep_jobs("wkb_sine", SINE, DIAGONAL), ctx.threads),
                   owner=7)


def _hnls_standard(hbar=0.5, N=4.0, n=256):
    box = _std_box(n)
    V = V_STD.build(box)
    sc = PhysicalScales(hbar, N, 0.5)
    V_N = potentials.scale_potential(V, sc)
    s = scenes.build("gaussian_rest", box)
    phi = hnls.wkb_initial_data(s.rho_phi, s.S_phi, box, sc)
    return box, V, V_N, phi


# ---------------------------------------------------------------- criteria

def c1_conservation(ctx):
    box, V, V_N, phi = _hnls_standard()
    tr = hnls.evolve_hnls(phi, V_N, 1e-3, 1000, 1, keep=False)
    m = np.array([r["mass"] for r in tr.records])
    E = np.array([r["energy_kinetic"] + r["energy_interaction"] for r in tr.records])
    mass_drift = float(np.abs(m - m[0]).max())
    energy_drift = float(np.abs(E - E[0]).max() / abs(E[0]))
    return mass_drift < 1e-10 and energy_drift < 1e-6, {
        "mass_drift": mass_drift, "relative_energy_drift": energy_drift}


def c2_local_conservation(ctx):
    box, V, V_N, phi = _hnls_standard()
    dts = [4e-3, 2e-3, 1e-3]
    cont, mom = [], []
    for dt in dts:
        tr = hnls.evolve_hnls(phi, V_N, dt, int(round(0.2 / dt)), 1)
        c, m = hnls.local_conservation_residuals(tr.snapshots, tr.times, box, phi.scales.hbar, V_N)
        cont.append(c.max())
        mom.append(m.max())
    oc = fit_rate(dts, cont).slope
    om = fit_rate(dts, mom).slope
    ok = abs(oc - 2) <= 0.3 and abs(om - 2) <= 0.3
    return ok, {"continuity_order": oc, "momentum_order": om,
                "continuity": cont, "momentum": mom}


def generic_audit(dt: float, T: float = 0.2, hbar: float = 0.5, N: float = 16.0):
    box = _std_box(512)
    ebox = _std_box(128)
    V = V_STD.build(box)
    sc = PhysicalScales(hbar, N, 0.5)
    V_N = potentials.scale_potential(V, sc)
    Vhat = grid.kernel_transform(V_N, box)
    fine = scenes.build("generic", box)
    coarse = scenes.build("generic", ebox)
    phi = hnls.wkb_initial_data(fine.rho_phi, fine.S_phi, box, sc)
    steps = int(round(T / dt))
    er = euler.evolve_euler(euler.FluidState(coarse.rho, coarse.u, ebox), T, dt, V.b0)
    tr = hnls.evolve_hnls(phi, V_N, dt, steps, 1)
    states = [s.resampled(box.n) for s in er.states]
    return modulated.evolution_audit(tr.times, tr.snapshots, er.times, states, Vhat, V.b0, hbar)


def c3_evolution_identity(ctx):
    coarse = generic_audit(2e-3)
    fine = generic_audit(1e-3)
    ratio = coarse.max_residual / fine.max_residual
    det = fine.detection_ratios
    ok = 3 <= ratio <= 5 and all(v > 10 for v in det.values())
    return ok, {"residual_dt": coarse.max_residual, "residual_dt_half": fine.max_residual,
                "ratio": ratio, "detection_ratios": det}


def wkb_scenes(box: BoxSpec):
    """Three (rho, S, grad S, grad sqrt(rho)) tuples with analytic derivatives."""
    x = box.axis_coords
    kx = 2 * np.pi / box.L
    out = []
    for sigma, c, a, b in ((0.5, 0.0, 0.5, 0.0), (0.45, 0.3, 0.3, 0.2), (0.4, -0.5, -0.8, 0.4)):
        amp = np.exp(-((x - c) ** 2) / (4 * sigma**2))
        norm = math.sqrt(float(np.sum(amp**2)) * box.h)
        sq = amp / norm
        dsq = -(x - c) / (2 * sigma**2) * sq
        S = a / kx * np.sin(kx * x) + b / (2 * kx) * np.cos(2 * kx * x)
        dS = a * np.cos(kx * x) - b * np.sin(2 * kx * x)
        out.append((sq**2, S, dS, dsq))
    return out


def c4_wkb_identity(ctx):
    box = _std_box(1024)
    hbar = 0.1
    sc = PhysicalScales(hbar, 1e6, 0.5)
    errs = []
    for rho, S, dS, dsq in wkb_scenes(box):
        phi = hnls.wkb_initial_data(rho, S, box, sc, mass_tol=1e-8)
        D = modulated.modulated_derivative(phi.psi, dS[None], box, hbar)
        lhs = grid.integrate((np.abs(D) ** 2).sum(axis=0), box)
        rhs = hbar**2 * grid.integrate(dsq**2, box)
        errs.append(abs(lhs - rhs) / rhs)
    return max(errs) < 1e-8, {"relative_errors": errs}


def c5_semiclassical(ctx):
    res = semiclassical_sweep(ctx, "wkb_sine")
    hb = [r.job.hbar for r in res]
    err = [r.row["err_density_L2"] for r in res]
    slope = fit_rate(hb, err).slope
    train = [h >= 0.1 for h in hb]
    tv = study.train_validate(hb, err, train)
    ok = slope >= 0.9 and tv["below_bound"] and not any(r.horizon_short for r in res)
    return ok, {"hbar": hb, "err_density_L2": err, "slope": slope, "train_validate": tv}


def c6_mollifier(ctx):
    box = _std_box(2048)
    V = V_STD.build(box)
    f = grid.gaussian(box, 0.5)
    fit = potentials.mollifier_defect_rate(V, f, 0.5, [4, 16, 64, 256])
    return fit.slope <= -0.5 + 0.1, {"slope": fit.slope, "r_squared": fit.r_squared}


def c7_pressure(ctx):
    res = sorted(diagonal_sweep(ctx), key=lambda r: -r.job.hbar)
    p = [r.row["err_pressure_L1"] for r in res]
    ok = all(b <= 1.05 * a for a, b in zip(p, p[1:]))
    return ok, {"diagonal": [list(d) for d in DIAGONAL], "pressure_L1": p}


def synthetic_growth(rate: float = 10.0, hbar: float = 0.1) -> float:
    t = np.linspace(0, 0.5, 101)
    M = np.exp(rate * t)
    return modulated.gronwall_certificate(t, M, hbar, 1e30, 0.5).C_star


def c8_gronwall(ctx):
    accepted = list(semiclassical_sweep(ctx, "wkb_sine")) + list(diagonal_sweep(ctx))
    holds = all(r.gronwall.holds and r.gronwall.lower_bound_ok for r in accepted)
    std = semiclassical_sweep(ctx, "gaussian_rest")
    spread = modulated.certificate_spread([r.gronwall for r in std])
    holds = holds and all(r.gronwall.holds and r.gronwall.lower_bound_ok for r in std)
    C = synthetic_growth()
    wkb = semiclassical_sweep(ctx, "wkb_sine")
    rates = [r.growth_constant for r in wkb]
    # with the budget switched off the constant measures the growth of M alone
    rate_spread = max(rates) / min(rates) if min(rates) > 0 else math.inf
    ok = holds and spread <= 2 and rate_spread <= 2 and abs(C - 10) <= 1.0
    return ok, {
        "certificate_holds_everywhere": holds,
        "standard_sweep_Cstar": [r.gronwall.C_star for r in std],
        "standard_sweep_spread": spread,
        "wkb_sweep_Cstar": [r.gronwall.C_star for r in wkb],
        "wkb_sweep_spread": modulated.certificate_spread([r.gronwall for r in wkb]),
        "wkb_sweep_growth_constant": rates,
        "wkb_sweep_growth_spread": rate_spread,
        "synthetic_C": C}


def nbody_scene(N: int, hbar: float = 0.5, n: int = 32, interacting: bool = True):
    box = BoxSpec(1, L_STD, n)
    V = potentials.gaussian_potential(box, 0.75, 2.0)
    V_N = potentials.mean_field_scale(V, N, 0.5, enforce_resolution=False)
    if not interacting:
        V_N = np.zeros_like(V_N)
    x = box.axis_coords
    phi = np.exp(-x**2 / (2 * 0.8**2) + 0.6j * x)
    phi = phi / math.sqrt(grid.integrate(np.abs(phi) ** 2, box))
    sc = PhysicalScales(hbar, float(N), 0.5)
    return box, V_N, phi, nbody.NBodyWaveFunction(nbody.product_state(phi, N), box, sc)


def c9_nbody(ctx):
    detail = {}
    ok = True
    for N in (2, 3):
        box, V_N, phi, wf = nbody_scene(N)
        hbar = wf.scales.hbar
        tr = nbody.evolve_nbody(wf, V_N, 1e-3, 500, 50, order=4)
        worst = {"hermiticity": 0.0, "trace": 0.0, "min_eig": 0.0, "tower": 0.0, "symmetry": 0.0}
        for psi in tr.snapshots:
            kernels = [nbody.marginal(psi, k, box) for k in range(1, N)]
            for g in kernels:
                worst["hermiticity"] = max(worst["hermiticity"], g.hermiticity_error())
                worst["trace"] = max(worst["trace"], abs(g.trace() - 1))
                worst["min_eig"] = min(worst["min_eig"], g.min_eigenvalue())
            for lo, hi in zip(kernels, kernels[1:]):
                worst["tower"] = max(worst["tower"],
                                     float(np.abs(hi.partial_trace().gamma - lo.gamma).max()))
            worst["symmetry"] = max(worst["symmetry"], nbody.max_transposition_error(psi))
        E = {k: [nbody.energy_moment(p, k, V_N, box, hbar) for p in tr.snapshots] for k in (1, 2)}
        drift = {k: float(np.ptp(v) / abs(v[0])) for k, v in E.items()}
        orders = {}
        for k in range(1, N):
            res = []
            dts = [4e-3, 2e-3, 1e-3]
            for dt in dts:
                t2 = nbody.evolve_nbody(wf, V_N, dt, int(round(0.06 / dt)), 1)
                res.append(nbody.bbgky_residual(t2.snapshots, t2.times, k, V_N, box, hbar).max())
            orders[k] = fit_rate(dts, res).slope
        good = (worst["hermiticity"] < 1e-10 and worst["trace"] < 1e-8 and worst["min_eig"] >= -1e-8
                and worst["tower"] < 1e-10 and worst["symmetry"] < 1e-10
                and all(v < 1e-8 for v in drift.values())
                and all(abs(o - 2) <= 0.3 for o in orders.values()))
        ok = ok and good
        detail[f"N={N}"] = {**worst, "energy_drift": drift, "bbgky_orders": orders}
    # free dynamics against H-NLS
    box, V0, phi, wf = nbody_scene(2, interacting=False)
    tn = nbody.evolve_nbody(wf, V0, 1e-3, 200, 20)
    sc = wf.scales
    th = hnls.evolve_hnls(hnls.WaveFunction(phi, box, sc), V0, 1e-3, 200, 20)
    cmp = nbody.compare_with_hnls(tn.snapshots, th.snapshots, tn.times, th.times, V0, box, sc.hbar)
    free = max(max(v for k, v in r.items() if k != "t") for r in cmp)
    detail["free_agreement"] = free
    return ok and free < 1e-10, detail


def c10_combinatorics(ctx):
    bad = []
    for k in range(1, 5):
        for j in range(1, 7):
            if len(hierarchy.enumerate_histories(k, j)) != hierarchy.admissible_count(k, j):
                bad.append(("count", k, j))
            try:
                hierarchy.km_class_count(k, j)
            except AssertionError:
                bad.append(("bound", k, j))
    return not bad, {"failures": bad}


def probe_setup():
    box = BoxSpec(1, 12.0, 16)
    V = potentials.gaussian_potential(box, 1.0, 1.0).profile
    return box, V


def c11_collapsing(ctx, samples: int = 50, seed: int = 0):
    box, V = probe_setup()
    rep = hierarchy.collapsing_probe(V, box, [1.0, 0.5, 0.25, 0.125], samples, seed)
    ok = all(math.isfinite(v) for v in rep.max_ratio_per_hbar) and rep.fitted_exponent <= 0.05
    return ok, {**rep.as_dict(), "max_ratio": max(rep.max_ratio_per_hbar)}


def c12_euler(ctx):
    box = BoxSpec(1, L_STD, 64)
    b0 = V_STD.build(_std_box(256)).b0
    # acoustic speed from the phase of the first mode
    s = scenes.build("acoustic", box, b0=b0, eps=1e-4)
    T, dt = 2.0, 5e-3
    run = euler.evolve_euler(euler.FluidState(s.rho, s.u, box), T, dt, b0, keep=False)
    a0 = np.fft.fft(s.rho)[1]
    a1 = np.fft.fft(run.final.rho)[1]
    shift = -np.angle(a1 / a0)
    speed = shift / (2 * np.pi / box.L) / T
    c = math.sqrt(b0 / box.L)
    speed_err = abs(speed - c) / c
    # equilibrium is a fixed point
    e = scenes.build("equilibrium", box)
    st = euler.FluidState(e.rho, e.u, box)
    for _ in range(100):
        st = euler.euler_step(st, dt, b0)
    eq_err = float(max(np.abs(st.rho - e.rho).max(), np.abs(st.u).max()))
    # velocity and momentum forms on smooth positive data
    x = box.axis_coords
    rho = (1 + 0.3 * np.cos(2 * np.pi * x / box.L)) / box.L
    u = 0.2 * np.sin(2 * np.pi * x / box.L)
    vs = euler.FluidState(rho, u[None], box)
    r2, J2 = rho.copy(), (rho * u)[None]
    dtm = 1e-3
    for _ in range(200):
        vs = euler.euler_step(vs, dtm, b0)
        r2, J2 = euler.momentum_step(r2, J2, box, dtm, b0)
    form_err = float(max(np.abs(vs.rho - r2).max(), np.abs(vs.momentum - J2).max()))
    ok = speed_err < 0.01 and eq_err < 1e-14 and form_err < 1e-6
    return ok, {"acoustic_speed": speed, "expected": c, "relative_error": speed_err,
                "equilibrium_error": eq_err, "form_disagreement": form_err}


CRITERIA = {
    1: ("H-NLS conservation suite", 30, c1_conservation),
    2: ("local conservation residuals second order", 60, c2_local_conservation),
    3: ("modulated-energy evolution identity", 120, c3_evolution_identity),
    4: ("WKB identity", 5, c4_wkb_identity),
    5: ("semiclassical density rate", 600, c5_semiclassical),
    6: ("mollifier rate", 60, c6_mollifier),
    7: ("pressure emergence along the diagonal", 600, c7_pressure),
    8: ("Gronwall certificate", 60, c8_gronwall),
    9: ("few-body structural suite", 900, c9_nbody),
    10: ("collision-history combinatorics", 10, c10_combinatorics),
    11: ("collapsing probe", 300, c11_collapsing),
    12: ("Euler sanity", 60, c12_euler),
}


def run_criterion(number: int, ctx: AcceptanceContext | None = None) -> CriterionResult:
    ctx = ctx or AcceptanceContext()
    title, budget, fn = CRITERIA[number]
    before = dict(ctx.cost)
    t0 = time.perf_counter()
    try:
        ok, detail = fn(ctx)
    except Exception as e:  # a crash is a failed criterion, reported as such
        ok, detail = False, {"error": f"{type(e).__name__}: {e}"}
    elapsed = time.perf_counter() - t0
    # shared results are charged to the criterion that owns them
    borrowed = sum(sec for k, (owner, sec) in ctx.cost.items()
                   if k not in before and owner != number)
    seconds = elapsed - borrowed
    passed = bool(ok) and seconds <= budget
    detail = dict(detail)
    detail["elapsed_including_shared_work"] = elapsed
    return CriterionResult(number, title, passed, seconds, budget, detail)


def default_threads() -> int:
    return max(1, min(3, os.cpu_count() or 1))


def run_acceptance(numbers=None, threads: int | None = None, echo=None) -> list[CriterionResult]:
    ctx = AcceptanceContext(threads or default_threads())
    out = []
    for n in numbers or sorted(CRITERIA):
        r = run_criterion(n, ctx)
        if echo:
            echo(r.line())
        out.append(r)
    return out
