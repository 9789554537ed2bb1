"""Batch pipelines behind ``elab run``: each one writes its reports and
returns the list of assertions that failed during the run."""

from __future__ import annotations

import csv
import io as _io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import acceptance, euler, grid, hierarchy, hnls, io, nbody, potentials, scenes, study
from .config import ConfigError, ExperimentConfig
from .grid import BoxSpec
from .potentials import PhysicalScales


@dataclass
class Outcome:
    pipeline: str
    out: Path
    artifacts: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def check(self, ok: bool, name: str, **info) -> bool:
        if not ok:
            self.failures.append({"assertion": name, **info})
        return ok

    @property
    def exit_code(self) -> int:
        return 0 if not self.failures else 2


def table_csv(columns, rows) -> str:
    """RFC-4180 text; floats written with repr so runs compare byte for byte."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in columns])
    return buf.getvalue()


def _write_table(outcome: Outcome, name: str, columns, rows, header: dict,
                 plot: tuple | None = None) -> Path:
    path = outcome.out / f"{name}.csv"
    path.write_text(table_csv(columns, rows), newline="")
    io.write_json(path.with_suffix(".json"), {"header": header, "columns": list(columns)})
    outcome.artifacts += [path, path.with_suffix(".json")]
    if plot is not None:
        x, ys, log = plot
        gp = outcome.out / f"{name}.gp"
        gp.write_text(io.gnuplot_script(path.name, x, list(ys), columns, name, logscale=log))
        outcome.artifacts.append(gp)
    return path


def _tag(sc: PhysicalScales) -> str:
    return f"hbar{sc.hbar:g}_N{sc.N:g}"


def _require(cfg: ExperimentConfig, *keys):
    for k in keys:
        if k not in cfg.raw:
            raise ConfigError(k, f"required for pipeline {cfg.pipeline!r}")


# ---------------------------------------------------------------- hnls

def run_hnls(cfg: ExperimentConfig, outcome: Outcome, threads: int = 1) -> None:
    s = cfg.solver
    box = cfg.box
    V = cfg.potential(box)
    scene = scenes.build(cfg.scene, box, **cfg.scene_params)
    steps = int(round(s["T"] / s["dt"]))
    for sc in cfg.scales:
        V_N = potentials.scale_potential(V, sc)
        phi = hnls.wkb_initial_data(scene.rho_phi, scene.S_phi, box, sc)
        tr = hnls.evolve_hnls(phi, V_N, s["dt"], steps, s["every"], keep=False)
        rows = [{**r, "energy": r["energy_kinetic"] + r["energy_interaction"]} for r in tr.records]
        E = np.array([r["energy"] for r in rows])
        mass = np.array([r["mass"] for r in rows])
        mass_drift = float(np.abs(mass - mass[0]).max())
        energy_drift = float(np.abs(E - E[0]).max() / abs(E[0]))
        header = study.run_header(sc, box, s["dt"], pipeline="hnls", scene=cfg.scene, T=s["T"],
                                  mass_drift=mass_drift, energy_drift=energy_drift,
                                  warnings=list(tr.warnings))
        cols = ("t", "mass", "energy_kinetic", "energy_interaction", "energy")
        _write_table(outcome, f"hnls_{_tag(sc)}", cols, rows, header, ("t", cols[2:], False))
        outcome.check(mass_drift < 1e-10, "mass conservation", scales=sc.as_dict(),
                      value=mass_drift, tolerance=1e-10)
        outcome.check(energy_drift < s["energy_tol"], "energy conservation",
                      scales=sc.as_dict(), value=energy_drift, tolerance=s["energy_tol"])


# ---------------------------------------------------------------- euler

def run_euler(cfg: ExperimentConfig, outcome: Outcome, threads: int = 1) -> None:
    s = cfg.solver
    ebox = BoxSpec(cfg.box.d, cfg.box.L, s.get("euler_n", cfg.box.n))
    b0 = cfg.potential(cfg.box).b0
    scene = scenes.build(cfg.scene, ebox, **cfg.scene_params)
    run = euler.evolve_euler(euler.FluidState(scene.rho, scene.u, ebox), s["T"], s["dt"], b0,
                             every=s["every"], keep=False)
    sc = cfg.scales[0]
    header = study.run_header(sc, ebox, s["dt"], pipeline="euler", scene=cfg.scene, T=s["T"],
                              b0=b0, certified_T=run.certified_T, stop_reason=run.stop_reason)
    cols = ("t", "mass", "tail_fraction", "max_gradient", "rho_min")
    _write_table(outcome, "euler", cols, run.records, header, ("t", cols[2:4], False))
    mass = np.array([r["mass"] for r in run.records])
    drift = float(np.abs(mass - mass[0]).max())
    outcome.check(drift < 1e-10, "mass conservation", value=drift, tolerance=1e-10)
    outcome.check(run.completed, "regularity monitor held to T", stop_reason=run.stop_reason,
                  certified_T=run.certified_T)


# ---------------------------------------------------------------- coupled and sweep

def _series_table(outcome: Outcome, r: study.JobResult) -> None:
    cols = ("t", "err_density_L2", "err_momentum_L1", "err_momentum_L54", "pressure_L1", "M")
    rows = [dict(zip(cols, vals)) for vals in zip(*(r.series[c] for c in cols))]
    header = {**r.header, "Cstar": r.gronwall.C_star, "growth_constant": r.growth_constant,
              "warnings": r.warnings}
    _write_table(outcome, f"coupled_{_tag(r.job.scales)}", cols, rows, header,
                 ("t", cols[1:4], False))


def _check_runs(outcome: Outcome, results) -> None:
    for r in results:
        info = {"hbar": r.job.hbar, "N": r.job.N}
        outcome.check(r.gronwall.holds, "Gronwall certificate", C_star=r.gronwall.C_star, **info)
        outcome.check(not r.horizon_short, "Euler horizon covers T", certified_T=r.certified_T,
                      T=r.job.T, **info)


def run_coupled(cfg: ExperimentConfig, outcome: Outcome, threads: int = 1) -> None:
    results = study.run_jobs(cfg.jobs(), threads)
    for r in results:
        _series_table(outcome, r)
    _check_runs(outcome, results)


def run_sweep(cfg: ExperimentConfig, outcome: Outcome, threads: int = 1) -> None:
    rep = study.convergence_study(cfg.jobs(), threads)
    for r in rep.results:
        _series_table(outcome, r)
    first = rep.results[0]
    header = {k: v for k, v in first.header.items() if k not in ("hbar", "N", "restriction")}
    header.update(pipeline="sweep", hbar=sorted({r.job.hbar for r in rep.results}),
                  N=sorted({r.job.N for r in rep.results}), partial=rep.partial,
                  restriction=[r.header["restriction"] for r in rep.results])
    path = io.write_sweep(outcome.out / "sweep.csv", rep.rows, header)
    outcome.artifacts += [path, path.with_suffix(".json")]
    fits = {"hbar": {k: f.as_dict() for k, f in rep.hbar_fits.items()},
            "N": {k: f.as_dict() for k, f in rep.N_fits.items()}}
    outcome.artifacts.append(io.write_json(outcome.out / "fits.json",
                                           {"header": header, "fits": fits}))
    if len({r.job.hbar for r in rep.results}) >= 2:
        gp = outcome.out / "sweep.gp"
        gp.write_text(io.gnuplot_script("sweep.csv", "hbar",
                                        ["err_density_L2", "err_momentum_L1", "err_pressure_L1"],
                                        io.SWEEP_COLUMNS, "sweep"))
        outcome.artifacts.append(gp)
    _check_runs(outcome, rep.results)


# ---------------------------------------------------------------- nbody

def run_nbody(cfg: ExperimentConfig, outcome: Outcome, threads: int = 1) -> None:
    s = cfg.solver
    nb = {"particles": 2, "order": 4, "memory_cap": nbody.DEFAULT_MEMORY_CAP}
    nb.update(cfg.section("nbody"))
    box, N = cfg.box, nb["particles"]
    nbody.check_memory(box, N, nb["memory_cap"])
    V = cfg.potential(box)
    scene = scenes.build(cfg.scene, box, **cfg.scene_params)
    steps = int(round(s["T"] / s["dt"]))
    for sc0 in cfg.scales:
        sc = PhysicalScales(sc0.hbar, float(N), sc0.beta, 1)
        V_N = potentials.mean_field_scale(V, N, sc.beta, enforce_resolution=False)
        phi = np.sqrt(scene.rho_phi) * np.exp(1j * scene.S_phi / sc.hbar)
        phi = phi / math.sqrt(grid.integrate(np.abs(phi) ** 2, box))
        wf = nbody.NBodyWaveFunction(nbody.product_state(phi, N), box, sc)
        tr = nbody.evolve_nbody(wf, V_N, s["dt"], steps, s["every"], order=nb["order"])
        rows = []
        for t, psi in zip(tr.times, tr.snapshots):
            g1 = nbody.marginal(psi, 1, box)
            rows.append({"t": float(t), "norm": float(np.sum(np.abs(psi) ** 2)) * box.h**N,
                         "trace_g1": g1.trace(),
                         "hermiticity_g1": g1.hermiticity_error(),
                         "energy_k1": nbody.energy_moment(psi, 1, V_N, box, sc.hbar),
                         "energy_k2": nbody.energy_moment(psi, 2, V_N, box, sc.hbar)})
        header = study.run_header(sc, box, s["dt"], pipeline="nbody", particles=N,
                                  order=nb["order"], scene=cfg.scene, T=s["T"])
        cols = ("t", "norm", "trace_g1", "hermiticity_g1", "energy_k1", "energy_k2")
        _write_table(outcome, f"nbody_{_tag(sc)}", cols, rows, header,
                     ("t", ("energy_k1", "energy_k2"), False))
        info = {"hbar": sc.hbar, "particles": N}
        norm_err = max(abs(r["norm"] - 1) for r in rows)
        outcome.check(norm_err < 1e-10, "norm conservation", value=norm_err, **info)
        herm = max(r["hermiticity_g1"] for r in rows)
        outcome.check(herm < 1e-10, "marginal hermiticity", value=herm, **info)
        for k in (1, 2):
            e = np.array([r[f"energy_k{k}"] for r in rows])
            drift = float(np.ptp(e) / abs(e[0]))
            outcome.check(drift < s["energy_tol"], f"energy moment k={k} conservation",
                          value=drift, tolerance=s["energy_tol"], **info)


# ---------------------------------------------------------------- probes

PROBE_DEFAULTS = {"mode": "collapsing", "hbar_grid": [1.0, 0.5, 0.25, 0.125], "samples": 50,
                  "T_probe": 2.0, "k_max": 4, "j_max": 6}


def run_probe(cfg: ExperimentConfig, outcome: Outcome, threads: int = 1) -> None:
    p = dict(PROBE_DEFAULTS)
    p.update(cfg.section("probe"))
    if p["mode"] == "km":
        km_table(outcome, p["k_max"], p["j_max"])
        return
    if cfg.box is not None:
        box = cfg.box
        V = cfg.potential(box).profile
    else:
        box, V = acceptance.probe_setup()
    rep = hierarchy.collapsing_probe(V, box, p["hbar_grid"], p["samples"], cfg.seed,
                                     T_probe=p["T_probe"])
    sc = PhysicalScales(min(p["hbar_grid"]), 2.0, 0.5, box.d)
    header = study.run_header(sc, box, None, pipeline="probe", mode="collapsing",
                              seed=cfg.seed, samples=p["samples"], T_probe=p["T_probe"],
                              fitted_exponent=rep.fitted_exponent)
    header["hbar"] = list(rep.hbar_grid)
    rows = [{"hbar": h, "max_ratio": m} for h, m in zip(rep.hbar_grid, rep.max_ratio_per_hbar)]
    _write_table(outcome, "collapsing_probe", ("hbar", "max_ratio"), rows, header,
                 ("hbar", ("max_ratio",), True))
    outcome.artifacts.append(io.write_json(outcome.out / "collapsing_probe_report.json",
                                           {"header": header, "report": rep.as_dict()}))
    finite = all(math.isfinite(v) for v in rep.max_ratio_per_hbar)
    outcome.check(finite, "finite probe ratios")
    if len(rep.hbar_grid) >= 3:
        outcome.check(rep.fitted_exponent <= 0.05, "probe hbar-exponent <= 0.05",
                      value=rep.fitted_exponent)


def km_table(outcome: Outcome, k_max: int, j_max: int) -> None:
    rows = []
    for k in range(1, k_max + 1):
        for j in range(1, j_max + 1):
            if k + j - 1 > hierarchy.HISTORY_BUDGET:
                continue
            expected = math.factorial(k + j - 1) // math.factorial(k - 1)
            try:
                classes, ok = hierarchy.km_class_count(k, j), True
            except AssertionError:
                classes, ok = -1, False
            rows.append({"k": k, "j": j, "admissible": hierarchy.admissible_count(k, j),
                         "expected": expected, "classes": classes, "bound": 2 ** (k + 2 * j - 2)})
            outcome.check(rows[-1]["admissible"] == expected, "admissible-map count", k=k, j=j)
            outcome.check(ok, "class-count bound", k=k, j=j)
    header = {"pipeline": "probe", "mode": "km", "k_max": k_max, "j_max": j_max,
              "git_describe": study.git_describe()}
    _write_table(outcome, "km_classes", ("k", "j", "admissible", "expected", "classes", "bound"),
                 rows, header)


# ---------------------------------------------------------------- acceptance

def run_accept(cfg: ExperimentConfig | None, outcome: Outcome, threads: int = 1,
               echo=print) -> None:
    numbers = None
    if cfg is not None:
        numbers = cfg.section("acceptance").get("criteria")
    results = acceptance.run_acceptance(numbers, threads, echo=echo)
    for r in results:
        outcome.check(r.passed, f"acceptance criterion {r.number}", title=r.title,
                      seconds=r.seconds, budget=r.budget)
    report = {"header": {"pipeline": "acceptance", "git_describe": study.git_describe(),
                         "threads": threads},
              "criteria": [r.as_dict() for r in results]}
    outcome.artifacts.append(io.write_json(outcome.out / "acceptance.json", report))
    (outcome.out / "acceptance.txt").write_text("\n".join(r.line() for r in results) + "\n")
    outcome.artifacts.append(outcome.out / "acceptance.txt")


RUNNERS = {
    "hnls": run_hnls,
    "euler": run_euler,
    "coupled": run_coupled,
    "sweep": run_sweep,
    "nbody": run_nbody,
    "probe": run_probe,
    "acceptance": run_accept,
}


def execute(cfg: ExperimentConfig, out: Path | None = None, threads: int = 1,
            pipeline: str | None = None) -> Outcome:
    """Run a validated config; writes ``failed_assertions.json`` when anything failed."""
    name = pipeline or cfg.pipeline
    out = Path(out) if out is not None else cfg.outputs
    out.mkdir(parents=True, exist_ok=True)
    outcome = Outcome(name, out)
    if name in ("hnls", "euler", "coupled", "sweep", "nbody"):
        _require(cfg, "box", "scales", "solver")
    RUNNERS[name](cfg, outcome, threads)
    write_manifest(outcome)
    return outcome


def write_manifest(outcome: Outcome) -> None:
    path = outcome.out / "failed_assertions.json"
    if outcome.failures:
        io.write_json(path, {"pipeline": outcome.pipeline, "failed": outcome.failures})
        outcome.artifacts.append(path)
    elif path.exists():
        path.unlink()
