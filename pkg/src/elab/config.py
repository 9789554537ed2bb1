"""Experiment configuration: JSON schema, semantic checks and job expansion."""

from __future__ import annotations

import copy
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from . import grid, io, potentials, scenes, study
from .grid import BoxSpec
from .potentials import PhysicalScales

PIPELINES = ("hnls", "euler", "coupled", "nbody", "probe", "sweep", "acceptance")

_pos = {"type": "number", "exclusiveMinimum": 0}
_pos_or_list = {"oneOf": [_pos, {"type": "array", "items": _pos, "minItems": 1}]}

SCHEMA = {
    "type": "object",
    "required": ["pipeline"],
    "additionalProperties": False,
    "properties": {
        "pipeline": {"enum": list(PIPELINES)},
        "description": {"type": "string"},
        "scene": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {"name": {"enum": sorted(scenes.RECIPES)},
                           "params": {"type": "object"}},
        },
        "potential": {
            "oneOf": [
                {"type": "object", "additionalProperties": False,
                 "required": ["kind", "width", "amplitude"],
                 "properties": {"kind": {"const": "gaussian"}, "width": _pos,
                                "amplitude": {"type": "number"}}},
                {"type": "object", "additionalProperties": False, "required": ["kind", "path"],
                 "properties": {"kind": {"const": "samples"}, "path": {"type": "string"}}},
            ]
        },
        "box": {
            "type": "object",
            "additionalProperties": False,
            "required": ["L", "n"],
            "properties": {"d": {"type": "integer", "minimum": 1, "maximum": 3}, "L": _pos,
                           "n": {"type": "integer", "minimum": 8}},
        },
        "scales": {
            "type": "object",
            "additionalProperties": False,
            "required": ["hbar", "N", "beta"],
            "properties": {"hbar": _pos_or_list, "N": _pos_or_list,
                           "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                           "pairing": {"enum": ["grid", "zip"]}},
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dt", "T"],
            "properties": {"dt": _pos, "T": _pos, "every": {"type": "integer", "minimum": 1},
                           "euler_n": {"type": "integer", "minimum": 8},
                           "energy_tol": _pos},
        },
        "nbody": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"particles": {"enum": [2, 3]}, "order": {"enum": [2, 4]},
                           "memory_cap": {"type": "integer", "minimum": 1}},
        },
        "probe": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"mode": {"enum": ["collapsing", "km"]},
                           "hbar_grid": {"type": "array", "items": _pos, "minItems": 1},
                           "samples": {"type": "integer", "minimum": 0},
                           "T_probe": _pos, "k_max": {"type": "integer", "minimum": 1},
                           "j_max": {"type": "integer", "minimum": 1}},
        },
        "acceptance": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"criteria": {"type": "array", "items": {"type": "integer",
                                                                    "minimum": 1, "maximum": 12}}},
        },
        "outputs": {"type": "string"},
        "seed": {"type": "integer"},
    },
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path
        self.message = message


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


@dataclass
class ExperimentConfig:
    pipeline: str
    raw: dict
    box: BoxSpec | None = None
    scales: list = field(default_factory=list)
    outputs: Path = Path("elab-out")
    seed: int = 0
    base: Path = Path(".")

    @property
    def scene(self) -> str:
        return self.raw.get("scene", {}).get("name", "gaussian_rest")

    @property
    def scene_params(self) -> dict:
        return dict(self.raw.get("scene", {}).get("params", {}))

    @property
    def solver(self) -> dict:
        s = {"every": 1, "energy_tol": 1e-6}
        s.update(self.raw.get("solver", {}))
        return s

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))

    def potential(self, box: BoxSpec) -> potentials.Potential:
        spec = self.raw.get("potential", {"kind": "gaussian", "width": 0.5, "amplitude": 2.0})
        return build_potential(spec, box, self.base)

    def potential_spec(self):
        spec = self.raw.get("potential", {"kind": "gaussian", "width": 0.5, "amplitude": 2.0})
        if spec["kind"] == "gaussian":
            return study.PotentialSpec(spec["width"], spec["amplitude"])
        return SampledSpec(str((self.base / spec["path"]).resolve()))

    def jobs(self) -> list[study.Job]:
        s = self.solver
        euler_n = s.get("euler_n", min(self.box.n, 512))
        params = tuple(sorted(self.scene_params.items()))
        return [study.Job(self.scene, params, self.box.L, self.box.n, euler_n,
                          self.potential_spec(), sc.hbar, sc.N, sc.beta, s["dt"], s["T"],
                          s["every"], self.box.d) for sc in self.scales]


@dataclass(frozen=True)
class SampledSpec:
    path: str

    def build(self, box: BoxSpec) -> potentials.Potential:
        return build_potential({"kind": "samples", "path": self.path}, box, Path("."))


def build_potential(spec: dict, box: BoxSpec, base: Path) -> potentials.Potential:
    if spec["kind"] == "gaussian":
        return potentials.gaussian_potential(box, spec["width"], spec["amplitude"])
    data, pbox, k = io.read_snapshot(base / spec["path"])
    if k is not None:
        raise ValueError("potential file holds a kernel, not a field")
    if pbox.d != box.d or pbox.L != box.L:
        raise ValueError(f"potential file box {pbox} incompatible with {box}")
    prof = data.real
    if pbox.n != box.n:
        prof = grid.fourier_resample(prof, pbox, box.n)
    return potentials.sampled_potential(box, prof)


def _as_list(v):
    return list(v) if isinstance(v, list) else [v]


def _expand_scales(s: dict, d: int) -> list[PhysicalScales]:
    hs, Ns = _as_list(s["hbar"]), _as_list(s["N"])
    if s.get("pairing", "grid") == "zip":
        if len(hs) != len(Ns):
            raise ConfigError("scales.N", "zip pairing needs equally long hbar and N lists")
        pairs = list(zip(hs, Ns))
    else:
        pairs = list(itertools.product(hs, Ns))
    out = []
    for i, (h, N) in enumerate(pairs):
        try:
            out.append(PhysicalScales(float(h), float(N), float(s["beta"]), d))
        except ValueError as e:
            raise ConfigError("scales", f"pair {i} (hbar={h}, N={N}): {e}") from None
    return out


def validate(raw: dict, base: Path | str = ".") -> ExperimentConfig:
    """Schema and semantic validation; raises ConfigError carrying a field path."""
    base = Path(base)
    v = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(v.iter_errors(raw), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        e = errors[0]
        raise ConfigError(_path(e.absolute_path), e.message)
    raw = copy.deepcopy(raw)
    cfg = ExperimentConfig(raw["pipeline"], raw, seed=raw.get("seed", 0), base=base)
    cfg.outputs = Path(raw.get("outputs", "elab-out"))
    pot = raw.get("potential")
    if pot is not None and pot["kind"] == "gaussian" and pot["amplitude"] < 0:
        raise ConfigError("potential.amplitude",
                          "b0 = int V < 0: the Euler system is not hyperbolic for focusing "
                          "interactions")
    if "box" in raw:
        b = raw["box"]
        try:
            cfg.box = BoxSpec(b.get("d", 1), float(b["L"]), int(b["n"]))
        except ValueError as e:
            raise ConfigError("box", str(e)) from None
    if "scales" in raw:
        cfg.scales = _expand_scales(raw["scales"], cfg.box.d if cfg.box else 1)
    needs_fields = cfg.pipeline in ("hnls", "euler", "coupled", "sweep")
    if needs_fields:
        for key in ("box", "scales", "solver"):
            if key not in raw:
                raise ConfigError(key, f"required for pipeline {cfg.pipeline!r}")
        try:
            V = cfg.potential(cfg.box)
        except (OSError, ValueError) as e:
            raise ConfigError("potential", str(e)) from None
        if cfg.pipeline != "euler":
            for i, sc in enumerate(cfg.scales):
                need = potentials.required_n(V, sc.N, sc.beta)
                if cfg.box.n < need:
                    raise ConfigError(
                        "box.n", f"pair {i} (hbar={sc.hbar}, N={sc.N}) needs n >= {need} "
                                 f"to resolve V_N")
        s = cfg.solver
        steps = s["T"] / s["dt"]
        if abs(steps - round(steps)) > 1e-9 * steps or round(steps) % s["every"]:
            raise ConfigError("solver", "T / dt must be an integer multiple of solver.every")
    if cfg.pipeline == "nbody":
        for key in ("box", "scales", "solver"):
            if key not in raw:
                raise ConfigError(key, "required for pipeline 'nbody'")
        if cfg.box.d != 1:
            raise ConfigError("box.d", "few-body runs are one-dimensional")
    return cfg


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError("<file>", f"invalid JSON: {e}") from None
    return validate(raw, path.parent)


def default_config_dir() -> Path:
    return Path(__file__).resolve().parent / "configs"


def bundled(name: str) -> ExperimentConfig:
    return load(default_config_dir() / f"{name}.json")

