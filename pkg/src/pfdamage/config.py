"""Run configuration: ``key = value`` lines grouped under ``[section]`` headers.

``#`` and ``;`` start comments.  Every problem is reported together with
its line number; unknown sections and keys are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .grid import DIRICHLET, FACES, NEUMANN, GridConfig, GridError
from .material import MaterialError, MaterialModel
from .scenarios import SCENARIO_PARAMS
from .stepper import StepperParams


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _tag(text):
    t = text.strip().upper()
    if t not in (DIRICHLET, NEUMANN):
        raise ValueError("must be DIRICHLET or NEUMANN")
    return t


SCHEMA = {
    "grid": {"dim": int, "lengths": _floats, "nodes": _ints, "left": _tag, "right": _tag,
             "bottom": _tag, "top": _tag},
    "material": {"eta": float, "lame_lambda": float, "lame_mu": float, "ehat": _floats,
                 "alpha": float, "psi_scale": float, "m0": float, "m1": float,
                 "mob_min": float, "mob_max": float, "p": float, "damage_law": str},
    "stepper": {"tau": float, "delta": float, "T": float, "tol_outer": float,
                "tol_block": float, "max_outer": int, "max_inner": int, "armijo": float,
                "backtrack": float},
    "scenario": {"name": str, "seed": int},
    "output": {"dir": str, "stride": int, "figures": _bool},
}
REQUIRED = ("grid", "stepper", "scenario")


@dataclass
class RunConfig:
    grid: GridConfig
    material: MaterialModel
    stepper: StepperParams
    scenario: str
    scenario_params: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "out"
    stride: int = 1
    figures: bool = True

    def with_stepper(self, **changes) -> "RunConfig":
        return replace(self, stepper=replace(self.stepper, **changes))


def _scenario_key_type(name, key):
    known = SCENARIO_PARAMS.get(name, {})
    return known[key][0] if key in known else None


def _read(text: str, overrides) -> tuple[dict, list]:
    sections: dict = {}
    errors = []
    current = None
    lines = [(i, ln) for i, ln in enumerate(text.splitlines(), start=1)]
    lines += [(f"override {j + 1}", ov) for j, ov in enumerate(overrides)]
    for lineno, raw in lines:
        where = f"line {lineno}" if isinstance(lineno, int) else lineno
        if isinstance(lineno, str):
            if "=" not in raw or "." not in raw.split("=", 1)[0]:
                errors.append(f"{where}: overrides look like section.key=value, got {raw!r}")
                continue
            lhs, value = raw.split("=", 1)
            sec, key = lhs.strip().split(".", 1)
            sections.setdefault(sec.strip(), {})[key.strip()] = (value.strip(), where)
            continue
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append(f"{where}: malformed section header {raw.strip()!r}")
                continue
            current = line[1:-1].strip()
            if current in sections:
                errors.append(f"{where}: duplicate section [{current}]")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            errors.append(f"{where}: expected key = value, got {raw.strip()!r}")
            continue
        if current is None:
            errors.append(f"{where}: key outside any section")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in sections[current]:
            errors.append(f"{where}: duplicate key {key!r} in [{current}]")
        sections[current][key] = (value, where)
    return sections, errors


def parse_config(text: str, overrides=()) -> RunConfig:
    """Parse and validate a run configuration.  ``overrides`` are extra
    ``section.key=value`` strings applied after the text."""
    sections, errors = _read(text, overrides)
    values: dict = {s: {} for s in SCHEMA}
    scen_name = sections.get("scenario", {}).get("name", ("", None))[0]
    for sec, entries in sections.items():
        if sec not in SCHEMA:
            where = next(iter(entries.values()), (None, "config"))[1]
            errors.append(f"{where}: unknown section [{sec}]")
            continue
        for key, (value, where) in entries.items():
            conv = SCHEMA[sec].get(key)
            if conv is None and sec == "scenario":
                conv = _scenario_key_type(scen_name, key)
            if conv is None:
                errors.append(f"{where}: unknown key {key!r} in [{sec}]")
                continue
            try:
                values[sec][key] = conv(value)
            except ValueError as exc:
                errors.append(f"{where}: {sec}.{key}: {exc}")
    missing = [sec for sec in REQUIRED if sec not in sections]
    if missing:
        errors += [f"config: missing section [{sec}]" for sec in missing]
        raise ConfigError(errors)

    def where(sec, key):
        return sections.get(sec, {}).get(key, (None, "config"))[1]

    # grid
    gv = values["grid"]
    dim = gv.get("dim", len(gv["nodes"]) if "nodes" in gv else 1)
    lengths = gv.get("lengths", (1.0,) * dim)
    nodes = gv.get("nodes", (33,) * dim)
    if len(lengths) == 1 and dim > 1:
        lengths = lengths * dim
    if len(nodes) == 1 and dim > 1:
        nodes = nodes * dim
    if dim not in FACES:
        errors.append(f"{where('grid', 'dim')}: grid.dim must be 1 or 2")
        raise ConfigError(errors)
    extra = [f for f in ("bottom", "top") if f in gv and dim == 1]
    for f in extra:
        errors.append(f"{where('grid', f)}: face {f!r} does not exist in 1D")
    tags = {f: gv.get(f, DIRICHLET if f == "left" else NEUMANN) for f in FACES[dim]}
    grid = GridConfig(lengths=tuple(lengths), nodes=tuple(nodes), tags=tags)
    try:
        from .grid import build_grid

        build_grid(grid)
    except GridError as exc:
        errors.append(f"{where('grid', 'nodes')}: grid: {exc}")

    # material
    mv = dict(values["material"])
    try:
        material = MaterialModel(dim=dim, **mv)
    except (MaterialError, TypeError) as exc:
        errors.append(f"{where('material', next(iter(mv), 'eta'))}: material: {exc}")
        material = None

    # stepper
    sv = values["stepper"]
    if "tau" not in sv:
        errors.append(f"{where('stepper', 'tau')}: stepper.tau is required")
    for key in ("tau", "T", "tol_outer", "tol_block", "armijo"):
        if key in sv and not (sv[key] > 0 and math.isfinite(sv[key])):
            errors.append(f"{where('stepper', key)}: stepper.{key} must be positive, got {sv[key]}")
    if "delta" in sv and not sv["delta"] >= 0:
        errors.append(f"{where('stepper', 'delta')}: stepper.delta must be nonnegative")
    if "backtrack" in sv and not 0 < sv["backtrack"] < 1:
        errors.append(f"{where('stepper', 'backtrack')}: stepper.backtrack must lie in (0, 1)")
    for key in ("max_outer", "max_inner"):
        if key in sv and sv[key] < 1:
            errors.append(f"{where('stepper', key)}: stepper.{key} must be at least 1")

    # scenario
    sc = dict(values["scenario"])
    name = sc.pop("name", None)
    seed = sc.pop("seed", 0)
    if name is None:
        errors.append(f"{where('scenario', 'name')}: scenario.name is required")
    elif name not in SCENARIO_PARAMS:
        errors.append(f"{where('scenario', 'name')}: unknown scenario {name!r}; choose from "
                      f"{', '.join(sorted(SCENARIO_PARAMS))}")
    elif name == "stretch" and not (tags.get("left") == DIRICHLET and tags.get("right") == DIRICHLET):
        errors.append(f"{where('grid', 'right')}: the stretch scenario needs left and right "
                      f"faces DIRICHLET")

    ov = values["output"]
    stride = ov.get("stride", 1)
    if stride < 1:
        errors.append(f"{where('output', 'stride')}: output.stride must be at least 1")
    if errors:
        raise ConfigError(errors)
    stepper = StepperParams(**sv)
    return RunConfig(grid=grid, material=material, stepper=stepper, scenario=name,
                     scenario_params=sc, seed=seed, output_dir=ov.get("dir", "out"),
                     stride=stride, figures=ov.get("figures", True))


def load_config(path, overrides=()) -> RunConfig:
    return parse_config(Path(path).read_text(), overrides)
