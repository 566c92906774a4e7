"""Run configuration: INI files with one section per module."""

from __future__ import annotations

import configparser
import os
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigurationError

OUTPUT_ENV = "LLMAXWELL_OUTPUT_DIR"


@dataclass
class RunConfig:
    # geometry
    box_side: float = 1.0
    cells: int = 48
    major_radius: float = 0.3
    minor_radius: float = 0.1
    # boundary data
    winding: int = 1
    amplitude: float = 0.3
    windings: tuple = (0, 1, 2)
    # steady
    lambdas: tuple = (50.0, 100.0, 200.0, 400.0, 800.0, 1600.0)
    lambda_units: str = "grid"
    lambda_min: float = 50.0
    fixed_point_tol: float = 1e-11
    linear_tol: float = 1e-12
    max_iters: int = 200
    relaxation: float = 1.0
    demag: bool = True
    # dynamics
    gammas: tuple = (0.0, 0.05, 0.2, 1.0)
    seeds: int = 10
    gamma_seeds: int = 3
    perturbation: float = 1e-3
    t_max: float = 0.2
    dt: float = 0.0
    decay_tol: float = 1e-8
    # spectrum
    eigen_k: int = 4
    eigen_tol: float = 1e-6
    coupling: bool = True
    tbound_beta: float = 1.0
    tbound_samples: int = 10
    box_lambda: float = 50.0
    box_cube_side: float = 0.5
    # maxwell check
    ball_cells: int = 64
    ball_radius: float = 0.3
    demag_samples: int = 20
    # output
    seed: int = 0
    output_dir: str = "runs/default"
    snapshot_every: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, key, msg):
            if not cond:
                raise ConfigurationError(f"{key}: {msg}")

        need(self.box_side > 0, "box_side", "must be positive")
        need(int(self.cells) == self.cells and self.cells >= 8, "cells", "must be an integer >= 8")
        need(0 < self.minor_radius < self.major_radius, "minor_radius", "need 0 < minor_radius < major_radius")
        h = self.box_side / self.cells
        need(self.major_radius + self.minor_radius < 0.5 * self.box_side - 2 * h, "major_radius",
             "torus does not fit in the box with a 2-cell margin")
        need(len(self.lambdas) > 0, "lambdas", "schedule must be nonempty")
        need(all(x > 0 for x in self.lambdas), "lambdas", "values must be positive")
        need(self.lambda_units in ("grid", "physical"), "lambda_units", "must be 'grid' or 'physical'")
        need(min(self.lambdas) >= self.lambda_min, "lambdas", f"values below lambda_min = {self.lambda_min}")
        need(len(self.gammas) > 0 and all(g >= 0 for g in self.gammas), "gammas",
             "schedule must be nonempty and non-negative")
        need(self.fixed_point_tol > 0 and self.linear_tol > 0 and self.eigen_tol > 0, "tolerances",
             "must be positive")
        need(0 < self.relaxation <= 1, "relaxation", "must lie in (0, 1]")
        need(self.seeds >= 1 and self.gamma_seeds >= 1, "seeds", "must be >= 1")
        need(self.perturbation > 0 and self.t_max > 0 and self.dt >= 0, "dynamics",
             "perturbation and t_max must be positive, dt non-negative")
        need(self.eigen_k >= 1, "eigen_k", "must be >= 1")
        need(self.tbound_beta > 0 and self.tbound_samples >= 1, "tbound", "beta > 0 and samples >= 1")
        need(len(self.windings) > 0, "windings", "must be nonempty")
        need(self.ball_cells >= 8 and self.ball_radius > 0, "ball", "cells >= 8 and radius > 0")

    @property
    def h(self) -> float:
        return self.box_side / self.cells

    def physical_lambdas(self):
        s = 1.0 / self.h**2 if self.lambda_units == "grid" else 1.0
        return [x * s for x in sorted(self.lambdas)]

    def physical_lambda_min(self) -> float:
        return self.lambda_min / self.h**2 if self.lambda_units == "grid" else self.lambda_min

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def with_(self, **kw) -> "RunConfig":
        d = asdict(self)
        d.update(kw)
        return RunConfig(**d)


# section -> keys accepted in that section
SECTIONS = {
    "geometry": ["box_side", "cells", "major_radius", "minor_radius"],
    "boundary": ["winding", "amplitude", "windings"],
    "steady": ["lambdas", "lambda_units", "lambda_min", "fixed_point_tol", "linear_tol", "max_iters",
               "relaxation", "demag"],
    "dynamics": ["gammas", "seeds", "gamma_seeds", "perturbation", "t_max", "dt", "decay_tol"],
    "spectrum": ["eigen_k", "eigen_tol", "coupling", "tbound_beta", "tbound_samples", "box_lambda",
                 "box_cube_side"],
    "maxwell": ["ball_cells", "ball_radius", "demag_samples"],
    "output": ["seed", "output_dir", "snapshot_every"],
}


def _line_of(text: str, section: str, key: str):
    cur = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            cur = m.group(1).strip()
        elif cur == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return no
    return None


def _parse_schedule(raw: str):
    """'a, b, c' or 'geometric(start, factor, count)'."""
    raw = raw.strip()
    m = re.fullmatch(r"geometric\(\s*([^,]+),\s*([^,]+),\s*([^)]+)\)", raw)
    if m:
        start, factor, count = float(m.group(1)), float(m.group(2)), int(m.group(3))
        return tuple(start * factor**j for j in range(count))
    return tuple(float(x) for x in raw.replace(";", ",").split(",") if x.strip())


def load_config(path) -> RunConfig:
    """Parse an INI file; errors name the file and line."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"{path}: cannot read config ({exc.strerror})") from None
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    types = {f.name: f.type for f in fields(RunConfig)}
    defaults = RunConfig()
    values = {}
    for section in cp.sections():
        if section not in SECTIONS:
            line = next((i for i, l in enumerate(text.splitlines(), 1) if l.strip() == f"[{section}]"), "?")
            raise ConfigurationError(f"{path}: unknown section [{section}] (line {line})")
        for key, raw in cp.items(section):
            line = _line_of(text, section, key)
            where = f"{path}:{line}: [{section}] {key}"
            if key not in SECTIONS[section]:
                raise ConfigurationError(f"{where}: unknown key")
            default = getattr(defaults, key)
            try:
                if isinstance(default, bool):
                    val = cp.getboolean(section, key)
                elif isinstance(default, tuple):
                    val = _parse_schedule(raw)
                    if key == "windings":
                        val = tuple(int(x) for x in val)
                elif isinstance(default, int):
                    val = int(raw)
                elif isinstance(default, float):
                    val = float(raw)
                else:
                    val = raw.strip()
            except ValueError:
                raise ConfigurationError(f"{where}: cannot parse {raw!r} as {types[key]}") from None
            values[key] = val
    try:
        return RunConfig(**values)
    except ConfigurationError as exc:
        key = str(exc).split(":")[0]
        sec = next((s for s, ks in SECTIONS.items() if key in ks), None)
        line = _line_of(text, sec, key) if sec else None
        loc = f"{path}:{line}" if line else str(path)
        raise ConfigurationError(f"{loc}: {exc}") from None


def dump_config(cfg: RunConfig) -> str:
    d = cfg.to_dict()
    out = []
    for section, keys in SECTIONS.items():
        out.append(f"[{section}]")
        for k in keys:
            v = d[k]
            if isinstance(v, list):
                v = ", ".join(repr(x) for x in v)
            out.append(f"{k} = {v}")
        out.append("")
    return "\n".join(out)


def resolve_output_dir(cfg: RunConfig) -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or cfg.output_dir)
