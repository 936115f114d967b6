"""Run configuration: TOML (canonical) or JSON, validated into builders.

A configuration file describes the model, grid, time step(s), velocity
bound, tolerances, penalty, flow start and sweep plan. The config hash
that names run directories is a sha256 prefix of the canonical JSON form
of the raw mapping plus the subcommand and seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from .errors import ConfigError
from .graph import VelocityBound, velocity_bound
from .model import SeparableLagrangian, TrigPolynomial
from .sweep import ReferenceSet
from .torus import torus_distance


@dataclass
class RunConfig:
    """Raw mapping from the config file plus its source path."""

    raw: dict
    path: Path = field(repr=False)

    def section(self, name: str, required: bool = True) -> dict:
        value = self.raw.get(name)
        if value is None:
            if required:
                raise ConfigError(f"config is missing the [{name}] section")
            return {}
        if not isinstance(value, dict):
            raise ConfigError(f"[{name}] must be a table, got {type(value).__name__}")
        return value

    def value(self, section: str, key: str, default=None, required: bool = False):
        table = self.section(section, required=required)
        if key in table:
            return table[key]
        if required:
            raise ConfigError(f"config is missing {section}.{key}")
        return default


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_bytes()
    try:
        if path.suffix.lower() == ".json":
            raw = json.loads(text)
        else:
            raw = tomllib.loads(text.decode("utf-8"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a table, got {type(raw).__name__}")
    return RunConfig(raw=raw, path=path)


def config_hash(config: RunConfig, command: str, seed: int) -> str:
    blob = json.dumps(
        {"config": config.raw, "command": command, "seed": seed},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def build_model(config: RunConfig):
    table = config.section("model")
    form = table.get("form", "separable")
    if form != "separable":
        raise ConfigError(
            f"config files support the separable form only, got {form!r}; "
            f"generic callback models are a library feature"
        )
    dim = int(table.get("dimension", 1))
    mass = np.atleast_2d(np.asarray(table.get("mass", np.eye(dim).tolist()), dtype=float))
    potential = table.get("potential")
    if not isinstance(potential, dict) or "terms" not in potential:
        raise ConfigError("config needs model.potential.terms")
    terms = []
    for term in potential["terms"]:
        if not isinstance(term, dict):
            raise ConfigError("potential terms must be tables")
        terms.append(
            (
                float(term.get("amplitude", 1.0)),
                term.get("frequency", [1] * dim),
                float(term.get("phase", 0.0)),
            )
        )
    return SeparableLagrangian(mass, TrigPolynomial(dim, terms))


def build_bound(config: RunConfig, model, tau: float) -> VelocityBound:
    table = config.section("velocity", required=False)
    if "max_speed" in table:
        return VelocityBound(float(table["max_speed"]), "user")
    return velocity_bound(
        model,
        tau,
        safety=float(table.get("safety", 1.5)),
        coarse_nodes_per_axis=int(table.get("coarse_nodes_per_axis", 16)),
    )


def build_reference(config: RunConfig, model) -> ReferenceSet:
    table = config.section("reference", required=False) or config.value(
        "sweep", "reference", default=None
    )
    if table is None:
        raise ConfigError("config needs a [reference] section for this command")
    if isinstance(table, str):
        table = {"kind": table}
    kind = table.get("kind", "points")
    alpha = float(table.get("alpha_h", 0.0))
    if kind == "zero-section":
        return ReferenceSet.zero_section(alpha_h=alpha)
    if kind == "potential-maxima":
        return ReferenceSet.potential_maxima(model)
    if kind == "points":
        if "points" not in table:
            raise ConfigError("a points reference needs reference.points")
        points = np.atleast_2d(np.asarray(table["points"], dtype=float))
        velocities = table.get("velocities")
        return ReferenceSet.from_points(points, alpha_h=alpha, velocities=velocities)
    raise ConfigError(f"unknown reference kind {kind!r}")


def build_penalty(config: RunConfig):
    """Penalty descriptor -> (psi callable, strength)."""
    table = config.section("penalty")
    strength = float(table.get("strength", 0.0))
    shape = table.get("shape", "bump")
    if shape == "bump":
        center = np.atleast_1d(np.asarray(table.get("center", [0.5]), dtype=float))
        width = float(table.get("width", 0.1))
        if width <= 0:
            raise ConfigError(f"penalty width must be positive, got {width}")

        def psi(x, v):
            del v
            dist = torus_distance(np.asarray(x, dtype=float), center)
            return np.exp(-((dist / width) ** 2))

        return psi, strength
    if shape == "trig":
        terms = [
            (
                float(t.get("amplitude", 1.0)),
                t.get("frequency"),
                float(t.get("phase", 0.0)),
            )
            for t in table.get("terms", [])
        ]
        if not terms:
            raise ConfigError("a trig penalty needs penalty.terms")
        dim = len(np.atleast_1d(terms[0][1]))
        poly = TrigPolynomial(dim, terms)

        def psi(x, v):
            del v
            return poly.value(x)

        return psi, strength
    raise ConfigError(f"unknown penalty shape {shape!r}")
