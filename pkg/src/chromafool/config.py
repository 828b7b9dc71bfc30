"""INI-style run configuration with strict key validation.

Four sections mirror the library surface: ``[attack]``, ``[pso]``,
``[transforms]`` and ``[oracle]``.  Every key has a default (the library
defaults), unknown sections or keys are errors, and the CHROMAFOOL_SEED
environment variable overrides the configured seed.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from .attack import AttackConfig, AttackVariant
from .harness import QUALITY_PASS_THRESHOLD
from .oracle import DEFAULT_SECRET_CHROMA, DEFAULT_TOLERANCE
from .pso import PsoConfig
from .transforms import TransformRanges

__all__ = ["AppConfig", "load_config", "make_attack_config"]

SEED_ENV_VAR = "CHROMAFOOL_SEED"


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str, n: int) -> tuple:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != n:
        raise ValueError(f"expected {n} numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _parse_ints(text: str) -> tuple:
    parts = [p for p in text.replace(",", " ").split() if p]
    return tuple(int(p) for p in parts)


_ATTACK_KEYS = {
    "quality_weight": float,
    "n_samples": int,
    "query_limit": int,
    "fitness_form": str,
    "fool_expectation_max": float,
    "fooled_quality_min": float,
    "seed": int,
    "restart_on_stagnation": _parse_bool,
    "quality_pass_threshold": float,
}

_PSO_KEYS = {
    "n_particles": int,
    "max_iterations": int,
    "inertia": float,
    "cognitive": float,
    "social": float,
    "velocity_clamp": float,
    "stagnation_limit": int,
}

_TRANSFORM_KEYS = {
    "illumination_coeff": lambda t: _parse_floats(t, 2),
    "illumination_center": lambda t: _parse_floats(t, 2),
    "illumination_radius": lambda t: _parse_floats(t, 2),
    "brightness_coeff": lambda t: _parse_floats(t, 2),
    "gamma_coeff": lambda t: _parse_floats(t, 2),
    "translation": lambda t: _parse_floats(t, 2),
    "rotation": lambda t: _parse_floats(t, 2),
    "crop": lambda t: _parse_floats(t, 2),
    "gaussian_kernels": _parse_ints,
    "illumination_probability": float,
}

_ORACLE_KEYS = {
    "spec": str,
    "secret_chroma": lambda t: _parse_floats(t, 3),
    "tolerance": float,
}

_SECTIONS = {
    "attack": _ATTACK_KEYS,
    "pso": _PSO_KEYS,
    "transforms": _TRANSFORM_KEYS,
    "oracle": _ORACLE_KEYS,
}


@dataclass(frozen=True)
class AppConfig:
    """Parsed configuration: per-section keyword overrides."""

    attack: dict = field(default_factory=dict)
    pso: dict = field(default_factory=dict)
    transforms: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)

    @property
    def oracle_spec_text(self) -> str | None:
        return self.oracle.get("spec")

    @property
    def secret_chroma(self) -> tuple:
        return self.oracle.get("secret_chroma", DEFAULT_SECRET_CHROMA)

    @property
    def tolerance(self) -> float:
        return self.oracle.get("tolerance", DEFAULT_TOLERANCE)

    @property
    def quality_pass_threshold(self) -> float:
        return self.attack.get("quality_pass_threshold",
                               QUALITY_PASS_THRESHOLD)


def load_config(path=None) -> AppConfig:
    """Read an INI file (optional) and apply the seed environment override."""
    sections = {name: {} for name in _SECTIONS}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None,
                                           default_section="__defaults__",
                                           inline_comment_prefixes=(";", "#"))
        with open(path) as fh:
            parser.read_file(fh)
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ValueError(f"unknown config section [{section}]")
            allowed = _SECTIONS[section]
            for key, raw in parser.items(section):
                if key not in allowed:
                    raise ValueError(
                        f"unknown key {key!r} in section [{section}]"
                    )
                try:
                    sections[section][key] = allowed[key](raw)
                except ValueError as exc:
                    raise ValueError(
                        f"bad value for [{section}] {key}: {exc}"
                    ) from exc
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        sections["attack"]["seed"] = int(env_seed)
    return AppConfig(**sections)


def make_attack_config(app: AppConfig, variant, seed=None,
                       query_limit=None) -> AttackConfig:
    """Materialize an AttackConfig from parsed sections plus CLI overrides."""
    attack_kwargs = {k: v for k, v in app.attack.items()
                     if k != "quality_pass_threshold"}
    if seed is not None:
        attack_kwargs["seed"] = seed
    if query_limit is not None:
        attack_kwargs["query_limit"] = query_limit
    ranges = TransformRanges(**app.transforms)
    pso_config = PsoConfig(**app.pso)
    return AttackConfig(variant=AttackVariant(variant), ranges=ranges,
                        pso=pso_config, **attack_kwargs)
