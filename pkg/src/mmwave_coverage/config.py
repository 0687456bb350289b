"""YAML scenario files: schema validation and conversion to runtime objects.

dB and per-km^2 units are used in files; everything is converted to linear
units and per-m^2 densities here.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .blockage import los_model_from_dict
from .montecarlo import Shadowing, SimConfig
from .network import PER_KM2, NetworkConfig
from .propagation import (
    AntennaPattern,
    FadingParams,
    PathLossParams,
    db_to_lin,
    friis_intercept,
    normalized_noise_power,
    sectored_fit,
)
from .quadrature import Quadrature

PRESETS = ("baseline-28ghz", "baseline-73ghz", "austin", "la", "buildings-28ghz")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

_antenna = {
    "oneOf": [
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["gain_db", "side_db", "beamwidth_deg"],
            "properties": {"gain_db": _num, "side_db": _num, "beamwidth_deg": {"type": "number", "exclusiveMinimum": 0, "maximum": 360}},
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["ula"],
            "properties": {
                "ula": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["n"],
                    "properties": {"n": {"type": "integer", "minimum": 2}, "spacing": _pos},
                }
            },
        },
    ]
}

_blockage_model = {
    "type": "object",
    "required": ["type"],
    "oneOf": [
        {"additionalProperties": False, "properties": {"type": {"const": "3gpp_urban"}, "a": _pos, "b": _pos}},
        {"additionalProperties": False, "properties": {"type": {"const": "suburban_exp"}, "c": _pos}},
        {"additionalProperties": False, "properties": {"type": {"const": "los_ball"}, "radius": _pos}},
        {
            "additionalProperties": False,
            "required": ["radius", "p_l"],
            "properties": {
                "type": {"const": "generalized_los_ball"},
                "radius": _pos,
                "p_l": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        {
            "additionalProperties": False,
            "required": ["distances", "probs"],
            "properties": {
                "type": {"const": "empirical"},
                "distances": {"type": "array", "items": _num, "minItems": 1},
                "probs": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
                "counts": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
        },
    ],
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["network", "blockage", "pathloss", "antenna"],
    "properties": {
        "description": {"type": "string"},
        "network": {
            "type": "object",
            "additionalProperties": False,
            "required": ["bs_density_per_km2", "carrier_ghz", "bandwidth_mhz"],
            "properties": {
                "bs_density_per_km2": _pos,
                "user_density_per_km2": _pos,
                "carrier_ghz": _pos,
                "bandwidth_mhz": _pos,
                "noise_figure_db": _num,
                "tx_power_dbm": _num,
                "noise": {"enum": ["thermal", "none"]},
            },
        },
        "blockage": {
            "type": "object",
            "additionalProperties": False,
            "required": ["model"],
            "properties": {"model": _blockage_model},
        },
        "pathloss": {
            "type": "object",
            "additionalProperties": False,
            "required": ["alpha_los", "alpha_nlos", "intercept_mode"],
            "properties": {
                "alpha_los": {"type": "number", "minimum": 1},
                "alpha_nlos": {"type": "number", "minimum": 1},
                "intercept_mode": {"enum": ["friis_1m", "explicit"]},
                "c_los_db": _num,
                "c_nlos_db": _num,
            },
        },
        "antenna": {
            "type": "object",
            "additionalProperties": False,
            "required": ["bs", "ms"],
            "properties": {"bs": _antenna, "ms": _antenna},
        },
        "fading": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"nu_los": {"type": "integer", "minimum": 1}, "nu_nlos": {"type": "integer", "minimum": 1}},
        },
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sim_radius_m": {"oneOf": [_pos, {"type": "null"}]},
                "snapshots": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "shadowing": {
                    "oneOf": [
                        {"type": "null"},
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["sigma_los_db", "sigma_nlos_db"],
                            "properties": {"sigma_los_db": {"type": "number", "minimum": 0}, "sigma_nlos_db": {"type": "number", "minimum": 0}},
                        },
                    ]
                },
                "buildings": {"oneOf": [{"type": "string"}, {"type": "null"}]},
                "rate_load": {"enum": ["pmf", "measured"]},
            },
        },
        "quadrature": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"rel_tol": _pos, "abs_tol": _pos, "tail_cutoff": _pos},
        },
    },
}


class ConfigError(ValueError):
    """Invalid scenario file; the message carries the offending field path."""


@dataclass(frozen=True)
class Scenario:
    network: NetworkConfig
    simulation: SimConfig
    quadrature: Quadrature
    document: dict  # validated source document
    source: str = ""


def _field_path(err):
    path = "/".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def validate(doc):
    """Raise ConfigError listing every schema violation with its field path."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = []
        for e in errors:
            # oneOf failures are more readable through their closest sub-error
            best = jsonschema.exceptions.best_match([e]) if e.context else e
            lines.append(f"{_field_path(best)}: {best.message}")
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines))
    pl = doc["pathloss"]
    if pl["intercept_mode"] == "explicit" and not {"c_los_db", "c_nlos_db"} <= set(pl):
        raise ConfigError("pathloss: explicit intercept_mode needs c_los_db and c_nlos_db")
    if pl["intercept_mode"] == "friis_1m" and ({"c_los_db", "c_nlos_db"} & set(pl)):
        raise ConfigError("pathloss: c_los_db/c_nlos_db are only allowed with intercept_mode: explicit")


def _pattern(doc):
    if "ula" in doc:
        return sectored_fit(doc["ula"]["n"], doc["ula"].get("spacing", 0.5))
    return AntennaPattern.from_db(doc["gain_db"], doc["side_db"], doc["beamwidth_deg"])


def build(doc, source="", base_dir=None, **overrides):
    """Validated document -> Scenario. ``overrides`` replace SimConfig fields."""
    validate(doc)
    net = doc["network"]
    carrier = net["carrier_ghz"] * 1e9
    bandwidth = net["bandwidth_mhz"] * 1e6
    pl = doc["pathloss"]
    if pl["intercept_mode"] == "friis_1m":
        c_los = c_nlos = friis_intercept(carrier)
    else:
        c_los, c_nlos = float(db_to_lin(pl["c_los_db"])), float(db_to_lin(pl["c_nlos_db"]))
    if net.get("noise", "thermal") == "none":
        noise = 0.0
    else:
        noise = normalized_noise_power(bandwidth, net.get("noise_figure_db", 10.0), net.get("tx_power_dbm", 30.0))
    fad = doc.get("fading", {})
    try:
        network = NetworkConfig(
            bs_density=net["bs_density_per_km2"] * PER_KM2,
            user_density=net.get("user_density_per_km2", 10 * net["bs_density_per_km2"]) * PER_KM2,
            los_model=los_model_from_dict(doc["blockage"]["model"]),
            pathloss=PathLossParams(c_los, c_nlos, pl["alpha_los"], pl["alpha_nlos"]),
            bs_pattern=_pattern(doc["antenna"]["bs"]),
            ms_pattern=_pattern(doc["antenna"]["ms"]),
            fading=FadingParams(fad.get("nu_los", 3), fad.get("nu_nlos", 2)),
            noise_power=noise,
            bandwidth=bandwidth,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    sim_doc = doc.get("simulation", {})
    shadow = sim_doc.get("shadowing")
    buildings = None
    if sim_doc.get("buildings"):
        from .geodata import load_buildings

        path = Path(sim_doc["buildings"])
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        buildings = load_buildings(path)
    fields = dict(
        network=network,
        sim_radius=sim_doc.get("sim_radius_m"),
        snapshots=sim_doc.get("snapshots", 100_000),
        seed=sim_doc.get("seed", 0),
        shadowing=Shadowing(**shadow) if shadow else None,
        buildings=buildings,
        rate_load=sim_doc.get("rate_load", "pmf"),
    )
    fields.update({k: v for k, v in overrides.items() if v is not None})
    try:
        sim = SimConfig(**fields)
    except ValueError as exc:
        raise ConfigError(f"simulation: {exc}") from exc
    quad = Quadrature(**doc.get("quadrature", {}))
    return Scenario(network, sim, quad, copy.deepcopy(doc), source)


def preset_document(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("mmwave_coverage.presets").joinpath(f"{name}.yaml").read_text()
    return yaml.safe_load(text)


def load_document(path_or_preset):
    """A preset name or a YAML file path -> (document, source, base_dir)."""
    if path_or_preset in PRESETS:
        base = Path(str(resources.files("mmwave_coverage.presets")))
        return preset_document(path_or_preset), f"preset:{path_or_preset}", base
    path = Path(path_or_preset)
    try:
        doc = yaml.safe_load(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("<root>: configuration must be a mapping")
    return doc, str(path), path.parent


def load(path_or_preset, **overrides):
    doc, source, base = load_document(path_or_preset)
    return build(doc, source, base, **overrides)


def isd_to_density_per_km2(isd_m):
    return 4.0 / (math.pi * isd_m**2) / PER_KM2
