"""
Configuration documents for the command-line tool.

A config is a JSON object with optional "simulation" and "sweep" sections;
their keys may also appear at the top level. Missing keys take the values in
DEFAULTS, unknown keys are rejected, and every problem is reported as a
ConfigError naming the field.
"""

import copy
import dataclasses
import json
import logging
import os
from dataclasses import dataclass

from diffusion_engine import SimParams
from simulation_errors import ConfigError, ParameterError
from sweep_experiments import ExperimentId

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "simulation_config.json")

DEFAULTS = {
    "simulation": {
        "n_h": 1000,
        "alpha1": 0.2,
        "alpha2": 0.0,
        "alpha3": 0.0,
        "defender_basis": "bad_bots",
        "p_g": 0.4,
        "p_c": 0.8,
        "p_p": 0.8,
        "threshold_t": 72,
        "max_ticks": 100,
        "mean_degree": 10,
        "beta": 0.05,
        "graph_model": "watts_strogatz",
        "flip_rule": "net",
        "echo_suppression": True,
        "memory_capacity": 20,
        "disengagement_threshold": 74,
        "seed": 0,
    },
    "sweep": {
        "experiment": "1",
        "replications": 15,
        "base_seed": 0,
        "jobs": 1,
        "output_dir": "output",
    },
}


@dataclass(frozen=True)
class CliConfig:
    simulation: SimParams
    experiment: ExperimentId
    replications: int
    base_seed: int
    jobs: int
    output_dir: str

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return {
            "simulation": self.simulation.to_dict(),
            "sweep": {
                "experiment": self.experiment.value,
                "replications": self.replications,
                "base_seed": self.base_seed,
                "jobs": self.jobs,
                "output_dir": self.output_dir,
            },
        }


def _merge(document):
    if not isinstance(document, dict):
        raise ConfigError("configuration must be a JSON object")
    merged = copy.deepcopy(DEFAULTS)
    for key, value in document.items():
        if key in DEFAULTS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a JSON object", field=key)
            unknown = sorted(set(value) - set(DEFAULTS[key]))
            if unknown:
                raise ConfigError(f"unknown keys in section {key!r}: {', '.join(unknown)}", field=unknown[0])
            merged[key].update(value)
        elif key in DEFAULTS["simulation"]:
            merged["simulation"][key] = value
        elif key in DEFAULTS["sweep"]:
            merged["sweep"][key] = value
        else:
            raise ConfigError(f"unknown configuration key {key!r}", field=key)
    return merged


def params_from_config(section):
    """SimParams from a simulation section, validated."""
    try:
        return SimParams.from_dict(section).validate()
    except ParameterError as e:
        raise ConfigError(f"invalid simulation setting: {e}", field=e.field) from None
    except TypeError as e:
        raise ConfigError(f"invalid simulation section: {e}") from None


def _int_field(section, name, minimum):
    value = section[name]
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}", field=name)
    return value


def config_from_dict(document):
    merged = _merge(document)
    sweep = merged["sweep"]
    try:
        experiment = ExperimentId.parse(sweep["experiment"])
    except ParameterError as e:
        raise ConfigError(str(e), field="experiment") from None
    base_seed = _int_field(sweep, "base_seed", 0)
    if base_seed >= 1 << 64:
        raise ConfigError(f"base_seed must fit in 64 bits, got {base_seed}", field="base_seed")
    if not isinstance(sweep["output_dir"], str) or not sweep["output_dir"]:
        raise ConfigError(f"output_dir must be a non-empty string, got {sweep['output_dir']!r}", field="output_dir")
    return CliConfig(
        simulation=params_from_config(merged["simulation"]),
        experiment=experiment,
        replications=_int_field(sweep, "replications", 1),
        base_seed=base_seed,
        jobs=_int_field(sweep, "jobs", 1),
        output_dir=sweep["output_dir"],
    )


def load_config(path=None, default_path=None):
    """Read and validate a config file.

    With no path, ``default_path`` (the simulation_config.json shipped beside
    this module) is read; if that file is missing, DEFAULTS apply.
    """
    if path is None:
        default_path = default_path or DEFAULT_CONFIG_PATH
        if not os.path.exists(default_path):
            logging.debug(f"No config at {default_path}; using built-in defaults")
            return config_from_dict({})
        path = default_path
    try:
        with open(path, 'r') as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"error decoding JSON from {path}: {e}") from None
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    config = config_from_dict(document)
    logging.debug(f"Loaded configuration from {path}: {config.to_dict()}")
    return config


def apply_overrides(config, seed=None, jobs=None, output_dir=None, experiment=None, replications=None, base_seed=None):
    """Command-line flags win over the config document; None leaves a value alone."""
    document = config.to_dict()
    overrides = {
        ("simulation", "seed"): seed,
        ("sweep", "jobs"): jobs,
        ("sweep", "output_dir"): output_dir,
        ("sweep", "experiment"): experiment,
        ("sweep", "replications"): replications,
        ("sweep", "base_seed"): base_seed,
    }
    for (section, key), value in overrides.items():
        if value is not None:
            document[section][key] = value
    return config_from_dict(document)
