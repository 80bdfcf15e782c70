"""
JSON experiment configuration.

A config file has up to four sections, each optional:

    {"control": {...ControlParams fields...},
     "traffic": {...TrafficGenConfig fields...},
     "run":     {"T_max", "dt", "despawn_x", "decision_interval", "enhanced_braking",
                 "literal_region_terms", "ramp_demand", "ramp_arrival_rate", "warmup"},
     "sweep":   {"variable", "values", "replications", "output"}}

Omitted keys keep their defaults; unknown sections or keys are rejected.
"""
import json
import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from hovmerge import config
from hovmerge.config import logger
from hovmerge.linear_analysis import UnderdampedSpectrumError
from hovmerge.sim_engine import SimConfig
from hovmerge.traffic_gen import TrafficGenConfig
from hovmerge.vehicle_model import ControlParams, ParameterError

RUN_KEYS = ('T_max', 'dt', 'despawn_x', 'decision_interval', 'enhanced_braking', 'literal_region_terms',
            'ramp_demand', 'ramp_arrival_rate', 'warmup')
BOOL_KEYS = ('enhanced_braking', 'literal_region_terms', 'ramp_demand', 'warmup')
INT_KEYS = ('N_plat', 'L_plat', 'seed', 'replications')
SWEEP_KEYS = ('variable', 'values', 'replications', 'output')
SECTIONS = {
    'control': tuple(f.name for f in fields(ControlParams)),
    'traffic': tuple(f.name for f in fields(TrafficGenConfig)),
    'run': RUN_KEYS,
    'sweep': SWEEP_KEYS,
}

DEFAULT_GRIDS = {
    'T_v': config.T_V_GRID,
    'v_max': config.V_MAX_GRID,
    'x_g_dist': config.HOLD_DISTANCE_GRID,
}


class ConfigParseError(ValueError):
    """The config file is not valid JSON."""


class ConfigValidationError(ParameterError):
    """A config value is unknown, of the wrong type or out of range."""


@dataclass(frozen=True)
class ExperimentPlan:
    base: SimConfig = field(default_factory=SimConfig)
    variable: str = 'T_v'
    values: tuple = tuple(config.T_V_GRID)
    replications: int = config.DESK_REPLICATIONS
    output: Optional[str] = None

    @property
    def base_seed(self):
        return self.base.seed

    def config_for(self, value, replication):
        """SimConfig of one sweep point; replication i runs with seed base_seed + i."""
        params = self.base.params.with_updates(**{self.variable: value})
        traffic = replace(self.base.traffic, seed=self.base_seed + replication)
        return replace(self.base, params=params, traffic=traffic)

    def validate(self):
        if self.variable not in config.SWEEP_VARIABLES:
            raise ConfigValidationError(f"sweep variable must be one of {config.SWEEP_VARIABLES}: {self.variable}")
        if len(self.values) == 0:
            raise ConfigValidationError("sweep values must not be empty")
        if self.replications < 1:
            raise ConfigValidationError(f"replications >= 1 violated: replications = {self.replications}")
        for value in self.values:
            validate_sim_config(self.config_for(value, 0))
        return self


def validate_sim_config(sim_config):
    try:
        return sim_config.validate()
    except ConfigValidationError:
        raise
    except (ParameterError, UnderdampedSpectrumError) as e:
        raise ConfigValidationError(str(e)) from e


def read_sections(path):
    """Raw sections of a config file; an empty file gives no sections."""
    with open(path, 'r') as f:
        text = f.read()
    if not text.strip():
        return {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigParseError(f"{path}: line 1: top level must be an object")
    return data


def _check_value(section, key, value):
    name = f"{section}.{key}"
    if key in BOOL_KEYS:
        if not isinstance(value, bool):
            raise ConfigValidationError(f"{name} must be true or false: {value!r}")
    elif key == 'variable' or key == 'output':
        if not isinstance(value, str):
            raise ConfigValidationError(f"{name} must be a string: {value!r}")
    elif key == 'values':
        if not isinstance(value, list) or not all(_is_number(item) for item in value):
            raise ConfigValidationError(f"{name} must be a list of numbers: {value!r}")
    elif key in INT_KEYS:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigValidationError(f"{name} must be an integer: {value!r}")
    elif value is None and key in ('ramp_arrival_rate', 'd_prime_max'):
        pass
    elif not _is_number(value):
        raise ConfigValidationError(f"{name} must be a number: {value!r}")


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def check_sections(sections):
    for section, body in sections.items():
        if section not in SECTIONS:
            raise ConfigValidationError(f"unknown section: {section}")
        if not isinstance(body, dict):
            raise ConfigValidationError(f"section {section} must be an object")
        for key, value in body.items():
            if key not in SECTIONS[section]:
                raise ConfigValidationError(f"unknown key {section}.{key}")
            _check_value(section, key, value)
    return sections


def merge_sections(sections, overrides):
    """Overlay `overrides` ({section: {key: value}}) onto `sections`; None values are ignored."""
    merged = {section: dict(body) for section, body in sections.items()}
    for section, body in (overrides or {}).items():
        for key, value in body.items():
            if value is not None:
                merged.setdefault(section, {})[key] = value
    return merged


def build_plan(sections):
    check_sections(sections)
    control = sections.get('control', {})
    traffic = sections.get('traffic', {})
    run = sections.get('run', {})
    sweep = sections.get('sweep', {})

    base = SimConfig(params=ControlParams(**control), traffic=TrafficGenConfig(**traffic), **run)
    variable = sweep.get('variable', 'T_v')
    if variable not in DEFAULT_GRIDS:
        raise ConfigValidationError(f"sweep variable must be one of {config.SWEEP_VARIABLES}: {variable}")
    values = tuple(float(value) for value in sweep.get('values', DEFAULT_GRIDS[variable]))
    plan = ExperimentPlan(base=base, variable=variable, values=values,
                          replications=sweep.get('replications', config.DESK_REPLICATIONS),
                          output=sweep.get('output'))

    validate_sim_config(plan.base)
    return plan


def parse_config(path=None, overrides=None):
    """
    Build the ExperimentPlan (its `base` is the single-run SimConfig) from a
    config file and command-line overrides. Flags win over the file, the file
    wins over the built-in defaults.
    """
    sections = {}
    if path is not None:
        if not os.path.exists(path):
            raise FileNotFoundError(f"config file not found: {path}")
        sections = read_sections(path)
        check_sections(sections)
    plan = build_plan(merge_sections(sections, overrides))
    logger.debug("Effective config: %s", effective_config(plan))
    return plan


def effective_config(plan):
    """JSON-ready echo of every effective value."""
    base = plan.base
    run = {key: getattr(base, key) for key in RUN_KEYS}
    return {
        'control': {f.name: getattr(base.params, f.name) for f in fields(ControlParams)},
        'traffic': {f.name: getattr(base.traffic, f.name) for f in fields(TrafficGenConfig)},
        'run': run,
        'sweep': {'variable': plan.variable, 'values': list(plan.values), 'replications': plan.replications,
                  'output': plan.output},
    }
