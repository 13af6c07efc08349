"""
Run configuration.

Values are resolved in this order, later wins:
    built-in defaults <- JSON config file (--config or AGING_CONFIG)
    <- AGING_* environment variables <- command-line flags
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from errors import IoFailure
from trend import DEFAULT_ALPHA, check_alpha

logger = logging.getLogger(__name__)

CONFIG_ENV = 'AGING_CONFIG'
OUTPUT_FORMATS = ('csv', 'json')

# env var -> (field, parser)
ENV_OVERRIDES = {
    'AGING_ALPHA': ('alpha', float),
    'AGING_HORIZON_S': ('horizon_s', float),
    'AGING_THRESHOLD_MS': ('threshold_ms', float),
    'AGING_MIN_GC_SAMPLES': ('min_gc_samples', int),
    'AGING_FORMAT': ('format', str),
    'AGING_JOBS': ('jobs', int),
    'AGING_SEED': ('seed', int),
}


@dataclass(frozen=True)
class RunConfig:
    alpha: float = DEFAULT_ALPHA
    horizon_s: float = 21600.0
    threshold_ms: float = 200.0
    min_gc_samples: int = 100
    format: str = 'csv'
    jobs: int = 1
    seed: int = 0
    gc_top_n: int = 5
    task_top_n: int = 10

    def __post_init__(self):
        check_alpha(self.alpha)
        if not self.horizon_s > 0:
            raise ValueError(f"horizon_s must be positive, got {self.horizon_s}")
        if not self.threshold_ms > 0:
            raise ValueError(f"threshold_ms must be positive, got {self.threshold_ms}")
        if self.min_gc_samples < 0:
            raise ValueError(f"min_gc_samples must be >= 0, got {self.min_gc_samples}")
        if self.format not in OUTPUT_FORMATS:
            raise ValueError(f"format must be one of {', '.join(OUTPUT_FORMATS)}, got {self.format!r}")
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")
        if self.gc_top_n < 1 or self.task_top_n < 1:
            raise ValueError("ranking sizes must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, 'r') as f:
            doc = json.load(f)
    except OSError as e:
        raise IoFailure(f"Cannot read config file {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ValueError(f"Config file {path} is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ValueError(f"Config file {path}: top level must be an object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValueError(f"Config file {path}: unknown key(s) {', '.join(unknown)}")
    logger.debug("Loaded run config from %s", path)
    return doc


def _env_values(environ: Mapping[str, str]) -> Dict[str, Any]:
    values = {}
    for var, (name, parse) in ENV_OVERRIDES.items():
        raw = environ.get(var)
        if raw is None or raw == '':
            continue
        try:
            values[name] = parse(raw.strip())
        except ValueError:
            raise ValueError(f"{var}={raw!r} is not a valid {parse.__name__}") from None
    return values


def load_run_config(config_file: Optional[Union[str, Path]] = None,
                    overrides: Optional[Mapping[str, Any]] = None,
                    environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Resolve a RunConfig.

    Args:
        config_file: JSON file; falls back to $AGING_CONFIG when None
        overrides: Explicit values (CLI flags); None entries are ignored
        environ: Environment to read, os.environ by default
    """
    environ = os.environ if environ is None else environ
    config = RunConfig()

    config_file = config_file or environ.get(CONFIG_ENV)
    if config_file:
        config = replace(config, **_read_config_file(config_file))

    env = _env_values(environ)
    if env:
        logger.debug("Environment overrides: %s", ', '.join(sorted(env)))
        config = replace(config, **env)

    explicit = {k: v for k, v in (overrides or {}).items() if v is not None}
    if explicit:
        config = replace(config, **explicit)
    return config
