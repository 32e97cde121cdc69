"""Settings loaded from the packaged ``defaults.yaml``."""

import dataclasses
import functools
import os

import yaml

from .errors import ConfigError

THREADS_ENV = "HOMOPART_THREADS"


@dataclasses.dataclass(frozen=True)
class Settings:
    threads: int = 1
    pair_sample_threshold: int = 400
    pair_samples: int = 4000
    max_anchors: int = 4096
    distance_chunk: int = 4096
    exact_subset_cap: int = 22
    exhaustive_oracle_cap: int = 12
    vc_cap: int = 4
    witness_budget: int = 10000
    witness_batch: int = 256
    family_attempts: int = 64
    concentration_boxes: int = 100
    concentration_sigmas: float = 3.0
    link_vertices_per_part: int = 4


def default_config_path():
    return os.path.join(os.path.dirname(__file__), "defaults.yaml")


def load_config(path=None, environ=None):
    """
    Load settings from the packaged defaults, optionally overlaid by a user file.

    Parameters:
        path (str): Optional YAML file whose keys override the defaults.
        environ (mapping): Environment to read ``HOMOPART_THREADS`` from
                           (defaults to ``os.environ``).

    Returns:
        Settings: The merged, validated settings.
    """
    with open(default_config_path()) as f:
        values = yaml.safe_load(f) or {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"Config file '{path}' does not exist.")
        with open(path) as f:
            values.update(yaml.safe_load(f) or {})

    known = {field.name: field.type for field in dataclasses.fields(Settings)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(
            f"Unknown setting(s) {unknown}. Available settings: {sorted(known)}"
        )

    environ = os.environ if environ is None else environ
    if environ.get(THREADS_ENV):
        raw = environ[THREADS_ENV]
        try:
            values["threads"] = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got '{raw}'.")

    settings = Settings(**values)
    if settings.threads < 1:
        raise ConfigError(f"threads must be at least 1, got {settings.threads}.")
    return settings


@functools.lru_cache(maxsize=1)
def get_settings():
    return load_config()
