from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

SCENARIOS = ("random", "ill_conditioned", "from_file")
PRECISIONS = {"single": "float32", "double": "float64"}


class ConfigInvalid(ValueError):
    """The experiment configuration is incomplete or inconsistent."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment's output files.

    ``input_path`` names the model JSON for the ``from_file`` scenario. For
    ``ill_conditioned`` the dimensions are fixed by the problem (n = m = 2, p = 0).
    """

    scenario: str = "random"
    n: int = 4
    m: int = 2
    p: int = 1
    steps: int = 100
    trials: int = 1
    seed: int = 0
    precision: str = "double"
    epsilon: float | None = None
    output_path: str = "bench-out"
    input_path: str | None = None
    spectral_radius: float = 0.9
    jobs: int = 1

    @property
    def dtype(self):
        import numpy as np

        return np.dtype(PRECISIONS[self.precision])

    def validate(self) -> "ExperimentConfig":
        scenario = self.scenario.replace("-", "_")
        cfg = replace(self, scenario=scenario)
        if scenario not in SCENARIOS:
            raise ConfigInvalid(f"unknown scenario {self.scenario!r}")
        if cfg.precision not in PRECISIONS:
            raise ConfigInvalid(f"precision must be one of {sorted(PRECISIONS)}, got {cfg.precision!r}")
        for name in ("steps", "trials", "jobs"):
            if not isinstance(getattr(cfg, name), int) or getattr(cfg, name) < 1:
                raise ConfigInvalid(f"{name} must be a positive integer")
        if not isinstance(cfg.seed, int) or cfg.seed < 0:
            raise ConfigInvalid("seed must be a nonnegative integer")
        if (cfg.epsilon is not None) != (scenario == "ill_conditioned"):
            raise ConfigInvalid("epsilon is required for, and only for, the ill_conditioned scenario")
        if scenario == "ill_conditioned":
            if not 0 < cfg.epsilon < 1:
                raise ConfigInvalid("epsilon must lie in (0, 1)")
            cfg = replace(cfg, n=2, m=2, p=0)
        if scenario == "random":
            if cfg.n < 1 or cfg.m < 1 or cfg.p < 0 or cfg.m > cfg.n:
                raise ConfigInvalid("random scenario needs 1 <= m <= n and p >= 0")
            if not 0 < cfg.spectral_radius <= 1:
                raise ConfigInvalid("spectral_radius must lie in (0, 1]")
        if scenario == "from_file" and not cfg.input_path:
            raise ConfigInvalid("from_file scenario needs an input path")
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls().merged(load_config_file(path))

    def merged(self, overrides: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(self)}
        aliases = {"out": "output_path", "input": "input_path"}
        values = {}
        for key, value in overrides.items():
            key = aliases.get(key, key)
            if key not in known:
                raise ConfigInvalid(f"unknown config key {key!r}")
            if value is not None:
                values[key] = value
        return replace(self, **values)


def load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{path}: expected a JSON object")
    return data
