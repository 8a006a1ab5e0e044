"""Experiment configuration files (TOML) and bundled presets."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import tomli

KINDS = ("prediction", "control", "continuing")
METRICS = {"prediction": "rmsve", "control": "steps", "continuing": "rmsre"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    method: str
    kind: str
    environment: dict
    transform: dict
    model: dict
    agent: dict
    num_runs: int = 1
    episodes: int | None = None
    steps: int | None = None
    eval_every: int = 500
    base_seed: int = 0
    oracle: dict = field(default_factory=dict)
    output_dir: str = "results"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"experiment kind must be one of {KINDS}, got {self.kind!r}")
        if self.num_runs < 1:
            raise ConfigError("num_runs must be at least 1")
        if self.kind == "continuing":
            if not self.steps or self.steps < 1:
                raise ConfigError("continuing experiments need a positive step count")
        elif not self.episodes or self.episodes < 1:
            raise ConfigError("episodic experiments need a positive episode count")
        grid = self.agent.get("alpha_grid")
        if grid is not None:
            if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError("alpha_grid must be non-empty and strictly increasing")
        if "alpha" not in self.agent and grid is None:
            raise ConfigError("agent needs alpha or alpha_grid")
        for key in ("id",):
            if key not in self.environment or key not in self.transform:
                raise ConfigError("environment and transform sections need an id")
        if self.kind in ("prediction", "continuing") and "path" not in self.oracle:
            raise ConfigError("prediction experiments need oracle.path")

    @property
    def metric(self) -> str:
        return METRICS[self.kind]

    @property
    def alpha(self) -> float:
        if "alpha" not in self.agent:
            raise ConfigError("config has no scalar alpha")
        return float(self.agent["alpha"])

    @property
    def alpha_grid(self) -> list[float]:
        grid = self.agent.get("alpha_grid")
        if grid is None:
            return [self.alpha]
        return [float(a) for a in grid]

    def to_dict(self) -> dict:
        d = asdict(self)
        return {
            "experiment": {
                k: d[k]
                for k in ("name", "method", "kind", "num_runs", "episodes", "steps", "eval_every",
                          "base_seed", "output_dir")
                if d[k] is not None
            },
            "environment": d["environment"],
            "transform": d["transform"],
            "model": d["model"],
            "agent": d["agent"],
            "oracle": d["oracle"],
        }

    def config_hash(self) -> str:
        d = self.to_dict()
        d["experiment"] = {k: v for k, v in d["experiment"].items() if k != "output_dir"}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        d = copy.deepcopy(asdict(self))
        for key, value in changes.items():
            if key in ("agent", "environment", "transform", "model", "oracle"):
                d[key].update(value)
            else:
                d[key] = value
        return ExperimentConfig(**d)


def config_from_dict(d: dict) -> ExperimentConfig:
    try:
        exp = dict(d["experiment"])
        return ExperimentConfig(
            environment=dict(d["environment"]),
            transform=dict(d["transform"]),
            model=dict(d.get("model", {})),
            agent=dict(d["agent"]),
            oracle=dict(d.get("oracle", {})),
            **exp,
        )
    except (KeyError, TypeError) as err:
        raise ConfigError(f"malformed config: {err}") from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    except tomli.TOMLDecodeError as err:
        raise ConfigError(f"invalid TOML in {path}: {err}") from None
    return config_from_dict(data)


def preset_names() -> list[str]:
    root = resources.files("emecs_rl.harness") / "presets"
    names = []
    for sub in ("", "desk"):
        folder = root / sub if sub else root
        for entry in folder.iterdir():
            if entry.name.endswith(".toml"):
                stem = entry.name[: -len(".toml")]
                names.append(f"{sub}/{stem}" if sub else stem)
    return sorted(names)


def load_preset(name: str) -> ExperimentConfig:
    """Load a bundled preset such as ``mc-pred-tcj`` or ``desk/mc-pred-tcj``."""
    path = resources.files("emecs_rl.harness") / "presets" / f"{name}.toml"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}")
    with path.open("rb") as fh:
        return config_from_dict(tomli.load(fh))


def dump_config(cfg: ExperimentConfig, path) -> None:
    import tomli_w

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        tomli_w.dump(_drop_none(cfg.to_dict()), fh)


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    return d
