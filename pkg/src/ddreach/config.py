"""Run configuration: a single JSON file mapping onto the dataclasses of
the individual stages. See configs/nominal.json for the full key schema."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .mlp import TrainConfig
from .quadrotor import SCENARIOS, ControlConfig, QuadParams, default_x0_box
from .sets import BoxSet

STATE_NAMES = ["x", "y", "z", "vx", "vy", "vz",
               "phi", "theta", "psi", "p", "q", "r"]


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    n_traj: int = 100
    n_steps: int = 50
    dt: float = 0.1
    seed: int = 0
    # training data are gathered under this scenario; the run-level scenario
    # only selects the admissible set used at reach/validate time
    scenario: str = "nominal"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.n_traj < 1:
            raise ConfigError("dataset.n_traj must be >= 1")
        if self.n_steps < 2:
            raise ConfigError("dataset.n_steps must be >= 2")
        if self.dt <= 0:
            raise ConfigError("dataset.dt must be positive")


@dataclass
class DmdcConfig:
    width: int = 8
    svd_tol: float = 1e-10
    excite_seed: int = 1
    n_extra_seeds: int = 40

    def __post_init__(self):
        if self.width < 1:
            raise ConfigError("dmdc.width must be >= 1")
        if self.n_extra_seeds < 0:
            raise ConfigError("dmdc.n_extra_seeds must be >= 0")
        if self.svd_tol <= 0:
            raise ConfigError("dmdc.svd_tol must be positive")


@dataclass
class ReachConfig:
    horizon: int = 50
    planes: List[Tuple[str, str]] = field(
        default_factory=lambda: [("y", "z"), ("z", "x"), ("x", "y")])
    parallel: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("reach.horizon must be >= 1")
        for pair in self.planes:
            for name in pair:
                if name not in STATE_NAMES:
                    raise ConfigError(f"unknown state axis {name!r}")

    def plane_indices(self) -> List[Tuple[int, int]]:
        return [(STATE_NAMES.index(a), STATE_NAMES.index(b))
                for a, b in self.planes]


@dataclass
class McConfig:
    n_samples: int = 10000
    scheme: str = "mixed"
    seed: int = 2
    slack_fraction: float = 0.02
    max_violation_fraction: float = 0.02

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("mc.n_samples must be >= 1")


@dataclass
class RunConfig:
    out_dir: str = "runs/nominal"
    scenario: str = "nominal"
    quad: QuadParams = field(default_factory=QuadParams)
    x0: BoxSet = field(default_factory=default_x0_box)
    control: ControlConfig = field(default_factory=ControlConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dmdc: DmdcConfig = field(default_factory=DmdcConfig)
    reach: ReachConfig = field(default_factory=ReachConfig)
    mc: McConfig = field(default_factory=McConfig)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        # the dataset is always generated under nominal commands; scenario
        # selects the admissible set used for reach/validate
        self.control = ControlConfig(
            amplitude=self.control.amplitude,
            frequency=self.control.frequency,
            noise_half_width=self.control.noise_half_width,
            scenario=self.scenario,
        )


def _take(doc: dict, key: str, cls, **extra):
    sub = doc.get(key, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"section {key!r} must be an object")
    try:
        return cls(**{**sub, **extra})
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {key!r}: {exc}") from exc


def load_config(path: str, scenario: Optional[str] = None,
                out_dir: Optional[str] = None,
                seed: Optional[int] = None) -> RunConfig:
    """Load and validate a run config, applying CLI overrides."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")

    x0_doc = doc.get("x0")
    if x0_doc is None:
        x0 = default_x0_box()
    else:
        try:
            x0 = BoxSet(center=np.asarray(x0_doc["center"], float),
                        half_width=np.asarray(x0_doc["half_width"], float))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"section 'x0': {exc}") from exc
        if x0.dim != 12:
            raise ConfigError("x0 must be 12-dimensional")

    ctrl_doc = dict(doc.get("control", {}))
    ctrl_doc.pop("scenario", None)

    try:
        cfg = RunConfig(
            out_dir=out_dir or doc.get("out_dir", "runs/run"),
            scenario=scenario or doc.get("scenario", "nominal"),
            quad=_take(doc, "quad", QuadParams),
            x0=x0,
            control=_take({"control": ctrl_doc}, "control", ControlConfig),
            dataset=_take(doc, "dataset", DatasetConfig),
            train=_take(doc, "train", TrainConfig),
            dmdc=_take(doc, "dmdc", DmdcConfig),
            reach=_take(doc, "reach", ReachConfig),
            mc=_take(doc, "mc", McConfig),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if seed is not None:
        cfg.dataset.seed = seed
        cfg.train.seed = seed
        cfg.dmdc.excite_seed = seed + 1
        cfg.mc.seed = seed + 2
    return cfg
