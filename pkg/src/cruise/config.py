"""Typed experiment configuration, YAML loading, and object builders.

Unknown or malformed fields fail loudly with the dotted field name so config
typos never silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .control import ControllerGains
from .curriculum import CurriculumStage, default_schedule, with_budgets
from .dynamics import DroneParams
from .env import EnvConfig
from .errors import ConfigError
from .ppo import PpoConfig
from .rewards import NormalizationConfig, RewardWeights
from .selfplay import EnvBundle, SelfPlayConfig
from .track import Track, load_track, make_figure_eight_track, make_ring_track


@dataclass
class TrackSection:
    name: str = "ring"  # ring | figure_eight | file
    file: str | None = None
    num_gates: int = 5
    radius: float = 5.0
    base_height: float = 2.0
    height_amplitude: float = 0.75
    lobe_radius: float = 4.0
    height: float = 2.0
    gate_half_width: float = 0.5
    gate_half_height: float = 0.5


@dataclass
class DroneSection:
    mass: float = 1.0
    inertia_diag: tuple = (0.01, 0.01, 0.02)
    gravity_accel: float = 9.81
    arm_length: float = 0.15
    max_thrust: float | None = None
    max_torque: float = 0.2


@dataclass
class GainsSection:
    vel_p: tuple = (3.0, 3.0, 3.0)
    vel_d: tuple = (0.3, 0.3, 0.3)
    pos_p: tuple = (1.0, 1.0, 1.0)
    pos_d: tuple = (0.1, 0.1, 0.1)
    att_p: tuple | None = None  # default: 40 * inertia diagonal
    att_d: tuple | None = None  # default: 12 * inertia diagonal


@dataclass
class EnvSection:
    num_agents: int = 1
    dt: float = 0.05
    physics_substeps: int = 5
    max_episode_steps: int = 1200
    lap_target: int = 2
    bounds_margin: float = 3.0
    v_cap: float = 12.0
    spawn_radius: float = 1.0
    spawn_back_distance: float = 2.0
    spawn_lateral_spacing: float = 0.6
    paper_strict: bool = False
    gate_pass_bonus: float = 1.0
    boundary_penalty: float = 1.0


@dataclass
class RewardSection:
    w_prox: float = 1.0
    w_prog: float = 1.0
    w_align: float = 0.1
    w_speed: float = 0.05
    prox_shape_a: float = 2.0
    prog_scale_beta: float = 10.0
    align_eps: float = 0.1
    overtake_bonus: float = 1.0
    collision_radius: float = 0.3


@dataclass
class NormalizationSection:
    d_max: float | None = None  # None: track diameter + 2 m
    v_max: float = 12.0


@dataclass
class NetworkSection:
    hidden_sizes: tuple = (128, 128)
    log_std_init: float = -0.6931471805599453  # ln(0.5)


@dataclass
class PpoSection:
    horizon: int = 2048
    num_envs: int = 8
    minibatch_size: int = 512
    epochs_per_update: int = 10
    clip_ratio: float = 0.2
    gae_lambda: float = 0.95
    discount_gamma: float = 0.99
    learning_rate: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.003
    max_grad_norm: float = 0.5
    reward_scale: float = 1.0
    anneal_lr: bool = False
    total_timesteps: int = 1_000_000


@dataclass
class SelfPlaySection:
    eval_interval: int = 100_000
    eval_episodes: int = 20  # M; also called n_eval
    win_threshold: float = 0.6
    num_agents: int = 2
    mode: str = "single_agent_then_selfplay"
    selfplay_timesteps: int = 10_000_000
    eval_max_steps: int = 400


@dataclass
class CurriculumSection:
    budgets: tuple | None = None  # per-stage override for desk-scale runs


@dataclass
class EvaluationSection:
    episodes: int = 100
    seed_base: int = 1_000_000
    lap_target: int = 2
    stage_index: int = 5
    checkpoints: tuple = ()  # one per agent; a single entry is replicated


@dataclass
class ExperimentConfig:
    track: TrackSection = field(default_factory=TrackSection)
    drone: DroneSection = field(default_factory=DroneSection)
    gains: GainsSection = field(default_factory=GainsSection)
    env: EnvSection = field(default_factory=EnvSection)
    reward: RewardSection = field(default_factory=RewardSection)
    normalization: NormalizationSection = field(default_factory=NormalizationSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    ppo: PpoSection = field(default_factory=PpoSection)
    selfplay: SelfPlaySection = field(default_factory=SelfPlaySection)
    curriculum: CurriculumSection = field(default_factory=CurriculumSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    seed: int = 0
    out_dir: str = "runs/run"


def _from_mapping(cls, data, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or cls.__name__}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        dotted = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(f"unknown config field: {dotted}")
        if dataclasses.is_dataclass(_section_type(known[key])):
            kwargs[key] = _from_mapping(_section_type(known[key]), value, dotted)
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    obj = cls(**{k: v for k, v in kwargs.items()})
    return obj


def _section_type(f):
    # nested sections are declared with a default_factory of the section class
    if f.default_factory is not dataclasses.MISSING:  # type: ignore[attr-defined]
        t = f.default_factory
        if dataclasses.is_dataclass(t):
            return t
    return None


def load_config(path: str) -> ExperimentConfig:
    with open(path) as f:
        data = yaml.safe_load(f)
    return _from_mapping(ExperimentConfig, data, "")


def save_resolved(cfg: ExperimentConfig, path: str) -> None:
    """Write the fully-resolved config snapshot next to the run outputs."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)

    def clean(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: clean(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, tuple):
            return [clean(v) for v in obj]
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return obj

    with open(path, "w") as f:
        yaml.safe_dump(clean(cfg), f, sort_keys=True)


# -- builders ----------------------------------------------------------------


def build_track(cfg: ExperimentConfig) -> Track:
    t = cfg.track
    if t.name == "ring":
        return make_ring_track(
            t.num_gates, t.radius, t.base_height, t.height_amplitude,
            t.gate_half_width, t.gate_half_height,
        )
    if t.name == "figure_eight":
        return make_figure_eight_track(
            6, t.lobe_radius, t.height, t.gate_half_width, t.gate_half_height
        )
    if t.name == "file":
        if not t.file:
            raise ConfigError("track.file required when track.name is 'file'")
        return load_track(t.file)
    raise ConfigError(f"track.name: unknown track {t.name!r}")


def build_drone_params(cfg: ExperimentConfig) -> DroneParams:
    d = cfg.drone
    return DroneParams(
        mass=d.mass,
        inertia=np.diag(list(d.inertia_diag)),
        gravity_accel=d.gravity_accel,
        arm_length=d.arm_length,
        max_thrust=d.max_thrust,
        max_torque=d.max_torque,
    )


def build_gains(cfg: ExperimentConfig) -> ControllerGains:
    g = cfg.gains
    j = np.asarray(cfg.drone.inertia_diag, dtype=float)
    att_p = np.asarray(g.att_p, dtype=float) if g.att_p is not None else 40.0 * j
    att_d = np.asarray(g.att_d, dtype=float) if g.att_d is not None else 12.0 * j
    return ControllerGains(
        vel_p=np.asarray(g.vel_p, dtype=float),
        vel_d=np.asarray(g.vel_d, dtype=float),
        pos_p=np.asarray(g.pos_p, dtype=float),
        pos_d=np.asarray(g.pos_d, dtype=float),
        att_p=att_p,
        att_d=att_d,
    )


def build_env_config(cfg: ExperimentConfig, **overrides) -> EnvConfig:
    e = cfg.env
    kwargs = {f.name: getattr(e, f.name) for f in dataclasses.fields(EnvSection)}
    kwargs.update(overrides)
    return EnvConfig(**kwargs)


def build_bundle(cfg: ExperimentConfig, **env_overrides) -> EnvBundle:
    track = build_track(cfg)
    r = cfg.reward
    weights = RewardWeights(
        **{f.name: getattr(r, f.name) for f in dataclasses.fields(RewardSection)}
    )
    d_max = cfg.normalization.d_max
    norm = NormalizationConfig(
        d_max=d_max if d_max is not None else track.diameter() + 2.0,
        v_max=cfg.normalization.v_max,
    )
    return EnvBundle(
        track=track,
        weights=weights,
        norm=norm,
        env_cfg=build_env_config(cfg, **env_overrides),
        drone_params=build_drone_params(cfg),
        gains=build_gains(cfg),
    )


def build_ppo_config(cfg: ExperimentConfig) -> PpoConfig:
    p = cfg.ppo
    return PpoConfig(**{f.name: getattr(p, f.name) for f in dataclasses.fields(PpoSection)})


def build_selfplay_config(cfg: ExperimentConfig) -> SelfPlayConfig:
    s = cfg.selfplay
    return SelfPlayConfig(
        **{f.name: getattr(s, f.name) for f in dataclasses.fields(SelfPlaySection)}
    )


def build_schedule(cfg: ExperimentConfig) -> tuple[CurriculumStage, ...]:
    schedule = default_schedule()
    if cfg.curriculum.budgets is not None:
        budgets = list(cfg.curriculum.budgets)
        if len(budgets) > len(schedule):
            raise ConfigError("curriculum.budgets: at most 5 entries")
        schedule = schedule[: len(budgets)]
        schedule = with_budgets(schedule, budgets)
    return schedule
