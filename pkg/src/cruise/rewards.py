"""Per-step reward components and their weighted combination."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curriculum import CurriculumStage


@dataclass(frozen=True)
class NormalizationConfig:
    d_max: float = 12.0
    v_max: float = 12.0

    def __post_init__(self):
        if self.d_max <= 0 or self.v_max <= 0:
            raise ValueError("normalization factors must be positive")


@dataclass(frozen=True)
class RewardWeights:
    w_prox: float = 1.0
    w_prog: float = 1.0
    w_align: float = 0.1
    w_speed: float = 0.05
    prox_shape_a: float = 2.0
    prog_scale_beta: float = 10.0  # 1/m
    align_eps: float = 0.1  # m/s
    overtake_bonus: float = 1.0
    collision_radius: float = 0.3  # m

    def __post_init__(self):
        if self.prox_shape_a <= 0 or self.prog_scale_beta <= 0:
            raise ValueError("shape parameters must be positive")
        if self.align_eps <= 0 or self.collision_radius <= 0:
            raise ValueError("align_eps and collision_radius must be positive")
        for name in ("w_prox", "w_prog", "w_align", "w_speed", "overtake_bonus"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def reward_proximity(d: float, norm: NormalizationConfig, weights: RewardWeights) -> float:
    """Exponential proximity shaping: +1 at the gate, -1 at d_max and beyond."""
    a = weights.prox_shape_a
    x = min(max(d / norm.d_max, 0.0), 1.0)
    ea = math.exp(-a)
    return 2.0 * (math.exp(-a * x) - ea) / (1.0 - ea) - 1.0


def reward_progress(d_prev: float, d_now: float, weights: RewardWeights) -> float:
    """Scaled change in distance to the current target gate."""
    return weights.prog_scale_beta * (d_prev - d_now)


def reward_alignment(v: np.ndarray, u_gate: np.ndarray, weights: RewardWeights) -> float:
    """1 - cos(angle between velocity and the gate direction); 0 when slow."""
    speed = float(np.linalg.norm(v))
    if speed <= weights.align_eps:
        return 0.0
    return 1.0 - float(np.dot(v, u_gate)) / speed


def reward_speed(v_mag: float, stage: CurriculumStage) -> float:
    """Tent peaking at 0 when speed hits the stage target, negative otherwise."""
    if v_mag <= stage.v_min:
        return v_mag - stage.v_min
    return stage.v_min - v_mag


def reward_overtake(
    agent_idx: int,
    positions_now: np.ndarray,
    positions_prev: np.ndarray,
    velocities_now: np.ndarray,
    velocities_prev: np.ndarray,
    weights: RewardWeights,
    stage: CurriculumStage,
    live: np.ndarray | None = None,
) -> float:
    """Bonus per opponent whose along-velocity projection flips from behind
    (negative) to ahead (positive) between consecutive steps.

    Each projection uses the agent's velocity at its own timestamp; a pair
    contributes nothing when the agent is below the speed floor at either time.
    """
    n = positions_now.shape[0]
    v_prev = velocities_prev[agent_idx]
    v_now = velocities_now[agent_idx]
    s_prev = float(np.linalg.norm(v_prev))
    s_now = float(np.linalg.norm(v_now))
    if s_prev <= weights.align_eps or s_now <= weights.align_eps:
        return 0.0
    vhat_prev = v_prev / s_prev
    vhat_now = v_now / s_now
    total = 0.0
    for j in range(n):
        if j == agent_idx:
            continue
        if live is not None and not live[j]:
            continue
        proj_prev = float(np.dot(positions_prev[j] - positions_prev[agent_idx], vhat_prev))
        proj_now = float(np.dot(positions_now[j] - positions_now[agent_idx], vhat_now))
        if proj_prev < 0.0 and proj_now > 0.0:
            total += weights.overtake_bonus * stage.overtake_weight
    return total


def reward_collision(
    agent_idx: int,
    positions: np.ndarray,
    weights: RewardWeights,
    live: np.ndarray | None = None,
) -> float:
    """1 iff any other drone is strictly within the collision radius."""
    n = positions.shape[0]
    for j in range(n):
        if j == agent_idx:
            continue
        if live is not None and not live[j]:
            continue
        if float(np.linalg.norm(positions[agent_idx] - positions[j])) < weights.collision_radius:
            return 1.0
    return 0.0


@dataclass
class RewardComponents:
    prox: float = 0.0
    prog: float = 0.0
    align: float = 0.0
    speed: float = 0.0
    over: float = 0.0  # already includes the per-stage overtake weighting
    coll: float = 0.0
    extras: float = 0.0  # config-gated shaping (gate bonus, boundary penalty)


def total_reward(
    components: RewardComponents, weights: RewardWeights, stage: CurriculumStage
) -> float:
    """Weighted sum of components; the collision term is active only when the
    stage enables collisions. Overtake carries its stage weight already."""
    r = (
        weights.w_prox * components.prox
        + weights.w_prog * components.prog
        - weights.w_align * components.align
        + weights.w_speed * components.speed
        + components.over
    )
    if stage.collisions_enabled:
        r -= stage.collision_weight * components.coll
    return r + components.extras
