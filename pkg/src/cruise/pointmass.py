"""3D point-mass velocity-reaching task for trainer sanity checks.

Action is a normalized acceleration in [-1,1]^3; reward is the negative
distance between the current velocity and a fixed target velocity. Much
cheaper than the racing env, so learning-rate sanity tests stay fast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import StepOutcome


@dataclass(frozen=True)
class PointMassConfig:
    target_velocity: tuple[float, float, float] = (2.0, 0.0, 0.0)
    accel_scale: float = 2.0
    dt: float = 0.05
    episode_steps: int = 100
    v_max: float = 4.0


class PointMassEnv:
    n = 1

    def __init__(self, cfg: PointMassConfig | None = None, seed: int = 0):
        self.cfg = cfg or PointMassConfig()
        self.rng = np.random.default_rng(seed)
        self.target = np.asarray(self.cfg.target_velocity, dtype=float)
        self.obs_dim = 6
        self.reset()

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.velocity = self.rng.uniform(-0.5, 0.5, size=3)
        self.step_count = 0
        self._done = False
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.concatenate(
            [self.velocity / self.cfg.v_max, (self.target - self.velocity) / self.cfg.v_max]
        )[None, :]

    @property
    def all_done(self) -> bool:
        return self._done

    def step(self, actions: np.ndarray) -> StepOutcome:
        a = np.clip(np.asarray(actions, dtype=float).reshape(1, 3)[0], -1.0, 1.0)
        self.velocity = self.velocity + self.cfg.accel_scale * a * self.cfg.dt
        speed = float(np.linalg.norm(self.velocity))
        if speed > self.cfg.v_max:
            self.velocity *= self.cfg.v_max / speed
        reward = -float(np.linalg.norm(self.velocity - self.target))
        self.step_count += 1
        truncated = self.step_count >= self.cfg.episode_steps
        self._done = truncated
        return StepOutcome(
            observations=self._obs(),
            rewards=np.array([reward]),
            terminated=np.array([False]),
            truncated=np.array([truncated]),
            events=[],
        )
