"""Multi-agent drone racing environment.

Policies act at 20 Hz with a normalized acceleration action; each env step
runs 5 physics/control substeps at 100 Hz with the resulting reference
velocity held. Termination, rewards, and gate tolerances come from the
active curriculum stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import control, dynamics
from .control import ControllerGains, ControllerState
from .curriculum import CurriculumStage
from .dynamics import DroneParams, DroneState
from .errors import NonFiniteState, SingularAttitude
from .rewards import (
    NormalizationConfig,
    RewardComponents,
    RewardWeights,
    reward_alignment,
    reward_collision,
    reward_overtake,
    reward_progress,
    reward_proximity,
    reward_speed,
    total_reward,
)
from .track import ProgressState, Track, check_gate_passage, update_progress

V_CAP = 12.0  # m/s, 1.2x the final-stage speed target

OBS_BASE_DIM = 13  # p_rel(3) + d_norm + v_norm(3) + v_proj + p_norm(3) + sin/cos dpsi


@dataclass(frozen=True)
class EnvConfig:
    num_agents: int = 1
    dt: float = 0.05  # policy step, s
    physics_substeps: int = 5
    max_episode_steps: int = 1200
    lap_target: int = 2  # 0 disables lap-based termination (training)
    bounds_margin: float = 3.0
    v_cap: float = V_CAP
    spawn_radius: float = 1.0
    spawn_back_distance: float = 2.0
    spawn_lateral_spacing: float = 0.6
    paper_strict: bool = False
    gate_pass_bonus: float = 1.0
    boundary_penalty: float = 1.0

    def __post_init__(self):
        if self.num_agents < 1:
            raise ValueError("num_agents must be >= 1")
        if self.dt <= 0 or self.physics_substeps < 1:
            raise ValueError("bad timing config")


@dataclass
class StepOutcome:
    observations: np.ndarray  # (n, obs_dim)
    rewards: np.ndarray  # (n,)
    terminated: np.ndarray  # (n,) bool
    truncated: np.ndarray  # (n,) bool
    events: list = field(default_factory=list)

    @property
    def done(self) -> np.ndarray:
        return self.terminated | self.truncated


def observation_dim(num_gates: int, num_agents: int) -> int:
    return OBS_BASE_DIM + num_gates + 4 * (num_agents - 1)


def apply_action(
    a_raw: np.ndarray,
    state: DroneState,
    stage: CurriculumStage,
    dt: float,
    v_cap: float = V_CAP,
) -> np.ndarray:
    """Integrate the clipped normalized acceleration into a reference velocity."""
    a = np.clip(np.asarray(a_raw, dtype=float), -1.0, 1.0)
    v_des = state.velocity_world + stage.agility * a * dt
    speed = float(np.linalg.norm(v_des))
    if speed > v_cap:
        v_des = v_des * (v_cap / speed)
    return v_des


def build_observation(
    agent_idx: int,
    states: list[DroneState],
    track: Track,
    progress: list[ProgressState],
    norm: NormalizationConfig,
    live: np.ndarray | None = None,
) -> np.ndarray:
    """Flat per-agent state vector; opponents are sorted by distance, with
    terminated opponents appended at clamped max distance."""
    n = len(states)
    st = states[agent_idx]
    gate = track.gates[progress[agent_idx].next_gate_index]
    to_gate = gate.center - st.position_world
    d = float(np.linalg.norm(to_gate))

    p_rel = np.clip(to_gate / norm.d_max, -1.0, 1.0)
    d_norm = min(d / norm.d_max, 1.0)
    v_norm = st.velocity_world / norm.v_max
    if d > 1e-9:
        v_proj = float(np.dot(st.velocity_world, to_gate / d)) / norm.v_max
    else:
        v_proj = 0.0
    one_hot = np.zeros(track.num_gates)
    one_hot[progress[agent_idx].next_gate_index] = 1.0
    p_norm = st.position_world / norm.d_max
    dpsi = gate.yaw - st.euler_angles[2]

    parts = [
        p_rel,
        [d_norm],
        v_norm,
        [v_proj],
        one_hot,
        p_norm,
        [math.sin(dpsi), math.cos(dpsi)],
    ]

    if n > 1:
        entries = []
        frozen = 0
        for j in range(n):
            if j == agent_idx:
                continue
            if live is not None and not live[j]:
                frozen += 1
                continue
            rel = states[j].position_world - st.position_world
            dist = float(np.linalg.norm(rel))
            entries.append((dist, j, rel))
        entries.sort(key=lambda e: (e[0], e[1]))  # stable tie-break by index
        p_opp = []
        d_opp = []
        for dist, _, rel in entries:
            p_opp.append(np.clip(rel / norm.d_max, -1.0, 1.0))
            d_opp.append(min(dist / norm.d_max, 1.0))
        for _ in range(frozen):
            p_opp.append(np.zeros(3))
            d_opp.append(1.0)
        parts.append(np.concatenate(p_opp))
        parts.append(d_opp)

    return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])


class RacingEnv:
    """One race instance; owns all per-agent state. Single-threaded."""

    def __init__(
        self,
        track: Track,
        stage: CurriculumStage,
        weights: RewardWeights | None = None,
        norm: NormalizationConfig | None = None,
        cfg: EnvConfig | None = None,
        drone_params: DroneParams | None = None,
        gains: ControllerGains | None = None,
        seed: int = 0,
    ):
        self.track = track
        self.stage = stage
        self.weights = weights or RewardWeights()
        self.cfg = cfg or EnvConfig()
        self.norm = norm or NormalizationConfig(
            d_max=track.diameter() + 2.0, v_max=V_CAP
        )
        self.params = drone_params or DroneParams()
        self.gains = gains or ControllerGains()
        self.rng = np.random.default_rng(seed)
        self.n = self.cfg.num_agents
        self.bounds_lo, self.bounds_hi = track.bounds(self.cfg.bounds_margin)
        self.obs_dim = observation_dim(track.num_gates, self.n)
        self._phys_dt = self.cfg.dt / self.cfg.physics_substeps
        self.record_history = False
        self.history: list[dict] = []
        self.reset()

    def set_stage(self, stage: CurriculumStage) -> None:
        self.stage = stage

    def reset(self, seed: int | None = None) -> np.ndarray:
        """Spawn agents behind gate 0 with staggered lateral offsets plus a
        random jitter in a disc; zero velocity, level attitude."""
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        gate0 = self.track.gates[0]
        back = -gate0.normal
        lateral = np.array([-math.sin(gate0.yaw), math.cos(gate0.yaw), 0.0])
        self.states: list[DroneState] = []
        for i in range(self.n):
            offset = (i - (self.n - 1) / 2.0) * self.cfg.spawn_lateral_spacing
            r = self.cfg.spawn_radius * math.sqrt(self.rng.uniform())
            ang = self.rng.uniform(0.0, 2.0 * math.pi)
            jitter = np.array([r * math.cos(ang), r * math.sin(ang), 0.0])
            pos = gate0.center + self.cfg.spawn_back_distance * back + offset * lateral + jitter
            pos[2] = max(pos[2], 0.3)
            st = DroneState.zero()
            st.position_world = pos
            self.states.append(st)
        self.ctl_states = [ControllerState() for _ in range(self.n)]
        self.progress = [ProgressState() for _ in range(self.n)]
        self.terminated = np.zeros(self.n, dtype=bool)
        self.truncated = np.zeros(self.n, dtype=bool)
        self.termination_cause = [None] * self.n
        self.sim_time = 0.0
        self.step_count = 0
        self.path_length = np.zeros(self.n)
        self.flight_time = np.zeros(self.n)
        self.collided = np.zeros(self.n, dtype=bool)
        self.history = []
        if self.record_history:
            self._record(events=[])
        return self.observations()

    def observations(self) -> np.ndarray:
        live = ~(self.terminated | self.truncated)
        obs = np.empty((self.n, self.obs_dim))
        for i in range(self.n):
            obs[i] = build_observation(
                i, self.states, self.track, self.progress, self.norm, live
            )
        return obs

    @property
    def all_done(self) -> bool:
        return bool(np.all(self.terminated | self.truncated))

    def _record(self, events):
        for i in range(self.n):
            self.history.append(
                {
                    "t": round(self.sim_time, 9),
                    "agent_id": i,
                    "position": [float(v) for v in self.states[i].position_world],
                    "velocity": [float(v) for v in self.states[i].velocity_world],
                    "next_gate_index": int(self.progress[i].next_gate_index),
                    "events": [e["type"] for e in events if e.get("agent") == i],
                }
            )

    def step(self, actions: np.ndarray) -> StepOutcome:
        actions = np.asarray(actions, dtype=float).reshape(self.n, 3)
        live_before = ~(self.terminated | self.truncated)
        events: list[dict] = []

        positions_prev = np.array([s.position_world for s in self.states])
        velocities_prev = np.array([s.velocity_world for s in self.states])
        gate_idx_prev = [p.next_gate_index for p in self.progress]
        d_prev = np.array(
            [
                float(
                    np.linalg.norm(
                        self.track.gates[gate_idx_prev[i]].center
                        - self.states[i].position_world
                    )
                )
                for i in range(self.n)
            ]
        )

        faulted = np.zeros(self.n, dtype=bool)
        for i in range(self.n):
            if not live_before[i]:
                continue
            v_des = apply_action(actions[i], self.states[i], self.stage, self.cfg.dt, self.cfg.v_cap)
            for _ in range(self.cfg.physics_substeps):
                try:
                    cmd, self.ctl_states[i] = control.track_velocity(
                        v_des, self.states[i], self.ctl_states[i],
                        self.gains, self.params, self._phys_dt,
                    )
                    self.states[i] = dynamics.step(
                        self.states[i], cmd, self.params, self._phys_dt
                    )
                except (SingularAttitude, NonFiniteState) as exc:
                    faulted[i] = True
                    events.append(
                        {"t": self.sim_time, "type": "fault", "agent": i, "detail": str(exc)}
                    )
                    break

        self.sim_time += self.cfg.dt
        self.step_count += 1

        # gate passage checked on the policy-step segment so logged
        # trajectories replay to identical events
        passes = np.zeros(self.n, dtype=bool)
        for i in range(self.n):
            if not live_before[i]:
                continue
            gate_idx = self.progress[i].next_gate_index
            gate = self.track.gates[gate_idx]
            if check_gate_passage(
                positions_prev[i], self.states[i].position_world, gate, self.stage.gate_tolerance
            ):
                passes[i] = True
                self.progress[i] = update_progress(
                    self.progress[i], True, self.sim_time, self.track.num_gates
                )
                events.append(
                    {"t": self.sim_time, "type": "gate_pass", "agent": i, "gate": gate_idx}
                )

        positions_now = np.array([s.position_world for s in self.states])
        velocities_now = np.array([s.velocity_world for s in self.states])
        for i in range(self.n):
            if live_before[i]:
                self.path_length[i] += float(
                    np.linalg.norm(positions_now[i] - positions_prev[i])
                )
                self.flight_time[i] += self.cfg.dt

        # collisions: pairwise proximity among live agents, plus out-of-bounds
        coll_flags = np.zeros(self.n)
        oob_flags = np.zeros(self.n, dtype=bool)
        for i in range(self.n):
            if not live_before[i]:
                continue
            coll_flags[i] = reward_collision(i, positions_now, self.weights, live_before)
            pos = positions_now[i]
            if np.any(pos < self.bounds_lo) or np.any(pos > self.bounds_hi):
                oob_flags[i] = True
                coll_flags[i] = 1.0
        for i in range(self.n):
            if live_before[i] and coll_flags[i] > 0:
                events.append(
                    {
                        "t": self.sim_time,
                        "type": "collision",
                        "agent": i,
                        "out_of_bounds": bool(oob_flags[i]),
                    }
                )
                self.collided[i] = True

        rewards = np.zeros(self.n)
        for i in range(self.n):
            if not live_before[i]:
                continue
            gate_now = self.track.gates[self.progress[i].next_gate_index]
            to_gate = gate_now.center - positions_now[i]
            d_now = float(np.linalg.norm(to_gate))
            u_gate = to_gate / d_now if d_now > 1e-9 else np.zeros(3)
            comp = RewardComponents()
            comp.prox = reward_proximity(d_now, self.norm, self.weights)
            # distance baseline resets when the target gate switches
            if self.progress[i].next_gate_index == gate_idx_prev[i]:
                comp.prog = reward_progress(d_prev[i], d_now, self.weights)
            comp.align = reward_alignment(velocities_now[i], u_gate, self.weights)
            comp.speed = reward_speed(float(np.linalg.norm(velocities_now[i])), self.stage)
            if self.n > 1:
                comp.over = reward_overtake(
                    i, positions_now, positions_prev,
                    velocities_now, velocities_prev,
                    self.weights, self.stage, live_before,
                )
                if comp.over > 0:
                    events.append({"t": self.sim_time, "type": "overtake", "agent": i})
            comp.coll = coll_flags[i]
            if not self.cfg.paper_strict:
                if passes[i]:
                    comp.extras += self.cfg.gate_pass_bonus
                if oob_flags[i]:
                    comp.extras -= self.cfg.boundary_penalty
            rewards[i] = total_reward(comp, self.weights, self.stage)

        # termination
        for i in range(self.n):
            if not live_before[i]:
                continue
            cause = None
            if faulted[i]:
                cause = "fault"
            elif self.stage.collision_terminal and coll_flags[i] > 0:
                cause = "collision"
            elif self.cfg.lap_target > 0 and self.progress[i].laps_completed >= self.cfg.lap_target:
                cause = "finished"
            if cause is not None:
                self.terminated[i] = True
                self.termination_cause[i] = cause
                events.append({"t": self.sim_time, "type": "termination", "agent": i, "cause": cause})

        if self.step_count >= self.cfg.max_episode_steps:
            for i in range(self.n):
                if live_before[i] and not self.terminated[i]:
                    self.truncated[i] = True
                    self.termination_cause[i] = "truncated"
                    events.append(
                        {"t": self.sim_time, "type": "termination", "agent": i, "cause": "truncated"}
                    )

        if self.record_history:
            self._record(events)

        return StepOutcome(
            observations=self.observations(),
            rewards=rewards,
            terminated=self.terminated.copy(),
            truncated=self.truncated.copy(),
            events=events,
        )

    def mean_velocity(self, agent_idx: int) -> float:
        """Path length over active flight time."""
        if self.flight_time[agent_idx] <= 0:
            return 0.0
        return float(self.path_length[agent_idx] / self.flight_time[agent_idx])
