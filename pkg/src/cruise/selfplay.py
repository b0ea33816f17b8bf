"""Curriculum schedule execution and iterative self-play with frozen opponents.

One active policy learns; opponents hold byte-frozen copies of earlier
parameters and are re-synced whenever the active policy's evaluated win rate
clears the threshold.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .control import ControllerGains
from .curriculum import CurriculumStage, vanilla_schedule
from .dynamics import DroneParams
from .env import EnvConfig, RacingEnv, observation_dim
from .errors import EmptyResults
from .nn import NetworkSpec, PolicyParams, network_for, save_checkpoint
from .ppo import PPOTrainer, PpoConfig
from .rewards import NormalizationConfig, RewardWeights
from .track import Track

MODE_ALG1 = "curriculum_selfplay"  # self-play embedded in every stage
MODE_STAGED = "single_agent_then_selfplay"  # single-agent curriculum first

EVAL_SEED_STRIDE = 1_000_003
EVAL_SEED_OFFSET = 777_000  # keeps eval seeds disjoint from training seeds


@dataclass(frozen=True)
class SelfPlayConfig:
    eval_interval: int = 100_000  # timesteps between win-rate evaluations
    eval_episodes: int = 20  # M (n_eval) episodes per evaluation
    win_threshold: float = 0.6
    num_agents: int = 2
    mode: str = MODE_STAGED
    selfplay_timesteps: int = 10_000_000  # budget of the staged-mode self-play phase
    eval_max_steps: int = 400  # env steps per evaluation episode

    def __post_init__(self):
        if self.eval_interval <= 0 or self.eval_episodes < 1:
            raise ValueError("eval_interval and eval_episodes must be positive")
        if not (0.0 <= self.win_threshold <= 1.0):
            raise ValueError("win_threshold must be in [0,1]")
        if self.mode not in (MODE_ALG1, MODE_STAGED):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class MatchResult:
    active_progress: int
    opponent_progress: list[int]
    win: bool = field(init=False)

    def __post_init__(self):
        best_opp = max(self.opponent_progress) if self.opponent_progress else -1
        self.win = self.active_progress > best_opp


def win_rate(results: list[MatchResult]) -> float:
    """Fraction of strict wins; ties count as losses."""
    if not results:
        raise EmptyResults("win_rate needs at least one result")
    return sum(1 for r in results if r.win) / len(results)


@dataclass
class EnvBundle:
    """Everything needed to build a racing env except the stage."""

    track: Track
    weights: RewardWeights = field(default_factory=RewardWeights)
    norm: NormalizationConfig | None = None
    env_cfg: EnvConfig = field(default_factory=EnvConfig)
    drone_params: DroneParams = field(default_factory=DroneParams)
    gains: ControllerGains = field(default_factory=ControllerGains)

    def make_env(
        self,
        stage: CurriculumStage,
        num_agents: int,
        seed: int,
        lap_target: int | None = None,
        max_steps: int | None = None,
    ) -> RacingEnv:
        cfg = self.env_cfg
        kwargs = {"num_agents": num_agents}
        if lap_target is not None:
            kwargs["lap_target"] = lap_target
        if max_steps is not None:
            kwargs["max_episode_steps"] = max_steps
        from dataclasses import replace

        cfg = replace(cfg, **kwargs)
        return RacingEnv(
            self.track,
            stage,
            weights=self.weights,
            norm=self.norm,
            cfg=cfg,
            drone_params=self.drone_params,
            gains=self.gains,
            seed=seed,
        )


class PaddedObsEnv:
    """Single-agent env padded to the n-agent observation layout.

    Absent opponents are encoded exactly like terminated ones (relative
    position 0, distance 1), so single-agent curriculum weights transfer
    byte-exactly into the self-play phase.
    """

    def __init__(self, env: RacingEnv, total_agents: int):
        self.env = env
        self.n = env.n
        k = total_agents - 1
        self._pad = np.concatenate([np.zeros(3 * k), np.ones(k)])
        self.obs_dim = env.obs_dim + self._pad.size

    def _padded(self, obs: np.ndarray) -> np.ndarray:
        return np.hstack([obs, np.tile(self._pad, (obs.shape[0], 1))])

    def reset(self, seed=None):
        return self._padded(self.env.reset(seed))

    def step(self, actions):
        out = self.env.step(actions)
        out.observations = self._padded(out.observations)
        return out

    def __getattr__(self, name):
        return getattr(self.env, name)


def evaluate_active(
    active: PolicyParams,
    opponents: list[PolicyParams],
    stage: CurriculumStage,
    bundle: EnvBundle,
    cfg: SelfPlayConfig,
    seed_base: int,
) -> list[MatchResult]:
    """M full episodes with deterministic (mean) actions for every agent;
    progress is total gates passed at episode end."""
    net = network_for(active.spec)
    n = len(opponents) + 1
    results = []
    for j in range(cfg.eval_episodes):
        env = bundle.make_env(
            stage, n, seed=seed_base + j, lap_target=0, max_steps=cfg.eval_max_steps
        )
        obs = env.reset()
        params_all = [active] + opponents
        try:
            while not env.all_done:
                actions = np.zeros((n, active.spec.action_dim))
                for i in range(n):
                    a, _, _ = net.act(params_all[i].flat, obs[i], None)
                    actions[i] = a
                obs = env.step(actions).observations
            progresses = [p.gates_passed_total for p in env.progress]
        except Exception:
            # env faults count the episode as a loss
            progresses = [0] + [1] * (n - 1)
        results.append(MatchResult(progresses[0], progresses[1:]))
    return results


def _write_jsonl(path, record):
    with open(path, "a") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")


def run_training(
    bundle: EnvBundle,
    schedule: tuple[CurriculumStage, ...],
    sp_cfg: SelfPlayConfig,
    ppo_cfg: PpoConfig,
    seed: int,
    out_dir: str,
    hidden_sizes: tuple[int, ...] = (128, 128),
    eval_fn=None,
    resume: bool = False,
) -> dict:
    """Full curriculum + self-play run. Writes stage checkpoints, a stats
    stream, and a sync-event log into out_dir; returns run artifacts."""
    os.makedirs(out_dir, exist_ok=True)
    n = sp_cfg.num_agents
    obs_dim = observation_dim(bundle.track.num_gates, n)
    spec = NetworkSpec(obs_dim=obs_dim, hidden_sizes=hidden_sizes)
    net = network_for(spec)
    eval_fn = eval_fn or evaluate_active

    stats_path = os.path.join(out_dir, "stats.jsonl")
    sync_path = os.path.join(out_dir, "sync_events.jsonl")
    state_path = os.path.join(out_dir, "run_state.json")

    active = net.init_params(seed)
    opponents = [active.copy() for _ in range(n - 1)]  # initial sync
    completed_stages = 0
    total_timesteps = 0
    selfplay_done = 0

    if resume and os.path.exists(state_path):
        with open(state_path) as f:
            run_state = json.loads(f.read())
        completed_stages = run_state["completed_stages"]
        total_timesteps = run_state["total_timesteps"]
        selfplay_done = run_state.get("selfplay_done", 0)
        from .nn import load_checkpoint

        active = load_checkpoint(run_state["last_checkpoint"])
        opponents = [active.copy() for _ in range(n - 1)]
    else:
        for p in (stats_path, sync_path):
            if os.path.exists(p):
                os.remove(p)

    def write_stats(record):
        _write_jsonl(stats_path, record)

    def save_state(last_ckpt):
        with open(state_path, "w") as f:
            f.write(
                json.dumps(
                    {
                        "completed_stages": completed_stages,
                        "total_timesteps": total_timesteps,
                        "selfplay_done": selfplay_done,
                        "last_checkpoint": last_ckpt,
                        "seed": seed,
                    },
                    sort_keys=True,
                )
            )

    stage_ckpts = []
    for k in range(len(schedule)):
        stage_ckpts.append(os.path.join(out_dir, f"stage_{schedule[k].stage_index}.ckpt"))

    eval_counter = [0]
    sync_counter = [0]

    def make_eval_boundary_cb(trainer, stage, agents_in_env):
        last_boundary = [trainer.timesteps // sp_cfg.eval_interval]

        def cb(timesteps):
            nonlocal opponents
            boundary = timesteps // sp_cfg.eval_interval
            while last_boundary[0] < boundary:
                last_boundary[0] += 1
                if agents_in_env < 2:
                    continue  # no opponents to evaluate against
                eval_counter[0] += 1
                seed_base = seed * EVAL_SEED_STRIDE + EVAL_SEED_OFFSET + eval_counter[0] * 10_000
                results = eval_fn(trainer.params, opponents, stage, bundle, sp_cfg, seed_base)
                w = win_rate(results)
                synced = w >= sp_cfg.win_threshold
                _write_jsonl(
                    sync_path,
                    {
                        "timestep": timesteps,
                        "stage": stage.stage_index,
                        "win_rate": w,
                        "synced": bool(synced),
                    },
                )
                if synced:
                    opponents = [trainer.params.copy() for _ in range(n - 1)]
                    trainer.set_opponents(opponents)
                    sync_counter[0] += 1
                    save_checkpoint(
                        trainer.params,
                        os.path.join(out_dir, f"sync_{sync_counter[0]:04d}.ckpt"),
                        rng_seed=seed,
                    )

        return cb

    for k, stage in enumerate(schedule):
        if k < completed_stages:
            continue
        agents_in_env = n if sp_cfg.mode == MODE_ALG1 else 1
        envs = []
        for e in range(ppo_cfg.num_envs):
            env_seed = seed * 10_000 + stage.stage_index * 100 + e
            if agents_in_env == 1 and n > 1:
                envs.append(PaddedObsEnv(bundle.make_env(stage, 1, env_seed, lap_target=0), n))
            else:
                envs.append(bundle.make_env(stage, agents_in_env, env_seed, lap_target=0))
        trainer = PPOTrainer(
            active,
            envs,
            ppo_cfg,
            np.random.default_rng(seed * 97 + stage.stage_index),
            opponent_params=opponents if agents_in_env > 1 else [],
            stats_writer=write_stats,
        )
        trainer.timesteps = total_timesteps
        trainer.train(
            stage.timestep_budget, callback=make_eval_boundary_cb(trainer, stage, agents_in_env)
        )
        active = trainer.params  # stage weight transfer, byte-exact
        total_timesteps = trainer.timesteps
        save_checkpoint(active, stage_ckpts[k], rng_seed=seed)
        completed_stages = k + 1
        save_state(stage_ckpts[k])

    # staged mode: self-play phase at final-stage parameters
    if sp_cfg.mode == MODE_STAGED and n > 1 and sp_cfg.selfplay_timesteps > selfplay_done:
        stage = schedule[-1]
        opponents = [active.copy() for _ in range(n - 1)]
        envs = [
            bundle.make_env(stage, n, seed * 10_000 + 9_000 + e, lap_target=0)
            for e in range(ppo_cfg.num_envs)
        ]
        trainer = PPOTrainer(
            active,
            envs,
            ppo_cfg,
            np.random.default_rng(seed * 97 + 9_999),
            opponent_params=opponents,
            stats_writer=write_stats,
        )
        trainer.timesteps = total_timesteps
        trainer.train(
            sp_cfg.selfplay_timesteps - selfplay_done,
            callback=make_eval_boundary_cb(trainer, stage, n),
        )
        active = trainer.params
        selfplay_done = sp_cfg.selfplay_timesteps
        total_timesteps = trainer.timesteps

    final_path = os.path.join(out_dir, "final.ckpt")
    save_checkpoint(active, final_path, rng_seed=seed)
    save_state(final_path)
    return {
        "final_params": active,
        "final_checkpoint": final_path,
        "stage_checkpoints": stage_ckpts,
        "stats_path": stats_path,
        "sync_events_path": sync_path,
        "total_timesteps": total_timesteps,
    }


def run_vanilla_baseline(
    bundle: EnvBundle,
    sp_cfg: SelfPlayConfig,
    ppo_cfg: PpoConfig,
    seed: int,
    out_dir: str,
    total_timesteps: int | None = None,
    hidden_sizes: tuple[int, ...] = (128, 128),
) -> dict:
    """Train from scratch on the final-stage task only, same total budget."""
    schedule = vanilla_schedule(total_timesteps)
    from dataclasses import replace

    sp = replace(sp_cfg, selfplay_timesteps=0)
    return run_training(
        bundle, schedule, sp, ppo_cfg, seed, out_dir, hidden_sizes=hidden_sizes
    )
