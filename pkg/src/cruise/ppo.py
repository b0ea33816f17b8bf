"""PPO trainer: rollout collection, GAE, clipped-surrogate updates.

Only the active agent (index 0) learns; any other agents in the env act from
frozen parameter vectors supplied by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, NonFiniteLoss
from .nn import PolicyParams, network_for


@dataclass(frozen=True)
class PpoConfig:
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
    reward_scale: float = 1.0  # scales rewards entering GAE; keeps value targets O(1)
    anneal_lr: bool = False  # linear lr decay within each train() call
    total_timesteps: int = 1_000_000

    def __post_init__(self):
        if not (0.0 < self.clip_ratio < 1.0):
            raise ValueError("clip_ratio must be in (0,1)")
        for name in ("gae_lambda", "discount_gamma"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"{name} must be in (0,1]")
        for name in ("horizon", "num_envs", "minibatch_size", "epochs_per_update"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Standard GAE; `values` carries one bootstrap row beyond `rewards`.

    dones[t] marks that the episode ended at step t, so nothing bootstraps
    across t -> t+1.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    T = rewards.shape[0]
    if values.shape[0] != T + 1 or dones.shape[0] != T:
        raise LengthMismatch("values must have T+1 rows and dones T rows")
    advantages = np.zeros_like(rewards)
    gae = np.zeros_like(rewards[0], dtype=float) if rewards.ndim > 1 else 0.0
    for t in range(T - 1, -1, -1):
        nonterm = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * nonterm - values[t]
        gae = delta + gamma * lam * nonterm * gae
        advantages[t] = gae
    return advantages, advantages + values[:-1]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(
    params: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    mhat = state.m / (1.0 - beta1 ** state.t)
    vhat = state.v / (1.0 - beta2 ** state.t)
    return params - lr * mhat / (np.sqrt(vhat) + eps)


class RolloutBuffer:
    """Fixed-capacity (horizon x num_envs) storage for the active agent."""

    def __init__(self, horizon: int, num_envs: int, obs_dim: int, action_dim: int = 3):
        self.horizon = horizon
        self.num_envs = num_envs
        self.obs = np.zeros((horizon, num_envs, obs_dim))
        self.actions = np.zeros((horizon, num_envs, action_dim))
        self.logps = np.zeros((horizon, num_envs))
        self.values = np.zeros((horizon, num_envs))
        self.rewards = np.zeros((horizon, num_envs))
        self.dones = np.zeros((horizon, num_envs))
        self.pos = 0
        self.advantages = None
        self.returns = None

    def add(self, obs, actions, logps, values, rewards, dones):
        t = self.pos
        if t >= self.horizon:
            raise IndexError("rollout buffer full")
        self.obs[t] = obs
        self.actions[t] = actions
        self.logps[t] = logps
        self.values[t] = values
        self.rewards[t] = rewards
        self.dones[t] = dones
        self.pos += 1

    def finalize(self, bootstrap_values: np.ndarray, gamma: float, lam: float):
        if self.pos != self.horizon:
            raise LengthMismatch("buffer not full")
        values_ext = np.vstack([self.values, bootstrap_values[None, :]])
        self.advantages, self.returns = compute_gae(
            self.rewards, values_ext, self.dones, gamma, lam
        )

    def flattened(self):
        n = self.horizon * self.num_envs
        return (
            self.obs.reshape(n, -1),
            self.actions.reshape(n, -1),
            self.logps.reshape(n),
            self.advantages.reshape(n),
            self.returns.reshape(n),
        )


def ppo_update(
    params: PolicyParams,
    buffer: RolloutBuffer,
    cfg: PpoConfig,
    adam: AdamState,
    rng: np.random.Generator,
    lr: float | None = None,
) -> tuple[PolicyParams, dict]:
    """Clipped-surrogate update over the finalized buffer.

    Raises NonFiniteLoss without touching `params` if anything goes non-finite.
    """
    if buffer.advantages is None:
        raise LengthMismatch("buffer must be finalized before update")
    net = network_for(params.spec)
    obs, actions, logp_old, adv, returns = buffer.flattened()
    n = obs.shape[0]
    lr = cfg.learning_rate if lr is None else lr
    flat = params.flat.copy()

    pol_losses, val_losses, entropies, kls, clip_fracs = [], [], [], [], []
    for _ in range(cfg.epochs_per_update):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = perm[start : start + cfg.minibatch_size]
            b = idx.size
            mb_obs = obs[idx]
            mb_act = actions[idx]
            mb_adv = adv[idx]
            mb_adv = (mb_adv - mb_adv.mean()) / max(mb_adv.std(), 1e-8)

            means, values, log_std = net.forward_batch(flat, mb_obs)
            logp_new = net.log_prob_batch(means, log_std, mb_act)
            ratio = np.exp(logp_new - logp_old[idx])
            unclipped = ratio * mb_adv
            clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio) * mb_adv
            surrogate = np.minimum(unclipped, clipped)
            policy_loss = -surrogate.mean()

            v_err = values - returns[idx]
            value_loss = np.mean(v_err ** 2)
            entropy = net.entropy(log_std)
            loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
            if not np.isfinite(loss):
                raise NonFiniteLoss("non-finite PPO loss; update aborted")

            # per-sample coefficients for d(loss)/d(logp, value, entropy)
            use_unclipped = unclipped <= clipped
            c_pg = np.where(use_unclipped, -mb_adv * ratio, 0.0) / b
            c_v = cfg.value_coef * 2.0 * v_err / b
            c_ent = np.full(b, -cfg.entropy_coef / b)
            grad = net.backward_batch(flat, mb_obs, mb_act, c_pg, c_v, c_ent)
            gnorm = float(np.linalg.norm(grad))
            if not math.isfinite(gnorm):
                raise NonFiniteLoss("non-finite gradient; update aborted")
            if gnorm > cfg.max_grad_norm:
                grad = grad * (cfg.max_grad_norm / gnorm)
            flat = adam_step(flat, grad, adam, lr)

            pol_losses.append(float(policy_loss))
            val_losses.append(float(value_loss))
            entropies.append(float(entropy))
            kls.append(float(np.mean((ratio - 1.0) - np.log(np.maximum(ratio, 1e-12)))))
            clip_fracs.append(float(np.mean(np.abs(ratio - 1.0) > cfg.clip_ratio)))

    if not np.all(np.isfinite(flat)):
        raise NonFiniteLoss("non-finite parameters after update; update aborted")
    stats = {
        "policy_loss": float(np.mean(pol_losses)),
        "value_loss": float(np.mean(val_losses)),
        "entropy": float(np.mean(entropies)),
        "kl": float(np.mean(kls)),
        "clip_frac": float(np.mean(clip_fracs)),
    }
    return PolicyParams(flat, params.spec), stats


def collect_rollouts(
    active_params: PolicyParams,
    opponent_params: list[PolicyParams],
    envs: list,
    horizon: int,
    rng: np.random.Generator,
    obs_store: list[np.ndarray] | None = None,
    gamma: float = 0.99,
    reward_scale: float = 1.0,
) -> tuple[RolloutBuffer, list[dict], list[np.ndarray]]:
    """Run all envs for `horizon` active-agent steps, storing only agent 0.

    Opponents sample from their frozen parameter vectors. Finished envs
    auto-reset. Time-limit truncations bootstrap the cut-off tail through the
    value function instead of treating the last state as terminal. Returns
    the (unfinalized) buffer, per-episode stats, and the last observations.
    """
    net = network_for(active_params.spec)
    obs_dim = active_params.spec.obs_dim
    buffer = RolloutBuffer(horizon, len(envs), obs_dim, active_params.spec.action_dim)
    if obs_store is None:
        obs_store = [env.reset() for env in envs]
    ep_stats: list[dict] = []
    ep_reward = [0.0] * len(envs)
    ep_len = [0] * len(envs)

    for _ in range(horizon):
        step_obs = np.zeros((len(envs), obs_dim))
        step_act = np.zeros((len(envs), active_params.spec.action_dim))
        step_logp = np.zeros(len(envs))
        step_val = np.zeros(len(envs))
        step_rew = np.zeros(len(envs))
        step_done = np.zeros(len(envs))
        for e, env in enumerate(envs):
            obs_all = obs_store[e]
            action, logp, value = net.act(active_params.flat, obs_all[0], rng)
            actions = np.zeros((env.n, active_params.spec.action_dim))
            actions[0] = action
            for k, opp in enumerate(opponent_params):
                a_opp, _, _ = net.act(opp.flat, obs_all[k + 1], rng)
                actions[k + 1] = a_opp
            out = env.step(actions)
            done = bool(out.terminated[0] or out.truncated[0])
            reward = float(out.rewards[0]) * reward_scale
            if out.truncated[0] and not out.terminated[0]:
                _, _, v_tail = net.act(active_params.flat, out.observations[0], None)
                reward += gamma * float(v_tail)
            step_obs[e] = obs_all[0]
            step_act[e] = action
            step_logp[e] = logp
            step_val[e] = value
            step_rew[e] = reward
            step_done[e] = float(done)
            ep_reward[e] += float(out.rewards[0])
            ep_len[e] += 1
            if done or env.all_done:
                ep_stats.append(
                    {
                        "reward": ep_reward[e],
                        "length": ep_len[e],
                        "gates_passed": int(env.progress[0].gates_passed_total)
                        if hasattr(env, "progress")
                        else 0,
                    }
                )
                ep_reward[e] = 0.0
                ep_len[e] = 0
                obs_store[e] = env.reset()
            else:
                obs_store[e] = out.observations
        buffer.add(step_obs, step_act, step_logp, step_val, step_rew, step_done)
    return buffer, ep_stats, obs_store


class PPOTrainer:
    """Drives collect/update cycles and streams stats records."""

    def __init__(
        self,
        params: PolicyParams,
        envs: list,
        cfg: PpoConfig,
        rng: np.random.Generator,
        opponent_params: list[PolicyParams] | None = None,
        stats_writer=None,
    ):
        self.params = params
        self.envs = envs
        self.cfg = cfg
        self.rng = rng
        self.opponent_params = opponent_params or []
        self.stats_writer = stats_writer
        self.adam = AdamState.zeros(params.flat.size)
        self.lr = cfg.learning_rate
        self.timesteps = 0
        self._obs_store = None
        self.net = network_for(params.spec)

    def set_opponents(self, opponent_params: list[PolicyParams]):
        self.opponent_params = opponent_params

    def reset_envs(self):
        self._obs_store = None

    def train(self, num_timesteps: int, callback=None, anneal_lr: bool | None = None) -> None:
        """Run updates until `num_timesteps` more env steps are consumed.

        With anneal_lr, the learning rate decays linearly to 10% of its
        current value across this call.
        """
        if anneal_lr is None:
            anneal_lr = self.cfg.anneal_lr
        start = self.timesteps
        lr0 = self.lr
        target = self.timesteps + num_timesteps
        while self.timesteps < target:
            if anneal_lr:
                frac = (self.timesteps - start) / max(num_timesteps, 1)
                self.lr = lr0 * (1.0 - 0.9 * frac)
            buffer, ep_stats, self._obs_store = collect_rollouts(
                self.params,
                self.opponent_params,
                self.envs,
                self.cfg.horizon,
                self.rng,
                self._obs_store,
                gamma=self.cfg.discount_gamma,
                reward_scale=self.cfg.reward_scale,
            )
            last_values = np.zeros(len(self.envs))
            for e in range(len(self.envs)):
                _, _, v = self.net.act(self.params.flat, self._obs_store[e][0], None)
                last_values[e] = v
            buffer.finalize(last_values, self.cfg.discount_gamma, self.cfg.gae_lambda)
            try:
                self.params, stats = ppo_update(
                    self.params, buffer, self.cfg, self.adam, self.rng, self.lr
                )
            except NonFiniteLoss:
                # params are untouched on abort; continue cautiously
                self.lr *= 0.5
                stats = {"policy_loss": float("nan"), "value_loss": float("nan"),
                         "entropy": float("nan"), "kl": float("nan"),
                         "clip_frac": float("nan"), "lr_reduced_to": self.lr}
            self.timesteps += self.cfg.horizon * len(self.envs)
            record = {"timestep": self.timesteps, **stats}
            if ep_stats:
                record["ep_reward_mean"] = float(np.mean([s["reward"] for s in ep_stats]))
                record["ep_len_mean"] = float(np.mean([s["length"] for s in ep_stats]))
                record["ep_gates_mean"] = float(np.mean([s["gates_passed"] for s in ep_stats]))
            if self.stats_writer is not None:
                self.stats_writer(record)
            if callback is not None:
                callback(self.timesteps)
