"""Desk-scale curriculum trend: train stages 1-3 on the ring task at reduced
budgets and compare mean flight velocity after stage 1 vs stage 3.

Runs in roughly 10-12 minutes per seed on one core.

    python3 scripts/desk_scale_trend.py --seeds 0 1 2 --budgets 50000 100000 150000
"""

import argparse
import dataclasses
import json
import math
import os

import numpy as np

from cruise.config import ExperimentConfig, build_bundle
from cruise.curriculum import default_schedule, with_budgets
from cruise.nn import NetworkSpec, network_for, save_checkpoint
from cruise.ppo import PpoConfig, PPOTrainer

DESK_PPO = PpoConfig(
    horizon=256,
    num_envs=8,
    minibatch_size=256,
    epochs_per_update=8,
    learning_rate=1e-3,
    entropy_coef=0.002,
    discount_gamma=0.98,
    reward_scale=0.05,
    anneal_lr=True,
)


def train_chain(bundle, schedule, seed, hidden=(64, 64)):
    params, net, after = None, None, []
    for stage in schedule:
        envs = [
            bundle.make_env(stage, 1, seed=seed * 100 + e, lap_target=0, max_steps=1200)
            for e in range(DESK_PPO.num_envs)
        ]
        if params is None:
            spec = NetworkSpec(obs_dim=envs[0].obs_dim, hidden_sizes=hidden)
            net = network_for(spec)
            params = net.init_params(seed, log_std_init=math.log(0.6))
        trainer = PPOTrainer(
            params, envs, DESK_PPO, np.random.default_rng(seed * 7 + stage.stage_index)
        )
        trainer.train(stage.timestep_budget)
        params = trainer.params
        after.append(params.copy())
        print(f"  seed {seed}: stage {stage.stage_index} done "
              f"({stage.timestep_budget} steps)", flush=True)
    return net, after


def mean_velocity(bundle, net, params, stage, episodes, seed_base):
    vels = []
    for j in range(episodes):
        env = bundle.make_env(stage, 1, seed=seed_base + j, lap_target=0, max_steps=1200)
        obs = env.reset()
        while not env.all_done:
            a, _, _ = net.act(params.flat, obs[0], None)
            obs = env.step(a[None]).observations
        vels.append(env.mean_velocity(0))
    return float(np.mean(vels))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--budgets", type=int, nargs=3, default=[50_000, 100_000, 150_000])
    ap.add_argument("--episodes", type=int, default=10)
    ap.add_argument("--out-dir", default="runs/desk_trend")
    args = ap.parse_args()

    bundle = build_bundle(ExperimentConfig())
    bundle = dataclasses.replace(
        bundle,
        env_cfg=dataclasses.replace(bundle.env_cfg, gate_pass_bonus=10.0,
                                    max_episode_steps=1200),
    )
    schedule = with_budgets(default_schedule()[:3], args.budgets)
    os.makedirs(args.out_dir, exist_ok=True)

    rows = []
    for seed in args.seeds:
        net, after = train_chain(bundle, schedule, seed)
        save_checkpoint(after[-1], os.path.join(args.out_dir, f"seed{seed}_stage3.ckpt"))
        v1 = mean_velocity(bundle, net, after[0], schedule[0], args.episodes, 800_000 + seed * 1000)
        v3 = mean_velocity(bundle, net, after[2], schedule[2], args.episodes, 800_000 + seed * 1000)
        rows.append({"seed": seed, "v_stage1": v1, "v_stage3": v3,
                     "ratio": v3 / max(v1, 1e-9)})
        print(f"seed {seed}: stage-1 {v1:.2f} m/s, stage-3 {v3:.2f} m/s "
              f"(ratio {rows[-1]['ratio']:.2f})", flush=True)

    with open(os.path.join(args.out_dir, "trend.json"), "w") as f:
        json.dump(rows, f, indent=2)
    mean_ratio = float(np.mean([r["ratio"] for r in rows]))
    print(f"mean stage-3/stage-1 velocity ratio: {mean_ratio:.2f}")


if __name__ == "__main__":
    main()
