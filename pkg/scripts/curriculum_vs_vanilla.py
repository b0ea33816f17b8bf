"""Equal-compute comparison: five-stage curriculum vs training on the final
stage only, evaluated on the final-stage race (2 laps, 20 episodes per seed).

Each arm is ~300k timesteps; expect roughly 20-25 minutes per seed per arm on
one core.

    python3 scripts/curriculum_vs_vanilla.py --seeds 0 1 2
"""

import argparse
import dataclasses
import json
import math
import os

import numpy as np

from cruise.config import ExperimentConfig, build_bundle
from cruise.curriculum import default_schedule, vanilla_schedule, with_budgets
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
DESK_BUDGETS = [7_680, 23_040, 46_080, 76_800, 153_600]  # same 5% of paper ratios


def train_chain(bundle, schedule, seed, hidden=(64, 64)):
    params, net = None, None
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
        print(f"  seed {seed}: stage {stage.stage_index} done "
              f"({stage.timestep_budget} steps)", flush=True)
    return net, params


def evaluate(bundle, net, params, episodes, seed_base, lap_target=2):
    stage = default_schedule()[-1]
    rows = []
    for j in range(episodes):
        env = bundle.make_env(stage, 1, seed=seed_base + j, lap_target=lap_target,
                              max_steps=1200)
        obs = env.reset()
        while not env.all_done:
            a, _, _ = net.act(params.flat, obs[0], None)
            obs = env.step(a[None]).observations
        rows.append({
            "success": env.termination_cause[0] == "finished",
            "collided": env.termination_cause[0] == "collision",
            "gates": int(env.progress[0].gates_passed_total),
            "velocity": round(env.mean_velocity(0), 3),
        })
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--episodes", type=int, default=20)
    ap.add_argument("--out-dir", default="runs/curr_vs_vanilla")
    args = ap.parse_args()

    bundle = build_bundle(ExperimentConfig())
    bundle = dataclasses.replace(
        bundle,
        env_cfg=dataclasses.replace(bundle.env_cfg, gate_pass_bonus=10.0,
                                    max_episode_steps=1200),
    )
    total = sum(DESK_BUDGETS)
    arms = {
        "curriculum": with_budgets(default_schedule(), DESK_BUDGETS),
        "vanilla": vanilla_schedule(total),
    }
    os.makedirs(args.out_dir, exist_ok=True)

    report = {}
    for name, schedule in arms.items():
        report[name] = []
        for seed in args.seeds:
            net, params = train_chain(bundle, schedule, seed)
            save_checkpoint(params, os.path.join(args.out_dir, f"{name}_seed{seed}.ckpt"))
            rows = evaluate(bundle, net, params, args.episodes, 900_000 + seed * 100)
            sr = 100.0 * np.mean([r["success"] for r in rows])
            gates = float(np.mean([r["gates"] for r in rows]))
            report[name].append({"seed": seed, "success_rate": sr,
                                 "gates_mean": gates, "episodes": rows})
            print(f"{name} seed {seed}: success {sr:.0f}%, "
                  f"mean gates {gates:.1f}", flush=True)

    with open(os.path.join(args.out_dir, "comparison.json"), "w") as f:
        json.dump(report, f, indent=2)
    for name in arms:
        srs = [r["success_rate"] for r in report[name]]
        print(f"{name}: success {np.mean(srs):.1f}% over {len(srs)} seeds")


if __name__ == "__main__":
    main()
