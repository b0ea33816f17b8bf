"""Episode-level evaluation, racing metrics, ablation, and trajectory export."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .curriculum import CurriculumStage
from .nn import PolicyParams, load_checkpoint, network_for
from .selfplay import EnvBundle
from .track import Track, check_gate_passage, load_track, save_track


@dataclass
class EpisodeResult:
    seed: int
    duration: float  # s
    success: bool
    mean_velocity: list[float]  # per agent
    lap_times: list[list[float]]  # per agent
    gates_passed: list[int]
    collided: list[bool]
    terminated_cause: list[str | None]


@dataclass
class MetricsSummary:
    """Lap time / velocity stats over successful episodes; success rate over all."""

    episodes: int
    successes: int
    success_rate: float  # percent
    lap_time_mean: float | None
    lap_time_std: float | None
    velocity_mean: float | None
    velocity_std: float | None
    velocity_mean_all: float  # over all episodes, used by the ablation trend

    @classmethod
    def from_results(cls, results: list[EpisodeResult]) -> "MetricsSummary":
        n = len(results)
        succ = [r for r in results if r.success]
        lap_times = [t for r in succ for agent in r.lap_times for t in agent]
        vels = [v for r in succ for v in r.mean_velocity]
        vels_all = [v for r in results for v in r.mean_velocity]
        return cls(
            episodes=n,
            successes=len(succ),
            success_rate=100.0 * len(succ) / n if n else 0.0,
            lap_time_mean=float(np.mean(lap_times)) if lap_times else None,
            lap_time_std=float(np.std(lap_times)) if lap_times else None,
            velocity_mean=float(np.mean(vels)) if vels else None,
            velocity_std=float(np.std(vels)) if vels else None,
            velocity_mean_all=float(np.mean(vels_all)) if vels_all else 0.0,
        )

    def row(self) -> dict:
        fmt = lambda v: "N/A" if v is None else f"{v:.3f}"
        return {
            "episodes": self.episodes,
            "lap_time_mean": fmt(self.lap_time_mean),
            "lap_time_std": fmt(self.lap_time_std),
            "velocity_mean": fmt(self.velocity_mean),
            "velocity_std": fmt(self.velocity_std),
            "success_rate": f"{self.success_rate:.1f}",
        }


def run_episode(
    bundle: EnvBundle,
    stage: CurriculumStage,
    params_list: list[PolicyParams],
    seed: int,
    lap_target: int = 2,
    record_history: bool = False,
    events_sink: list | None = None,
):
    """One full episode with deterministic (mean) actions for every agent."""
    n = len(params_list)
    env = bundle.make_env(stage, n, seed=seed, lap_target=lap_target)
    env.record_history = record_history
    obs = env.reset()
    net = network_for(params_list[0].spec)
    while not env.all_done:
        actions = np.zeros((n, params_list[0].spec.action_dim))
        live = ~(env.terminated | env.truncated)
        for i in range(n):
            if live[i]:
                a, _, _ = net.act(params_list[i].flat, obs[i], None)
                actions[i] = a
        out = env.step(actions)
        obs = out.observations
        if events_sink is not None:
            events_sink.extend(out.events)

    causes = list(env.termination_cause)
    success = lap_target > 0 and all(c == "finished" for c in causes)
    result = EpisodeResult(
        seed=seed,
        duration=float(env.sim_time),
        success=bool(success),
        mean_velocity=[env.mean_velocity(i) for i in range(n)],
        lap_times=[list(env.progress[i].lap_times) for i in range(n)],
        gates_passed=[int(env.progress[i].gates_passed_total) for i in range(n)],
        collided=[bool(c) for c in env.collided],
        terminated_cause=causes,
    )
    return result, env


def run_evaluation(
    bundle: EnvBundle,
    stage: CurriculumStage,
    params_list: list[PolicyParams],
    episodes: int,
    seed_base: int,
    lap_target: int = 2,
    events_path: str | None = None,
    trajectory_dir: str | None = None,
) -> tuple[list[EpisodeResult], MetricsSummary]:
    """Run `episodes` seeded episodes and aggregate racing metrics."""
    results = []
    for j in range(episodes):
        sink = [] if events_path else None
        record = trajectory_dir is not None and j == 0
        result, env = run_episode(
            bundle, stage, params_list, seed_base + j, lap_target,
            record_history=record, events_sink=sink,
        )
        results.append(result)
        if events_path:
            with open(events_path, "a") as f:
                for ev in sink:
                    f.write(json.dumps({"episode": j, **ev}, sort_keys=True) + "\n")
        if record:
            export_trajectories(
                env.history,
                bundle.track,
                os.path.join(trajectory_dir, f"episode_{j:03d}.jsonl"),
                g_tol=stage.gate_tolerance,
                dt=env.cfg.dt,
            )
    return results, MetricsSummary.from_results(results)


def run_ablation(
    bundle: EnvBundle,
    schedule: tuple[CurriculumStage, ...],
    checkpoint_paths: list[str],
    num_agents: int,
    episodes: int,
    seed_base: int,
    lap_target: int = 2,
) -> list[dict]:
    """Evaluate each stage checkpoint under that stage's env parameters.

    Returns one row per stage with velocity stats; rows carry a flag when the
    stage-over-stage velocity trend fails to increase.
    """
    if len(checkpoint_paths) != len(schedule):
        raise ValueError("one checkpoint per stage required")
    rows = []
    prev_vel = None
    for stage, ckpt in zip(schedule, checkpoint_paths):
        params = load_checkpoint(ckpt)
        results, summary = run_evaluation(
            bundle,
            stage,
            [params] * num_agents,
            episodes,
            seed_base + stage.stage_index * 100_000,
            lap_target=lap_target,
        )
        vel = summary.velocity_mean_all
        rows.append(
            {
                "stage": stage.stage_index,
                "num_agents": num_agents,
                "velocity_mean": vel,
                "velocity_std": float(
                    np.std([v for r in results for v in r.mean_velocity])
                ),
                "success_rate": summary.success_rate,
                "monotone_ok": prev_vel is None or vel > prev_vel,
            }
        )
        prev_vel = vel
    return rows


# -- trajectory export / replay ---------------------------------------------


def export_trajectories(
    history: list[dict], track: Track, path: str, g_tol: float, dt: float
) -> str:
    """Line-delimited trajectory records plus a track geometry sidecar."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    sidecar = path + ".track"
    save_track(track, sidecar)
    with open(path, "w") as f:
        f.write(
            json.dumps(
                {"type": "header", "track_file": os.path.basename(sidecar),
                 "g_tol": g_tol, "dt": dt},
                sort_keys=True,
            )
            + "\n"
        )
        for rec in history:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def load_trajectories(path: str) -> tuple[dict, list[dict]]:
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    header = json.loads(lines[0])
    if header.get("type") != "header":
        raise ValueError(f"{path} missing trajectory header")
    return header, [json.loads(ln) for ln in lines[1:]]


def replay_gate_events(path: str) -> tuple[bool, list, list]:
    """Re-run passage checks over a logged trajectory and compare with the
    gate events recorded at export time."""
    header, records = load_trajectories(path)
    track = load_track(os.path.join(os.path.dirname(path) or ".", header["track_file"]))
    g_tol = float(header["g_tol"])

    by_agent: dict[int, list[dict]] = {}
    for rec in records:
        by_agent.setdefault(rec["agent_id"], []).append(rec)

    recomputed = []
    logged = []
    for agent, recs in sorted(by_agent.items()):
        recs.sort(key=lambda r: r["t"])
        next_gate = recs[0]["next_gate_index"]
        for prev, cur in zip(recs, recs[1:]):
            if "gate_pass" in cur.get("events", []):
                logged.append((agent, cur["t"]))
            gate = track.gates[next_gate]
            if check_gate_passage(
                np.asarray(prev["position"]), np.asarray(cur["position"]), gate, g_tol
            ):
                recomputed.append((agent, cur["t"]))
                next_gate = (next_gate + 1) % track.num_gates
    recomputed.sort()
    logged.sort()
    return recomputed == logged, recomputed, logged


def write_metrics_csv(rows: list[dict], path: str) -> None:
    import csv

    if not rows:
        return
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
