"""Five-stage training curriculum: per-stage environment/reward parameters."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class CurriculumStage:
    stage_index: int
    name: str
    timestep_budget: int
    v_min: float  # target speed (m/s) for the speed reward
    agility: float  # action-to-velocity scaling (m/s^2)
    collisions_enabled: bool
    collision_weight: float
    gate_tolerance: float  # m
    overtake_weight: float
    collision_terminal: bool  # collisions end the episode (stages 4-5)

    def __post_init__(self):
        if self.timestep_budget <= 0:
            raise ValueError("timestep_budget must be positive")
        if self.agility <= 0:
            raise ValueError("agility must be positive")
        if self.v_min < 0:
            raise ValueError("v_min must be non-negative")


def default_schedule() -> tuple[CurriculumStage, ...]:
    """The built-in five-stage schedule."""
    return (
        CurriculumStage(1, "basics", 1_000_000, 1.0, 2.0, False, 0.0, 0.5, 0.0, False),
        CurriculumStage(2, "intermediate", 3_000_000, 3.0, 3.0, True, 0.25, 0.3, 0.1, False),
        CurriculumStage(3, "advanced", 6_000_000, 5.0, 4.0, True, 0.5, 0.25, 0.2, False),
        CurriculumStage(4, "advanced_ii", 10_000_000, 7.0, 6.0, True, 0.6, 0.2, 0.2, True),
        CurriculumStage(5, "advanced_iii", 20_000_000, 10.0, 7.5, True, 0.7, 0.2, 0.2, True),
    )


def with_budgets(
    schedule: tuple[CurriculumStage, ...], budgets: list[int]
) -> tuple[CurriculumStage, ...]:
    """Same stage parameters with replacement timestep budgets (desk-scale runs)."""
    if len(budgets) != len(schedule):
        raise ValueError("one budget per stage required")
    return tuple(replace(s, timestep_budget=int(b)) for s, b in zip(schedule, budgets))


def vanilla_schedule(total_timesteps: int | None = None) -> tuple[CurriculumStage, ...]:
    """One-stage schedule: the final stage only, with the full combined budget."""
    stages = default_schedule()
    final = stages[-1]
    budget = total_timesteps if total_timesteps is not None else sum(
        s.timestep_budget for s in stages
    )
    return (replace(final, timestep_budget=int(budget)),)
