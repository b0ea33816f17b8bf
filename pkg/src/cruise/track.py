"""Gate geometry, built-in tracks, passage detection and lap bookkeeping."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidTrackSpec

DEFAULT_GATE_HALF_WIDTH = 0.5
DEFAULT_GATE_HALF_HEIGHT = 0.5


@dataclass(frozen=True)
class Gate:
    center: np.ndarray
    yaw: float  # forward normal direction in the horizontal plane
    half_width: float = DEFAULT_GATE_HALF_WIDTH
    half_height: float = DEFAULT_GATE_HALF_HEIGHT

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if self.half_width <= 0 or self.half_height <= 0:
            raise InvalidTrackSpec("gate half extents must be positive")

    @property
    def normal(self) -> np.ndarray:
        return np.array([math.cos(self.yaw), math.sin(self.yaw), 0.0])


@dataclass(frozen=True)
class Track:
    gates: tuple[Gate, ...]
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if len(self.gates) < 2:
            raise InvalidTrackSpec("a track needs at least 2 gates")
        for a, b in zip(self.gates, self.gates[1:] + (self.gates[0],)):
            if np.allclose(a.center, b.center):
                raise InvalidTrackSpec("consecutive gate centers must be distinct")

    @property
    def num_gates(self) -> int:
        return len(self.gates)

    def diameter(self) -> float:
        centers = np.array([g.center for g in self.gates])
        d = 0.0
        for i in range(len(centers)):
            d = max(d, float(np.max(np.linalg.norm(centers - centers[i], axis=1))))
        return d

    def bounds(self, margin: float = 3.0) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box standing in for the track walls; floor at z=0."""
        centers = np.array([g.center for g in self.gates])
        lo = centers.min(axis=0) - margin
        hi = centers.max(axis=0) + margin
        lo[2] = 0.0
        return lo, hi


@dataclass
class ProgressState:
    next_gate_index: int = 0
    gates_passed_total: int = 0
    laps_completed: int = 0
    lap_start_time: float = 0.0
    lap_times: list[float] = field(default_factory=list)


def make_ring_track(
    num_gates: int = 5,
    radius: float = 5.0,
    base_height: float = 2.0,
    height_amplitude: float = 0.75,
    half_width: float = DEFAULT_GATE_HALF_WIDTH,
    half_height: float = DEFAULT_GATE_HALF_HEIGHT,
) -> Track:
    """Gates equally spaced on a circle, yaw tangent, alternating heights."""
    if num_gates < 3:
        raise InvalidTrackSpec("ring track needs at least 3 gates")
    if radius <= 0:
        raise InvalidTrackSpec("radius must be positive")
    gates = []
    for i in range(num_gates):
        ang = 2.0 * math.pi * i / num_gates
        z = base_height + height_amplitude * (1.0 if i % 2 == 0 else -1.0)
        center = np.array([radius * math.cos(ang), radius * math.sin(ang), z])
        # counterclockwise traversal: forward normal is the tangent
        gates.append(Gate(center, ang + math.pi / 2, half_width, half_height))
    return Track(tuple(gates), name="ring")


def make_figure_eight_track(
    num_gates: int = 6,
    lobe_radius: float = 4.0,
    height: float = 2.0,
    half_width: float = DEFAULT_GATE_HALF_WIDTH,
    half_height: float = DEFAULT_GATE_HALF_HEIGHT,
) -> Track:
    """Six gates on a Gerono-style double loop crossing once at the origin."""
    if num_gates != 6:
        raise InvalidTrackSpec("figure-eight layout is fixed at 6 gates")
    if lobe_radius <= 0:
        raise InvalidTrackSpec("lobe_radius must be positive")
    ts = [math.pi / 6 + i * math.pi / 3 for i in range(6)]
    centers = [
        np.array(
            [
                2.0 * lobe_radius * math.sin(t),
                lobe_radius * math.sin(2.0 * t),
                height,
            ]
        )
        for t in ts
    ]
    gates = []
    n = len(centers)
    for i in range(n):
        chord = centers[(i + 1) % n] - centers[(i - 1) % n]
        yaw = math.atan2(chord[1], chord[0])
        gates.append(Gate(centers[i], yaw, half_width, half_height))
    return Track(tuple(gates), name="figure_eight")


def effective_half_extents(gate: Gate, g_tol: float) -> tuple[float, float]:
    """Accepted opening: gate rectangle shrunk so g_tol bounds the per-axis
    deviation from the gate center."""
    return min(gate.half_width, g_tol), min(gate.half_height, g_tol)


def check_gate_passage(
    prev_pos: np.ndarray, new_pos: np.ndarray, gate: Gate, g_tol: float
) -> bool:
    """True iff the segment crosses the gate plane forward through the
    tolerance-shrunk opening."""
    n = gate.normal
    c = gate.center
    s0 = float(np.dot(np.asarray(prev_pos, dtype=float) - c, n))
    s1 = float(np.dot(np.asarray(new_pos, dtype=float) - c, n))
    if not (s0 < 0.0 and s1 > 0.0):
        return False
    t = s0 / (s0 - s1)
    hit = np.asarray(prev_pos, dtype=float) + t * (
        np.asarray(new_pos, dtype=float) - np.asarray(prev_pos, dtype=float)
    )
    d = hit - c
    lateral = np.array([-math.sin(gate.yaw), math.cos(gate.yaw), 0.0])
    ly = float(np.dot(d, lateral))
    lz = float(d[2])
    hw, hh = effective_half_extents(gate, g_tol)
    return abs(ly) < hw and abs(lz) < hh


def update_progress(
    progress: ProgressState, passed: bool, sim_time: float, num_gates: int
) -> ProgressState:
    if not passed:
        return progress
    nxt = (progress.next_gate_index + 1) % num_gates
    laps = progress.laps_completed
    lap_start = progress.lap_start_time
    lap_times = list(progress.lap_times)
    if nxt == 0:
        laps += 1
        lap_times.append(sim_time - progress.lap_start_time)
        lap_start = sim_time
    return ProgressState(
        next_gate_index=nxt,
        gates_passed_total=progress.gates_passed_total + 1,
        laps_completed=laps,
        lap_start_time=lap_start,
        lap_times=lap_times,
    )


def save_track(track: Track, path) -> None:
    with open(path, "w") as f:
        f.write(json.dumps({"name": track.name, "num_gates": track.num_gates}) + "\n")
        for g in track.gates:
            f.write(
                json.dumps(
                    {
                        "center": [float(v) for v in g.center],
                        "yaw": float(g.yaw),
                        "half_width": float(g.half_width),
                        "half_height": float(g.half_height),
                    }
                )
                + "\n"
            )


def load_track(path) -> Track:
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines:
        raise InvalidTrackSpec(f"empty track file: {path}")
    try:
        header = json.loads(lines[0])
        gates = []
        for ln in lines[1:]:
            rec = json.loads(ln)
            gates.append(
                Gate(
                    np.asarray(rec["center"], dtype=float),
                    float(rec["yaw"]),
                    float(rec["half_width"]),
                    float(rec["half_height"]),
                )
            )
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise InvalidTrackSpec(f"malformed track file {path}: {e}") from e
    return Track(tuple(gates), name=header.get("name", "custom"))
