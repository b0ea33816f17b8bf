"""Reward component tests: exact endpoint values, ranges, sign conventions,
and the overtake/collision event semantics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cruise.curriculum import default_schedule
from cruise.rewards import (
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

WEIGHTS = RewardWeights()
NORM = NormalizationConfig(d_max=12.0, v_max=12.0)
STAGES = default_schedule()


# -- proximity -------------------------------------------------------------


def test_proximity_exact_endpoints():
    assert abs(reward_proximity(0.0, NORM, WEIGHTS) - 1.0) <= 1e-12
    assert abs(reward_proximity(NORM.d_max, NORM, WEIGHTS) + 1.0) <= 1e-12
    # saturates beyond d_max
    assert abs(reward_proximity(100.0, NORM, WEIGHTS) + 1.0) <= 1e-12


def test_proximity_closed_form_midpoint():
    """Independent evaluation of the exponential shaping at d = d_max/2."""
    a = WEIGHTS.prox_shape_a
    expected = 2.0 * (math.exp(-a * 0.5) - math.exp(-a)) / (1.0 - math.exp(-a)) - 1.0
    assert abs(reward_proximity(6.0, NORM, WEIGHTS) - expected) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 50.0))
def test_proximity_bounded_and_monotone(d):
    r = reward_proximity(d, NORM, WEIGHTS)
    assert -1.0 <= r <= 1.0
    assert reward_proximity(d + 0.1, NORM, WEIGHTS) <= r + 1e-15


# -- progress ---------------------------------------------------------------


def test_progress_is_scaled_distance_change():
    assert reward_progress(2.0, 1.5, WEIGHTS) == pytest.approx(
        WEIGHTS.prog_scale_beta * 0.5, abs=1e-15
    )
    assert reward_progress(1.0, 1.4, WEIGHTS) == pytest.approx(
        -WEIGHTS.prog_scale_beta * 0.4, abs=1e-15
    )
    assert reward_progress(3.0, 3.0, WEIGHTS) == 0.0


# -- alignment ----------------------------------------------------------------


def test_alignment_parallel_and_antiparallel():
    u = np.array([1.0, 0.0, 0.0])
    assert abs(reward_alignment(np.array([3.0, 0.0, 0.0]), u, WEIGHTS) - 0.0) <= 1e-12
    assert abs(reward_alignment(np.array([-3.0, 0.0, 0.0]), u, WEIGHTS) - 2.0) <= 1e-12
    assert abs(reward_alignment(np.array([0.0, 3.0, 0.0]), u, WEIGHTS) - 1.0) <= 1e-12


def test_alignment_zero_below_speed_floor():
    u = np.array([1.0, 0.0, 0.0])
    slow = np.array([-WEIGHTS.align_eps / 2, 0.0, 0.0])
    assert reward_alignment(slow, u, WEIGHTS) == 0.0


@settings(max_examples=200, deadline=None)
@given(
    st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5)),
    st.floats(0, 2 * math.pi),
)
def test_alignment_in_range(v, ang):
    u = np.array([math.cos(ang), math.sin(ang), 0.0])
    r = reward_alignment(np.array(v), u, WEIGHTS)
    assert 0.0 - 1e-12 <= r <= 2.0 + 1e-12


# -- speed --------------------------------------------------------------------


def test_speed_peaks_at_stage_target():
    for stage in STAGES:
        assert reward_speed(stage.v_min, stage) == 0.0
        assert reward_speed(stage.v_min - 0.5, stage) == pytest.approx(-0.5, abs=1e-12)
        assert reward_speed(stage.v_min + 0.5, stage) == pytest.approx(-0.5, abs=1e-12)
        assert reward_speed(0.0, stage) == pytest.approx(-stage.v_min, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 20.0), st.sampled_from(range(5)))
def test_speed_nonpositive(v, k):
    assert reward_speed(v, STAGES[k]) <= 0.0


# -- collision ------------------------------------------------------------------


def test_collision_strict_boundary():
    r = WEIGHTS.collision_radius
    at_radius = np.array([[0.0, 0.0, 0.0], [r, 0.0, 0.0]])
    inside = np.array([[0.0, 0.0, 0.0], [r - 1e-12, 0.0, 0.0]])
    assert reward_collision(0, at_radius, WEIGHTS) == 0.0
    assert reward_collision(0, inside, WEIGHTS) == 1.0


def test_collision_ignores_dead_opponents():
    r = WEIGHTS.collision_radius
    pos = np.array([[0.0, 0.0, 0.0], [r / 2, 0.0, 0.0]])
    assert reward_collision(0, pos, WEIGHTS, live=np.array([True, False])) == 0.0
    assert reward_collision(0, pos, WEIGHTS, live=np.array([True, True])) == 1.0


# -- overtake ---------------------------------------------------------------


def _overtake(p_prev, p_now, v_prev, v_now, stage=STAGES[2], live=None):
    return reward_overtake(
        0,
        np.asarray(p_now, dtype=float),
        np.asarray(p_prev, dtype=float),
        np.asarray(v_now, dtype=float),
        np.asarray(v_prev, dtype=float),
        WEIGHTS,
        stage,
        live=live,
    )


def test_overtake_fires_on_negative_to_positive_flip():
    # the projection of (x_j - x_i) onto v-hat_i flips from negative to
    # positive between consecutive steps
    v = [[2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    p_prev = [[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]  # proj_prev = -1
    p_now = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]  # proj_now = +1
    stage = STAGES[2]
    expected = WEIGHTS.overtake_bonus * stage.overtake_weight
    assert _overtake(p_prev, p_now, v, v, stage) == pytest.approx(expected, abs=1e-12)


def test_overtake_does_not_fire_on_positive_to_negative():
    v = [[2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    p_prev = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
    p_now = [[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]
    assert _overtake(p_prev, p_now, v, v) == 0.0


def test_overtake_zero_exactly_on_boundary():
    """A projection that lands exactly on zero is not a flip (strict signs)."""
    v = [[2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    p_prev = [[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]
    p_now = [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    assert _overtake(p_prev, p_now, v, v) == 0.0


def test_overtake_requires_speed_floor():
    slow = [[WEIGHTS.align_eps / 2, 0.0, 0.0], [0.0, 0.0, 0.0]]
    fast = [[2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    p_prev = [[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]
    p_now = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
    assert _overtake(p_prev, p_now, slow, fast) == 0.0
    assert _overtake(p_prev, p_now, fast, slow) == 0.0


def test_overtake_skips_dead_opponents():
    v = [[2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    p_prev = [[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]
    p_now = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
    assert _overtake(p_prev, p_now, v, v, live=np.array([True, False])) == 0.0


def test_overtake_counts_each_opponent():
    stage = STAGES[4]
    v = [[2.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    p_prev = [[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [-0.5, 0.0, 0.0]]
    p_now = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.0, 0.0]]
    expected = 2 * WEIGHTS.overtake_bonus * stage.overtake_weight
    assert _overtake(p_prev, p_now, v, v, stage) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_overtake_matches_sign_flip_oracle(data):
    """Randomized check against a direct re-computation of the projections."""
    f = st.floats(-4.0, 4.0)
    n = data.draw(st.integers(2, 4))
    draw_mat = lambda: np.array(
        [[data.draw(f) for _ in range(3)] for _ in range(n)]
    )
    p_prev, p_now, v_prev, v_now = draw_mat(), draw_mat(), draw_mat(), draw_mat()
    stage = STAGES[data.draw(st.sampled_from(range(5)))]
    got = reward_overtake(0, p_now, p_prev, v_now, v_prev, WEIGHTS, stage)

    expected = 0.0
    sp, sn = np.linalg.norm(v_prev[0]), np.linalg.norm(v_now[0])
    if sp > WEIGHTS.align_eps and sn > WEIGHTS.align_eps:
        for j in range(1, n):
            a = np.dot(p_prev[j] - p_prev[0], v_prev[0] / sp)
            b = np.dot(p_now[j] - p_now[0], v_now[0] / sn)
            if a < 0.0 and b > 0.0:
                expected += WEIGHTS.overtake_bonus * stage.overtake_weight
    assert got == pytest.approx(expected, abs=1e-12)


# -- composition ---------------------------------------------------------------


def test_total_reward_composition():
    comp = RewardComponents(
        prox=0.5, prog=1.2, align=0.3, speed=-2.0, over=0.04, coll=1.0, extras=7.0
    )
    stage_on = STAGES[2]  # collisions enabled, weight 0.5
    expected = (
        WEIGHTS.w_prox * 0.5
        + WEIGHTS.w_prog * 1.2
        - WEIGHTS.w_align * 0.3
        + WEIGHTS.w_speed * -2.0
        + 0.04
        - stage_on.collision_weight * 1.0
        + 7.0
    )
    assert total_reward(comp, WEIGHTS, stage_on) == pytest.approx(expected, abs=1e-12)


def test_total_reward_collision_gated_by_stage():
    comp = RewardComponents(coll=1.0)
    stage_off = STAGES[0]  # collisions disabled
    assert total_reward(comp, WEIGHTS, stage_off) == 0.0
    stage_on = STAGES[4]
    assert total_reward(comp, WEIGHTS, stage_on) == pytest.approx(
        -stage_on.collision_weight, abs=1e-12
    )


def test_weight_validation():
    with pytest.raises(ValueError):
        RewardWeights(w_prox=-0.1)
    with pytest.raises(ValueError):
        RewardWeights(prog_scale_beta=0.0)
    with pytest.raises(ValueError):
        NormalizationConfig(d_max=0.0)
