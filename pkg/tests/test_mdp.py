import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxfollow.examples import EXAMPLES, build_example, random_gridworld, random_mdp
from maxfollow.mdp import (
    ConstituentSet,
    DeterministicPolicy,
    TabularMdp,
    draw_categorical,
    rollout_batch,
    sample_trajectory,
    state_occupancy,
    trajectory_probability,
    validate_mdp,
)
from maxfollow.rng import RngStream

from conftest import enumerate_paths


def test_validation_flags_bad_rows_and_rewards():
    P = np.zeros((2, 2, 2))
    P[:, :, 0] = 1.0
    P[0, 1] = [0.5, 0.4]
    R = np.array([[0.0, 1.5], [0.2, 0.3]])
    report = validate_mdp(TabularMdp(P, R, np.array([1.0, 0.0]), 3))
    assert not report.ok
    text = "\n".join(report.violations)
    assert "transition row (s=0,a=1) sums to 0.9" in text
    assert "reward out of [0,1] at (s=0,a=1)" in text


def test_from_arrays_normalizes_rows():
    P = np.ones((3, 2, 3)) * 2.0
    mdp = TabularMdp.from_arrays(P, np.zeros((3, 2)), [1, 1, 2], 2, normalize=True)
    assert validate_mdp(mdp).ok
    np.testing.assert_allclose(mdp.start_dist, [0.25, 0.25, 0.5])


def test_shape_errors():
    with pytest.raises(ValueError):
        TabularMdp(np.ones((2, 2, 3)), np.zeros((2, 2)), np.ones(2) / 2, 1)
    with pytest.raises(ValueError):
        TabularMdp(np.ones((2, 2, 2)) / 2, np.zeros((2, 3)), np.ones(2) / 2, 1)
    with pytest.raises(ValueError):
        TabularMdp(np.ones((2, 2, 2)) / 2, np.zeros((2, 2)), np.ones(2) / 2, 0)


def test_arrays_are_read_only(two_state):
    with pytest.raises(ValueError):
        two_state.reward[0, 0] = 0.3


def test_dict_round_trip(two_state):
    back = TabularMdp.from_dict(two_state.to_dict())
    np.testing.assert_array_equal(back.transition, two_state.transition)
    np.testing.assert_array_equal(back.reward, two_state.reward)
    assert back.horizon == two_state.horizon and back.name == two_state.name


@pytest.mark.parametrize("name", EXAMPLES)
def test_examples_are_valid(name):
    mdp, pis = build_example(name)
    assert validate_mdp(mdp).ok
    for p in pis:
        p.check_on(mdp)


@pytest.mark.parametrize("name", ["chain3", "detour", "trap", "selfloop-linear"])
def test_figure_examples_are_deterministic(name):
    mdp, _ = build_example(name)
    assert mdp.is_deterministic()


def test_unknown_example():
    with pytest.raises(ValueError, match="unknown example"):
        build_example("nope")


def test_policy_table_shapes():
    stat = DeterministicPolicy([1, 0, 1])
    assert stat.table(4).shape == (4, 3)
    assert stat.action(3, 0) == 1
    timed = DeterministicPolicy([[0, 0], [1, 1]])
    assert timed.action(1, 0) == 1
    with pytest.raises(ValueError):
        timed.table(3)


def test_constituent_set_selection():
    pis = ConstituentSet((DeterministicPolicy([0, 1], "a"), DeterministicPolicy([1, 1], "b")))
    assert pis.names == ["a", "b"]
    assert pis.action_matrix(3).shape == (2, 3, 2)
    assert pis.select([1]).names == ["b"]


def test_draw_categorical_frequencies():
    gen = RngStream(5).generator()
    p = np.array([0.1, 0.6, 0.3])
    draws = draw_categorical(gen, p, size=200_000)
    freq = np.bincount(draws, minlength=3) / draws.size
    np.testing.assert_allclose(freq, p, atol=5e-3)


def test_draw_categorical_rows():
    gen = RngStream(1).generator()
    rows = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(draw_categorical(gen, rows), [0, 1])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(2, 3), st.integers(1, 5))
def test_occupancy_is_distribution(seed, S, A, H):
    mdp, pis = random_mdp(seed, S=S, A=A, K=1, H=H)
    occ = state_occupancy(mdp, pis[0])
    assert occ.shape == (H, S)
    assert state_occupancy(mdp, pis[0], steps=H).shape == (H + 1, S)
    np.testing.assert_allclose(occ.sum(axis=1), 1.0, atol=1e-12)
    assert (occ >= 0).all()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_path_probabilities_sum_to_one(seed):
    mdp, pis = random_mdp(seed, S=3, A=2, K=1, H=3)
    total = sum(p for p, _ in enumerate_paths(mdp, pis[0]))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_trajectory_probability_matches_enumeration(small_random):
    mdp, pis = small_random
    table = pis[0].table(mdp.horizon)
    states = [0, 1, 2, 3, 0]
    expect = mdp.start_dist[0]
    for h in range(mdp.horizon):
        expect *= mdp.transition[states[h], table[h, states[h]], states[h + 1]]
    assert trajectory_probability(mdp, pis[0], states) == pytest.approx(expect)


def test_sample_trajectory_is_reproducible():
    mdp, pis = random_gridworld(4, grid=3, K=2, H=6, slip=0.2)
    a = sample_trajectory(mdp, pis[0], RngStream(9, (1,)))
    b = sample_trajectory(mdp, pis[0], RngStream(9, (1,)))
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.rewards, b.rewards)
    assert len(a) == 6
    assert len(a.steps) == 6
    assert a.total_return == pytest.approx(a.rewards.sum())
    others = [sample_trajectory(mdp, pis[0], RngStream(9, (i,))).states for i in range(2, 12)]
    assert any(not np.array_equal(a.states, o) for o in others)


def test_rollout_batch_follows_deterministic_chain():
    mdp, pis = build_example("chain3", H=5)
    visited, rewards = rollout_batch(mdp, pis[0], np.array([0, 0]), 0, RngStream(0).generator())
    np.testing.assert_array_equal(visited[0], [0, 1, 2, 2, 2])
    np.testing.assert_array_equal(rewards.sum(axis=1), [2.0, 2.0])
