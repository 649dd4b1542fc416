import numpy as np
import pytest

from maxfollow.examples import random_mdp
from maxfollow.mdp import DeterministicPolicy, TabularMdp


def enumerate_paths(mdp, policy):
    """Yield ``(prob, total_reward)`` for every length-H state path (brute force)."""
    table = policy.table(mdp.horizon)

    def walk(h, s, prob, ret):
        if prob == 0.0:
            return
        if h == mdp.horizon:
            yield prob, ret
            return
        a = table[h, s]
        for s2 in range(mdp.num_states):
            yield from walk(h + 1, s2, prob * mdp.transition[s, a, s2], ret + mdp.reward[s, a])

    for s0 in range(mdp.num_states):
        yield from walk(0, s0, mdp.start_dist[s0], 0.0)


def brute_force_return(mdp, policy):
    return sum(p * r for p, r in enumerate_paths(mdp, policy))


@pytest.fixture
def two_state():
    # s0 --a0--> s1 (r=1); s1 --a0--> s1 (r=0.5); a1 stays put with r=0
    P = np.zeros((2, 2, 2))
    P[0, 0, 1] = P[1, 0, 1] = 1.0
    P[0, 1, 0] = P[1, 1, 1] = 1.0
    R = np.array([[1.0, 0.0], [0.5, 0.0]])
    return TabularMdp(P, R, np.array([1.0, 0.0]), 4, name="two-state")


@pytest.fixture
def small_random():
    return random_mdp(3, S=4, A=3, K=3, H=4)
