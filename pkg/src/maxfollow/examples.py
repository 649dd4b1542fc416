"""Constructors for the small example MDPs and seeded random instances.

Figure-style MDPs use deterministic dynamics. Any (state, action) pair that is
not drawn as an edge is a self-loop with reward 0.
"""
from __future__ import annotations

import numpy as np

from .mdp import ConstituentSet, DeterministicPolicy, TabularMdp
from .rng import RngStream

EXAMPLES = ("chain3", "detour", "trap", "selfloop-linear", "random-gridworld")


def _edges_to_tables(S: int, A: int, edges: dict[tuple[int, int], tuple[int, float]]):
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    for s in range(S):
        for a in range(A):
            nxt, r = edges.get((s, a), (s, 0.0))
            P[s, a, nxt] = 1.0
            R[s, a] = r
    return P, R


def _point(S: int, s: int) -> np.ndarray:
    mu = np.zeros(S)
    mu[s] = 1.0
    return mu


def _stationary(actions, name) -> DeterministicPolicy:
    return DeterministicPolicy(np.asarray(actions, dtype=np.int64), name=name)


def chain3(H: int = 10, start: int = 0):
    RIGHT, LEFT = 0, 1
    edges = {
        (0, RIGHT): (1, 1.0),
        (1, LEFT): (0, 1.0),
        (1, RIGHT): (2, 1.0),
        (2, LEFT): (1, 1.0),
    }
    P, R = _edges_to_tables(3, 2, edges)
    mdp = TabularMdp(P, R, _point(3, start), H, name="chain3", action_labels=("right", "left"))
    pis = ConstituentSet((_stationary([RIGHT] * 3, "pi_right"), _stationary([LEFT] * 3, "pi_left")))
    return mdp, pis


def detour(eps_r: float = 0.25, H: int = 10, start: int = 2):
    RIGHT, LEFT, UP = 0, 1, 2
    edges = {
        (0, RIGHT): (1, 0.0),
        (1, LEFT): (0, 0.0),
        (1, UP): (4, 0.0),
        (2, LEFT): (1, 0.0),
        (2, RIGHT): (3, eps_r),
        (2, UP): (2, 0.0),
        (4, UP): (4, 1.0),
    }
    P, R = _edges_to_tables(5, 3, edges)
    mdp = TabularMdp(P, R, _point(5, start), H, name="detour", action_labels=("right", "left", "up"))
    pis = ConstituentSet(tuple(_stationary([a] * 5, f"pi_{lbl}") for a, lbl in
                               ((RIGHT, "right"), (LEFT, "left"), (UP, "up"))))
    return mdp, pis


def trap(eps_r: float = 0.25, H: int = 10, start: int = 0):
    # action 0 is the red policy (pi^0), action 1 the blue one (pi^1)
    RED, BLUE = 0, 1
    edges = {
        (0, RED): (1, 0.0),
        (0, BLUE): (2, eps_r),
        (2, RED): (3, eps_r),
        (2, BLUE): (5, 0.0),
        (3, BLUE): (3, 1.0),
        (3, RED): (4, 0.0),
    }
    P, R = _edges_to_tables(6, 2, edges)
    mdp = TabularMdp(P, R, _point(6, start), H, name="trap", action_labels=("right", "left"))
    pis = ConstituentSet((_stationary([RED] * 6, "pi_red"), _stationary([BLUE] * 6, "pi_blue")))
    return mdp, pis


def grid_coordinates(num_states: int) -> np.ndarray:
    """State coordinates of the self-loop line MDP: a uniform grid on [0, 1]."""
    return np.linspace(0.0, 1.0, num_states)


def selfloop_linear(grid: int = 11, H: int = 10, start=None):
    s = grid_coordinates(grid)
    P = np.zeros((grid, 2, grid))
    idx = np.arange(grid)
    P[idx, :, idx] = 1.0
    R = np.stack([1.0 - s, s], axis=1)
    mu = np.full(grid, 1.0 / grid) if start is None else _point(grid, start)
    labels = tuple(f"{x:.6g}" for x in s)
    mdp = TabularMdp(P, R, mu, H, name="selfloop-linear", state_labels=labels, action_labels=("-1", "+1"))
    pis = ConstituentSet((_stationary([0] * grid, "pi_minus"), _stationary([1] * grid, "pi_plus")))
    return mdp, pis


_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))


def random_gridworld(seed: int = 0, grid: int = 4, K: int = 3, H: int = 10, slip: float = 0.0,
                     reward_density: float = 0.3, start="uniform"):
    """Seeded ``grid x grid`` world with 4 moves and K random stationary constituents.

    With ``slip > 0`` the intended move is replaced by a uniformly random one
    with that probability, giving stochastic dynamics.
    """
    gen = RngStream(seed, (0x6D, grid, K)).generator()
    S, A = grid * grid, len(_MOVES)
    P = np.zeros((S, A, S))
    for s in range(S):
        r, c = divmod(s, grid)
        targets = []
        for dr, dc in _MOVES:
            nr, nc = min(max(r + dr, 0), grid - 1), min(max(c + dc, 0), grid - 1)
            targets.append(nr * grid + nc)
        for a in range(A):
            P[s, a, targets[a]] += 1.0 - slip
            for t in targets:
                P[s, a, t] += slip / A
    R = gen.random((S, A)) * (gen.random((S, A)) < reward_density)
    if start == "uniform":
        mu = np.full(S, 1.0 / S)
    elif start == "corner":
        mu = _point(S, 0)
    else:
        mu = _point(S, int(start))
    mdp = TabularMdp(P, R, mu, H, name=f"random-gridworld-{seed}",
                     action_labels=("up", "down", "left", "right"))
    pis = ConstituentSet(tuple(_stationary(gen.integers(0, A, S), f"pi_{k}") for k in range(K)))
    return mdp, pis


def random_mdp(seed: int, S: int = 4, A: int = 2, K: int = 2, H: int = 5, branching: int = 2,
               deterministic: bool = False):
    """Seeded generic MDP with sparse random transitions and uniform rewards."""
    gen = RngStream(seed, (0x52, S, A, K, H)).generator()
    P = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            if deterministic:
                P[s, a, gen.integers(S)] = 1.0
            else:
                succ = gen.choice(S, size=min(branching, S), replace=False)
                w = gen.random(len(succ)) + 0.05
                P[s, a, succ] = w / w.sum()
    R = gen.random((S, A))
    mu = gen.random(S) + 0.05
    mu /= mu.sum()
    mdp = TabularMdp(P, R, mu, H, name=f"random-{seed}")
    pis = ConstituentSet(tuple(_stationary(gen.integers(0, A, S), f"pi_{k}") for k in range(K)))
    return mdp, pis


def build_example(name: str, eps_r: float = 0.25, H: int = 10, grid: int = 11, start=None,
                  seed: int = 0, K: int = 3, slip: float = 0.0):
    """Return ``(mdp, constituents)`` for a named example.

    ``start`` overrides the default start state (an index). ``grid`` is the
    discretization size for ``selfloop-linear`` and the side length for
    ``random-gridworld``.
    """
    if H < 1:
        raise ValueError("H must be positive")
    if name in ("detour", "trap") and not (0.0 < eps_r < 1.0):
        raise ValueError(f"eps_r must lie in (0, 1), got {eps_r}")
    if name == "chain3":
        return chain3(H, 0 if start is None else start)
    if name == "detour":
        return detour(eps_r, H, 2 if start is None else start)
    if name == "trap":
        return trap(eps_r, H, 0 if start is None else start)
    if name == "selfloop-linear":
        if grid < 2:
            raise ValueError("selfloop-linear needs grid >= 2")
        return selfloop_linear(grid, H, start)
    if name == "random-gridworld":
        if grid < 2:
            raise ValueError("random-gridworld needs grid >= 2")
        return random_gridworld(seed, grid, K, H, slip, start="uniform" if start is None else start)
    raise ValueError(f"unknown example {name!r}; expected one of {EXAMPLES}")
