"""Episodic tabular MDPs, deterministic policies and trajectory sampling."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .rng import RngStream

PROB_TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite-horizon MDP ``(S, A, R, P, mu0, H)`` with dense tables.

    ``transition[s, a, s']`` is ``P(s' | s, a)``, ``reward[s, a]`` lies in
    ``[0, 1]``. Arrays are copied and made read-only on construction; use
    :func:`validate_mdp` to check the probability and reward invariants.
    """

    transition: np.ndarray
    reward: np.ndarray
    start_dist: np.ndarray
    horizon: int
    name: str = "mdp"
    state_labels: tuple[str, ...] = ()
    action_labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "reward", _frozen(self.reward))
        object.__setattr__(self, "start_dist", _frozen(self.start_dist))
        object.__setattr__(self, "horizon", int(self.horizon))
        if self.transition.ndim != 3 or self.transition.shape[0] != self.transition.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {self.transition.shape}")
        S, A, _ = self.transition.shape
        if self.reward.shape != (S, A):
            raise ValueError(f"reward must have shape {(S, A)}, got {self.reward.shape}")
        if self.start_dist.shape != (S,):
            raise ValueError(f"start_dist must have shape {(S,)}, got {self.start_dist.shape}")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if not self.state_labels:
            object.__setattr__(self, "state_labels", tuple(f"s{i}" for i in range(S)))
        if not self.action_labels:
            object.__setattr__(self, "action_labels", tuple(f"a{i}" for i in range(A)))
        if len(self.state_labels) != S or len(self.action_labels) != A:
            raise ValueError("label counts do not match table shapes")

    @classmethod
    def from_arrays(cls, transition, reward, start_dist, horizon, normalize=False, **kw):
        """Build an MDP, optionally renormalizing transition rows and ``mu0``.

        Renormalization happens here only; nothing downstream rescales rows.
        """
        P = np.asarray(transition, dtype=float)
        mu = np.asarray(start_dist, dtype=float)
        if normalize:
            P = P / P.sum(axis=2, keepdims=True)
            mu = mu / mu.sum()
        return cls(P, reward, mu, horizon, **kw)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    def with_horizon(self, horizon: int) -> "TabularMdp":
        return replace(self, horizon=horizon)

    def with_start(self, start) -> "TabularMdp":
        """Copy with a new start distribution; an int means a point mass."""
        if isinstance(start, (int, np.integer)):
            mu = np.zeros(self.num_states)
            mu[int(start)] = 1.0
        else:
            mu = np.asarray(start, dtype=float)
        return replace(self, start_dist=mu)

    def is_deterministic(self) -> bool:
        return bool(np.all((self.transition == 0.0) | (self.transition == 1.0)))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "horizon": self.horizon,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
            "start_dist": self.start_dist.tolist(),
            "state_labels": list(self.state_labels),
            "action_labels": list(self.action_labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabularMdp":
        return cls(
            np.asarray(d["transition"], dtype=float),
            np.asarray(d["reward"], dtype=float),
            np.asarray(d["start_dist"], dtype=float),
            int(d["horizon"]),
            name=d.get("name", "mdp"),
            state_labels=tuple(d.get("state_labels", ())),
            action_labels=tuple(d.get("action_labels", ())),
        )


@dataclass(frozen=True, eq=False)
class DeterministicPolicy:
    """Deterministic policy stored as an action table.

    A 1-D table ``actions[s]`` is time-invariant (constituents); a 2-D table
    ``actions[h, s]`` is time-indexed (learned policies, selectors).
    """

    actions: np.ndarray
    name: str = "pi"

    def __post_init__(self):
        arr = _frozen(self.actions, dtype=np.int64)
        if arr.ndim not in (1, 2):
            raise ValueError("policy table must be 1-D (stationary) or 2-D (time-indexed)")
        object.__setattr__(self, "actions", arr)

    @property
    def stationary(self) -> bool:
        return self.actions.ndim == 1

    def action(self, h: int, s: int) -> int:
        if self.stationary:
            return int(self.actions[s])
        return int(self.actions[h, s])

    def table(self, horizon: int) -> np.ndarray:
        """The full ``(H, S)`` action table."""
        if self.stationary:
            return np.broadcast_to(self.actions, (horizon, self.actions.shape[0]))
        if self.actions.shape[0] < horizon:
            raise ValueError(f"policy {self.name!r} covers {self.actions.shape[0]} steps, need {horizon}")
        return self.actions[:horizon]

    def check_on(self, mdp: TabularMdp) -> None:
        tbl = self.table(mdp.horizon)
        if tbl.shape[1] != mdp.num_states:
            raise ValueError(f"policy {self.name!r} has {tbl.shape[1]} states, MDP has {mdp.num_states}")
        if tbl.min() < 0 or tbl.max() >= mdp.num_actions:
            raise ValueError(f"policy {self.name!r} uses an action outside [0, {mdp.num_actions})")


@dataclass(frozen=True)
class ConstituentSet:
    policies: tuple[DeterministicPolicy, ...]

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        if len(self.policies) < 1:
            raise ValueError("need at least one constituent policy")
        n = {p.actions.shape[-1] for p in self.policies}
        if len(n) != 1:
            raise ValueError("constituents disagree on the number of states")

    def __len__(self) -> int:
        return len(self.policies)

    def __getitem__(self, k: int) -> DeterministicPolicy:
        return self.policies[k]

    def __iter__(self):
        return iter(self.policies)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.policies]

    def action_matrix(self, horizon: int) -> np.ndarray:
        """``(K, H, S)`` array of constituent actions."""
        return np.stack([p.table(horizon) for p in self.policies])

    def select(self, indices: Sequence[int]) -> "ConstituentSet":
        return ConstituentSet(tuple(self.policies[i] for i in indices))


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    @property
    def steps(self) -> list[tuple[int, int, float]]:
        return [(int(s), int(a), float(r)) for s, a, r in zip(self.states, self.actions, self.rewards)]

    @property
    def total_return(self) -> float:
        return float(np.sum(self.rewards))

    def __len__(self) -> int:
        return len(self.states)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_mdp(mdp: TabularMdp) -> ValidationReport:
    """Check transition rows, reward range and ``mu0``; violations are listed, not raised."""
    report = ValidationReport()
    P, R = mdp.transition, mdp.reward
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            row = P[s, a]
            if np.any(row < 0) or not np.all(np.isfinite(row)):
                report.violations.append(f"transition row (s={s},a={a}) has negative or non-finite entries")
            total = row.sum()
            if abs(total - 1.0) > PROB_TOL:
                report.violations.append(f"transition row (s={s},a={a}) sums to {total:.12g}")
            r = R[s, a]
            if not (0.0 <= r <= 1.0):
                report.violations.append(f"reward out of [0,1] at (s={s},a={a}): {r:.12g}")
    mu = mdp.start_dist
    if np.any(mu < 0) or abs(mu.sum() - 1.0) > PROB_TOL:
        report.violations.append(f"start distribution invalid (sums to {mu.sum():.12g})")
    return report


def require_valid(mdp: TabularMdp) -> None:
    report = validate_mdp(mdp)
    if not report.ok:
        raise ValueError(f"invalid MDP {mdp.name!r}: " + "; ".join(report.violations))


def draw_categorical(gen: np.random.Generator, probs: np.ndarray, size=None) -> np.ndarray:
    """Inverse-CDF draws from one distribution (``probs`` 1-D) or per-row (2-D)."""
    cum = np.cumsum(probs, axis=-1)
    if probs.ndim == 1:
        u = gen.random(size)
        idx = np.searchsorted(cum, u * cum[-1], side="right")
        return np.minimum(idx, probs.shape[0] - 1)
    u = gen.random(probs.shape[0]) * cum[:, -1]
    idx = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def rollout_batch(mdp: TabularMdp, policy: DeterministicPolicy, states, start_time: int,
                  gen: np.random.Generator, stop_time: int | None = None):
    """Roll out ``policy`` from many states at time ``start_time`` in lock-step.

    Returns ``(visited, rewards)`` with shape ``(n, T)`` each, where
    ``T = stop_time - start_time``. ``rewards.sum(1)`` is the partial return.
    """
    H = mdp.horizon if stop_time is None else stop_time
    tbl = policy.table(mdp.horizon)
    s = np.asarray(states, dtype=np.int64).copy()
    T = H - start_time
    visited = np.empty((s.shape[0], max(T, 0)), dtype=np.int64)
    rewards = np.empty((s.shape[0], max(T, 0)))
    for i, h in enumerate(range(start_time, H)):
        a = tbl[h, s]
        visited[:, i] = s
        rewards[:, i] = mdp.reward[s, a]
        s = draw_categorical(gen, mdp.transition[s, a])
    return visited, rewards


def sample_trajectory(mdp: TabularMdp, policy: DeterministicPolicy, rng: RngStream) -> Trajectory:
    """Sample ``s0 ~ mu0`` and execute ``policy`` for ``H`` steps."""
    require_valid(mdp)
    policy.check_on(mdp)
    gen = rng.generator()
    s = int(draw_categorical(gen, mdp.start_dist))
    tbl = policy.table(mdp.horizon)
    states, actions, rewards = [], [], []
    for h in range(mdp.horizon):
        a = int(tbl[h, s])
        states.append(s)
        actions.append(a)
        rewards.append(float(mdp.reward[s, a]))
        s = int(draw_categorical(gen, mdp.transition[s, a]))
    return Trajectory(np.array(states), np.array(actions), np.array(rewards))


def state_occupancy(mdp: TabularMdp, policy: DeterministicPolicy, start_dist=None, steps=None) -> np.ndarray:
    """Exact marginals ``Pr[s_h = s]`` for ``h = 0..steps`` by forward propagation.

    Returns an array of shape ``(steps + 1, S)``; ``steps`` defaults to ``H - 1``.
    """
    steps = mdp.horizon - 1 if steps is None else steps
    mu = mdp.start_dist if start_dist is None else np.asarray(start_dist, dtype=float)
    tbl = policy.table(max(mdp.horizon, steps))
    S = mdp.num_states
    out = np.empty((steps + 1, S))
    out[0] = mu
    for h in range(steps):
        P_pi = mdp.transition[np.arange(S), tbl[h]]
        out[h + 1] = out[h] @ P_pi
    return out


def trajectory_probability(mdp: TabularMdp, policy: DeterministicPolicy, states: Sequence[int]) -> float:
    """``mu0(s_0) * prod_h P(s_{h+1} | s_h, pi_h(s_h))`` for a state sequence."""
    p = float(mdp.start_dist[states[0]])
    for h in range(len(states) - 1):
        a = policy.action(h, states[h])
        p *= float(mdp.transition[states[h], a, states[h + 1]])
    return p
