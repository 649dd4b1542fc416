"""MaxIteration: learn a policy that competes with approximate max-following.

For ``h = 0 .. H-1`` the algorithm queries a value oracle for every
constituent on the state distribution ``mu_h`` reached by the greedy policy
built so far, then extends the greedy policy by one step:
``pi_hat_h(s) = pi^{argmax_k V_hat_h^k(s)}(s)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .mdp import ConstituentSet, DeterministicPolicy, TabularMdp, draw_categorical, require_valid, rollout_batch
from .oracle import (
    Oracle,
    OracleSpec,
    StateSampler,
    ValueEstimateBank,
    feature_matrix,
)
from .rng import RngStream
from .value import ValueTable, constituent_values


@dataclass(frozen=True, eq=False)
class LearnedPolicy:
    """Greedy composition: selected constituent ``k_star[h, s]`` and its action."""

    k_star: np.ndarray
    actions: np.ndarray
    bank: ValueEstimateBank | None = None

    @property
    def policy(self) -> DeterministicPolicy:
        return DeterministicPolicy(self.actions, name="max_iteration")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "s", "k_star", "action"])
            H, S = self.k_star.shape
            for h in range(H):
                for s in range(S):
                    w.writerow([h, s, int(self.k_star[h, s]), int(self.actions[h, s])])


def greedy_indices(estimates: np.ndarray) -> np.ndarray:
    """``argmax_k`` over axis 0 with ties to the lowest index."""
    return np.argmax(estimates, axis=0)


def compose_greedy(estimates: np.ndarray, constituents: ConstituentSet, bank=None) -> LearnedPolicy:
    """Greedy policy for a full ``(K, H, S)`` estimate table."""
    K, H, S = estimates.shape
    k_star = np.stack([greedy_indices(estimates[:, h]) for h in range(H)])
    acts = constituents.action_matrix(H)
    actions = acts[k_star, np.arange(H)[:, None], np.arange(S)[None, :]]
    return LearnedPolicy(k_star, actions, bank)


def _greedy_actions(bank: ValueEstimateBank, constituents: ConstituentSet, h: int) -> np.ndarray:
    k = greedy_indices(bank.layer(h))
    return constituents.action_matrix(h + 1)[k, h, np.arange(bank.num_states)]


def mu_h_sampler(mdp: TabularMdp, constituents: ConstituentSet, bank: ValueEstimateBank,
                 h: int) -> StateSampler:
    """Sampler for ``s_h`` when the bank's greedy policy runs for ``h`` steps from ``mu0``."""
    rows = []
    for i in range(h):
        missing = [k for k in range(bank.num_policies) if not bank.populated[k, i]]
        if missing:
            raise ValueError(f"bank slice (k={missing[0]}, h={i}) is missing")
        rows.append(_greedy_actions(bank, constituents, i))
    table = np.array(rows, dtype=np.int64).reshape(h, mdp.num_states)
    return StateSampler.from_policy(mdp, table, h)


@dataclass(frozen=True)
class EpsilonParams:
    epsilon: float
    alpha: float
    beta: float
    c_alpha: float = 1.0
    c_beta: float = 1.0


def epsilon_to_params(epsilon: float, K: int, H: int, c_alpha: float = 1.0,
                      c_beta: float = 1.0) -> EpsilonParams:
    """``alpha = c_alpha eps^3 / (K H^4)`` and ``beta = c_beta eps / H``."""
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    if K < 1 or H < 1 or c_alpha <= 0 or c_beta <= 0:
        raise ValueError("K, H, c_alpha and c_beta must be positive")
    return EpsilonParams(epsilon, c_alpha * epsilon**3 / (K * H**4), c_beta * epsilon / H, c_alpha, c_beta)


def markov_bound(params: EpsilonParams, H: int) -> float:
    """``4 alpha H^2 / eps^2``: per-constituent bound on ``Pr[|V_hat - V| >= eps / 2H]``."""
    return 4 * params.alpha * H**2 / params.epsilon**2


@dataclass
class BadSetDiagnostics:
    """Mass of the bad sets under the learned policy's state marginals.

    ``per_constituent[h][k]`` is the ``mu_h`` mass where ``|V_hat_h^k - V_h^k|``
    reaches ``threshold = eps / 2H``; ``per_step[h]`` is the mass of the union
    over ``k``; ``trajectory`` is the exact probability a trajectory visits
    any bad state.
    """

    threshold: float
    markov_bound: float
    per_step: list
    per_constituent: list
    trajectory: float
    union_bound: float = field(init=False)

    def __post_init__(self):
        self.union_bound = float(sum(self.per_step))

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "markov_bound": self.markov_bound,
            "per_step": list(self.per_step),
            "per_constituent": [list(x) for x in self.per_constituent],
            "trajectory": self.trajectory,
            "union_bound": self.union_bound,
        }


def bad_set_diagnostics(mdp: TabularMdp, constituents: ConstituentSet, bank: ValueEstimateBank,
                        truth: ValueTable, params: EpsilonParams) -> BadSetDiagnostics:
    H, S = mdp.horizon, mdp.num_states
    thr = params.epsilon / (2 * H)
    err = np.abs(bank.estimates - truth.values)  # (K, H, S)
    bad_k = err >= thr
    bad = bad_k.any(axis=0)  # (H, S)
    learned = compose_greedy(bank.estimates, constituents)
    idx = np.arange(S)
    mu = mdp.start_dist.copy()
    clean = mdp.start_dist.copy()  # sub-distribution of trajectories not yet bad
    per_step, per_k = [], []
    for h in range(H):
        per_step.append(float(mu[bad[h]].sum()))
        per_k.append([float(mu[bad_k[k, h]].sum()) for k in range(len(constituents))])
        clean = np.where(bad[h], 0.0, clean)
        P_h = mdp.transition[idx, learned.actions[h]]
        mu = mu @ P_h
        clean = clean @ P_h
    return BadSetDiagnostics(thr, markov_bound(params, H), per_step, per_k, float(1.0 - clean.sum()))


@dataclass
class MaxIterationResult:
    policy: LearnedPolicy
    bank: ValueEstimateBank
    diagnostics: BadSetDiagnostics
    oracle_calls: int

    def __iter__(self):
        return iter((self.policy, self.bank, self.diagnostics))


def max_iteration(mdp: TabularMdp, constituents: ConstituentSet, oracle_spec: OracleSpec,
                  params: EpsilonParams, rng: RngStream, truth: ValueTable | None = None,
                  oracle=None) -> MaxIterationResult:
    """Run MaxIteration with exactly ``H * K`` oracle queries.

    ``truth`` is used to back simulated oracles and to compute diagnostics;
    the greedy construction itself only sees oracle outputs. A custom
    ``oracle`` (anything with ``query(k, h, sampler, alpha)``) may replace the
    one built from ``oracle_spec``.
    """
    require_valid(mdp)
    truth = constituent_values(mdp, constituents) if truth is None else truth
    oracle = Oracle(oracle_spec, mdp, constituents, truth, rng) if oracle is None else oracle
    K, H, S = len(constituents), mdp.horizon, mdp.num_states
    bank = ValueEstimateBank(K, H, S)
    calls = 0
    for h in range(H):
        sampler = mu_h_sampler(mdp, constituents, bank, h)
        for k in range(K):
            try:
                est, prov = oracle.query(k, h, sampler, params.alpha)
            except Exception as exc:
                raise RuntimeError(f"oracle failed at (k={k}, h={h}): {exc}") from exc
            calls += 1
            bank.set_slice(k, h, est, prov)
    learned = compose_greedy(bank.estimates, constituents, bank)
    diag = bad_set_diagnostics(mdp, constituents, bank, truth, params)
    return MaxIterationResult(learned, bank, diag, calls)


def switch_steps(horizon: int, rounds: int) -> list[int]:
    """Switch step ``floor(H r / R)`` for rounds ``r = 0 .. R-1``."""
    return [horizon * r // rounds for r in range(rounds)]


class _ReturnData:
    """Per-(k, h) running sums of returns-to-go for least-squares refits."""

    def __init__(self, K, H, phi):
        d = phi.shape[1]
        self.phi = phi
        self.gram = np.zeros((K, H, d, d))
        self.rhs = np.zeros((K, H, d))

    def add(self, k, h, states, returns):
        X = self.phi[states]
        self.gram[k, h] += X.T @ X
        self.rhs[k, h] += X.T @ returns

    def fit(self) -> np.ndarray:
        K, H, d, _ = self.gram.shape
        out = np.zeros((K, H, self.phi.shape[0]))
        for k in range(K):
            for h in range(H):
                G = self.gram[k, h]
                if np.linalg.matrix_rank(G) < d:
                    G = G + 1e-8 * np.eye(d)
                out[k, h] = self.phi @ np.linalg.solve(G, self.rhs[k, h])
        return out


def _record(data, k, start, visited, rewards):
    togo = np.cumsum(rewards[:, ::-1], axis=1)[:, ::-1]
    for j in range(visited.shape[1]):
        data.add(k, start + j, visited[:, j], togo[:, j])


def heuristic_max_iteration(mdp: TabularMdp, constituents: ConstituentSet, rounds: int,
                            episodes_per_round: int, features: str, rng: RngStream,
                            warmup_episodes: int | None = None,
                            exhaustive_warmup: bool = False) -> LearnedPolicy:
    """Round-based variant: warm-up fits, then switch-point rollouts per round.

    Warm-up runs every constituent from ``mu0`` (or, with
    ``exhaustive_warmup``, from every state at every time) and fits
    per-(k, h) regressions of returns-to-go. In round ``r`` each constituent
    ``k`` gets episodes that follow the current greedy policy up to the switch
    step and ``pi^k`` afterwards; the returns-to-go after the switch are added
    to ``k``'s data and all fits are refreshed at the end of the round.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    require_valid(mdp)
    K, H, S = len(constituents), mdp.horizon, mdp.num_states
    phi = feature_matrix(features, mdp)
    data = _ReturnData(K, H, phi)
    warm = episodes_per_round if warmup_episodes is None else warmup_episodes
    gen = rng.child(0).generator()
    for k in range(K):
        if exhaustive_warmup:
            for h in range(H):
                visited, rewards = rollout_batch(mdp, constituents[k], np.arange(S), h, gen)
                _record(data, k, h, visited, rewards)
        if warm > 0:
            starts = gen.choice(S, size=warm, p=mdp.start_dist)
            visited, rewards = rollout_batch(mdp, constituents[k], starts, 0, gen)
            _record(data, k, 0, visited, rewards)
    estimates = data.fit()
    for r, switch in enumerate(switch_steps(H, rounds)):
        gen = rng.child(r + 1).generator()
        greedy = compose_greedy(estimates, constituents).policy
        for k in range(K):
            s = gen.choice(S, size=episodes_per_round, p=mdp.start_dist)
            if switch > 0:
                visited, _ = rollout_batch(mdp, greedy, s, 0, gen, stop_time=switch)
                last = visited[:, -1]
                s = _step(mdp, greedy, last, switch - 1, gen)
            visited, rewards = rollout_batch(mdp, constituents[k], s, switch, gen)
            _record(data, k, switch, visited, rewards)
        estimates = data.fit()
    return compose_greedy(estimates, constituents)


def _step(mdp, policy, states, h, gen):
    a = policy.table(mdp.horizon)[h, states]
    return draw_categorical(gen, mdp.transition[states, a])
