"""Exact finite-horizon evaluation, Monte-Carlo estimates and the optimal DP."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .mdp import ConstituentSet, DeterministicPolicy, TabularMdp, draw_categorical, require_valid, rollout_batch
from .rng import RngStream

Z95 = 1.959963984540054


@dataclass(frozen=True, eq=False)
class ValueTable:
    """``values[k, h, s]`` for ``h in [H]``; the value at the horizon is 0."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 2:
            v = v[None]
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def num_policies(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    def __getitem__(self, idx):
        return self.values[idx]

    def at(self, k: int, h: int) -> np.ndarray:
        """Slice ``V_h^k(.)``; ``h == H`` returns the zero boundary."""
        if h == self.horizon:
            return np.zeros(self.values.shape[2])
        return self.values[k, h]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "h", "s", "value"])
            K, H, S = self.values.shape
            for k in range(K):
                for h in range(H):
                    for s in range(S):
                        w.writerow([k, h, s, repr(float(self.values[k, h, s]))])

    @classmethod
    def from_csv(cls, path) -> "ValueTable":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        K = 1 + max(int(r["k"]) for r in rows)
        H = 1 + max(int(r["h"]) for r in rows)
        S = 1 + max(int(r["s"]) for r in rows)
        v = np.full((K, H, S), np.nan)
        for r in rows:
            v[int(r["k"]), int(r["h"]), int(r["s"])] = float(r["value"])
        return cls(v)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    half_width: float
    n: int

    def __post_init__(self):
        if self.n < 1 or self.half_width < 0:
            raise ValueError("McEstimate needs n >= 1 and half_width >= 0")

    @classmethod
    def from_samples(cls, samples) -> "McEstimate":
        x = np.asarray(samples, dtype=float)
        n = x.shape[0]
        mean = float(np.mean(x))
        if n < 2 or np.all(x == x[0]):
            return cls(mean, 0.0, n)
        return cls(mean, float(Z95 * np.std(x, ddof=1) / math.sqrt(n)), n)

    def covers(self, value: float, widen: float = 1.0) -> bool:
        return abs(self.mean - value) <= widen * self.half_width


def _policy_values(mdp: TabularMdp, table: np.ndarray) -> np.ndarray:
    S, H = mdp.num_states, mdp.horizon
    idx = np.arange(S)
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        a = table[h]
        V[h] = mdp.reward[idx, a] + mdp.transition[idx, a] @ V[h + 1]
    return V[:H]


def exact_value(mdp: TabularMdp, policy: DeterministicPolicy) -> ValueTable:
    """Backward induction ``V_h(s) = R(s, a) + sum_s' P(s'|s,a) V_{h+1}(s')``."""
    require_valid(mdp)
    policy.check_on(mdp)
    return ValueTable(_policy_values(mdp, policy.table(mdp.horizon)))


def constituent_values(mdp: TabularMdp, constituents: ConstituentSet) -> ValueTable:
    """Stack the exact value tables of all constituents into one ``(K, H, S)`` table."""
    require_valid(mdp)
    for p in constituents:
        p.check_on(mdp)
    return ValueTable(np.stack([_policy_values(mdp, p.table(mdp.horizon)) for p in constituents]))


def expected_return(mdp: TabularMdp, policy: DeterministicPolicy) -> float:
    """``E_{s0 ~ mu0}[V_0(s0)]``."""
    return float(mdp.start_dist @ exact_value(mdp, policy).values[0, 0])


def _sample_starts(sampler, gen: np.random.Generator, n: int) -> np.ndarray:
    if isinstance(sampler, (int, np.integer)):
        return np.full(n, int(sampler), dtype=np.int64)
    if hasattr(sampler, "sample"):
        return np.asarray(sampler.sample(gen, n), dtype=np.int64)
    return draw_categorical(gen, np.asarray(sampler, dtype=float), n)


def partial_returns(mdp, policy, sampler, h: int, n: int, rng: RngStream) -> np.ndarray:
    """``n`` rollout returns of ``policy`` from time ``h`` with starts drawn from ``sampler``."""
    gen = rng.generator()
    starts = _sample_starts(sampler, gen, n)
    _, rewards = rollout_batch(mdp, policy, starts, h, gen)
    return rewards.sum(axis=1)


def mc_value(mdp: TabularMdp, policy: DeterministicPolicy, start_sampler, h: int, n: int,
             rng: RngStream, batches: int = 1, workers: int | None = None) -> McEstimate:
    """Monte-Carlo estimate of ``E_{s ~ mu}[V_h(s)]``.

    ``start_sampler`` is a state index, a probability vector, or any object with
    ``sample(gen, n)``. With ``batches > 1`` the work is split over substreams
    ``rng.child(i)`` and merged in substream order, so the result does not
    depend on ``workers``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= h < mdp.horizon:
        raise ValueError(f"h must lie in [0, {mdp.horizon})")
    require_valid(mdp)
    if batches <= 1:
        return McEstimate.from_samples(partial_returns(mdp, policy, start_sampler, h, n, rng))
    sizes = [n // batches + (i < n % batches) for i in range(batches)]
    jobs = [(i, m) for i, m in enumerate(sizes) if m > 0]

    def run(job):
        i, m = job
        return partial_returns(mdp, policy, start_sampler, h, m, rng.child(i))

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    return McEstimate.from_samples(np.concatenate(parts))


def optimal_value(mdp: TabularMdp) -> tuple[float, DeterministicPolicy]:
    """Optimal expected return from ``mu0`` and a time-indexed optimal policy.

    Ties go to the lowest action index.
    """
    require_valid(mdp)
    S, H = mdp.num_states, mdp.horizon
    V = np.zeros(S)
    table = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        Q = mdp.reward + mdp.transition @ V
        table[h] = np.argmax(Q, axis=1)
        V = Q[np.arange(S), table[h]]
    return float(mdp.start_dist @ V), DeterministicPolicy(table, name="optimal")
