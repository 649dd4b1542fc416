"""Value-estimation oracles with a mean-squared-error guarantee.

An oracle receives a constituent index ``k``, a time ``h`` and sampling access
to a state distribution ``mu`` and returns an estimate ``V_hat`` of ``V_h^k``
with ``E_{s ~ mu}[(V_hat(s) - V_h^k(s))^2] <= alpha``. Four flavors exist:
exact, noisy (pointwise bounded noise), adversarial (prescribed shifts) and
regression (least squares on Monte-Carlo rollout returns).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .examples import grid_coordinates
from .mdp import ConstituentSet, TabularMdp, draw_categorical, rollout_batch
from .rng import RngStream
from .value import ValueTable

FLAVORS = ("exact", "noisy", "adversarial", "regression")
DAMPING = 1e-8


class MissingSliceError(LookupError):
    pass


# ---------------------------------------------------------------------------
# state samplers


@dataclass(frozen=True, eq=False)
class StateSampler:
    """I.i.d. state source: an explicit distribution, or "run a policy for ``steps`` steps from mu0".

    In the policy form ``action_table[i, s]`` gives the action at time ``i``
    for ``i < steps``.
    """

    dist: np.ndarray | None = None
    mdp: TabularMdp | None = None
    action_table: np.ndarray | None = None
    steps: int = 0

    @classmethod
    def from_distribution(cls, dist) -> "StateSampler":
        d = np.asarray(dist, dtype=float)
        return cls(dist=d)

    @classmethod
    def point(cls, num_states: int, s: int) -> "StateSampler":
        d = np.zeros(num_states)
        d[s] = 1.0
        return cls(dist=d)

    @classmethod
    def from_policy(cls, mdp: TabularMdp, action_table, steps: int) -> "StateSampler":
        tbl = np.asarray(action_table, dtype=np.int64).reshape(-1, mdp.num_states)
        if tbl.shape[0] < steps:
            raise ValueError(f"action table covers {tbl.shape[0]} steps, need {steps}")
        return cls(mdp=mdp, action_table=tbl[:steps], steps=steps)

    @property
    def num_states(self) -> int:
        return self.dist.shape[0] if self.dist is not None else self.mdp.num_states

    def distribution(self) -> np.ndarray:
        """Exact distribution of the sampled state."""
        if self.dist is not None:
            return self.dist
        mu = self.mdp.start_dist.copy()
        idx = np.arange(self.mdp.num_states)
        for i in range(self.steps):
            mu = mu @ self.mdp.transition[idx, self.action_table[i]]
        return mu

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        if self.dist is not None:
            return draw_categorical(gen, self.dist, n)
        s = draw_categorical(gen, self.mdp.start_dist, n)
        for i in range(self.steps):
            s = draw_categorical(gen, self.mdp.transition[s, self.action_table[i, s]])
        return s


# ---------------------------------------------------------------------------
# estimate bank


@dataclass
class ValueEstimateBank:
    """Write-once table of oracle outputs ``V_hat[k, h, s]``; absent slices are NaN."""

    num_policies: int
    horizon: int
    num_states: int
    estimates: np.ndarray = field(init=False)
    populated: np.ndarray = field(init=False)
    provenance: dict = field(init=False, default_factory=dict)

    def __post_init__(self):
        self.estimates = np.full((self.num_policies, self.horizon, self.num_states), np.nan)
        self.populated = np.zeros((self.num_policies, self.horizon), dtype=bool)

    def set_slice(self, k: int, h: int, values, provenance: dict | None = None) -> None:
        if self.populated[k, h]:
            raise ValueError(f"slice (k={k}, h={h}) already written")
        v = np.asarray(values, dtype=float)
        if v.shape != (self.num_states,):
            raise ValueError(f"slice must have shape ({self.num_states},)")
        self.estimates[k, h] = v
        self.populated[k, h] = True
        self.provenance[(k, h)] = dict(provenance or {})

    def slice(self, k: int, h: int) -> np.ndarray:
        if not self.populated[k, h]:
            raise MissingSliceError(f"estimate slice (k={k}, h={h}) is absent")
        return self.estimates[k, h]

    def layer(self, h: int) -> np.ndarray:
        """All constituents' estimates at time ``h`` as a ``(K, S)`` array."""
        for k in range(self.num_policies):
            self.slice(k, h)
        return self.estimates[:, h]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "h", "s", "estimate", "flavor"])
            for k in range(self.num_policies):
                for h in range(self.horizon):
                    if not self.populated[k, h]:
                        continue
                    flavor = self.provenance.get((k, h), {}).get("flavor", "")
                    for s in range(self.num_states):
                        w.writerow([k, h, s, repr(float(self.estimates[k, h, s])), flavor])

    @classmethod
    def from_csv(cls, path, num_policies: int, horizon: int, num_states: int) -> "ValueEstimateBank":
        bank = cls(num_policies, horizon, num_states)
        slices: dict = {}
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                key = (int(r["k"]), int(r["h"]))
                slices.setdefault(key, (np.full(num_states, np.nan), r["flavor"]))[0][int(r["s"])] = float(r["estimate"])
        for (k, h), (v, flavor) in sorted(slices.items()):
            bank.set_slice(k, h, v, {"flavor": flavor})
        return bank

    @classmethod
    def from_table(cls, values: np.ndarray, flavor: str) -> "ValueEstimateBank":
        K, H, S = values.shape
        bank = cls(K, H, S)
        for k in range(K):
            for h in range(H):
                bank.set_slice(k, h, values[k, h], {"flavor": flavor})
        return bank


# ---------------------------------------------------------------------------
# feature maps

FeatureMap = Callable[[TabularMdp], np.ndarray]
_FEATURES: dict[str, FeatureMap] = {}


def register_feature_map(name: str, fn: FeatureMap) -> None:
    """Register ``fn(mdp) -> (S, d)`` feature matrix under ``name``."""
    _FEATURES[name] = fn


def feature_matrix(name: str, mdp: TabularMdp) -> np.ndarray:
    try:
        fn = _FEATURES[name]
    except KeyError:
        raise ValueError(f"unknown feature map {name!r}; registered: {sorted(_FEATURES)}") from None
    return np.asarray(fn(mdp), dtype=float)


register_feature_map("onehot", lambda mdp: np.eye(mdp.num_states))
register_feature_map(
    "linear-grid", lambda mdp: np.stack([np.ones(mdp.num_states), grid_coordinates(mdp.num_states)], axis=1)
)


# ---------------------------------------------------------------------------
# oracle flavors


def _clamp(values: np.ndarray, alpha: float, horizon: int) -> np.ndarray:
    r = math.sqrt(alpha)
    return np.clip(values, -r, horizon + r)


def exact_oracle(truth: ValueTable, k: int, h: int) -> np.ndarray:
    return np.array(truth.values[k, h], dtype=float)


def noisy_oracle(truth: ValueTable, k: int, h: int, alpha: float, rng: RngStream) -> np.ndarray:
    """Truth plus i.i.d. ``Uniform[-sqrt(alpha), sqrt(alpha)]`` noise per state."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    V = truth.values[k, h]
    r = math.sqrt(alpha)
    noise = rng.generator().uniform(-r, r, size=V.shape[0])
    return _clamp(V + noise, alpha, truth.horizon)


def adversarial_oracle(truth: ValueTable, eps: float, flip_spec) -> ValueEstimateBank:
    """Exact bank with signed shifts ``(k, h, s, shift)`` applied, each ``|shift| <= eps``."""
    est = np.array(truth.values, dtype=float)
    for k, h, s, shift in flip_spec:
        if abs(shift) > eps:
            raise ValueError(f"shift {shift} at (k={k}, h={h}, s={s}) exceeds eps={eps}")
        est[k, h, s] += shift
    bank = ValueEstimateBank.from_table(est, "adversarial")
    assert np.max(np.abs(bank.estimates - truth.values)) <= eps + 1e-15
    return bank


def regression_sample_size(alpha: float, horizon: int, support_probs, c: float = 4.0) -> int:
    """Samples needed so the expected smallest visit count is ``>= c H^2 / alpha``."""
    p = np.asarray(support_probs, dtype=float)
    p_min = p[p > 0].min()
    return int(math.ceil(c * horizon**2 / (alpha * p_min)))


def regression_alpha_target(n: int, horizon: int, support_probs, c: float = 4.0) -> float:
    """Accuracy ``alpha`` the sample-size rule guarantees for ``n`` samples."""
    p = np.asarray(support_probs, dtype=float)
    return c * horizon**2 / (n * p[p > 0].min())


def regression_oracle(mdp: TabularMdp, constituents: ConstituentSet, k: int, h: int,
                      sampler: StateSampler, features: str, n: int, rng: RngStream,
                      alpha: float | None = None):
    """Least-squares fit of one-rollout returns of ``pi^k`` from time ``h``.

    Returns ``(estimate_slice, provenance)``. The normal equations are solved
    directly when the design is full rank and with Tikhonov damping
    ``DAMPING`` otherwise; the damped case is flagged in the provenance.
    """
    phi = feature_matrix(features, mdp)
    d = phi.shape[1]
    if n < d:
        raise ValueError(f"n={n} is below the feature count {d}")
    gen = rng.generator()
    states = sampler.sample(gen, n)
    _, rewards = rollout_batch(mdp, constituents[k], states, h, gen)
    y = rewards.sum(axis=1)
    X = phi[states]
    gram = X.T @ X
    rhs = X.T @ y
    damped = np.linalg.matrix_rank(gram) < d
    if damped:
        w = np.linalg.solve(gram + DAMPING * np.eye(d), rhs)
    else:
        w = np.linalg.solve(gram, rhs)
    est = phi @ w
    if alpha is not None:
        est = _clamp(est, alpha, mdp.horizon)
    prov = {"flavor": "regression", "features": features, "n": int(n), "damped": bool(damped)}
    return est, prov


def verify_contract(estimate, truth, sampler: StateSampler, m: int, rng: RngStream) -> float:
    """Empirical ``(1/m) sum_i (V_hat(s_i) - V(s_i))^2`` over ``m`` sampled states."""
    if m < 1:
        raise ValueError("m must be >= 1")
    states = sampler.sample(rng.generator(), m)
    diff = np.asarray(estimate)[states] - np.asarray(truth)[states]
    return float(np.mean(diff**2))


def expected_squared_error(estimate, truth, dist) -> float:
    """``sum_s mu(s) (V_hat(s) - V(s))^2`` by full enumeration."""
    return float(np.asarray(dist) @ (np.asarray(estimate) - np.asarray(truth)) ** 2)


# ---------------------------------------------------------------------------
# configured oracle used by MaxIteration


@dataclass(frozen=True)
class OracleSpec:
    flavor: str = "exact"
    alpha: float | None = None
    features: str = "onehot"
    n: int | None = None
    n_max: int = 1_000_000
    sample_rule_c: float = 4.0
    eps: float | None = None
    flips: tuple = ()

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown oracle flavor {self.flavor!r}")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "flips", tuple(tuple(f) for f in self.flips))


class Oracle:
    """Callable oracle ``query(k, h, sampler, alpha)`` bound to one MDP and constituent set.

    ``truth`` backs the simulated flavors (exact, noisy, adversarial); the
    regression flavor uses only rollouts.
    """

    def __init__(self, spec: OracleSpec, mdp: TabularMdp, constituents: ConstituentSet,
                 truth: ValueTable, rng: RngStream):
        self.spec = spec
        self.mdp = mdp
        self.constituents = constituents
        self.truth = truth
        self.rng = rng
        self.calls = 0
        self._adv = None
        if spec.flavor == "adversarial":
            eps = spec.eps if spec.eps is not None else max((abs(f[3]) for f in spec.flips), default=0.0)
            self._adv = adversarial_oracle(truth, eps, spec.flips)

    def query(self, k: int, h: int, sampler: StateSampler, alpha: float):
        self.calls += 1
        spec = self.spec
        a = spec.alpha if spec.alpha is not None else alpha
        if not 0 < a <= self.mdp.horizon**2:
            raise ValueError(f"alpha={a} outside (0, H^2]")
        if spec.flavor == "exact":
            return exact_oracle(self.truth, k, h), {"flavor": "exact"}
        if spec.flavor == "noisy":
            return noisy_oracle(self.truth, k, h, a, self.rng.child(k, h)), {"flavor": "noisy", "alpha": a}
        if spec.flavor == "adversarial":
            return self._adv.slice(k, h).copy(), {"flavor": "adversarial", "eps": spec.eps}
        n = spec.n
        rule = None
        if n is None:
            n = regression_sample_size(a, self.mdp.horizon, sampler.distribution(), spec.sample_rule_c)
            rule = {"rule_n": n, "capped": n > spec.n_max}
            n = min(n, spec.n_max)
        est, prov = regression_oracle(self.mdp, self.constituents, k, h, sampler, spec.features, n,
                                      self.rng.child(k, h), alpha=a)
        prov["alpha"] = a
        if rule:
            prov.update(rule)
        return est, prov
