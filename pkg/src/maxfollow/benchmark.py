"""The approximate max-following class and exact bounds over it.

For slack ``beta`` the permissible constituents at ``(h, s)`` are those whose
value is within ``beta`` of the best constituent value there. A policy is in
the class when at every ``(h, s)`` it copies the action of some permissible
constituent. Worst and best class returns are computed by min/max dynamic
programming over the permissible action images.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .mdp import ConstituentSet, DeterministicPolicy, TabularMdp
from .value import ValueTable, _policy_values, constituent_values

ROUND_DECIMALS = 9
EXACT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PermissibleSets:
    """``mask[h, s, k]`` is True iff constituent ``k`` is beta-good at ``(h, s)``."""

    mask: np.ndarray
    beta: float

    @property
    def horizon(self) -> int:
        return self.mask.shape[0]

    def __getitem__(self, hs) -> frozenset:
        h, s = hs
        return frozenset(int(k) for k in np.flatnonzero(self.mask[h, s]))

    def action_image(self, constituents: ConstituentSet, num_actions: int) -> np.ndarray:
        """``(H, S, A)`` mask of actions some permissible constituent takes."""
        H, S, K = self.mask.shape
        acts = constituents.action_matrix(H)  # (K, H, S)
        img = np.zeros((H, S, num_actions), dtype=bool)
        for k in range(K):
            hh, ss = np.nonzero(self.mask[:, :, k])
            img[hh, ss, acts[k, hh, ss]] = True
        return img

    def to_dict(self) -> dict:
        H, S, _ = self.mask.shape
        return {"beta": self.beta, "sets": [[sorted(self[h, s]) for s in range(S)] for h in range(H)]}


def permissible_sets(truth: ValueTable, beta: float) -> PermissibleSets:
    if beta < 0:
        raise ValueError("beta must be non-negative")
    V = truth.values  # (K, H, S)
    best = V.max(axis=0)
    margin = np.round(V - (best - beta), ROUND_DECIMALS)
    mask = np.transpose(margin >= 0.0, (1, 2, 0))
    return PermissibleSets(mask, float(beta))


@dataclass(frozen=True)
class ClassValueBounds:
    worst: float
    best: float
    worst_selector: DeterministicPolicy
    best_selector: DeterministicPolicy

    def to_dict(self) -> dict:
        return {
            "worst": self.worst,
            "best": self.best,
            "worst_selector": self.worst_selector.actions.tolist(),
            "best_selector": self.best_selector.actions.tolist(),
        }


def _class_dp(mdp: TabularMdp, constituents: ConstituentSet, sets: PermissibleSets, sense: str):
    img = sets.action_image(constituents, mdp.num_actions)
    S, H = mdp.num_states, mdp.horizon
    if sets.horizon != H:
        raise ValueError("permissible sets and MDP disagree on the horizon")
    fill = np.inf if sense == "min" else -np.inf
    pick = np.argmin if sense == "min" else np.argmax
    W = np.zeros(S)
    table = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        Q = np.where(img[h], mdp.reward + mdp.transition @ W, fill)
        table[h] = pick(Q, axis=1)
        W = Q[np.arange(S), table[h]]
    return float(mdp.start_dist @ W), DeterministicPolicy(table, name=f"class_{sense}")


def class_worst_value(mdp: TabularMdp, constituents: ConstituentSet, sets: PermissibleSets):
    """Minimum expected return over the class and a minimizing selector."""
    return _class_dp(mdp, constituents, sets, "min")


def class_best_value(mdp: TabularMdp, constituents: ConstituentSet, sets: PermissibleSets):
    """Maximum expected return over the class and a maximizing selector."""
    return _class_dp(mdp, constituents, sets, "max")


def class_value_bounds(mdp, constituents, sets) -> ClassValueBounds:
    w, wp = class_worst_value(mdp, constituents, sets)
    b, bp = class_best_value(mdp, constituents, sets)
    return ClassValueBounds(w, b, wp, bp)


def is_member(policy, constituents: ConstituentSet, sets: PermissibleSets):
    """``(True, None)`` if ``policy`` is in the class, else ``(False, (h, s))`` for the first violation.

    Every ``(h, s)`` is checked, reachable or not.
    """
    pol = getattr(policy, "policy", policy)
    H, S, K = sets.mask.shape
    table = pol.table(H)
    acts = constituents.action_matrix(H)
    ok = np.any(sets.mask & (np.transpose(acts, (1, 2, 0)) == table[:, :, None]), axis=2)
    if ok.all():
        return True, None
    h, s = np.argwhere(~ok)[0]
    return False, (int(h), int(s))


def selector_count(mdp, constituents, sets) -> int:
    img = sets.action_image(constituents, mdp.num_actions)
    return int(np.prod(img.sum(axis=2), dtype=object))


def enumerate_class(mdp: TabularMdp, constituents: ConstituentSet, sets: PermissibleSets,
                    limit: int = 1_000_000, csv_path=None):
    """Exhaustively evaluate every selector; returns ``(min, max, returns)``.

    Serves as an independent check of the DP. Raises if there are more than
    ``limit`` selectors. With ``csv_path`` writes ``selector_id,return`` rows.
    """
    img = sets.action_image(constituents, mdp.num_actions)
    count = selector_count(mdp, constituents, sets)
    if count > limit:
        raise ValueError(f"{count} selectors exceed the enumeration limit {limit}")
    H, S, _ = img.shape
    choices = [np.flatnonzero(img[h, s]) for h in range(H) for s in range(S)]
    free = [i for i, c in enumerate(choices) if len(c) > 1]
    base = np.array([c[0] for c in choices], dtype=np.int64)
    returns = []
    for combo in itertools.product(*(choices[i] for i in free)):
        flat = base.copy()
        flat[free] = combo
        V = _policy_values(mdp, flat.reshape(H, S))
        returns.append(float(mdp.start_dist @ V[0]))
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["selector_id", "return"])
            for i, r in enumerate(returns):
                w.writerow([i, repr(r)])
    return min(returns), max(returns), returns


@dataclass(frozen=True)
class Lemma1Report:
    lhs: float
    rhs: float
    beta: float
    bound: float
    slack: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_lemma1(mdp: TabularMdp, constituents: ConstituentSet, epsilon: float, c_beta: float = 1.0,
                  truth: ValueTable | None = None) -> Lemma1Report:
    """Check ``class_worst >= max_k E[V^k] - H * beta`` with ``beta = c_beta * eps / H``.

    ``slack`` is the realized ``lhs - rhs``.
    """
    truth = constituent_values(mdp, constituents) if truth is None else truth
    beta = c_beta * epsilon / mdp.horizon
    worst, _ = class_worst_value(mdp, constituents, permissible_sets(truth, beta))
    rhs = float(np.max(truth.values[:, 0] @ mdp.start_dist))
    bound = rhs - mdp.horizon * beta
    return Lemma1Report(worst, rhs, beta, bound, worst - rhs, worst >= bound - EXACT_TOL)


@dataclass(frozen=True)
class InductionReport:
    hybrids: list
    rhs: float
    beta: float
    bounds: list
    passed: bool
    first_failure: int | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def hybrid_worst_values(mdp: TabularMdp, constituents: ConstituentSet, sets: PermissibleSets,
                        truth: ValueTable) -> list[float]:
    """Worst-over-class value of "follow a selector through step C, then commit".

    At step ``C`` the selector picks a permissible constituent ``t`` and
    follows ``pi^t`` to the end, which is worth ``V_C^t(s)``; before ``C`` it
    picks any permissible action. One value per ``C in [H]``.
    """
    img = sets.action_image(constituents, mdp.num_actions)
    S, H = mdp.num_states, mdp.horizon
    out = []
    for C in range(H):
        W = np.where(sets.mask[C].T, truth.values[:, C], np.inf).min(axis=0)
        for h in range(C - 1, -1, -1):
            Q = np.where(img[h], mdp.reward + mdp.transition @ W, np.inf)
            W = Q.min(axis=1)
        out.append(float(mdp.start_dist @ W))
    return out


def verify_lemma1_induction(mdp: TabularMdp, constituents: ConstituentSet, beta: float,
                            truth: ValueTable | None = None) -> InductionReport:
    """Check ``hybrid_C >= max_k E[V^k] - (C + 1) beta`` for every ``C``."""
    truth = constituent_values(mdp, constituents) if truth is None else truth
    sets = permissible_sets(truth, beta)
    hybrids = hybrid_worst_values(mdp, constituents, sets, truth)
    rhs = float(np.max(truth.values[:, 0] @ mdp.start_dist))
    bounds = [rhs - (C + 1) * beta for C in range(mdp.horizon)]
    fails = [C for C, (v, b) in enumerate(zip(hybrids, bounds)) if v < b - EXACT_TOL]
    return InductionReport(hybrids, rhs, beta, bounds, not fails, fails[0] if fails else None)
