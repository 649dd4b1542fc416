import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxfollow.benchmark import (
    class_best_value,
    class_value_bounds,
    class_worst_value,
    enumerate_class,
    hybrid_worst_values,
    is_member,
    permissible_sets,
    selector_count,
    verify_lemma1,
    verify_lemma1_induction,
)
from maxfollow.examples import build_example, random_mdp
from maxfollow.mdp import DeterministicPolicy
from maxfollow.value import constituent_values, expected_return


def bounds_for(mdp, pis, beta):
    sets = permissible_sets(constituent_values(mdp, pis), beta)
    return sets, class_value_bounds(mdp, pis, sets)


def test_permissible_sets_detour_start():
    mdp, pis = build_example("detour", start=0)
    sets = permissible_sets(constituent_values(mdp, pis), 0.0)
    # at s1, pi_left (back to s0, then right/left loop) ties pi_up? no: up is worth 9, others less
    assert sets[0, 1] == frozenset({2})
    # at s0 every constituent is worth 0 except pi_right which reaches s1
    assert 0 in sets[0, 0]


def test_rounding_treats_float_noise_as_tie():
    from maxfollow.value import ValueTable
    vals = np.zeros((2, 1, 1))
    vals[0, 0, 0] = 0.1 + 0.2
    vals[1, 0, 0] = 0.3
    sets = permissible_sets(ValueTable(vals), 0.0)
    assert sets[0, 0] == frozenset({0, 1})


@pytest.mark.parametrize("name,kw,beta,worst,best", [
    ("chain3", {}, 0.5, 10.0, 10.0),
    ("detour", {"start": 0}, 0.0, 0.0, 8.0),
    ("trap", {}, 0.0, 8.5, 8.5),
])
def test_frozen_class_bounds(name, kw, beta, worst, best):
    mdp, pis = build_example(name, **kw)
    sets, b = bounds_for(mdp, pis, beta)
    assert b.worst == pytest.approx(worst, abs=1e-9)
    assert b.best == pytest.approx(best, abs=1e-9)
    assert is_member(b.worst_selector, pis, sets)[0]
    assert is_member(b.best_selector, pis, sets)[0]


def test_selector_values_match_dp():
    mdp, pis = build_example("detour", start=0)
    sets, b = bounds_for(mdp, pis, 0.0)
    assert expected_return(mdp, b.worst_selector) == pytest.approx(b.worst)
    assert expected_return(mdp, b.best_selector) == pytest.approx(b.best)


def test_is_member_reports_first_violation():
    mdp, pis = build_example("chain3", H=4)
    sets = permissible_sets(constituent_values(mdp, pis), 0.0)
    ok, where = is_member(DeterministicPolicy([1, 1, 1]), pis, sets)
    assert not ok and where == (0, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.0, 1.5))
def test_dp_matches_enumeration(seed, beta):
    mdp, pis = random_mdp(seed, S=3, A=2, K=3, H=3)
    sets, b = bounds_for(mdp, pis, beta)
    lo, hi, returns = enumerate_class(mdp, pis, sets)
    assert len(returns) == selector_count(mdp, pis, sets)
    assert b.worst == pytest.approx(lo, abs=1e-9)
    assert b.best == pytest.approx(hi, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_class_grows_with_beta(seed):
    mdp, pis = random_mdp(seed, S=4, A=3, K=3, H=4)
    prev = None
    for beta in (0.0, 0.1, 0.5, 4.0):
        _, b = bounds_for(mdp, pis, beta)
        assert b.worst <= b.best + 1e-12
        if prev is not None:
            assert b.worst <= prev.worst + 1e-12 and b.best >= prev.best - 1e-12
        prev = b


def test_large_beta_admits_every_constituent():
    mdp, pis = random_mdp(2, S=4, A=3, K=3, H=4)
    sets = permissible_sets(constituent_values(mdp, pis), float(mdp.horizon))
    assert sets.mask.all()
    for p in pis:
        assert is_member(p, pis, sets)[0]


def test_enumeration_limit_and_csv(tmp_path):
    mdp, pis = build_example("detour", H=4, start=0)
    sets = permissible_sets(constituent_values(mdp, pis), 0.0)
    n = selector_count(mdp, pis, sets)
    with pytest.raises(ValueError, match="enumeration limit"):
        enumerate_class(mdp, pis, sets, limit=n - 1)
    lo, hi, _ = enumerate_class(mdp, pis, sets, csv_path=tmp_path / "e.csv")
    rows = (tmp_path / "e.csv").read_text().splitlines()
    assert rows[0] == "selector_id,return" and len(rows) == n + 1
    assert (lo, hi) == (0.0, 2.0)


@pytest.mark.parametrize("name,kw", [("chain3", {}), ("detour", {}), ("detour", {"start": 0}), ("trap", {}),
                                     ("selfloop-linear", {})])
@pytest.mark.parametrize("eps", [0.25, 1.0])
def test_lemma1_on_examples(name, kw, eps):
    mdp, pis = build_example(name, **kw)
    rep = verify_lemma1(mdp, pis, eps)
    assert rep.passed and rep.beta == pytest.approx(eps / mdp.horizon)
    assert verify_lemma1_induction(mdp, pis, rep.beta).passed


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 6), st.integers(1, 3), st.integers(1, 8), st.floats(0.05, 1.0))
def test_lemma1_random(seed, S, K, H, eps):
    mdp, pis = random_mdp(seed, S=S, A=2, K=K, H=H)
    rep = verify_lemma1(mdp, pis, eps)
    assert rep.passed, rep
    ind = verify_lemma1_induction(mdp, pis, rep.beta)
    assert ind.passed, ind


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_beta_zero_hybrid_chain(seed):
    # without slack, committing at C=0 picks a best constituent at each start state
    mdp, pis = random_mdp(seed, S=4, A=2, K=3, H=5)
    mdp = mdp.with_start(0)
    truth = constituent_values(mdp, pis)
    sets = permissible_sets(truth, 0.0)
    hyb = hybrid_worst_values(mdp, pis, sets, truth)
    assert hyb[0] == pytest.approx(np.max(truth.values[:, 0, 0]), abs=1e-9)
    assert all(b >= a - 1e-9 for a, b in zip(hyb, hyb[1:]))
    worst, _ = class_worst_value(mdp, pis, sets)
    best, _ = class_best_value(mdp, pis, sets)
    assert worst >= hyb[-1] - 1e-9 or worst <= best
