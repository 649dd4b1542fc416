import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxfollow.benchmark import is_member, permissible_sets
from maxfollow.examples import build_example, random_gridworld, random_mdp
from maxfollow.maxiteration import (
    LearnedPolicy,
    compose_greedy,
    epsilon_to_params,
    greedy_indices,
    heuristic_max_iteration,
    markov_bound,
    max_iteration,
    mu_h_sampler,
    switch_steps,
)
from maxfollow.oracle import Oracle, OracleSpec, ValueEstimateBank
from maxfollow.rng import RngStream
from maxfollow.value import constituent_values, expected_return

EXACT = OracleSpec("exact")


class CountingOracle:
    def __init__(self, inner):
        self.inner = inner
        self.seen = []

    def query(self, k, h, sampler, alpha):
        self.seen.append((k, h))
        return self.inner.query(k, h, sampler, alpha)


def run_exact(mdp, pis, seed=0):
    return max_iteration(mdp, pis, EXACT, epsilon_to_params(1.0, len(pis), mdp.horizon), RngStream(seed))


@pytest.mark.parametrize("eps,K,H,alpha,beta", [
    (0.5, 2, 10, 6.25e-6, 0.05),
    (1.0, 3, 8, 1 / 12288, 0.125),
    (0.25, 4, 5, 0.25**3 / 2500, 0.05),
])
def test_epsilon_to_params(eps, K, H, alpha, beta):
    p = epsilon_to_params(eps, K, H)
    assert p.alpha == pytest.approx(alpha, rel=1e-12)
    assert p.beta == pytest.approx(beta, rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.5])
def test_epsilon_range(bad):
    with pytest.raises(ValueError):
        epsilon_to_params(bad, 2, 5)


def test_markov_bound_frozen():
    p = epsilon_to_params(0.5, 2, 10)
    assert markov_bound(p, 10) == pytest.approx(4 * 6.25e-6 * 100 / 0.25)


def test_greedy_ties_to_lowest_index():
    est = np.array([[1.0, 2.0, 0.0], [1.0, 3.0, 0.0], [0.5, 3.0, 0.0]])
    np.testing.assert_array_equal(greedy_indices(est), [0, 1, 0])


def test_query_order_and_count():
    mdp, pis = build_example("detour")
    truth = constituent_values(mdp, pis)
    counter = CountingOracle(Oracle(EXACT, mdp, pis, truth, RngStream(0)))
    res = max_iteration(mdp, pis, EXACT, epsilon_to_params(1.0, 3, 10), RngStream(0), oracle=counter)
    assert counter.seen == [(k, h) for h in range(10) for k in range(3)]
    assert res.oracle_calls == 30
    assert res.bank.populated.all()


@pytest.mark.parametrize("name,expected", [("chain3", 10.0), ("detour", 0.25), ("trap", 8.5)])
def test_exact_returns(name, expected):
    mdp, pis = build_example(name)
    res = run_exact(mdp, pis)
    assert expected_return(mdp, res.policy.policy) == pytest.approx(expected, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_exact_oracle_output_is_max_following(seed):
    mdp, pis = random_gridworld(seed, grid=3, K=3, H=5, slip=0.2)
    res = run_exact(mdp, pis)
    ok, where = is_member(res.policy, pis, permissible_sets(constituent_values(mdp, pis), 0.0))
    assert ok, where


def test_exact_oracle_has_empty_bad_sets():
    mdp, pis = build_example("trap")
    res = run_exact(mdp, pis)
    assert res.diagnostics.trajectory == 0.0
    assert res.diagnostics.union_bound == 0.0


def test_adversarial_bad_set_hits_start():
    mdp, pis = build_example("trap")
    spec = OracleSpec("adversarial", eps=0.25, flips=((0, 0, 0, 0.25), (1, 0, 0, -0.25)))
    res = max_iteration(mdp, pis, spec, epsilon_to_params(1.0, 2, 10), RngStream(0))
    assert res.diagnostics.per_step[0] == 1.0
    assert res.diagnostics.trajectory == 1.0
    assert expected_return(mdp, res.policy.policy) == pytest.approx(0.0, abs=1e-12)


def test_noisy_run_is_reproducible():
    mdp, pis = random_gridworld(5, grid=4, K=3, H=6, slip=0.2)
    spec = OracleSpec("noisy", alpha=0.5)
    params = epsilon_to_params(0.5, 3, 6)
    a = max_iteration(mdp, pis, spec, params, RngStream(1, (3,)))
    b = max_iteration(mdp, pis, spec, params, RngStream(1, (3,)))
    np.testing.assert_array_equal(a.bank.estimates, b.bank.estimates)
    np.testing.assert_array_equal(a.policy.actions, b.policy.actions)


def test_result_unpacks():
    mdp, pis = build_example("chain3", H=3)
    learned, bank, diag = run_exact(mdp, pis)
    assert isinstance(learned, LearnedPolicy) and isinstance(bank, ValueEstimateBank)
    assert diag.threshold == pytest.approx(1.0 / 6)


def test_oracle_failure_has_context():
    class Broken:
        def query(self, k, h, sampler, alpha):
            if h == 2 and k == 1:
                raise ValueError("boom")
            return np.zeros(sampler.num_states), {}

    mdp, pis = build_example("chain3", H=4)
    with pytest.raises(RuntimeError, match=r"\(k=1, h=2\)"):
        max_iteration(mdp, pis, EXACT, epsilon_to_params(1.0, 2, 4), RngStream(0), oracle=Broken())


def test_mu_h_sampler_requires_earlier_slices():
    mdp, pis = build_example("chain3", H=4)
    bank = ValueEstimateBank(2, 4, 3)
    bank.set_slice(0, 0, np.zeros(3))
    with pytest.raises(ValueError, match=r"\(k=1, h=0\)"):
        mu_h_sampler(mdp, pis, bank, 1)
    np.testing.assert_array_equal(mu_h_sampler(mdp, pis, bank, 0).distribution(), [1, 0, 0])


def test_mu_h_follows_greedy_policy():
    mdp, pis = build_example("chain3", H=4)
    truth = constituent_values(mdp, pis)
    bank = ValueEstimateBank.from_table(truth.values, "exact")
    # h=0 at s0: right (2 vs 0); h=1 at s1: right and left both worth 1, tie goes to right
    np.testing.assert_array_equal(mu_h_sampler(mdp, pis, bank, 2).distribution(), [0, 0, 1])


def test_learned_policy_csv(tmp_path):
    mdp, pis = build_example("chain3", H=3)
    res = run_exact(mdp, pis)
    res.policy.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "h,s,k_star,action"
    assert len(lines) == 1 + 3 * 3


def test_compose_greedy_matches_incremental():
    mdp, pis = random_mdp(8, S=5, A=3, K=3, H=5)
    res = run_exact(mdp, pis)
    again = compose_greedy(res.bank.estimates, pis)
    np.testing.assert_array_equal(again.actions, res.policy.actions)


@pytest.mark.parametrize("H,R,expected", [(10, 1, [0]), (10, 4, [0, 2, 5, 7]), (3, 3, [0, 1, 2])])
def test_switch_steps(H, R, expected):
    assert switch_steps(H, R) == expected


def test_heuristic_recovers_chain3():
    mdp, pis = build_example("chain3")
    learned = heuristic_max_iteration(mdp, pis, rounds=4, episodes_per_round=20, features="onehot",
                                      rng=RngStream(0), exhaustive_warmup=True)
    assert expected_return(mdp, learned.policy) == pytest.approx(10.0)


def test_heuristic_rejects_zero_rounds():
    mdp, pis = build_example("chain3")
    with pytest.raises(ValueError):
        heuristic_max_iteration(mdp, pis, 0, 10, "onehot", RngStream(0))


def test_chain3_noisy_margin_every_seed():
    from maxfollow.harness.runner import theorem1_instance
    mdp, pis = build_example("chain3")
    r = theorem1_instance(mdp, pis, 0.5, range(200))
    assert r["min_seed_margin"] >= 0.0
    assert r["max_bad_fraction"] == 0.0 and r["zero_regime"]


def test_vacuous_epsilon_report_is_well_formed():
    from maxfollow.harness.runner import theorem1_instance
    mdp, pis = build_example("detour")
    r = theorem1_instance(mdp, pis, 1.0, range(5))
    assert r["class_worst"] - 1.0 <= 0.0 and r["passed"]
    assert set(r) >= {"margin", "markov_bound", "alpha", "beta", "seeds"}
