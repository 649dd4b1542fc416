"""Policy ensembling by max-following on finite-horizon tabular MDPs."""
from .benchmark import (
    ClassValueBounds,
    PermissibleSets,
    class_best_value,
    class_value_bounds,
    class_worst_value,
    enumerate_class,
    is_member,
    permissible_sets,
    verify_lemma1,
    verify_lemma1_induction,
)
from .examples import build_example, random_gridworld, random_mdp
from .maxiteration import (
    BadSetDiagnostics,
    EpsilonParams,
    LearnedPolicy,
    epsilon_to_params,
    heuristic_max_iteration,
    max_iteration,
    mu_h_sampler,
)
from .mdp import (
    ConstituentSet,
    DeterministicPolicy,
    TabularMdp,
    Trajectory,
    sample_trajectory,
    state_occupancy,
    validate_mdp,
)
from .oracle import (
    OracleSpec,
    StateSampler,
    ValueEstimateBank,
    adversarial_oracle,
    exact_oracle,
    noisy_oracle,
    regression_oracle,
    verify_contract,
)
from .rng import RngStream
from .value import McEstimate, ValueTable, constituent_values, exact_value, expected_return, mc_value, optimal_value

__version__ = "0.1.0"
