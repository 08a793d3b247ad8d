import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqbm import experiments as ex


def test_relative_error_floor():
    assert ex.relative_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert ex.relative_error([1e-9], [0.0]) == pytest.approx(1e-3)
    assert ex.relative_error([], []) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.95, 0.95), st.integers(10, 400))
def test_exact_failure_probability_against_simulation(mean, n):
    p = ex.exact_failure_probability(mean, n, 0.1)
    assert 0.0 <= p <= 1.0
    rng = np.random.default_rng(0)
    draws = np.where(rng.random((4000, n)) < (1 + mean) / 2, 1.0, -1.0).mean(axis=1)
    assert abs(np.mean(np.abs(draws - mean) > 0.1) - p) < 0.04


def test_worst_case_alg1_failure_exceeds_delta():
    # the alg1 shot count is too small when mu is near zero
    assert ex.exact_failure_probability(0.0, 185, 0.1) > 0.10
    assert ex.exact_failure_probability(-0.848, 185, 0.1) < 0.05


def test_binned_povm():
    povm = ex.binned_povm(2, 3)
    assert povm.size == 3
    np.testing.assert_allclose(povm.effects.sum(axis=0), np.eye(4))
    with pytest.raises(ValueError):
        ex.binned_povm(1, 3)


def test_sweep_symmetry_and_limit():
    rep = ex.nonconvexity_sweep(-3, 3, 61)
    np.testing.assert_allclose(rep["closed_form"], rep["closed_form"][::-1], atol=1e-12)
    far = ex.nonconvexity_sweep(400, 400, 1)["closed_form"][0]
    assert np.log(2) < far < np.log(2) + 5e-3


def test_dv_case_with_infinite_divergence():
    from eqbm.model import HamiltonianFamily, computational_povm
    fam = HamiltonianFamily.from_letters(["X"], [])
    povm = ex.binned_povm(1, 2)
    # a pure basis-state model cannot arise from a finite G; use a POVM with a zero effect instead
    effects = np.array([np.eye(2), np.zeros((2, 2))])
    from eqbm.model import Povm
    case = ex.dv_exactness_case([0.5, 0.5], fam, Povm(effects), np.array([0.3]))
    assert case["D"] == np.inf and case["passed"]


def test_dv_case_p_equals_q():
    from eqbm.model import HamiltonianFamily, computational_povm
    from eqbm.objective import Objective, ObjectiveConfig
    from eqbm.critic import LinearCritic
    from eqbm.model import Distribution
    fam = HamiltonianFamily.from_letters(["ZX", "YI"], ["XZ"])
    povm = computational_povm(2)
    gamma = np.array([0.3, -0.5, 0.8])
    q = Objective(ObjectiveConfig(Distribution(np.full(4, 0.25)), povm), fam, LinearCritic.tabular(4)).q(gamma)
    case = ex.dv_exactness_case(q / q.sum(), fam, povm, gamma)
    assert abs(case["max_value"]) < 1e-10 and case["maximizer_error"] < 1e-8
