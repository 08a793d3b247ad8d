import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqbm import estimators as E
from eqbm import linalg
from eqbm.channels import ExactModel, Observable, anticommutator_term, commutator_term
from eqbm.model import HamiltonianFamily, Povm, computational_povm


def test_standard_shot_counts():
    assert E.shots_required(0.1, 0.05, 1.0, "alg1") == 185
    assert E.shots_required(0.1, 0.05, 1.0, "alg2") == 738
    assert E.shots_required(0.1, 0.05, 1.0, "product") == 738
    with pytest.raises(E.ShotPlanError):
        E.shots_required(0.0, 0.05, 1.0, "alg1")
    with pytest.raises(ValueError):
        E.shots_required(0.1, 0.05, 1.0, "alg3")


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 1), st.floats(0.001, 0.5), st.floats(0.1, 5))
def test_shot_counts_scale(eps, delta, g):
    n1 = E.shots_required(eps, delta, g, "alg1")
    n2 = E.shots_required(eps, delta, g, "alg2")
    assert n1 >= g ** 2 / (2 * eps ** 2) * np.log(2 / delta) - 1e-6
    assert n2 >= 4 * n1 - 4
    assert E.shots_required(eps / 2, delta, g, "alg1") >= n1


def test_plan_check():
    plan = E.ShotPlan.for_estimator(0.1, 0.05, 1.0, "alg1")
    plan.check(1.0, "alg1")
    with pytest.raises(E.ShotPlanError):
        plan.check(2.0, "alg1")


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 300), st.integers(0, 2**63 - 1), st.integers(2, 6))
def test_run_blocks_thread_invariant(n, seed, threads):
    fn = lambda rng, count: rng.random(count)
    a = E.run_blocks(n, seed, fn, dim=512, threads=1)
    b = E.run_blocks(n, seed, fn, dim=512, threads=threads)
    assert a.shape == (n,)
    np.testing.assert_array_equal(a, b)


def test_substream_is_stateless():
    a = np.random.default_rng(E.substream(5, 1, 2)).random(3)
    b = np.random.default_rng(E.substream(5, 1, 2)).random(3)
    c = np.random.default_rng(E.substream(5, 1, 3)).random(3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["real_part", "imag_part"]))
def test_hadamard_test_gate_and_kraus_forms_agree(seed, kind):
    rng = np.random.default_rng(seed)
    d = 4
    rho = linalg.random_hermitian(d, rng)
    rho = rho @ rho
    rho /= np.trace(rho)
    W = linalg.random_unitary(d, rng)
    V = linalg.random_unitary(d, rng)
    povm = computational_povm(2)
    joint = E.hadamard_test_joint(kind, W, rho, V, povm)
    assert joint.sum() == pytest.approx(1.0, abs=1e-12)
    eff = np.einsum("ji,zjk,kl->zil", np.conj(V), povm.effects, V)
    np.testing.assert_allclose(E._joint_batch(kind, W[None], rho, eff)[0], joint, atol=1e-12)
    bias = joint[0].sum() - joint[1].sum()
    expect = np.trace(W @ rho)
    assert bias == pytest.approx(expect.real if kind == "real_part" else expect.imag, abs=1e-12)


@pytest.fixture(scope="module")
def instance():
    fam = HamiltonianFamily.from_letters(["ZI", "XY"], ["YX", "IZ"])
    model = ExactModel(fam, np.array([0.4, -0.3, 0.5, 0.2]))
    obs = Observable(np.array([0.9, -0.5, 0.2, -1.0]), computational_povm(2))
    return fam, model, obs


def _within(out, exact, k=4.0):
    se = out.per_shot_values.std(ddof=1) / np.sqrt(out.shots)
    return abs(out.mean - exact) <= k * se


def test_anticommutator_estimator_unbiased(instance):
    fam, model, obs = instance
    n = 200_000
    for j in range(fam.J):
        out = E.estimate_anticommutator_term(obs, model, j, E.ShotPlan(0.1, 0.05, n), 10 + j, keep_values=True)
        assert _within(out, anticommutator_term(obs, fam, model.gamma, j, model))


def test_commutator_estimator_unbiased(instance):
    fam, model, obs = instance
    n = 200_000
    for k in range(fam.K):
        out = E.estimate_commutator_term(obs, model, k, E.ShotPlan(0.1, 0.05, n), 20 + k, keep_values=True)
        assert _within(out, commutator_term(obs, fam, model.gamma, k, model))


def test_product_estimator_unbiased(instance):
    fam, model, obs = instance
    out = E.estimate_product_term(obs, model, 1, 100_000, 3, keep_values=True)
    exact = model.expectation(obs.matrix) * model.g_expect[1]
    assert _within(out, exact)


def test_estimator_threads_bit_identical(instance):
    fam, model, obs = instance
    plan = E.ShotPlan(0.1, 0.05, 3 * E.block_size(fam.dim) + 17)
    a = E.estimate_anticommutator_term(obs, model, 0, plan, 99, threads=1, check_plan=False)
    b = E.estimate_anticommutator_term(obs, model, 0, plan, 99, threads=3, check_plan=False)
    assert a.mean == b.mean


def test_plan_enforced_and_indices(instance):
    fam, model, obs = instance
    with pytest.raises(E.ShotPlanError):
        E.estimate_anticommutator_term(obs, model, 0, E.ShotPlan(0.1, 0.05, 10), 0)
    with pytest.raises(IndexError):
        E.estimate_commutator_term(obs, model, 5, E.ShotPlan(0.1, 0.05, 10_000), 0)
