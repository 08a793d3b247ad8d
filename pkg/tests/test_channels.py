import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats
from scipy.linalg import expm

from eqbm import channels as C
from eqbm import linalg
from eqbm.model import HamiltonianFamily, computational_povm, model_state


def hhat_closed(gap):
    x = gap / 2
    return 1.0 if x == 0 else np.tanh(x) / x


def test_tent_density_normalised_and_singular():
    total = 2 * (integrate.quad(C.tent_density, 0, 1, limit=200)[0] + integrate.quad(C.tent_density, 1, 40)[0])
    assert total == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        C.tent_density(0.0)
    assert C.tent_density(-0.3) == C.tent_density(0.3)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 8))
def test_abs_cdf_matches_quadrature(t):
    ref = 2 * integrate.quad(C.tent_density, 0, t, limit=200)[0]
    assert C.tent_abs_cdf(t) == pytest.approx(ref, abs=1e-9)


def test_sampler_follows_density():
    s = C.default_tent_sampler()
    draws = s.sample(np.random.default_rng(1), 50000)
    res = stats.kstest(np.abs(draws), lambda t: C.tent_abs_cdf(t))
    assert res.pvalue > 1e-3
    assert abs(np.mean(draws > 0) - 0.5) < 0.01
    assert s.cdf_at(0.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        C.build_tent_sampler(resolution=100)


@settings(max_examples=40, deadline=None)
@given(st.one_of(st.floats(0, 40), st.floats(40, 1e6)))
def test_spectral_weight_matches_closed_form(gap):
    assert C.tent_spectral_weight(gap) == pytest.approx(hhat_closed(gap), abs=1e-10)


def test_psi_kernel_small_gap_continuity():
    assert C.psi_kernel(0.0) == 1.0
    np.testing.assert_allclose(C.psi_kernel(1e-9), C.psi_kernel(0.0), atol=1e-8)
    d = 0.7
    t = np.linspace(0, 1, 20001)
    ref = np.trapezoid(np.exp(-1j * d * t), t)
    assert abs(C.psi_kernel(d) - ref) < 1e-8


def test_psi_channel_matches_time_average():
    rng = np.random.default_rng(4)
    H, X = linalg.random_hermitian(3, rng), linalg.random_hermitian(3, rng)
    ts = np.linspace(0, 1, 2001)
    frames = np.array([expm(-1j * H * t) @ X @ expm(1j * H * t) for t in ts])
    ref = np.trapezoid(frames, ts, axis=0)
    np.testing.assert_allclose(C.psi_channel_exact(X, H), ref, atol=1e-6)


def test_phi_channel_identity_on_commuting():
    Z = np.diag([1.0, -1.0])
    np.testing.assert_allclose(C.phi_channel_exact(Z, 0.8 * Z), Z, atol=1e-14)


def _fd_expectation(fam, gamma, O, m, h=1e-5):
    e = np.zeros(len(gamma))
    e[m] = h
    f = lambda g: np.real(np.trace(O @ model_state(fam, g)[1].matrix))
    return (f(gamma + e) - f(gamma - e)) / (2 * h)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exact_partials_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    fam = HamiltonianFamily.from_letters(
        ["".join(rng.choice(list("IXYZ"), 2)) for _ in range(2)], ["".join(rng.choice(list("XYZ"), 2))])
    gamma = rng.uniform(-1, 1, fam.M)
    obs = C.Observable(rng.normal(size=4), computational_povm(2))
    model = C.ExactModel(fam, gamma)
    for j in range(fam.J):
        assert C.exact_partial_theta(obs, fam, gamma, j, model) == pytest.approx(
            _fd_expectation(fam, gamma, obs.matrix, j), abs=1e-7)
    assert C.exact_partial_phi(obs, fam, gamma, 0, model) == pytest.approx(
        _fd_expectation(fam, gamma, obs.matrix, fam.J), abs=1e-7)
    jac = model.born_jacobian(obs.povm)
    np.testing.assert_allclose(jac.sum(axis=0), 0.0, atol=1e-12)


def test_commuting_mu_is_minus_one():
    fam = HamiltonianFamily.from_letters(["Z"], [])
    obs = C.Observable(np.array([1.0, -1.0]), computational_povm(1))
    assert C.anticommutator_term(obs, fam, [1.0], 0) == pytest.approx(-1.0, abs=1e-14)
    assert C.commutator_term(obs, HamiltonianFamily.from_letters(["Z"], ["Z"]), [1.0, 0.3], 0) == pytest.approx(
        0.0, abs=1e-14)


def test_index_errors():
    fam = HamiltonianFamily.from_letters(["Z"], [])
    obs = C.Observable(np.array([1.0, -1.0]), computational_povm(1))
    with pytest.raises(IndexError):
        C.anticommutator_term(obs, fam, [1.0], 1)
    with pytest.raises(IndexError):
        C.exact_partial_phi(obs, fam, [1.0], 0)
    with pytest.raises(ValueError):
        C.Observable(np.ones(3), computational_povm(1))
