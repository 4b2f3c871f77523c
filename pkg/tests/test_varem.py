import math

import numpy as np
import pytest
from conftest import (
    random_instance,
    ref_label_functions,
    ref_log_marginal,
    ref_loglik,
    ref_posterior_marginals,
    two_cliques,
)
from hypothesis import given, settings
from hypothesis import strategies as st

from varsbm import varem
from varsbm.errors import NumericalError, ParameterError
from varsbm.harness import Q_ASSORTATIVE
from varsbm.likelihood import log_complete_likelihood, log_likelihood_conditional, profile_q
from varsbm.netcore import SbmParams, full_mask, generate_mask, generate_sbm
from varsbm.varem import EmConfig, e_step, elbo, fit_varem, hard_to_soft, init_tau, m_step

THIRDS = np.full(3, 1 / 3)


def _random_tau(rng, n, k):
    return rng.dirichlet(np.ones(k), size=n)


def _ref_kl_to_posterior(a, x, tau, alpha, q):
    """KL(prod_i tau_i || p(z | A)) by enumerating every label function."""
    n, k = tau.shape
    log_ml = ref_log_marginal(a, x, alpha, q)
    kl = 0.0
    for z in ref_label_functions(n, k):
        log_qz = sum(math.log(tau[i, z[i]]) for i in range(n))
        log_post = sum(math.log(alpha[c]) for c in z) + ref_loglik(a, x, z, q) - log_ml
        kl += math.exp(log_qz) * (log_qz - log_post)
    return kl, log_ml


def test_elbo_single_community(rng):
    z, a, x, _, _ = random_instance(rng, 10, 1)
    assert elbo(a, x, np.ones((10, 1)), [1.0], [[0.3]]) == pytest.approx(
        log_likelihood_conditional(a, x, z, [[0.3]]), abs=1e-12)


def test_elbo_one_hot_is_complete_likelihood(rng):
    z, a, x, alpha, q = random_instance(rng, 12, 3)
    tau = np.eye(3)[z]
    assert elbo(a, x, tau, alpha, q) == pytest.approx(log_complete_likelihood(a, x, z, alpha, q), abs=1e-10)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_elbo_is_marginal_minus_kl(seed):
    rng = np.random.default_rng(seed)
    _, a, x, alpha, q = random_instance(rng, 5, 2)
    tau = _random_tau(rng, 5, 2)
    kl, log_ml = _ref_kl_to_posterior(a, x, tau, alpha, q)
    assert elbo(a, x, tau, alpha, q) == pytest.approx(log_ml - kl, abs=1e-10)
    post = ref_posterior_marginals(a, x, alpha, q)
    assert elbo(a, x, post, alpha, q) <= log_ml + 1e-9


def test_elbo_tight_when_posterior_factorises(rng):
    _, a, x, alpha, _ = random_instance(rng, 5, 2)
    # with a constant q the labels carry no information: posterior = prior
    q = np.full((2, 2), 0.37)
    post = ref_posterior_marginals(a, x, alpha, q)
    assert np.allclose(post, alpha)
    assert elbo(a, x, post, alpha, q) == pytest.approx(ref_log_marginal(a, x, alpha, q), abs=1e-10)
    empty = np.zeros_like(x)
    assert elbo(a, empty, ref_posterior_marginals(a, empty, alpha, q), alpha, [[0.2, 0.6], [0.6, 0.9]]) == \
        pytest.approx(0.0, abs=1e-12)


def test_elbo_permutation_equivariant(rng):
    _, a, x, alpha, q = random_instance(rng, 9, 3)
    tau = _random_tau(rng, 9, 3)
    sigma = rng.permutation(3)
    tau_p = np.empty_like(tau)
    tau_p[:, sigma] = tau
    alpha_p = np.empty_like(alpha)
    alpha_p[sigma] = alpha
    q_p = np.empty_like(q)
    q_p[np.ix_(sigma, sigma)] = q
    assert elbo(a, x, tau_p, alpha_p, q_p) == pytest.approx(elbo(a, x, tau, alpha, q), abs=1e-10)


def test_e_step_single_community(rng):
    _, a, x, _, _ = random_instance(rng, 8, 1)
    assert np.array_equal(e_step(a, x, np.ones((8, 1)), [1.0], [[0.4]]), np.ones((8, 1)))


def test_e_step_without_evidence_returns_prior(rng):
    _, a, _, alpha, q = random_instance(rng, 8, 3)
    tau = e_step(a, np.zeros((8, 8)), _random_tau(rng, 8, 3), alpha, q)
    assert np.allclose(tau, np.tile(alpha, (8, 1)), atol=1e-14)


def test_e_step_rows_normalised_and_floored(rng):
    _, a, x, alpha, q = random_instance(rng, 40, 3, p=1.0)
    tau = e_step(a, x, _random_tau(rng, 40, 3), alpha, q, sweeps=5)
    assert np.all(np.abs(tau.sum(axis=1) - 1) <= 1e-10)
    assert tau.min() >= varem.TAU_FLOOR


def test_e_step_fixed_point_is_rowwise_stationary():
    rng = np.random.default_rng(5)
    _, a, x, alpha, q = random_instance(rng, 5, 2, p=0.9, q=np.array([[0.6, 0.3], [0.3, 0.5]]))
    tau = e_step(a, x, _random_tau(rng, 5, 2), alpha, q, sweeps=500)
    base = elbo(a, x, tau, alpha, q)
    for i in range(5):
        for step in (1e-6, -1e-6):
            t = tau.copy()
            t[i, 0] += step
            t[i, 1] -= step
            if t.min() < 0:
                continue
            assert elbo(a, x, t, alpha, q) <= base + 1e-13


def test_e_step_never_decreases_elbo(rng):
    _, a, x, alpha, q = random_instance(rng, 30, 3)
    tau = _random_tau(rng, 30, 3)
    before = elbo(a, x, tau, alpha, q)
    assert elbo(a, x, e_step(a, x, tau, alpha, q), alpha, q) >= before - 1e-10


def test_e_step_argument_checks(rng):
    _, a, x, alpha, q = random_instance(rng, 6, 2)
    with pytest.raises(ParameterError):
        e_step(a, x, np.ones((6, 2)), alpha, q)
    with pytest.raises(ParameterError):
        e_step(a, x, np.full((6, 2), 0.5), alpha, q, damping=1.0)


def test_m_step_one_hot(rng):
    z, a, x, _, _ = random_instance(rng, 20, 3)
    alpha, q = m_step(a, x, np.eye(3)[z])
    assert np.allclose(alpha, np.bincount(z, minlength=3) / 20)
    assert np.allclose(q, np.clip(profile_q(a, x, z, k=3), 1e-9, 1 - 1e-9))


def test_m_step_uniform_tau(rng):
    _, a, x, _, _ = random_instance(rng, 20, 3)
    alpha, q = m_step(a, x, np.full((20, 3), 1 / 3))
    assert np.allclose(alpha, 1 / 3)
    assert np.allclose(q, (a * x).sum() / x.sum())


def test_m_step_maximises_elbo_on_grid():
    rng = np.random.default_rng(12)
    _, a, x, _, _ = random_instance(rng, 7, 2, p=0.9)
    tau = _random_tau(rng, 7, 2)
    alpha, q = m_step(a, x, tau)
    best = elbo(a, x, tau, alpha, q)
    for d in (-0.01, 0.01):
        al = alpha + np.array([d, -d])
        if al.min() > 0:
            assert elbo(a, x, tau, al, q) <= best + 1e-12
        for r, s in [(0, 0), (0, 1), (1, 1)]:
            qq = q.copy()
            qq[r, s] = qq[s, r] = q[r, s] + d
            if 0 < qq[r, s] < 1:
                assert elbo(a, x, tau, alpha, qq) <= best + 1e-12


def test_hard_to_soft():
    tau = hard_to_soft(np.array([0, 2, 1]), 3)
    assert np.allclose(tau.sum(axis=1), 1) and np.array_equal(tau.argmax(axis=1), [0, 2, 1])


def test_init_separates_cliques():
    a, z = two_cliques(10)
    tau = init_tau(a, full_mask(20), 2, seed=0)
    labels = tau.argmax(axis=1)
    assert len(set(labels[:10])) == 1 and len(set(labels[10:])) == 1 and labels[0] != labels[10]


def test_init_single_community_and_determinism(rng):
    _, a, x, _, _ = random_instance(rng, 30, 3)
    assert np.array_equal(init_tau(a, x, 1, seed=0), np.ones((30, 1)))
    assert np.array_equal(init_tau(a, x, 3, seed=4), init_tau(a, x, 3, seed=4))
    with pytest.raises(ParameterError):
        init_tau(a, x, 31)


@pytest.fixture(scope="module")
def planted():
    params = SbmParams(THIRDS, Q_ASSORTATIVE)
    z, a, _ = generate_sbm(params, 300, seed=123)
    x = generate_mask(300, 0.5, seed=124)
    return z, a, x, params


def test_fit_beats_uniform_start(planted):
    z, a, x, _ = planted
    fit = fit_varem(a, x, 3, EmConfig(seed=1))
    uniform = np.full((300, 3), 1 / 3)
    al, q = m_step(a, x, uniform)
    assert fit.elbo > elbo(a, x, uniform, al, q)


def test_fit_invariants(planted):
    z, a, x, _ = planted
    fit = fit_varem(a, x, 3, EmConfig(seed=2, restarts=3))
    diffs = np.diff(fit.elbo_trace)
    assert np.all(diffs >= -1e-8)
    assert np.all(np.abs(fit.tau.sum(axis=1) - 1) <= 1e-10) and fit.tau.min() >= varem.TAU_FLOOR
    assert abs(fit.alpha.sum() - 1) < 1e-12
    assert np.array_equal(fit.q, fit.q.T) and fit.q.min() > 0 and fit.q.max() < 1
    assert fit.elbo == pytest.approx(elbo(a, x, fit.tau, fit.alpha, fit.q), abs=1e-8)
    assert 0 <= fit.restart_index < 3 and len(fit.elbo_trace) == fit.iterations + 1


def test_fit_is_deterministic(planted):
    _, a, x, _ = planted
    f1 = fit_varem(a, x, 3, EmConfig(seed=9, restarts=2))
    f2 = fit_varem(a, x, 3, EmConfig(seed=9, restarts=2))
    assert np.array_equal(f1.tau, f2.tau) and f1.elbo_trace == f2.elbo_trace


def test_fit_single_community(rng):
    _, a, x, _, _ = random_instance(rng, 25, 2)
    fit = fit_varem(a, x, 1)
    assert fit.iterations == 1 and fit.converged
    assert fit.q[0, 0] == pytest.approx((a * x).sum() / x.sum())


def test_fit_dominates_planted_complete_likelihood():
    params = SbmParams(THIRDS, Q_ASSORTATIVE)
    gaps = []
    for s in range(20):
        z, a, _ = generate_sbm(params, 200, seed=1000 + s)
        x = generate_mask(200, 0.5, seed=2000 + s)
        fit = fit_varem(a, x, 3, EmConfig(seed=s))
        gaps.append(fit.elbo - log_complete_likelihood(a, x, z, params.alpha, params.q))
    assert np.median(gaps) >= 0


def test_failed_restarts_are_discarded(monkeypatch, rng):
    _, a, x, _, _ = random_instance(rng, 20, 2)
    real = varem._run_em

    def flaky(xa, xn, tau, fallback, cfg, restart):
        if restart == 0:
            raise NumericalError("restart 0: injected")
        return real(xa, xn, tau, fallback, cfg, restart)

    monkeypatch.setattr(varem, "_run_em", flaky)
    fit = fit_varem(a, x, 2, EmConfig(restarts=3))
    assert fit.restart_index in (1, 2)

    def broken(*args):
        raise NumericalError("injected")

    monkeypatch.setattr(varem, "_run_em", broken)
    with pytest.raises(NumericalError, match="all restarts failed"):
        fit_varem(a, x, 2, EmConfig(restarts=2))


@pytest.mark.parametrize("kwargs", [
    dict(max_iter=0), dict(tol=0.0), dict(restarts=0), dict(damping=1.0), dict(fixed_point_sweeps=0),
])
def test_em_config_validation(kwargs):
    with pytest.raises(ParameterError):
        EmConfig(**kwargs)


def test_damping_keeps_monotone_trace(planted):
    _, a, x, _ = planted
    fit = fit_varem(a, x, 3, EmConfig(seed=3, restarts=1, damping=0.5))
    assert np.all(np.diff(fit.elbo_trace) >= -1e-8)
