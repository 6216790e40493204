import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdris_rsma.rsma_metrics import (BdRis, PrecoderSolution, cap_common_split, effective_channels,
                                     link_statistics, mse, optimal_equalizers, optimal_weights,
                                     power_terms, qos_satisfied, rate_report, saa_average_rates,
                                     saa_rate_report, sinr_and_rates, sum_rate_metric, wmmse_rate,
                                     wmmse_state)

from factories import cgauss, random_precoder, random_ris, sector_map

seeds = st.integers(0, 2 ** 31)


def _instance(seed, K=4, N=3, M=5, L=2, A=None):
    rng = np.random.default_rng(seed)
    shape = (K, N, M) if A is None else (K, A, N, M)
    return rng, cgauss(rng, shape), random_ris(rng, L, M), random_precoder(rng, N, K, 5.0), sector_map(K, L)


def test_zero_precoders_give_noise_only():
    rng, q, ris, _, sec = _instance(0)
    prec = PrecoderSolution(np.zeros(3, complex), np.zeros((3, 4), complex), np.zeros(4))
    st_ = link_statistics(q, ris, prec, np.full(4, 0.3), sec)
    for arr in (st_.tau_c, st_.tau_p, st_.iota_c, st_.iota_p):
        assert np.allclose(arr, 0.3)
    _, _, r_c, r_p = sinr_and_rates(st_)
    assert np.all(r_c == 0) and np.all(r_p == 0)


def test_single_user_private_interference_is_noise():
    rng, q, ris, prec, sec = _instance(1, K=1, L=1)
    st_ = link_statistics(q, ris, prec, np.array([0.7]), sec)
    assert st_.iota_p == pytest.approx([0.7])
    b = effective_channels(q, ris, sec)[0]
    assert st_.tau_c[0] == pytest.approx(abs(b.conj() @ prec.p_common) ** 2
                                         + abs(b.conj() @ prec.p_private[:, 0]) ** 2 + 0.7)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_structural_identities(seed):
    rng, q, ris, prec, sec = _instance(seed)
    s = link_statistics(q, ris, prec, np.full(4, 0.1), sec)
    assert np.allclose(s.iota_c, s.tau_p)
    assert np.allclose(s.tau_c - s.iota_c, np.abs(s.sig_c) ** 2)
    assert np.allclose(s.tau_p - s.iota_p, np.abs(s.sig_p) ** 2)
    assert np.all(s.tau_c >= s.tau_p) and np.all(s.tau_p >= s.iota_p)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_scalar_and_batched_terms_agree(seed):
    rng, q, ris, prec, sec = _instance(seed)
    s = link_statistics(q, ris, prec, np.full(4, 0.1), sec)
    for k in range(4):
        one = power_terms(ris.phi[sec[k]], q[k], prec, 0.1, k)
        assert one.tau_c == pytest.approx(s.tau_c[k])
        assert one.iota_p == pytest.approx(s.iota_p[k])
        assert one.sig_p == pytest.approx(s.sig_p[k])


def test_effective_channel_definition():
    rng, q, ris, prec, sec = _instance(3)
    b = effective_channels(q, ris, sec)
    for k in range(4):
        phi = ris.phi[sec[k]]
        assert np.allclose(b[k].conj() @ prec.p_common, phi @ q[k].conj().T @ prec.p_common)


def test_received_power_matches_monte_carlo():
    rng, q, ris, prec, sec = _instance(4, K=3)
    sigma2 = np.full(3, 0.5)
    s = link_statistics(q, ris, prec, sigma2, sec)
    b = effective_channels(q, ris, sec)
    T = 400_000
    x_c = cgauss(rng, T)
    x_p = cgauss(rng, (3, T))
    x = prec.p_common[:, None] * x_c + prec.p_private @ x_p
    for k in range(3):
        y = b[k].conj() @ x + cgauss(rng, T, np.sqrt(sigma2[k]))
        assert np.mean(np.abs(y) ** 2) == pytest.approx(s.tau_c[k], rel=0.01)


def test_rates_from_sinr_by_hand():
    b = np.array([[[1.0 + 0j]], [[1.0 + 0j]]])            # K=2, N=1
    ris = BdRis(np.ones((1, 1), complex))
    q = b[:, :, :, None][:, 0]                           # (K, N, M) with M=1
    prec = PrecoderSolution(np.array([2.0 + 0j]), np.array([[1.0 + 0j, 1.0 + 0j]]), np.zeros(2))
    s = link_statistics(q, ris, prec, np.ones(2), np.zeros(2, int))
    g_c, g_p, r_c, r_p = sinr_and_rates(s)
    # common: 4 / (1 + 1 + 1); private: 1 / (1 + 1)
    assert np.allclose(g_c, 4 / 3) and np.allclose(g_p, 0.5)
    assert np.allclose(r_c, np.log2(7 / 3)) and np.allclose(r_p, np.log2(1.5))


def test_unit_sinr_is_one_bit():
    s = link_statistics(np.ones((1, 1, 1), complex), BdRis(np.ones((1, 1), complex)),
                        PrecoderSolution(np.zeros(1, complex), np.ones((1, 1), complex), np.zeros(1)),
                        np.ones(1), np.zeros(1, int))
    assert sinr_and_rates(s)[3][0] == pytest.approx(1.0)


def test_saa_rates_are_sample_means():
    rng, q, ris, prec, sec = _instance(5, A=7)
    r_c, r_p = saa_average_rates(q, prec, ris, np.full(4, 0.2), sec)
    per = [sinr_and_rates(link_statistics(q[:, a], ris, prec, np.full(4, 0.2), sec)) for a in range(7)]
    assert np.allclose(r_c, np.mean([p[2] for p in per], axis=0))
    assert np.allclose(r_p, np.mean([p[3] for p in per], axis=0))


def test_saa_spread_shrinks_with_more_samples():
    rng = np.random.default_rng(6)
    K, N, M = 3, 3, 4
    q0 = cgauss(rng, (K, N, M))
    ris, prec, sec = random_ris(rng, 1, M), random_precoder(rng, N, K, 5.0), np.zeros(K, int)

    def spread(A):
        vals = []
        for _ in range(200):
            samples = q0[:, None] + 0.3 * cgauss(rng, (K, A, N, M))
            vals.append(saa_average_rates(samples, prec, ris, np.ones(K), sec)[1].sum())
        return np.var(vals)

    v10, v40 = spread(10), spread(40)
    assert v40 < v10
    assert v10 / v40 == pytest.approx(4.0, rel=0.45)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_mmse_at_optimal_equalizer(seed):
    rng, q, ris, prec, sec = _instance(seed, A=3)
    s = link_statistics(q, ris, prec, np.full(4, 0.2), sec)
    g_c, g_p = optimal_equalizers(s)
    gamma_c, gamma_p, _, _ = sinr_and_rates(s)
    e_c, e_p = mse(g_c, s.tau_c, s.sig_c), mse(g_p, s.tau_p, s.sig_p)
    assert np.allclose(e_c, 1 / (1 + gamma_c))
    assert np.allclose(e_p, 1 / (1 + gamma_p))
    for delta in (1e-3, -1e-3j, 0.1 + 0.1j):
        assert np.all(mse(g_c + delta, s.tau_c, s.sig_c) >= e_c - 1e-12)
        assert np.all(mse(g_p + delta, s.tau_p, s.sig_p) >= e_p - 1e-12)


def test_weights_and_surrogate_at_gamma_three():
    lam_c, lam_p = optimal_weights(np.array([3.0]), np.array([1.0]))
    assert lam_c[0] == 4.0 and lam_p[0] == 2.0
    assert wmmse_rate(4.0, 1 / 4) == pytest.approx(2.0)


@given(st.floats(0.0, 1e4))
def test_wmmse_surrogate_is_rate_at_optimum(gamma):
    lam, eps = 1 + gamma, 1 / (1 + gamma)
    assert wmmse_rate(lam, eps) == pytest.approx(np.log2(1 + gamma), abs=1e-9)
    # any other weight gives a lower value
    for other in (0.5 * lam, 2 * lam):
        assert wmmse_rate(other, eps) <= wmmse_rate(lam, eps) + 1e-12


def test_wmmse_state_reproduces_saa_rates():
    rng, q, ris, prec, sec = _instance(7, A=5)
    sig = np.full(4, 0.3)
    st_ = wmmse_state(q, ris, prec, sig, sec)
    s = link_statistics(q, ris, prec, sig, sec)
    eps_c = mse(st_.g_c, s.tau_c, s.sig_c)
    eps_p = mse(st_.g_p, s.tau_p, s.sig_p)
    r_c, r_p = saa_average_rates(q, prec, ris, sig, sec)
    assert np.allclose(wmmse_rate(st_.lambda_c, eps_c).mean(axis=1), r_c)
    assert np.allclose(wmmse_rate(st_.lambda_p, eps_p).mean(axis=1), r_p)


def test_user_permutation_invariance():
    rng, q, ris, prec, sec = _instance(8, A=4)
    sig = rng.uniform(0.1, 1.0, 4)
    perm = rng.permutation(4)
    pprec = PrecoderSolution(prec.p_common, prec.p_private[:, perm], prec.c_bar[perm])
    r_c, r_p = saa_average_rates(q, prec, ris, sig, sec)
    pr_c, pr_p = saa_average_rates(q[perm], pprec, ris, sig[perm], sec[perm])
    assert np.allclose(pr_c, r_c[perm]) and np.allclose(pr_p, r_p[perm])
    assert sum_rate_metric(pr_c, pr_p) == pytest.approx(sum_rate_metric(r_c, r_p))


def test_metric_and_common_cap():
    assert sum_rate_metric(np.array([2.0, 1.0]), np.array([0.5, 0.5])) == 2.0
    assert np.allclose(cap_common_split([1.0, 3.0], 2.0), [0.5, 1.5])
    assert np.allclose(cap_common_split([0.5, 0.5], 2.0), [0.5, 0.5])
    assert np.allclose(cap_common_split([-1e-9, 0.5], 0.1), [0.0, 0.1])


def test_rate_report_totals():
    rep = rate_report(np.array([1.0, 2.0]), np.array([0.3, 0.4]), np.array([0.8, 0.8]), "saa")
    assert np.allclose(rep.c_bar, [0.5, 0.5])
    assert rep.sum_rate == pytest.approx(1.7)
    assert qos_satisfied(rep, [0.8, 0.9]) and not qos_satisfied(rep, [0.9, 0.9])
    raw = rate_report(np.array([1.0, 2.0]), np.array([0.3, 0.4]), np.array([0.8, 0.8]), "saa", cap=False)
    assert raw.sum_rate == pytest.approx(2.3)


def test_saa_rate_report_basis():
    rng, q, ris, prec, sec = _instance(9, A=3)
    rep = saa_rate_report(q, prec, ris, np.ones(4), sec)
    assert rep.basis == "saa" and rep.per_user_total.shape == (4,)


def test_random_phases_unit_cells():
    ris = BdRis.random_phases(3, 10, np.random.default_rng(0))
    assert ris.cell_norm_error() < 1e-14
    assert np.allclose(np.abs(ris.phi), 1 / np.sqrt(3))
