import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from afdmsim.interference import ImpactClass
from afdmsim.spreading import EccParams
from afdmsim.throughput import (
    AnalyticContext,
    LinkBudget,
    ThroughputReport,
    ber_before_decoding,
    codeword_success,
    coefficient_F_derivs,
    F_and_derivs,
    feasible_set,
    grid_search,
    objective_derivatives,
    optimize_nd,
    packet_success,
    packet_throughput,
    packet_throughput_binomial_form,
    search_bracket,
)

ECC = EccParams(17, 31, 7)


def ctx_for(snr_db=-10.0, isr_db=8.0, impact=ImpactClass.STATIONARY, N=992, Ncp=69, L=3):
    return AnalyticContext(N, Ncp, 4, 544, ECC, L, impact, LinkBudget.from_db(snr_db, isr_db, N * 15e3))


def test_budget_validation_and_json():
    b = LinkBudget.from_db(-10, 8, 1e6)
    assert LinkBudget.from_json(b.to_json()) == b
    assert LinkBudget.from_db(0, None, 1.0).Pi == 0
    with pytest.raises(ValueError):
        LinkBudget(0, 1, 1, 1)
    with pytest.raises(ValueError):
        LinkBudget(1, -1, 1, 1)


def test_context_constants():
    c = ctx_for()
    assert c.G == 32 and c.M == 1984
    assert c.K == pytest.approx(544 * 31 * 1061 / (992 * 17 * 992 * 15e3 * 2))
    assert c.packet_time(16) == pytest.approx(16 * c.K)
    assert c.R(4000) == 1.0
    with pytest.raises(ValueError):
        AnalyticContext(992, 69, 4, 545, ECC, 3, ImpactClass.STATIONARY, c.budget)


def test_codeword_success_examples():
    assert codeword_success(0.0, ECC) == 1.0
    assert codeword_success(1.0, ECC) == 0.0
    exact = sum(math.comb(31, k) for k in range(8)) / 2**31
    assert codeword_success(0.5, ECC) == pytest.approx(exact, rel=1e-12)
    assert exact == pytest.approx(1.6634e-3, rel=1e-4)
    with pytest.raises(ValueError):
        codeword_success(1.5, ECC)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.sampled_from([(31, 7), (15, 3), (63, 10)]))
def test_codeword_success_matches_binomial_cdf(pe, code):
    No, Ne = code
    assert codeword_success(pe, EccParams(No - 2 * Ne if No > 2 * Ne else 1, No, Ne)) == pytest.approx(
        binom.cdf(Ne, No, pe), abs=1e-12
    )


def test_single_path_unit_snr_matches_rayleigh_bpsk():
    c = AnalyticContext(64, 8, 2, 544, ECC, 1, ImpactClass.STATIONARY, LinkBudget(1.0, 1.0, 0.0, 1.0))
    # gamma_in = 1 so Nd = gamma_in at Nd = 1
    assert ber_before_decoding(1, c) == pytest.approx(0.5 * (1 - math.sqrt(0.5)), rel=1e-12)
    rng = np.random.default_rng(0)
    n = 400_000
    h = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
    w = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
    ber = np.mean((np.conj(h) * (h + w)).real < 0)
    assert abs(ber - 0.5 * (1 - math.sqrt(0.5))) < 4 * math.sqrt(0.15 * 0.85 / n)


def test_ber_monotone_to_zero_and_bounded():
    c = ctx_for()
    vals = [ber_before_decoding(n, c) for n in np.logspace(0, 6, 40)]
    assert all(0 <= v <= 0.5 for v in vals)
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-6
    with pytest.raises(ValueError):
        ber_before_decoding(0.5, c)


def test_concentrated_without_interference_matches_stationary_for_large_nd():
    s = ctx_for(isr_db=None)
    m = ctx_for(isr_db=None, impact=ImpactClass.NON_STATIONARY)
    for Nd in (1000.0, 1984.0, 5000.0):
        assert ber_before_decoding(Nd, m) == pytest.approx(ber_before_decoding(Nd, s), rel=1e-2)


def test_throughput_forms_agree():
    for impact in ImpactClass:
        c = ctx_for(isr_db=12, impact=impact)
        for Nd in (4, 16, 64, 256):
            assert packet_throughput_binomial_form(Nd, c) == pytest.approx(packet_throughput(Nd, c), rel=1e-9)


def test_error_free_throughput_is_inverse_packet_time():
    c = AnalyticContext(992, 69, 4, 544, ECC, 3, ImpactClass.STATIONARY, LinkBudget(1.0, 0.0, 0.0, 992 * 15e3))
    assert packet_throughput(8, c) == pytest.approx(1 / c.packet_time(8))
    assert packet_success(8, c) == 1.0


def test_stationary_single_path_derivative_is_sqrt_form():
    c = ctx_for(L=1)
    g = c.gamma_in
    for Nd in (1.0, 30.0, 900.0):
        F, F1, F2 = F_and_derivs(Nd, c)
        assert F == pytest.approx(math.sqrt(Nd / (Nd + g)))
        assert F1 == pytest.approx(g / (2 * math.sqrt(Nd) * (Nd + g) ** 1.5))


@pytest.mark.parametrize("impact", list(ImpactClass))
def test_coefficient_route_matches_log_derivative_route(impact):
    c = ctx_for(isr_db=15, impact=impact)
    for Nd in np.logspace(0, math.log10(c.M) - 0.01, 25):
        _, F1, F2 = F_and_derivs(Nd, c)
        P1, P2 = coefficient_F_derivs(Nd, c)
        assert P1 == pytest.approx(F1, rel=1e-9)
        assert P2 == pytest.approx(F2, rel=1e-9, abs=1e-300)


def test_literal_concentrated_coefficients_are_not_the_derivative():
    c = ctx_for(isr_db=15, impact=ImpactClass.NON_STATIONARY)
    _, _, F2 = F_and_derivs(50.0, c)
    _, L2 = coefficient_F_derivs(50.0, c, literal=True)
    assert abs(L2 - F2) > 1e-3 * abs(F2)


def test_f1_positive_on_bracket():
    for isr in (0, 10, 20, 30):
        c = ctx_for(isr_db=isr)
        lo, hi = search_bracket(c)
        for Nd in np.linspace(max(lo, 1), hi, 50):
            assert F_and_derivs(Nd, c)[1] > 0


def test_objective_derivatives_match_finite_differences():
    c = ctx_for(isr_db=12)
    for Nd in (20.0, 60.0, 200.0):
        d = objective_derivatives(Nd, c)
        h = 1e-4 * Nd
        up, dn = objective_derivatives(Nd + h, c), objective_derivatives(Nd - h, c)
        assert d.U == pytest.approx((up.eta - dn.eta) / (2 * h), rel=1e-5)
        assert d.dU == pytest.approx((up.U - dn.U) / (2 * h), rel=1e-4)
        assert d.newton_step == pytest.approx(-d.U / d.dU, rel=1e-9)


def test_noise_free_budget_short_circuits():
    c = AnalyticContext(256, 18, 4, 544, ECC, 3, ImpactClass.STATIONARY, LinkBudget(1.0, 0.0, 0.0, 256 * 15e3))
    r = optimize_nd(c)
    assert r.Nd_opt == 1 and r.iterations == 0


def test_high_snr_without_interference_picks_small_nd():
    c = ctx_for(snr_db=30, isr_db=None)
    r = optimize_nd(c)
    assert r.Nd_opt == int(feasible_set(c)[0])


def test_paper_config_isr20_matches_grid():
    c = ctx_for(isr_db=20)
    r = optimize_nd(c)
    _, eta = grid_search(c, feasible_set(c, upper=4096))
    assert r.eta_opt >= 0.999 * eta
    assert r.iterations <= 20
    assert isinstance(r, ThroughputReport) and r.to_json()


def test_matched_sweep_throughput_nearly_flat():
    etas = [optimize_nd(ctx_for(snr_db=4.3255, isr_db=i, impact=ImpactClass.NON_STATIONARY)).eta_opt for i in range(8, 31, 2)]
    assert (max(etas) - min(etas)) / max(etas) <= 0.01


@settings(max_examples=25, deadline=None)
@given(
    st.floats(-15, 10),
    st.floats(-10, 30),
    st.sampled_from(list(ImpactClass)),
    st.sampled_from([(256, 18), (992, 69)]),
)
def test_optimizer_tracks_grid_oracle(snr, isr, impact, dims):
    c = ctx_for(snr, isr, impact, *dims)
    r = optimize_nd(c)
    n_grid, eta_grid = grid_search(c, feasible_set(c))
    assert r.eta_opt >= 0.999 * eta_grid
    assert r.iterations <= 20
    assert r.Nd_opt in set(feasible_set(c))


def test_nd_opt_nondecreasing_in_interference():
    nds = [optimize_nd(ctx_for(isr_db=i)).Nd_opt for i in (0, 10, 20, 30)]
    assert nds == sorted(nds)


def test_unconstrained_search():
    c = ctx_for(isr_db=10)
    r = optimize_nd(c, constrained=False)
    n, eta = grid_search(c, feasible_set(c, constrained=False))
    assert r.eta_opt >= 0.999 * eta
