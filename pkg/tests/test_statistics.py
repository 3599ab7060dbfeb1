import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gbsphase import (BinnedCounts, BinningSpec, FitGrid, GcpEstimate, InputModel,
                      TransmissionMatrix, chi_square, exact_gcp, fit_decoherence,
                      normalized_difference, output_covariance, z_statistic)
from gbsphase.simulate import Simulation
from gbsphase.errors import NumericalValidityError, ParameterError
from gbsphase.statistics import chi_square_terms

from conftest import lossy_network

TABLE = [(218, 53, 78), (143, 31, 50), (1861, 85, 221), (215, 74, 91), (171, 57, 72),
         (193, 40, 64), (151, 28, 49)]


def estimate(values, errors, n_r=16):
    values = np.asarray(values, dtype=float)
    return GcpEstimate(values, np.broadcast_to(np.asarray(errors, dtype=float), values.shape).copy(), n_r)


# -- z_statistic --------------------------------------------------------------

@pytest.mark.parametrize("ratio,k,expected", TABLE)
def test_table_conversions(ratio, k, expected):
    assert abs(z_statistic(ratio * k, k) - expected) <= 1


def test_documented_examples():
    assert z_statistic(1861 * 85, 85) == pytest.approx(221, abs=0.5)
    assert z_statistic(218 * 53, 53) == pytest.approx(78, abs=0.5)


@given(st.integers(10, 10_000))
def test_unit_ratio_gives_small_positive_z(k):
    assert z_statistic(k, k) == pytest.approx(np.sqrt(2 / (9 * k)))


@given(st.integers(10, 500), st.floats(0, 100), st.floats(0.001, 100))
def test_z_increases_with_ratio(k, a, delta):
    assert z_statistic(a * k, k) < z_statistic((a + delta) * k, k)


def test_zero_bins_rejected():
    with pytest.raises(NumericalValidityError):
        z_statistic(1.0, 0)


def test_small_k_warns():
    with pytest.warns(UserWarning, match="approximate"):
        z_statistic(5.0, 5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        z_statistic(10.0, 10)


# -- chi_square -----------------------------------------------------------------

def test_hand_evaluated_terms():
    terms = chi_square_terms([0.5, 0.5], [0.6, 0.4], [0.05 ** 2, 0.05 ** 2])
    assert terms.sum() == pytest.approx(8.0)
    assert len(terms) == 2


def test_identical_series_give_zero():
    n = 10_000
    p = np.array([0.2, 0.3, 0.5])
    rep = chi_square(estimate(p, 0.0), BinnedCounts(p * n, n))
    assert rep.chi2 == 0 and rep.k == 3 and rep.z < 0


def test_bins_with_ten_counts_excluded():
    counts = BinnedCounts([10, 11, 979], 1000)
    rep = chi_square(estimate([0.01, 0.011, 0.979], 1e-3), counts)
    assert rep.k == 2
    assert [b.bin for b in rep.per_bin] == [(1,), (2,)]


def test_report_fields():
    counts = BinnedCounts([[100, 200], [300, 400]], 1000)
    theory = estimate([[0.11, 0.19], [0.3, 0.4]], 0.002)
    rep = chi_square(theory, counts)
    assert rep.chi2_over_k == rep.chi2 / rep.k
    b = rep.per_bin[0]
    assert b.bin == (0, 0)
    assert b.sigma_E == pytest.approx(np.sqrt(0.11 / 1000))
    assert b.norm_diff == pytest.approx((0.11 - 0.1) / np.sqrt(0.002 ** 2 + 0.11 / 1000))
    assert rep.chi2 == pytest.approx(sum(x.norm_diff ** 2 for x in rep.per_bin))
    assert not rep.extreme


def test_extreme_flag():
    counts = BinnedCounts([500, 500], 1000)
    assert chi_square(estimate([0.9, 0.1], 1e-4), counts, min_count=10).extreme


def test_lattice_mismatch():
    with pytest.raises(ParameterError):
        chi_square(estimate([0.5, 0.5], 0.01), BinnedCounts([1, 2, 3], 6))


def test_no_valid_bins():
    with pytest.raises(NumericalValidityError):
        chi_square(estimate([0.5, 0.5], 0.01), BinnedCounts([5, 5], 10))


def test_undefined_theory_errors():
    with pytest.raises(NumericalValidityError):
        chi_square(estimate([0.5, 0.5], np.nan, n_r=1), BinnedCounts([50, 50], 100))


def test_non_positive_theory_falls_back_to_observed_frequency():
    rep = chi_square(estimate([-1e-4, 1.0], 1e-3), BinnedCounts([20, 980], 1000))
    assert rep.per_bin[0].sigma_E == pytest.approx(np.sqrt(0.02 / 1000))


def test_raw_count_array_accepted():
    rep = chi_square(estimate([0.5, 0.5], 0.01), np.array([40, 60]))
    assert rep.n_samples == 100 and rep.k == 2


def test_symmetric_in_series_with_equal_variances():
    a, b = np.array([0.2, 0.5, 0.3]), np.array([0.25, 0.45, 0.3])
    s2 = np.full(3, 1e-4)
    assert chi_square_terms(a, b, s2).sum() == pytest.approx(chi_square_terms(b, a, s2).sum())


def test_removing_a_bin_leaves_other_terms():
    theory = estimate([0.3, 0.3, 0.4], 0.01)
    full = chi_square(theory, BinnedCounts([280, 330, 390], 1000))
    reduced = chi_square(theory, BinnedCounts([280, 330, 390], 1000), min_count=285)
    kept = {b.bin: b.norm_diff for b in full.per_bin}
    for b in reduced.per_bin:
        assert b.norm_diff == kept[b.bin]
    assert reduced.k == 2


# -- normalized_difference ---------------------------------------------------------

def test_identical_inputs_normalized_zero():
    p = np.array([[0.25, 0.25], [0.5, 0.0]])
    nd = normalized_difference(estimate(p, 0.0), BinnedCounts(p * 400, 400))
    np.testing.assert_array_equal(nd.values, 0)


def test_normalized_difference_example():
    # sigma^2 = 0 + 0.5 / 200 = 0.05^2
    nd = normalized_difference(estimate([0.5, 0.5], 0.0), BinnedCounts([80, 120], 200))
    assert nd.values[0] == pytest.approx(2.0)
    assert nd.values[1] == pytest.approx(-2.0)


def test_normalized_difference_band_and_all_bins():
    theory = estimate([0.6, 0.3, 0.1], 0.01)
    nd = normalized_difference(theory, BinnedCounts([5, 300, 695], 1000))
    assert nd.values.shape == (3,)
    expected = 0.01 / np.sqrt(0.01 ** 2 + theory.values / 1000)
    np.testing.assert_allclose(nd.band, expected)


# -- fit_decoherence --------------------------------------------------------------

def exact_counts(model, T, n, seed=0):
    p = exact_gcp(output_covariance(model, T), BinningSpec.full(T.n_out))
    rs = np.random.default_rng(seed)
    return BinnedCounts(rs.multinomial(n, p / p.sum()), n)


@pytest.fixture(scope="module")
def small_network():
    return lossy_network(4, 2, seed=31, scale=0.9)


def test_self_fit_on_grid(small_network):
    base = InputModel([0.9, 1.1], epsilon=0.04, family="thermalized")
    counts = exact_counts(base, small_network, 400_000)
    grid = FitGrid((0.98, 0.99, 1.0, 1.01, 1.02), (0.0, 0.02, 0.04, 0.06, 0.08))
    fit = fit_decoherence(counts, base, small_network, grid, 20_000, 16, seed=1, refine=False)
    assert abs(fit.t - 1.0) <= 0.01 and abs(fit.epsilon - 0.04) <= 0.02
    assert not fit.refined and not fit.at_edge
    assert len(fit.corner_z) == 4
    lo, hi = fit.z_spread
    assert lo <= fit.report.z <= hi


def test_fit_recovers_injected_thermalization(small_network):
    truth = InputModel([0.9, 1.1], epsilon=0.04, family="thermalized")
    counts = exact_counts(truth, small_network, 1_000_000, seed=2)
    grid = FitGrid((0.98, 0.99, 1.0, 1.01, 1.02), (0.0, 0.02, 0.04, 0.06, 0.08))
    fit = fit_decoherence(counts, InputModel([0.9, 1.1]), small_network, grid, 25_000, 16, seed=3)
    assert fit.refined
    assert abs(fit.epsilon - 0.04) <= 0.005
    assert abs(fit.t - 1.0) <= 0.005


def test_fit_flags_grid_edge(small_network):
    base = InputModel([0.9, 1.1])
    counts = exact_counts(base, small_network, 200_000)
    grid = FitGrid((0.90, 0.92, 0.94), (0.0, 0.01, 0.02))
    fit = fit_decoherence(counts, base, small_network, grid, 5_000, 8, seed=4)
    assert fit.at_edge
    assert fit.t == 0.94


def test_fit_ties_prefer_unmodified_model():
    # vacuum inputs: every grid point predicts the same distribution
    vacuum = InputModel([0.0, 0.0])
    counts = BinnedCounts([1000, 0, 0], 1000)
    grid = FitGrid((0.98, 1.0, 1.02), (0.0, 0.05, 0.1))
    fit = fit_decoherence(counts, vacuum, TransmissionMatrix.identity(2), grid, 100, 4,
                          refine=False)
    assert (fit.t, fit.epsilon) == (1.0, 0.0)


def test_fit_report_belongs_to_optimum(small_network):
    base = InputModel([0.9, 1.1])
    counts = exact_counts(base, small_network, 200_000)
    grid = FitGrid((0.98, 1.0, 1.02), (0.0, 0.02, 0.04))
    fit = fit_decoherence(counts, base, small_network, grid, 2_000, 4, seed=6, refine=False)
    model = base.replace(t=fit.t, epsilon=fit.epsilon, family="thermalized")
    expected = chi_square(Simulation(model, small_network, 2_000, 4, 6).gcp(BinningSpec.full(4)),
                          counts)
    assert fit.report.chi2 == expected.chi2
    assert (fit.t, fit.epsilon) not in fit.corner_z


def test_fit_skips_amplifying_points():
    # lossless network: t > 1 would amplify and is never selected
    base = InputModel([0.8, 0.8])
    T = TransmissionMatrix.identity(2)
    counts = exact_counts(base.replace(t=0.99), T, 100_000)
    fit = fit_decoherence(counts, base, T, FitGrid((0.98, 0.99, 1.0, 1.01), (0.0,)), 2_000, 4)
    assert fit.t <= 1.0
    assert all(t <= 1.0 for t, _ in fit.corner_z)
    with pytest.raises(ParameterError, match="physical limit"):
        fit_decoherence(counts, base, T, FitGrid((1.01, 1.02), (0.0,)), 100, 2)


def test_fit_input_validation(small_network):
    counts = BinnedCounts(np.ones(5, dtype=int) * 100, 500)
    grid = FitGrid((1.0,), (0.0,))
    with pytest.raises(ParameterError):
        fit_decoherence(counts, InputModel([1.0, 1.0], family="squashed"), small_network, grid, 10, 2)
    with pytest.raises(ParameterError):
        fit_decoherence(BinnedCounts(np.ones((3, 3), dtype=int), 9), InputModel([1.0, 1.0]),
                        small_network, grid, 10, 2)


@pytest.mark.parametrize("t,e", [((), (0.0,)), ((1.0,), ()), ((0.0,), (0.0,)), ((1.0,), (1.5,))])
def test_grid_validation(t, e):
    with pytest.raises(ParameterError):
        FitGrid(t, e)


def test_grid_linspace_sorted():
    grid = FitGrid.linspace((1.02, 0.98, 5), (0.0, 0.1, 3))
    assert grid.t == tuple(sorted(grid.t)) and len(grid.epsilon) == 3
