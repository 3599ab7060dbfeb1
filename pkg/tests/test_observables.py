import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from gbsphase import (BinningSpec, InputModel, Simulation, TransmissionMatrix, apply_network,
                      bin_count, click_probabilities, cumulants_low_order, gcp,
                      intensity_correlation, marginal_moment, permutation_count,
                      sample_input_ensemble)
from gbsphase.errors import ParameterError, UnsupportedOrderError
from gbsphase.inputs import AmplitudeEnsemble
from gbsphase.observables import distinct_orders, hermitian_part, repeat_statistics
from gbsphase.oracle import exact_distribution, output_covariance

from conftest import BEAMSPLITTER, lossy_network

P0_R1 = 1 / np.cosh(1.0)


def sim(r, T=None, n_s=20_000, n_r=16, seed=0, **kw):
    model = InputModel(r, **kw)
    T = T if T is not None else TransmissionMatrix.identity(model.n_modes)
    return Simulation(model, T, n_s, n_r, seed)


# -- binning -----------------------------------------------------------------

def test_parse_and_format_round_trip():
    spec = BinningSpec.parse("0-3,5;4,6-7", 8)
    assert spec.subsets == ((0, 1, 2, 3, 5), (4, 6, 7))
    assert spec.format() == "0-3,5;4,6-7"
    assert BinningSpec.parse(spec.format(), 8) == spec


def test_equal_split_parse():
    assert BinningSpec.parse("equal-split", 6, 3) == BinningSpec(((0, 1), (2, 3), (4, 5)))
    with pytest.raises(ParameterError):
        BinningSpec.parse("equal-split", 7, 2)


@pytest.mark.parametrize("text", ["0-2;2-3", "0,0", "0-9", "a-b", ";"])
def test_invalid_specs(text):
    with pytest.raises(ParameterError):
        BinningSpec.parse(text, 4)


def test_group_count_must_match_d():
    with pytest.raises(ParameterError):
        BinningSpec.parse("0-1;2-3", 4, d=3)


def test_spec_geometry():
    spec = BinningSpec(((0, 2), (1,), (3, 4, 5)))
    assert spec.d == 3 and spec.sizes == (2, 1, 3) and spec.shape == (3, 2, 4) and spec.order == 6


def test_bin_count_full_scale():
    assert bin_count(BinningSpec.equal_split(144, 2)) == 73 ** 2 == 5329


def test_permutation_counts():
    assert permutation_count(4, 2) == 3
    assert permutation_count(144, 1) == 1
    assert permutation_count(6, 2) == 10
    with pytest.raises(ParameterError):
        permutation_count(5, 2)


@given(st.integers(1, 40), st.integers(1, 5))
def test_bin_count_matches_formula(m, d):
    assume(m % d == 0)
    assert bin_count(BinningSpec.equal_split(m, d)) == (m // d + 1) ** d


# -- repeat statistics ------------------------------------------------------

def test_two_repeat_error():
    mean, err = repeat_statistics([[0.3], [0.5]])
    assert mean[0] == pytest.approx(0.4) and err[0] == pytest.approx(0.1)


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30))
def test_error_matches_uncentered_form(vals):
    g = np.array(vals)
    n = g.size
    _, err = repeat_statistics(g)
    raw = max((np.sum(g ** 2) - g.sum() ** 2 / n) / (n * (n - 1)), 0.0)
    assert err == pytest.approx(np.sqrt(raw), rel=1e-6, abs=1e-6)


def test_single_repeat_has_undefined_error():
    _, err = repeat_statistics([[1.0, 2.0]])
    assert np.all(np.isnan(err))


# -- click probabilities ----------------------------------------------------

def test_click_probability_limits():
    alpha = np.array([[0.0, 40.0]], dtype=complex)
    ens = AmplitudeEnsemble(alpha, alpha.conj(), 0.0, 2, 1, classical=True)
    p = click_probabilities(ens)
    assert p[0, 0] == 0 and p[0, 1] == pytest.approx(1.0)


def test_single_mode_vacuum_probability():
    ens = sample_input_ensemble(InputModel([1.0]), 62_500, 16, 11)
    p0 = (1 - click_probabilities(ens)).real.reshape(16, -1).mean(axis=1)
    mean, err = repeat_statistics(p0)
    assert abs(mean - P0_R1) < 3 * err


# -- gcp ---------------------------------------------------------------------

def test_vacuum_gcp_is_indicator():
    est = sim([0.0, 0.0], T=lossy_network(4, 2, 1), n_s=100, n_r=4).gcp(BinningSpec.equal_split(4, 2))
    expected = np.zeros((3, 3))
    expected[0, 0] = 1
    np.testing.assert_allclose(est.values, expected, atol=1e-15)


def test_single_mode_gcp():
    est = sim([1.0], n_s=62_500, seed=2).gcp(BinningSpec.full(1))
    assert est.shape == (2,)
    assert np.all(np.abs(est.values - [P0_R1, 1 - P0_R1]) < 3 * est.errors)


def test_full_scale_lattice_shape():
    s = Simulation(InputModel(np.full(144, 0.3)), TransmissionMatrix.identity(144), 50, 2, 0)
    assert s.gcp(BinningSpec.equal_split(144, 2)).shape == (73, 73)


@pytest.fixture(scope="module")
def lossy_sim():
    return sim([0.9, 0.6, 1.1], T=lossy_network(6, 3, seed=9), n_s=10_000, seed=4)


def test_normalization(lossy_sim):
    for spec in (BinningSpec.full(6), BinningSpec.equal_split(6, 2), BinningSpec.equal_split(6, 3)):
        est = lossy_sim.gcp(spec)
        combined = np.sqrt((est.errors ** 2).sum())
        assert abs(est.values.sum() - 1) <= max(3 * combined, 1e-12)
        assert np.all(est.values >= -3 * est.errors - 1e-15)


def test_marginal_consistency(lossy_sim):
    two = lossy_sim.gcp(BinningSpec.equal_split(6, 2))
    one = lossy_sim.gcp(BinningSpec(((0, 1, 2),)))
    np.testing.assert_allclose(two.values.sum(axis=1), one.values, atol=1e-12)


def test_partial_coverage_spec(lossy_sim):
    est = lossy_sim.gcp(BinningSpec(((5, 1),)))
    assert est.shape == (3,)
    assert est.values.sum() == pytest.approx(1.0, abs=1e-12)


def test_dft_round_trip(lossy_sim):
    est = lossy_sim.gcp(BinningSpec.equal_split(6, 2))
    forward = np.fft.fftn(est.values)
    expected = hermitian_part(est.fourier)
    np.testing.assert_allclose(forward, expected, rtol=1e-10, atol=1e-12)


def test_total_count_permutation_invariance(lossy_sim):
    spec = BinningSpec.full(6)
    base = lossy_sim.gcp(spec)
    perm = lossy_sim.permuted([3, 5, 0, 1, 4, 2]).gcp(spec)
    np.testing.assert_allclose(perm.values, base.values, atol=1e-13)


def test_in_memory_ensemble_matches_streamed_simulation():
    T = lossy_network(4, 2, seed=3)
    model = InputModel([0.8, 1.0])
    ens = apply_network(T, sample_input_ensemble(model, 3000, 4, 21))
    spec = BinningSpec.equal_split(4, 2)
    a = gcp(ens, spec)
    b = Simulation(model, T, 3000, 4, 21).gcp(spec)
    np.testing.assert_array_equal(a.values, b.values)


def test_threads_do_not_change_results():
    T = lossy_network(4, 2, seed=3)
    model = InputModel([0.8, 1.0])
    spec = BinningSpec.equal_split(4, 2)
    a = Simulation(model, T, 2000, 6, 5).gcp(spec)
    b = Simulation(model, T, 2000, 6, 5, threads=3).gcp(spec)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.errors, b.errors)


def test_gcp_rejects_non_normal_order():
    with pytest.raises(UnsupportedOrderError):
        sim([1.0], sigma=0.5, n_s=10, n_r=2).gcp(BinningSpec.full(1))


def test_gcp_spec_out_of_range():
    with pytest.raises(ParameterError):
        sim([1.0], n_s=10, n_r=2).gcp(BinningSpec(((0, 1),)))


def test_gcp_matches_exact_distribution():
    T = TransmissionMatrix(BEAMSPLITTER)
    model = InputModel([1.0, 0.0])
    est = Simulation(model, T, 50_000, 16, 8).gcp(BinningSpec(((0,), (1,))))
    probs = exact_distribution(output_covariance(model, T))
    exact = np.array([[probs[0], probs[2]], [probs[1], probs[3]]])
    assert np.all(np.abs(est.values - exact) < 4 * est.errors)


# -- moments -----------------------------------------------------------------

def test_vacuum_correlation_is_zero():
    s = sim([0.0, 0.0], T=TransmissionMatrix(BEAMSPLITTER), n_s=100, n_r=2)
    assert s.intensity_correlation([1, 1]).mean == 0


def test_identity_two_mode_correlation():
    est = sim([1.0, 1.0], n_s=62_500, seed=3).intensity_correlation([1, 1])
    assert abs(est.mean - np.sinh(1.0) ** 4) < 3 * est.error
    assert np.sinh(1.0) ** 4 == pytest.approx(1.9074, abs=5e-5)


def test_positive_p_has_smallest_error_at_order_eight():
    errs = {}
    for sigma in (0.0, 0.5, 1.0):
        s = sim(np.ones(8), n_s=25_000, seed=12, sigma=sigma)
        errs[sigma] = s.intensity_correlation(np.ones(8, dtype=int)).error
    assert errs[0.0] < errs[0.5] and errs[0.0] < errs[1.0]


def test_orderings_agree_on_unitary_network():
    T = TransmissionMatrix(BEAMSPLITTER)
    ests = [sim([0.8, 0.5], T=T, n_s=50_000, seed=6, sigma=s).intensity_correlation([1, 1])
            for s in (0.0, 0.5, 1.0)]
    for a in ests:
        for b in ests:
            assert abs(a.mean - b.mean) <= 5 * np.hypot(a.error, b.error)


def test_second_order_single_mode_normal_moment():
    # <a+^2 a^2> = 2 n^2 + m^2 = 3 n^2 + n for a pure squeezed mode
    n = np.sinh(0.6) ** 2
    est = sim([0.6], n_s=62_500, seed=7).intensity_correlation([2])
    assert abs(est.mean - (3 * n ** 2 + n)) < 3 * est.error


def test_higher_powers_need_normal_order():
    with pytest.raises(UnsupportedOrderError):
        sim([1.0], sigma=1.0, n_s=10, n_r=2).intensity_correlation([2])


def test_orders_validation():
    s = sim([1.0, 1.0], n_s=10, n_r=2)
    with pytest.raises(ParameterError):
        s.intensity_correlation([1])
    with pytest.raises(ParameterError):
        s.intensity_correlation([1, -1])


def test_distinct_orders():
    np.testing.assert_array_equal(distinct_orders(5, [0, 3]), [1, 0, 0, 1, 0])


def test_marginal_moments():
    assert sim([0.0], n_s=100, n_r=2).marginal_moment([0]).mean == 0
    one = sim([1.0], n_s=62_500, seed=13).marginal_moment([0])
    assert abs(one.mean - (1 - P0_R1)) < 3 * one.error
    two = sim([1.0, 1.0], n_s=62_500, seed=14).marginal_moment([0, 1])
    assert abs(two.mean - (1 - P0_R1) ** 2) < 3 * two.error
    assert (1 - P0_R1) ** 2 == pytest.approx(0.12387, abs=5e-5)


def test_marginal_moment_rejects_duplicates():
    with pytest.raises(ParameterError):
        sim([1.0, 1.0], n_s=10, n_r=2).marginal_moment([1, 1])


def test_cumulants_independent_modes():
    k1, k2 = sim([1.0, 0.7], n_s=62_500, seed=15).cumulants_low_order(0, 1)
    assert abs(k1.mean - (1 - P0_R1)) < 3 * k1.error
    assert abs(k2.mean) < 3 * k2.error


def test_cumulants_vacuum():
    k1, k2 = sim([0.0, 0.0], n_s=100, n_r=2).cumulants_low_order(0, 1)
    assert k1.mean == 0 and k2.mean == 0


def test_cumulants_beamsplitter_positive_and_exact():
    T = TransmissionMatrix(BEAMSPLITTER)
    model = InputModel([1.0, 0.0])
    k1, k2 = Simulation(model, T, 62_500, 16, 16).cumulants_low_order(0, 1)
    p = exact_distribution(output_covariance(model, T))
    # index bit j = click on mode j
    p0, p1, p01 = p[1] + p[3], p[2] + p[3], p[3]
    exact_k2 = p01 - p0 * p1
    assert exact_k2 > 0 and k2.mean > 0
    assert abs(k2.mean - exact_k2) < 4 * k2.error
    assert abs(k1.mean - p0) < 4 * k1.error


def test_cumulants_need_distinct_modes():
    with pytest.raises(ParameterError):
        cumulants_low_order(sim([1.0, 1.0], n_s=10, n_r=2), 1, 1)


def test_marginal_and_cumulants_need_normal_order():
    s = sim([1.0, 1.0], n_s=10, n_r=2, sigma=0.5)
    with pytest.raises(UnsupportedOrderError):
        marginal_moment(s, [0])
    with pytest.raises(UnsupportedOrderError):
        cumulants_low_order(s, 0, 1)
    with pytest.raises(UnsupportedOrderError):
        intensity_correlation(s, [2, 0])
