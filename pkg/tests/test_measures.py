from fractions import Fraction

import numpy as np
import pytest

from subunit.core.errors import InvalidDimensionError, UnsupportedError
from subunit.services.liouville import BipartiteChannel, Channel, Sector
from subunit.services.measures import (
    ChannelAnalyzer,
    addressability,
    analyze,
    complementary_channel,
    correlated_unitarity,
    correlation_function,
    correlation_function_identity,
    diamond_bounds,
    haar_average_fidelity,
    haar_unitarity_estimate,
    information_disturbance_sum,
    infidelity,
    norm_comparison,
    pauli_channel_measures,
    sub_unitarities,
    t_inner_product_bounds,
    unitarity,
    unitarity_decomposition_check,
    unitarity_rectangular,
    witness_bound,
    witness_violated,
    zero_correlation_mixture,
)
from subunit.services.zoo import (
    apply_local_unitaries,
    depolarizing_channel,
    error_basis_correlated_unitarity,
    named_channel,
    pauli_channel,
    random_channel,
    random_pauli_weights,
    random_product_channel,
    random_separable,
    random_unitary,
    unitary_error_basis_mixture,
)


@pytest.mark.parametrize(
    "dims, expected",
    [
        ((2, 2), Fraction(7, 12)),
        ((3, 3), Fraction(17, 24)),
        ((2, 3), Fraction(19, 32)),
        ((3, 2), Fraction(5, 8)),
        ((4, 3), Fraction(311, 540)),
    ],
)
def test_witness_bound_values(dims, expected):
    assert witness_bound(*dims) == expected


def test_witness_bound_never_exceeds_qutrit_value():
    for da in range(2, 8):
        for db in range(2, 8):
            assert witness_bound(da, db) <= Fraction(17, 24)
    with pytest.raises(InvalidDimensionError):
        witness_bound(1, 2)


def test_swap_is_maximally_correlated():
    swap = named_channel("swap")
    assert abs(correlated_unitarity(swap) - 1.0) < 1e-12
    assert witness_violated(correlated_unitarity(swap), 2, 2)
    table = sub_unitarities(swap)
    assert abs(table[Sector.A][Sector.B] - 1.0) < 1e-12
    assert abs(table[Sector.A][Sector.A]) < 1e-12


def test_identity_and_depolarizer():
    ident = named_channel("identity", 2, 3)
    assert abs(unitarity(ident.channel) - 1.0) < 1e-12
    assert abs(correlated_unitarity(ident)) < 1e-12
    depol = named_channel("depolarizing", 2, 2, p=1.0)
    assert abs(unitarity(depol.channel)) < 1e-12


@pytest.mark.parametrize("dims", [(2, 2), (2, 3), (3, 3)])
def test_product_channels_are_uncorrelated(dims, rng):
    for _ in range(10):
        bch = random_product_channel(*dims, rng)
        assert abs(correlated_unitarity(bch)) < 1e-10


def test_cnot_is_invisible_to_addressability():
    cnot = named_channel("cnot")
    report = analyze(cnot)
    assert abs(report.addressability.a) < 1e-12
    assert abs(report.u_c - 4 / 9) < 1e-12
    assert not report.witness_violated


@pytest.mark.parametrize("rank", [1, 4, 16])
def test_unitarity_decomposition(rank, rng):
    for _ in range(20):
        bch = BipartiteChannel(2, 2, random_channel(4, 4, rank, rng))
        assert unitarity_decomposition_check(bch) < 1e-12


def test_decomposition_for_mixed_dimensions(rng):
    bch = BipartiteChannel(2, 3, random_channel(6, 6, 3, rng))
    assert unitarity_decomposition_check(bch) < 1e-12


def test_local_unitary_invariance(rng):
    for _ in range(100):
        bch = BipartiteChannel(2, 2, random_channel(4, 4, int(rng.integers(1, 17)), rng))
        moved = apply_local_unitaries(bch, *(random_unitary(2, rng) for _ in range(4)))
        before, after = sub_unitarities(bch), sub_unitarities(moved)
        for source in Sector:
            for target in Sector:
                assert abs(before[source][target] - after[source][target]) < 1e-10
        assert abs(correlated_unitarity(bch) - correlated_unitarity(moved)) < 1e-10


@pytest.mark.slow
def test_unitarity_matches_haar_integral(rng):
    for rank in (1, 2, 4):
        ch = random_channel(2, 2, rank, rng)
        mean, stderr = haar_unitarity_estimate(ch, 20000, rng)
        assert abs(mean - unitarity(ch)) < 4 * stderr + 1e-12


@pytest.mark.slow
def test_average_fidelity_matches_entanglement_fidelity(rng):
    ch = random_channel(4, 4, 2, rng)
    mean, stderr = haar_average_fidelity(ch, 20000, rng)
    assert abs((1 - mean) - infidelity(ch)) < 4 * stderr


def test_rectangular_unitarity(rng):
    ch = random_channel(2, 3, 2, rng)
    assert unitarity_rectangular(ch) >= 0.0
    embedding = Channel.from_kraus(np.eye(3)[:, :2])
    assert abs(unitarity_rectangular(embedding) - 1.0) < 1e-12
    with pytest.raises(UnsupportedError):
        unitarity(ch)


def test_pauli_closed_forms_match_generic_path(rng):
    for dims in [(2, 2)] * 48 + [(2, 4), (4, 2)]:
        weights = random_pauli_weights(*dims, rng)
        closed = pauli_channel_measures(weights)
        generic = analyze(pauli_channel(weights))
        assert abs(closed.u - generic.u) < 1e-12
        assert abs(closed.u_c - generic.u_c) < 1e-12
        assert abs(closed.infidelity - generic.infidelity) < 1e-12
        assert abs(closed.addressability.a - generic.addressability.a) < 1e-12
        for sector in ("A", "B", "AB"):
            assert abs(closed.sub[sector][sector] - generic.sub[sector][sector]) < 1e-12


@pytest.mark.parametrize(
    "weights, expected",
    [([0.5, 0.5], 4 / 9), ([0.25] * 4, 1 / 3), ([1.0], 0.0)],
)
def test_error_basis_mixture(weights, expected):
    bch = unitary_error_basis_mixture(weights)
    assert abs(correlated_unitarity(bch) - expected) < 1e-12
    assert abs(error_basis_correlated_unitarity(weights) - expected) < 1e-12


@pytest.mark.slow
def test_separable_channels_respect_witness(rng):
    for i in range(1000):
        bch, _ = random_separable(2, 2, 1 + i % 4, rng)
        assert correlated_unitarity(bch) <= 7 / 12 + 1e-9


def test_witness_is_reachable_by_random_unitaries(rng):
    values = [
        correlated_unitarity(BipartiteChannel(2, 2, Channel.from_unitary(random_unitary(4, rng))))
        for _ in range(200)
    ]
    assert all(-1e-12 <= v <= 1 + 1e-12 for v in values)
    assert max(values) > 7 / 12


@pytest.mark.slow
def test_information_disturbance(rng):
    for rank in (1, 2, 3, 4):
        for _ in range(125):
            ch = random_channel(2, 2, rank, rng)
            assert information_disturbance_sum(ch) <= 1 + 1e-9
    unitary = Channel.from_unitary(random_unitary(3, rng))
    assert abs(information_disturbance_sum(unitary) - 1.0) < 1e-12


def test_complementary_channel_dimensions(rng):
    ch = random_channel(2, 2, 3, rng)
    pair = complementary_channel(ch)
    assert pair.environment_dim == 3
    np.testing.assert_allclose(
        pair.isometry.conj().T @ pair.isometry, np.eye(2), atol=1e-12
    )


def test_correlation_function_identity(rng):
    for _ in range(10):
        bch = BipartiteChannel(2, 2, random_channel(4, 4, int(rng.integers(1, 17)), rng))
        assert correlation_function_identity(bch) < 1e-10
        comparison = norm_comparison(bch)
        assert comparison.identity_residual < 1e-10
        assert comparison.bounds_hold


def test_single_correlation_function_of_swap():
    swap = named_channel("swap")
    # X (x) X is mapped to itself, local marginals are fully depolarized
    assert abs(correlation_function(swap, 1, 1, 1, 1) - 1 / 16) < 1e-12


def test_zero_correlation_is_not_product():
    swap = named_channel("swap")
    depol = depolarizing_channel(2, 1.0)
    ident = Channel.identity(2)
    half = BipartiteChannel(
        2, 2, Channel.mix([ident.tensor(depol), depol.tensor(ident)], [0.5, 0.5])
    )
    bch, t = zero_correlation_mixture(swap, half)
    assert 0.0 < t < 1.0
    assert abs(correlated_unitarity(bch)) < 1e-9
    assert norm_comparison(bch).delta > 1e-3


def test_diamond_bounds_are_ordered(rng):
    for _ in range(10):
        ch = random_channel(2, 2, int(rng.integers(1, 5)), rng)
        bounds = diamond_bounds(ch)
        assert bounds.lower_r <= bounds.upper_r + 1e-12
        assert bounds.lower_u <= bounds.upper_u + 1e-12


def test_t_inner_product_bounds_hold_for_qubits(rng):
    for _ in range(20):
        first = random_channel(2, 2, int(rng.integers(1, 5)), rng)
        second = random_channel(2, 2, int(rng.integers(1, 5)), rng)
        value = t_inner_product_bounds(first, second)
        assert -1 - 1e-9 <= value <= 3 + 1e-9


def test_addressability_of_product_channel_vanishes(rng):
    bch = random_product_channel(2, 2, rng)
    assert abs(addressability(bch).a) < 1e-12


def test_analyzer_counts_witnessed_channels():
    analyzer = ChannelAnalyzer()
    reports = analyzer.analyze_many([named_channel("swap"), named_channel("identity")])
    assert [r.witness_violated for r in reports] == [True, False]
    assert (analyzer.analyzed, analyzer.witnessed) == (2, 1)
