import numpy as np
import pytest

from subunit.core.errors import InvalidDimensionError, InvalidInputError
from subunit.services.liouville import Sector
from subunit.services.measures import correlated_unitarity, sub_unitarity, unitarity
from subunit.services.zoo import (
    ChannelName,
    SeparableSpec,
    SeparableTerm,
    controlled_shift,
    convergence_channel,
    make_rng,
    named_channel,
    pinned_reset_channel,
    random_channel,
    random_density_matrix,
    random_pauli_weights,
    random_separable,
    random_unitary,
    reset_channel,
    spawn_rngs,
    swap_mixture,
)


def test_same_seed_same_draws():
    a = random_unitary(4, make_rng(5))
    b = random_unitary(4, make_rng(5))
    np.testing.assert_array_equal(a, b)


def test_spawned_streams_differ():
    first, second = spawn_rngs(3, 2)
    assert not np.allclose(first.normal(size=4), second.normal(size=4))
    again = spawn_rngs(3, 2)[1]
    np.testing.assert_array_equal(again.normal(size=4), spawn_rngs(3, 2)[1].normal(size=4))


def test_random_unitary_is_unitary(rng):
    u = random_unitary(5, rng)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(5), atol=1e-12)
    with pytest.raises(InvalidDimensionError):
        random_unitary(1, rng)


@pytest.mark.parametrize("rank", [1, 2, 4])
def test_random_channel_has_requested_rank(rank, rng):
    ch = random_channel(2, 2, rank, rng)
    assert ch.kraus_rank == rank


def test_random_channel_rejects_bad_rank(rng):
    with pytest.raises(InvalidInputError):
        random_channel(2, 2, 5, rng)


def test_random_channel_rejects_rank_too_small_for_trace_preservation(rng):
    with pytest.raises(InvalidInputError, match="trace preserving"):
        random_channel(4, 2, 1, rng)
    ch = random_channel(4, 2, 2, rng)
    assert (ch.dim_in, ch.dim_out) == (4, 2)


def test_random_density_matrix(rng):
    rho = random_density_matrix(3, rng)
    assert abs(np.trace(rho) - 1) < 1e-12
    assert np.linalg.eigvalsh(rho).min() > -1e-12


def test_named_channels_validate_names_and_dims():
    with pytest.raises(InvalidInputError):
        named_channel("teleporter")
    with pytest.raises(InvalidDimensionError):
        named_channel(ChannelName.IDENTITY, 1, 2)
    with pytest.raises(InvalidInputError):
        named_channel("swap", 2, 3)


def test_controlled_shift_is_cnot_for_qubits():
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    np.testing.assert_array_equal(controlled_shift(2, 2), cnot)
    u = controlled_shift(3, 3)
    np.testing.assert_allclose(u.T @ u, np.eye(9))


def test_local_depolarizer_is_product():
    bch = named_channel("depolarizing_local", 2, 2, p=0.3, p_b=0.6)
    assert abs(correlated_unitarity(bch)) < 1e-12
    assert abs(sub_unitarity(bch, Sector.A, Sector.A) - 0.7**2) < 1e-12
    assert abs(sub_unitarity(bch, Sector.B, Sector.B) - 0.4**2) < 1e-12


def test_reset_channel_outputs_fixed_state(rng):
    target = random_density_matrix(2, rng)
    ch = reset_channel(target)
    np.testing.assert_allclose(ch.apply(random_density_matrix(2, rng)), target, atol=1e-12)
    with pytest.raises(InvalidInputError):
        reset_channel(np.diag([1.0, 1.0]))


@pytest.mark.parametrize("t", [0.0, 0.3, 0.9, 1.0])
def test_swap_mixture_sub_unitarities(t):
    bch = swap_mixture(t)
    assert abs(sub_unitarity(bch, Sector.A, Sector.A) - (1 - t) ** 2) < 1e-12
    expected_abab = t**2 + (1 - t) ** 2 + 2 / 3 * t * (1 - t)
    assert abs(sub_unitarity(bch, Sector.AB, Sector.AB) - expected_abab) < 1e-12
    with pytest.raises(InvalidInputError):
        swap_mixture(1.5)


def test_separable_spec_rebuilds_channel(rng):
    bch, spec = random_separable(2, 2, 3, rng)
    assert len(spec.terms) == 3
    np.testing.assert_allclose(
        spec.channel().channel.superoperator, bch.channel.superoperator, atol=1e-14
    )
    term = spec.terms[0]
    with pytest.raises(InvalidInputError):
        SeparableSpec((SeparableTerm(0.5, term.channel_a, term.channel_b),))


def test_unital_separable_factors_are_unital(rng):
    bch, _ = random_separable(2, 2, 2, rng, unital=True)
    np.testing.assert_allclose(bch.channel.apply(np.eye(4) / 4), np.eye(4) / 4, atol=1e-12)


def test_pauli_weights_form_a_distribution(rng):
    weights = random_pauli_weights(2, 4, rng)
    assert weights.shape == (4, 16)
    assert abs(weights.sum() - 1) < 1e-12


def test_convergence_channel_limits(rng):
    a = random_channel(2, 2, 2, rng)
    b = random_channel(2, 2, 2, rng)
    g = random_channel(4, 4, 2, rng)
    assert abs(correlated_unitarity(convergence_channel(1.0, a, b, g))) < 1e-12
    with pytest.raises(InvalidInputError):
        convergence_channel(-0.1, a, b, g)


def test_pinned_reset_channel_is_fixed():
    first, second = pinned_reset_channel(), pinned_reset_channel()
    np.testing.assert_array_equal(first.channel.superoperator, second.channel.superoperator)
    assert 0.0 < unitarity(first.channel) < 1.0
