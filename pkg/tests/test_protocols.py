import numpy as np
import pytest
from scipy import stats

from subunit.core.errors import InvalidInputError, UnsupportedError
from subunit.models.fit import ModelForm
from subunit.services.experiments import P1_OBSERVABLE, P1_STATE
from subunit.services.fitting import fit_single_exponential, fit_triple_exponential
from subunit.services.liouville import BipartiteChannel, Channel, Sector
from subunit.services.measures import sub_unitarity
from subunit.services.protocols import (
    BlochReset,
    DepolarizingReset,
    IdealReset,
    NoiseModel,
    clifford_group,
    depolarizing_spam,
    min_orthogonal_prep_bound,
    orthogonal_prep_bound,
    run_orthogonal_reset_pair,
    run_protocol_1,
    run_protocol_2,
    sample_cliffords,
)
from subunit.services.twirl import predict_decay, twirl_matrix
from subunit.services.zoo import make_rng, random_channel, swap_mixture

KET0 = np.diag([1.0, 0.0])
RHO_00 = np.kron(KET0, KET0)
OBS_A = np.kron(KET0, np.eye(2))


@pytest.fixture
def noisy(rng) -> BipartiteChannel:
    return BipartiteChannel(2, 2, random_channel(4, 4, 2, rng))


def test_clifford_group_is_closed():
    group = clifford_group()
    assert len(group) == 24
    for g in group:
        np.testing.assert_allclose(g.conj().T @ g, np.eye(2), atol=1e-12)
    for g in group:
        for h in group:
            product = g @ h
            overlaps = [abs(np.trace(c.conj().T @ product)) for c in group]
            assert abs(max(overlaps) - 2.0) < 1e-9


def test_only_single_qubit_cliffords_are_enumerated():
    with pytest.raises(UnsupportedError):
        clifford_group(2)


def test_exact_protocol_1_matches_prediction(noisy, rng):
    ks = [1, 2, 5, 9]
    data = run_protocol_1(NoiseModel(noisy), RHO_00, OBS_A, ks, 0, rng, exact=True)
    curve = predict_decay(twirl_matrix(noisy), OBS_A, RHO_00, 9)
    assert data.exact
    np.testing.assert_allclose(data.mean_m2, [curve.mean_m2[k - 1] for k in ks], atol=1e-14)


@pytest.mark.slow
def test_monte_carlo_protocol_1_agrees_with_exact(noisy):
    ks = [1, 2, 4, 8]
    noise = NoiseModel(noisy)
    exact = run_protocol_1(noise, RHO_00, OBS_A, ks, 0, make_rng(0), exact=True)
    sampled = run_protocol_1(noise, RHO_00, OBS_A, ks, 4000, make_rng(11))
    assert sampled.n_seqs == [4000] * 4
    for value, target, err in zip(sampled.mean_m2, exact.mean_m2, sampled.stderr):
        assert abs(value - target) < 5 * err + 1e-12


def test_monte_carlo_is_seeded(noisy):
    noise = NoiseModel(noisy)
    first = run_protocol_1(noise, RHO_00, OBS_A, [1, 3], 50, make_rng(4))
    second = run_protocol_1(noise, RHO_00, OBS_A, [1, 3], 50, make_rng(4))
    assert first.mean_m2 == second.mean_m2


def test_shot_noise_is_unbiased(noisy):
    ks = [1, 3, 6]
    noise = NoiseModel(noisy)
    exact = run_protocol_1(noise, RHO_00, OBS_A, ks, 0, make_rng(0), exact=True)
    sampled = run_protocol_1(noise, RHO_00, OBS_A, ks, 3000, make_rng(2), shots=40)
    for value, target, err in zip(sampled.mean_m2, exact.mean_m2, sampled.stderr):
        assert abs(value - target) < 5 * err + 1e-12


def test_measurement_arguments_are_checked(noisy, rng):
    noise = NoiseModel(noisy)
    with pytest.raises(InvalidInputError):
        run_protocol_1(noise, RHO_00, OBS_A, [1, 2], 10, rng, shots=1)
    z_a = np.kron(np.diag([1.0, -1.0]), np.eye(2))
    with pytest.raises(InvalidInputError):
        run_protocol_1(noise, RHO_00, z_a, [1, 2], 10, rng, shots=10)
    with pytest.raises(InvalidInputError):
        run_protocol_1(noise, RHO_00, OBS_A, [1, 2], 1, rng)


@pytest.mark.parametrize("ks", [[], [0, 1], [3, 2], [2, 2]])
def test_sequence_lengths_must_ascend(ks, noisy, rng):
    with pytest.raises(InvalidInputError):
        run_protocol_1(NoiseModel(noisy), RHO_00, OBS_A, ks, 10, rng, exact=True)


def test_protocol_1_needs_qubits(rng):
    bch = BipartiteChannel(2, 3, random_channel(6, 6, 2, rng))
    with pytest.raises(UnsupportedError):
        run_protocol_1(NoiseModel(bch), np.eye(6) / 6, np.eye(6), [1, 2], 10, rng, exact=True)


def test_ideal_reset_isolates_sub_unitarity(noisy, rng):
    ks = list(range(1, 13))
    data = run_protocol_2(NoiseModel(noisy), RHO_00, KET0, ks, 0, rng, exact=True)
    fit = fit_single_exponential(data)
    assert fit.converged
    assert abs(fit.decays[0] - sub_unitarity(noisy, Sector.A, Sector.A)) < 1e-6


def test_ideal_reset_decay_is_a_single_exponential(noisy, rng):
    ks = np.arange(1, 16)
    data = run_protocol_2(NoiseModel(noisy), RHO_00, KET0, ks.tolist(), 0, rng, exact=True)
    lam = sub_unitarity(noisy, Sector.A, Sector.A)
    design = np.column_stack([np.ones(ks.size), lam ** (ks - 1)])
    coef, *_ = np.linalg.lstsq(design, data.mean_m2, rcond=None)
    assert np.max(np.abs(design @ coef - np.asarray(data.mean_m2))) < 1e-10


def test_prepared_b_state_is_reset_before_the_first_gate(noisy, rng):
    flipped = np.kron(KET0, np.diag([0.0, 1.0]))
    ks = [1, 2, 3, 4]
    first = run_protocol_2(NoiseModel(noisy), RHO_00, KET0, ks, 0, rng, exact=True)
    second = run_protocol_2(NoiseModel(noisy), flipped, KET0, ks, 0, rng, exact=True)
    np.testing.assert_allclose(first.mean_m2, second.mean_m2, atol=1e-14)


def test_reset_protocol_supports_qutrit_b(rng):
    bch = BipartiteChannel(2, 3, random_channel(6, 6, 2, rng))
    rho = np.kron(KET0, np.diag([1.0, 0.0, 0.0]))
    data = run_protocol_2(NoiseModel(bch), rho, KET0, list(range(1, 11)), 0, rng, exact=True)
    fit = fit_single_exponential(data)
    assert abs(fit.decays[0] - sub_unitarity(bch, Sector.A, Sector.A)) < 1e-6


def test_monte_carlo_protocol_2_agrees_with_exact(noisy):
    ks = [1, 2, 5]
    noise = NoiseModel(noisy, reset_error=DepolarizingReset(0.8))
    exact = run_protocol_2(noise, RHO_00, KET0, ks, 0, make_rng(0), exact=True)
    sampled = run_protocol_2(noise, RHO_00, KET0, ks, 4000, make_rng(9))
    for value, target, err in zip(sampled.mean_m2, exact.mean_m2, sampled.stderr):
        assert abs(value - target) < 5 * err + 1e-12


def test_reset_models():
    ideal = IdealReset().channel(2, 2).channel.superoperator
    full = DepolarizingReset(1.0).channel(2, 2).channel.superoperator
    np.testing.assert_allclose(full, ideal, atol=1e-14)
    none = DepolarizingReset(0.0).channel(2, 2).channel.superoperator
    np.testing.assert_allclose(none, Channel.identity(4).superoperator, atol=1e-14)
    up = BlochReset((0.0, 0.0, 1.0)).channel(2, 2).channel
    out = up.apply(np.eye(4) / 4)
    np.testing.assert_allclose(out, np.kron(np.eye(2) / 2, KET0), atol=1e-12)
    assert DepolarizingReset(0.5).label == "depolarizing(p=0.5)"
    with pytest.raises(InvalidInputError):
        DepolarizingReset(1.2)
    with pytest.raises(InvalidInputError):
        BlochReset((0.0, 0.0, 2.0))
    with pytest.raises(UnsupportedError):
        BlochReset((1.0, 0.0, 0.0)).channel(2, 3)


def test_orthogonal_preparations_bound_sub_unitarity(rng):
    for _ in range(10):
        bch = BipartiteChannel(2, 2, random_channel(4, 4, int(rng.integers(1, 17)), rng))
        u_aa = sub_unitarity(bch, Sector.A, Sector.A)
        assert orthogonal_prep_bound(bch, (0.0, 0.0, 1.0)) >= u_aa - 1e-12
        best, direction = min_orthogonal_prep_bound(bch)
        assert best >= u_aa - 1e-12
        assert direction in {(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)}
    with pytest.raises(InvalidInputError):
        orthogonal_prep_bound(bch, (0.0, 0.0, 0.5))


def test_orthogonal_reset_pair(noisy, rng):
    plus, minus = run_orthogonal_reset_pair(
        NoiseModel(noisy), (0.0, 0.0, 1.0), RHO_00, KET0, list(range(1, 9)), 0, rng
    )
    assert plus.k == minus.k == list(range(1, 9))
    assert plus.exact and minus.exact


def test_spam_is_absorbed_into_state_and_observable(noisy, rng):
    prep, meas = depolarizing_spam(0.1, 0.2)
    noise = NoiseModel(noisy, state_prep=prep, measurement_noise=meas)
    np.testing.assert_allclose(noise.effective_state(np.eye(4) / 4), np.eye(4) / 4, atol=1e-12)
    clean = run_protocol_1(NoiseModel(noisy), RHO_00, OBS_A, [1, 2, 3], 0, rng, exact=True)
    dirty = run_protocol_1(noise, RHO_00, OBS_A, [1, 2, 3], 0, rng, exact=True)
    assert not np.allclose(clean.mean_m2, dirty.mean_m2)


def test_protocol_1_decays_do_not_depend_on_spam(rng):
    bch = swap_mixture(0.3)
    eigenvalues = np.sort(np.linalg.eigvals(twirl_matrix(bch).S).real)[::-1]
    prep, meas = depolarizing_spam(0.05, 0.1)
    ks = list(range(1, 21))
    for noise in (NoiseModel(bch), NoiseModel(bch, state_prep=prep, measurement_noise=meas)):
        data = run_protocol_1(noise, P1_STATE, P1_OBSERVABLE, ks, 0, rng, exact=True)
        fit = fit_triple_exponential(data)
        assert fit.model_form is ModelForm.CONST_3EXP
        np.testing.assert_allclose(fit.decays, eigenvalues, atol=1e-6)


def test_clifford_draws_are_uniform():
    counts = np.bincount(sample_cliffords(100_000, make_rng(2024)), minlength=24)
    assert counts.size == 24
    assert stats.chisquare(counts).pvalue > 1e-3
