import numpy as np
import pytest

from subunit.core.errors import FitError, InvalidInputError
from subunit.models.datasets import DecayDataset
from subunit.models.fit import FitResult, ModelForm
from subunit.services.fitting import (
    aicc,
    decay_trace,
    design_matrix,
    estimate_correlation_from_fit,
    fit_double_exponential,
    fit_model,
    fit_single_exponential,
    fit_triple_exponential,
    matrix_pencil,
    select_model,
)
from subunit.services.liouville import BipartiteChannel
from subunit.services.protocols import NoiseModel, run_protocol_1, run_protocol_2
from subunit.services.twirl import estimate_C, twirl_matrix
from subunit.services.zoo import make_rng, random_channel, swap_mixture

K = np.arange(1, 41)


def _curve(values) -> DecayDataset:
    return DecayDataset.exact_curve(K.tolist(), np.asarray(values, dtype=float).tolist())


def _fit(form, decays, converged=True, score=0.0, multiplicities=None) -> FitResult:
    return FitResult(
        model_form=form,
        constants=[0.1] * (len(decays) + 1),
        decays=decays,
        residual_rms=0.0,
        multiplicities=multiplicities or [1] * len(decays),
        converged=converged,
        aicc=score,
    )


def test_recovers_three_decays_from_exact_data():
    y = 0.25 + 0.3 * 0.95 ** (K - 1) + 0.2 * 0.8 ** (K - 1) + 0.1 * 0.6 ** (K - 1)
    fit = fit_triple_exponential(_curve(y))
    assert fit.model_form is ModelForm.CONST_3EXP
    assert fit.converged
    np.testing.assert_allclose(fit.decays, [0.95, 0.8, 0.6], atol=1e-6)
    assert fit.constants[0] == pytest.approx(0.25, abs=1e-6)
    assert fit.residual_rms < 1e-10


def test_recovers_single_and_double_decays():
    single = fit_single_exponential(_curve(0.5 + 0.4 * 0.9 ** (K - 1)))
    assert single.decays[0] == pytest.approx(0.9, abs=1e-8)
    double = fit_double_exponential(_curve(0.5 + 0.3 * 0.9 ** (K - 1) + 0.2 * 0.4 ** (K - 1)))
    np.testing.assert_allclose(double.decays, [0.9, 0.4], atol=1e-7)


def test_negative_decay_is_reachable():
    fit = fit_single_exponential(_curve(0.5 + 0.5 * (-1.0) ** (K - 1)))
    assert fit.decays[0] == pytest.approx(-1.0, abs=1e-8)


def test_constant_data_has_no_decay():
    fit = fit_triple_exponential(_curve(np.full(K.size, 0.25)))
    assert fit.flags == ["no_decay"]
    assert fit.decays == [1.0]
    assert fit.constants[0] == pytest.approx(0.25)


def test_jordan_form_fit():
    k = K.astype(float)
    y = 0.1 + (0.5 + 0.3 * (k - 1) / 0.8) * 0.8 ** (k - 1) + 0.2 * 0.6 ** (k - 1)
    fit = fit_model(_curve(y), ModelForm.JORDAN2)
    np.testing.assert_allclose(fit.decays, [0.8, 0.6], atol=1e-6)


def test_two_exponential_data_still_resolves_its_decays():
    fit = fit_triple_exponential(_curve(0.2 + 0.5 * 0.9 ** (K - 1) + 0.3 * 0.5 ** (K - 1)))
    for target in (0.9, 0.5):
        assert min(abs(lam - target) for lam in fit.decays) < 1e-5


def test_insufficient_lengths_are_rejected():
    short = DecayDataset.exact_curve([1, 2, 3], [0.9, 0.8, 0.75])
    with pytest.raises(InvalidInputError):
        fit_single_exponential(short)
    seven = DecayDataset.exact_curve(range(1, 8), [0.5 + 0.1 * 0.9**k for k in range(7)])
    with pytest.raises(InvalidInputError):
        fit_triple_exponential(seven)
    with pytest.raises(InvalidInputError):
        fit_model(DecayDataset.exact_curve([1, 2, 3], [1.0, float("nan"), 0.5]), "const+1exp")


def test_design_matrix_jordan_columns():
    phi = design_matrix(ModelForm.JORDAN3, [0.5], np.array([1, 2, 3]))
    np.testing.assert_allclose(phi[0], [1.0, 1.0, 0.0, 0.0])
    np.testing.assert_allclose(phi[2], [1.0, 0.25, 1.0, 1.0])


def test_matrix_pencil_finds_poles():
    n = np.arange(20)
    poles = matrix_pencil(2 * 0.9**n + 0.5**n, 2)
    np.testing.assert_allclose(poles.real, [0.9, 0.5], atol=1e-8)
    with pytest.raises(InvalidInputError):
        matrix_pencil([1.0, 0.5, 0.25, 0.125], 2)


def test_aicc_needs_degrees_of_freedom():
    assert aicc(1.0, 5, 4, 1.0) == float("inf")
    assert aicc(1e-3, 20, 4, 1.0) < aicc(1e-1, 20, 4, 1.0)


def test_select_model_prefers_converged_low_aicc():
    good = _fit(ModelForm.CONST_2EXP, [0.9, 0.5], score=-10.0)
    better_unconverged = _fit(ModelForm.CONST_3EXP, [0.9, 0.5, 0.4], converged=False, score=-50.0)
    worse = _fit(ModelForm.CONST_3EXP, [0.9, 0.5, 0.4], score=-5.0)
    assert select_model([worse, better_unconverged, good]) is good
    with pytest.raises(InvalidInputError):
        select_model([])


def test_correlation_estimate_needs_three_decays():
    with pytest.raises(FitError):
        estimate_correlation_from_fit(_fit(ModelForm.CONST_2EXP, [0.9, 0.5]))
    with pytest.raises(FitError):
        estimate_correlation_from_fit(_fit(ModelForm.CONST_3EXP, [0.9, 0.5, 0.4], converged=False))
    merged = _fit(ModelForm.CONST_2EXP, [0.9, 0.5], multiplicities=[2, 1])
    estimate = estimate_correlation_from_fit(merged)
    assert estimate.value == pytest.approx(abs(0.5 - 0.81))


def test_correlation_from_simulated_decay():
    bch = swap_mixture(0.3)
    rho = np.kron(np.diag([1.0, 0.0]), np.diag([0.8, 0.2]))
    observable = np.kron(np.diag([1.0, 0.0]), np.diag([0.9, 0.1]))
    data = run_protocol_1(NoiseModel(bch), rho, observable, K.tolist(), 0, make_rng(0), exact=True)
    eigs = np.linalg.eigvals(twirl_matrix(bch).S)
    fit = fit_triple_exponential(data, hints=eigs.real.tolist())
    np.testing.assert_allclose(fit.decays, np.sort(eigs.real)[::-1], atol=1e-6)
    estimate = estimate_correlation_from_fit(fit)
    # eigenvalues 0.72, 0.58, 0.40
    assert estimate.value == pytest.approx(estimate_C(eigs).value, abs=1e-6)
    assert estimate.value == pytest.approx(abs(0.40 - 0.72 * 0.58), abs=1e-6)
    assert estimate.stderr is not None


def test_fit_does_not_depend_on_the_order_of_lengths():
    y = 0.25 + 0.4 * 0.9 ** (K - 1) + 0.2 * 0.6 ** (K - 1)
    order = make_rng(3).permutation(K.size)
    shuffled = DecayDataset.exact_curve(K[order].tolist(), y[order].tolist())
    first = fit_double_exponential(_curve(y))
    second = fit_double_exponential(shuffled)
    assert first.decays == second.decays
    assert first.constants == second.constants


@pytest.mark.slow
def test_recovers_separated_decays_across_random_draws():
    rng = make_rng(42)
    recovered = 0
    while recovered < 100:
        decays = np.sort(rng.uniform(0.1, 0.95, 3))[::-1]
        if np.min(-np.diff(decays)) < 0.05:
            continue
        amplitudes = rng.uniform(0.1, 1.0, 3)
        y = rng.uniform(0.0, 0.5) + sum(a * lam ** (K - 1) for a, lam in zip(amplitudes, decays))
        fit = fit_triple_exponential(_curve(y))
        np.testing.assert_allclose(fit.decays, decays, atol=1e-6)
        recovered += 1


@pytest.mark.slow
def test_weighted_fit_matches_its_error_bars():
    bch = BipartiteChannel(2, 2, random_channel(4, 4, 2, make_rng(5)))
    rho = np.kron(np.diag([1.0, 0.0]), np.diag([1.0, 0.0]))
    ks = list(range(1, 21))
    reduced = []
    for seed in range(5):
        data = run_protocol_2(NoiseModel(bch), rho, np.diag([1.0, 0.0]), ks, 1000, make_rng(100 + seed))
        fit = fit_single_exponential(data)
        assert fit.n_points == len(ks)
        reduced.append(fit.rss / (fit.n_points - 3))
    assert 0.5 <= np.mean(reduced) <= 2.0


def test_decay_trace_counts_merged_and_missing_decays():
    assert decay_trace(_fit(ModelForm.CONST_3EXP, [0.9, 0.5, 0.4])) == pytest.approx(1.8)
    merged = _fit(ModelForm.CONST_2EXP, [0.9, 0.5], multiplicities=[2, 1])
    assert decay_trace(merged) == pytest.approx(2.3)
    assert decay_trace(_fit(ModelForm.CONST_1EXP, [-1.0])) == pytest.approx(1.0)
    constant = fit_triple_exponential(_curve(np.full(K.size, 0.25)))
    assert decay_trace(constant) == pytest.approx(3.0)


def test_decay_trace_rejects_unusable_fits():
    with pytest.raises(FitError):
        decay_trace(_fit(ModelForm.CONST_3EXP, [0.9, 0.5, 0.4], converged=False))
    with pytest.raises(FitError):
        decay_trace(_fit(ModelForm.CONST_2EXP, [0.9, 0.5], multiplicities=[2, 2]))
