# subunit/services/fitting.py
"""Multi-exponential decay fitting by variable projection.

For fixed decay constants the model is linear in its amplitudes, so only
the decays are searched nonlinearly; the amplitudes come from a weighted
linear least-squares solve at every step.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, optimize, special

from subunit.core.config import settings
from subunit.core.errors import FitError, InvalidInputError
from subunit.models.datasets import DecayDataset
from subunit.models.fit import FitResult, ModelForm
from subunit.models.reports import CorrelationEstimate
from subunit.services.twirl import estimate_C

logger = logging.getLogger(__name__)

START_GRID = (0.1, 0.3, 0.5, 0.7, 0.85, 0.95, 0.99, -0.5, -0.9)

_MULTIPLICITIES = {
    ModelForm.CONST_1EXP: [1],
    ModelForm.CONST_2EXP: [1, 1],
    ModelForm.CONST_3EXP: [1, 1, 1],
    ModelForm.JORDAN2: [2, 1],
    ModelForm.JORDAN3: [3],
}


def _jordan_term(lam: float, k: np.ndarray, order: int) -> np.ndarray:
    """C(k-1, order) lam^(k-1-order); zero where the binomial weight vanishes."""
    weight = special.binom(k - 1, order)
    exponent = np.maximum(k - 1 - order, 0)
    return np.where(weight == 0, 0.0, weight * np.power(lam, exponent))


def design_matrix(form: ModelForm, decays: Sequence[float], k: np.ndarray) -> np.ndarray:
    """Columns: constant, then one basis function per amplitude."""
    k = np.asarray(k, dtype=float)
    columns = [np.ones_like(k)]
    if form in (ModelForm.CONST_1EXP, ModelForm.CONST_2EXP, ModelForm.CONST_3EXP):
        columns += [_jordan_term(lam, k, 0) for lam in decays]
    elif form is ModelForm.JORDAN2:
        lam1, lam2 = decays
        columns += [_jordan_term(lam1, k, 0), _jordan_term(lam1, k, 1), _jordan_term(lam2, k, 0)]
    else:
        (lam,) = decays
        columns += [_jordan_term(lam, k, order) for order in range(3)]
    return np.column_stack(columns)


def _solve_amplitudes(
    form: ModelForm, decays: Sequence[float], k: np.ndarray, y: np.ndarray, sqrt_w: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    phi = design_matrix(form, decays, k)
    coef, *_ = linalg.lstsq(sqrt_w[:, None] * phi, sqrt_w * y)
    return coef, phi


def _weighted_residuals(
    decays: np.ndarray, form: ModelForm, k: np.ndarray, y: np.ndarray, sqrt_w: np.ndarray
) -> np.ndarray:
    coef, phi = _solve_amplitudes(form, decays, k, y, sqrt_w)
    return sqrt_w * (y - phi @ coef)


def matrix_pencil(y: Sequence[float], order: int) -> np.ndarray:
    """Poles z of y_n = sum_i a_i z_i^n by the SVD-truncated matrix pencil."""
    y = np.asarray(y, dtype=float)
    n = y.size
    if order < 1 or n < 2 * order + 1:
        raise InvalidInputError(f"Matrix pencil of order {order} needs {2 * order + 1} points")
    pencil = n // 2
    hankel = linalg.hankel(y[: n - pencil], y[n - pencil - 1 :])
    _, _, vh = linalg.svd(hankel, full_matrices=False)
    v = vh[:order].conj().T
    poles = linalg.eigvals(linalg.pinv(v[:-1]) @ v[1:])
    return poles[np.argsort(-poles.real)]


def aicc(rss: float, n: int, p: int, y_scale: float) -> float:
    """Small-sample Akaike criterion with a floor on RSS for exact data."""
    if n - p - 1 <= 0:
        return float("inf")
    floor = n * (1e-12 * max(y_scale, 1e-300)) ** 2
    rss = max(rss, floor)
    return n * np.log(rss / n) + 2 * p + 2 * p * (p + 1) / (n - p - 1)


@dataclass
class _Prepared:
    k: np.ndarray
    y: np.ndarray
    sqrt_w: np.ndarray
    weighted: bool


def _prepare(data: DecayDataset) -> _Prepared:
    k, y, s = data.arrays()
    order = np.argsort(k, kind="stable")
    k, y = k[order], y[order]
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("Decay data contains non-finite values")
    weighted = s is not None and bool(np.all(s[order] > 0))
    sqrt_w = 1.0 / s[order] if weighted and s is not None else np.ones_like(y)
    return _Prepared(k, y, sqrt_w, weighted)


def _pencil_starts(prep: _Prepared, n_decays: int) -> list[tuple[float, ...]]:
    steps = np.diff(prep.k)
    if steps.size == 0 or not np.allclose(steps, 1.0):
        return []
    diffs = np.diff(prep.y)
    try:
        poles = matrix_pencil(diffs, n_decays)
    except (InvalidInputError, linalg.LinAlgError):
        return []
    bound = settings.lambda_bound - 1e-6
    return [tuple(float(np.clip(z.real, -bound, bound)) for z in poles)]


def _hint_starts(form: ModelForm, hints: Optional[Sequence[float]]) -> list[tuple[float, ...]]:
    if hints is None or len(hints) == 0:
        return []
    bound = settings.lambda_bound - 1e-6
    h = sorted((float(np.clip(np.real(v), -bound, bound)) for v in hints), reverse=True)
    n = form.n_decays
    if form is ModelForm.JORDAN3:
        return [(float(np.mean(h)),)]
    if form is ModelForm.JORDAN2 and len(h) >= 3:
        gaps = [abs(h[0] - h[1]), abs(h[1] - h[2])]
        if gaps[0] <= gaps[1]:
            return [((h[0] + h[1]) / 2, h[2])]
        return [((h[1] + h[2]) / 2, h[0])]
    if len(h) >= n:
        return [tuple(h[:n])]
    return []


def _starts(
    form: ModelForm, prep: _Prepared, hints: Optional[Sequence[float]]
) -> list[tuple[float, ...]]:
    n = form.n_decays
    if form is ModelForm.JORDAN2:
        grid = list(itertools.product(START_GRID, repeat=2))
    else:
        grid = list(itertools.combinations(START_GRID, n))
    starts = grid + _hint_starts(form, hints) + _pencil_starts(prep, n)
    seen = set()
    unique = []
    for start in starts:
        key = tuple(round(v, 12) for v in start)
        if key not in seen:
            seen.add(key)
            unique.append(start)
    return unique


def _covariance(
    form: ModelForm,
    decays: np.ndarray,
    coef: np.ndarray,
    prep: _Prepared,
    rss: float,
) -> np.ndarray:
    """Covariance of (decays, amplitudes) from the Jacobian of the full model."""
    n_dec = len(decays)
    phi = design_matrix(form, decays, prep.k)
    jac = np.zeros((prep.k.size, n_dec + coef.size))
    for i in range(n_dec):
        step = 1e-7 * max(1.0, abs(decays[i]))
        up, down = decays.copy(), decays.copy()
        up[i] += step
        down[i] -= step
        jac[:, i] = (
            design_matrix(form, up, prep.k) @ coef - design_matrix(form, down, prep.k) @ coef
        ) / (2 * step)
    jac[:, n_dec:] = phi
    jac *= prep.sqrt_w[:, None]
    info = linalg.pinv(jac.T @ jac)
    if prep.weighted:
        return info
    dof = prep.k.size - jac.shape[1]
    scale = rss / dof if dof > 0 else float("nan")
    return scale * info


def _constant_result(form: ModelForm, prep: _Prepared) -> FitResult:
    mean = float(np.mean(prep.y))
    n = prep.k.size
    return FitResult(
        model_form=ModelForm.CONST_1EXP,
        constants=[mean, 0.0],
        decays=[1.0],
        residual_rms=float(np.sqrt(np.mean((prep.y - mean) ** 2))),
        covariance=[[0.0] * 3 for _ in range(3)],
        covariance_diag=[0.0, 0.0, 0.0],
        multiplicities=[1],
        converged=True,
        aicc=aicc(0.0, n, 2, abs(mean)),
        rss=0.0,
        n_points=n,
        flags=["no_decay"],
        message=f"Data is constant; {form.value} decays are unidentifiable",
    )


def _is_constant(y: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(y))))
    return float(np.max(y) - np.min(y)) <= 1e-12 * scale


def fit_model(
    data: DecayDataset, form: ModelForm | str, hints: Optional[Sequence[float]] = None
) -> FitResult:
    """Best multi-start fit of one model form."""
    form = ModelForm(form)
    prep = _prepare(data)
    n_params = form.n_decays + form.n_constants
    n_distinct = np.unique(prep.k).size
    if n_distinct < n_params:
        raise InvalidInputError(
            f"{form.value} has {n_params} parameters but only {n_distinct} distinct k values"
        )
    if _is_constant(prep.y):
        return _constant_result(form, prep)

    bound = settings.lambda_bound
    best = None
    best_key: Optional[tuple] = None
    for start in _starts(form, prep, hints):
        try:
            res = optimize.least_squares(
                _weighted_residuals,
                np.asarray(start, dtype=float),
                args=(form, prep.k, prep.y, prep.sqrt_w),
                bounds=(-bound, bound),
                method="trf",
                jac="3-point",
                xtol=1e-15,
                ftol=1e-15,
                gtol=1e-15,
                max_nfev=500 * len(start),
            )
        except (ValueError, linalg.LinAlgError) as e:
            logger.debug("Start %s failed: %s", start, e)
            continue
        if not np.isfinite(res.cost):
            continue
        key = (float(res.cost), tuple(sorted(res.x, reverse=True)))
        logger.debug("Start %s -> decays %s cost %.3e", start, np.round(res.x, 8), res.cost)
        if best_key is None or key < best_key:
            best, best_key = res, key

    if best is None:
        raise FitError(f"All {form.value} starts failed")

    decays = np.asarray(best.x, dtype=float)
    if form in (ModelForm.CONST_2EXP, ModelForm.CONST_3EXP):
        decays = np.sort(decays)[::-1]
    coef, phi = _solve_amplitudes(form, decays, prep.k, prep.y, prep.sqrt_w)
    fitted = phi @ coef
    rss = float(np.sum((prep.sqrt_w * (prep.y - fitted)) ** 2))
    cov = _covariance(form, decays, coef, prep, rss)

    flags = []
    if np.any(np.abs(decays) > 1.0):
        flags.append("lambda_outside_unit_interval")
    if np.any(np.abs(decays) >= bound - 1e-9):
        flags.append("lambda_at_bound")
    converged = bool(best.status > 0 and np.all(np.isfinite(coef)) and "lambda_at_bound" not in flags)

    return FitResult(
        model_form=form,
        constants=coef.tolist(),
        decays=decays.tolist(),
        residual_rms=float(np.sqrt(np.mean((prep.y - fitted) ** 2))),
        covariance=cov.tolist(),
        covariance_diag=np.diag(cov).tolist(),
        multiplicities=list(_MULTIPLICITIES[form]),
        converged=converged,
        aicc=aicc(rss, prep.k.size, n_params, float(np.max(np.abs(prep.y)))),
        rss=rss,
        n_points=int(prep.k.size),
        flags=flags,
        message=str(best.message),
    )


def select_model(results: Sequence[FitResult]) -> FitResult:
    """Lowest AICc; converged fits beat unconverged ones, ties go to (RSS, decays)."""
    if not results:
        raise InvalidInputError("select_model needs at least one fit")

    def key(fit: FitResult) -> tuple:
        score = fit.aicc if fit.aicc is not None else float("inf")
        return (not fit.converged, score, fit.rss, tuple(fit.decays))

    return min(results, key=key)


def _collapse_reason(fit: FitResult, y_scale: float) -> Optional[str]:
    tol = settings.collapse_tol
    for a, b in itertools.combinations(fit.decays, 2):
        if abs(a - b) < tol:
            return "pair"
    if any(abs(lam - 1.0) < tol for lam in fit.decays):
        return "unit"
    if any(abs(c) < settings.amplitude_rtol * y_scale for c in fit.constants[1:]):
        return "amplitude"
    return None


def _merged_multiplicities(triple: FitResult, chosen: FitResult, reason: str) -> list[int]:
    if chosen.model_form is not ModelForm.CONST_2EXP or reason != "pair":
        return list(_MULTIPLICITIES[chosen.model_form])
    tol = settings.collapse_tol
    pair = next(
        (a + b) / 2
        for a, b in itertools.combinations(triple.decays, 2)
        if abs(a - b) < tol
    )
    nearest = int(np.argmin([abs(lam - pair) for lam in chosen.decays]))
    return [2 if i == nearest else 1 for i in range(len(chosen.decays))]


def fit_single_exponential(data: DecayDataset) -> FitResult:
    """c1 + c2 lambda^(k-1)."""
    if len(set(data.k)) < 4:
        raise InvalidInputError("A single-exponential fit needs at least 4 distinct k values")
    return fit_model(data, ModelForm.CONST_1EXP)


def fit_double_exponential(data: DecayDataset, hints: Optional[Sequence[float]] = None) -> FitResult:
    if len(set(data.k)) < 6:
        raise InvalidInputError("A double-exponential fit needs at least 6 distinct k values")
    return fit_model(data, ModelForm.CONST_2EXP, hints)


def fit_triple_exponential(
    data: DecayDataset, hints: Optional[Sequence[float]] = None
) -> FitResult:
    """c00 + sum_i c_i lambda_i^(k-1), refitting degenerate forms on collapse."""
    if len(set(data.k)) < 8:
        raise InvalidInputError("A triple-exponential fit needs at least 8 distinct k values")
    triple = fit_model(data, ModelForm.CONST_3EXP, hints)
    if "no_decay" in triple.flags:
        return triple
    y_scale = float(np.max(np.abs(data.mean_m2)))
    reason = _collapse_reason(triple, y_scale)
    if reason is None:
        return triple

    logger.debug("Triple fit collapsed (%s): decays %s", reason, triple.decays)
    candidates = [triple]
    for form in (ModelForm.CONST_2EXP, ModelForm.JORDAN2, ModelForm.JORDAN3, ModelForm.CONST_1EXP):
        try:
            candidates.append(fit_model(data, form, triple.decays if hints is None else hints))
        except (FitError, InvalidInputError) as e:
            logger.debug("Refit as %s failed: %s", form.value, e)
    chosen = select_model(candidates)
    return chosen.model_copy(
        update={
            "multiplicities": _merged_multiplicities(triple, chosen, reason),
            "flags": chosen.flags + [f"collapsed_{reason}"],
        }
    )


def estimate_correlation_from_fit(fit: FitResult) -> CorrelationEstimate:
    """|lambda_3 - lambda_1 lambda_2| from fitted decays, with a delta-method error."""
    if not fit.converged:
        raise FitError(f"Fit did not converge: {fit.message}")
    if fit.total_multiplicity != 3:
        raise FitError(
            f"{fit.model_form.value} fit resolves {fit.total_multiplicity} decay "
            "constants; three are needed"
        )
    expanded = []
    owner = []
    for i, (lam, mult) in enumerate(zip(fit.decays, fit.multiplicities)):
        expanded += [lam] * mult
        owner += [i] * mult
    estimate = estimate_C(expanded)

    order = np.argsort(-np.asarray(expanded), kind="stable")
    lam1, lam2, lam3 = (expanded[j] for j in order)
    sign = np.sign(lam3 - lam1 * lam2) or 1.0
    partials = {order[0]: -sign * lam2, order[1]: -sign * lam1, order[2]: sign}
    gradient = np.zeros(len(fit.decays))
    for position, value in partials.items():
        gradient[owner[position]] += value

    stderr = None
    n = len(fit.decays)
    if fit.covariance and len(fit.covariance) >= n:
        cov = np.asarray(fit.covariance, dtype=float)[:n, :n]
        variance = float(gradient @ cov @ gradient)
        stderr = float(np.sqrt(variance)) if variance >= 0 else float("nan")
    return estimate.model_copy(update={"stderr": stderr})


def decay_trace(fit: FitResult, n_decays: int = 3) -> float:
    """Sum of the ``n_decays`` eigenvalues behind a fit, counted with multiplicity.

    Eigenvalues a collapsed or constant fit no longer resolves count as 1, the
    only decay that merges into the constant term.
    """
    if not fit.converged:
        raise FitError(f"Fit did not converge: {fit.message}")
    missing = n_decays - fit.total_multiplicity
    if missing < 0:
        raise FitError(f"Fit resolves {fit.total_multiplicity} decays, more than {n_decays}")
    resolved = sum(lam * mult for lam, mult in zip(fit.decays, fit.multiplicities))
    return float(resolved + missing)
