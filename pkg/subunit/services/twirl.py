# subunit/services/twirl.py
"""Exact local 2-design twirl of the two-copy channel.

Second moments live on real matrices R over the product operator basis, so
the two-copy channel acts as ``R -> L R L^T``. The locally twirled dynamics
is confined to the span of four matrices, ordered (00, 10, 11, 01):

    R_00 = e0 e0^T
    R_10 = sqrt(alpha_A) sum_i  e_(i,0) e_(i,0)^T
    R_11 = sqrt(alpha_AB) sum_ij e_(i,j) e_(i,j)^T
    R_01 = sqrt(alpha_B) sum_j  e_(0,j) e_(0,j)^T
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import linalg, optimize

from subunit.core.config import settings
from subunit.core.errors import InvalidDimensionError, InvalidInputError
from subunit.models.datasets import DecayDataset
from subunit.models.fit import ModelForm
from subunit.models.reports import CorrelationEstimate
from subunit.services.liouville import (
    BipartiteChannel,
    Channel,
    Sector,
    bipartite_basis,
    make_basis,
    sector_indices,
    to_liouville,
)
from subunit.services.measures import sector_alpha, sub_unitarities, unitarity

logger = logging.getLogger(__name__)

TWIRL_ORDER = ("00", "10", "11", "01")


class JordanShape(str, Enum):
    DIAGONAL = "diagonal"
    ONE_BLOCK_2 = "oneBlock2"
    ONE_BLOCK_3 = "oneBlock3"


def build_projector_eigenvectors(dim_a: int, dim_b: int) -> np.ndarray:
    """The four invariant matrices R_i as an array of shape (4, n, n)."""
    if dim_a < 2 or dim_b < 2:
        raise InvalidDimensionError(f"Twirl needs dims >= 2, got ({dim_a}, {dim_b})")
    n = dim_a**2 * dim_b**2
    idx = sector_indices(dim_a, dim_b)
    alpha_a = 1.0 / (dim_a**2 - 1)
    alpha_b = 1.0 / (dim_b**2 - 1)
    weights = {Sector.A: alpha_a, Sector.AB: alpha_a * alpha_b, Sector.B: alpha_b}

    out = np.zeros((4, n, n))
    out[0, 0, 0] = 1.0
    for slot, sector in zip((1, 2, 3), (Sector.A, Sector.AB, Sector.B)):
        out[slot, idx[sector], idx[sector]] = np.sqrt(weights[sector])
    return out


def projector_matrix(dim_a: int, dim_b: int) -> np.ndarray:
    """P_AB = sum_i vec(R_i) vec(R_i)^T acting on vectorized second moments."""
    vecs = build_projector_eigenvectors(dim_a, dim_b).reshape(4, -1)
    return vecs.T @ vecs


def haar_projector(d: int) -> np.ndarray:
    """Single-system 2-design projector on the two-copy Liouville space."""
    n = d * d
    r0 = np.zeros((n, n))
    r0[0, 0] = 1.0
    r1 = np.eye(n)
    r1[0, 0] = 0.0
    r1 /= np.sqrt(n - 1)
    vecs = np.stack([r0.reshape(-1), r1.reshape(-1)])
    return vecs.T @ vecs


def local_twirl(r: np.ndarray, dim_a: int, dim_b: int, side: Sector | str) -> np.ndarray:
    """Average of (O (x) O) R (O (x) O)^T over a 2-design on one subsystem.

    ``O`` is the real Liouville matrix of a local unitary; the traceless block
    of R is replaced by its trace spread over the diagonal.
    """
    side = Sector(side)
    na, nb = dim_a**2, dim_b**2
    r4 = np.asarray(r).reshape(na, nb, na, nb)
    out = np.zeros_like(r4)
    if side is Sector.A:
        idx = np.arange(1, na)
        out[0, :, 0, :] = r4[0, :, 0, :]
        out[idx, :, idx, :] = r4[idx, :, idx, :].sum(axis=0) / (na - 1)
    elif side is Sector.B:
        idx = np.arange(1, nb)
        out[:, 0, :, 0] = r4[:, 0, :, 0]
        out[:, idx, :, idx] = r4[:, idx, :, idx].sum(axis=0) / (nb - 1)
    else:
        return local_twirl(local_twirl(r, dim_a, dim_b, Sector.A), dim_a, dim_b, Sector.B)
    return out.reshape(na * nb, na * nb)


@dataclass(frozen=True, eq=False)
class TwirlMatrix:
    dim_a: int
    dim_b: int
    m: np.ndarray
    liouville: np.ndarray = field(repr=False)

    @property
    def S(self) -> np.ndarray:
        return self.m[1:, 1:]

    @property
    def x_column(self) -> np.ndarray:
        return self.m[1:, 0]


def twirl_matrix(bch: BipartiteChannel) -> TwirlMatrix:
    """Closed-form twirl matrix from sub-unitarities and non-unital norms."""
    u = sub_unitarities(bch)
    blocks = bch.blocks
    alpha_a = sector_alpha(bch, Sector.A)
    alpha_b = sector_alpha(bch, Sector.B)
    alpha_ab = alpha_a * alpha_b
    A, B, AB = Sector.A, Sector.B, Sector.AB

    m = np.zeros((4, 4))
    m[0, 0] = 1.0
    m[1:, 0] = [
        np.sqrt(alpha_a) * blocks.x_norm(A),
        np.sqrt(alpha_ab) * blocks.x_norm(AB),
        np.sqrt(alpha_b) * blocks.x_norm(B),
    ]
    m[1, 1:] = [
        u[A][A],
        u[AB][A] / np.sqrt(alpha_b),
        np.sqrt(alpha_a / alpha_b) * u[B][A],
    ]
    m[2, 1:] = [
        np.sqrt(alpha_b) * u[A][AB],
        u[AB][AB],
        np.sqrt(alpha_a) * u[B][AB],
    ]
    m[3, 1:] = [
        np.sqrt(alpha_b / alpha_a) * u[A][B],
        u[AB][B] / np.sqrt(alpha_a),
        u[B][B],
    ]
    return TwirlMatrix(bch.dim_a, bch.dim_b, m, bch.liouville)


def sandwich_twirl_matrix(bch: BipartiteChannel) -> np.ndarray:
    """m_ij = <R_i, L R_j L^T>_F computed directly."""
    projectors = build_projector_eigenvectors(bch.dim_a, bch.dim_b)
    lv = bch.liouville
    propagated = np.einsum("ab,jbc,dc->jad", lv, projectors, lv)
    return np.einsum("iad,jad->ij", projectors, propagated)


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigenvalues of S with its Jordan structure.

    ``similarity`` V satisfies S = V J V^-1; ``transform`` is the 4x4
    Q = [[1, 0], [q, V]] that also brings the x column into Jordan coordinates.
    """

    eigenvalues: np.ndarray
    jordan_shape: JordanShape
    jordan_form: np.ndarray
    similarity: np.ndarray
    transform: np.ndarray
    degeneracy_warning: bool = False

    @property
    def decay_form(self) -> ModelForm:
        return {
            JordanShape.DIAGONAL: ModelForm.CONST_3EXP,
            JordanShape.ONE_BLOCK_2: ModelForm.JORDAN2,
            JordanShape.ONE_BLOCK_3: ModelForm.JORDAN3,
        }[self.jordan_shape]

    def reconstruction_error(self, s: np.ndarray) -> float:
        rebuilt = self.similarity @ self.jordan_form @ linalg.inv(self.similarity)
        return float(np.max(np.abs(rebuilt - s)))


def _cluster(values: np.ndarray, rtol: float) -> list[list[int]]:
    clusters: list[list[int]] = []
    for i, lam in enumerate(values):
        for cluster in clusters:
            ref = values[cluster[0]]
            if abs(lam - ref) <= rtol * max(1.0, abs(ref)):
                cluster.append(i)
                break
        else:
            clusters.append([i])
    return clusters


def _null_space(a: np.ndarray, dim: int) -> np.ndarray:
    """The ``dim`` right singular vectors with the smallest singular values."""
    _, _, vh = np.linalg.svd(a)
    return vh[a.shape[1] - dim :].conj().T


def spectral_analysis(tm: TwirlMatrix) -> SpectralData:
    s = tm.S.astype(complex)
    eigenvalues = np.linalg.eigvals(s)
    eigenvalues = eigenvalues[np.argsort(-eigenvalues.real, kind="stable")]
    if np.max(np.abs(eigenvalues.imag)) > 1e-8:
        logger.warning("S has complex eigenvalues: %s", np.round(eigenvalues, 10))

    norm = float(np.linalg.norm(s, 2))
    threshold = settings.rank_rtol * (norm if norm > 0 else 1.0)
    identity = np.eye(3)

    shape = JordanShape.DIAGONAL
    warning = False
    columns: list[np.ndarray] = []
    diag_values: list[complex] = []
    superdiag: list[int] = []

    for cluster in _cluster(eigenvalues, settings.degeneracy_rtol):
        alg = len(cluster)
        lam = complex(np.mean(eigenvalues[cluster]))
        if alg == 1:
            columns.append(_null_space(s - lam * identity, 1)[:, 0])
            diag_values.append(eigenvalues[cluster[0]])
            continue

        n_mat = s - lam * identity
        singular = np.linalg.svd(n_mat, compute_uv=False)
        rank = int(np.sum(singular > threshold))
        if np.any((singular > threshold) & (singular <= 1e3 * threshold)):
            logger.warning(
                "Rank test for eigenvalue %.10g is inconclusive; treating S as diagonal",
                lam.real,
            )
            warning = True
            rank = 3 - alg
        geometric = 3 - rank

        if geometric >= alg:
            basis = _null_space(n_mat, alg)
            for col in range(alg):
                columns.append(basis[:, col])
                diag_values.append(lam)
            continue

        if alg == 3 and geometric == 1:
            shape = JordanShape.ONE_BLOCK_3
            # the direction with largest ||N^2 v|| starts the chain
            _, _, vh = np.linalg.svd(n_mat @ n_mat)
            v3 = vh[0].conj()
            v2 = n_mat @ v3
            v1 = n_mat @ v2
            start = len(columns)
            columns.extend([v1, v2, v3])
            diag_values.extend([lam, lam, lam])
            superdiag.extend([start, start + 1])
            continue

        shape = JordanShape.ONE_BLOCK_2
        generalized = _null_space(n_mat @ n_mat, alg)
        images = n_mat @ generalized
        v2 = generalized[:, int(np.argmax(np.linalg.norm(images, axis=0)))]
        v1 = n_mat @ v2
        start = len(columns)
        columns.extend([v1, v2])
        diag_values.extend([lam, lam])
        superdiag.append(start)
        if alg == 3:
            kernel = _null_space(n_mat, 2)
            unit = v1 / np.linalg.norm(v1)
            residual = kernel - np.outer(unit, unit.conj() @ kernel)
            columns.append(kernel[:, int(np.argmax(np.linalg.norm(residual, axis=0)))])
            diag_values.append(lam)

    similarity = np.column_stack(columns)
    jordan = np.diag(np.array(diag_values, dtype=complex))
    for i in superdiag:
        jordan[i, i + 1] = 1.0

    x = tm.x_column.astype(complex)
    q, *_ = linalg.lstsq(identity - s, x)
    transform = np.eye(4, dtype=complex)
    transform[1:, 0] = q
    transform[1:, 1:] = similarity

    data = SpectralData(
        eigenvalues=eigenvalues,
        jordan_shape=shape,
        jordan_form=jordan,
        similarity=similarity,
        transform=transform,
        degeneracy_warning=warning,
    )
    error = data.reconstruction_error(s)
    if error > 1e-9 * max(1.0, norm):
        logger.warning("Jordan reconstruction error %.3e exceeds tolerance", error)
    return data


def _second_moment_vectors(
    tm: TwirlMatrix, observable: np.ndarray, rho: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    basis = bipartite_basis(tm.dim_a, tm.dim_b)
    a = np.real(basis.coefficients(rho))
    b = np.real(basis.coefficients(observable))
    projectors = build_projector_eigenvectors(tm.dim_a, tm.dim_b)
    v = np.einsum("a,iab,b->i", a, projectors, a)
    lb = tm.liouville.T @ b
    w = np.einsum("a,iab,b->i", lb, projectors, lb)
    return v, w


def predict_decay(
    tm: TwirlMatrix, observable: np.ndarray, rho: np.ndarray, k_max: int
) -> DecayDataset:
    """Exact E[m^2] for k = 1..k_max under local twirling.

    Each layer is a random local gate followed by the noise; SPAM channels
    are absorbed into ``rho`` and ``observable`` by the caller.
    """
    if k_max < 1:
        raise InvalidInputError(f"k_max must be >= 1, got {k_max}")
    observable = np.asarray(observable)
    if np.max(np.abs(observable - observable.conj().T)) > 1e-10:
        raise InvalidInputError("Observable must be hermitian")
    v, w = _second_moment_vectors(tm, observable, np.asarray(rho))
    values = []
    state = v
    for _ in range(k_max):
        values.append(float(w @ state))
        state = tm.m @ state
    return DecayDataset.exact_curve(range(1, k_max + 1), values)


def estimate_C(eigenvalues: Sequence[complex]) -> CorrelationEstimate:
    """|lambda_3 - lambda_1 lambda_2| with lambda sorted descending."""
    values = np.asarray(eigenvalues, dtype=complex)
    if values.size != 3:
        raise InvalidInputError(f"estimate_C needs three decay constants, got {values.size}")
    if np.max(np.abs(values.imag)) > 1e-8:
        logger.warning("Using real parts of complex decay constants %s", values)
    real = np.sort(values.real)[::-1]
    in_regime = bool(np.all((real >= -1e-9) & (real <= 1 + 1e-9)))
    if not in_regime:
        logger.warning(
            "Decay constants %s fall outside [0, 1]; C is outside its separable regime",
            np.round(real, 10),
        )
    return CorrelationEstimate(
        value=float(abs(real[2] - real[0] * real[1])),
        in_regime=in_regime,
        eigenvalues=real.tolist(),
    )


def recover_uABAB_from_global(u_global: float, lambda_sum: float, d: int) -> float:
    """u_{AB->AB} from the global unitarity and the sum of eigenvalues of S."""
    if d < 2:
        raise InvalidDimensionError(f"Subsystem dimension must be >= 2, got {d}")
    return ((d * d + 1) * u_global - lambda_sum) / (d * d - 2)


def assign_eigenvalues(tm: TwirlMatrix) -> np.ndarray:
    """Eigenvalues of S paired with its diagonal (u_{A->A}, u_{AB->AB}, u_{B->B}).

    Each eigenvalue goes to the sector carrying most of its eigenvector weight,
    which reproduces the diagonal exactly for product channels.
    """
    eigenvalues, vectors = linalg.eig(tm.S)
    _, cols = optimize.linear_sum_assignment(np.abs(vectors) ** 2, maximize=True)
    return eigenvalues[cols]


def eigenvalue_deviation_bound(tm: TwirlMatrix) -> tuple[float, float]:
    """(bound, deviation): (1/sqrt(alpha_B))(1 - u_{A->A}) and |lambda_1 - u_{A->A}|.

    lambda_1 is the eigenvalue ``assign_eigenvalues`` pairs with u_{A->A}.
    """
    u_aa = float(tm.m[1, 1])
    alpha_b = 1.0 / (tm.dim_b**2 - 1)
    bound = (1.0 - u_aa) / np.sqrt(alpha_b)
    deviation = float(np.abs(assign_eigenvalues(tm)[0] - u_aa))
    return float(bound), deviation


@dataclass(frozen=True, eq=False)
class GlobalTwirlMatrix:
    dim: int
    m: np.ndarray
    liouville: np.ndarray = field(repr=False)


def global_twirl_matrix(ch: Channel) -> GlobalTwirlMatrix:
    """2x2 twirl matrix under a global 2-design: diag(1, u) plus the x column."""
    d = ch.dim_in
    basis = make_basis(d)
    lv = np.real(to_liouville(ch, basis, basis))
    m = np.array(
        [[1.0, 0.0], [np.sum(lv[1:, 0] ** 2) / np.sqrt(d * d - 1), unitarity(ch)]]
    )
    return GlobalTwirlMatrix(d, m, lv)


def predict_global_decay(
    ch: Channel, observable: np.ndarray, rho: np.ndarray, k_max: int
) -> DecayDataset:
    """Exact E[m^2] = c1 + c2 u^(k-1) under a global 2-design."""
    gtm = global_twirl_matrix(ch)
    basis = make_basis(gtm.dim)
    n = gtm.dim**2
    r0 = np.zeros((n, n))
    r0[0, 0] = 1.0
    r1 = np.eye(n)
    r1[0, 0] = 0.0
    r1 /= np.sqrt(n - 1)
    projectors = np.stack([r0, r1])

    a = np.real(basis.coefficients(rho))
    lb = gtm.liouville.T @ np.real(basis.coefficients(observable))
    v = np.einsum("a,iab,b->i", a, projectors, a)
    w = np.einsum("a,iab,b->i", lb, projectors, lb)
    values = []
    for _ in range(k_max):
        values.append(float(w @ v))
        v = gtm.m @ v
    return DecayDataset.exact_curve(range(1, k_max + 1), values)
