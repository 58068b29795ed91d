# subunit/services/measures.py
"""Scalar measures of channels and bipartite channels.

Sub-unitarities follow u_{X->Y} = alpha_X ||T_{X->Y}||_F^2 with
alpha_A = 1/(dA^2-1), alpha_B = 1/(dB^2-1) and alpha_AB = alpha_A alpha_B.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from subunit.core.config import settings
from subunit.core.errors import (
    InvalidChannelError,
    InvalidDimensionError,
    InvalidInputError,
    NumericalDomainError,
    UnsupportedError,
)
from subunit.models.reports import (
    Addressability,
    DiamondBounds,
    MeasureReport,
    NormComparison,
)
from subunit.services.liouville import (
    BipartiteChannel,
    Channel,
    Sector,
    is_power_of_two,
    local_channel,
    make_basis,
    to_liouville,
)

logger = logging.getLogger(__name__)


def sector_alpha(bch: BipartiteChannel, sector: Sector | str) -> float:
    alpha_a = 1.0 / (bch.dim_a**2 - 1)
    alpha_b = 1.0 / (bch.dim_b**2 - 1)
    return {Sector.A: alpha_a, Sector.B: alpha_b, Sector.AB: alpha_a * alpha_b}[
        Sector(sector)
    ]


def _require_square(ch: Channel, what: str) -> int:
    if ch.dim_in != ch.dim_out:
        raise UnsupportedError(
            f"{what} needs dim_in == dim_out, got {ch.dim_in}->{ch.dim_out}"
        )
    if ch.dim_in < 2:
        raise InvalidDimensionError(f"{what} needs d >= 2, got {ch.dim_in}")
    return ch.dim_in


def unitarity_rectangular(ch: Channel) -> float:
    """||T||_F^2 / (d_in^2 - 1), with T the traceless-to-traceless block."""
    if ch.dim_in < 2:
        raise InvalidDimensionError("Unitarity needs an input dimension >= 2")
    basis_in = make_basis(ch.dim_in)
    basis_out = make_basis(ch.dim_out, allow_trivial=True)
    matrix = to_liouville(ch, basis_in, basis_out)
    t_block = matrix[1:, 1:]
    return float(np.sum(np.abs(t_block) ** 2) / (ch.dim_in**2 - 1))


def unitarity(ch: Channel) -> float:
    _require_square(ch, "unitarity")
    return unitarity_rectangular(ch)


def sub_unitarity(
    bch: BipartiteChannel, source: Sector | str, target: Sector | str
) -> float:
    block = bch.blocks.block(source, target)
    return float(sector_alpha(bch, source) * np.sum(block**2))


def sub_unitarities(bch: BipartiteChannel) -> dict[Sector, dict[Sector, float]]:
    return {
        source: {target: sub_unitarity(bch, source, target) for target in Sector}
        for source in Sector
    }


def correlated_unitarity(bch: BipartiteChannel) -> float:
    return sub_unitarity(bch, Sector.AB, Sector.AB) - sub_unitarity(
        bch, Sector.A, Sector.A
    ) * sub_unitarity(bch, Sector.B, Sector.B)


def _beta(d: int) -> Fraction:
    return Fraction(1, d * d - 1) if d == 2 else Fraction(d, d * d - 1)


def witness_bound(dim_a: int, dim_b: int) -> Fraction:
    """Ceiling of u_c over separable channels on C^dA (x) C^dB."""
    if dim_a < 2 or dim_b < 2:
        raise InvalidDimensionError(f"Witness bound needs dims >= 2, got ({dim_a}, {dim_b})")
    beta_a, beta_b = _beta(dim_a), _beta(dim_b)
    return beta_a * (1 + beta_b) * (1 - Fraction(1, min(dim_a, dim_b) ** 2)) + Fraction(1, 4)


def witness_violated(u_c: float, dim_a: int, dim_b: int) -> bool:
    return u_c > float(witness_bound(dim_a, dim_b)) + settings.witness_guard


def unitarity_decomposition_check(bch: BipartiteChannel) -> float:
    """|u(E) - (1/(d^2-1)) sum_XY u_{X->Y}/alpha_X|."""
    lhs = unitarity(bch.channel)
    weighted = sum(
        value / sector_alpha(bch, source)
        for source, row in sub_unitarities(bch).items()
        for value in row.values()
    )
    rhs = weighted / (bch.dim**2 - 1)
    return abs(lhs - rhs)


def addressability(bch: BipartiteChannel) -> Addressability:
    traces = {
        sector: sector_alpha(bch, sector) * float(np.trace(bch.blocks.block(sector, sector)))
        for sector in Sector
    }
    e_a, e_b, e_ab = traces[Sector.A], traces[Sector.B], traces[Sector.AB]
    return Addressability(a=e_ab - e_a * e_b, e_a=e_a, e_b=e_b, e_ab=e_ab)


def entanglement_fidelity(ch: Channel) -> float:
    d = _require_square(ch, "entanglement fidelity")
    phi = np.eye(d).reshape(-1) / np.sqrt(d)
    return float(np.real(phi.conj() @ ch.choi @ phi))


def infidelity(ch: Channel) -> float:
    """Haar-average infidelity r = 1 - (d F_e + 1)/(d + 1)."""
    d = _require_square(ch, "infidelity")
    return 1.0 - (d * entanglement_fidelity(ch) + 1.0) / (d + 1.0)


def diamond_bounds(ch: Channel) -> DiamondBounds:
    d = _require_square(ch, "diamond bounds")
    r = max(infidelity(ch), 0.0)
    u = unitarity(ch)
    k_sq = (d * d - 1) / (d * d) * (u + 2 * d * r / (d - 1) - 1)
    if k_sq < -1e-12:
        raise NumericalDomainError(f"K^2 = {k_sq:.3e} is negative beyond -1e-12")
    k_sq = max(k_sq, 0.0)
    return DiamondBounds(
        lower_r=d / (d + 1) * r,
        upper_r=float(np.sqrt(d * (d + 1) * r)),
        lower_u=float(np.sqrt(k_sq) / np.sqrt(2)),
        upper_u=float(np.sqrt(d**3 * k_sq / 4 + (d + 1) ** 2 * r**2 / 2)),
    )


@dataclass(frozen=True, eq=False)
class ComplementaryPair:
    primary: Channel
    complementary: Channel
    isometry: np.ndarray

    @property
    def environment_dim(self) -> int:
        return self.complementary.dim_out


def complementary_channel(ch: Channel) -> ComplementaryPair:
    """Stinespring pair V = sum_i K_i (x) |i>, environment dim = Kraus rank."""
    kraus = ch.kraus
    rank, d_out, d_in = kraus.shape
    if rank == 0:
        raise InvalidChannelError("Channel has no Kraus operators above the cutoff")
    # V[(o, i), x] = K_i[o, x]
    isometry = kraus.transpose(1, 0, 2).reshape(d_out * rank, d_in)
    gram_error = float(np.max(np.abs(isometry.conj().T @ isometry - np.eye(d_in))))
    if gram_error > settings.cptp_tol:
        raise InvalidChannelError(f"Dilation is not an isometry: {gram_error:.3e}")
    # Complementary Kraus F_o[i, x] = K_i[o, x]
    complementary = Channel.from_kraus(kraus.transpose(1, 0, 2))
    return ComplementaryPair(primary=ch, complementary=complementary, isometry=isometry)


def information_disturbance_sum(ch: Channel) -> float:
    pair = complementary_channel(ch)
    u_primary = unitarity_rectangular(ch)
    u_env = (
        0.0 if pair.environment_dim == 1 else unitarity_rectangular(pair.complementary)
    )
    return u_primary + u_env


def _pauli_observables(d: int) -> np.ndarray:
    if not is_power_of_two(d) or d < 2:
        raise UnsupportedError(f"Pauli operators need a power-of-two dimension, got {d}")
    return make_basis(d).elements


def _centred_expectations(
    ch: Channel, states: np.ndarray, observables: np.ndarray, reference: np.ndarray
) -> np.ndarray:
    """tr(P_i [E(psi_k) - E(ref)]) for every observable i and state k."""
    outputs = ch.apply(states) - ch.apply(reference)[np.newaxis]
    return np.real(np.einsum("iab,kba->ik", observables, outputs))


def correlation_functions(bch: BipartiteChannel) -> np.ndarray:
    """Array F[i, j, k, k2] over traceless normalized Paulis."""
    da, db, d = bch.dim_a, bch.dim_b, bch.dim
    paulis_a = _pauli_observables(da)[1:]
    paulis_b = _pauli_observables(db)[1:]
    na, nb = len(paulis_a), len(paulis_b)

    joint_ops = np.einsum("iab,jcd->ijacbd", paulis_a, paulis_b).reshape(na * nb, d, d)
    joint_states = (np.eye(d)[np.newaxis] + joint_ops) / d
    joint = _centred_expectations(bch.channel, joint_states, joint_ops, np.eye(d) / d)
    joint = joint.reshape(na, nb, na, nb)

    ch_a = local_channel(bch, Sector.A)
    ch_b = local_channel(bch, Sector.B)
    local_a = _centred_expectations(
        ch_a, (np.eye(da)[np.newaxis] + paulis_a) / da, paulis_a, np.eye(da) / da
    )
    local_b = _centred_expectations(
        ch_b, (np.eye(db)[np.newaxis] + paulis_b) / db, paulis_b, np.eye(db) / db
    )
    product = np.einsum("ik,jl->ijkl", local_a**2, local_b**2)
    return joint**2 - product


def correlation_function(bch: BipartiteChannel, i: int, j: int, k: int, k2: int) -> float:
    """One centred correlation function; indices count traceless Paulis from 1."""
    values = correlation_functions(bch)
    try:
        return float(values[i - 1, j - 1, k - 1, k2 - 1])
    except IndexError as e:
        raise InvalidInputError(f"Pauli index out of range: {(i, j, k, k2)}") from e


def correlation_function_sum(bch: BipartiteChannel) -> float:
    return float(
        sector_alpha(bch, Sector.AB) * bch.dim**2 * np.sum(correlation_functions(bch))
    )


def correlation_function_identity(bch: BipartiteChannel) -> float:
    """Residual between u_c and its correlation-function expansion."""
    return abs(correlation_function_sum(bch) - correlated_unitarity(bch))


def norm_comparison(bch: BipartiteChannel) -> NormComparison:
    blocks = bch.blocks
    t_ab_block = blocks.block(Sector.AB, Sector.AB)
    t_a_block = blocks.block(Sector.A, Sector.A)
    t_b_block = blocks.block(Sector.B, Sector.B)
    product = np.kron(t_a_block, t_b_block)

    t_ab = float(np.linalg.norm(t_ab_block))
    t_a_t_b = float(np.linalg.norm(t_a_block) * np.linalg.norm(t_b_block))
    delta = float(np.linalg.norm(t_ab_block - product))
    if min(t_ab, t_a_t_b) < 1e-14:
        cos_theta = 0.0
        expected = t_ab**2 + t_a_t_b**2
    else:
        cos_theta = float(np.sum(t_ab_block * product) / (t_ab * t_a_t_b))
        expected = t_ab**2 + t_a_t_b**2 - 2 * t_ab * t_a_t_b * cos_theta

    u_c = correlated_unitarity(bch)
    scaled = u_c / sector_alpha(bch, Sector.AB)
    root = np.sqrt(max(scaled + t_a_t_b**2, 0.0))
    return NormComparison(
        delta=delta,
        u_c=u_c,
        t_ab=t_ab,
        t_a_t_b=t_a_t_b,
        theta_cos=cos_theta,
        identity_residual=abs(delta**2 - expected),
        lower_bound_sq=float(scaled + 2 * t_a_t_b**2 - 2 * root * t_a_t_b),
        upper_bound_sq=float(scaled + 2 * t_a_t_b**2 + 2 * root * t_a_t_b),
    )


def _unital_block(ch: Channel) -> tuple[np.ndarray, bool]:
    basis = make_basis(ch.dim_in)
    matrix = to_liouville(ch, basis, basis)
    unital = float(np.sum(np.abs(matrix[1:, 0]) ** 2)) < 1e-20
    return matrix[1:, 1:], unital


def t_inner_product_bounds(ch1: Channel, ch2: Channel) -> float:
    """Re tr(T1^dagger T2), checked against the proven bounds."""
    d = _require_square(ch1, "T inner product")
    if (ch2.dim_in, ch2.dim_out) != (d, d):
        raise InvalidInputError("T inner product needs channels of equal dimension")
    t1, unital1 = _unital_block(ch1)
    t2, unital2 = _unital_block(ch2)
    value = float(np.real(np.sum(t1.conj() * t2)))
    lower = -1.0 if (d == 2 or unital1 or unital2) else -float(d)
    upper = float(d * d - 1)
    if not lower - 1e-9 <= value <= upper + 1e-9:
        raise NumericalDomainError(
            f"<T1, T2> = {value:.6f} outside [{lower:g}, {upper:g}]"
        )
    return value


def _commutation_signs(d: int) -> np.ndarray:
    single = np.array(
        [[1 if a == 0 or b == 0 or a == b else -1 for b in range(4)] for a in range(4)]
    )
    signs = np.ones((1, 1), dtype=int)
    for _ in range(d.bit_length() - 1):
        signs = np.kron(signs, single)
    return signs


def _check_pauli_weights(weights: np.ndarray) -> tuple[int, int]:
    if weights.ndim != 2:
        raise InvalidInputError(f"Pauli weights must be a table, got shape {weights.shape}")
    dims = []
    for n in weights.shape:
        d = int(round(np.sqrt(n)))
        if d * d != n or not is_power_of_two(d) or d < 2:
            raise InvalidInputError(f"Pauli table axis of length {n} is not 4^n")
        dims.append(d)
    if np.any(weights < -1e-15):
        raise InvalidInputError("Pauli weights must be nonnegative")
    if abs(float(weights.sum()) - 1.0) > 1e-12:
        raise InvalidInputError(f"Pauli weights must sum to 1, got {weights.sum():.15g}")
    return dims[0], dims[1]


def pauli_channel_measures(weights: np.ndarray | Sequence[Sequence[float]]) -> MeasureReport:
    """Closed-form measures of sum_ab w_ab (P_a (x) P_b) . (P_a (x) P_b)."""
    w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
    da, db = _check_pauli_weights(np.asarray(weights, dtype=float))
    d = da * db
    na, nb = da * da, db * db
    alpha_a, alpha_b = 1.0 / (na - 1), 1.0 / (nb - 1)

    # sum p = dA dB over pairs, sum q = d_X over each marginal
    p = d * w
    q_a = p.sum(axis=1) / db
    q_b = p.sum(axis=0) / da
    sum_p2 = float(np.sum(p**2))
    sum_qa2 = float(np.sum(q_a**2))
    sum_qb2 = float(np.sum(q_b**2))

    u = (sum_p2 - 1) / (d * d - 1)
    u_aa = (sum_qa2 - 1) * alpha_a
    u_bb = (sum_qb2 - 1) * alpha_b
    u_c = (sum_p2 - sum_qa2 * sum_qb2) * alpha_a * alpha_b
    u_abab = ((d * d - 1) * u - (na - 1) * u_aa - (nb - 1) * u_bb) * alpha_a * alpha_b

    fidelities = _commutation_signs(da) @ w @ _commutation_signs(db).T
    e_a = alpha_a * float(np.sum(fidelities[1:, 0]))
    e_b = alpha_b * float(np.sum(fidelities[0, 1:]))
    e_ab = alpha_a * alpha_b * float(np.sum(fidelities[1:, 1:]))

    diagonal = {Sector.A: u_aa, Sector.B: u_bb, Sector.AB: u_abab}
    sub = {
        s.value: {t.value: (diagonal[s] if s is t else 0.0) for t in Sector}
        for s in Sector
    }
    bound = witness_bound(da, db)
    f_e = float(w[0, 0])
    return MeasureReport(
        dim_a=da,
        dim_b=db,
        u=u,
        sub=sub,
        u_c=u_c,
        witness_bound=float(bound),
        witness_bound_exact=str(bound),
        witness_violated=witness_violated(u_c, da, db),
        addressability=Addressability(a=e_ab - e_a * e_b, e_a=e_a, e_b=e_b, e_ab=e_ab),
        infidelity=1.0 - (d * f_e + 1.0) / (d + 1.0),
        x_norms={s.value: 0.0 for s in Sector},
    )


def analyze(bch: BipartiteChannel) -> MeasureReport:
    """Every measure of a bipartite channel computed from its Liouville blocks."""
    table = sub_unitarities(bch)
    u_c = correlated_unitarity(bch)
    bound = witness_bound(bch.dim_a, bch.dim_b)
    return MeasureReport(
        dim_a=bch.dim_a,
        dim_b=bch.dim_b,
        u=unitarity(bch.channel),
        sub={s.value: {t.value: v for t, v in row.items()} for s, row in table.items()},
        u_c=u_c,
        witness_bound=float(bound),
        witness_bound_exact=str(bound),
        witness_violated=witness_violated(u_c, bch.dim_a, bch.dim_b),
        addressability=addressability(bch),
        infidelity=infidelity(bch.channel),
        x_norms={s.value: bch.blocks.x_norm(s) for s in Sector},
        decomposition_residual=unitarity_decomposition_check(bch),
    )


class ChannelAnalyzer:
    """Batch front-end over ``analyze`` with a running tally of witnessed channels."""

    def __init__(self) -> None:
        self.analyzed = 0
        self.witnessed = 0

    def analyze(self, bch: BipartiteChannel) -> MeasureReport:
        report = analyze(bch)
        self.analyzed += 1
        if report.witness_violated:
            self.witnessed += 1
            logger.debug("Channel %d exceeds the witness bound: u_c=%.6f", self.analyzed, report.u_c)
        return report

    def analyze_many(self, channels: Iterable[BipartiteChannel]) -> list[MeasureReport]:
        return [self.analyze(bch) for bch in channels]


def _haar_states(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(n, d)) + 1j * rng.normal(size=(n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def haar_unitarity_estimate(
    ch: Channel, n: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo u = d/(d-1) E_psi[tr E'(psi)^2], E' the centred channel."""
    d = _require_square(ch, "unitarity")
    psi = _haar_states(d, n, rng)
    vecs = np.einsum("ni,nj->nij", psi, psi.conj()).reshape(n, -1)
    centre = ch.superoperator @ (np.eye(d).reshape(-1) / d)
    shifted = vecs @ ch.superoperator.T - centre[np.newaxis]
    samples = d / (d - 1) * np.sum(np.abs(shifted) ** 2, axis=1)
    return float(np.mean(samples)), float(np.std(samples, ddof=1) / np.sqrt(n))


def haar_average_fidelity(
    ch: Channel, n: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo mean of <psi|E(psi)|psi>."""
    d = _require_square(ch, "average fidelity")
    psi = _haar_states(d, n, rng)
    vecs = np.einsum("ni,nj->nij", psi, psi.conj()).reshape(n, -1)
    outputs = vecs @ ch.superoperator.T
    samples = np.real(np.sum(vecs.conj() * outputs, axis=1))
    return float(np.mean(samples)), float(np.std(samples, ddof=1) / np.sqrt(n))


def zero_correlation_mixture(
    first: BipartiteChannel, second: BipartiteChannel
) -> tuple[BipartiteChannel, float]:
    """Mixture t*first + (1-t)*second with u_c = 0.

    The endpoints must have correlated unitarities of opposite sign. The
    result is generally not a product channel, so Delta > 0 while u_c = 0.
    """
    if (first.dim_a, first.dim_b) != (second.dim_a, second.dim_b):
        raise InvalidInputError("Mixed channels must share subsystem dimensions")

    def mixture(t: float) -> BipartiteChannel:
        return BipartiteChannel(
            first.dim_a, first.dim_b, Channel.mix([first.channel, second.channel], [t, 1 - t])
        )

    def u_c_at(t: float) -> float:
        return correlated_unitarity(mixture(t))

    lo, hi = u_c_at(0.0), u_c_at(1.0)
    if lo * hi > 0:
        raise InvalidInputError(
            f"u_c does not change sign between the endpoints ({lo:.3e}, {hi:.3e})"
        )
    t = float(optimize.brentq(u_c_at, 0.0, 1.0, xtol=1e-15, rtol=1e-15))
    return mixture(t), t
