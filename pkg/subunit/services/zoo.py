# subunit/services/zoo.py
"""Named channels and random samplers.

Every sampler takes an explicit ``numpy.random.Generator``; ``make_rng`` and
``spawn_rngs`` build Philox streams so that a seed fixes every draw.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from subunit.core.config import settings
from subunit.core.errors import InvalidDimensionError, InvalidInputError, UnsupportedError
from subunit.services.liouville import (
    BipartiteChannel,
    Channel,
    is_power_of_two,
    pauli_strings,
    swap_unitary,
)

logger = logging.getLogger(__name__)

_MAX_RESAMPLES = 100


def make_rng(seed: Optional[int] = None) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(settings.seed if seed is None else seed))


def spawn_rngs(seed: Optional[int], n: int) -> list[np.random.Generator]:
    """Independent Philox streams split from one master seed."""
    root = np.random.SeedSequence(settings.seed if seed is None else seed)
    return [np.random.Generator(np.random.Philox(child)) for child in root.spawn(n)]


class ChannelName(str, Enum):
    IDENTITY = "identity"
    SWAP = "swap"
    CNOT = "cnot"
    DEPOLARIZING = "depolarizing"
    DEPOLARIZING_LOCAL = "depolarizing_local"
    RESET_TO_STATE = "reset_to_state"
    SWAP_MIXTURE = "swap_mixture"


@dataclass(frozen=True, eq=False)
class SeparableTerm:
    weight: float
    channel_a: Channel
    channel_b: Channel


@dataclass(frozen=True, eq=False)
class SeparableSpec:
    """Certificate that a channel is a convex mixture of product channels."""

    terms: tuple[SeparableTerm, ...]

    def __post_init__(self) -> None:
        weights = np.array([t.weight for t in self.terms])
        if weights.size == 0 or np.any(weights < 0) or abs(weights.sum() - 1) > 1e-12:
            raise InvalidInputError(f"Separable weights must be a distribution, got {weights}")

    def channel(self) -> BipartiteChannel:
        first = self.terms[0]
        mixed = Channel.mix(
            [t.channel_a.tensor(t.channel_b) for t in self.terms],
            [t.weight for t in self.terms],
        )
        return BipartiteChannel(first.channel_a.dim_in, first.channel_b.dim_in, mixed)


def _check_density_matrix(rho: np.ndarray, d: int) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (d, d):
        raise InvalidInputError(f"State must be {d}x{d}, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise InvalidInputError("State is not hermitian")
    if abs(np.trace(rho) - 1) > 1e-10 or np.linalg.eigvalsh(rho).min() < -1e-10:
        raise InvalidInputError("State is not a density matrix")
    return rho


def reset_channel(rho: np.ndarray) -> Channel:
    """Replace any input with the fixed state rho."""
    d = rho.shape[0]
    rho = _check_density_matrix(rho, d)
    superop = np.outer(rho.reshape(-1), np.eye(d).reshape(-1))
    return Channel.from_superoperator(superop, d, d)


def depolarizing_channel(d: int, p: float) -> Channel:
    """E(rho) = (1 - p) rho + p tr(rho) I/d."""
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"Depolarizing strength must lie in [0, 1], got {p}")
    full = np.outer(np.eye(d).reshape(-1), np.eye(d).reshape(-1)) / d
    return Channel.from_superoperator((1 - p) * np.eye(d * d) + p * full, d, d)


def controlled_shift(dim_a: int, dim_b: int) -> np.ndarray:
    """|a, b> -> |a, a + b mod dB>; the CNOT for qubits."""
    d = dim_a * dim_b
    u = np.zeros((d, d))
    for a in range(dim_a):
        for b in range(dim_b):
            u[a * dim_b + (a + b) % dim_b, a * dim_b + b] = 1.0
    return u


def named_channel(
    name: ChannelName | str,
    dim_a: int = 2,
    dim_b: int = 2,
    *,
    p: Optional[float] = None,
    p_b: Optional[float] = None,
    t: Optional[float] = None,
    state: Optional[np.ndarray] = None,
) -> BipartiteChannel:
    try:
        name = ChannelName(name)
    except ValueError as e:
        raise InvalidInputError(f"Unknown channel name: {name}") from e
    if dim_a < 2 or dim_b < 2:
        raise InvalidDimensionError(f"Subsystem dims must be >= 2, got ({dim_a}, {dim_b})")
    d = dim_a * dim_b

    if name is ChannelName.IDENTITY:
        channel = Channel.identity(d)
    elif name is ChannelName.SWAP:
        if dim_a != dim_b:
            raise InvalidInputError("swap needs dA == dB")
        channel = Channel.from_unitary(swap_unitary(dim_a, dim_b))
    elif name is ChannelName.CNOT:
        channel = Channel.from_unitary(controlled_shift(dim_a, dim_b))
    elif name is ChannelName.DEPOLARIZING:
        channel = depolarizing_channel(d, 1.0 if p is None else p)
    elif name is ChannelName.DEPOLARIZING_LOCAL:
        p_a = 1.0 if p is None else p
        channel = depolarizing_channel(dim_a, p_a).tensor(
            depolarizing_channel(dim_b, p_a if p_b is None else p_b)
        )
    elif name is ChannelName.RESET_TO_STATE:
        target = np.eye(d) / d if state is None else np.asarray(state)
        channel = reset_channel(target)
    else:
        return swap_mixture(1.0 if t is None else t, dim_a)
    return BipartiteChannel(dim_a, dim_b, channel)


def swap_mixture(t: float, d: int = 2) -> BipartiteChannel:
    """t * SWAP + (1 - t) * identity."""
    if not 0.0 <= t <= 1.0:
        raise InvalidInputError(f"SWAP weight must lie in [0, 1], got {t}")
    swap = Channel.from_unitary(swap_unitary(d, d))
    return BipartiteChannel(d, d, Channel.mix([swap, Channel.identity(d * d)], [t, 1 - t]))


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary from the QR decomposition of a Ginibre matrix."""
    if d < 2:
        raise InvalidDimensionError(f"random_unitary needs d >= 2, got {d}")
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases[np.newaxis, :]


def random_channel(
    dim_in: int, dim_out: int, kraus_rank: int, rng: np.random.Generator
) -> Channel:
    """Random CPTP map from a normalized Wishart Choi matrix."""
    if dim_in < 1 or dim_out < 1:
        raise InvalidDimensionError(f"Invalid channel dims {dim_in}->{dim_out}")
    if not 1 <= kraus_rank <= dim_in * dim_out:
        raise InvalidInputError(
            f"Kraus rank must lie in [1, {dim_in * dim_out}], got {kraus_rank}"
        )
    if kraus_rank * dim_out < dim_in:
        raise InvalidInputError(
            f"A {dim_in}->{dim_out} channel needs Kraus rank >= "
            f"{-(-dim_in // dim_out)} to be trace preserving, got {kraus_rank}"
        )
    size = dim_in * dim_out
    for attempt in range(_MAX_RESAMPLES):
        g = rng.normal(size=(size, kraus_rank)) + 1j * rng.normal(size=(size, kraus_rank))
        wishart = g @ g.conj().T
        marginal = np.einsum(
            "oioj->ij", wishart.reshape(dim_out, dim_in, dim_out, dim_in)
        )
        weights, vectors = np.linalg.eigh(marginal)
        if weights.min() <= 1e-12 * weights.max():
            logger.debug("Resampling singular Choi marginal (attempt %d)", attempt + 1)
            continue
        inv_sqrt = (vectors / np.sqrt(weights)) @ vectors.conj().T
        scale = np.kron(np.eye(dim_out), inv_sqrt)
        choi = scale @ wishart @ scale.conj().T / dim_in
        return Channel.from_choi((choi + choi.conj().T) / 2, dim_in, dim_out)
    raise InvalidInputError("Could not draw a channel with invertible marginal")


def random_product_channel(
    dim_a: int,
    dim_b: int,
    rng: np.random.Generator,
    rank_a: Optional[int] = None,
    rank_b: Optional[int] = None,
) -> BipartiteChannel:
    rank_a = rank_a or int(rng.integers(1, dim_a * dim_a + 1))
    rank_b = rank_b or int(rng.integers(1, dim_b * dim_b + 1))
    channel_a = random_channel(dim_a, dim_a, rank_a, rng)
    channel_b = random_channel(dim_b, dim_b, rank_b, rng)
    return BipartiteChannel(dim_a, dim_b, channel_a.tensor(channel_b))


def random_separable(
    dim_a: int,
    dim_b: int,
    num_terms: int,
    rng: np.random.Generator,
    unital: bool = False,
) -> tuple[BipartiteChannel, SeparableSpec]:
    """Dirichlet mixture of random product channels and its certificate.

    With ``unital`` the factors are random mixtures of local unitaries.
    """
    if num_terms < 1:
        raise InvalidInputError(f"num_terms must be >= 1, got {num_terms}")
    weights = rng.dirichlet(np.ones(num_terms))
    # Dirichlet draws sum to 1 only up to rounding
    weights = weights / weights.sum()
    sampler = random_mixed_unitary_channel if unital else _random_any_rank
    terms = tuple(
        SeparableTerm(float(w), sampler(dim_a, rng), sampler(dim_b, rng)) for w in weights
    )
    spec = SeparableSpec(terms)
    return spec.channel(), spec


def _random_any_rank(d: int, rng: np.random.Generator) -> Channel:
    return random_channel(d, d, int(rng.integers(1, d * d + 1)), rng)


def random_mixed_unitary_channel(
    d: int, rng: np.random.Generator, num_unitaries: int = 3
) -> Channel:
    weights = rng.dirichlet(np.ones(num_unitaries))
    unitaries = [random_unitary(d, rng) for _ in range(num_unitaries)]
    return Channel.from_kraus(
        [np.sqrt(w) * u for w, u in zip(weights / weights.sum(), unitaries)]
    )


def random_density_matrix(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pauli_weights(dim_a: int, dim_b: int, rng: np.random.Generator) -> np.ndarray:
    weights = rng.dirichlet(np.ones(dim_a**2 * dim_b**2))
    return (weights / weights.sum()).reshape(dim_a**2, dim_b**2)


def _pauli_dims(*dims: int) -> list[np.ndarray]:
    for d in dims:
        if d < 2 or not is_power_of_two(d):
            raise UnsupportedError(f"Pauli error bases need power-of-two dims, got {d}")
    return [pauli_strings(d.bit_length() - 1) for d in dims]


def pauli_channel(weights: np.ndarray | Sequence[Sequence[float]]) -> BipartiteChannel:
    """sum_ab w_ab (P_a (x) P_b) rho (P_a (x) P_b) with unnormalized Paulis."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise InvalidInputError("Pauli weights must be a nonnegative table summing to 1")
    dim_a, dim_b = int(round(np.sqrt(w.shape[0]))), int(round(np.sqrt(w.shape[1])))
    paulis_a, paulis_b = _pauli_dims(dim_a, dim_b)
    kraus = [
        np.sqrt(w[i, j]) * np.kron(paulis_a[i], paulis_b[j])
        for i, j in zip(*np.nonzero(w))
    ]
    return BipartiteChannel(dim_a, dim_b, Channel.from_kraus(kraus))


def unitary_error_basis_mixture(
    weights: Sequence[float], dim_a: int = 2, dim_b: int = 2
) -> BipartiteChannel:
    """sum_k p_k (U_k (x) V_k) . (U_k (x) V_k)^dagger with distinct Paulis per side.

    Term k pairs the k-th Pauli string on A with the k-th on B.
    """
    p = np.asarray(weights, dtype=float)
    paulis_a, paulis_b = _pauli_dims(dim_a, dim_b)
    if p.ndim != 1 or p.size > min(len(paulis_a), len(paulis_b)):
        raise InvalidInputError(
            f"At most {min(len(paulis_a), len(paulis_b))} error-basis weights allowed"
        )
    if np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
        raise InvalidInputError(f"Error-basis weights must be a distribution, got {p}")
    kraus = [
        np.sqrt(pk) * np.kron(paulis_a[k], paulis_b[k]) for k, pk in enumerate(p) if pk > 0
    ]
    return BipartiteChannel(dim_a, dim_b, Channel.from_kraus(kraus))


def error_basis_correlated_unitarity(
    weights: Sequence[float], dim_a: int = 2, dim_b: int = 2
) -> float:
    """Closed form u_c = dA^2 dB^2 alpha_A alpha_B (sum p^2 - (sum p^2)^2)."""
    s = float(np.sum(np.asarray(weights, dtype=float) ** 2))
    scale = (dim_a * dim_b) ** 2 / ((dim_a**2 - 1) * (dim_b**2 - 1))
    return scale * (s - s * s)


def apply_local_unitaries(
    bch: BipartiteChannel,
    v_a: np.ndarray,
    v_b: np.ndarray,
    u_a: np.ndarray,
    u_b: np.ndarray,
) -> BipartiteChannel:
    """(V_A (x) V_B) o E o (U_A^dagger (x) U_B^dagger)."""
    after = Channel.from_unitary(np.kron(v_a, v_b), validate=False)
    before = Channel.from_unitary(np.kron(u_a, u_b).conj().T, validate=False)
    return BipartiteChannel(bch.dim_a, bch.dim_b, after.compose(bch.channel).compose(before))


def pinned_reset_channel(seed: int = 7) -> BipartiteChannel:
    """0.9 (E_A (x) E_B) + 0.1 G with rank-2 random factors; the reset-sweep default."""
    rng = make_rng(seed)
    channel_a = random_channel(2, 2, 2, rng)
    channel_b = random_channel(2, 2, 2, rng)
    global_part = random_channel(4, 4, 2, rng)
    mixed = Channel.mix([channel_a.tensor(channel_b), global_part], [0.9, 0.1])
    return BipartiteChannel(2, 2, mixed)


def convergence_channel(
    p: float, channel_a: Channel, channel_b: Channel, global_part: Channel
) -> BipartiteChannel:
    """F = p (E_A (x) E_B) + (1 - p) G."""
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"Mixing weight must lie in [0, 1], got {p}")
    mixed = Channel.mix([channel_a.tensor(channel_b), global_part], [p, 1 - p])
    return BipartiteChannel(channel_a.dim_in, channel_b.dim_in, mixed)
