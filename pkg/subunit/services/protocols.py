# subunit/services/protocols.py
"""Simulation of the simultaneous (C x C) and reset-assisted (C x 1) protocols.

Monte Carlo runs propagate Liouville coefficient matrices of shape (4, 4)
for a whole batch of sequences at once: a local gate R_A (x) R_B acts as
``A -> R_A A R_B^T`` and the noise as ``vec(A) -> L vec(A)``.
"""

from __future__ import annotations

import functools
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from subunit.core.errors import InvalidInputError, UnsupportedError
from subunit.models.datasets import DecayDataset, SequenceResult
from subunit.services.liouville import (
    PAULIS,
    BipartiteChannel,
    Channel,
    Sector,
    bipartite_basis,
    local_channel,
)
from subunit.services.measures import unitarity
from subunit.services.twirl import local_twirl, predict_decay, twirl_matrix
from subunit.services.zoo import depolarizing_channel, reset_channel

logger = logging.getLogger(__name__)

_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_PHASE = np.array([[1, 0], [0, 1j]], dtype=complex)


def _canonical_key(u: np.ndarray) -> tuple[float, ...]:
    flat = u.reshape(-1)
    pivot = flat[np.flatnonzero(np.abs(flat) > 1e-9)[0]]
    canon = flat * (abs(pivot) / pivot)
    return tuple(np.round(canon.real, 8)) + tuple(np.round(canon.imag, 8))


@functools.cache
def _single_qubit_cliffords() -> tuple[np.ndarray, ...]:
    """Breadth-first closure of {H, S} modulo global phase."""
    found = {_canonical_key(np.eye(2)): np.eye(2, dtype=complex)}
    frontier = [np.eye(2, dtype=complex)]
    while frontier:
        nxt = []
        for u in frontier:
            for g in (_HADAMARD, _PHASE):
                w = g @ u
                key = _canonical_key(w)
                if key not in found:
                    found[key] = w
                    nxt.append(w)
        frontier = nxt
    return tuple(found.values())


def clifford_group(n_qubits: int = 1) -> list[np.ndarray]:
    if n_qubits != 1:
        raise UnsupportedError("Only the single-qubit Clifford group is enumerated")
    return list(_single_qubit_cliffords())


def single_qubit_ptm(u: np.ndarray) -> np.ndarray:
    """Real Liouville matrix of U . U^dagger over the normalized Pauli basis."""
    paulis = PAULIS / np.sqrt(2)
    return np.real(np.einsum("iab,bc,jcd,ad->ij", paulis, u, paulis, u.conj()))


@functools.cache
def _clifford_ptms() -> np.ndarray:
    ptms = np.array([single_qubit_ptm(u) for u in _single_qubit_cliffords()])
    ptms.setflags(write=False)
    return ptms


def sample_cliffords(n: int, rng: np.random.Generator) -> np.ndarray:
    """n uniform indices into ``clifford_group()``."""
    return rng.integers(len(_clifford_ptms()), size=n)


class ResetModel(ABC):
    """Channel applied to the bipartite system after every noisy gate in the C x 1 protocol."""

    @abstractmethod
    def channel(self, dim_a: int, dim_b: int) -> BipartiteChannel:
        """The reset acting on A (x) B."""

    @property
    @abstractmethod
    def label(self) -> str:
        """Short name used in result tables."""


def _reset_b(dim_a: int, sigma: np.ndarray) -> Channel:
    return Channel.identity(dim_a).tensor(reset_channel(sigma))


@dataclass(frozen=True)
class IdealReset(ResetModel):
    def channel(self, dim_a: int, dim_b: int) -> BipartiteChannel:
        return BipartiteChannel(dim_a, dim_b, _reset_b(dim_a, np.eye(dim_b) / dim_b))

    @property
    def label(self) -> str:
        return "ideal"


@dataclass(frozen=True)
class DepolarizingReset(ResetModel):
    """p R_B + (1 - p) id: p = 1 is the ideal reset, p = 0 no reset at all."""

    p: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise InvalidInputError(f"Reset strength p must lie in [0, 1], got {self.p}")

    def channel(self, dim_a: int, dim_b: int) -> BipartiteChannel:
        ideal = _reset_b(dim_a, np.eye(dim_b) / dim_b)
        mixed = Channel.mix([ideal, Channel.identity(dim_a * dim_b)], [self.p, 1 - self.p])
        return BipartiteChannel(dim_a, dim_b, mixed)

    @property
    def label(self) -> str:
        return f"depolarizing(p={self.p:g})"


@dataclass(frozen=True)
class BlochReset(ResetModel):
    """Reset of the B qubit to (I + b.sigma)/2."""

    b: tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(self.b) != 3:
            raise InvalidInputError(f"Bloch vector needs 3 components, got {len(self.b)}")
        if float(np.linalg.norm(self.b)) > 1 + 1e-9:
            raise InvalidInputError(f"Bloch vector {self.b} has norm above 1")

    @property
    def state(self) -> np.ndarray:
        return bloch_state(self.b)

    def channel(self, dim_a: int, dim_b: int) -> BipartiteChannel:
        if dim_b != 2:
            raise UnsupportedError("Bloch resets need a qubit B subsystem")
        return BipartiteChannel(dim_a, dim_b, _reset_b(dim_a, self.state))

    @property
    def label(self) -> str:
        return "bloch(" + ",".join(f"{c:g}" for c in self.b) + ")"


def bloch_state(b: Sequence[float]) -> np.ndarray:
    return (np.eye(2) + np.einsum("i,iab->ab", np.asarray(b, dtype=float), PAULIS[1:])) / 2


@dataclass(frozen=True, eq=False)
class NoiseModel:
    gate_noise: BipartiteChannel
    state_prep: Optional[Channel] = None
    measurement_noise: Optional[Channel] = None
    reset_error: ResetModel = field(default_factory=IdealReset)

    def effective_state(self, rho: np.ndarray) -> np.ndarray:
        return rho if self.state_prep is None else self.state_prep.apply(rho)

    def effective_observable(self, observable: np.ndarray) -> np.ndarray:
        if self.measurement_noise is None:
            return observable
        return self.measurement_noise.adjoint_apply(observable)


def _check_k_list(k_list: Sequence[int]) -> list[int]:
    ks = [int(k) for k in k_list]
    if not ks or any(k < 1 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
        raise InvalidInputError(f"k values must be positive and strictly ascending: {ks}")
    return ks


def _check_qubits(bch: BipartiteChannel, need_b: bool) -> None:
    if bch.dim_a != 2 or (need_b and bch.dim_b != 2):
        raise UnsupportedError(
            f"Clifford sequences need qubit subsystems, got ({bch.dim_a}, {bch.dim_b})"
        )


def _measure(
    m: np.ndarray,
    shots: Optional[int],
    observable: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sequence (m_hat, m^2 estimate); binomial counts when ``shots`` is set."""
    if shots is None:
        return m, m * m
    if shots < 2:
        raise InvalidInputError(f"Shot noise needs at least 2 shots, got {shots}")
    spectrum = np.linalg.eigvalsh(observable)
    if spectrum.min() < -1e-10 or spectrum.max() > 1 + 1e-10:
        raise InvalidInputError("Shot noise needs an observable with spectrum in [0, 1]")
    counts = rng.binomial(shots, np.clip(m, 0.0, 1.0)).astype(float)
    return counts / shots, counts * (counts - 1) / (shots * (shots - 1))


def _coefficients(bch: BipartiteChannel, op: np.ndarray) -> np.ndarray:
    return np.real(bipartite_basis(bch.dim_a, bch.dim_b).coefficients(op))


def _simulate(
    layer: np.ndarray,
    a0: np.ndarray,
    b: np.ndarray,
    shape: tuple[int, int],
    k: int,
    n_seqs: int,
    rng: np.random.Generator,
    twirl_b: bool,
) -> np.ndarray:
    """m(s) = <b, a_k> for ``n_seqs`` random sequences of length k."""
    ptms = _clifford_ptms()
    n = shape[0] * shape[1]
    state = np.broadcast_to(a0.reshape(shape), (n_seqs, *shape)).copy()
    for _ in range(k):
        gates_a = ptms[sample_cliffords(n_seqs, rng)]
        state = np.einsum("sij,sjl->sil", gates_a, state)
        if twirl_b:
            gates_b = ptms[sample_cliffords(n_seqs, rng)]
            state = np.einsum("sil,sml->sim", state, gates_b)
        state = (state.reshape(n_seqs, n) @ layer.T).reshape(n_seqs, *shape)
    return state.reshape(n_seqs, n) @ b


def run_protocol_1(
    noise: NoiseModel,
    rho: np.ndarray,
    observable: np.ndarray,
    k_list: Sequence[int],
    seqs_per_k: int,
    rng: np.random.Generator,
    shots: Optional[int] = None,
    exact: bool = False,
    keep_samples: bool = False,
) -> DecayDataset:
    """Simultaneous local Clifford sequences; records E[m(s)^2] per length."""
    bch = noise.gate_noise
    _check_qubits(bch, need_b=True)
    ks = _check_k_list(k_list)
    rho_eff = noise.effective_state(np.asarray(rho, dtype=complex))
    obs_eff = noise.effective_observable(np.asarray(observable, dtype=complex))

    if exact:
        curve = predict_decay(twirl_matrix(bch), obs_eff, rho_eff, ks[-1])
        return DecayDataset.exact_curve(ks, [curve.mean_m2[k - 1] for k in ks])

    if seqs_per_k < 2:
        raise InvalidInputError(f"Monte Carlo needs at least 2 sequences per k, got {seqs_per_k}")
    a0 = _coefficients(bch, rho_eff)
    b = _coefficients(bch, obs_eff)
    results = []
    for k, child in zip(ks, rng.spawn(len(ks))):
        m = _simulate(bch.liouville, a0, b, (4, 4), k, seqs_per_k, child, twirl_b=True)
        m_hat, m2 = _measure(m, shots, np.asarray(observable), child)
        results.append(SequenceResult.from_samples(k, m_hat, m2))
        logger.debug("Protocol 1 k=%d mean m^2=%.6g", k, results[-1].mean_square)
    return DecayDataset.from_results(results, keep_samples=keep_samples)


def _reset_channel(noise: NoiseModel) -> BipartiteChannel:
    bch = noise.gate_noise
    return noise.reset_error.channel(bch.dim_a, bch.dim_b)


def run_protocol_2(
    noise: NoiseModel,
    rho: np.ndarray,
    observable_a: np.ndarray,
    k_list: Sequence[int],
    seqs_per_k: int,
    rng: np.random.Generator,
    shots: Optional[int] = None,
    exact: bool = False,
    keep_samples: bool = False,
) -> DecayDataset:
    """Cliffords on A only with B reset after every noisy gate; measures M_A (x) I.

    B is also reset once after state preparation, so the first noisy gate sees
    the same B state as every later one and the decay is a single exponential
    in u_{A->A} for an ideal reset.
    """
    bch = noise.gate_noise
    _check_qubits(bch, need_b=False)
    ks = _check_k_list(k_list)
    reset = _reset_channel(noise)
    layer = reset.compose(bch)
    observable = np.kron(np.asarray(observable_a, dtype=complex), np.eye(bch.dim_b))
    prepared = noise.effective_state(np.asarray(rho, dtype=complex))
    rho_eff = reset.channel.apply(prepared)
    obs_eff = noise.effective_observable(observable)
    a0 = _coefficients(bch, rho_eff)
    b = _coefficients(bch, obs_eff)
    shape = (bch.dim_a**2, bch.dim_b**2)

    if exact:
        lv = layer.liouville
        moment = np.outer(a0, a0)
        values = {}
        for k in range(1, ks[-1] + 1):
            moment = lv @ local_twirl(moment, bch.dim_a, bch.dim_b, Sector.A) @ lv.T
            values[k] = float(b @ moment @ b)
        return DecayDataset.exact_curve(ks, [values[k] for k in ks])

    if seqs_per_k < 2:
        raise InvalidInputError(f"Monte Carlo needs at least 2 sequences per k, got {seqs_per_k}")
    results = []
    for k, child in zip(ks, rng.spawn(len(ks))):
        m = _simulate(layer.liouville, a0, b, shape, k, seqs_per_k, child, twirl_b=False)
        m_hat, m2 = _measure(m, shots, observable, child)
        results.append(SequenceResult.from_samples(k, m_hat, m2))
        logger.debug("Protocol 2 k=%d mean m^2=%.6g", k, results[-1].mean_square)
    return DecayDataset.from_results(results, keep_samples=keep_samples)


def _unit_bloch(b: Sequence[float]) -> np.ndarray:
    vec = np.asarray(b, dtype=float)
    if vec.shape != (3,) or abs(float(np.linalg.norm(vec)) - 1.0) > 1e-9:
        raise InvalidInputError(f"Expected a unit Bloch vector, got {list(vec)}")
    return vec


def orthogonal_prep_bound(bch: BipartiteChannel, b: Sequence[float]) -> float:
    """(u(E_+b) + u(E_-b))/2, an upper bound on u_{A->A}."""
    if bch.dim_b != 2:
        raise UnsupportedError("Orthogonal preparations need a qubit B subsystem")
    vec = _unit_bloch(b)
    plus = local_channel(bch, Sector.A, bloch_state(vec))
    minus = local_channel(bch, Sector.A, bloch_state(-vec))
    return (unitarity(plus) + unitarity(minus)) / 2


_AXES = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


def min_orthogonal_prep_bound(
    bch: BipartiteChannel, directions: Optional[Sequence[Sequence[float]]] = None
) -> tuple[float, tuple[float, ...]]:
    """Tightest orthogonal-preparation bound over the given Bloch directions."""
    candidates = [tuple(float(c) for c in d) for d in (directions or _AXES)]
    values = [orthogonal_prep_bound(bch, d) for d in candidates]
    best = int(np.argmin(values))
    return values[best], candidates[best]


def run_orthogonal_reset_pair(
    noise: NoiseModel,
    b: Sequence[float],
    rho: np.ndarray,
    observable_a: np.ndarray,
    k_list: Sequence[int],
    seqs_per_k: int,
    rng: np.random.Generator,
    exact: bool = True,
) -> tuple[DecayDataset, DecayDataset]:
    """Protocol 2 twice, with B reset to (I + b.sigma)/2 and (I - b.sigma)/2."""
    vec = _unit_bloch(b)
    runs = []
    for sign, child in zip((1.0, -1.0), rng.spawn(2)):
        model = NoiseModel(
            gate_noise=noise.gate_noise,
            state_prep=noise.state_prep,
            measurement_noise=noise.measurement_noise,
            reset_error=BlochReset(tuple(float(c) for c in sign * vec)),
        )
        runs.append(
            run_protocol_2(model, rho, observable_a, k_list, seqs_per_k, child, exact=exact)
        )
    return runs[0], runs[1]


def depolarizing_spam(p_prep: float, p_meas: float, d: int = 4) -> tuple[Channel, Channel]:
    """Global depolarizing state-preparation and measurement channels."""
    return depolarizing_channel(d, p_prep), depolarizing_channel(d, p_meas)
