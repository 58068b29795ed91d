# subunit/services/liouville.py
"""Operator bases, vectorization and channel representations.

Vectorization is row-major, ``|a><b| -> |a> (x) |b>``, so ``vectorize(M)`` is
``M.reshape(-1)``. The computational superoperator ``S`` of a channel obeys
``S @ vec(rho) == vec(E(rho))`` and equals ``U (x) U*`` for a unitary channel.

The Choi matrix uses the output-first ordering
``J = (1/d_in) sum_ij E(|i><j|) (x) |i><j|`` and has unit trace.

Bipartite Liouville matrices are stored over the product basis
``X_mu (x) Y_nu`` with ``mu`` major; sectors are selected by index sets.
"""

from __future__ import annotations

import functools
import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from subunit.core.config import settings
from subunit.core.errors import (
    InvalidChannelError,
    InvalidDimensionError,
    InvalidInputError,
    UnsupportedError,
)

logger = logging.getLogger(__name__)

PAULIS = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
PAULIS.setflags(write=False)


class Representation(str, Enum):
    KRAUS = "kraus"
    CHOI = "choi"
    LIOUVILLE = "liouville"


class Sector(str, Enum):
    """Traceless sectors of a bipartite operator space."""

    A = "A"
    B = "B"
    AB = "AB"


def is_power_of_two(d: int) -> bool:
    return d >= 1 and d & (d - 1) == 0


def _isqrt_exact(n: int, what: str) -> int:
    root = math.isqrt(n)
    if root * root != n:
        raise InvalidInputError(f"{what} of size {n} is not a perfect square")
    return root


def pauli_strings(n_qubits: int) -> np.ndarray:
    """Unnormalized Pauli strings in lexicographic {I,X,Y,Z}^n order."""
    elements = []
    for labels in itertools.product(range(4), repeat=n_qubits):
        op = np.ones((1, 1), dtype=complex)
        for label in labels:
            op = np.kron(op, PAULIS[label])
        elements.append(op)
    return np.array(elements)


def _gell_mann(d: int) -> np.ndarray:
    elements = [np.eye(d, dtype=complex) / np.sqrt(d)]
    pairs = list(itertools.combinations(range(d), 2))
    for j, k in pairs:
        m = np.zeros((d, d), dtype=complex)
        m[j, k] = m[k, j] = 1 / np.sqrt(2)
        elements.append(m)
    for j, k in pairs:
        m = np.zeros((d, d), dtype=complex)
        m[j, k] = -1j / np.sqrt(2)
        m[k, j] = 1j / np.sqrt(2)
        elements.append(m)
    for level in range(1, d):
        diag = np.zeros(d)
        diag[:level] = 1.0
        diag[level] = -level
        elements.append(np.diag(diag / np.sqrt(level * (level + 1))).astype(complex))
    return np.array(elements)


@functools.cache
def _canonical_elements(d: int) -> np.ndarray:
    if d == 1:
        elements = np.ones((1, 1, 1), dtype=complex)
    elif is_power_of_two(d):
        elements = pauli_strings(d.bit_length() - 1) / np.sqrt(d)
    else:
        elements = _gell_mann(d)
    elements.setflags(write=False)
    return elements


@dataclass(frozen=True, eq=False)
class OperatorBasis:
    """Hilbert-Schmidt orthonormal operator basis with element 0 = I/sqrt(d)."""

    dim: int
    elements: np.ndarray

    @property
    def size(self) -> int:
        return int(self.elements.shape[0])

    @cached_property
    def vectors(self) -> np.ndarray:
        """Columns are vec(X_mu)."""
        return self.elements.reshape(self.size, -1).T

    def coefficients(self, op: np.ndarray) -> np.ndarray:
        """Coordinates tr(X_mu^dagger op) of an operator."""
        return self.vectors.conj().T @ np.asarray(op, dtype=complex).reshape(-1)

    def operator(self, coeffs: np.ndarray) -> np.ndarray:
        return np.tensordot(np.asarray(coeffs), self.elements, axes=1)

    def orthonormality_residual(self) -> float:
        gram = self.vectors.conj().T @ self.vectors
        return float(np.max(np.abs(gram - np.eye(self.size))))


@functools.cache
def _basis(d: int) -> OperatorBasis:
    return OperatorBasis(dim=d, elements=_canonical_elements(d))


def make_basis(d: int, allow_trivial: bool = False) -> OperatorBasis:
    """Canonical basis: normalized Pauli strings for d = 2^n, else Gell-Mann."""
    if d < 1 or (d < 2 and not allow_trivial):
        raise InvalidDimensionError(f"Operator basis needs d >= 2, got {d}")
    return _basis(d)


def product_basis(basis_a: OperatorBasis, basis_b: OperatorBasis) -> OperatorBasis:
    """Basis X_mu (x) Y_nu ordered with mu major."""
    d = basis_a.dim * basis_b.dim
    elements = np.einsum("mij,nkl->mnikjl", basis_a.elements, basis_b.elements)
    elements = elements.reshape(basis_a.size * basis_b.size, d, d)
    elements.setflags(write=False)
    return OperatorBasis(dim=d, elements=elements)


@functools.cache
def bipartite_basis(dim_a: int, dim_b: int) -> OperatorBasis:
    return product_basis(make_basis(dim_a), make_basis(dim_b))


def vectorize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"vectorize expects a square matrix, got {m.shape}")
    return m.reshape(-1)


def unvectorize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    d = _isqrt_exact(v.size, "Vector")
    return v.reshape(d, d)


def partial_trace(rho: np.ndarray, dims: tuple[int, int], keep: int) -> np.ndarray:
    """Reduce a bipartite operator to subsystem ``keep`` (0 = A, 1 = B)."""
    dim_a, dim_b = dims
    r = np.asarray(rho).reshape(dim_a, dim_b, dim_a, dim_b)
    if keep == 0:
        return np.einsum("ijkj->ik", r)
    if keep == 1:
        return np.einsum("ijil->jl", r)
    raise InvalidInputError(f"keep must be 0 or 1, got {keep}")


def _kraus_to_superop(kraus: np.ndarray) -> np.ndarray:
    k, d_out, d_in = kraus.shape
    return np.einsum("aij,akl->ikjl", kraus, kraus.conj()).reshape(
        d_out * d_out, d_in * d_in
    )


def _kraus_to_choi(kraus: np.ndarray) -> np.ndarray:
    d_in = kraus.shape[2]
    vecs = kraus.reshape(kraus.shape[0], -1)
    return vecs.T @ vecs.conj() / d_in


def _choi_to_superop(choi: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    shuffled = (choi * d_in).reshape(d_out, d_in, d_out, d_in).transpose(0, 2, 1, 3)
    return shuffled.reshape(d_out * d_out, d_in * d_in)


def _superop_to_choi(superop: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    shuffled = superop.reshape(d_out, d_out, d_in, d_in).transpose(0, 2, 1, 3)
    return shuffled.reshape(d_out * d_in, d_out * d_in) / d_in


def _choi_to_kraus(choi: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    hermitian = (choi + choi.conj().T) / 2 * d_in
    weights, vectors = np.linalg.eigh(hermitian)
    keep = weights > settings.kraus_cutoff
    ops = [
        np.sqrt(w) * vectors[:, i].reshape(d_out, d_in)
        for i, w in zip(np.flatnonzero(keep), weights[keep])
    ]
    # Strongest operator first
    return np.array(ops[::-1])


@dataclass(frozen=True, eq=False)
class Channel:
    """A CPTP map held in one representation; the others are derived lazily."""

    dim_in: int
    dim_out: int
    representation: Representation
    data: np.ndarray

    @classmethod
    def from_kraus(
        cls, ops: Sequence[np.ndarray] | np.ndarray, validate: bool = True
    ) -> "Channel":
        kraus = np.asarray(ops, dtype=complex)
        if kraus.ndim == 2:
            kraus = kraus[np.newaxis]
        if kraus.ndim != 3:
            raise InvalidInputError(f"Kraus operators must be matrices, got {kraus.shape}")
        channel = cls(kraus.shape[2], kraus.shape[1], Representation.KRAUS, kraus)
        if validate:
            channel.validate()
        return channel

    @classmethod
    def from_choi(
        cls,
        choi: np.ndarray,
        dim_in: int,
        dim_out: Optional[int] = None,
        validate: bool = True,
    ) -> "Channel":
        choi = np.asarray(choi, dtype=complex)
        dim_out = dim_out or dim_in
        if choi.shape != (dim_in * dim_out, dim_in * dim_out):
            raise InvalidInputError(
                f"Choi matrix shape {choi.shape} does not match dims {dim_in}->{dim_out}"
            )
        channel = cls(dim_in, dim_out, Representation.CHOI, choi)
        if validate:
            channel.validate()
        return channel

    @classmethod
    def from_superoperator(
        cls,
        superop: np.ndarray,
        dim_in: Optional[int] = None,
        dim_out: Optional[int] = None,
        validate: bool = True,
    ) -> "Channel":
        superop = np.asarray(superop, dtype=complex)
        if superop.ndim != 2:
            raise InvalidInputError(f"Superoperator must be a matrix, got {superop.shape}")
        dim_out = dim_out or _isqrt_exact(superop.shape[0], "Superoperator row space")
        dim_in = dim_in or _isqrt_exact(superop.shape[1], "Superoperator column space")
        if superop.shape != (dim_out**2, dim_in**2):
            raise InvalidInputError(
                f"Superoperator shape {superop.shape} does not match dims {dim_in}->{dim_out}"
            )
        channel = cls(dim_in, dim_out, Representation.LIOUVILLE, superop)
        if validate:
            channel.validate()
        return channel

    @classmethod
    def from_unitary(cls, unitary: np.ndarray, validate: bool = True) -> "Channel":
        return cls.from_kraus(np.asarray(unitary)[np.newaxis], validate=validate)

    @classmethod
    def identity(cls, d: int) -> "Channel":
        return cls.from_superoperator(np.eye(d * d), d, d, validate=False)

    @cached_property
    def kraus(self) -> np.ndarray:
        if self.representation is Representation.KRAUS:
            return self.data
        return _choi_to_kraus(self.choi, self.dim_in, self.dim_out)

    @cached_property
    def choi(self) -> np.ndarray:
        if self.representation is Representation.CHOI:
            return self.data
        if self.representation is Representation.KRAUS:
            return _kraus_to_choi(self.data)
        return _superop_to_choi(self.data, self.dim_in, self.dim_out)

    @cached_property
    def superoperator(self) -> np.ndarray:
        if self.representation is Representation.LIOUVILLE:
            return self.data
        if self.representation is Representation.KRAUS:
            return _kraus_to_superop(self.data)
        return _choi_to_superop(self.data, self.dim_in, self.dim_out)

    @property
    def kraus_rank(self) -> int:
        return int(self.kraus.shape[0])

    def convert(self, kind: Representation | str) -> "Channel":
        """Return the same map held in another representation."""
        kind = Representation(kind)
        data = {
            Representation.KRAUS: lambda: self.kraus,
            Representation.CHOI: lambda: self.choi,
            Representation.LIOUVILLE: lambda: self.superoperator,
        }[kind]()
        return Channel(self.dim_in, self.dim_out, kind, np.array(data))

    def validate(self, tol: Optional[float] = None) -> None:
        """Raise InvalidChannelError unless the map is CPTP within ``tol``."""
        tol = settings.cptp_tol if tol is None else tol
        choi = self.choi
        hermiticity = float(np.max(np.abs(choi - choi.conj().T)))
        if hermiticity > tol:
            raise InvalidChannelError(
                f"Choi matrix is not hermitian: deviation {hermiticity:.3e} > {tol:g}"
            )
        min_eig = float(np.min(np.linalg.eigvalsh((choi + choi.conj().T) / 2)))
        if min_eig < -tol:
            raise InvalidChannelError(
                f"Choi eigenvalue {min_eig:.3e} below -{tol:g} (complete positivity)"
            )
        scaled = (choi * self.dim_in).reshape(
            self.dim_out, self.dim_in, self.dim_out, self.dim_in
        )
        marginal = np.einsum("oioj->ij", scaled)
        tp_error = float(np.max(np.abs(marginal - np.eye(self.dim_in))))
        if tp_error > tol:
            raise InvalidChannelError(
                f"Trace preservation violated by {tp_error:.3e} > {tol:g}"
            )

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Apply to one operator, or to a stack of operators along axis 0."""
        rho = np.asarray(rho, dtype=complex)
        if rho.ndim == 2:
            out = self.superoperator @ rho.reshape(-1)
            return out.reshape(self.dim_out, self.dim_out)
        flat = rho.reshape(rho.shape[0], -1) @ self.superoperator.T
        return flat.reshape(rho.shape[0], self.dim_out, self.dim_out)

    def adjoint_apply(self, observable: np.ndarray) -> np.ndarray:
        """Heisenberg picture: sum_i K_i^dagger M K_i."""
        m = np.asarray(observable, dtype=complex)
        return np.einsum("aji,jk,akl->il", self.kraus.conj(), m, self.kraus)

    def compose(self, other: "Channel") -> "Channel":
        """The map ``self o other`` (``other`` acts first)."""
        if other.dim_out != self.dim_in:
            raise InvalidInputError(
                f"Cannot compose {other.dim_in}->{other.dim_out} into "
                f"{self.dim_in}->{self.dim_out}"
            )
        return Channel(
            other.dim_in,
            self.dim_out,
            Representation.LIOUVILLE,
            self.superoperator @ other.superoperator,
        )

    def tensor(self, other: "Channel") -> "Channel":
        """The product map ``self (x) other``."""
        e = self.superoperator.reshape(
            self.dim_out, self.dim_out, self.dim_in, self.dim_in
        )
        f = other.superoperator.reshape(
            other.dim_out, other.dim_out, other.dim_in, other.dim_in
        )
        d_out = self.dim_out * other.dim_out
        d_in = self.dim_in * other.dim_in
        joined = np.einsum("ikmo,jlnp->ijklmnop", e, f).reshape(d_out**2, d_in**2)
        return Channel(d_in, d_out, Representation.LIOUVILLE, joined)

    @staticmethod
    def mix(channels: Sequence["Channel"], weights: Sequence[float]) -> "Channel":
        """Convex combination of channels with equal dimensions."""
        w = np.asarray(weights, dtype=float)
        if len(channels) == 0 or len(channels) != w.size:
            raise InvalidInputError("mix needs one weight per channel")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise InvalidInputError(f"Mixture weights must be a distribution, got {w}")
        first = channels[0]
        if any(
            (c.dim_in, c.dim_out) != (first.dim_in, first.dim_out) for c in channels
        ):
            raise InvalidInputError("Mixed channels must share dimensions")
        superop = sum(wi * c.superoperator for wi, c in zip(w, channels))
        return Channel(first.dim_in, first.dim_out, Representation.LIOUVILLE, superop)


def convert_channel(ch: Channel, kind: Representation | str) -> Channel:
    """Kraus / Choi / Liouville conversion."""
    converted = ch.convert(kind)
    if converted.representation is Representation.KRAUS and converted.kraus_rank == 0:
        raise InvalidChannelError("Choi matrix has no eigenvalue above the Kraus cutoff")
    return converted


def to_liouville(
    ch: Channel, basis_in: OperatorBasis, basis_out: OperatorBasis
) -> np.ndarray:
    """Entries tr(X_mu^dagger E(X_nu)) for the given bases."""
    if basis_in.dim != ch.dim_in or basis_out.dim != ch.dim_out:
        raise InvalidInputError(
            f"Basis dims ({basis_in.dim}, {basis_out.dim}) do not match channel "
            f"{ch.dim_in}->{ch.dim_out}"
        )
    return basis_out.vectors.conj().T @ ch.superoperator @ basis_in.vectors


def swap_unitary(dim_a: int, dim_b: int) -> np.ndarray:
    """Permutation |a, b> -> |b, a> from C^dA (x) C^dB to C^dB (x) C^dA."""
    d = dim_a * dim_b
    u = np.zeros((d, d))
    for a, b in itertools.product(range(dim_a), range(dim_b)):
        u[b * dim_a + a, a * dim_b + b] = 1.0
    return u


def sector_indices(dim_a: int, dim_b: int) -> dict[Sector, np.ndarray]:
    n_a, n_b = dim_a * dim_a, dim_b * dim_b
    grid = np.arange(n_a * n_b).reshape(n_a, n_b)
    return {
        Sector.A: grid[1:, 0].copy(),
        Sector.B: grid[0, 1:].copy(),
        Sector.AB: grid[1:, 1:].reshape(-1),
    }


@dataclass(frozen=True, eq=False)
class BipartiteChannel:
    dim_a: int
    dim_b: int
    channel: Channel

    def __post_init__(self) -> None:
        if self.dim_a < 2 or self.dim_b < 2:
            raise InvalidDimensionError(
                f"Subsystem dims must be >= 2, got ({self.dim_a}, {self.dim_b})"
            )
        d = self.dim_a * self.dim_b
        if self.channel.dim_in != d or self.channel.dim_out != d:
            raise UnsupportedError(
                f"Bipartite channel needs dims {d}->{d}, got "
                f"{self.channel.dim_in}->{self.channel.dim_out}"
            )

    @property
    def dim(self) -> int:
        return self.dim_a * self.dim_b

    @cached_property
    def basis(self) -> OperatorBasis:
        return bipartite_basis(self.dim_a, self.dim_b)

    @cached_property
    def liouville(self) -> np.ndarray:
        """Real Liouville matrix over the hermitian product basis."""
        full = to_liouville(self.channel, self.basis, self.basis)
        imag = float(np.max(np.abs(full.imag)))
        if imag > 1e-9:
            logger.debug("Discarding imaginary Liouville part of size %.2e", imag)
        return full.real

    @cached_property
    def blocks(self) -> "LiouvilleBlocks":
        return extract_blocks(self)

    def compose(self, other: "BipartiteChannel") -> "BipartiteChannel":
        return BipartiteChannel(self.dim_a, self.dim_b, self.channel.compose(other.channel))

    def swapped(self) -> "BipartiteChannel":
        """Conjugate by SWAP so that B plays the role of A."""
        forward = Channel.from_unitary(swap_unitary(self.dim_a, self.dim_b), validate=False)
        back = Channel.from_unitary(swap_unitary(self.dim_b, self.dim_a), validate=False)
        return BipartiteChannel(
            self.dim_b, self.dim_a, forward.compose(self.channel).compose(back)
        )


@dataclass(frozen=True, eq=False)
class LiouvilleBlocks:
    """The (1, 0; x, T) decomposition with its bipartite sub-blocks.

    ``sub[(source, target)]`` is T_{source->target}: rows index the target
    sector, columns the source sector.
    """

    dim_a: int
    dim_b: int
    matrix: np.ndarray
    x: np.ndarray
    T: np.ndarray
    sub: dict[tuple[Sector, Sector], np.ndarray]
    x_sector: dict[Sector, np.ndarray]

    def block(self, source: Sector | str, target: Sector | str) -> np.ndarray:
        return self.sub[(Sector(source), Sector(target))]

    def x_norm(self, sector: Sector | str) -> float:
        """Squared norm of the non-unital vector restricted to a sector."""
        return float(np.sum(np.abs(self.x_sector[Sector(sector)]) ** 2))

    def reassemble(self) -> np.ndarray:
        idx = sector_indices(self.dim_a, self.dim_b)
        out = np.zeros_like(self.matrix)
        out[0, :] = self.matrix[0, :]
        for sector, vec in self.x_sector.items():
            out[idx[sector], 0] = vec
        for (source, target), block in self.sub.items():
            out[np.ix_(idx[target], idx[source])] = block
        return out


def extract_blocks(bch: BipartiteChannel) -> LiouvilleBlocks:
    """Slice the Liouville matrix into sectors without permuting it."""
    if bch.channel.dim_in != bch.channel.dim_out:
        raise UnsupportedError("Block extraction needs dim_in == dim_out")
    matrix = bch.liouville
    idx = sector_indices(bch.dim_a, bch.dim_b)
    sub = {
        (source, target): matrix[np.ix_(idx[target], idx[source])]
        for source in Sector
        for target in Sector
    }
    x_sector = {sector: matrix[idx[sector], 0] for sector in Sector}
    return LiouvilleBlocks(
        dim_a=bch.dim_a,
        dim_b=bch.dim_b,
        matrix=matrix,
        x=matrix[1:, 0],
        T=matrix[1:, 1:],
        sub=sub,
        x_sector=x_sector,
    )


def local_channel(
    bch: BipartiteChannel, side: Sector | str, sigma: Optional[np.ndarray] = None
) -> Channel:
    """E_X(rho) = tr_other[E(rho (x) sigma)]; sigma defaults to maximally mixed."""
    side = Sector(side)
    da, db = bch.dim_a, bch.dim_b
    s8 = bch.channel.superoperator.reshape(da, db, da, db, da, db, da, db)
    if side is Sector.A:
        sigma = np.eye(db) / db if sigma is None else np.asarray(sigma)
        local = np.einsum("ibjbkmln,mn->ijkl", s8, sigma).reshape(da * da, da * da)
        return Channel.from_superoperator(local, da, da)
    if side is Sector.B:
        sigma = np.eye(da) / da if sigma is None else np.asarray(sigma)
        local = np.einsum("aiajmknl,mn->ijkl", s8, sigma).reshape(db * db, db * db)
        return Channel.from_superoperator(local, db, db)
    raise UnsupportedError("Local channels exist for sectors A and B only")
