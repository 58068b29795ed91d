# subunit/services/experiments.py
"""Batch drivers behind the CLI commands.

Each driver fans its grid points out over worker threads, gives every point
its own Philox stream and returns a ``ResultTable`` sorted by grid
coordinates.
"""

import asyncio
import itertools
import logging
import math
from typing import Any, Callable, Optional, Sequence, TypeVar

import numpy as np

from subunit.core.config import settings
from subunit.core.errors import FitError, InvalidInputError
from subunit.models.datasets import DecayDataset
from subunit.models.experiment import ResultTable
from subunit.models.fit import FitResult
from subunit.services.fitting import (
    decay_trace,
    estimate_correlation_from_fit,
    fit_single_exponential,
    fit_triple_exponential,
)
from subunit.services.liouville import BipartiteChannel, Channel, Sector
from subunit.services.measures import (
    addressability,
    correlated_unitarity,
    sub_unitarity,
    unitarity,
    witness_bound,
    witness_violated,
)
from subunit.services.protocols import (
    BlochReset,
    DepolarizingReset,
    IdealReset,
    NoiseModel,
    ResetModel,
    run_protocol_1,
    run_protocol_2,
)
from subunit.services.twirl import estimate_C, twirl_matrix
from subunit.services.zoo import (
    ChannelName,
    convergence_channel,
    named_channel,
    pinned_reset_channel,
    random_channel,
    random_unitary,
    spawn_rngs,
    swap_mixture,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")

HISTOGRAM_CHUNK = 500

KET0 = np.diag([1.0, 0.0]).astype(complex)
# Unequal A and B parts excite the antisymmetric decay; the ZZ part excites u_{AB->AB}
P1_STATE = np.kron(KET0, np.diag([0.8, 0.2])).astype(complex)
P1_OBSERVABLE = np.kron(KET0, np.diag([0.9, 0.1])).astype(complex)
# B is reset before the first gate, so only the A part of this state matters
P2_STATE = np.kron(KET0, KET0)
# Flat Protocol 2 curves read as u = 0 before u = 1
_FLAT_READINGS = (0.0, 1.0)


def parse_grid(spec: str, low: float = 0.0, high: float = 1.0) -> list[float]:
    """``start:stop:steps`` as an inclusive linspace, or a single value."""
    parts = spec.split(":")
    try:
        if len(parts) == 1:
            values = [float(parts[0])]
        elif len(parts) == 3:
            start, stop, steps = float(parts[0]), float(parts[1]), int(parts[2])
            if steps < 1:
                raise InvalidInputError(f"Grid needs at least one step: {spec}")
            values = np.linspace(start, stop, steps).tolist()
        else:
            raise InvalidInputError(f"Grid must look like start:stop:steps, got {spec!r}")
    except ValueError as e:
        raise InvalidInputError(f"Grid {spec!r} is not numeric: {e}") from e
    if any(v < low - 1e-12 or v > high + 1e-12 for v in values):
        raise InvalidInputError(f"Grid {spec!r} leaves [{low:g}, {high:g}]")
    return [min(max(v, low), high) for v in values]


def _relative_error(estimate: float, theory: float) -> float:
    if theory == 0.0:
        return abs(estimate)
    return abs(estimate - theory) / abs(theory)


def simulated_correlation(
    simultaneous: FitResult, local_a: FitResult, local_b: FitResult, tol: float = 1e-6
) -> float:
    """u_{AB->AB} - u_A u_B, with u_{AB->AB} = tr S - u_A - u_B.

    ``simultaneous`` fits the Protocol 1 decay, whose eigenvalues sum to
    tr S = u_{A->A} + u_{B->B} + u_{AB->AB}; the local fits give u_A and u_B.
    A flat local curve fixes no decay, so it is read as 0 unless that leaves
    u_{AB->AB} outside [0, 1], and as 1 otherwise.
    """
    trace = decay_trace(simultaneous)
    options = [
        _FLAT_READINGS if "no_decay" in fit.flags else (fit.decays[0],)
        for fit in (local_a, local_b)
    ]
    readings = sorted(itertools.product(*options), key=sum)
    for u_a, u_b in readings:
        if -tol <= trace - u_a - u_b <= 1 + tol:
            break
    else:
        logger.debug("No local reading keeps u_AB->AB in [0, 1] (tr S = %.6g)", trace)
    return trace - u_a - u_b - u_a * u_b


class ExperimentRunner:
    """Runs grids of independent simulations on a bounded thread pool.

    Every decay curve a sweep fits is kept in ``datasets`` under a label naming
    its grid point, for export next to the result table.
    """

    def __init__(
        self,
        threads: Optional[int] = None,
        seed: Optional[int] = None,
        keep_samples: bool = False,
    ) -> None:
        self.threads = threads or settings.threads
        self.seed = settings.seed if seed is None else seed
        self.keep_samples = keep_samples
        self.datasets: dict[str, DecayDataset] = {}
        if self.threads < 1:
            raise InvalidInputError(f"threads must be >= 1, got {self.threads}")

    async def _map(self, fn: Callable[..., T], items: Sequence[Any]) -> list[T]:
        """fn(item, rng) for each item, at most ``threads`` at a time."""
        semaphore = asyncio.Semaphore(self.threads)
        rngs = spawn_rngs(self.seed, len(items))

        async def run(item: Any, rng: np.random.Generator) -> T:
            async with semaphore:
                return await asyncio.to_thread(fn, item, rng)

        return list(await asyncio.gather(*(run(i, r) for i, r in zip(items, rngs))))

    async def histogram(self, n: int) -> ResultTable:
        """u_c of n Haar-random two-qubit unitaries."""
        if n < 1:
            raise InvalidInputError(f"n must be >= 1, got {n}")
        sizes = [HISTOGRAM_CHUNK] * (n // HISTOGRAM_CHUNK)
        if n % HISTOGRAM_CHUNK:
            sizes.append(n % HISTOGRAM_CHUNK)
        offsets = np.cumsum([0] + sizes[:-1]).tolist()

        def chunk(item: tuple[int, int], rng: np.random.Generator) -> list[list[Any]]:
            offset, size = item
            rows = []
            for i in range(size):
                u = random_unitary(4, rng)
                bch = BipartiteChannel(2, 2, Channel.from_unitary(u, validate=False))
                rows.append([offset + i, correlated_unitarity(bch)])
            return rows

        chunks = await self._map(chunk, list(zip(offsets, sizes)))
        rows = [row for part in chunks for row in part]
        bound = witness_bound(2, 2)
        above = sum(1 for _, u_c in rows if u_c > float(bound))
        logger.debug("%d of %d unitaries exceed %s", above, n, bound)
        return ResultTable(
            metadata={
                "reference_bound": str(bound),
                "reference_bound_value": f"{float(bound):.15g}",
                "fraction_above_bound": f"{above / n:.15g}",
            },
            columns=["index", "u_c"],
            rows=rows,
        )

    async def convergence(
        self, p_grid: Sequence[float], rank: int = 2, replicates: int = 1
    ) -> ResultTable:
        """|u_c - C| along F = p E_A (x) E_B + (1 - p) G with eig(S)-based C."""
        if not 1 <= rank <= 4:
            raise InvalidInputError(f"Qubit channels have Kraus rank 1..4, got {rank}")
        if replicates < 1:
            raise InvalidInputError(f"replicates must be >= 1, got {replicates}")
        grid = list(p_grid)

        def replicate(index: int, rng: np.random.Generator) -> list[list[Any]]:
            channel_a = random_channel(2, 2, rank, rng)
            channel_b = random_channel(2, 2, rank, rng)
            global_part = random_channel(4, 4, rank, rng)
            rows = []
            for p in grid:
                bch = convergence_channel(p, channel_a, channel_b, global_part)
                u_c = correlated_unitarity(bch)
                eigenvalues = np.linalg.eigvals(twirl_matrix(bch).S)
                c = estimate_C(eigenvalues).value
                rows.append([p, index, u_c, c, abs(u_c - c)])
            return rows

        parts = await self._map(replicate, list(range(replicates)))
        table = ResultTable(
            metadata={"rank": str(rank), "replicates": str(replicates)},
            columns=["p", "replicate", "u_c", "C", "gap"],
            rows=[row for part in parts for row in part],
        )
        return table.sorted_by("p", "replicate")

    async def sweep_reset(
        self,
        grid: Sequence[float],
        model: str = "depolarizing",
        bch: Optional[BipartiteChannel] = None,
        exact: bool = True,
        k_list: Optional[Sequence[int]] = None,
        seqs: Optional[int] = None,
        direction: Sequence[float] = (0.0, 0.0, 1.0),
        shots: Optional[int] = None,
    ) -> ResultTable:
        """Protocol 2 estimate of u_{A->A} against reset strength.

        ``model="depolarizing"`` sweeps the mix p of the ideal reset;
        ``model="bloch"`` sweeps the Bloch length r of the B reset state r*b.
        """
        bch = bch or pinned_reset_channel()
        ks = list(k_list or range(1, settings.k_max + 1))
        seqs = seqs or settings.seqs_per_k
        theory = sub_unitarity(bch, Sector.A, Sector.A)
        unit = np.asarray(direction, dtype=float)
        if unit.shape != (3,) or not np.isclose(np.linalg.norm(unit), 1.0):
            raise InvalidInputError(f"Bloch direction must be a unit vector, got {list(unit)}")
        self.datasets = {}

        def reset_for(value: float) -> ResetModel:
            if model == "depolarizing":
                return DepolarizingReset(value)
            if model == "bloch":
                return BlochReset(tuple(float(c) for c in value * unit))
            raise InvalidInputError(f"Unknown reset model: {model}")

        def point(value: float, rng: np.random.Generator) -> list[Any]:
            noise = NoiseModel(gate_noise=bch, reset_error=reset_for(value))
            data = run_protocol_2(
                noise,
                P2_STATE,
                KET0,
                ks,
                seqs,
                rng,
                shots=shots,
                exact=exact,
                keep_samples=self.keep_samples,
            )
            self.datasets[f"{model}_{value:.6g}"] = data
            fit = fit_single_exponential(data)
            estimate = fit.decays[0]
            stderr = fit.decay_stderr[0] if fit.decay_stderr else float("nan")
            return [
                value,
                estimate,
                theory,
                _relative_error(estimate, theory),
                stderr,
                fit.converged,
            ]

        rows = await self._map(point, list(grid))
        table = ResultTable(
            metadata={
                "reset_model": model,
                "mode": "exact" if exact else "monte-carlo",
                "theory_u_AA": f"{theory:.15g}",
            },
            columns=["param", "estimate", "theory", "rel_error", "stderr", "converged"],
            rows=rows,
        )
        return table.sorted_by("param")

    async def witness_contour(
        self,
        t_grid: Sequence[float],
        p_grid: Sequence[float] = (1.0,),
        q_grid: Sequence[float] = (1.0,),
        exact: bool = True,
        k_list: Optional[Sequence[int]] = None,
        seqs: Optional[int] = None,
        shots: Optional[int] = None,
    ) -> ResultTable:
        """Simulated witness on E_t = t SWAP + (1 - t) id.

        p is the depolarizing-mix reset of B while estimating u_{A->A};
        q is the reset of A while estimating u_{B->B} on the swapped channel.
        """
        ks = list(k_list or range(1, settings.k_max + 1))
        seqs = seqs or settings.seqs_per_k
        bound = witness_bound(2, 2)
        points = [(t, p, q) for t in t_grid for p in p_grid for q in q_grid]
        self.datasets = {}

        def local_fit(
            channel: BipartiteChannel, strength: float, rng: np.random.Generator, label: str
        ) -> FitResult:
            reset = IdealReset() if strength == 1.0 else DepolarizingReset(strength)
            noise = NoiseModel(gate_noise=channel, reset_error=reset)
            data = run_protocol_2(
                noise,
                P2_STATE,
                KET0,
                ks,
                seqs,
                rng,
                shots=shots,
                exact=exact,
                keep_samples=self.keep_samples,
            )
            self.datasets[label] = data
            return fit_single_exponential(data)

        def point(item: tuple[float, float, float], rng: np.random.Generator) -> list[Any]:
            t, p, q = item
            label = f"t={t:.6g}_p={p:.6g}_q={q:.6g}"
            channel = swap_mixture(t)
            u_c = correlated_unitarity(channel)
            rng_1, rng_a, rng_b = rng.spawn(3)
            data = run_protocol_1(
                NoiseModel(gate_noise=channel),
                P1_STATE,
                P1_OBSERVABLE,
                ks,
                seqs,
                rng_1,
                shots=shots,
                exact=exact,
                keep_samples=self.keep_samples,
            )
            self.datasets[f"{label}_simultaneous"] = data
            fit = fit_triple_exponential(data)
            fit_a = local_fit(channel, p, rng_a, f"{label}_local_a")
            fit_b = local_fit(channel.swapped(), q, rng_b, f"{label}_local_b")
            converged = fit.converged and fit_a.converged and fit_b.converged
            try:
                c_sim = simulated_correlation(fit, fit_a, fit_b)
            except FitError as e:
                logger.warning("No simulated estimate at t=%g: %s", t, e)
                c_sim, converged = math.nan, False
            try:
                c_eig = estimate_correlation_from_fit(fit).value
            except FitError as e:
                logger.debug("No eigenvalue-only estimate at t=%g: %s", t, e)
                c_eig = math.nan
            return [
                t,
                p,
                q,
                u_c,
                c_sim,
                c_eig,
                witness_violated(u_c, 2, 2),
                c_sim > float(bound) + settings.witness_guard,
                converged,
            ]

        rows = await self._map(point, points)
        table = ResultTable(
            metadata={
                "witness_bound": str(bound),
                "mode": "exact" if exact else "monte-carlo",
                "p_axis": "depolarizing reset of B during the u_A->A estimate",
                "q_axis": "depolarizing reset of A during the u_B->B estimate",
                "C_sim": "sum of Protocol 1 decays - u_A - u_B - u_A u_B",
            },
            columns=[
                "t",
                "p",
                "q",
                "u_c_true",
                "C_sim",
                "C_eig",
                "witnessed_true",
                "witnessed_sim",
                "converged",
            ],
            rows=rows,
        )
        return table.sorted_by("t", "p", "q")

    async def compare_addressability(
        self, n: int, ranks: Sequence[int] = (1, 2, 4, 16)
    ) -> ResultTable:
        """(u, u_c, a) for random two-qubit channels of each Kraus rank, plus the CNOT."""
        if n < 1:
            raise InvalidInputError(f"n must be >= 1, got {n}")
        if not ranks or any(not 1 <= r <= 16 for r in ranks):
            raise InvalidInputError(f"Two-qubit Kraus ranks must lie in 1..16, got {list(ranks)}")

        def batch(rank: int, rng: np.random.Generator) -> list[list[Any]]:
            rows = []
            for i in range(n):
                bch = BipartiteChannel(2, 2, random_channel(4, 4, rank, rng))
                rows.append(
                    ["random", rank, i, unitarity(bch.channel), correlated_unitarity(bch), addressability(bch).a]
                )
            return rows

        parts = await self._map(batch, list(ranks))
        rows = [row for part in parts for row in part]
        cnot = named_channel(ChannelName.CNOT)
        rows.append(
            ["cnot", 1, 0, unitarity(cnot.channel), correlated_unitarity(cnot), addressability(cnot).a]
        )
        table = ResultTable(
            metadata={"samples_per_rank": str(n), "witness_bound": str(witness_bound(2, 2))},
            columns=["kind", "kraus_rank", "index", "u", "u_c", "a"],
            rows=rows,
        )
        return table.sorted_by("kind", "kraus_rank", "index")
