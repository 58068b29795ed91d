from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from subunit.core.errors import InvalidInputError


class SequenceResult(BaseModel):
    """Per-length outcome of a benchmarking run.

    ``samples`` holds m(s) per sequence; ``mean_square`` averages the m(s)^2
    estimates, which differ from ``samples`` squared only under shot noise.
    """

    k: int = Field(ge=1)
    samples: list[float]
    mean_square: float
    stderr: float

    @classmethod
    def from_samples(
        cls, k: int, m: np.ndarray, m2: Optional[np.ndarray] = None
    ) -> "SequenceResult":
        m = np.asarray(m, dtype=float)
        m2 = m * m if m2 is None else np.asarray(m2, dtype=float)
        stderr = float(np.std(m2, ddof=1) / np.sqrt(m2.size)) if m2.size > 1 else 0.0
        return cls(
            k=k, samples=m.tolist(), mean_square=float(np.mean(m2)), stderr=stderr
        )


class DecayDataset(BaseModel):
    """E[m^2] indexed by sequence length.

    Exact-expectation data has ``n_seqs == 0`` and no ``stderr``.
    """

    k: list[int]
    mean_m2: list[float]
    stderr: Optional[list[float]] = None
    n_seqs: list[int] = Field(default_factory=list)
    samples: Optional[list[list[float]]] = None

    @model_validator(mode="after")
    def _check_lengths(self) -> "DecayDataset":
        n = len(self.k)
        if len(self.mean_m2) != n:
            raise InvalidInputError("k and mean_m2 must have the same length")
        if self.stderr is not None and len(self.stderr) != n:
            raise InvalidInputError("stderr must match k in length")
        if not self.n_seqs:
            self.n_seqs = [0] * n
        elif len(self.n_seqs) != n:
            raise InvalidInputError("n_seqs must match k in length")
        return self

    @property
    def exact(self) -> bool:
        return all(n == 0 for n in self.n_seqs)

    @classmethod
    def from_results(
        cls, results: Sequence[SequenceResult], keep_samples: bool = False
    ) -> "DecayDataset":
        ordered = sorted(results, key=lambda r: r.k)
        return cls(
            k=[r.k for r in ordered],
            mean_m2=[r.mean_square for r in ordered],
            stderr=[r.stderr for r in ordered],
            n_seqs=[len(r.samples) for r in ordered],
            samples=[r.samples for r in ordered] if keep_samples else None,
        )

    @classmethod
    def exact_curve(cls, k: Sequence[int], values: Sequence[float]) -> "DecayDataset":
        return cls(k=list(k), mean_m2=[float(v) for v in values])

    def arrays(self) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        k = np.asarray(self.k, dtype=float)
        y = np.asarray(self.mean_m2, dtype=float)
        s = None if self.stderr is None else np.asarray(self.stderr, dtype=float)
        return k, y, s
