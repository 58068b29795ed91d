from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field


class ModelForm(str, Enum):
    CONST_1EXP = "const+1exp"
    CONST_2EXP = "const+2exp"
    CONST_3EXP = "const+3exp"
    JORDAN2 = "jordan2"
    JORDAN3 = "jordan3"

    @property
    def n_decays(self) -> int:
        return {
            ModelForm.CONST_1EXP: 1,
            ModelForm.CONST_2EXP: 2,
            ModelForm.CONST_3EXP: 3,
            ModelForm.JORDAN2: 2,
            ModelForm.JORDAN3: 1,
        }[self]

    @property
    def n_constants(self) -> int:
        # constant term plus one amplitude per basis function
        return {
            ModelForm.CONST_1EXP: 2,
            ModelForm.CONST_2EXP: 3,
            ModelForm.CONST_3EXP: 4,
            ModelForm.JORDAN2: 4,
            ModelForm.JORDAN3: 4,
        }[self]


class FitResult(BaseModel):
    """Decay constants and amplitudes of a fitted decay model.

    Parameters are ordered ``decays`` first, then ``constants`` in
    ``covariance`` and ``covariance_diag``.
    """

    model_form: ModelForm
    constants: list[float]
    decays: list[float]
    residual_rms: float
    covariance: list[list[float]] = Field(default_factory=list)
    covariance_diag: list[float] = Field(default_factory=list)
    multiplicities: list[int] = Field(default_factory=list)
    converged: bool
    aicc: Optional[float] = None
    rss: float = 0.0
    n_points: int = 0
    flags: list[str] = Field(default_factory=list)
    message: str = ""

    @property
    def decay_stderr(self) -> list[float]:
        n = len(self.decays)
        return [float(v) ** 0.5 if v >= 0 else float("nan") for v in self.covariance_diag[:n]]

    @property
    def total_multiplicity(self) -> int:
        return sum(self.multiplicities)
