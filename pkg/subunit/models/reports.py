from typing import Optional

from pydantic import BaseModel, Field


class Addressability(BaseModel):
    """Trace quantities of simultaneous benchmarking and a = e_AB - e_A e_B."""

    a: float
    e_a: float
    e_b: float
    e_ab: float


class DiamondBounds(BaseModel):
    lower_r: float
    upper_r: float
    lower_u: float
    upper_u: float


class NormComparison(BaseModel):
    """Distance between T_AB->AB and T_A->A (x) T_B->B with its decomposition."""

    delta: float
    u_c: float
    t_ab: float
    t_a_t_b: float
    theta_cos: float
    identity_residual: float
    lower_bound_sq: float
    upper_bound_sq: float

    @property
    def bounds_hold(self) -> bool:
        d2 = self.delta**2
        slack = 1e-10 * max(1.0, self.upper_bound_sq)
        return self.lower_bound_sq - slack <= d2 <= self.upper_bound_sq + slack


class CorrelationEstimate(BaseModel):
    value: float
    stderr: Optional[float] = None
    in_regime: bool = True
    eigenvalues: list[float] = Field(default_factory=list)


class MeasureReport(BaseModel):
    """Every scalar measure of a bipartite channel.

    ``sub`` is keyed source sector first: ``sub["A"]["AB"]`` is u_{A->AB}.
    """

    dim_a: int
    dim_b: int
    u: float
    sub: dict[str, dict[str, float]]
    u_c: float
    witness_bound: float
    witness_bound_exact: str
    witness_violated: bool
    addressability: Addressability
    infidelity: float
    x_norms: dict[str, float]
    decomposition_residual: float = 0.0

    def sub_unitarity(self, source: str, target: str) -> float:
        return self.sub[str(source)][str(target)]
