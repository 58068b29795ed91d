import hashlib
import json
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from subunit import __version__


class ExperimentConfig(BaseModel):
    """Everything a batch command needs to reproduce its output file."""

    model_config = ConfigDict(frozen=True)

    command: str
    seed: int = Field(ge=0)
    dim_a: int = Field(default=2, ge=2)
    dim_b: int = Field(default=2, ge=2)
    channel: Optional[str] = None
    rank: Optional[int] = Field(default=None, ge=1)
    ranks: list[int] = Field(default_factory=list)
    n: Optional[int] = Field(default=None, ge=1)
    k_max: Optional[int] = Field(default=None, ge=1)
    seqs: Optional[int] = Field(default=None, ge=1)
    exact: bool = True
    reset_p: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    bloch: Optional[tuple[float, float, float]] = None
    grid: Optional[str] = None
    shots: Optional[int] = Field(default=None, ge=2)
    replicates: Optional[int] = Field(default=None, ge=1)
    output: Optional[str] = None
    fmt: Literal["csv", "json"] = "csv"

    def config_hash(self) -> str:
        # output location does not change the data
        payload = self.model_dump(mode="json", exclude={"output"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def metadata(self) -> dict[str, str]:
        return {
            "tool": f"subunit-bench {__version__}",
            "command": self.command,
            "seed": str(self.seed),
            "config_hash": self.config_hash(),
            "config": json.dumps(
                self.model_dump(mode="json", exclude={"output"}), sort_keys=True
            ),
        }


Cell = int | float | bool | str


class ResultTable(BaseModel):
    metadata: dict[str, str] = Field(default_factory=dict)
    columns: list[str]
    rows: list[list[Cell]] = Field(default_factory=list)

    def column(self, name: str) -> list[Cell]:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]

    def sorted_by(self, *names: str) -> "ResultTable":
        idx = [self.columns.index(n) for n in names]
        rows = sorted(self.rows, key=lambda r: tuple(r[i] for i in idx))
        return self.model_copy(update={"rows": rows})


class CertificateTerm(BaseModel):
    weight: float = Field(ge=0.0, le=1.0)
    channel_a: "ChannelFile"
    channel_b: "ChannelFile"


class ChannelFile(BaseModel):
    """On-disk channel: dims, representation tag and [re, im] nested data."""

    model_config = ConfigDict(populate_by_name=True)

    d_in: int = Field(ge=1)
    d_out: int = Field(ge=1)
    representation: Literal["kraus", "choi", "liouville"] = Field(alias="repr")
    data: list
    d_a: Optional[int] = Field(default=None, ge=2)
    d_b: Optional[int] = Field(default=None, ge=2)
    certificate: Optional[list[CertificateTerm]] = None


CertificateTerm.model_rebuild()
