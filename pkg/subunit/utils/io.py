# subunit/utils/io.py
"""Channel files and result tables on disk.

Channel files are JSON with complex entries stored as ``[re, im]`` pairs.
Result tables are CSV with ``# key: value`` metadata lines, or JSON with the
same metadata under ``"metadata"``. Decay datasets use the same CSV layout;
their JSON form also carries the per-sequence samples.
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import ValidationError

from subunit.core.errors import InvalidInputError, SubunitError
from subunit.models.datasets import DecayDataset
from subunit.models.experiment import CertificateTerm, ChannelFile, ResultTable
from subunit.services.liouville import BipartiteChannel, Channel, Representation
from subunit.services.twirl import SpectralData, TwirlMatrix
from subunit.services.zoo import SeparableSpec, SeparableTerm

logger = logging.getLogger(__name__)

AnyChannel = Union[Channel, BipartiteChannel]


def encode_complex(array: np.ndarray) -> list:
    """Nested lists with each complex entry as ``[re, im]``."""
    arr = np.asarray(array, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def decode_complex(data: list) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as e:
        raise InvalidInputError(f"Channel data is not a rectangular numeric array: {e}") from e
    if arr.ndim < 1 or arr.shape[-1] != 2:
        raise InvalidInputError(
            f"Channel data entries must be [re, im] pairs, got trailing shape {arr.shape[-1:]}"
        )
    return arr[..., 0] + 1j * arr[..., 1]


def channel_to_file(
    channel: AnyChannel,
    representation: Representation | str = Representation.CHOI,
    certificate: Optional[SeparableSpec] = None,
) -> ChannelFile:
    kind = Representation(representation)
    dims: dict[str, int] = {}
    if isinstance(channel, BipartiteChannel):
        dims = {"d_a": channel.dim_a, "d_b": channel.dim_b}
        channel = channel.channel
    terms = None
    if certificate is not None:
        terms = [
            CertificateTerm(
                weight=t.weight,
                channel_a=channel_to_file(t.channel_a, kind),
                channel_b=channel_to_file(t.channel_b, kind),
            )
            for t in certificate.terms
        ]
    return ChannelFile(
        d_in=channel.dim_in,
        d_out=channel.dim_out,
        representation=kind.value,
        data=encode_complex(channel.convert(kind).data),
        certificate=terms,
        **dims,
    )


def channel_from_file(cf: ChannelFile) -> tuple[AnyChannel, Optional[SeparableSpec]]:
    """Build and CPTP-validate the channel described by ``cf``."""
    data = decode_complex(cf.data)
    kind = Representation(cf.representation)
    if kind is Representation.KRAUS:
        channel = Channel.from_kraus(data)
        if (channel.dim_in, channel.dim_out) != (cf.d_in, cf.d_out):
            raise InvalidInputError(
                f"Kraus operators act {channel.dim_in}->{channel.dim_out}, "
                f"file declares {cf.d_in}->{cf.d_out}"
            )
    elif kind is Representation.CHOI:
        channel = Channel.from_choi(data, cf.d_in, cf.d_out)
    else:
        channel = Channel.from_superoperator(data, cf.d_in, cf.d_out)

    certificate = None
    if cf.certificate:
        terms = []
        for term in cf.certificate:
            channel_a, _ = channel_from_file(term.channel_a)
            channel_b, _ = channel_from_file(term.channel_b)
            terms.append(SeparableTerm(term.weight, channel_a, channel_b))
        certificate = SeparableSpec(tuple(terms))

    if cf.d_a is None and cf.d_b is None:
        return channel, certificate
    if cf.d_a is None or cf.d_b is None:
        raise InvalidInputError("Channel file must give both d_a and d_b or neither")
    return BipartiteChannel(cf.d_a, cf.d_b, channel), certificate


def _format_validation_error(path: Path, err: ValidationError) -> str:
    first = err.errors()[0]
    loc = ".".join(str(part) for part in first["loc"])
    return f"{path}: field '{loc}': {first['msg']}"


def read_channel(path: Path | str) -> tuple[AnyChannel, Optional[SeparableSpec]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InvalidInputError(f"Cannot read channel file {path}: {e}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        line = text.splitlines()[e.lineno - 1] if text else ""
        raise InvalidInputError(
            f"{path}:{e.lineno}:{e.colno}: {e.msg}\n    {line.strip()}"
        ) from e
    try:
        cf = ChannelFile.model_validate(raw)
    except ValidationError as e:
        raise InvalidInputError(_format_validation_error(path, e)) from e
    try:
        return channel_from_file(cf)
    except SubunitError as e:
        e.args = (f"{path}: {e}",)
        raise


def write_channel(
    path: Path | str,
    channel: AnyChannel,
    representation: Representation | str = Representation.CHOI,
    certificate: Optional[SeparableSpec] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cf = channel_to_file(channel, representation, certificate)
    path.write_text(
        json.dumps(cf.model_dump(by_alias=True, exclude_none=True), indent=2), encoding="utf-8"
    )
    logger.debug("Wrote %s channel to %s", cf.representation, path)
    return path


def _format_cell(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.15g}"
    return str(value)


def _parse_cell(text: str) -> int | float | bool | str:
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text in ("true", "false"):
        return text == "true"
    return text


def table_to_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    for key, value in table.metadata.items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_format_cell(v) for v in row])
    return buf.getvalue()


def table_from_csv(text: str) -> ResultTable:
    metadata: dict[str, str] = {}
    body: list[str] = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            metadata[key.strip()] = value.strip()
        elif line:
            body.append(line)
    if not body:
        raise InvalidInputError("CSV table has no header row")
    reader = csv.reader(body)
    columns = next(reader)
    rows = [[_parse_cell(cell) for cell in row] for row in reader]
    return ResultTable(metadata=metadata, columns=columns, rows=rows)


def write_table(table: ResultTable, path: Path | str, fmt: str = "csv") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path.write_text(table_to_csv(table), encoding="utf-8")
    elif fmt == "json":
        path.write_text(json.dumps(table.model_dump(), indent=2), encoding="utf-8")
    else:
        raise InvalidInputError(f"Unknown output format: {fmt}")
    logger.debug("Wrote %d rows to %s", len(table.rows), path)
    return path


def read_table(path: Path | str) -> ResultTable:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            return ResultTable.model_validate(json.loads(text))
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
        except ValidationError as e:
            raise InvalidInputError(_format_validation_error(path, e)) from e
    return table_from_csv(text)


DATASET_COLUMNS = ("k", "mean_m2", "stderr", "n_seqs")


def dataset_to_csv(dataset: DecayDataset, metadata: Optional[dict[str, str]] = None) -> str:
    buf = io.StringIO()
    for key, value in (metadata or {}).items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DATASET_COLUMNS)
    stderr = dataset.stderr or [None] * len(dataset.k)
    for k, y, s, n in zip(dataset.k, dataset.mean_m2, stderr, dataset.n_seqs):
        writer.writerow([k, _format_cell(y), "" if s is None else _format_cell(s), n])
    return buf.getvalue()


def dataset_from_csv(text: str) -> DecayDataset:
    table = table_from_csv(text)
    if tuple(table.columns) != DATASET_COLUMNS:
        raise InvalidInputError(
            f"Dataset CSV needs columns {','.join(DATASET_COLUMNS)}, got {','.join(table.columns)}"
        )
    stderr = [row[2] for row in table.rows]
    return DecayDataset(
        k=[int(row[0]) for row in table.rows],
        mean_m2=[float(row[1]) for row in table.rows],
        stderr=None if all(s == "" for s in stderr) else [float(s) for s in stderr],
        n_seqs=[int(row[3]) for row in table.rows],
    )


def write_dataset(
    dataset: DecayDataset,
    path: Path | str,
    fmt: str = "csv",
    metadata: Optional[dict[str, str]] = None,
) -> Path:
    """CSV summary per length, or JSON that also keeps any samples."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path.write_text(dataset_to_csv(dataset, metadata), encoding="utf-8")
    elif fmt == "json":
        payload = {"metadata": metadata or {}, **dataset.model_dump()}
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    else:
        raise InvalidInputError(f"Unknown output format: {fmt}")
    logger.debug("Wrote dataset with %d lengths to %s", len(dataset.k), path)
    return path


def read_dataset(path: Path | str) -> DecayDataset:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix != ".json":
        return dataset_from_csv(text)
    try:
        raw = json.loads(text)
        raw.pop("metadata", None)
        return DecayDataset.model_validate(raw)
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    except ValidationError as e:
        raise InvalidInputError(_format_validation_error(path, e)) from e


def twirl_to_dict(tm: TwirlMatrix, spectral: Optional[SpectralData] = None) -> dict:
    payload: dict = {"dim_a": tm.dim_a, "dim_b": tm.dim_b, "m": tm.m.tolist()}
    if spectral is not None:
        payload.update(
            eigenvalues=encode_complex(spectral.eigenvalues),
            jordan_shape=spectral.jordan_shape.value,
            jordan_form=encode_complex(spectral.jordan_form),
            similarity=encode_complex(spectral.similarity),
            degeneracy_warning=spectral.degeneracy_warning,
        )
    return payload
