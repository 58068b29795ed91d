# subunit/cli/commands.py

import asyncio
import json
import logging
from pathlib import Path
from typing import Coroutine, Optional

import numpy as np
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from subunit.core.config import settings
from subunit.core.errors import FitError, InvalidInputError, SubunitError
from subunit.core.logging import setup_logging
from subunit.models.experiment import ExperimentConfig, ResultTable
from subunit.models.reports import MeasureReport
from subunit.services.experiments import ExperimentRunner, parse_grid
from subunit.services.liouville import BipartiteChannel, Representation
from subunit.services.measures import analyze
from subunit.services.twirl import spectral_analysis, twirl_matrix
from subunit.services.zoo import (
    make_rng,
    named_channel,
    random_channel,
    random_product_channel,
    random_separable,
)
from subunit.utils.io import (
    read_channel,
    twirl_to_dict,
    write_channel,
    write_dataset,
    write_table,
)

app = typer.Typer(help="subunit-bench - correlated unitarity of bipartite quantum channels")
logger = logging.getLogger(__name__)
console = Console()


@app.callback()
def main(
    verbose: bool = typer.Option(
        False, "--verbose", "-v", help="Show fit starts and per-length sampling summaries"
    ),
    env: str = typer.Option(
        settings.environment,
        "--env",
        "-e",
        help="development adds tracebacks and debug output; production keeps the log short",
    ),
    log_file: Optional[Path] = typer.Option(
        None, "--log-file", help="Also append every record to this file (SUBUNIT_LOG_FILE)"
    ),
) -> None:
    """Apply run-wide options before any subcommand."""
    settings.environment = env
    setup_logging(verbose or env == "development", str(log_file) if log_file else None)


def _fail(e: Exception) -> None:
    logger.error("❌ Error: %s", str(e), exc_info=settings.environment == "development")
    if isinstance(e, SubunitError):
        code = e.exit_code
    elif isinstance(e, ValidationError):
        code = 2
    else:
        code = 1
    raise typer.Exit(code)


def _parse_dims(dims: str) -> tuple[int, int]:
    try:
        dim_a, dim_b = (int(part) for part in dims.split(","))
    except ValueError as e:
        raise InvalidInputError(f"--dims must look like dA,dB, got {dims!r}") from e
    return dim_a, dim_b


def _parse_floats(text: str, n: int, flag: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(","))
    except ValueError as e:
        raise InvalidInputError(f"{flag} expects {n} comma-separated numbers, got {text!r}") from e
    if len(values) != n:
        raise InvalidInputError(f"{flag} expects {n} comma-separated numbers, got {text!r}")
    return values


def _parse_ints(text: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part]
    except ValueError as e:
        raise InvalidInputError(f"{flag} expects comma-separated integers, got {text!r}") from e


def _resolve_channel(
    source: str, dims: str, p: Optional[float], t: Optional[float]
) -> BipartiteChannel:
    """A channel file path, or the name of a built-in channel."""
    dim_a, dim_b = _parse_dims(dims)
    path = Path(source)
    if path.suffix == ".json" or path.exists():
        channel, _ = read_channel(path)
        if isinstance(channel, BipartiteChannel):
            return channel
        if channel.dim_in != dim_a * dim_b:
            raise InvalidInputError(
                f"{path} has no d_a/d_b and its dimension {channel.dim_in} "
                f"does not match --dims {dims}"
            )
        return BipartiteChannel(dim_a, dim_b, channel)
    return named_channel(source, dim_a, dim_b, p=p, t=t)


def _check_format(fmt: str) -> str:
    if fmt not in ("csv", "json"):
        raise InvalidInputError(f"--format must be csv or json, got {fmt!r}")
    return fmt


def _output_path(out: Optional[Path], command: str, fmt: str) -> Path:
    return out or Path(settings.output_dir) / f"{command}.{fmt}"


def _require_sampling_args(exact: bool, seqs: Optional[int], seed: Optional[int]) -> None:
    if not exact and (seqs is None or seed is None):
        raise InvalidInputError("--monte-carlo needs both --seqs and --seed")


def _run_batch(config: ExperimentConfig, job: Coroutine, out: Optional[Path]) -> ResultTable:
    table: ResultTable = asyncio.run(job)
    table = table.model_copy(update={"metadata": {**config.metadata(), **table.metadata}})
    path = write_table(table, _output_path(out, config.command, config.fmt), config.fmt)
    logger.info("📄 Wrote %d rows to %s", len(table.rows), path)
    logger.info("🔑 Config hash: %s", config.config_hash())
    return table


def _write_datasets(
    runner: ExperimentRunner,
    config: ExperimentConfig,
    directory: Optional[Path],
    keep_samples: bool,
    out: Optional[Path],
) -> None:
    """One file per fitted decay curve: CSV, or JSON with samples under --keep-samples."""
    if directory is None and not keep_samples:
        return
    target = _output_path(out, config.command, config.fmt)
    directory = directory or target.with_name(f"{config.command}_datasets")
    fmt = "json" if keep_samples else "csv"
    metadata = config.metadata()
    for label, data in sorted(runner.datasets.items()):
        write_dataset(data, directory / f"{label}.{fmt}", fmt, {**metadata, "dataset": label})
    logger.info("📄 Wrote %d decay datasets to %s", len(runner.datasets), directory)


def _exit_on_unconverged(table: ResultTable) -> None:
    if "converged" not in table.columns:
        return
    failed = sum(1 for ok in table.column("converged") if not ok)
    if failed:
        raise FitError(f"{failed} of {len(table.rows)} fits did not converge")


def _print_report(report: MeasureReport) -> None:
    table = Table(title=f"Measures ({report.dim_a} x {report.dim_b})")
    table.add_column("quantity")
    table.add_column("value", justify="right")
    table.add_row("u", f"{report.u:.10g}")
    for source, row in report.sub.items():
        for target, value in row.items():
            table.add_row(f"u_{source}->{target}", f"{value:.10g}")
    table.add_row("u_c", f"{report.u_c:.10g}")
    table.add_row("witness bound C", f"{report.witness_bound_exact} ({report.witness_bound:.10g})")
    table.add_row("witness violated", str(report.witness_violated))
    table.add_row("addressability a", f"{report.addressability.a:.10g}")
    table.add_row("infidelity", f"{report.infidelity:.10g}")
    console.print(table)


@app.command()
def measures(
    channel: str = typer.Option(..., "--channel", "-c", help="Channel JSON file or built-in name"),
    dims: str = typer.Option("2,2", "--dims", help="Subsystem dimensions dA,dB"),
    p: Optional[float] = typer.Option(None, "--p", help="Strength for named noise channels"),
    t: Optional[float] = typer.Option(None, "--t", help="SWAP weight for swap_mixture"),
    fmt: str = typer.Option("table", "--format", "-f", help="table or json"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Write the JSON report here"),
    twirl: bool = typer.Option(False, "--twirl", help="Include the twirl matrix and its spectrum"),
) -> None:
    """Compute every measure of a bipartite channel."""
    try:
        bch = _resolve_channel(channel, dims, p, t)
        report = analyze(bch)
        logger.debug("Decomposition residual: %.3e", report.decomposition_residual)
        record = report.model_dump(mode="json")
        spectral = None
        if twirl:
            tm = twirl_matrix(bch)
            spectral = spectral_analysis(tm)
            record["twirl"] = twirl_to_dict(tm, spectral)
        payload = json.dumps(record, indent=2)
        if out is not None:
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(payload, encoding="utf-8")
            logger.info("📄 Report written to %s", out)
        if fmt == "json":
            typer.echo(payload)
        elif fmt == "table":
            _print_report(report)
            if spectral is not None:
                console.print(
                    f"eig(S) = {np.round(spectral.eigenvalues.real, 10).tolist()} "
                    f"({spectral.jordan_shape.value})"
                )
        else:
            raise InvalidInputError(f"--format must be table or json, got {fmt!r}")
    except Exception as e:
        _fail(e)


@app.command()
def histogram(
    n: int = typer.Option(20000, "--n", help="Number of Haar-random two-qubit unitaries"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
    out: Optional[Path] = typer.Option(None, "--out", "-o"),
    fmt: str = typer.Option("csv", "--format", "-f", help="csv or json"),
    threads: Optional[int] = typer.Option(None, "--threads"),
) -> None:
    """u_c histogram data for random two-qubit unitaries."""
    try:
        config = ExperimentConfig(
            command="histogram",
            seed=settings.seed if seed is None else seed,
            n=n,
            output=str(out) if out else None,
            fmt=_check_format(fmt),
        )
        logger.info("🚀 Sampling %d unitaries (seed %d)", n, config.seed)
        runner = ExperimentRunner(threads=threads, seed=config.seed)
        table = _run_batch(config, runner.histogram(n), out)
        logger.info("📊 Fraction above 7/12: %s", table.metadata["fraction_above_bound"])
    except Exception as e:
        _fail(e)


@app.command()
def convergence(
    grid: str = typer.Option("0:1:11", "--grid", help="p grid start:stop:steps"),
    rank: int = typer.Option(2, "--rank", help="Kraus rank of the random factors"),
    replicates: int = typer.Option(1, "--replicates", help="Independent channel draws"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    out: Optional[Path] = typer.Option(None, "--out", "-o"),
    fmt: str = typer.Option("csv", "--format", "-f"),
    threads: Optional[int] = typer.Option(None, "--threads"),
) -> None:
    """Gap |u_c - C| along p E_A (x) E_B + (1 - p) G."""
    try:
        config = ExperimentConfig(
            command="convergence",
            seed=settings.seed if seed is None else seed,
            rank=rank,
            grid=grid,
            replicates=replicates,
            output=str(out) if out else None,
            fmt=_check_format(fmt),
        )
        runner = ExperimentRunner(threads=threads, seed=config.seed)
        logger.info("🚀 Convergence sweep over p=%s", grid)
        _run_batch(config, runner.convergence(parse_grid(grid), rank, replicates), out)
    except Exception as e:
        _fail(e)


@app.command("sweep-reset")
def sweep_reset(
    grid: str = typer.Option("0.5:1:6", "--grid", help="Reset strength grid start:stop:steps"),
    reset_model: str = typer.Option("depolarizing", "--reset-model", help="depolarizing or bloch"),
    bloch: str = typer.Option("0,0,1", "--bloch", help="Bloch direction x,y,z for the bloch model"),
    channel: Optional[str] = typer.Option(None, "--channel", "-c", help="Gate noise; pinned channel by default"),
    dims: str = typer.Option("2,2", "--dims"),
    exact: bool = typer.Option(True, "--exact/--monte-carlo", help="Exact expectations or sampling"),
    k_max: Optional[int] = typer.Option(None, "--k-max"),
    seqs: Optional[int] = typer.Option(None, "--seqs"),
    shots: Optional[int] = typer.Option(None, "--shots"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    out: Optional[Path] = typer.Option(None, "--out", "-o"),
    fmt: str = typer.Option("csv", "--format", "-f"),
    keep_samples: bool = typer.Option(False, "--keep-samples", help="Keep per-sequence m(s) in JSON datasets"),
    datasets: Optional[Path] = typer.Option(None, "--datasets", help="Directory for the decay datasets"),
    threads: Optional[int] = typer.Option(None, "--threads"),
) -> None:
    """Reset-assisted estimate of u_{A->A} against reset error."""
    try:
        _require_sampling_args(exact, seqs, seed)
        direction = _parse_floats(bloch, 3, "--bloch")
        k_max = k_max or settings.k_max
        config = ExperimentConfig(
            command="sweep-reset",
            seed=settings.seed if seed is None else seed,
            channel=channel or "pinned",
            k_max=k_max,
            seqs=seqs,
            exact=exact,
            bloch=direction,
            grid=f"{reset_model}:{grid}",
            shots=shots,
            output=str(out) if out else None,
            fmt=_check_format(fmt),
        )
        bch = _resolve_channel(channel, dims, None, None) if channel else None
        runner = ExperimentRunner(threads=threads, seed=config.seed, keep_samples=keep_samples)
        logger.info("🚀 Reset sweep (%s) over %s", reset_model, grid)
        table = _run_batch(
            config,
            runner.sweep_reset(
                parse_grid(grid),
                model=reset_model,
                bch=bch,
                exact=exact,
                k_list=range(1, k_max + 1),
                seqs=seqs,
                direction=direction,
                shots=shots,
            ),
            out,
        )
        _write_datasets(runner, config, datasets, keep_samples, out)
        _exit_on_unconverged(table)
    except Exception as e:
        _fail(e)


@app.command("witness-contour")
def witness_contour(
    grid: str = typer.Option("0:1:11", "--grid", help="SWAP weight t grid"),
    p_grid: Optional[str] = typer.Option(None, "--p-grid", help="Reset of B for the u_A->A run"),
    q_grid: Optional[str] = typer.Option(None, "--q-grid", help="Reset of A for the u_B->B run"),
    reset_p: float = typer.Option(1.0, "--reset-p", help="Reset strength when no p/q grid is given"),
    exact: bool = typer.Option(True, "--exact/--monte-carlo"),
    k_max: Optional[int] = typer.Option(None, "--k-max"),
    seqs: Optional[int] = typer.Option(None, "--seqs"),
    shots: Optional[int] = typer.Option(None, "--shots"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    out: Optional[Path] = typer.Option(None, "--out", "-o"),
    fmt: str = typer.Option("csv", "--format", "-f"),
    keep_samples: bool = typer.Option(False, "--keep-samples", help="Keep per-sequence m(s) in JSON datasets"),
    datasets: Optional[Path] = typer.Option(None, "--datasets", help="Directory for the decay datasets"),
    threads: Optional[int] = typer.Option(None, "--threads"),
) -> None:
    """Simulated witness of non-separability on t SWAP + (1 - t) id."""
    try:
        _require_sampling_args(exact, seqs, seed)
        k_max = k_max or settings.k_max
        p_values = parse_grid(p_grid) if p_grid else [reset_p]
        q_values = parse_grid(q_grid) if q_grid else [reset_p]
        config = ExperimentConfig(
            command="witness-contour",
            seed=settings.seed if seed is None else seed,
            channel="swap_mixture",
            k_max=k_max,
            seqs=seqs,
            exact=exact,
            reset_p=reset_p,
            grid=f"t={grid};p={p_grid or reset_p};q={q_grid or reset_p}",
            shots=shots,
            output=str(out) if out else None,
            fmt=_check_format(fmt),
        )
        runner = ExperimentRunner(threads=threads, seed=config.seed, keep_samples=keep_samples)
        logger.info("🚀 Witness contour over t=%s", grid)
        table = _run_batch(
            config,
            runner.witness_contour(
                parse_grid(grid),
                p_values,
                q_values,
                exact=exact,
                k_list=range(1, k_max + 1),
                seqs=seqs,
                shots=shots,
            ),
            out,
        )
        _write_datasets(runner, config, datasets, keep_samples, out)
        witnessed = sum(1 for w in table.column("witnessed_sim") if w)
        logger.info("🔎 %d of %d grid points witnessed", witnessed, len(table.rows))
        _exit_on_unconverged(table)
    except Exception as e:
        _fail(e)


@app.command("compare-addressability")
def compare_addressability(
    n: int = typer.Option(200, "--n", help="Samples per Kraus rank"),
    ranks: str = typer.Option("1,2,4,16", "--ranks", help="Comma-separated Kraus ranks"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    out: Optional[Path] = typer.Option(None, "--out", "-o"),
    fmt: str = typer.Option("csv", "--format", "-f"),
    threads: Optional[int] = typer.Option(None, "--threads"),
) -> None:
    """Correlated unitarity against addressability for random channels."""
    try:
        rank_list = _parse_ints(ranks, "--ranks")
        config = ExperimentConfig(
            command="compare-addressability",
            seed=settings.seed if seed is None else seed,
            n=n,
            ranks=rank_list,
            output=str(out) if out else None,
            fmt=_check_format(fmt),
        )
        runner = ExperimentRunner(threads=threads, seed=config.seed)
        logger.info("🚀 Sampling %d channels for ranks %s", n, rank_list)
        _run_batch(config, runner.compare_addressability(n, rank_list), out)
    except Exception as e:
        _fail(e)


@app.command("export-channel")
def export_channel(
    out: Path = typer.Option(..., "--out", "-o", help="Destination JSON file"),
    channel: Optional[str] = typer.Option(None, "--channel", "-c", help="Built-in channel name"),
    sample: Optional[str] = typer.Option(
        None, "--sample", help="random, product or separable (with certificate)"
    ),
    dims: str = typer.Option("2,2", "--dims"),
    p: Optional[float] = typer.Option(None, "--p"),
    t: Optional[float] = typer.Option(None, "--t"),
    rank: Optional[int] = typer.Option(None, "--rank", help="Kraus rank for sampled channels"),
    terms: int = typer.Option(3, "--terms", help="Product terms of a sampled separable channel"),
    representation: str = typer.Option("choi", "--repr", help="kraus, choi or liouville"),
    seed: Optional[int] = typer.Option(None, "--seed"),
) -> None:
    """Write a named or sampled channel in the channel JSON format."""
    try:
        if (channel is None) == (sample is None):
            raise InvalidInputError("Give exactly one of --channel and --sample")
        try:
            kind = Representation(representation)
        except ValueError as e:
            raise InvalidInputError(
                f"--repr must be kraus, choi or liouville, got {representation!r}"
            ) from e
        dim_a, dim_b = _parse_dims(dims)
        certificate = None
        if channel is not None:
            bch = named_channel(channel, dim_a, dim_b, p=p, t=t)
        else:
            rng = make_rng(seed)
            if sample == "random":
                d = dim_a * dim_b
                bch = BipartiteChannel(dim_a, dim_b, random_channel(d, d, rank or d * d, rng))
            elif sample == "product":
                bch = random_product_channel(dim_a, dim_b, rng, rank, rank)
            elif sample == "separable":
                bch, certificate = random_separable(dim_a, dim_b, terms, rng)
            else:
                raise InvalidInputError(f"Unknown sampler {sample!r}")
        path = write_channel(out, bch, kind, certificate)
        logger.info("📄 Wrote %s channel to %s", kind.value, path)
    except Exception as e:
        _fail(e)
