import json

import numpy as np
import pytest
from typer.testing import CliRunner

from subunit.cli.commands import app as cli_app
from subunit.core.config import settings
from subunit.core.logging import setup_logging
from subunit.utils.io import encode_complex, read_dataset, read_table


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


def test_cli_measures_swap(runner, tmp_path):
    report_path = tmp_path / "swap.json"
    result = runner.invoke(
        cli_app, ["measures", "--channel", "swap", "--format", "json", "--out", str(report_path)]
    )
    assert result.exit_code == 0, result.output
    report = json.loads(report_path.read_text())
    assert report["u_c"] == pytest.approx(1.0, abs=1e-12)
    assert report["witness_violated"] is True
    assert report["witness_bound_exact"] == "7/12"


def test_cli_measures_table_with_twirl(runner, tmp_path):
    report_path = tmp_path / "mix.json"
    result = runner.invoke(
        cli_app,
        ["measures", "-c", "swap_mixture", "--t", "0.3", "--twirl", "--out", str(report_path)],
    )
    assert result.exit_code == 0, result.output
    assert "u_c" in result.output
    report = json.loads(report_path.read_text())
    assert report["twirl"]["jordan_shape"] == "diagonal"


def test_cli_export_then_measure(runner, tmp_path):
    channel_path = tmp_path / "cnot.json"
    result = runner.invoke(cli_app, ["export-channel", "--channel", "cnot", "--out", str(channel_path)])
    assert result.exit_code == 0, result.output
    report_path = tmp_path / "cnot_report.json"
    result = runner.invoke(
        cli_app, ["measures", "-c", str(channel_path), "--out", str(report_path)]
    )
    assert result.exit_code == 0, result.output
    report = json.loads(report_path.read_text())
    assert abs(report["addressability"]["a"]) < 1e-10
    assert report["u_c"] == pytest.approx(4 / 9, abs=1e-10)
    assert report["witness_violated"] is False


def test_cli_export_separable_sample(runner, tmp_path):
    channel_path = tmp_path / "sep.json"
    result = runner.invoke(
        cli_app,
        ["export-channel", "--sample", "separable", "--terms", "2", "--seed", "3", "--out", str(channel_path)],
    )
    assert result.exit_code == 0, result.output
    raw = json.loads(channel_path.read_text())
    assert len(raw["certificate"]) == 2
    report_path = tmp_path / "sep_report.json"
    result = runner.invoke(cli_app, ["measures", "-c", str(channel_path), "--out", str(report_path)])
    assert result.exit_code == 0, result.output
    assert json.loads(report_path.read_text())["witness_violated"] is False


def test_cli_export_needs_one_source(runner, tmp_path):
    result = runner.invoke(cli_app, ["export-channel", "--out", str(tmp_path / "x.json")])
    assert result.exit_code == 2


def test_cli_rejects_malformed_channel_file(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"d_in": 4,\n "d_out": 4\n}', encoding="utf-8")
    result = runner.invoke(cli_app, ["measures", "-c", str(bad)])
    assert result.exit_code == 2


def test_cli_rejects_non_cptp_channel(runner, tmp_path):
    leaky = tmp_path / "leaky.json"
    payload = {
        "d_in": 4,
        "d_out": 4,
        "repr": "liouville",
        "data": encode_complex(0.5 * np.eye(16)),
        "d_a": 2,
        "d_b": 2,
    }
    leaky.write_text(json.dumps(payload), encoding="utf-8")
    result = runner.invoke(cli_app, ["measures", "-c", str(leaky)])
    assert result.exit_code == 2


def test_cli_histogram_is_reproducible(runner, tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for path in paths:
        result = runner.invoke(cli_app, ["histogram", "--n", "20", "--seed", "5", "--out", str(path)])
        assert result.exit_code == 0, result.output
    assert paths[0].read_bytes() == paths[1].read_bytes()
    table = read_table(paths[0])
    assert len(table.rows) == 20
    assert table.metadata["seed"] == "5"
    assert len(table.metadata["config_hash"]) == 16


def test_cli_default_output_location(runner):
    result = runner.invoke(cli_app, ["histogram", "--n", "3"])
    assert result.exit_code == 0, result.output
    assert (settings.output_dir / "histogram.csv").exists()


def test_cli_convergence_json(runner, tmp_path):
    out = tmp_path / "conv.json"
    result = runner.invoke(
        cli_app, ["convergence", "--grid", "0:1:3", "--rank", "1", "--format", "json", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    table = read_table(out)
    assert table.column("p") == [0.0, 0.5, 1.0]
    assert table.rows[-1][table.columns.index("gap")] < 1e-9
    assert table.metadata["command"] == "convergence"


def test_cli_rejects_bad_grid(runner, tmp_path):
    result = runner.invoke(cli_app, ["convergence", "--grid", "0:2:3", "--out", str(tmp_path / "c.csv")])
    assert result.exit_code == 2


def test_cli_monte_carlo_needs_seqs_and_seed(runner):
    result = runner.invoke(cli_app, ["sweep-reset", "--monte-carlo", "--seed", "1"])
    assert result.exit_code == 2


def test_cli_sweep_reset_ideal_point(runner, tmp_path):
    out = tmp_path / "sweep.csv"
    result = runner.invoke(
        cli_app, ["sweep-reset", "--grid", "1", "--k-max", "10", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    table = read_table(out)
    assert table.rows[0][table.columns.index("rel_error")] < 1e-6


def test_cli_witness_contour_identity(runner, tmp_path):
    out = tmp_path / "contour.csv"
    result = runner.invoke(
        cli_app, ["witness-contour", "--grid", "0", "--k-max", "10", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    table = read_table(out)
    assert table.column("witnessed_sim") == [False]


def test_cli_compare_addressability(runner, tmp_path):
    out = tmp_path / "addr.csv"
    result = runner.invoke(
        cli_app, ["compare-addressability", "--n", "2", "--ranks", "1,2", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    table = read_table(out)
    assert table.column("kind") == ["cnot", "random", "random", "random", "random"]


def test_cli_sweep_reset_writes_decay_datasets(runner, tmp_path):
    curves = tmp_path / "curves"
    result = runner.invoke(
        cli_app,
        ["sweep-reset", "--grid", "0.5:1:2", "--k-max", "8", "--datasets", str(curves),
         "--out", str(tmp_path / "sweep.csv")],
    )
    assert result.exit_code == 0, result.output
    assert sorted(p.name for p in curves.iterdir()) == ["depolarizing_0.5.csv", "depolarizing_1.csv"]
    data = read_dataset(curves / "depolarizing_1.csv")
    assert data.k == list(range(1, 9))
    assert data.exact
    assert "# dataset: depolarizing_1" in (curves / "depolarizing_1.csv").read_text()


def test_cli_keep_samples_writes_json_next_to_the_table(runner, tmp_path):
    out = tmp_path / "sweep.csv"
    result = runner.invoke(
        cli_app,
        ["sweep-reset", "--grid", "1", "--k-max", "6", "--monte-carlo", "--seqs", "20",
         "--seed", "1", "--keep-samples", "--out", str(out)],
    )
    assert result.exit_code in (0, 3), result.output
    data = read_dataset(tmp_path / "sweep-reset_datasets" / "depolarizing_1.json")
    assert data.samples is not None
    assert [len(s) for s in data.samples] == [20] * 6


def test_cli_log_file_receives_debug_records(runner, tmp_path):
    log_path = tmp_path / "logs" / "run.log"
    result = runner.invoke(
        cli_app,
        ["--log-file", str(log_path), "histogram", "--n", "3", "--out", str(tmp_path / "h.csv")],
    )
    setup_logging()
    assert result.exit_code == 0, result.output
    text = log_path.read_text(encoding="utf-8")
    assert "subunit.cli.commands" in text
    assert "Config hash" in text
