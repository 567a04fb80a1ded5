from __future__ import annotations

import json
import math
from pathlib import Path

import pandas as pd
import pytest

from optoforce.domain.data_product import Column, DataProduct, OutputTarget
from optoforce.domain.errors import InvalidParameterError
from optoforce.infra.data_product_writer import (
    PLOT_SUFFIX,
    FileDataProductRepository,
    render_csv,
    render_json,
    render_plot_script,
)


@pytest.fixture
def table() -> DataProduct:
    payload = pd.DataFrame({"beta1_target": [0.0, 100.0], "variance": [0.5, math.nan], "valid": [True, False]})
    return DataProduct(
        kind="table",
        name="variance-drive",
        columns=[Column("beta1_target", "1"), Column("variance", "1"), Column("valid", "bool")],
        payload=payload,
        provenance={"experiment": "variance-drive", "config": {"system": {"kappa_hz": 1e6}}},
        metadata={"invalid_points": 1, "min_variance": 0.5},
    )


@pytest.fixture
def matrix() -> DataProduct:
    payload = pd.DataFrame(
        {"phi_m": [0.0, 0.0, 1.0, 1.0], "omega_eff": [1.0, 2.0, 1.0, 2.0], "response": [0.1, 0.2, 0.3, 0.4]}
    )
    return DataProduct(
        kind="matrix",
        name="response-map",
        columns=[Column("phi_m", "rad"), Column("omega_eff", "rad/s"), Column("response", "1")],
        payload=payload,
        axes={"phi_m": [0.0, 1.0], "omega_eff": [1.0, 2.0]},
    )


def test_product_invariants(table: DataProduct) -> None:
    with pytest.raises(InvalidParameterError):
        DataProduct(kind="cube", name="x", columns=table.columns, payload=table.payload)
    with pytest.raises(InvalidParameterError):
        DataProduct(kind="table", name="x", columns=table.columns[:2], payload=table.payload)
    with pytest.raises(InvalidParameterError):
        DataProduct(kind="table", name="x", columns=[*table.columns[:2], Column("valid", "")], payload=table.payload)
    with pytest.raises(InvalidParameterError):
        DataProduct(kind="matrix", name="x", columns=table.columns, payload=table.payload)
    with pytest.raises(InvalidParameterError):
        OutputTarget(fmt="xlsx")
    with pytest.raises(InvalidParameterError):
        OutputTarget(plot_script=True)


def test_csv_has_sorted_header_then_rows(table: DataProduct) -> None:
    lines = render_csv(table).splitlines()
    header = [line for line in lines if line.startswith("# ")]
    assert header == sorted(header)
    assert "# provenance.config.system.kappa_hz=1000000.0" in header
    assert "# units.variance=1" in header
    assert "# metadata.invalid_points=1" in header
    body = lines[len(header):]
    assert body[0] == "beta1_target,variance,valid"
    assert body[1] == "0.0,0.5,True"
    assert len(body) == 3


def test_json_is_stable_and_nan_free(table: DataProduct) -> None:
    text = render_json(table)
    assert text == render_json(table)
    document = json.loads(text)
    assert list(document) == sorted(document)
    assert document["payload"][1]["variance"] is None
    assert document["columns"][0] == {"name": "beta1_target", "unit": "1", "description": ""}
    assert document["provenance"]["config"]["system"]["kappa_hz"] == 1e6


def test_repository_writes_data_and_plot_script(tmp_path: Path, matrix: DataProduct) -> None:
    out = tmp_path / "map.json"
    written = FileDataProductRepository().save(matrix, OutputTarget(path=out, fmt="json", plot_script=True))
    assert written == out
    assert json.loads(out.read_text(encoding="utf-8"))["axes"]["omega_eff"] == [1.0, 2.0]
    script = tmp_path / ("map.json" + PLOT_SUFFIX)
    source = script.read_text(encoding="utf-8")
    assert '"map.json"' in source
    assert "pcolormesh" in source
    compile(source, str(script), "exec")


def test_repository_writes_stdout(capsys: pytest.CaptureFixture[str], table: DataProduct) -> None:
    assert FileDataProductRepository().save(table, OutputTarget()) is None
    assert "beta1_target,variance,valid" in capsys.readouterr().out


def test_plot_script_per_product_shape(table: DataProduct) -> None:
    source = render_plot_script(table, "sweep.csv")
    assert 'frame["beta1_target"]' in source
    compile(source, "sweep.csv.plot.py", "exec")
