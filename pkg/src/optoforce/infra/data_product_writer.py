"""
File implementation of DataProductRepository: CSV, JSON and plot scripts.

Both formats are byte-stable: keys are sorted, rows keep payload order and
floats are written with their shortest round-trip representation.
"""

from __future__ import annotations

import io
import json
import logging
import math
import sys
from pathlib import Path
from string import Template
from typing import Any, Dict, Optional

import numpy as np

from optoforce.domain.data_product import DataProduct, OutputTarget
from optoforce.domain.repositories import DataProductRepository
from optoforce.infra.config import flatten

logger = logging.getLogger(__name__)

PLOT_SUFFIX = ".plot.py"

_PLOT_TEMPLATE = Template(
    '''"""Plot $name from $data_file (written by optoforce)."""

import json
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

DATA = Path(__file__).with_name("$data_file")


def load() -> pd.DataFrame:
    if DATA.suffix == ".json":
        return pd.DataFrame(json.loads(DATA.read_text(encoding="utf-8"))["payload"])
    return pd.read_csv(DATA, comment="#")


def main() -> None:
    frame = load()
    fig, ax = plt.subplots()
$body
    fig.tight_layout()
    plt.show()


if __name__ == "__main__":
    main()
'''
)

_MATRIX_BODY = """\
    grid = frame.pivot(index="$row", columns="$column", values="$value")
    mesh = ax.pcolormesh(grid.columns, grid.index, grid.to_numpy(), shading="auto", cmap="RdBu_r")
    fig.colorbar(mesh, ax=ax, label="$value")
    ax.set_xlabel("$column [$column_unit]")
    ax.set_ylabel("$row [$row_unit]")"""

_GROUPED_BODY = """\
    for key, part in frame.groupby("$group"):
        for column in $values:
            ax.semilogy(part["$x"], part[column], label=f"$group={key:g} {column}")
    ax.set_xlabel("$x [$x_unit]")
    ax.legend()"""

_TABLE_BODY = """\
    for column in $values:
        ax.plot(frame["$x"], frame[column], marker="o", label=column)
    ax.set_xlabel("$x [$x_unit]")
    ax.legend()"""

_BAR_BODY = """\
    ax.bar(frame["$x"], frame["$y"])
    ax.set_yscale("symlog")"""


class FileDataProductRepository(DataProductRepository):
    """Writes data products as CSV or JSON files, or to standard output."""

    def save(self, product: DataProduct, target: OutputTarget) -> Optional[Path]:
        text = render_csv(product) if target.fmt == "csv" else render_json(product)
        if target.path is None:
            sys.stdout.write(text)
            sys.stdout.flush()
            return None

        path = Path(target.path)
        with path.open("w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        logger.info("wrote %s product to %s", product.name, path)
        if target.plot_script:
            script = path.with_name(path.name + PLOT_SUFFIX)
            with script.open("w", encoding="utf-8", newline="") as handle:
                handle.write(render_plot_script(product, path.name))
            logger.info("wrote plot script %s", script)
        return path


def render_csv(product: DataProduct) -> str:
    """
    CSV text: ``# key=value`` comment lines (provenance, units, metadata),
    then the column-name row and the payload rows.
    """
    header: Dict[str, Any] = {
        **{f"provenance.{k}": v for k, v in flatten(product.provenance).items()},
        **{f"units.{c.name}": c.unit for c in product.columns},
        **{f"metadata.{k}": v for k, v in flatten(product.metadata).items()},
        "kind": product.kind,
        "name": product.name,
    }
    buffer = io.StringIO()
    for key in sorted(header):
        buffer.write(f"# {key}={_scalar_text(header[key])}\n")
    product.payload.to_csv(buffer, index=False, lineterminator="\n", float_format=None)
    return buffer.getvalue()


def render_json(product: DataProduct) -> str:
    """Single JSON document with provenance, axes, columns and row-major payload."""
    document = {
        "kind": product.kind,
        "name": product.name,
        "columns": [{"name": c.name, "unit": c.unit, "description": c.description} for c in product.columns],
        "axes": product.axes,
        "provenance": product.provenance,
        "metadata": product.metadata,
        "payload": product.payload.to_dict(orient="records"),
    }
    return json.dumps(_plain(document), sort_keys=True, indent=2, allow_nan=False) + "\n"


def render_plot_script(product: DataProduct, data_file: str) -> str:
    """Companion plotting script that reads ``data_file`` from its own directory."""
    units = product.units
    names = [c.name for c in product.columns]
    numeric = [n for n in names if product.payload[n].dtype.kind == "f"]
    if product.kind == "matrix":
        row, column = list(product.axes)[:2]
        value = "response" if "response" in names else numeric[-1]
        body = Template(_MATRIX_BODY).substitute(
            row=row, column=column, value=value, row_unit=units[row], column_unit=units[column]
        )
    elif "omega" in names and "beta1" in names:
        values = [n for n in numeric if n not in ("beta1", "omega")]
        body = Template(_GROUPED_BODY).substitute(group="beta1", x="omega", x_unit=units["omega"], values=values)
    elif names[0] == "quantity":
        body = Template(_BAR_BODY).substitute(x=names[0], y="value")
    else:
        x = names[0]
        values = [n for n in numeric if n != x and units[n] == "1"]
        body = Template(_TABLE_BODY).substitute(x=x, x_unit=units[x], values=values)
    return _PLOT_TEMPLATE.substitute(name=product.name, data_file=data_file, body=body)


def _scalar_text(value: Any) -> str:
    value = _plain(value)
    if isinstance(value, (list, dict)):
        return json.dumps(value, sort_keys=True, separators=(",", ":"))
    if value is None:
        return ""
    return str(value)


def _plain(value: Any) -> Any:
    """Native JSON types; NaN and infinities become null."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, complex):
        return [_plain(value.real), _plain(value.imag)]
    return value
