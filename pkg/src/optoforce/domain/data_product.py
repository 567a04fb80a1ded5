"""
DataProduct entity handed from experiments to serialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from .errors import InvalidParameterError

PRODUCT_KINDS = ("table", "matrix")
OUTPUT_FORMATS = ("csv", "json")


@dataclass(frozen=True)
class Column:
    """Column name with its unit; "1" marks dimensionless values."""

    name: str
    unit: str
    description: str = ""


@dataclass(frozen=True)
class DataProduct:
    """
    Result of one experiment.

    Matrices are stored long-form: one payload row per cell, with the axis
    values as leading columns and their grids repeated in ``axes``.

    Attributes:
        kind: "table" or "matrix"
        name: Experiment id that produced the product
        columns: Name and unit of every payload column, in payload order
        payload: Rows of the product
        axes: Grid values of each matrix axis
        provenance: Resolved parameters sufficient to re-run the experiment
        metadata: Derived scalars and per-cell diagnostics
    """

    kind: str
    name: str
    columns: List[Column]
    payload: pd.DataFrame
    axes: Dict[str, List[float]] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in PRODUCT_KINDS:
            raise InvalidParameterError(f"data product kind must be one of {PRODUCT_KINDS}, got {self.kind!r}")
        names = [c.name for c in self.columns]
        if names != list(self.payload.columns):
            raise InvalidParameterError(f"payload columns {list(self.payload.columns)} do not match {names}")
        missing = [c.name for c in self.columns if not c.unit]
        if missing:
            raise InvalidParameterError(f"columns without units: {missing}")
        if self.kind == "matrix" and not self.axes:
            raise InvalidParameterError("matrix products need axes")

    @property
    def units(self) -> Dict[str, str]:
        return {c.name: c.unit for c in self.columns}

    def with_provenance(self, **entries: Any) -> "DataProduct":
        return replace(self, provenance={**self.provenance, **entries})


@dataclass(frozen=True)
class OutputTarget:
    """Where and how a product is written; no path means standard output."""

    path: Optional[Path] = None
    fmt: str = "csv"
    plot_script: bool = False

    def __post_init__(self) -> None:
        if self.fmt not in OUTPUT_FORMATS:
            raise InvalidParameterError(f"output format must be one of {OUTPUT_FORMATS}, got {self.fmt!r}")
        if self.plot_script and self.path is None:
            raise InvalidParameterError("--plot-script needs --out")
