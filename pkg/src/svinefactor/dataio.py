"""Panel ingestion, standardization, and model (de)serialization.

CSV panels are comma-separated with one time point per row and an optional
header row.  Empty cells are treated as missing and filled by linear
interpolation along the time index; leading and trailing gaps take the
nearest observed value.

Fitted models round-trip through a single self-describing JSON document
with a ``schema_version`` field; matrices are stored as row-major nested
lists, which preserves every finite double bit-for-bit.

Standardization uses the 1/(T-1) standard-deviation convention throughout.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ModelFormatError

SCHEMA_VERSION = 1


@dataclass
class PanelData:
    """A T x N observation matrix with per-series standardization metadata.

    ``means``/``stdevs`` record the affine transform already applied to
    ``values``; raw (untransformed) panels carry the identity transform
    (zero means, unit stdevs).
    """

    values: np.ndarray
    series_names: list = field(default_factory=list)
    means: np.ndarray = None
    stdevs: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DataError("panel values must be 2-D (time x series)")
        t, n = self.values.shape
        if t < 2 or n < 1:
            raise DataError(f"panel needs T >= 2 and N >= 1, got T={t}, N={n}")
        if not np.isfinite(self.values).all():
            raise DataError("panel contains non-finite entries")
        if not self.series_names:
            self.series_names = [f"series_{i}" for i in range(n)]
        if len(self.series_names) != n:
            raise DataError("series_names length does not match the column count")
        if self.means is None:
            self.means = np.zeros(n)
        if self.stdevs is None:
            self.stdevs = np.ones(n)
        self.means = np.asarray(self.means, dtype=float)
        self.stdevs = np.asarray(self.stdevs, dtype=float)

    @property
    def t(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[1]

    def inverse_transform(self, values):
        """Map standardized values back to the original units."""
        return np.asarray(values, dtype=float) * self.stdevs + self.means


def _interpolate_column(col):
    observed = np.isfinite(col)
    if not observed.any():
        raise DataError("empty series: a column has no observed values")
    if observed.all():
        return col
    idx = np.arange(col.size)
    # np.interp extends flat beyond the first/last knot = nearest observed
    return np.interp(idx, idx[observed], col[observed])


def load_csv(path, has_header=False):
    """Read a rectangular numeric CSV into a PanelData.

    Empty cells are allowed and filled by linear interpolation in the time
    index.  Raises DataError for non-rectangular tables, unparsable cells,
    or all-empty columns.
    """
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    names = []
    if has_header:
        names = [cell.strip() for cell in rows[0]]
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path} has a header but no data rows")
    width = len(rows[0])
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"non-rectangular table: row {i + 1} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                values[i, j] = np.nan
                continue
            try:
                values[i, j] = float(cell)
            except ValueError as exc:
                raise DataError(f"unparsable numeric cell at row {i + 1}, column {j + 1}: {cell!r}") from exc
    for j in range(width):
        values[:, j] = _interpolate_column(values[:, j])
    return PanelData(values=values, series_names=names)


def write_csv(data, path, header=True):
    """Write a panel with 17-significant-digit decimal rendering (lossless)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header and data.series_names:
            writer.writerow(data.series_names)
        for row in data.values:
            writer.writerow([f"{x:.17g}" for x in row])


def standardize(data):
    """Column-wise (x - mean)/stdev transform, storing the original moments.

    Raises DataError on zero-variance columns.  Idempotent up to fp noise:
    standardizing standardized data applies a (0, 1) transform again.
    """
    values = data.values
    means = values.mean(axis=0)
    stdevs = values.std(axis=0, ddof=1)
    if np.any(stdevs <= 0) or not np.isfinite(stdevs).all():
        bad = [data.series_names[j] for j in np.nonzero(~(stdevs > 0))[0]]
        raise DataError(f"zero-variance column(s): {bad}")
    return PanelData(
        values=(values - means) / stdevs,
        series_names=list(data.series_names),
        means=means,
        stdevs=stdevs,
    )


def _matrix(obj):
    return np.asarray(obj, dtype=float)


def save_model(model, path):
    """Serialize a FittedModel to a self-describing JSON document."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "k": model.k,
        "p": model.p,
        "families": list(model.families),
        "angles": model.angles.values.tolist(),
        "signs": [float(s) for s in model.signs],
        "objective_value": model.objective_value,
        "copulas": [
            {
                "class_id": cid,
                "family": cop.family,
                "parameter": cop.parameter,
                "reflection": cop.reflection,
            }
            for cid, cop in model.copulas_in_order()
        ],
        "factors": model.decomposition.factors.tolist(),
        "loadings": model.decomposition.loadings.tolist(),
        "eigenvalues": model.decomposition.eigenvalues.tolist(),
        "residuals": model.decomposition.residuals.tolist(),
        "rotated_factors": model.rotated_factors.tolist(),
        "loadings_rotated": model.loadings_rotated.tolist(),
        "series_names": list(model.series_names),
        "means": [float(x) for x in model.means],
        "stdevs": [float(x) for x in model.stdevs],
        "standardized": bool(model.standardized),
        "trace": model.trace,
    }
    payload = json.dumps(doc, allow_nan=False)
    directory = os.path.dirname(os.path.abspath(path)) or "."
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise DataError(f"cannot write model to {path}: {exc}") from exc


def load_model(path):
    """Inverse of save_model; validates the schema version."""
    from . import pipeline  # local import to avoid a module cycle

    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read model from {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise ModelFormatError(f"{path} is not a model file (missing schema_version)")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ModelFormatError(
            f"unsupported schema version {doc['schema_version']} (expected {SCHEMA_VERSION})"
        )
    try:
        return pipeline.rebuild_fitted_model(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"corrupt model file {path}: {exc}") from exc
