"""CSV ingestion/emission for populations and atomic file writes."""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .population import MISSING_LABEL, Population


@dataclass(frozen=True)
class ColumnMapping:
    """Names of the CSV columns holding each population field.

    ``label``, ``talent`` and ``resources`` are optional; set them to ``None``
    to ignore the column even when present.
    """

    group: str = "group"
    score: str = "score"
    label: str | None = "label"
    talent: str | None = None
    resources: str | None = None


def _umask():
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via a temp file in the same directory + rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_float(x):
    """Shortest repr that round-trips exactly; empty string for NaN/None."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def rows_to_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _parse_float(text, row, column):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DataError(f"cannot parse {column} value {text!r}", row=row) from None
    if not math.isfinite(value):
        raise DataError(f"{column} must be finite, got {text!r}", row=row)
    return value


def load_csv(path, schema: ColumnMapping | None = None) -> Population:
    """Parse a header-led UTF-8 CSV into a :class:`Population`.

    Row order is kept; groups get dense ids in order of first appearance.
    Errors name the 1-based data row (the header is not counted).
    """
    schema = schema or ColumnMapping()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = [schema.group, schema.score]
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"missing column(s) {missing}; found {header}")
        label_col = schema.label if schema.label in header else None
        talent_col = schema.talent if schema.talent and schema.talent in header else None
        res_col = schema.resources if schema.resources and schema.resources in header else None
        for col, name in ((schema.talent, "talent"), (schema.resources, "resources")):
            if col and col not in header:
                raise DataError(f"missing {name} column {col!r}")

        groups, scores, labels, talents, resources = [], [], [], [], []
        for row_no, row in enumerate(reader, start=1):
            g = row.get(schema.group)
            if g is None or g.strip() == "":
                raise DataError(f"empty {schema.group!r} value", row=row_no)
            groups.append(g.strip())
            scores.append(_parse_float(row.get(schema.score), row_no, schema.score))
            if label_col:
                raw = (row.get(label_col) or "").strip()
                if raw == "":
                    labels.append(MISSING_LABEL)
                elif raw in ("0", "1"):
                    labels.append(int(raw))
                else:
                    raise DataError(f"label must be 0 or 1, got {raw!r}", row=row_no)
            if talent_col:
                raw = (row.get(talent_col) or "").strip()
                talents.append(np.nan if raw == "" else _parse_float(raw, row_no, talent_col))
            if res_col:
                raw = (row.get(res_col) or "").strip()
                value = 0.0 if raw == "" else _parse_float(raw, row_no, res_col)
                if value < 0:
                    raise DataError(f"resources must be >= 0, got {raw!r}", row=row_no)
                resources.append(value)

    if not scores:
        raise DataError(f"{path}: no data rows")
    return Population.from_labels(
        groups,
        np.asarray(scores),
        label=np.asarray(labels, dtype=np.int8) if label_col else None,
        talent=np.asarray(talents) if talent_col else None,
        resources=np.asarray(resources) if res_col else None,
    )


POPULATION_COLUMNS = ColumnMapping(talent="talent", resources="resources")


def population_to_csv(pop: Population) -> str:
    names = [g.label for g in pop.groups]
    rows = (
        (
            names[g],
            format_float(s),
            "" if y == MISSING_LABEL else int(y),
            format_float(t),
            format_float(r),
        )
        for g, s, y, t, r in zip(pop.group, pop.score, pop.label, pop.talent, pop.resources)
    )
    return rows_to_csv(["group", "score", "label", "talent", "resources"], rows)


def write_csv(pop: Population, path):
    """Write ``pop`` so that ``load_csv(path, POPULATION_COLUMNS)`` restores it."""
    atomic_write_text(path, population_to_csv(pop))
