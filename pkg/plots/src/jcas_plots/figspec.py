"""Figure specifications and CSV input validation.

A figure spec is a small JSON file:

    {
      "family": "rate_cdf",            # or "detection"
      "inputs": ["out/rates.csv"],
      "group_by": ["channel_model", "estimator", "radar_kind", "rcr_db"],
      "output": "fig2.png"             # .png or .svg
    }

Grouping keys must exist as columns in every input CSV; the value and
axis columns are fixed by the family.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path


class SchemaError(ValueError):
    """An input CSV does not carry the columns the figure needs."""


FAMILIES = {
    # family -> (required value columns, default grouping keys)
    "rate_cdf": (
        ("rate_bps_hz",),
        ("channel_model", "estimator", "radar_kind", "rcr_db"),
    ),
    "detection": (
        ("range_m", "pd", "ci_low", "ci_high"),
        ("radar_kind", "rcr_db"),
    ),
}


@dataclass(frozen=True)
class FigureSpec:
    family: str
    inputs: tuple
    output: str
    group_by: tuple

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(
                f"unknown figure family {self.family!r}; pick from {sorted(FAMILIES)}"
            )
        if not self.inputs:
            raise ValueError("figure spec needs at least one input CSV")
        if Path(self.output).suffix.lower() not in (".png", ".svg"):
            raise ValueError("output must be a .png or .svg path")


def load_spec(path) -> FigureSpec:
    raw = json.loads(Path(path).read_text())
    unknown = set(raw) - {"family", "inputs", "group_by", "output"}
    if unknown:
        raise ValueError(f"unknown figure-spec keys: {sorted(unknown)}")
    family = raw.get("family", "")
    group_by = tuple(raw.get("group_by") or FAMILIES.get(family, ((), ()))[1])
    return FigureSpec(
        family=family,
        inputs=tuple(raw.get("inputs", ())),
        output=raw.get("output", ""),
        group_by=group_by,
    )


def read_table(path):
    """(columns, rows) from one CSV; rows keep string values."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            columns = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty CSV") from None
        rows = [row for row in reader if row]
    return columns, rows


def load_inputs(spec: FigureSpec):
    """Concatenated rows of all inputs as list[dict], schema-checked."""
    required = set(FAMILIES[spec.family][0]) | set(spec.group_by)
    records = []
    for path in spec.inputs:
        columns, rows = read_table(path)
        missing = required - set(columns)
        if missing:
            raise SchemaError(
                f"{path}: missing columns {sorted(missing)} "
                f"(has {columns})"
            )
        idx = {c: i for i, c in enumerate(columns)}
        for row in rows:
            records.append({c: row[idx[c]] for c in columns})
    return records


def group_records(records, keys):
    """Deterministically ordered {group tuple: [records]}."""
    groups = {}
    for rec in records:
        key = tuple(rec[k] for k in keys)
        groups.setdefault(key, []).append(rec)
    return dict(sorted(groups.items()))
