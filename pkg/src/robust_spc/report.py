"""Chart x shift ARL grids, the relative-ARL index, and table output."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Iterable, Mapping, Sequence

from . import arl as arl_mod
from .datagen import Scenario

SHIFTS = (0.0, 0.1, 0.3, 0.5, 0.7, 1.0, 1.5)
NOMINAL_ARL0 = 500.0

ROWS = (
    "Shewhart X-bar",
    "Cusum X-bar",
    "EWMA X-bar",
    "Shewhart X-tilde",
    "Cusum X-tilde",
    "EWMA X-tilde",
    "Ad-Cusum X-tilde",
)

# Published reference grids for the seven-chart study (rows follow ROWS,
# columns follow SHIFTS).
REFERENCE_CLEAN = {
    "Shewhart X-bar": (500.2, 405.3, 128.1, 41.5, 16.3, 5.0, 1.7),
    "Cusum X-bar": (501.2, 130.0, 20.2, 9.9, 6.5, 4.5, 2.9),
    "EWMA X-bar": (501.0, 136.3, 19.2, 8.5, 5.2, 3.4, 2.4),
    "Shewhart X-tilde": (500.1, 439.2, 175.3, 69.6, 28.3, 9.7, 2.7),
    "Cusum X-tilde": (502.0, 151.4, 26.2, 13.1, 8.7, 5.7, 3.8),
    "EWMA X-tilde": (499.2, 165.4, 24.4, 10.3, 6.4, 4.0, 2.7),
    "Ad-Cusum X-tilde": (504.1, 124.9, 24.5, 11.7, 7.9, 5.4, 3.7),
}
REFERENCE_CONTAMINATED = {
    "Shewhart X-bar": (87.1, 78.0, 48.2, 24.5, 13.8, 5.7, 2.7),
    "Cusum X-bar": (265.4, 97.4, 19.2, 9.9, 6.6, 4.4, 2.9),
    "EWMA X-bar": (186.1, 85.2, 17.1, 8.0, 5.0, 3.4, 2.4),
    "Shewhart X-tilde": (264.5, 236.8, 126.6, 48.6, 24.1, 9.8, 4.0),
    "Cusum X-tilde": (430.0, 139.4, 26.8, 12.8, 8.6, 5.8, 3.8),
    "EWMA X-tilde": (343.9, 127.4, 23.3, 10.0, 6.2, 4.0, 2.7),
    "Ad-Cusum X-tilde": (466.2, 121.5, 24.1, 11.8, 7.9, 5.4, 3.7),
}
REFERENCE_RARL = {
    "Shewhart X-bar": (500, 447.7, 276.7, 140.6, 79.2, 32.7, 15.5),
    "Cusum X-bar": (500, 183.5, 36.2, 18.7, 12.4, 8.3, 5.46),
    "EWMA X-bar": (500, 228.9, 45.9, 21.5, 13.4, 9.1, 6.45),
    "Shewhart X-tilde": (500, 446.1, 238.5, 91.6, 45.4, 18.5, 7.54),
    "Cusum X-tilde": (500, 162.1, 31.1, 14.9, 10.0, 6.74, 4.42),
    "EWMA X-tilde": (500, 185.2, 33.9, 14.5, 9.01, 5.82, 3.93),
    "Ad-Cusum X-tilde": (500, 130.3, 25.9, 12.7, 8.47, 5.79, 3.97),
}


@dataclass
class Cell:
    value: float
    std_error: float | None = None
    replications: int | None = None
    truncated: int = 0
    provenance: str = "simulated"
    seed: int | None = None
    usable: bool = True

    @classmethod
    def from_summary(cls, summary: arl_mod.RunLengthSummary) -> "Cell":
        return cls(
            value=summary.arl,
            std_error=summary.std_error,
            replications=summary.replications,
            truncated=summary.truncated_count,
            provenance="simulated",
            seed=summary.master_seed,
            usable=summary.usable,
        )


@dataclass
class ComparisonTable:
    title: str
    rows: list
    shifts: list
    cells: list  # cells[i][j] for rows[i], shifts[j]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.rows)) != len(self.rows):
            raise ValueError("row labels must be unique")
        if len(set(self.shifts)) != len(self.shifts):
            raise ValueError("shift labels must be unique")
        if len(self.cells) != len(self.rows) or any(len(r) != len(self.shifts) for r in self.cells):
            raise ValueError("cell grid does not match rows x shifts")

    def cell(self, row: str, shift: float) -> Cell:
        return self.cells[self.rows.index(row)][self.shifts.index(shift)]

    def value(self, row: str, shift: float) -> float:
        return self.cell(row, shift).value

    def row_values(self, row: str) -> list:
        return [c.value for c in self.cells[self.rows.index(row)]]

    def column_values(self, shift: float) -> dict:
        j = self.shifts.index(shift)
        return {r: self.cells[i][j].value for i, r in enumerate(self.rows)}

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "rows": list(self.rows),
            "shifts": list(self.shifts),
            "cells": [[asdict(c) for c in row] for row in self.cells],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ComparisonTable":
        return cls(
            title=data["title"],
            rows=list(data["rows"]),
            shifts=[float(s) for s in data["shifts"]],
            cells=[[Cell(**c) for c in row] for row in data["cells"]],
            metadata=data.get("metadata", {}),
        )


def table_from_values(
    title: str, values: Mapping[str, Sequence[float]], shifts: Sequence[float] = SHIFTS,
    provenance: str = "printed",
) -> ComparisonTable:
    rows = list(values)
    cells = [[Cell(float(v), provenance=provenance) for v in values[r]] for r in rows]
    return ComparisonTable(title, rows, list(shifts), cells, {"source": provenance})


def rarl_table(
    contaminated: ComparisonTable,
    nominal_arl0: float = NOMINAL_ARL0,
    clean_arl0: Mapping[str, float] | None = None,
) -> ComparisonTable:
    """Relative ARL: each row scaled by ``nominal_arl0 / ARL_C(0)``.

    The nominal in-control ARL is used as ARL(0) so every row's zero-shift
    cell equals it exactly; simulated clean ARL0 values, when given, are kept
    in the metadata only.
    """
    if 0.0 not in contaminated.shifts:
        raise ValueError("contaminated table has no delta = 0 column")
    j0 = contaminated.shifts.index(0.0)
    cells = []
    factors = {}
    for i, row in enumerate(contaminated.rows):
        base = contaminated.cells[i][j0]
        if not (base.usable and base.value > 0 and math.isfinite(base.value)):
            factors[row] = None
            cells.append([
                Cell(math.nan, provenance=f"error: no positive delta=0 ARL for {row}", usable=False)
                for _ in contaminated.shifts
            ])
            continue
        k = nominal_arl0 / base.value
        factors[row] = k
        out = []
        for j, c in enumerate(contaminated.cells[i]):
            if j == j0:
                value = float(nominal_arl0)
            else:
                value = k * c.value
            se = None if c.std_error is None else k * c.std_error
            out.append(Cell(value, se, c.replications, c.truncated, "derived", c.seed, c.usable))
        cells.append(out)
    metadata = {
        "derived_from": contaminated.title,
        "nominal_arl0": nominal_arl0,
        "k": factors,
        "source_metadata": contaminated.metadata,
    }
    if clean_arl0 is not None:
        metadata["clean_arl0"] = dict(clean_arl0)
    return ComparisonTable(
        f"Relative ARL ({contaminated.title})",
        list(contaminated.rows),
        list(contaminated.shifts),
        cells,
        metadata,
    )


def assemble_table(
    configs: Mapping[str, object],
    scenario: Scenario,
    shifts: Sequence[float] = SHIFTS,
    replications: int = 10_000,
    cap: int = arl_mod.DEFAULT_CAP,
    master_seed: int = arl_mod.DEFAULT_SEED,
    workers: int = 1,
    title: str = "ARL",
    progress=None,
) -> ComparisonTable:
    """Simulated ARL for every (chart, shift) pair, same master seed per cell."""
    cells = []
    for name, config in configs.items():
        row = []
        for delta in shifts:
            summary = arl_mod.estimate_arl(
                config, scenario.with_shift(delta), replications, cap, master_seed, workers
            )
            row.append(Cell.from_summary(summary))
            if progress:
                progress(name, delta, summary)
        cells.append(row)
    metadata = {
        "scenario": scenario.to_dict(),
        "master_seed": master_seed,
        "replications": replications,
        "cap": cap,
    }
    return ComparisonTable(title, list(configs), [float(s) for s in shifts], cells, metadata)


def compare_to_reference(
    table: ComparisonTable, reference: Mapping[str, Sequence[float]],
    threshold: float = 0.10, shifts: Sequence[float] = SHIFTS,
) -> list:
    """Per-cell relative differences against a reference grid.

    ``shifts`` labels the reference columns; table columns without a
    reference value are skipped.
    """
    out = []
    for row in table.rows:
        if row not in reference:
            continue
        for shift, ref in zip(shifts, reference[row]):
            if shift not in table.shifts:
                continue
            value = table.value(row, shift)
            rel = (value - ref) / ref
            out.append({
                "chart": row, "delta": shift, "value": value, "reference": ref,
                "relative_difference": rel, "pass": abs(rel) <= threshold,
            })
    return out


# --------------------------------------------------------------------------
# output


def _shift_label(shift: float) -> str:
    return f"delta_{float(shift)!r}"


def emit(table: ComparisonTable, fmt: str = "csv") -> bytes:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["chart"] + [_shift_label(s) for s in table.shifts])
        for i, row in enumerate(table.rows):
            writer.writerow([row] + [repr(float(c.value)) for c in table.cells[i]])
        return buf.getvalue().encode()
    if fmt == "json":
        return (json.dumps(table.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n").encode()
    if fmt in ("text", "aligned-text"):
        return render_text(table).encode()
    raise ValueError(f"unknown format {fmt!r}")


def parse_json(payload: bytes | str) -> ComparisonTable:
    return ComparisonTable.from_dict(json.loads(payload))


def _format_value(value: float) -> str:
    if not math.isfinite(value):
        return "n/a"
    return f"{value:.1f}"


def render_text(table: ComparisonTable) -> str:
    label_width = max([len("Control Chart")] + [len(r) for r in table.rows])
    values = [[_format_value(c.value) + ("*" if c.truncated else "") for c in row]
              for row in table.cells]
    col_width = max([6] + [len(f"{s:.1f}") for s in table.shifts]
                    + [len(v) for row in values for v in row])
    sep = "+" + "-" * (label_width + 2) + ("+" + "-" * (col_width + 2)) * len(table.shifts) + "+"
    lines = [table.title, sep]
    header = f"| {'Control Chart':<{label_width}} |" + "".join(
        f" {s:>{col_width}.1f} |" for s in table.shifts
    )
    lines += [header, sep]
    for row, vals in zip(table.rows, values):
        lines.append(f"| {row:<{label_width}} |" + "".join(f" {v:>{col_width}} |" for v in vals))
    lines.append(sep)
    if any(c.truncated for r in table.cells for c in r):
        lines.append("* some replications hit the run-length cap; value is a lower bound")
    return "\n".join(lines) + "\n"


def write_table(table: ComparisonTable, path, fmt: str) -> None:
    from pathlib import Path

    target = Path(path)
    try:
        target.write_bytes(emit(table, fmt))
    except OSError as exc:
        raise OSError(f"cannot write {target}: {exc.strerror}") from exc
