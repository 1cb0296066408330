"""
Output writers - tables, paths, ensembles and run manifests

CSV files use a header row, '.' decimals, LF line endings and UTF-8, with
floats at 17 significant digits so files compare byte for byte.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from src.models.domain import EmpiricalPmf, PmfTable, RunManifest, SamplePath, TableSource
from src.utils.helpers import format_float

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TABLE_HEADER = ("t", "n", "p", "error_bound")
ENSEMBLE_HEADER = ("t", "n", "count", "p", "lower", "upper")


class TableDocument(BaseModel):
    """JSON form of a PmfTable"""

    n0: int
    states: List[int]
    times: List[float]
    values: List[List[float]]
    error_bounds: List[List[Optional[float]]]
    source: TableSource
    order: Dict[str, Any]
    k_mode: str
    flags: List[str]

    @classmethod
    def from_table(cls, table: PmfTable) -> "TableDocument":
        bounds = [[None if np.isnan(b) else float(b) for b in row] for row in table.error_bounds]
        return cls(
            n0=table.n0,
            states=list(table.states),
            times=list(table.times),
            values=[[float(v) for v in row] for row in table.values],
            error_bounds=bounds,
            source=table.source,
            order=table.order,
            k_mode=table.k_mode,
            flags=list(table.flags),
        )

    def to_table(self) -> PmfTable:
        return PmfTable(
            n0=self.n0,
            states=list(self.states),
            times=list(self.times),
            values=np.array(self.values, dtype=float).reshape(len(self.states), len(self.times)),
            error_bounds=np.array(
                [[np.nan if b is None else b for b in row] for row in self.error_bounds], dtype=float
            ).reshape(len(self.states), len(self.times)),
            source=self.source,
            order=dict(self.order),
            k_mode=self.k_mode,
            flags=list(self.flags),
        )


def _open_csv(path: PathLike):
    return open(path, "w", encoding="utf-8", newline="")


def table_rows(table: PmfTable) -> List[Sequence[str]]:
    """CSV rows ordered by time, then state"""
    rows = []
    for column, t in enumerate(table.times):
        for row, n in enumerate(table.states):
            rows.append((
                format_float(t), str(n),
                format_float(table.values[row, column]), format_float(table.error_bounds[row, column]),
            ))
    return rows


def write_table_csv(table: PmfTable, path: PathLike) -> None:
    with _open_csv(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TABLE_HEADER)
        writer.writerows(table_rows(table))
    logger.info(f"Wrote {len(table.states)} x {len(table.times)} table to {path}")


def write_table_json(table: PmfTable, path: PathLike) -> None:
    document = TableDocument.from_table(table)
    Path(path).write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")


def read_table_json(path: PathLike) -> PmfTable:
    return TableDocument.model_validate_json(Path(path).read_text(encoding="utf-8")).to_table()


def path_to_json(path: SamplePath) -> str:
    payload = {
        "n0": path.n0,
        "horizon": path.horizon,
        "guard_hit": path.guard_hit,
        "events": [{"t": t, "n": n} for t, n in path.events],
    }
    return json.dumps(payload, separators=(",", ":"))


def write_paths_jsonl(paths: Iterable[SamplePath], path: PathLike) -> int:
    """One JSON object per line; returns the number of paths"""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for sample in paths:
            handle.write(path_to_json(sample) + "\n")
            count += 1
    logger.info(f"Wrote {count} paths to {path}")
    return count


def ensemble_rows(columns: Dict[float, EmpiricalPmf]) -> List[Sequence[str]]:
    rows = []
    for t in sorted(columns):
        empirical = columns[t]
        for n in sorted(empirical.probabilities):
            p = empirical.probabilities[n]
            rows.append((
                format_float(t), str(n), str(round(p * empirical.sample_count)), format_float(p),
                format_float(empirical.lower[n]), format_float(empirical.upper[n]),
            ))
    return rows


def write_ensemble_csv(columns: Dict[float, EmpiricalPmf], path: PathLike) -> None:
    """Empirical pmf per time with Wilson bounds"""
    with _open_csv(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(ENSEMBLE_HEADER)
        writer.writerows(ensemble_rows(columns))


def write_manifest(manifest: RunManifest, path: PathLike) -> None:
    Path(path).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.debug(f"Manifest written to {path}")


def manifest_path(output: PathLike) -> Path:
    """Manifest location next to an output file"""
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")
