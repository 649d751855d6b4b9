"""CSV serialization of sweep results.

Plain comma-separated values with `#`-prefixed metadata lines before the
header.  Floats are written with 17 significant digits so a round trip is
bit-exact; infinities use the literal tokens `inf` / `-inf`, NaN uses `nan`.
No timestamps or environment data go into the files: identical inputs must
produce identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import LatticeTailsError

KINDS = ("DualRate", "Rate", "RadialRate", "Region", "Tail", "Report")


@dataclass(frozen=True)
class SweepResult:
    kind: str
    columns: dict = field(repr=False)      # name -> 1-d float array
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LatticeTailsError(f"unknown sweep kind {self.kind!r}")
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise LatticeTailsError(f"column lengths differ: {sorted(lengths)}")

    def __eq__(self, other):
        if not isinstance(other, SweepResult):
            return NotImplemented
        if self.kind != other.kind or self.metadata != other.metadata:
            return False
        if list(self.columns) != list(other.columns):
            return False
        for k in self.columns:
            a = np.asarray(self.columns[k], dtype=float)
            b = np.asarray(other.columns[k], dtype=float)
            if len(a) != len(b):
                return False
            same = (a == b) | (np.isnan(a) & np.isnan(b))
            if not np.all(same):
                return False
        return True


def _format(x: float) -> str:
    return f"{float(x):.17g}"


def write_csv(sr: SweepResult, path) -> None:
    lines = [f"# kind = {sr.kind}"]
    for key in sorted(sr.metadata):
        lines.append(f"# {key} = {sr.metadata[key]}")
    names = list(sr.columns)
    lines.append(",".join(names))
    arrays = [np.asarray(sr.columns[n], dtype=float) for n in names]
    n_rows = len(arrays[0]) if arrays else 0
    for i in range(n_rows):
        lines.append(",".join(_format(a[i]) for a in arrays))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> SweepResult:
    text = Path(path).read_text()
    metadata: dict = {}
    kind = None
    header = None
    rows: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" not in body:
                raise LatticeTailsError(f"line {lineno}: malformed metadata")
            key, value = (part.strip() for part in body.split("=", 1))
            if key == "kind":
                kind = value
            else:
                metadata[key] = value
            continue
        if header is None:
            header = [name.strip() for name in line.split(",")]
            if any(not name for name in header):
                raise LatticeTailsError(f"line {lineno}: malformed header")
            continue
        fields = line.split(",")
        if len(fields) != len(header):
            raise LatticeTailsError(
                f"line {lineno}: expected {len(header)} fields, got {len(fields)}")
        rows.append([float(f) for f in fields])
    if kind is None or header is None:
        raise LatticeTailsError("missing kind line or header row")
    data = np.array(rows, dtype=float) if rows else np.zeros((0, len(header)))
    columns = {name: data[:, j].copy() for j, name in enumerate(header)}
    return SweepResult(kind=kind, columns=columns, metadata=metadata)
