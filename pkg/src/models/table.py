import json
from pathlib import Path
from typing import IO, Literal, Optional

import numpy as np

from models.errors import MalformedPath
from models.pattern import Orientation
from models.state import SamplePoint

Format = Literal["ndjson", "csv"]
FORMATS: tuple[str, ...] = ("ndjson", "csv")
CSV_HEADER = "k,t,y,o,d"


def _num(x: float) -> str:
    # 17 significant digits round-trip every double
    return format(x, ".17g")


def format_record(point: SamplePoint, fmt: Format) -> str:
    o = point.orientation.symbol
    if fmt == "csv":
        return f"{point.k},{_num(point.t)},{point.y},{o},{_num(point.duration)}"
    return f'{{"k":{point.k},"t":{_num(point.t)},"y":{point.y},"o":"{o}","d":{_num(point.duration)}}}'


class SampleTable:
    """Emitted crossings (k, t, y, o, d), one row per level-0 crossing."""

    # column indices
    K = 0
    T = 1
    Y = 2
    O = 3
    D = 4

    def __init__(self) -> None:
        self.rows: list[tuple[int, float, int, int, float]] = []

    def __len__(self) -> int:
        return len(self.rows)

    def clear(self) -> None:
        self.rows = []

    def append_row(self, k: int, t: float, y: int, o: int, d: float) -> None:
        self.rows.append((k, t, y, o, d))

    def append_point(self, point: SamplePoint) -> None:
        self.append_row(point.k, point.t, point.y, point.orientation.value, point.duration)

    def column(self, col: int) -> np.ndarray:
        return np.array([row[col] for row in self.rows])

    def path(self) -> tuple[np.ndarray, np.ndarray]:
        """(times, levels) with the origin (t0, y0) prepended, ready for crossing-tree extraction."""
        if not self.rows:
            return np.zeros(1), np.zeros(1, dtype=np.int64)
        t = self.column(self.T).astype(float)
        y = self.column(self.Y).astype(np.int64)
        d = self.column(self.D).astype(float)
        o = self.column(self.O).astype(np.int64)
        t0 = t[0] - d[0]
        y0 = y[0] - o[0]
        return np.concatenate([[t0], t]), np.concatenate([[y0], y])

    def import_records(self, path: Path, fmt: Optional[Format] = None) -> None:
        self.clear()
        if not path.exists():
            raise FileNotFoundError(f"record file not found: {path}")
        fmt = fmt or ("csv" if path.suffix == ".csv" else "ndjson")
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()

        for number, line in enumerate(lines, start=1):
            line = line.strip()
            if not line or line == CSV_HEADER:
                continue
            try:
                if fmt == "csv":
                    k, t, y, o, d = line.split(",")
                else:
                    record = json.loads(line)
                    k, t, y, o, d = record["k"], record["t"], record["y"], record["o"], record["d"]
                self.append_row(int(k), float(t), int(y), Orientation.from_symbol(str(o)).value, float(d))
            except (ValueError, KeyError, TypeError) as e:
                raise MalformedPath(f"{path}:{number}: bad record: {e}") from e


class RecordWriter:
    """Streams records to a text sink as they are produced."""

    def __init__(self, stream: IO[str], fmt: Format = "ndjson", header: bool = True) -> None:
        if fmt not in FORMATS:
            raise ValueError(f"unknown record format: {fmt}")
        self.stream = stream
        self.fmt = fmt
        if fmt == "csv" and header:
            stream.write(CSV_HEADER + "\n")

    def __call__(self, point: SamplePoint) -> None:
        self.stream.write(format_record(point, self.fmt) + "\n")
