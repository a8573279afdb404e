import csv
from typing import IO, Iterator, List, Optional
from more_itertools import peekable
from qvpo.errors import MetricsParseError
from qvpo.output_writers import FIELDNAMES, MetricsRow

# columns that may be left empty
OPTIONAL_FIELDS = set(FIELDNAMES[4:])


def _parse_cell(name: str, cell: str, lineno: int):
    if cell == "":
        if name in OPTIONAL_FIELDS:
            return None
        raise MetricsParseError("Line {}: column '{}' is empty".format(lineno, name))
    try:
        if name in ("step", "episodes"):
            return int(cell)
        return float(cell)
    except ValueError:
        raise MetricsParseError("Line {}: column '{}' holds '{}', which is not a number".format(lineno, name, cell))


def parse_metrics(lines: Iterator[List[str]]) -> Iterator[MetricsRow]:
    """
    Takes rows of the CSV written by :class:`qvpo.output_writers.CSVWriter`
    (header included) and yields one :class:`qvpo.output_writers.MetricsRow`
    per data row. Line numbers in error messages count the header as line 1.
    """
    rows = peekable(lines)
    if not rows:
        raise MetricsParseError("Line 1: the metrics file is empty")
    header = next(rows)
    if header != FIELDNAMES:
        raise MetricsParseError("Line 1: unexpected header {}".format(",".join(header)))
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(FIELDNAMES):
            raise MetricsParseError("Line {}: expected {} columns, found {}".format(lineno, len(FIELDNAMES), len(row)))
        yield MetricsRow(*[_parse_cell(name, cell, lineno) for name, cell in zip(FIELDNAMES, row)])


def read_metrics(handle: IO[str]) -> List[MetricsRow]:
    """ Reads every row of an open metrics file. """
    return list(parse_metrics(csv.reader(handle)))


def load_metrics(path: str) -> List[MetricsRow]:
    """ Opens and reads a metrics file. """
    with open(path, newline="") as handle:
        return read_metrics(handle)


def final_coverage(rows: List[MetricsRow]) -> Optional[List[float]]:
    """ The per-peak coverage of the last row, or ``None`` for runs without coverage columns. """
    if not rows or rows[-1].coverage_peak1 is None:
        return None
    last = rows[-1]
    return [last.coverage_peak1, last.coverage_peak2, last.coverage_peak3]
