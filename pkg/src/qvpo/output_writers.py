import csv
from typing import IO, NamedTuple, Optional

# Column order of the metrics file
FIELDNAMES = ["step", "episodes", "eval_return_mean", "eval_return_std",
              "policy_loss", "critic_loss", "mean_positive_weight", "zero_weight_fraction",
              "coverage_peak1", "coverage_peak2", "coverage_peak3"]


class MetricsRow(NamedTuple):
    step: int
    episodes: int
    eval_return_mean: float
    eval_return_std: float
    policy_loss: Optional[float] = None
    critic_loss: Optional[float] = None
    mean_positive_weight: Optional[float] = None
    zero_weight_fraction: Optional[float] = None
    # bandit runs only
    coverage_peak1: Optional[float] = None
    coverage_peak2: Optional[float] = None
    coverage_peak3: Optional[float] = None


def format_value(value) -> str:
    """ Integers as written, reals with 9 significant digits, missing values as empty cells. """
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return "{:.9g}".format(value)


class CSVWriter:
    """
    Write metrics rows to a CSV file as training goes. Every row is flushed
    as soon as it is written, so a run that aborts leaves all completed rows
    on disk.
    """
    def __init__(self, outfile: str):
        """
        Args:
            outfile (string): The file to write output to. It is truncated on open.
        """
        self.outfile = outfile
        self._handle = None  # type: Optional[IO[str]]
        self._writer = None

    def __enter__(self) -> 'CSVWriter':
        self.open()
        return self

    def __exit__(self, *exc):
        self.close()

    def open(self):
        self._handle = open(self.outfile, "w", newline="")
        self._writer = csv.writer(self._handle, lineterminator="\n")
        self._writer.writerow(FIELDNAMES)
        self._handle.flush()

    def write_row(self, row: MetricsRow):
        assert self._writer is not None, "CSVWriter.open() was not called"
        self._writer.writerow([format_value(v) for v in row])
        self._handle.flush()

    def close(self):
        if self._handle is not None:
            self._handle.close()
            self._handle = None
            self._writer = None
