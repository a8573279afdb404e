"""
Summaries across several runs of the same configuration (one metrics file
per seed): the median final performance and the median number of covered
bandit peaks.
"""
import math
from typing import Dict, List, Optional
import numpy as np
from more_itertools import tail
from qvpo.output_writers import MetricsRow
from qvpo_analyzer.parse import load_metrics, final_coverage


def final_window_return(rows: List[MetricsRow], fraction: float = 0.1) -> float:
    """ Mean evaluation return over the last ``fraction`` of the rows (at least one row). """
    assert rows, "a run without metrics rows has no final return"
    window = max(1, int(math.ceil(fraction * len(rows))))
    return float(np.mean([row.eval_return_mean for row in tail(window, rows)]))


def covered_peaks(rows: List[MetricsRow], threshold: float = 0.1) -> Optional[int]:
    """ How many peaks hold at least ``threshold`` of the sampled mass in the last row. """
    coverage = final_coverage(rows)
    if coverage is None:
        return None
    return sum(1 for c in coverage if c >= threshold)


def summarize(runs: Dict[str, List[MetricsRow]], fraction: float = 0.1, threshold: float = 0.1) -> Dict[str, Optional[float]]:
    """
    Takes the rows of several runs and returns:
      - ``median_final_return``: median over runs of :func:`final_window_return`
      - ``median_covered_peaks``: median over runs of :func:`covered_peaks` (``None`` without coverage)
      - ``runs``: the number of runs
    """
    finals = [final_window_return(rows, fraction) for rows in runs.values()]
    peaks = [covered_peaks(rows, threshold) for rows in runs.values()]
    peaks = [p for p in peaks if p is not None]
    return {
        "runs": len(runs),
        "median_final_return": float(np.median(finals)) if finals else None,
        "median_covered_peaks": float(np.median(peaks)) if peaks else None,
    }


def load_runs(paths: List[str]) -> Dict[str, List[MetricsRow]]:
    """ Reads several metrics files, keyed by path. Files without data rows are left out. """
    runs = {}
    for path in paths:
        rows = load_metrics(path)
        if rows:
            runs[path] = rows
    return runs
