"""
Learning-curve plots of metrics files.
"""
import os
from typing import List, Tuple
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.axes import Axes
from matplotlib.figure import Figure
import numpy as np
from qvpo.errors import MetricsParseError
from qvpo.output_writers import MetricsRow
from qvpo_analyzer.parse import load_metrics

# fraction of the data range added on each side of both axes
AXIS_PADDING = 0.05


def build_image_filename(metrics_path: str, directory: str = None) -> str:
    """ Names the SVG after the metrics file: ``run_metrics.csv`` becomes ``run_metrics.svg``. """
    filename = os.path.splitext(os.path.basename(metrics_path))[0] + ".svg"
    if directory:
        return os.path.join(directory, filename)
    return filename


def padded_range(low: float, high: float, padding: float = AXIS_PADDING) -> Tuple[float, float]:
    """ Widens ``[low, high]`` by ``padding`` of its span on each side. A zero-width range
    is widened by ``padding`` of its magnitude (or by ``padding`` if it sits at 0). """
    span = high - low
    if span <= 0:
        span = abs(low) if low != 0 else 1.0
    return low - padding * span, high + padding * span


def create_learning_curve_figure(rows: List[MetricsRow], title: str = None) -> Tuple[Figure, Axes]:
    """
    Plots mean evaluation return against step with a shaded band of one
    standard deviation. Axis limits are the data extremes (band included)
    padded by 5%.
    """
    if not rows:
        raise MetricsParseError("Line 2: the metrics file has no data rows")
    steps = np.array([row.step for row in rows], dtype=np.float64)
    means = np.array([row.eval_return_mean for row in rows])
    stds = np.array([row.eval_return_std for row in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, means, color="tab:blue", linewidth=1.5)
    ax.fill_between(steps, means - stds, means + stds, color="tab:blue", alpha=0.25, linewidth=0)
    ax.set_xlim(*padded_range(steps.min(), steps.max()))
    ax.set_ylim(*padded_range((means - stds).min(), (means + stds).max()))
    ax.set_xlabel("environment step")
    ax.set_ylabel("evaluation return")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return fig, ax


def plot_metrics(metrics_path: str, outfile: str = None) -> str:
    """
    Renders the learning curve of a metrics file as a standalone SVG.

    Returns:
        str: The path of the SVG.
    """
    rows = load_metrics(metrics_path)
    outfile = build_image_filename(metrics_path, os.path.dirname(metrics_path)) if outfile is None else outfile
    fig, _ = create_learning_curve_figure(rows, title=os.path.basename(metrics_path))
    fig.savefig(outfile, format="svg")
    plt.close(fig)
    return outfile
