"""Figure generation for dsac-h runs, consuming only its documented CSVs."""

__version__ = "0.1.0"

from .data import load_csv_columns, density_histogram
from .figures import plot_curves, plot_histograms, plot_joint

__all__ = [
    "load_csv_columns",
    "density_histogram",
    "plot_curves",
    "plot_histograms",
    "plot_joint",
]
