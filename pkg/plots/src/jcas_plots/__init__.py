"""Batch figure rendering for jcas campaign CSVs."""

__version__ = "0.1.0"

from .figspec import FigureSpec, SchemaError, load_spec, read_table
from .render import ecdf, plot_detection, plot_rate_cdf, render
