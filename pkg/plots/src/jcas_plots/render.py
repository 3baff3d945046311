"""Render figure specs to PNG/SVG. All statistics arrive precomputed in
the CSVs; this module only bins, sorts and draws. Output is
deterministic: fixed style, no timestamps, fixed SVG hash salt."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .figspec import FigureSpec, group_records, load_inputs

matplotlib.rcParams["svg.hashsalt"] = "jcas-plots"

FIGSIZE = (7.0, 4.5)
DPI = 120


def ecdf(values):
    """(x, F) of the empirical CDF; F steps from 1/n to 1."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        return x, np.array([])
    return x, np.arange(1, x.size + 1) / x.size


def _label(keys, group):
    return ", ".join(f"{k}={v}" for k, v in zip(keys, group))


def _save(fig, path):
    metadata = {"Date": None} if str(path).lower().endswith(".svg") else None
    fig.savefig(path, dpi=DPI, metadata=metadata)
    plt.close(fig)


def plot_rate_cdf(spec: FigureSpec) -> str:
    """Empirical rate CDF per group; one curve per grouping key tuple."""
    records = load_inputs(spec)
    groups = group_records(records, spec.group_by)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for group, recs in groups.items():
        x, f = ecdf([r["rate_bps_hz"] for r in recs])
        ax.step(x, f, where="post", label=_label(spec.group_by, group))
    ax.set_xlabel("rate [bit/s/Hz]")
    ax.set_ylabel("CDF")
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.4)
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, spec.output)
    return spec.output


def plot_detection(spec: FigureSpec) -> str:
    """P_D versus range with confidence bands, one curve per group."""
    records = load_inputs(spec)
    groups = group_records(records, spec.group_by)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for group, recs in groups.items():
        recs = sorted(recs, key=lambda r: float(r["range_m"]))
        ranges = np.array([float(r["range_m"]) for r in recs])
        pd_ = np.array([float(r["pd"]) for r in recs])
        low = np.array([float(r["ci_low"]) for r in recs])
        high = np.array([float(r["ci_high"]) for r in recs])
        (line,) = ax.plot(ranges, pd_, marker="o", label=_label(spec.group_by, group))
        ax.fill_between(ranges, low, high, alpha=0.2, color=line.get_color())
    ax.set_xlabel("target range [m]")
    ax.set_ylabel("detection probability")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.4)
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, spec.output)
    return spec.output


def render(spec: FigureSpec) -> str:
    if spec.family == "rate_cdf":
        return plot_rate_cdf(spec)
    return plot_detection(spec)
