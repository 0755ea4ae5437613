"""Figure rendering: ASN-versus-margin curves and cumulative auditability.

Output is SVG by default (diffable in CI); styling is pinned and the SVG
hash salt fixed so re-renders are byte-identical under one matplotlib
version.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .asn_csv import read_asn_csv  # noqa: E402

_STYLE = {
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 100,
    "svg.hashsalt": "stvaudit-plots",
    "axes.grid": True,
    "grid.alpha": 0.3,
}

_SERIES_STYLES = ("o-", "s--", "^-.", "d:")


def _save(fig, out_path):
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format=out.suffix.lstrip(".") or "svg", metadata={"Date": None})
    plt.close(fig)
    return out


def render_asn_curve(csv_path, out_path) -> Path:
    """Log-scale ASN against the auditable margin, one curve per profile size."""
    table = read_asn_csv(csv_path)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for style, population in zip(_SERIES_STYLES, table.populations()):
            series = table.series(population)
            if not series:
                continue
            ax.plot(
                [r.lam for r in series],
                [r.n for r in series],
                style,
                markersize=4,
                label=f"N = {population:,}",
            )
        ax.set_yscale("log")
        ax.set_xlabel("least auditable margin (votes)")
        ax.set_ylabel("average sampling number (ballots)")
        ax.set_title("Sample size needed for a 90%-success audit")
        ax.legend()
        return _save(fig, out_path)


def render_cumulative(csv_path, out_path) -> Path:
    """Step plot: how many profiles are auditable at or below a sample size."""
    table = read_asn_csv(csv_path)
    sizes = table.auditable_sizes()
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        if sizes:
            xs = [0] + sizes
            ys = list(range(len(sizes) + 1))
            ax.step(xs, ys, where="post")
        else:
            ax.axhline(0.0)
        ax.set_xlabel("average sampling number (ballots)")
        ax.set_ylabel("profiles auditable at or below")
        ax.set_ylim(bottom=0)
        ax.set_title(f"Cumulative auditability across {len(table.rows)} profiles")
        return _save(fig, out_path)
