"""SVG line plots for run reports. Output is byte-stable for identical reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed element ids and no creation date keep the SVG text reproducible
_RC = {"svg.hashsalt": "dbarlab", "svg.fonttype": "none"}


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def _line(path: Path, x, ys: dict, xlabel: str, ylabel: str, logy: bool = False) -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for label, y in ys.items():
            ax.plot(x, y, marker="o", label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if logy:
            ax.set_yscale("log")
        if len(ys) > 1:
            ax.legend()
        fig.tight_layout()
        _save(fig, path)


def write_plots(report, out: Path) -> list[Path]:
    """Eigenvalue ladder, tail mass against R, and inf mu against radius, where present."""
    written = []
    t = report.tables
    if "eigenvalues" in t:
        rows = t["eigenvalues"][1:]
        p = out / "eigenvalues.svg"
        _line(p, [r[0] for r in rows], {"lambda_k": [r[1] for r in rows]}, "k", "lambda_k")
        written.append(p)
    if "tail" in t:
        rows = t["tail"][1:]
        p = out / "tail.svg"
        tails = [max(r[1], 1e-300) for r in rows]
        bounds = [r[2] for r in rows]
        _line(p, [r[0] for r in rows], {"tail mass": tails, "bound": bounds}, "R", "mass", logy=True)
        written.append(p)
    if "condition" in t:
        rows = t["condition"][1:]
        series = {}
        for cond, r, m, _ in rows:
            series.setdefault(cond, ([], []))
            series[cond][0].append(r)
            series[cond][1].append(m)
        p = out / "inf_mu.svg"
        first = next(iter(series.values()))
        _line(p, first[0], {k: v[1] for k, v in series.items()}, "radius", "inf mu")
        written.append(p)
    return written
