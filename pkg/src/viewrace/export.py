"""CSV and gnuplot-script writers shared by the command-line tools."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write rows with round-trip float formatting, so equal runs give equal bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def trajectory_header(n: int) -> list[str]:
    return (["t"] + [f"x_{i}" for i in range(1, n + 1)] + ["x_agg"]
            + [f"u_{i}" for i in range(1, n + 1)])


VALUE_HEADER = ["x", "V", "DV", "piece_index", "K", "a", "b", "c"]
SURFACE_HEADER = ["t", "x", "V", "piece_index"]
EQUILIBRIUM_HEADER = ["player", "threshold", "switch_time", "epsilon_contribution"]
MC_SUMMARY_HEADER = ["M", "mean_sup_error", "std"]


def gnuplot_script(csv_name: str, columns: Sequence[str], *, title: str, xlabel: str,
                   ylabel: str, output: str) -> str:
    """Self-contained gnuplot script drawing every column after the first against it."""
    lines = [
        f"# plots {csv_name}",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
        f"set output '{output}'",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "set grid",
    ]
    plots = [f"'{csv_name}' using 1:{k} with lines lw 2" for k in range(2, len(columns) + 1)]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
