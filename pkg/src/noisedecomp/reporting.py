"""Metric CSV emission, seed aggregation, and minimal SVG line plots.

CSV is the only metric format. Numbers are written with repr so equal configs
and seeds reproduce byte-identical files. Plots are self-contained SVG
assembled by hand; they parse with any standard XML reader.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from .errors import DataError

GROUP_COLUMNS = ("iteration", "distortion")
IDENTITY_COLUMNS = ("seed",)


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = [row for row in reader if row]
    return header, rows


def _numeric_columns(header, rows):
    numeric = set()
    for j, _ in enumerate(header):
        try:
            for row in rows:
                float(row[j])
        except (ValueError, IndexError):
            continue
        numeric.add(j)
    return numeric


def aggregate(csv_paths):
    """Combine per-seed metric files into mean/std rows.

    Files must share a header. Rows are grouped by the grouping columns that
    are present (iteration, distortion); every other numeric column except
    seed is summarized as sample mean and sample std (0 for a single value).
    Returns (header, rows).
    """
    if not csv_paths:
        raise DataError("no metric files to aggregate")
    header = None
    rows = []
    for path in csv_paths:
        file_header, file_rows = read_csv(path)
        if header is None:
            header = file_header
        elif file_header != header:
            raise DataError(f"{path} header differs from the first file")
        rows.extend(file_rows)
    if not rows:
        raise DataError("metric files contain no rows")

    numeric = _numeric_columns(header, rows)
    group_idx = [j for j, name in enumerate(header) if name in GROUP_COLUMNS]
    value_idx = [
        j
        for j, name in enumerate(header)
        if j in numeric and name not in GROUP_COLUMNS and name not in IDENTITY_COLUMNS
    ]
    if not value_idx:
        raise DataError("no numeric metric columns to aggregate")

    groups = {}
    order = []
    for row in rows:
        key = tuple(row[j] for j in group_idx)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)

    out_header = [header[j] for j in group_idx]
    for j in value_idx:
        out_header.extend([f"{header[j]}_mean", f"{header[j]}_std"])
    out_rows = []
    for key in order:
        members = groups[key]
        out = list(key)
        for j in value_idx:
            vals = np.array([float(r[j]) for r in members])
            out.append(float(vals.mean()))
            out.append(float(vals.std(ddof=1)) if len(vals) > 1 else 0.0)
        out_rows.append(out)
    return out_header, out_rows


def _scale(values, lo, hi, out_lo, out_hi):
    if hi <= lo:
        return np.full(len(values), 0.5 * (out_lo + out_hi))
    return out_lo + (np.asarray(values) - lo) / (hi - lo) * (out_hi - out_lo)


def line_plot_svg(path, x, series, title="", x_label="", y_label="") -> None:
    """Write a simple line plot; series maps a name to a y-array over x."""
    width, height = 640, 400
    left, right, top, bottom = 60, 620, 40, 360
    xs = np.asarray(x, dtype=np.float64)
    all_y = np.concatenate([np.asarray(v, dtype=np.float64) for v in series.values()])
    finite = all_y[np.isfinite(all_y)]
    y_lo = float(finite.min()) if finite.size else 0.0
    y_hi = float(finite.max()) if finite.size else 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    x_lo, x_hi = float(xs.min()), float(xs.max())

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>',
    ]
    if title:
        parts.append(
            f'<text x="{(left + right) // 2}" y="24" text-anchor="middle" '
            f'font-size="16">{title}</text>'
        )
    if x_label:
        parts.append(
            f'<text x="{(left + right) // 2}" y="{height - 8}" text-anchor="middle" '
            f'font-size="12">{x_label}</text>'
        )
    if y_label:
        parts.append(
            f'<text x="16" y="{(top + bottom) // 2}" text-anchor="middle" '
            f'font-size="12" transform="rotate(-90 16 {(top + bottom) // 2})">{y_label}</text>'
        )
    for tick, value in ((left, x_lo), (right, x_hi)):
        parts.append(
            f'<text x="{tick}" y="{bottom + 16}" text-anchor="middle" font-size="11">'
            f"{value:g}</text>"
        )
    for tick, value in ((bottom, y_lo), (top, y_hi)):
        parts.append(
            f'<text x="{left - 6}" y="{tick + 4}" text-anchor="end" font-size="11">'
            f"{value:g}</text>"
        )
    for idx, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=np.float64)
        keep = np.isfinite(ys)
        if not keep.any():
            continue
        px = _scale(xs[keep], x_lo, x_hi, left, right)
        py = _scale(ys[keep], y_lo, y_hi, bottom, top)
        points = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        color = colors[idx % len(colors)]
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{right - 8}" y="{top + 16 + 14 * idx}" text-anchor="end" '
            f'font-size="12" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def write_report(run_dir, out_dir=None):
    """Aggregate every metric CSV directly inside run_dir; emit summary + plot.

    Returns the list of files written.
    """
    if not os.path.isdir(run_dir):
        raise DataError(f"{run_dir} is not a directory")
    paths = sorted(
        os.path.join(run_dir, name)
        for name in os.listdir(run_dir)
        if name.endswith(".csv") and name != "summary.csv"
    )
    if not paths:
        raise DataError(f"no metric CSV files in {run_dir}")
    header, rows = aggregate(paths)
    out_dir = out_dir or run_dir
    os.makedirs(out_dir, exist_ok=True)
    summary_path = os.path.join(out_dir, "summary.csv")
    write_csv(summary_path, header, rows)
    written = [summary_path]

    if "iteration" in header and len(rows) > 1:
        xs = [float(r[header.index("iteration")]) for r in rows]
        series = {}
        for j, name in enumerate(header):
            if name.endswith("_mean"):
                series[name[: -len("_mean")]] = [float(r[j]) for r in rows]
        if series:
            if "eval_return" in series:
                chosen = {"eval_return": series["eval_return"]}
            else:
                chosen = dict(list(series.items())[:1])
            plot_path = os.path.join(out_dir, "plot.svg")
            line_plot_svg(
                plot_path, xs, chosen, title="training metrics", x_label="iteration"
            )
            written.append(plot_path)
    return written
