"""Metrics CSV parsing and deterministic SVG line charts.

Charts are written as plain SVG text with a fixed viewport and no timestamps
or generated ids, so identical inputs produce identical bytes and the files
diff cleanly.
"""

import numpy as np

from .train import METRICS_HEADER

__all__ = ["MetricsParseError", "parse_metrics", "render_metrics_svg"]

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")

_W, _H = 960, 400
_PANELS = ((70.0, 450.0), (560.0, 940.0))  # x ranges of the two panels
_TOP, _BOT = 60.0, 350.0


class MetricsParseError(ValueError):
    """Malformed metrics CSV; carries the 1-based offending line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


def parse_metrics(path):
    """Read a metrics CSV into a dict of float arrays keyed by column."""
    cols = METRICS_HEADER.split(",")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != METRICS_HEADER:
        raise MetricsParseError(path, 1, f"expected header {METRICS_HEADER!r}")
    data = {c: [] for c in cols}
    for i, ln in enumerate(lines[1:], start=2):
        if not ln:
            continue
        parts = ln.split(",")
        if len(parts) != len(cols):
            raise MetricsParseError(path, i, f"expected {len(cols)} fields, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError as err:
            raise MetricsParseError(path, i, str(err)) from None
        for c, v in zip(cols, vals):
            data[c].append(v)
    return {c: np.asarray(v) for c, v in data.items()}


def _fmt(v):
    return f"{v:.2f}"


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def _panel_svg(out, x0, x1, title, series):
    """One panel: frame, ticks, and a polyline per series.

    series is a list of (label, xs, ys, color, dash); empty xs draw nothing.
    """
    out.append(f'<rect x="{x0}" y="{_TOP}" width="{x1 - x0}" height="{_BOT - _TOP}" '
               'fill="none" stroke="#333" stroke-width="1"/>')
    out.append(f'<text x="{(x0 + x1) / 2}" y="{_TOP - 10}" text-anchor="middle" '
               f'font-size="15" fill="#111">{title}</text>')
    nonempty = [s for s in series if len(s[1]) > 0]
    if not nonempty:
        return
    all_x = np.concatenate([s[1] for s in nonempty])
    all_y = np.concatenate([s[2] for s in nonempty])
    xlo, xhi = float(all_x.min()), float(all_x.max())
    ylo, yhi = float(all_y.min()), float(all_y.max())
    if xhi <= xlo:
        xhi = xlo + 1.0
    if yhi <= ylo:
        yhi = ylo + 1.0
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad

    def sx(v):
        return x0 + (v - xlo) / (xhi - xlo) * (x1 - x0)

    def sy(v):
        return _BOT - (v - ylo) / (yhi - ylo) * (_BOT - _TOP)

    for tx in _ticks(xlo, xhi):
        out.append(f'<line x1="{_fmt(sx(tx))}" y1="{_BOT}" x2="{_fmt(sx(tx))}" '
                   f'y2="{_BOT + 5}" stroke="#333"/>')
        out.append(f'<text x="{_fmt(sx(tx))}" y="{_BOT + 20}" text-anchor="middle" '
                   f'font-size="11" fill="#333">{tx:.4g}</text>')
    for ty in _ticks(ylo, yhi):
        out.append(f'<line x1="{x0 - 5}" y1="{_fmt(sy(ty))}" x2="{x0}" '
                   f'y2="{_fmt(sy(ty))}" stroke="#333"/>')
        out.append(f'<text x="{x0 - 8}" y="{_fmt(sy(ty))}" text-anchor="end" '
                   f'font-size="11" fill="#333">{ty:.4g}</text>')
    for label, xs, ys, color, dash in series:
        if len(xs) == 0:
            continue
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(xs, ys))
        dash_attr = ' stroke-dasharray="6,4"' if dash else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"{dash_attr}/>')


def render_metrics_svg(runs, out_path):
    """Two-panel chart (squared error, penalty norms) for one or more runs.

    runs is a list of (label, metrics-dict). In the norms panel the l1 series
    is solid and the tv series dashed; colors distinguish runs and the legend
    lists every run label.
    """
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_W} {_H}" '
        f'width="{_W}" height="{_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="#ffffff"/>',
    ]
    mse_series, norm_series = [], []
    for i, (label, m) in enumerate(runs):
        color = _PALETTE[i % len(_PALETTE)]
        mse_series.append((label, m["iter"], m["mse"], color, False))
        norm_series.append((label, m["iter"], m["avg_l1"], color, False))
        norm_series.append((label, m["iter"], m["avg_tv"], color, True))
    _panel_svg(out, *_PANELS[0], "mean squared error", mse_series)
    _panel_svg(out, *_PANELS[1], "avg l1 (solid) / avg tv (dashed)", norm_series)
    for i, (label, _) in enumerate(runs):
        color = _PALETTE[i % len(_PALETTE)]
        x = 70 + 220 * i
        out.append(f'<line x1="{x}" y1="20" x2="{x + 24}" y2="20" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x + 30}" y="24" font-size="13" fill="#111">{label}</text>')
    out.append("</svg>")
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
