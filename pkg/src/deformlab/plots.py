"""Deterministic SVG line charts for experiment manifests.

Charts are assembled directly as SVG text so that a fixed manifest always
produces byte-identical files: fixed palette, fixed layout, fixed number
formatting, no timestamps.  Each chart draws per-series mean lines with a
shaded +/- band, and smoothness charts add a dotted horizontal reference
line at the measured random-init level.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .harness import load_manifest, read_profile_csv

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
)

_W, _H = 720, 460
_ML, _MR, _MT, _MB = 70, 170, 42, 62


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _nice_ticks(lo: float, hi: float, target=5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / target
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = np.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return ticks


class _Scale:
    def __init__(self, lo, hi, out_lo, out_hi):
        self.lo, self.hi = lo, hi
        self.out_lo, self.out_hi = out_lo, out_hi

    def __call__(self, v):
        frac = (v - self.lo) / (self.hi - self.lo)
        return self.out_lo + frac * (self.out_hi - self.out_lo)


def render_line_chart(series, title, xlabel, ylabel, x_ticklabels=None, baseline=None):
    """Series: list of {label, x, mean, band, color}; returns SVG text."""
    xs = np.concatenate([np.asarray(s["x"], float) for s in series])
    tops = np.concatenate(
        [np.asarray(s["mean"], float) + np.asarray(s["band"], float) for s in series]
    )
    lows = np.concatenate(
        [np.asarray(s["mean"], float) - np.asarray(s["band"], float) for s in series]
    )
    y_hi = float(tops.max())
    y_lo = min(0.0, float(lows.min()))
    if baseline is not None:
        y_hi = max(y_hi, baseline)
    y_hi += 0.06 * (y_hi - y_lo or 1.0)
    x_lo, x_hi = float(xs.min()), float(xs.max())
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5

    sx = _Scale(x_lo, x_hi, _ML, _W - _MR)
    sy = _Scale(y_lo, y_hi, _H - _MB, _MT)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_W} {_H}" '
        f'font-family="DejaVu Sans, sans-serif">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_ML}" y="24" font-size="15" font-weight="bold">{title}</text>',
    ]

    for t in _nice_ticks(y_lo, y_hi):
        y = sy(t)
        out.append(
            f'<line x1="{_ML}" y1="{_fmt(y)}" x2="{_W - _MR}" y2="{_fmt(y)}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_ML - 8}" y="{_fmt(y + 4)}" font-size="11" '
            f'text-anchor="end">{_fmt(t)}</text>'
        )
    if x_ticklabels is not None:
        tick_pos = sorted({float(v) for v in xs})
        if not isinstance(x_ticklabels, dict):  # sequence: label ticks in order
            x_ticklabels = dict(zip(tick_pos, x_ticklabels))
        for pos in tick_pos:
            label = x_ticklabels.get(pos, _fmt(pos))
            x = sx(pos)
            out.append(
                f'<text x="{_fmt(x)}" y="{_H - _MB + 16}" font-size="10" '
                f'text-anchor="end" transform="rotate(-40 {_fmt(x)} {_H - _MB + 16})">'
                f"{label}</text>"
            )
    else:
        for t in _nice_ticks(x_lo, x_hi):
            x = sx(t)
            out.append(
                f'<text x="{_fmt(x)}" y="{_H - _MB + 18}" font-size="11" '
                f'text-anchor="middle">{_fmt(t)}</text>'
            )

    # axes
    out.append(
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>'
    )
    out.append(
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>'
    )
    out.append(
        f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 12}" font-size="13" '
        f'text-anchor="middle">{xlabel}</text>'
    )
    out.append(
        f'<text x="18" y="{(_MT + _H - _MB) / 2}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 18 {(_MT + _H - _MB) / 2})">{ylabel}</text>'
    )

    if baseline is not None:
        y = sy(baseline)
        out.append(
            f'<line x1="{_ML}" y1="{_fmt(y)}" x2="{_W - _MR}" y2="{_fmt(y)}" '
            f'stroke="black" stroke-width="1.5" stroke-dasharray="2 4"/>'
        )
        out.append(
            f'<text x="{_W - _MR + 6}" y="{_fmt(y + 4)}" font-size="11">'
            f"init level {_fmt(baseline)}</text>"
        )

    legend_y = _MT + 10
    for s in series:
        x = np.asarray(s["x"], float)
        mean = np.asarray(s["mean"], float)
        band = np.asarray(s["band"], float)
        color = s["color"]
        if band.any():
            upper = [f"{_fmt(sx(xv))},{_fmt(sy(yv))}" for xv, yv in zip(x, mean + band)]
            lower = [
                f"{_fmt(sx(xv))},{_fmt(sy(yv))}"
                for xv, yv in zip(x[::-1], (mean - band)[::-1])
            ]
            out.append(
                f'<polygon points="{" ".join(upper + lower)}" fill="{color}" '
                f'fill-opacity="0.16" stroke="none"/>'
            )
        pts = " ".join(f"{_fmt(sx(xv))},{_fmt(sy(yv))}" for xv, yv in zip(x, mean))
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<line x1="{_W - _MR + 6}" y1="{legend_y}" x2="{_W - _MR + 26}" '
            f'y2="{legend_y}" stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{_W - _MR + 32}" y="{legend_y + 4}" font-size="12">{s["label"]}</text>'
        )
        legend_y += 18

    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---- manifest-driven assembly ---------------------------------------------


def _group_rows(manifest, group):
    """(labels, means, bands) for a group, from aggregate or lone seed file."""
    entry = manifest["results"][group]
    rows = entry.get("aggregate_rows")
    if rows:
        labels = [r["layer_label"] for r in rows]
        means = np.array([r["mean"] for r in rows])
        bands = np.array([r["band"] for r in rows])
        return labels, means, bands
    base = Path(manifest["manifest_path"]).parent
    only = sorted(entry["per_seed"].values())[0]
    labels, values = read_profile_csv(base / only)
    return labels, values, np.zeros_like(values)


def _series_for(manifest, groups, strip=""):
    series = []
    for i, group in enumerate(groups):
        labels, means, bands = _group_rows(manifest, group)
        name = group[: -len(strip)] if strip and group.endswith(strip) else group
        series.append(
            {
                "label": name,
                "x": list(range(len(labels))),
                "mean": means,
                "band": bands,
                "color": PALETTE[i % len(PALETTE)],
                "layer_labels": labels,
            }
        )
    return series


def _layer_chart(manifest, groups, title, ylabel, strip="", baseline=None):
    series = _series_for(manifest, groups, strip)
    ticks = {float(i): lab for i, lab in enumerate(series[0]["layer_labels"])}
    return render_line_chart(series, title, "layer", ylabel, x_ticklabels=ticks,
                             baseline=baseline)


def emit_plots(manifest, outdir=None):
    """Writes the charts for a manifest (dict or path); returns written paths."""
    if not isinstance(manifest, dict):
        manifest = load_manifest(manifest)
    base = Path(manifest["manifest_path"]).parent
    outdir = Path(outdir) if outdir else base
    outdir.mkdir(parents=True, exist_ok=True)
    kind = manifest["config"]["kind"]
    groups = sorted(manifest["results"])
    baseline = manifest.get("extras", {}).get("baseline_ntv", {}).get("mean")

    charts = {}
    sens_groups = [g for g in groups if "ntv" not in g]
    ntv_init = [g for g in groups if g.endswith("ntv-init")]
    ntv_trained = [g for g in groups if g.endswith("ntv-trained")]

    if kind == "init-sensitivity":
        charts["sensitivity.svg"] = _layer_chart(
            manifest, sens_groups, "Deformation sensitivity at initialization",
            "normalized distance")
    elif kind == "smooth-init-sweep":
        charts["sensitivity.svg"] = _layer_chart(
            manifest, sens_groups, "Sensitivity with smoothed random filters",
            "normalized distance")
    elif kind in ("train-then-probe", "random-labels"):
        init_groups = [g for g in sens_groups if g.endswith("-init") or g == "init"]
        trained_groups = [g for g in sens_groups if g.endswith("-trained")]
        if init_groups:
            charts["sensitivity-init.svg"] = _layer_chart(
                manifest, init_groups, "Sensitivity at initialization",
                "normalized distance", strip="-init")
        if trained_groups:
            charts["sensitivity-trained.svg"] = _layer_chart(
                manifest, trained_groups, "Sensitivity after training",
                "normalized distance", strip="-trained")
        if ntv_trained:
            charts["smoothness.svg"] = _layer_chart(
                manifest, ntv_trained, "Filter smoothness after training",
                "normalized total variation", strip="-ntv-trained", baseline=baseline)
    elif kind == "synthetic-sweep":
        if ntv_trained:
            charts["smoothness.svg"] = _layer_chart(
                manifest, ntv_trained, "Filter smoothness after training",
                "normalized total variation", strip="-ntv-trained", baseline=baseline)
            # first-layer smoothness against task strength
            pts = []
            for g in ntv_trained:
                labels, means, bands = _group_rows(manifest, g)
                c = float(g.split("-")[0][1:])
                pts.append((c, means[0], bands[0]))
            pts.sort()
            series = [{
                "label": "first conv layer",
                "x": [p[0] for p in pts],
                "mean": np.array([p[1] for p in pts]),
                "band": np.array([p[2] for p in pts]),
                "color": PALETTE[0],
            }]
            charts["first-layer-ntv.svg"] = render_line_chart(
                series, "First-layer smoothness vs task strength",
                "deformation strength C", "normalized total variation",
                baseline=baseline)
        trained_groups = [g for g in sens_groups if g.endswith("-trained")]
        if trained_groups:
            charts["sensitivity-trained.svg"] = _layer_chart(
                manifest, trained_groups, "Sensitivity after training",
                "normalized distance", strip="-trained")
    if not charts and ntv_init:
        charts["smoothness-init.svg"] = _layer_chart(
            manifest, ntv_init, "Filter smoothness at initialization",
            "normalized total variation", strip="-ntv-init", baseline=baseline)

    written = []
    for name, svg in charts.items():
        path = outdir / name
        with open(path, "w", newline="\n") as fh:
            fh.write(svg)
        written.append(path)
    return written
