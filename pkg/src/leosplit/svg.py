"""Small deterministic SVG charts.

Every chart is a single self-contained file. Its data table is embedded as an
XML comment so figures diff cleanly in tests. Numbers are printed with fixed
precision, so the same inputs always produce the same bytes.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H = 640, 400
ML, MR, MT, MB = 70, 150, 40, 55
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _f(v: float) -> str:
    return f"{v:.2f}"


def _comment(rows) -> str:
    body = "\n".join(",".join(str(c) for c in r) for r in rows)
    # "--" is illegal inside XML comments
    return "<!-- data\n" + body.replace("--", "- -") + "\n-->"


def _nice_max(v: float) -> float:
    if not v > 0 or not math.isfinite(v):
        return 1.0
    mag = 10 ** math.floor(math.log10(v))
    for m in (1, 2, 2.5, 5, 10):
        if m * mag >= v:
            return m * mag
    return 10 * mag


def _frame(title: str, xlabel: str, ylabel: str, ymax: float, log_y: bool = False) -> list[str]:
    pw, ph = W - ML - MR, H - MT - MB
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.0f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<line x1="{ML}" y1="{MT + ph}" x2="{ML + pw}" y2="{MT + ph}" stroke="black"/>',
        f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{MT + ph}" stroke="black"/>',
        f'<text x="{ML + pw / 2:.0f}" y="{H - 12}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>',
        f'<text x="16" y="{MT + ph / 2:.0f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {MT + ph / 2:.0f})">{escape(ylabel)}</text>',
    ]
    for i in range(5):
        frac = i / 4
        y = MT + ph * (1 - frac)
        val = ymax * frac
        out.append(f'<line x1="{ML - 4}" y1="{_f(y)}" x2="{ML}" y2="{_f(y)}" stroke="black"/>')
        out.append(
            f'<text x="{ML - 6}" y="{_f(y + 4)}" text-anchor="end" font-family="sans-serif" font-size="10">{val:.4g}</text>'
        )
    return out


def _legend(names) -> list[str]:
    out = []
    for i, name in enumerate(names):
        y = MT + 10 + 18 * i
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<rect x="{W - MR + 12}" y="{y - 8}" width="10" height="10" fill="{color}"/>')
        out.append(
            f'<text x="{W - MR + 28}" y="{y + 1}" font-family="sans-serif" font-size="11">{escape(str(name))}</text>'
        )
    return out


def line_chart(x_labels, series: dict, title: str, xlabel: str, ylabel: str) -> str:
    """Categorical-x line chart; ``series`` maps a name to one y per x label."""
    x_labels = [str(x) for x in x_labels]
    finite = [v for ys in series.values() for v in ys if v is not None and math.isfinite(v)]
    ymax = _nice_max(max(finite, default=1.0))
    pw, ph = W - ML - MR, H - MT - MB
    n = len(x_labels)

    def px(i):
        return ML + (pw * (i + 0.5) / n if n else 0)

    def py(v):
        return MT + ph * (1 - v / ymax)

    out = _frame(title, xlabel, ylabel, ymax)
    for i, lab in enumerate(x_labels):
        out.append(
            f'<text x="{_f(px(i))}" y="{MT + ph + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{escape(lab)}</text>'
        )
    for si, (name, ys) in enumerate(series.items()):
        color = PALETTE[si % len(PALETTE)]
        pts = [(px(i), py(v)) for i, v in enumerate(ys) if v is not None and math.isfinite(v)]
        if len(pts) > 1:
            path = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            out.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="3" fill="{color}"/>')
    out += _legend(series)
    rows = [["x"] + list(series)] + [
        [lab] + [repr(series[s][i]) for s in series] for i, lab in enumerate(x_labels)
    ]
    out.append(_comment(rows))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bar_chart(labels, values, title: str, ylabel: str, xlabel: str = "") -> str:
    labels = [str(x) for x in labels]
    ymax = _nice_max(max((v for v in values if math.isfinite(v)), default=1.0))
    pw, ph = W - ML - MR, H - MT - MB
    n = max(len(labels), 1)
    slot = pw / n
    out = _frame(title, xlabel, ylabel, ymax)
    for i, (lab, v) in enumerate(zip(labels, values)):
        h = ph * (v / ymax) if math.isfinite(v) else 0.0
        x = ML + slot * i + slot * 0.15
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<rect x="{_f(x)}" y="{_f(MT + ph - h)}" width="{_f(slot * 0.7)}" height="{_f(h)}" fill="{color}"/>')
        out.append(
            f'<text x="{_f(x + slot * 0.35)}" y="{_f(MT + ph - h - 4)}" text-anchor="middle" font-family="sans-serif" font-size="10">{v:.3g}</text>'
        )
        out.append(
            f'<text x="{_f(x + slot * 0.35)}" y="{MT + ph + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{escape(lab)}</text>'
        )
    out.append(_comment([["label", "value"]] + [[lab, repr(v)] for lab, v in zip(labels, values)]))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def gantt(trace, title: str = "Pipeline schedule") -> str:
    """Two rows per stage (compute, outbound transfer), one box per batch."""
    K, B = trace.num_stages, trace.num_batches
    rows = [("uplink", trace.uplink_start, trace.uplink_end)]
    for k in range(K):
        rows.append((f"S{k + 1} compute", trace.start_compute[:, k], trace.end_compute[:, k]))
        rows.append((f"S{k + 1} send", trace.start_tx[:, k], trace.end_tx[:, k]))
    tmax = trace.total if trace.total > 0 else 1.0
    row_h = 22
    height = MT + row_h * len(rows) + MB
    left, pw = 110, W - 110 - 30
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}">',
        f'<rect x="0" y="0" width="{W}" height="{height}" fill="white"/>',
        f'<text x="{W / 2:.0f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
    ]
    for r, (name, starts, ends) in enumerate(rows):
        y = MT + r * row_h
        out.append(f'<text x="{left - 6}" y="{y + 15}" text-anchor="end" font-family="sans-serif" font-size="11">{name}</text>')
        for b in range(B):
            x0 = left + pw * starts[b] / tmax
            x1 = left + pw * ends[b] / tmax
            color = PALETTE[b % len(PALETTE)]
            out.append(
                f'<rect x="{_f(x0)}" y="{y + 3}" width="{_f(max(x1 - x0, 0.0))}" height="{row_h - 6}" '
                f'fill="{color}" stroke="black" stroke-width="0.5"/>'
            )
    ya = MT + row_h * len(rows) + 4
    out.append(f'<line x1="{left}" y1="{ya}" x2="{left + pw}" y2="{ya}" stroke="black"/>')
    for i in range(5):
        x = left + pw * i / 4
        out.append(
            f'<text x="{_f(x)}" y="{ya + 14}" text-anchor="middle" font-family="sans-serif" font-size="10">{tmax * i / 4:.4g}</text>'
        )
    out.append(f'<text x="{left + pw / 2:.0f}" y="{ya + 32}" text-anchor="middle" font-family="sans-serif" font-size="12">time (s)</text>')
    out.append(_comment([["row", "batch", "start_s", "end_s"]] + [
        [name, b, repr(float(s[b])), repr(float(e[b]))] for name, s, e in rows for b in range(B)
    ]))
    out.append("</svg>")
    return "\n".join(out) + "\n"
