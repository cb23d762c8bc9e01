"""Atomic file output, CSV tables stamped with a config hash, and a minimal
native SVG line-plot writer."""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path
from xml.sax.saxutils import escape


def write_text_atomic(path, text: str) -> Path:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header, rows, config_hash: str | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header) + (["config_hash"] if config_hash else []))
    for r in rows:
        w.writerow(list(r) + ([config_hash] if config_hash else []))
    return buf.getvalue()


def stamp_csv(text: str, config_hash: str) -> str:
    """Append a ``config_hash`` column to an existing CSV table."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return text
    return csv_text(rows[0], rows[1:], config_hash)


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def svg_line_plot(series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
                  logx: bool = False, logy: bool = False, width: int = 640, height: int = 420) -> str:
    """``series`` maps a label to ``(x, y)`` sequences."""
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)
    pts = {k: [(tx(float(a)), ty(float(b))) for a, b in zip(*xy)
               if (not logx or a > 0) and (not logy or b > 0) and math.isfinite(float(b))]
           for k, xy in series.items()}
    allx = [p[0] for v in pts.values() for p in v] or [0.0, 1.0]
    ally = [p[1] for v in pts.values() for p in v] or [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="15" y="{mt + ph / 2:.1f}" text-anchor="middle" transform="rotate(-90 15 {mt + ph / 2:.1f})">{escape(ylabel)}</text>']
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        xl = f"1e{xv:.2g}" if logx else f"{xv:.3g}"
        yl = f"1e{yv:.2g}" if logy else f"{yv:.3g}"
        out.append(f'<text x="{sx(xv):.1f}" y="{mt + ph + 16}" text-anchor="middle">{xl}</text>')
        out.append(f'<text x="{ml - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yl}</text>')
    for j, (name, p) in enumerate(pts.items()):
        color = _COLORS[j % len(_COLORS)]
        if p:
            path = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in p)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{path}"/>')
        out.append(f'<line x1="{ml + pw + 10}" y1="{mt + 14 + 18 * j}" x2="{ml + pw + 30}" y2="{mt + 14 + 18 * j}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{mt + 18 + 18 * j}">{escape(str(name))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
