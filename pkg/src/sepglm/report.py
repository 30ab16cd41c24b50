"""Serialisation of results: JSON, CSV and small standalone SVG plots.

Everything written here is a pure function of its inputs, so identical
results give byte-identical files.  Non-finite floats are written as the
strings ``"inf"``, ``"-inf"`` and ``"nan"`` to keep the JSON standard.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if hasattr(obj, "value") and hasattr(obj, "name"):  # enums
        return obj.value
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(to_jsonable(obj), indent=2, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def _cell(v):
    v = to_jsonable(v)
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, rows: list[dict], columns: list[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])
    return path


def write_matrix_csv(path, names, M) -> Path:
    rows = [dict({"": n}, **{m: M[i, j] for j, m in enumerate(names)}) for i, n in enumerate(names)]
    return write_csv(path, rows, [""] + list(names))


# ---------------------------------------------------------------------------
# SVG

W, H = 480, 360
MARGIN = 50


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _svg(body: list[str], title: str, width: int = W, height: int = H) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">'
    )
    t = f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>'
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', t] + body + ["</svg>", ""])


def _polyline(xs, ys, color, width=1.5, dash=None) -> str:
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))
    d = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}"{d} points="{pts}"/>'


def ks_svg(model_q, empirical, bound: float, title: str) -> str:
    """KS plot: sorted rescaled values against uniform quantiles with the
    45-degree line and the +-bound band."""
    x0, y0 = MARGIN, H - MARGIN
    size = min(W, H) - 2 * MARGIN

    def sx(v):
        return x0 + v * size

    def sy(v):
        return y0 - v * size

    body = [
        f'<rect x="{x0}" y="{y0 - size}" width="{size}" height="{size}" fill="none" stroke="black"/>',
        _polyline([sx(0), sx(1)], [sy(0), sy(1)], "black", 1),
        _polyline([sx(0), sx(1 - bound)], [sy(bound), sy(1)], "red", 1, "4,3"),
        _polyline([sx(bound), sx(1)], [sy(0), sy(1 - bound)], "red", 1, "4,3"),
    ]
    if len(model_q):
        body.append(_polyline([sx(v) for v in model_q], [sy(v) for v in empirical], "steelblue"))
    body += [
        f'<text x="{sx(0.5):.0f}" y="{y0 + 35}" text-anchor="middle">model quantile</text>',
        f'<text x="{x0 - 35}" y="{sy(0.5):.0f}" text-anchor="middle" '
        f'transform="rotate(-90 {x0 - 35} {sy(0.5):.0f})">empirical quantile</text>',
    ]
    for v in (0.0, 0.5, 1.0):
        body.append(f'<text x="{sx(v):.0f}" y="{y0 + 15}" text-anchor="middle">{v:g}</text>')
        body.append(f'<text x="{x0 - 5}" y="{sy(v) + 4:.0f}" text-anchor="end">{v:g}</text>')
    return _svg(body, title)


def params_svg(labels, est, lower=None, upper=None, title: str = "", log_scale: bool = True) -> str:
    """Point estimates (``exp`` of coefficients by default) with an optional band.

    Non-finite values are skipped; a coefficient at ``-inf`` shows as 0.
    """
    est = np.asarray(est, dtype=float)
    tf = (lambda a: np.exp(np.asarray(a, dtype=float))) if log_scale else (lambda a: np.asarray(a, dtype=float))
    with np.errstate(over="ignore", invalid="ignore"):
        vals = tf(est)
        lo = hi = None
        if lower is not None:
            lo, hi = tf(lower), tf(upper)
    pool = [v for v in vals if np.isfinite(v)]
    if lo is not None:
        pool += [v for v in np.concatenate([lo, hi]) if np.isfinite(v)]
    top = max(pool) if pool else 1.0
    bottom = min(min(pool) if pool else 0.0, 0.0)
    if top <= bottom:
        top = bottom + 1.0
    n = len(vals)
    x0, y0 = MARGIN, H - MARGIN
    w, h = W - 2 * MARGIN, H - 2 * MARGIN

    def sx(i):
        return x0 + (i + 0.5) * w / max(n, 1)

    def sy(v):
        return y0 - (v - bottom) / (top - bottom) * h

    body = [f'<rect x="{x0}" y="{y0 - h}" width="{w}" height="{h}" fill="none" stroke="black"/>']
    if log_scale and bottom <= 1.0 <= top:
        body.append(_polyline([x0, x0 + w], [sy(1.0), sy(1.0)], "gray", 1, "2,2"))
    if lo is not None:
        for i in range(n):
            if np.isfinite(lo[i]) and np.isfinite(hi[i]):
                body.append(_polyline([sx(i), sx(i)], [sy(lo[i]), sy(hi[i])], "lightsteelblue", 3))
    pts = [(sx(i), sy(v)) for i, v in enumerate(vals) if np.isfinite(v)]
    for x, y in pts:
        body.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2" fill="steelblue"/>')
    step = max(1, n // 10)
    for i in range(0, n, step):
        body.append(
            f'<text x="{sx(i):.0f}" y="{y0 + 14}" text-anchor="end" font-size="8" '
            f'transform="rotate(-45 {sx(i):.0f} {y0 + 14})">{escape(str(labels[i]))}</text>'
        )
    for v in (bottom, top):
        body.append(f'<text x="{x0 - 5}" y="{sy(v) + 4:.0f}" text-anchor="end">{v:.3g}</text>')
    return _svg(body, title)


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path
