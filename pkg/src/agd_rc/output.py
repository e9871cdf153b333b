"""CSV / JSON / SVG writers shared by the command-line tools."""
from __future__ import annotations

import csv
import json
import math
from typing import Any, Optional

import numpy as np

from .analytic import ScanResult

SCHEMA = "agd-rc/1"


def _plain(obj: Any):
    """Convert numpy values and dataclass-like objects into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(payload: dict) -> str:
    body = {"schema": SCHEMA}
    body.update(payload)
    return json.dumps(_plain(body), indent=2, sort_keys=False) + "\n"


def write_text(path: Optional[str], text: str, stream=None) -> None:
    """Write to ``path``; ``None`` or ``-`` means the given stream."""
    if path is None or path == "-":
        stream.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def write_scan_csv(scan: ScanResult, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "beta", "stable", "margin", "route", "detail"])
        for i, a in enumerate(scan.alphas):
            for j, b in enumerate(scan.betas):
                v = scan.verdicts[i][j]
                w.writerow([repr(float(a)), repr(float(b)), int(v.stable), repr(float(v.margin)),
                            v.route.value, v.detail])


def scan_svg(scan: ScanResult, cell: int = 4, title: str = "") -> str:
    """Heatmap with alpha on the x axis, beta on the y axis (up), stable cells filled."""
    mask = scan.stable_mask()
    na, nb = mask.shape
    pad = 40
    w, h = na * cell + 2 * pad, nb * cell + 2 * pad
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
           f'<rect x="{pad}" y="{pad}" width="{na * cell}" height="{nb * cell}" fill="white" stroke="black"/>']
    for i in range(na):
        for j in range(nb):
            if mask[i, j]:
                x = pad + i * cell
                y = pad + (nb - 1 - j) * cell
                out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="#2b6cb0"/>')
    a0, a1 = float(scan.alphas[0]), float(scan.alphas[-1])
    b0, b1 = float(scan.betas[0]), float(scan.betas[-1])
    out.append(f'<text x="{pad}" y="{h - 12}" font-size="11">alpha {a0:g} .. {a1:g}</text>')
    out.append(f'<text x="4" y="{pad - 8}" font-size="11">beta {b0:g} .. {b1:g}</text>')
    if title:
        out.append(f'<text x="{pad}" y="16" font-size="12">{_escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
