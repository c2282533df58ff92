"""Result tables and image montages.

Results CSVs carry a schema comment so stale files from other versions are
rejected instead of silently misread. The markdown pivot mirrors the usual
model-by-noise-level table layout with per-column bolding of the best
PSNR and SSIM.
"""

from pathlib import Path

import numpy as np

from .engine import ShapeError, Tensor
from .metrics import MetricRow

RESULTS_SCHEMA = "wipunet-results-v1"
RESULTS_HEADER = "model,sigma,psnr_db,ssim,n_images"


def write_results(rows, path) -> None:
    lines = [f"# schema: {RESULTS_SCHEMA}", RESULTS_HEADER]
    for r in rows:
        lines.append(f"{r.model},{float(r.sigma)!r},{float(r.psnr_db)!r},"
                     f"{float(r.ssim)!r},{int(r.n_images)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_results(path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != f"# schema: {RESULTS_SCHEMA}":
        raise ValueError(f"{path}: missing or unknown results schema")
    if len(lines) < 2 or lines[1] != RESULTS_HEADER:
        raise ValueError(f"{path}: unexpected results header")
    rows = []
    for line in lines[2:]:
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"{path}: malformed results row {line!r}")
        rows.append(MetricRow(model=parts[0], sigma=float(parts[1]),
                              psnr_db=float(parts[2]), ssim=float(parts[3]),
                              n_images=int(parts[4])))
    return rows


def merge_results(*row_lists):
    """Concatenate result lists, rejecting duplicate (model, sigma) pairs."""
    merged = []
    seen = set()
    for rows in row_lists:
        for r in rows:
            key = (r.model, float(r.sigma))
            if key in seen:
                raise ValueError(f"duplicate results row for model={r.model} sigma={r.sigma:g}")
            seen.add(key)
            merged.append(r)
    return merged


def pivot_results(rows):
    """Rows -> (models in first-seen order, sigmas ascending, cell lookup)."""
    models = []
    for r in rows:
        if r.model not in models:
            models.append(r.model)
    sigmas = sorted({float(r.sigma) for r in rows})
    cells = {(r.model, float(r.sigma)): (r.psnr_db, r.ssim) for r in rows}
    return models, sigmas, cells


def results_markdown(rows) -> str:
    """Model-by-sigma table with the best PSNR and SSIM per column in bold."""
    models, sigmas, cells = pivot_results(rows)
    best = {}
    for s in sigmas:
        col = [(m, cells[(m, s)]) for m in models if (m, s) in cells]
        best[(s, "psnr")] = max(col, key=lambda kv: kv[1][0])[0]
        best[(s, "ssim")] = max(col, key=lambda kv: kv[1][1])[0]
    header = "| model | " + " | ".join(f"σ={s:g} PSNR/SSIM" for s in sigmas) + " |"
    rule = "| --- |" + " --- |" * len(sigmas)
    lines = [header, rule]
    for m in models:
        parts = []
        for s in sigmas:
            if (m, s) not in cells:
                parts.append("—")
                continue
            p, q = cells[(m, s)]
            ptxt = f"{p:.2f}"
            qtxt = f"{q:.4f}"
            if best[(s, "psnr")] == m:
                ptxt = f"**{ptxt}**"
            if best[(s, "ssim")] == m:
                qtxt = f"**{qtxt}**"
            parts.append(f"{ptxt}/{qtxt}")
        lines.append(f"| {m} | " + " | ".join(parts) + " |")
    return "\n".join(lines) + "\n"


def build_grid(rows, sep: int = 2) -> Tensor:
    """Stack rows of equally sized (1,3,h,w) images with white separators."""
    if not rows or not rows[0]:
        raise ValueError("grid needs at least one row with one image")
    ncols = len(rows[0])
    first = rows[0][0]
    h, w = first.shape[2], first.shape[3]
    for row in rows:
        if len(row) != ncols:
            raise ValueError("grid rows must have equal image counts")
        for img in row:
            if img.shape != (1, 3, h, w):
                raise ShapeError(f"grid images must all be (1,3,{h},{w}), got {img.shape}")
    nrows = len(rows)
    height = nrows * h + (nrows - 1) * sep
    width = ncols * w + (ncols - 1) * sep
    canvas = np.ones((1, 3, height, width), dtype=np.float32)
    for i, row in enumerate(rows):
        for j, img in enumerate(row):
            top, left = i * (h + sep), j * (w + sep)
            data = img.data if isinstance(img, Tensor) else img
            canvas[0, :, top:top + h, left:left + w] = np.clip(data[0], 0.0, 1.0)
    return Tensor(canvas)
