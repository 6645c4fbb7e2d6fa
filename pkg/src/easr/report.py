"""Render result tables as transform x paradigm rows with one column per model."""
from __future__ import annotations

import numpy as np

from .experiments import PARADIGMS, TRANSFORMS, ResultTable, _std

PARADIGM_LABELS = {"individual": "Individual", "shared": "Shared",
                   "shared_finetune": "Shared and Fine-tuning"}
TRANSFORM_LABELS = {"none": "None", "ea": "EA", "sr": "S&R", "ea_sr": "EA and S&R"}


def _order(values, reference):
    return sorted(values, key=lambda v: (reference.index(v) if v in reference else 99, v))


def report_cells(table: ResultTable, delta: bool = False, baseline: str = "none"):
    """{(transform, paradigm): {model or 'Overall': list of per-row values in points}}.

    With ``delta`` each value is the paired difference to ``baseline``; otherwise
    the accuracy itself. "Overall" pools every row of the (transform, paradigm),
    so it is the row-weighted mean of the model columns.
    """
    ok = [r for r in table.rows if r.ok]
    base = {(r.paradigm, r.model, r.unit, r.seed): r.accuracy for r in ok
            if r.transform == baseline}
    cells: dict = {}
    for r in ok:
        if delta:
            if r.transform == baseline:
                continue
            ref = base.get((r.paradigm, r.model, r.unit, r.seed))
            if ref is None:
                continue
            value = 100.0 * (r.accuracy - ref)
        else:
            value = 100.0 * r.accuracy
        cell = cells.setdefault((r.transform, r.paradigm), {})
        cell.setdefault(r.model, []).append(value)
        cell.setdefault("Overall", []).append(value)
    return cells


def render(table: ResultTable, delta: bool = False, fmt: str = "markdown",
           baseline: str = "none") -> str:
    cells = report_cells(table, delta, baseline)
    models = _order({r.model for r in table.rows}, ["shallow", "linear"])
    header = ["Processing", "Modality", *models, "Overall"]
    body = []
    for transform in _order({k[0] for k in cells}, list(TRANSFORMS)):
        for paradigm in _order({k[1] for k in cells if k[0] == transform}, list(PARADIGMS)):
            cell = cells[(transform, paradigm)]
            row = [TRANSFORM_LABELS.get(transform, transform),
                   PARADIGM_LABELS.get(paradigm, paradigm)]
            for col in [*models, "Overall"]:
                vals = cell.get(col)
                row.append(f"{np.mean(vals):.2f} ± {_std(vals):.2f}" if vals else "-")
            body.append(row)
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(r) + " |" for r in body]
    else:
        widths = [max(len(str(r[i])) for r in [header, *body]) for i in range(len(header))]
        fmt_row = lambda r: "  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip()
        lines = [fmt_row(header), "  ".join("-" * w for w in widths)] + [fmt_row(r) for r in body]
    title = (f"Accuracy change vs '{baseline}' (points, mean ± std)" if delta
             else "Accuracy (%, mean ± std)")
    return title + "\n\n" + "\n".join(lines) + "\n"
