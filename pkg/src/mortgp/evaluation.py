"""Curve RMSE and the rolling-window backtest."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ShapeError, WindowOverrun
from .surface import DemographicSurface

__all__ = [
    "Forecaster",
    "EvaluationRow",
    "EvaluationReport",
    "rmse_curve",
    "default_first_train_end",
    "rolling_window_evaluate",
]

# (training surface, target years) -> ages x len(target years) log-rate forecasts
Forecaster = Callable[[DemographicSurface, Sequence[int]], np.ndarray]


def rmse_curve(predicted, actual, ages=None) -> float:
    """Root mean squared error across ages; NaN cells in ``actual`` are skipped."""
    p = np.asarray(predicted, dtype=float).reshape(-1)
    a = np.asarray(actual, dtype=float).reshape(-1)
    if p.shape != a.shape or (ages is not None and len(ages) != a.size):
        raise ShapeError(f"length mismatch: predicted {p.size}, actual {a.size}" + ("" if ages is None else f", ages {len(ages)}"))
    keep = ~np.isnan(a)
    if not keep.any():
        raise ShapeError("no observed cells to compare")
    return float(np.sqrt(np.mean((p[keep] - a[keep]) ** 2)))


@dataclass(frozen=True)
class EvaluationRow:
    dataset: str
    model: str
    h: int
    rmse: float
    windows: int
    per_window: tuple
    sse: float
    cells: int


@dataclass
class EvaluationReport:
    rows: list = field(default_factory=list)
    first_train_end: int | None = None

    def get(self, model: str, h: int, dataset: str | None = None) -> EvaluationRow:
        for r in self.rows:
            if r.model == model and r.h == h and (dataset is None or r.dataset == dataset):
                return r
        raise KeyError((dataset, model, h))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset", "model", "h", "rmse", "windows"])
        for r in self.rows:
            w.writerow([r.dataset, r.model, r.h, repr(r.rmse), r.windows])
        return buf.getvalue()

    def per_window_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset", "model", "h", "window", "train_end", "rmse"])
        for r in self.rows:
            for i, v in enumerate(r.per_window):
                w.writerow([r.dataset, r.model, r.h, i, self.first_train_end + i if self.first_train_end else "", repr(v)])
        return buf.getvalue()

    def to_table(self) -> str:
        """Horizon blocks with one line per dataset and one column per model."""
        models = list(dict.fromkeys(r.model for r in self.rows))
        datasets = list(dict.fromkeys(r.dataset for r in self.rows))
        horizons = sorted({r.h for r in self.rows})
        width = max([len(d) for d in datasets] + [7])
        lines = [f"{'dataset':<{width}}" + "".join(f"{m.upper():>10}" for m in models)]
        for h in horizons:
            lines.append(f"h = {h}")
            for d in datasets:
                cells = []
                for m in models:
                    try:
                        cells.append(f"{self.get(m, h, d).rmse:>10.4f}")
                    except KeyError:
                        cells.append(f"{'-':>10}")
                lines.append(f"{d:<{width}}" + "".join(cells))
        return "\n".join(lines) + "\n"


def default_first_train_end(last_year: int, horizons, windows: int) -> int:
    """Latest training end that still lets every window reach its deepest target."""
    return int(last_year) - max(horizons) - windows + 1


def rolling_window_evaluate(
    surface: DemographicSurface,
    models: Mapping[str, Forecaster],
    horizons=(5, 10, 15, 20),
    window_count: int = 10,
    t_m: int | None = None,
    dataset: str = "data",
) -> EvaluationReport:
    """Backtest each model over ``window_count`` expanding training windows.

    Window ``w`` trains on years up to ``t_m + w`` and is scored on
    ``t_m + w + h``.  The reported RMSE pools squared errors over all windows
    and ages before taking the root.
    """
    horizons = sorted({int(h) for h in horizons})
    if not horizons or horizons[0] < 1:
        raise ValueError("horizons must be a non-empty set of positive integers")
    if window_count < 1:
        raise ValueError("window_count must be >= 1")
    t_first, t_last = int(surface.years[0]), int(surface.years[-1])
    if t_m is None:
        t_m = default_first_train_end(t_last, horizons, window_count)
    deepest = t_m + window_count - 1 + horizons[-1]
    if deepest > t_last:
        raise WindowOverrun(f"deepest target {deepest} is past the last year {t_last}")
    if t_m < t_first + 1:
        raise WindowOverrun(f"first training end {t_m} leaves fewer than two training years")

    sse = {(m, h): [] for m in models for h in horizons}
    counts = {(m, h): [] for m in models for h in horizons}
    for w in range(window_count):
        train = surface.years_between(None, t_m + w)
        targets = [t_m + w + h for h in horizons]
        actual = np.column_stack([surface.column(y) for y in targets])
        for name, forecaster in models.items():
            pred = np.asarray(forecaster(train, targets), dtype=float)
            if pred.shape != actual.shape:
                raise ShapeError(f"model {name!r} returned shape {pred.shape}, expected {actual.shape}")
            for j, h in enumerate(horizons):
                keep = ~np.isnan(actual[:, j])
                err = pred[keep, j] - actual[keep, j]
                sse[name, h].append(float(err @ err))
                counts[name, h].append(int(keep.sum()))

    report = EvaluationReport(first_train_end=t_m)
    for name in models:
        for h in horizons:
            s, c = sse[name, h], counts[name, h]
            total_sse, total_cells = float(np.sum(s)), int(np.sum(c))
            report.rows.append(
                EvaluationRow(
                    dataset=dataset,
                    model=name,
                    h=h,
                    rmse=float(np.sqrt(total_sse / total_cells)),
                    windows=window_count,
                    per_window=tuple(float(np.sqrt(x / n)) for x, n in zip(s, c)),
                    sse=total_sse,
                    cells=total_cells,
                )
            )
    return report
