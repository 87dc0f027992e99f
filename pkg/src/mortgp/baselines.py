"""Lee-Carter benchmark: rank-1 SVD fit and random walk with drift for k_t."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import IncompleteSurface
from .surface import DemographicSurface

__all__ = ["LCModel", "LCForecast", "fit_lee_carter", "forecast_lc", "lc_forecaster"]


@dataclass(frozen=True, eq=False)
class LCModel:
    ages: np.ndarray
    years: np.ndarray
    a: np.ndarray
    b: np.ndarray
    k: np.ndarray
    drift: float
    drift_se: float
    sigma_rw: float

    def fitted(self) -> np.ndarray:
        return self.a[:, None] + np.outer(self.b, self.k)


@dataclass(frozen=True, eq=False)
class LCForecast:
    year: int
    ages: np.ndarray
    k: float
    k_sd: float
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def _lc_from_matrix(Y: np.ndarray):
    a = Y.mean(axis=1)
    U, s, Vt = np.linalg.svd(Y - a[:, None], full_matrices=False)
    b, k = U[:, 0], s[0] * Vt[0]
    total = b.sum()
    if s[0] == 0.0 or total == 0.0:
        # no time variation (or no usable normalization): k is zero, b arbitrary
        b = np.full_like(b, 1.0 / b.size)
        k = np.zeros_like(k)
    else:
        b, k = b / total, k * total
    # rows of the centered matrix sum to zero, so k already does; remove round-off
    k = k - k.mean()
    return a, b, k


def fit_lee_carter(surface: DemographicSurface) -> LCModel:
    """Fit ``log m(x, t) = a_x + b_x k_t`` with ``sum(b) = 1`` and ``sum(k) = 0``."""
    if not surface.complete:
        raise IncompleteSurface(f"{int(surface.mask.sum())} masked cells; Lee-Carter needs a full matrix")
    if surface.years.size < 3:
        raise ValueError("Lee-Carter needs at least 3 years")
    a, b, k = _lc_from_matrix(np.asarray(surface.values, dtype=float))
    n = k.size
    steps = np.diff(k)
    drift = float((k[-1] - k[0]) / (n - 1))
    sigma = float(np.std(steps, ddof=1))
    return LCModel(
        ages=surface.ages.copy(),
        years=surface.years.copy(),
        a=a,
        b=b,
        k=k,
        drift=drift,
        drift_se=sigma / np.sqrt(n - 1),
        sigma_rw=sigma,
    )


def forecast_lc(model: LCModel, h: int, alpha: float = 0.05) -> LCForecast:
    """Curve ``h`` years past the last fitted year.

    Only the uncertainty in ``k`` (innovations plus drift estimate) enters the
    interval.
    """
    if h < 1:
        raise ValueError("horizon must be >= 1")
    k_hat = model.k[-1] + h * model.drift
    k_sd = float(np.sqrt(h * model.sigma_rw**2 + (h * model.drift_se) ** 2))
    z = norm.ppf(1.0 - alpha / 2.0)
    mean = model.a + model.b * k_hat
    half = z * np.abs(model.b) * k_sd
    return LCForecast(
        year=int(model.years[-1]) + h,
        ages=model.ages,
        k=float(k_hat),
        k_sd=k_sd,
        mean=mean,
        lower=mean - half,
        upper=mean + half,
    )


def lc_forecaster():
    """Adapter for the rolling-window harness."""

    def run(train: DemographicSurface, target_years):
        m = fit_lee_carter(train)
        last = int(m.years[-1])
        return np.column_stack([forecast_lc(m, int(y) - last).mean for y in target_years])

    return run
