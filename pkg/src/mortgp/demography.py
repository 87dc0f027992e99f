"""Independent per-age GP fits assembled into curve forecasts."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingAgeModel, MortGPError, SurfaceFitFailed
from .gp_core import (
    GPConfig,
    GPModel,
    TrainingSet,
    fit,
    model_from_dict,
    model_to_dict,
    predict,
    prediction_interval,
)
from .surface import DemographicSurface

log = logging.getLogger(__name__)

MIN_POINTS = 8
MAX_FAILED_FRACTION = 0.10
SURFACE_FORMAT = "mortgp.surface-model"


@dataclass(frozen=True)
class SurfaceConfig:
    """Settings shared by every age; ``workers > 1`` fits ages in subprocesses."""

    family: str = "sm"
    Q: int = 2
    K: int = 4
    restarts: int = 10
    seed: int = 0
    maxiter: int = 500
    workers: int = 1

    def __post_init__(self):
        self.gp_config(0)  # validates
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def age_seed(self, age: int) -> int:
        # depends only on (seed, age), so row order and deletions do not matter
        return int(np.random.SeedSequence([self.seed, int(age)]).generate_state(1)[0])

    def gp_config(self, age: int) -> GPConfig:
        return GPConfig(
            family=self.family,
            Q=self.Q,
            K=self.K,
            restarts=self.restarts,
            seed=self.age_seed(age),
            maxiter=self.maxiter,
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("family", "Q", "K", "restarts", "seed", "maxiter")}


@dataclass(frozen=True, eq=False)
class SurfaceModel:
    ages: np.ndarray
    years: np.ndarray
    kind: str
    config: SurfaceConfig
    models: dict
    failures: dict = field(default_factory=dict)

    @property
    def fitted_ages(self):
        return [a for a in self.ages if self.models.get(int(a)) is not None]

    def model(self, age: int) -> GPModel:
        m = self.models.get(int(age))
        if m is None:
            raise MissingAgeModel(int(age))
        return m

    def summary(self):
        """One dict per age: likelihood, noise sd, iterations or the failure reason."""
        rows = []
        for a in self.ages:
            m = self.models.get(int(a))
            if m is None:
                rows.append({"age": int(a), "fitted": False, "reason": self.failures.get(int(a), "")})
            else:
                rows.append(
                    {
                        "age": int(a),
                        "fitted": True,
                        "n": m.training.n,
                        "log_likelihood": m.log_likelihood,
                        "noise_sd": float(np.sqrt(m.noise_var)),
                        "iterations": m.n_iter,
                    }
                )
        return rows

    def to_dict(self) -> dict:
        return {
            "format": SURFACE_FORMAT,
            "version": 1,
            "kind": self.kind,
            "ages": self.ages.tolist(),
            "years": self.years.tolist(),
            "config": self.config.to_dict(),
            "models": {str(a): (None if m is None else model_to_dict(m)) for a, m in self.models.items()},
            "failures": {str(a): msg for a, msg in self.failures.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurfaceModel":
        if d.get("format") != SURFACE_FORMAT:
            raise ValueError(f"not a serialized surface model (format={d.get('format')!r})")
        models = {int(a): (None if m is None else model_from_dict(m)) for a, m in d["models"].items()}
        return cls(
            ages=np.asarray(d["ages"], dtype=int),
            years=np.asarray(d["years"], dtype=int),
            kind=d["kind"],
            config=SurfaceConfig(**d["config"]),
            models=models,
            failures={int(a): msg for a, msg in d.get("failures", {}).items()},
        )


@dataclass(frozen=True, eq=False)
class CurveForecast:
    year: int
    ages: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sd: np.ndarray


def _fit_row(age: int, times: np.ndarray, values: np.ndarray, config: SurfaceConfig):
    need = max(config.K, MIN_POINTS)
    if times.size < need:
        return age, None, f"only {times.size} observed years (need {need})"
    try:
        return age, fit(TrainingSet(times, values), config.gp_config(age)), None
    except (MortGPError, ValueError) as exc:
        return age, None, f"{type(exc).__name__}: {exc}"


def fit_surface(surface: DemographicSurface, config: SurfaceConfig = SurfaceConfig()) -> SurfaceModel:
    """Fit one GP per age row on that row's observed (log-scale) cells."""
    if surface.scale != "log":
        raise ValueError("fit_surface expects a log-rate surface; apply log_transform first")
    jobs = [(int(a), *surface.row(a), config) for a in surface.ages]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_fit_row, *zip(*jobs)))
    else:
        results = [_fit_row(*job) for job in jobs]

    models, failures = {}, {}
    for age, model, reason in results:
        models[age] = model
        if model is None:
            failures[age] = reason
            log.warning("age %d unfitted: %s", age, reason)
    out = SurfaceModel(
        ages=surface.ages.copy(),
        years=surface.years.copy(),
        kind=surface.kind,
        config=config,
        models=models,
        failures=failures,
    )
    if len(failures) > MAX_FAILED_FRACTION * len(jobs):
        raise SurfaceFitFailed(f"{len(failures)} of {len(jobs)} ages could not be fitted", failures)
    return out


def forecast_curve(model: SurfaceModel, target_year, alpha: float = 0.05, ages=None) -> CurveForecast:
    """Predict every age at ``target_year`` with ``1 - alpha`` intervals."""
    ages = model.ages if ages is None else np.asarray(ages, dtype=int)
    means, lows, ups, sds = [], [], [], []
    for a in ages:
        pred = predict(model.model(a), [float(target_year)])
        lo, hi = prediction_interval(pred, alpha)
        means.append(pred.mean[0])
        lows.append(lo[0])
        ups.append(hi[0])
        sds.append(np.sqrt(pred.var[0]))
    return CurveForecast(
        year=int(target_year),
        ages=np.asarray(ages, dtype=int),
        mean=np.asarray(means),
        lower=np.asarray(lows),
        upper=np.asarray(ups),
        sd=np.asarray(sds),
    )


def gpr_forecaster(config: SurfaceConfig = SurfaceConfig()):
    """Adapter for the rolling-window harness: fit on a surface, forecast years."""

    def run(train: DemographicSurface, target_years):
        sm = fit_surface(train, config)
        return np.column_stack([forecast_curve(sm, y).mean for y in target_years])

    return run


__all__ = [
    "CurveForecast",
    "SurfaceConfig",
    "SurfaceModel",
    "fit_surface",
    "forecast_curve",
    "gpr_forecaster",
]
