"""Synthetic surfaces for testing and the bundled demo dataset."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .data_io import parse_rates
from .gp_core import NOISE_FLOOR
from .kernels import KernelSpec, gram_matrix
from .surface import DemographicSurface

__all__ = [
    "lee_carter_surface",
    "gp_surface",
    "demo_mortality_surface",
    "load_bundled_mortality",
    "BUNDLED_MORTALITY",
]

BUNDLED_MORTALITY = "synthetic_mortality.csv"


def lee_carter_surface(ages, years, a, b, k, noise_sd=0.0, seed=0, kind="mortality") -> DemographicSurface:
    """Log-scale surface ``a_x + b_x k_t`` plus optional iid Gaussian noise."""
    rng = np.random.default_rng(seed)
    values = np.asarray(a, float)[:, None] + np.outer(b, k)
    if noise_sd > 0:
        values = values + noise_sd * rng.standard_normal(values.shape)
    return DemographicSurface(ages, years, values, np.zeros(values.shape, bool), kind=kind, scale="log")


def gp_surface(ages, years, trend, kernel: KernelSpec, noise_var: float, seed=0, kind="mortality"):
    """Rows drawn independently from ``trend(age, years) + GP(kernel) + noise``.

    Returns the log-scale surface.
    """
    rng = np.random.default_rng(seed)
    years = np.asarray(years)
    t = years.astype(float)
    K = gram_matrix(kernel, t) + max(noise_var, NOISE_FLOOR) * np.eye(t.size)
    L = np.linalg.cholesky(K + 1e-12 * np.trace(K) / t.size * np.eye(t.size))
    rows = [trend(int(x), t) + L @ rng.standard_normal(t.size) for x in ages]
    values = np.vstack(rows)
    return DemographicSurface(ages, years, values, np.zeros(values.shape, bool), kind=kind, scale="log")


def demo_mortality_surface(seed: int = 2016, first=1947, last=2016, max_age=100) -> DemographicSurface:
    """Raw-rate mortality surface with a realistic age profile.

    Log rates combine a Lee-Carter-style decline, a slow per-age cycle and
    age-dependent observation noise.
    """
    rng = np.random.default_rng(seed)
    ages = np.arange(max_age + 1)
    years = np.arange(first, last + 1)
    x = ages.astype(float)
    a = np.log(0.03 * np.exp(-1.2 * x) + 2.5e-4 + 2.0e-5 * np.exp(0.1 * x))
    b = 1.5 - x / (max_age + 1)
    b = b / b.sum()
    tc = (years - years.mean()).astype(float)
    k = -2.2 * tc + np.cumsum(rng.normal(0.0, 1.5, years.size))
    k -= k.mean()
    phase = rng.uniform(0, 2 * np.pi, ages.size)
    period = rng.uniform(8.0, 20.0, ages.size)
    cycle = 0.04 * np.sin(2 * np.pi * years[None, :] / period[:, None] + phase[:, None])
    sd = 0.02 + 0.08 * np.exp(-x / 3.0) + 0.06 * (x / max_age) ** 3
    log_m = a[:, None] + np.outer(b, k) + cycle + sd[:, None] * rng.standard_normal((ages.size, years.size))
    rates = np.exp(log_m)
    return DemographicSurface(ages, years, rates, np.zeros(rates.shape, bool), kind="mortality", scale="raw")


def load_bundled_mortality() -> DemographicSurface:
    """The packaged 101-age by 70-year synthetic mortality table (raw rates)."""
    text = resources.files("mortgp.data").joinpath(BUNDLED_MORTALITY).read_text(encoding="utf-8")
    return parse_rates(text, fmt="canonical", kind="mortality")


def bundled_path():
    return resources.files("mortgp.data").joinpath(BUNDLED_MORTALITY)
