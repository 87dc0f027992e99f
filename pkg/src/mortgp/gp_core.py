"""Single-series Gaussian process: likelihood, estimation and prediction.

Estimation is two-step.  The natural-spline mean is fitted by OLS first and
held fixed; the kernel hyperparameters and the noise variance are then chosen
by maximizing the log marginal likelihood of the detrended residuals with
L-BFGS-B from several random starting points.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.linalg.lapack import dpotrf, dpotri, dpotrs
from scipy.optimize import minimize
from scipy.stats import norm

from .errors import FitFailed, NotPositiveDefinite
from .kernels import (
    KERNEL_FAMILIES,
    KernelSpec,
    Matern32,
    Matern52,
    Periodic,
    RationalQuadratic,
    SpectralMixture,
    SquaredExponential,
    gram_matrix,
    kernel_from_dict,
    lag_matrix,
)
from .spline_mean import MeanModel, build_knots, eval_mean, fit_ols

log = logging.getLogger(__name__)

__all__ = [
    "TrainingSet",
    "GPConfig",
    "GPModel",
    "PredictiveDistribution",
    "stable_cholesky",
    "log_marginal_likelihood",
    "nll_gradient",
    "condition",
    "fit",
    "predict",
    "prediction_interval",
    "model_to_dict",
    "model_from_dict",
]

NOISE_FLOOR = 1e-8
JITTER_START = 1e-10
JITTER_MAX = 1e-4
MODEL_FORMAT = "mortgp.gp-model"
MODEL_VERSION = 1
LOG_2PI = math.log(2.0 * math.pi)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TrainingSet:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t, y = _frozen(self.times), _frozen(self.values)
        if t.ndim != 1 or t.shape != y.shape:
            raise ValueError("times and values must be 1-d and of equal length")
        if t.size < 2:
            raise ValueError("a training set needs at least two points")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ValueError("training data must be finite")
        if np.any(np.diff(t) < 0):
            raise ValueError("training times must be sorted ascending")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)

    @property
    def n(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class GPConfig:
    family: str = "sm"
    Q: int = 2
    K: int = 4
    restarts: int = 10
    seed: int = 0
    maxiter: int = 500

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; choose from {sorted(KERNEL_FAMILIES)}")
        if self.K < 2 or self.Q < 1 or self.restarts < 1:
            raise ValueError("need K >= 2, Q >= 1 and restarts >= 1")


@dataclass(frozen=True, eq=False)
class GPModel:
    mean: MeanModel
    kernel: KernelSpec
    noise_var: float
    training: TrainingSet
    chol: np.ndarray
    alpha_vec: np.ndarray
    jitter: float = 0.0
    log_likelihood: float = float("nan")
    n_iter: int = 0
    seed: int | None = None

    def stabilized_gram(self) -> np.ndarray:
        K = gram_matrix(self.kernel, self.training.times, self.noise_var)
        return K + self.jitter * np.eye(K.shape[0])


@dataclass(frozen=True, eq=False)
class PredictiveDistribution:
    times: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    cov: np.ndarray | None = None


def stable_cholesky(K: np.ndarray):
    """Lower Cholesky factor of ``K``, adding diagonal jitter only if needed.

    Jitter starts at ``1e-10 * mean(diag)`` and grows tenfold up to
    ``1e-4 * mean(diag)``.  Returns ``(L, jitter)``.
    """
    try:
        return cholesky(K, lower=True, check_finite=False), 0.0
    except LinAlgError:
        pass
    if not np.all(np.isfinite(K)):
        raise NotPositiveDefinite("Gram matrix has non-finite entries")
    scale = float(np.mean(np.diag(K)))
    if not scale > 0:
        raise NotPositiveDefinite("Gram matrix has non-positive mean diagonal")
    eye = np.eye(K.shape[0])
    level = JITTER_START
    while level <= JITTER_MAX * (1 + 1e-9):
        jitter = level * scale
        try:
            return cholesky(K + jitter * eye, lower=True, check_finite=False), jitter
        except LinAlgError:
            level *= 10.0
    raise NotPositiveDefinite(f"Cholesky failed with jitter up to {JITTER_MAX:g} * mean(diag)")


def _residuals(train: TrainingSet, mean: MeanModel) -> np.ndarray:
    return train.values - eval_mean(mean, train.times)


def _check_noise(noise_var):
    if not (np.isfinite(noise_var) and noise_var > 0):
        raise ValueError(f"noise_var must be positive, got {noise_var}")


def log_marginal_likelihood(train: TrainingSet, mean: MeanModel, kernel: KernelSpec, noise_var: float) -> float:
    _check_noise(noise_var)
    r = _residuals(train, mean)
    L, _ = stable_cholesky(gram_matrix(kernel, train.times, noise_var))
    a = cho_solve((L, True), r, check_finite=False)
    return float(-np.sum(np.log(np.diag(L))) - 0.5 * r @ a - 0.5 * r.size * LOG_2PI)


class _LagIndex:
    """Unique absolute lags of a training design; all kernels are even in the lag."""

    def __init__(self, times):
        tau = np.abs(lag_matrix(times))
        self.n = tau.shape[0]
        self.lags, inv = np.unique(tau, return_inverse=True)
        self.inverse = inv.reshape(-1)
        self.same = (tau == 0.0).astype(float)
        self.distinct = bool(self.same.sum() == self.n)
        rows, cols = np.tril_indices(self.n)
        self.rows, self.cols = rows, cols
        self.flat_lower = rows * self.n + cols
        self.lower_inverse = self.inverse[self.flat_lower]
        # off-diagonal entries stand for two symmetric cells
        self.lower_weight = np.where(rows == cols, 1.0, 2.0)

    def expand(self, values):
        return values.take(self.inverse).reshape(self.n, self.n)

    def aggregate(self, W):
        return np.bincount(self.inverse, weights=W.reshape(-1), minlength=self.lags.size)

    def aggregate_lower(self, w_lower):
        return np.bincount(self.lower_inverse, weights=w_lower * self.lower_weight, minlength=self.lags.size)


def _nll_and_grad(kernel: KernelSpec, noise_var: float, lags: _LagIndex, r: np.ndarray):
    k, dk = kernel.k_and_dk(lags.lags)
    K = lags.expand(k)
    if lags.distinct:
        K.flat[:: lags.n + 1] += noise_var
    else:
        K += noise_var * lags.same
    L, info = dpotrf(K, lower=1, clean=1)
    if info != 0:
        L, _ = stable_cholesky(K)
    a, _ = dpotrs(L, r, lower=1)
    nll = float(np.log(L.diagonal()).sum() + 0.5 * r @ a + 0.5 * r.size * LOG_2PI)
    Kinv, _ = dpotri(L, lower=1)
    # W = K^-1 - a a^T, read from the lower triangle only
    w_lower = Kinv.take(lags.flat_lower) - a[lags.rows] * a[lags.cols]
    w_lag = lags.aggregate_lower(w_lower)
    grad = np.empty(len(dk) + 1)
    grad[:-1] = 0.5 * (np.asarray(dk) @ w_lag)
    if lags.distinct:
        grad[-1] = 0.5 * noise_var * (Kinv.diagonal().sum() - a @ a)
    else:
        W = Kinv + np.tril(Kinv, -1).T - np.outer(a, a)
        grad[-1] = 0.5 * noise_var * np.sum(W * lags.same)
    return nll, grad


def nll_gradient(train: TrainingSet, mean: MeanModel, kernel: KernelSpec, noise_var: float) -> np.ndarray:
    """Gradient of the negative log likelihood.

    Ordered as ``kernel.to_vector()`` followed by ``log(noise_var)``.
    """
    _check_noise(noise_var)
    return _nll_and_grad(kernel, noise_var, _LagIndex(train.times), _residuals(train, mean))[1]


def condition(
    train: TrainingSet,
    mean: MeanModel,
    kernel: KernelSpec,
    noise_var: float,
    *,
    n_iter: int = 0,
    seed: int | None = None,
) -> GPModel:
    """Build a GPModel for fixed hyperparameters (no optimization)."""
    _check_noise(noise_var)
    r = _residuals(train, mean)
    K = gram_matrix(kernel, train.times, noise_var)
    L, jitter = stable_cholesky(K)
    alpha = cho_solve((L, True), r, check_finite=False)
    lml = float(-np.sum(np.log(np.diag(L))) - 0.5 * r @ alpha - 0.5 * r.size * LOG_2PI)
    return GPModel(
        mean=mean,
        kernel=kernel,
        noise_var=float(noise_var),
        training=train,
        chol=_frozen(L),
        alpha_vec=_frozen(alpha),
        jitter=jitter,
        log_likelihood=lml,
        n_iter=n_iter,
        seed=seed,
    )


# -- initialization and bounds ------------------------------------------------


def _data_scales(times, r):
    span = float(times[-1] - times[0])
    steps = np.diff(np.unique(times))
    dt = float(steps.min()) if steps.size else 1.0
    span = max(span, dt)
    var = max(float(np.var(r)), NOISE_FLOOR)
    return span, dt, var


def _template(config: GPConfig) -> KernelSpec:
    if config.family == "sm":
        return SpectralMixture(weights=(1.0,) * config.Q, means=(0.1,) * config.Q, stds=(0.1,) * config.Q)
    return KERNEL_FAMILIES[config.family]()


def _bounds(kernel: KernelSpec, span, dt, var):
    lh = (0.5 * math.log(1e-6 * var), 0.5 * math.log(1e2 * var))
    ll = (math.log(0.1 * dt), math.log(100.0 * span))
    if isinstance(kernel, SpectralMixture):
        b = []
        for _ in range(kernel.Q):
            b += [
                (math.log(1e-6 * var), math.log(1e2 * var)),
                (0.0, 0.5 / dt),
                (math.log(0.01 / span), math.log(2.0 / dt)),
            ]
    elif isinstance(kernel, Periodic):
        b = [lh, ll, (math.log(2.0 * dt), math.log(2.0 * span))]
    elif isinstance(kernel, RationalQuadratic):
        b = [lh, ll, (math.log(1e-2), math.log(1e3))]
    else:
        b = [lh, ll]
    b.append((math.log(NOISE_FLOOR), math.log(max(10.0 * var, 1e-6))))
    return b


def _initial_point(kernel: KernelSpec, rng, span, dt, var):
    """Random starting vector (kernel params then log noise)."""
    log_uniform = lambda lo, hi: rng.uniform(math.log(lo), math.log(hi))  # noqa: E731
    if isinstance(kernel, SpectralMixture):
        theta = []
        for _ in range(kernel.Q):
            theta += [
                math.log(var / kernel.Q),
                rng.uniform(0.0, 0.5 / dt),
                log_uniform(1.0 / span, 0.5 / dt),
            ]
    else:
        theta = [0.5 * math.log(var * rng.uniform(0.3, 1.0)), log_uniform(dt, span)]
        if isinstance(kernel, Periodic):
            theta[1] = rng.uniform(math.log(0.5), math.log(2.0))
            theta.append(log_uniform(2.0 * dt, span))
        elif isinstance(kernel, RationalQuadratic):
            theta.append(log_uniform(0.3, 3.0))
    theta.append(math.log(var * rng.uniform(0.05, 0.5)))
    return np.asarray(theta, dtype=float)


def _split(kernel: KernelSpec, x):
    return kernel.from_vector(x[:-1]), float(math.exp(x[-1]))


def fit(train: TrainingSet, config: GPConfig = GPConfig()) -> GPModel:
    """Two-step estimation: OLS spline mean, then ML kernel and noise.

    Every restart draws its own starting point from a generator seeded by
    ``config.seed``; the restart with the highest likelihood wins.
    """
    if train.n < max(config.K, 4):
        raise ValueError(f"need at least {max(config.K, 4)} points, got {train.n}")
    mean = fit_ols(train.times, train.values, build_knots(train.times, config.K))
    r = _residuals(train, mean)
    span, dt, var = _data_scales(train.times, r)
    lags = _LagIndex(train.times)
    template = _template(config)
    bounds = _bounds(template, span, dt, var)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    def objective(x):
        kernel, s2 = _split(template, x)
        try:
            return _nll_and_grad(kernel, s2, lags, r)
        except NotPositiveDefinite:
            return 1e25, np.zeros_like(x)

    rng = np.random.default_rng(config.seed)
    best, diagnostics = None, []
    for i in range(config.restarts):
        x0 = np.clip(_initial_point(template, rng, span, dt, var), lo, hi)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(
                objective,
                x0,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": config.maxiter},
            )
        ok = np.isfinite(res.fun) and res.fun < 1e24 and np.all(np.isfinite(res.x))
        diagnostics.append({"restart": i, "nll": float(res.fun), "nit": int(res.nit), "message": str(res.message)})
        if ok and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitFailed("no restart reached a finite optimum", diagnostics)

    kernel, s2 = _split(template, best.x)
    log.debug("fit: nll=%.6g after %d iterations", best.fun, best.nit)
    try:
        return condition(train, mean, kernel, s2, n_iter=int(best.nit), seed=config.seed)
    except NotPositiveDefinite as exc:
        raise FitFailed(str(exc), diagnostics) from exc


def predict(model: GPModel, test_times, *, full_cov: bool = False, double_noise: bool = False) -> PredictiveDistribution:
    """Posterior predictive distribution of new observations.

    The observation noise enters the predictive covariance once.  With
    ``double_noise=True`` the noise is also placed on coincident test times
    inside the test-test block, i.e. added a second time.
    """
    ts = np.atleast_1d(np.asarray(test_times, dtype=float))
    if not np.all(np.isfinite(ts)):
        raise ValueError("test times must be finite")
    Ks = model.kernel.k(lag_matrix(model.training.times, ts))
    mu = eval_mean(model.mean, ts)
    mean = mu + Ks.T @ model.alpha_vec
    v = solve_triangular(model.chol, Ks, lower=True, check_finite=False)
    tau_ss = lag_matrix(ts)
    cov = model.kernel.k(tau_ss) - v.T @ v + model.noise_var * np.eye(ts.size)
    if double_noise:
        cov = cov + model.noise_var * (tau_ss == 0.0)
    var = np.diag(cov).copy()
    if np.any(var < -1e-10):
        warnings.warn(f"negative predictive variance clipped (min {var.min():.3g})", RuntimeWarning)
    var = np.clip(var, 0.0, None)
    return PredictiveDistribution(
        times=_frozen(ts),
        mean=_frozen(mean),
        var=_frozen(var),
        cov=_frozen(cov) if full_cov else None,
    )


def prediction_interval(pred: PredictiveDistribution, alpha: float = 0.05):
    """``mean -/+ z * sd`` with ``z`` the standard normal ``1 - alpha/2`` quantile."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    z = norm.ppf(1.0 - alpha / 2.0)
    half = z * np.sqrt(pred.var)
    return pred.mean - half, pred.mean + half


def model_to_dict(model: GPModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "mean": model.mean.to_dict(),
        "kernel": model.kernel.to_dict(),
        "noise_var": model.noise_var,
        "training": {"times": model.training.times.tolist(), "values": model.training.values.tolist()},
        "log_likelihood": model.log_likelihood,
        "n_iter": model.n_iter,
        "seed": model.seed,
    }


def model_from_dict(d: dict) -> GPModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a serialized GP model (format={d.get('format')!r})")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')!r}")
    train = TrainingSet(np.asarray(d["training"]["times"]), np.asarray(d["training"]["values"]))
    return condition(
        train,
        MeanModel.from_dict(d["mean"]),
        kernel_from_dict(d["kernel"]),
        d["noise_var"],
        n_iter=d.get("n_iter", 0),
        seed=d.get("seed"),
    )
