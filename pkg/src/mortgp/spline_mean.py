"""Natural cubic spline mean function fitted by ordinary least squares.

The spline is written in the reduced natural-spline basis

    1, u, N_1(u), ..., N_{K-2}(u)

where ``u`` is time mapped affinely onto [0, 1] using the boundary knots and
each ``N_j`` is a combination of truncated cubics ``(u - z_k)^3_+`` whose
coefficients already satisfy ``sum(beta) = 0`` and ``sum(beta * knot) = 0``.
Beyond the last knot every basis column is affine, so the fitted mean
continues as the straight line ``c0 + c1 * t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateKnots, SingularDesign

__all__ = [
    "KnotVector",
    "MeanModel",
    "build_knots",
    "basis_row",
    "basis_matrix",
    "fit_ols",
    "eval_mean",
]


@dataclass(frozen=True)
class KnotVector:
    knots: tuple

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if k.ndim != 1 or k.size < 2:
            raise DegenerateKnots("need at least two knots")
        if not np.all(np.isfinite(k)):
            raise DegenerateKnots("knots must be finite")
        if np.any(np.diff(k) <= 0):
            raise DegenerateKnots(f"knots not strictly increasing: {k.tolist()}")
        object.__setattr__(self, "knots", tuple(float(v) for v in k))

    def __len__(self):
        return len(self.knots)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.knots, dtype=float)

    @property
    def shift(self) -> float:
        return self.knots[0]

    @property
    def scale(self) -> float:
        return self.knots[-1] - self.knots[0]

    def standardize(self, t):
        return (np.asarray(t, dtype=float) - self.shift) / self.scale

    @property
    def standardized(self) -> np.ndarray:
        return self.standardize(self.array)


def build_knots(times, K: int = 4) -> KnotVector:
    """Place ``K`` knots at the ``j/(K-1)`` quantiles of the training times.

    The first and last knots coincide with the data boundary.
    """
    t = np.sort(np.asarray(times, dtype=float))
    if K < 2:
        raise DegenerateKnots(f"K must be >= 2, got {K}")
    if np.unique(t).size < K:
        raise DegenerateKnots(f"{np.unique(t).size} distinct times cannot carry {K} knots")
    probs = np.arange(K) / (K - 1)
    knots = np.quantile(t, probs)
    if np.any(np.diff(knots) <= 0):
        raise DegenerateKnots(f"quantile knots collapse: {knots.tolist()}")
    return KnotVector(tuple(knots))


def _cube_plus(x):
    return np.where(x > 0.0, x, 0.0) ** 3


def _reduced_columns(u, z):
    """Natural-spline columns on standardized time ``u`` with knots ``z``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    K = z.size
    cols = [np.ones_like(u), u]
    if K > 2:
        last = _cube_plus(u - z[-1])

        def d(j):
            return (_cube_plus(u - z[j]) - last) / (z[-1] - z[j])

        d_pen = d(K - 2)
        for j in range(K - 2):
            cols.append(d(j) - d_pen)
    return np.column_stack(cols)


def _truncated_power_weights(z):
    """Matrix W (K x (K-2)) mapping reduced cubic coefficients to beta_k."""
    K = z.size
    W = np.zeros((K, max(K - 2, 0)))
    for j in range(K - 2):
        a = 1.0 / (z[-1] - z[j])
        b = 1.0 / (z[-1] - z[-2])
        W[j, j] += a
        W[-1, j] -= a
        W[-2, j] -= b
        W[-1, j] += b
    return W


def basis_row(t: float, knots: KnotVector) -> np.ndarray:
    """Reduced natural-spline basis (length K) evaluated at a single time."""
    return basis_matrix([t], knots)[0]


def basis_matrix(times, knots: KnotVector) -> np.ndarray:
    return _reduced_columns(knots.standardize(times), knots.standardized)


@dataclass(frozen=True)
class MeanModel:
    """Fitted natural cubic spline.

    ``coef`` holds the reduced-basis coefficients in standardized time.
    ``alpha`` and ``beta`` are the equivalent truncated-power coefficients in
    original time units (``alpha_2 = alpha_3 = 0`` implicitly), and
    ``tail_intercept``/``tail_slope`` give the linear continuation past the
    last knot.
    """

    knots: KnotVector
    coef: tuple
    alpha: tuple
    beta: tuple
    tail_intercept: float
    tail_slope: float

    @classmethod
    def from_coef(cls, knots: KnotVector, coef) -> "MeanModel":
        coef = np.asarray(coef, dtype=float)
        z = knots.standardized
        s, d = knots.shift, knots.scale
        a0, a1 = coef[0], coef[1]
        b_std = _truncated_power_weights(z) @ coef[2:]

        # tail in standardized time, then mapped to years
        c1u = a1 + 3.0 * np.sum(b_std * z**2)
        c0u = a0 - np.sum(b_std * z**3)
        c1 = c1u / d
        c0 = c0u - c1u * s / d

        alpha = (a0 - a1 * s / d, a1 / d)
        beta = tuple(float(v) for v in b_std / d**3)
        return cls(
            knots=knots,
            coef=tuple(float(v) for v in coef),
            alpha=(float(alpha[0]), float(alpha[1])),
            beta=beta,
            tail_intercept=float(c0),
            tail_slope=float(c1),
        )

    def __call__(self, t):
        return eval_mean(self, t)

    def to_dict(self) -> dict:
        return {"knots": list(self.knots.knots), "coef": list(self.coef)}

    @classmethod
    def from_dict(cls, d: dict) -> "MeanModel":
        return cls.from_coef(KnotVector(tuple(d["knots"])), d["coef"])


def fit_ols(times, values, knots: KnotVector) -> MeanModel:
    """Least-squares natural spline through (times, values).

    Solved with a thin QR factorization of the basis matrix.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("times and values must be 1-d arrays of equal length")
    if not np.all(np.isfinite(y)):
        raise ValueError("values must be finite")
    K = len(knots)
    if t.size < K:
        raise SingularDesign(f"{t.size} observations for {K} basis columns")

    X = basis_matrix(t, knots)
    Q, R = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(R))
    if diag.min() <= max(X.shape) * np.finfo(float).eps * diag.max():
        raise SingularDesign("spline basis matrix is rank deficient")
    coef = solve_triangular(R, Q.T @ y, lower=False)
    return MeanModel.from_coef(knots, coef)


def eval_mean(model: MeanModel, t):
    """Evaluate the fitted mean; exactly ``c0 + c1 * t`` from the last knot on."""
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = basis_matrix(t, model.knots) @ np.asarray(model.coef)
    tail = t >= model.knots.knots[-1]
    out[tail] = model.tail_intercept + model.tail_slope * t[tail]
    return float(out[0]) if scalar else out
