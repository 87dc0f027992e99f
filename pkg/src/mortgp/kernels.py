"""Stationary covariance functions and their hyperparameter gradients.

Every kernel is a frozen dataclass holding its natural parameters.  For
optimization each one maps to an unconstrained vector (``to_vector`` /
``from_vector``): positive quantities are stored as logs, and the spectral
means of the spectral mixture kernel are kept as-is since the kernel is even
in them.  Gradients returned by ``gram_gradients`` are taken with respect to
that vector.

No jitter is added here; numerical stabilization happens in :mod:`gp_core`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

__all__ = [
    "KernelSpec",
    "SquaredExponential",
    "Periodic",
    "RationalQuadratic",
    "Matern32",
    "Matern52",
    "SpectralMixture",
    "KERNEL_FAMILIES",
    "kernel_eval",
    "gram_matrix",
    "gram_gradients",
    "kernel_from_dict",
    "lag_matrix",
]

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)
TWO_PI = 2.0 * math.pi


def lag_matrix(t1, t2=None) -> np.ndarray:
    t1 = np.atleast_1d(np.asarray(t1, dtype=float))
    t2 = t1 if t2 is None else np.atleast_1d(np.asarray(t2, dtype=float))
    return t1[:, None] - t2[None, :]


class KernelSpec:
    """Common interface for the kernel families."""

    family: ClassVar[str]

    def k(self, tau):
        """Covariance as a function of the lag ``t - t'``."""
        raise NotImplementedError

    def dk(self, tau) -> list:
        """Derivatives of ``k(tau)`` with respect to each entry of ``to_vector()``."""
        raise NotImplementedError

    def k_and_dk(self, tau):
        return self.k(tau), self.dk(tau)

    def to_vector(self) -> np.ndarray:
        raise NotImplementedError

    def from_vector(self, theta) -> "KernelSpec":
        raise NotImplementedError

    @property
    def n_params(self) -> int:
        return self.to_vector().size

    @property
    def param_names(self) -> list:
        raise NotImplementedError

    def variance(self) -> float:
        return float(self.k(np.zeros(1))[0])

    def to_dict(self) -> dict:
        raise NotImplementedError


def _positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive and finite, got {value}")


@dataclass(frozen=True)
class SquaredExponential(KernelSpec):
    h: float = 1.0
    l: float = 1.0
    family: ClassVar[str] = "se"

    def __post_init__(self):
        _positive("h", self.h)
        _positive("l", self.l)

    def k(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.h**2 * np.exp(-0.5 * tau**2 / self.l**2)

    def dk(self, tau):
        K = self.k(tau)
        return [2.0 * K, K * np.asarray(tau) ** 2 / self.l**2]

    def to_vector(self):
        return np.log([self.h, self.l])

    def from_vector(self, theta):
        h, l = np.exp(theta)
        return SquaredExponential(h=float(h), l=float(l))

    @property
    def param_names(self):
        return ["log_h", "log_l"]

    def to_dict(self):
        return {"family": self.family, "h": self.h, "l": self.l}


@dataclass(frozen=True)
class Periodic(KernelSpec):
    h: float = 1.0
    l: float = 1.0
    p: float = 1.0
    family: ClassVar[str] = "periodic"

    def __post_init__(self):
        for name in ("h", "l", "p"):
            _positive(name, getattr(self, name))

    def k(self, tau):
        s = np.sin(np.pi * np.asarray(tau, dtype=float) / self.p)
        return self.h**2 * np.exp(-2.0 * s**2 / self.l**2)

    def dk(self, tau):
        tau = np.asarray(tau, dtype=float)
        arg = np.pi * tau / self.p
        s, c = np.sin(arg), np.cos(arg)
        K = self.h**2 * np.exp(-2.0 * s**2 / self.l**2)
        d_l = K * 4.0 * s**2 / self.l**2
        d_p = K * 4.0 * s * c * arg / self.l**2
        return [2.0 * K, d_l, d_p]

    def to_vector(self):
        return np.log([self.h, self.l, self.p])

    def from_vector(self, theta):
        h, l, p = np.exp(theta)
        return Periodic(h=float(h), l=float(l), p=float(p))

    @property
    def param_names(self):
        return ["log_h", "log_l", "log_p"]

    def to_dict(self):
        return {"family": self.family, "h": self.h, "l": self.l, "p": self.p}


@dataclass(frozen=True)
class RationalQuadratic(KernelSpec):
    h: float = 1.0
    l: float = 1.0
    a: float = 1.0
    family: ClassVar[str] = "rq"

    def __post_init__(self):
        for name in ("h", "l", "a"):
            _positive(name, getattr(self, name))

    def _base(self, tau):
        return 1.0 + np.asarray(tau, dtype=float) ** 2 / (2.0 * self.a * self.l**2)

    def k(self, tau):
        return self.h**2 * self._base(tau) ** (-self.a)

    def dk(self, tau):
        tau = np.asarray(tau, dtype=float)
        B = self._base(tau)
        K = self.h**2 * B ** (-self.a)
        r = tau**2 / (self.l**2 * B)
        d_l = K * r
        d_a = K * (-self.a * np.log(B) + 0.5 * r)
        return [2.0 * K, d_l, d_a]

    def to_vector(self):
        return np.log([self.h, self.l, self.a])

    def from_vector(self, theta):
        h, l, a = np.exp(theta)
        return RationalQuadratic(h=float(h), l=float(l), a=float(a))

    @property
    def param_names(self):
        return ["log_h", "log_l", "log_a"]

    def to_dict(self):
        return {"family": self.family, "h": self.h, "l": self.l, "a": self.a}


@dataclass(frozen=True)
class Matern32(KernelSpec):
    h: float = 1.0
    l: float = 1.0
    family: ClassVar[str] = "matern32"

    def __post_init__(self):
        _positive("h", self.h)
        _positive("l", self.l)

    def k(self, tau):
        z = SQRT3 * np.abs(np.asarray(tau, dtype=float)) / self.l
        return self.h**2 * (1.0 + z) * np.exp(-z)

    def dk(self, tau):
        z = SQRT3 * np.abs(np.asarray(tau, dtype=float)) / self.l
        e = np.exp(-z)
        return [2.0 * self.h**2 * (1.0 + z) * e, self.h**2 * z**2 * e]

    def to_vector(self):
        return np.log([self.h, self.l])

    def from_vector(self, theta):
        h, l = np.exp(theta)
        return Matern32(h=float(h), l=float(l))

    @property
    def param_names(self):
        return ["log_h", "log_l"]

    def to_dict(self):
        return {"family": self.family, "h": self.h, "l": self.l}


@dataclass(frozen=True)
class Matern52(KernelSpec):
    h: float = 1.0
    l: float = 1.0
    family: ClassVar[str] = "matern52"

    def __post_init__(self):
        _positive("h", self.h)
        _positive("l", self.l)

    def k(self, tau):
        z = SQRT5 * np.abs(np.asarray(tau, dtype=float)) / self.l
        return self.h**2 * (1.0 + z + z**2 / 3.0) * np.exp(-z)

    def dk(self, tau):
        z = SQRT5 * np.abs(np.asarray(tau, dtype=float)) / self.l
        e = np.exp(-z)
        return [
            2.0 * self.h**2 * (1.0 + z + z**2 / 3.0) * e,
            self.h**2 * e * z**2 * (1.0 + z) / 3.0,
        ]

    def to_vector(self):
        return np.log([self.h, self.l])

    def from_vector(self, theta):
        h, l = np.exp(theta)
        return Matern52(h=float(h), l=float(l))

    @property
    def param_names(self):
        return ["log_h", "log_l"]

    def to_dict(self):
        return {"family": self.family, "h": self.h, "l": self.l}


@dataclass(frozen=True)
class SpectralMixture(KernelSpec):
    """Sum of ``Q`` damped cosines.

    ``weights``, ``means`` (cycles per time unit) and ``stds`` hold one entry
    per mixture component.  The optimization vector interleaves
    ``(log w_q, lambda_q, log nu_q)`` per component.
    """

    weights: tuple = (1.0,)
    means: tuple = (0.0,)
    stds: tuple = (1.0,)
    family: ClassVar[str] = "sm"

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        m = tuple(float(v) for v in self.means)
        s = tuple(float(v) for v in self.stds)
        if not (len(w) == len(m) == len(s)) or not w:
            raise ValueError("weights, means and stds must be non-empty and equal length")
        if any(v < 0 or not np.isfinite(v) for v in w) or not any(v > 0 for v in w):
            raise ValueError("weights must be non-negative with at least one positive")
        if any(v < 0 or not np.isfinite(v) for v in m):
            raise ValueError("spectral means must be non-negative")
        for v in s:
            _positive("nu", v)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "stds", s)

    @property
    def Q(self) -> int:
        return len(self.weights)

    @property
    def components(self):
        return list(zip(self.weights, self.means, self.stds))

    def k(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = np.zeros_like(tau)
        t2 = tau**2
        for w, lam, nu in self.components:
            out += w * np.exp(-2.0 * np.pi**2 * t2 * nu**2) * np.cos(TWO_PI * tau * lam)
        return out

    def dk(self, tau):
        tau = np.asarray(tau, dtype=float)
        t2 = tau**2
        grads = []
        for w, lam, nu in self.components:
            env = np.exp(-2.0 * np.pi**2 * t2 * nu**2)
            phase = TWO_PI * tau * lam
            term = w * env * np.cos(phase)
            grads.append(term)
            grads.append(-w * env * np.sin(phase) * TWO_PI * tau)
            grads.append(term * (-4.0 * np.pi**2 * t2 * nu**2))
        return grads

    def k_and_dk(self, tau):
        # all components at once; rows of ``grads`` follow to_vector order
        tau = np.asarray(tau, dtype=float)
        w = np.asarray(self.weights)[:, None]
        lam = np.asarray(self.means)[:, None]
        nu2 = np.square(self.stds)[:, None]
        t2 = tau * tau
        env = np.exp((-2.0 * np.pi**2) * nu2 * t2)
        phase = TWO_PI * lam * tau
        term = w * env * np.cos(phase)
        grads = np.empty((3 * self.Q, tau.size))
        grads[0::3] = term
        grads[1::3] = -w * env * np.sin(phase) * (TWO_PI * tau)
        grads[2::3] = term * ((-4.0 * np.pi**2) * nu2 * t2)
        return term.sum(axis=0), grads

    def to_vector(self):
        out = []
        for w, lam, nu in self.components:
            out += [math.log(w) if w > 0 else -np.inf, lam, math.log(nu)]
        return np.asarray(out)

    def from_vector(self, theta):
        theta = np.asarray(theta, dtype=float).reshape(-1, 3)
        w, lam, nu = np.exp(theta[:, 0]), np.abs(theta[:, 1]), np.exp(theta[:, 2])
        if not (math.isfinite(w.sum() + nu.sum()) and nu.min() > 0 and w.max() > 0):
            return SpectralMixture(weights=tuple(w), means=tuple(lam), stds=tuple(nu))  # raises
        # values built here are valid by construction, so skip re-validation
        out = object.__new__(SpectralMixture)
        object.__setattr__(out, "weights", tuple(w.tolist()))
        object.__setattr__(out, "means", tuple(lam.tolist()))
        object.__setattr__(out, "stds", tuple(nu.tolist()))
        return out

    @property
    def param_names(self):
        names = []
        for q in range(self.Q):
            names += [f"log_w{q}", f"lambda{q}", f"log_nu{q}"]
        return names

    def to_dict(self):
        return {
            "family": self.family,
            "weights": list(self.weights),
            "means": list(self.means),
            "stds": list(self.stds),
        }


KERNEL_FAMILIES = {
    cls.family: cls
    for cls in (SquaredExponential, Periodic, RationalQuadratic, Matern32, Matern52, SpectralMixture)
}


def kernel_from_dict(d: dict) -> KernelSpec:
    d = dict(d)
    cls = KERNEL_FAMILIES[d.pop("family")]
    if cls is SpectralMixture:
        return cls(weights=tuple(d["weights"]), means=tuple(d["means"]), stds=tuple(d["stds"]))
    return cls(**d)


def kernel_eval(spec: KernelSpec, t, t2) -> float:
    """Covariance ``k(t, t2)`` between two scalar times."""
    return float(spec.k(np.array([float(t) - float(t2)]))[0])


def gram_matrix(spec: KernelSpec, times, noise_var: float = 0.0, times2=None) -> np.ndarray:
    """Gram matrix with ``noise_var`` added wherever two times coincide.

    With ``times2`` given, the cross-covariance between the two sets is
    returned instead and no noise is added.
    """
    if noise_var < 0:
        raise ValueError("noise_var must be non-negative")
    if times2 is not None:
        return spec.k(lag_matrix(times, times2))
    tau = lag_matrix(times)
    K = spec.k(tau)
    if noise_var:
        K = K + noise_var * (tau == 0.0)
    return K


def gram_gradients(spec: KernelSpec, times) -> list:
    """``dK/dtheta_j`` for every entry of ``spec.to_vector()``."""
    return spec.dk(lag_matrix(times))
