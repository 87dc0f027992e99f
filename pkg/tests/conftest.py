import numpy as np
import pytest

from mortgp.kernels import (
    Matern32,
    Matern52,
    Periodic,
    RationalQuadratic,
    SpectralMixture,
    SquaredExponential,
)

FAMILIES = ["se", "periodic", "rq", "matern32", "matern52", "sm"]


def random_spec(family, rng):
    """Kernel with moderate random hyperparameters on a unit-ish time scale."""
    h = rng.uniform(0.5, 2.0)
    l = rng.uniform(0.5, 3.0)
    if family == "se":
        return SquaredExponential(h=h, l=l)
    if family == "periodic":
        return Periodic(h=h, l=l, p=rng.uniform(1.0, 5.0))
    if family == "rq":
        return RationalQuadratic(h=h, l=l, a=rng.uniform(0.3, 4.0))
    if family == "matern32":
        return Matern32(h=h, l=l)
    if family == "matern52":
        return Matern52(h=h, l=l)
    if family == "sm":
        Q = int(rng.integers(1, 4))
        return SpectralMixture(
            weights=tuple(rng.uniform(0.2, 2.0, Q)),
            means=tuple(rng.uniform(0.05, 0.5, Q)),
            stds=tuple(rng.uniform(0.05, 0.5, Q)),
        )
    raise ValueError(family)


def random_times(rng, n, spread=6.0):
    return np.sort(rng.uniform(0.0, spread, n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def record_acceptance(number, title, status, detail=""):
    line = f"[{status}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE.append((number, line))
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
