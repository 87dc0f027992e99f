"""Age x year grid of demographic rates."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

KINDS = ("mortality", "fertility")
AGE_RANGES = {"mortality": (0, 100), "fertility": (15, 45)}


@dataclass(frozen=True, eq=False)
class DemographicSurface:
    """Rates on a dense age x year rectangle.

    ``values[i, j]`` is the rate (``scale="raw"``) or log rate
    (``scale="log"``) for ``ages[i]`` in ``years[j]``; ``mask`` is True where
    the cell is missing.  ``open_age`` marks an open-ended age group such as
    ``110+``.
    """

    ages: np.ndarray
    years: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    kind: str = "mortality"
    scale: str = "raw"
    open_age: int | None = None

    def __post_init__(self):
        ages = np.asarray(self.ages, dtype=int)
        years = np.asarray(self.years, dtype=int)
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if values.shape != (ages.size, years.size) or mask.shape != values.shape:
            raise ValueError(f"values/mask shape {values.shape} does not match {ages.size} ages x {years.size} years")
        if np.any(np.diff(ages) <= 0) or np.any(np.diff(years) <= 0):
            raise ValueError("ages and years must be strictly increasing")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.scale not in ("raw", "log"):
            raise ValueError("scale must be 'raw' or 'log'")
        values[mask] = np.nan
        if not np.all(np.isfinite(values[~mask])):
            raise ValueError("unmasked cells must be finite")
        for name, arr in (("ages", ages), ("years", years), ("values", values), ("mask", mask)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self):
        return self.values.shape

    def age_index(self, age: int) -> int:
        idx = np.searchsorted(self.ages, age)
        if idx >= self.ages.size or self.ages[idx] != age:
            raise KeyError(f"age {age} not in surface")
        return int(idx)

    def year_index(self, year: int) -> int:
        idx = np.searchsorted(self.years, year)
        if idx >= self.years.size or self.years[idx] != year:
            raise KeyError(f"year {year} not in surface")
        return int(idx)

    def row(self, age: int):
        """Observed ``(years, values)`` for one age, masked cells dropped."""
        i = self.age_index(age)
        keep = ~self.mask[i]
        return self.years[keep].astype(float), self.values[i, keep]

    def column(self, year: int) -> np.ndarray:
        return self.values[:, self.year_index(year)]

    def years_between(self, first: int | None = None, last: int | None = None) -> "DemographicSurface":
        lo = self.years[0] if first is None else first
        hi = self.years[-1] if last is None else last
        keep = (self.years >= lo) & (self.years <= hi)
        if not keep.any():
            raise ValueError(f"no years in [{lo}, {hi}]")
        return replace(self, years=self.years[keep], values=self.values[:, keep], mask=self.mask[:, keep])

    def select_ages(self, ages) -> "DemographicSurface":
        idx = [self.age_index(a) for a in ages]
        open_age = self.open_age if self.open_age in set(int(a) for a in ages) else None
        return replace(
            self,
            ages=self.ages[idx],
            values=self.values[idx],
            mask=self.mask[idx],
            open_age=open_age,
        )

    @property
    def complete(self) -> bool:
        return not self.mask.any()
