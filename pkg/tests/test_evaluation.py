import math

import numpy as np
import pytest

from mortgp.baselines import fit_lee_carter, forecast_lc, lc_forecaster
from mortgp.errors import ShapeError, WindowOverrun
from mortgp.evaluation import default_first_train_end, rmse_curve, rolling_window_evaluate
from mortgp.surface import DemographicSurface
from mortgp.synthetic import lee_carter_surface


def _surface(first=1947, last=2016, m=6, seed=0):
    rng = np.random.default_rng(seed)
    years = np.arange(first, last + 1)
    ages = np.arange(m)
    a = np.linspace(-6, -2, m)
    b = np.full(m, 1.0 / m)
    k = np.cumsum(rng.normal(-1.0, 1.0, years.size))
    return lee_carter_surface(ages, years, a, b, k - k.mean(), noise_sd=0.05, seed=seed + 1)


def _perfect(surface):
    return lambda train, targets: np.column_stack([surface.column(y) for y in targets])


def _biased(surface, bias):
    return lambda train, targets: np.column_stack([surface.column(y) + bias for y in targets])


class TestRmseCurve:
    def test_zero(self):
        v = np.linspace(-8, -1, 101)
        assert rmse_curve(v, v) == 0.0

    def test_constant_error(self):
        v = np.linspace(-8, -1, 101)
        assert rmse_curve(v + 0.1, v) == pytest.approx(0.1, rel=1e-12)

    def test_brute_force(self):
        rng = np.random.default_rng(0)
        p, a = rng.normal(size=31), rng.normal(size=31)
        total = 0.0
        for x, y in zip(p, a):
            total += (x - y) ** 2
        assert rmse_curve(p, a, ages=range(15, 46)) == pytest.approx(math.sqrt(total / 31), rel=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            rmse_curve(np.zeros(3), np.zeros(4))
        with pytest.raises(ShapeError):
            rmse_curve(np.zeros(3), np.zeros(3), ages=[0, 1])

    def test_missing_actual_skipped(self):
        assert rmse_curve([1.0, 5.0], [1.5, np.nan]) == pytest.approx(0.5)


class TestRollingWindow:
    def test_default_first_train_end(self):
        assert default_first_train_end(2016, (5, 10, 15, 20), 10) == 1987
        s = _surface()
        r = rolling_window_evaluate(s, {"p": _perfect(s)})
        assert r.first_train_end == 1987

    def test_perfect_model(self):
        s = _surface()
        r = rolling_window_evaluate(s, {"perfect": _perfect(s)})
        assert [row.h for row in r.rows] == [5, 10, 15, 20]
        assert all(row.rmse == 0.0 and row.windows == 10 for row in r.rows)

    def test_constant_bias(self):
        s = _surface()
        r = rolling_window_evaluate(s, {"biased": _biased(s, 0.2)})
        for row in r.rows:
            assert row.rmse == pytest.approx(0.2, rel=1e-12)
            np.testing.assert_allclose(row.per_window, 0.2, rtol=1e-12)

    def test_pooling_identity(self):
        s = _surface(seed=4)
        r = rolling_window_evaluate(s, {"lc": lc_forecaster()}, horizons=(5, 10), window_count=10)
        for row in r.rows:
            assert row.cells == 10 * 6
            lhs = row.rmse**2 * row.windows * s.ages.size
            assert lhs == pytest.approx(row.sse, rel=1e-12)

    def test_pooled_not_mean_of_windows(self):
        s = _surface(seed=2)
        row = rolling_window_evaluate(s, {"lc": lc_forecaster()}, horizons=(10,)).rows[0]
        assert row.rmse == pytest.approx(math.sqrt(np.mean(np.square(row.per_window))), rel=1e-12)

    def test_matches_scripted_loop(self):
        s = _surface(seed=5)
        r = rolling_window_evaluate(s, {"lc": lc_forecaster()}, horizons=(5,), window_count=10, t_m=1990)
        sq = []
        for w in range(10):
            end = 1990 + w
            keep = s.years <= end
            train = DemographicSurface(s.ages, s.years[keep], s.values[:, keep], s.mask[:, keep], scale="log")
            fc = forecast_lc(fit_lee_carter(train), 5)
            sq.extend((fc.mean - s.values[:, s.years == end + 5][:, 0]) ** 2)
        assert r.rows[0].rmse == pytest.approx(math.sqrt(np.mean(sq)), rel=1e-10)

    def test_training_windows_nested(self):
        s = _surface()
        seen = []

        def spy(train, targets):
            seen.append((set(train.years.tolist()), list(targets)))
            return np.zeros((train.ages.size, len(targets)))

        rolling_window_evaluate(s, {"spy": spy}, horizons=(5, 20), window_count=10)
        for (a, ta), (b, tb) in zip(seen, seen[1:]):
            assert a < b
            assert max(b) == max(a) + 1
        assert seen[0][1] == [1992, 2007]
        assert seen[-1][1] == [2001, 2016]

    def test_overrun(self):
        s = _surface()
        with pytest.raises(WindowOverrun):
            rolling_window_evaluate(s, {"p": _perfect(s)}, horizons=(20,), window_count=10, t_m=1988)
        with pytest.raises(WindowOverrun):
            rolling_window_evaluate(_surface(1990, 2016), {"p": _perfect(s)}, window_count=10)

    def test_deterministic(self):
        s = _surface(seed=8)
        r1 = rolling_window_evaluate(s, {"lc": lc_forecaster()}, horizons=(5, 10))
        r2 = rolling_window_evaluate(s, {"lc": lc_forecaster()}, horizons=(5, 10))
        assert r1.to_csv() == r2.to_csv()

    def test_masked_target_cells_excluded(self):
        s = _surface()
        mask = s.mask.copy()
        mask[2, s.year_index(2010)] = True
        sm = DemographicSurface(s.ages, s.years, s.values, mask, scale="log")
        r = rolling_window_evaluate(sm, {"b": _biased(s, 0.3)}, horizons=(5,), window_count=10)
        assert r.rows[0].cells == 10 * 6 - 1
        assert r.rows[0].rmse == pytest.approx(0.3)

    def test_bad_model_shape(self):
        s = _surface()
        with pytest.raises(ShapeError):
            rolling_window_evaluate(s, {"bad": lambda tr, tg: np.zeros(3)}, horizons=(5,))


class TestReport:
    def test_csv_and_table(self):
        s = _surface()
        r = rolling_window_evaluate(s, {"lc": lc_forecaster(), "perfect": _perfect(s)}, horizons=(5, 10), dataset="JPN")
        lines = r.to_csv().splitlines()
        assert lines[0] == "dataset,model,h,rmse,windows"
        assert len(lines) == 5
        assert lines[1].startswith("JPN,lc,5,")
        table = r.to_table()
        assert "h = 5" in table and "h = 10" in table
        assert "LC" in table and "PERFECT" in table
        perfect_line = [ln for ln in table.splitlines() if ln.startswith("JPN")][0]
        assert perfect_line.split()[-1] == "0.0000"
        assert len(r.per_window_csv().splitlines()) == 1 + 4 * 10
