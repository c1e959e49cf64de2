import numpy as np
import pytest

from occforecast.arima import (
    ArimaSpec,
    default_grid,
    difference,
    fit,
    fit_grid,
    forecast,
    forecast_levels,
    model_from_json,
    model_to_json,
    select,
    series_for_fit,
)
from occforecast.core import DataError, OccupancyLevel
from occforecast.ingest import ResampledSeries


def ar1(phi, n, seed, mu=0.0, burn=200):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=n + burn)
    x = np.zeros(n + burn)
    for t in range(1, n + burn):
        x[t] = phi * x[t - 1] + e[t]
    return mu + x[burn:]


def ols_ar1(y):
    """Conditional least squares for y_t = c + phi * y_{t-1} + e_t."""
    A = np.column_stack([np.ones(len(y) - 1), y[:-1]])
    (c, phi), *_ = np.linalg.lstsq(A, y[1:], rcond=None)
    return phi, c / (1 - phi)


def test_spec_invariants_and_grid():
    with pytest.raises(ValueError):
        ArimaSpec(p=4)
    with pytest.raises(ValueError):
        ArimaSpec(P=2)
    with pytest.raises(ValueError):
        ArimaSpec(3, 0, 3, 1, 0, 1)  # 9 parameters
    grid = default_grid()
    assert len(grid) == len(set(grid)) == 252
    assert all(g.n_params <= 8 and g.s == 96 for g in grid)
    assert str(ArimaSpec(1, 0, 2, 1, 1, 0)) == "(1,0,2)(1,1,0)[96]"


def test_difference_examples():
    y = np.arange(10.0) ** 2
    assert np.array_equal(difference(y, 0, 0, 4), y)
    assert difference([1, 2, 3, 4], 1, 0, 1).tolist() == [1, 1, 1]
    periodic = np.tile([3.0, 1.0, 4.0, 1.0, 5.0], 6)
    out = difference(periodic, 0, 1, 5)
    assert len(out) == 25 and not out.any()
    with pytest.raises(ValueError):
        difference([1, 2], 0, 1, 2)


def test_white_noise_constant_model():
    y = np.random.default_rng(1).normal(5.0, 2.0, 500)
    model = fit(y, ArimaSpec())
    assert model.converged and not model.flagged
    assert model.intercept == pytest.approx(y.mean(), abs=1e-6)
    assert model.css == pytest.approx(len(y) * y.var(), rel=1e-9)
    assert model.aic == pytest.approx(500 * np.log(model.css / 500) + 2 * 2)


def test_ar1_estimate_matches_least_squares():
    y = ar1(0.8, 2000, seed=11, mu=10.0)
    model = fit(y, ArimaSpec(1, 0, 0, s=96))
    phi_ls, mu_ls = ols_ar1(y)
    assert model.ar_coeffs[0] == pytest.approx(phi_ls, abs=1e-5)
    assert model.intercept == pytest.approx(mu_ls, abs=1e-4)
    assert 0.75 <= model.ar_coeffs[0] <= 0.85


def test_constant_series_is_degenerate():
    model = fit(np.full(100, 7.0), ArimaSpec(0, 1, 0))
    assert model.css == 0.0 and model.degenerate and model.flagged


def test_fit_length_precondition():
    with pytest.raises(ValueError):
        fit(np.arange(20.0), ArimaSpec(1, 0, 1, s=4))


def test_forecast_closed_forms():
    y = np.random.default_rng(2).normal(3.0, 1.0, 300)
    flat = fit(y, ArimaSpec())
    assert np.allclose(forecast(flat, 10), flat.intercept)
    series = ar1(0.6, 400, seed=3, mu=12.0)
    m = fit(series, ArimaSpec(1, 0, 0))
    h = np.arange(1, 25)
    expected = m.intercept + m.ar_coeffs[0] ** h * (series[-1] - m.intercept)
    assert np.allclose(forecast(m, 24), expected, atol=1e-10)
    walk = np.cumsum(np.random.default_rng(4).normal(size=300))
    rw = fit(walk, ArimaSpec(0, 1, 0))
    assert np.allclose(forecast(rw, 288), walk[-1])
    with pytest.raises(ValueError):
        forecast(rw, 289)


def test_mid_capacity_ar1_never_reaches_extremes():
    series = ar1(0.8, 672, seed=5, mu=12.0)
    m = fit(series, ArimaSpec(1, 0, 0))
    levels = set(forecast_levels(m, 288, 24))
    assert not levels & {OccupancyLevel.FULL, OccupancyLevel.EMPTY}


def test_differencing_then_fitting_matches_differenced_spec():
    rng = np.random.default_rng(6)
    base = np.sin(np.arange(700) * 2 * np.pi / 24) * 4
    y = base + np.cumsum(rng.normal(size=700)) * 0.3 + rng.normal(size=700)
    for spec, plain in [
        (ArimaSpec(1, 1, 1, s=24), ArimaSpec(1, 0, 1, s=24)),
        (ArimaSpec(1, 0, 0, 0, 1, 1, s=24), ArimaSpec(1, 0, 0, 0, 0, 1, s=24)),
    ]:
        direct = fit(y, spec)
        w = difference(y, spec.d, spec.D, spec.s)
        manual = fit(w, plain, include_mean=False)
        assert direct.css == pytest.approx(manual.css, abs=1e-9)


def test_nested_models_never_fit_worse():
    rng = np.random.default_rng(7)
    daily = np.tile(8 + 6 * np.sin(np.arange(96) * 2 * np.pi / 96), 7)
    y = daily + ar1(0.5, 672, seed=8)
    grid = default_grid(max_p=2, max_q=1)
    fits = {m.spec: m for m in fit_grid(y, grid)}
    checked = 0
    for spec, model in fits.items():
        for name in ("p", "q", "P", "Q"):
            if getattr(spec, name) == 0 or model.flagged:
                continue
            fields = {k: getattr(spec, k) for k in ("p", "d", "q", "P", "D", "Q", "s")}
            fields[name] -= 1
            sub = fits.get(ArimaSpec(**fields))
            if sub is None or sub.flagged:
                continue
            assert model.css <= sub.css + 1e-6, (spec, sub.spec)
            checked += 1
    assert checked > 50
    assert len({m.n_eff for m in fits.values()}) == 1
    del rng


def test_select_grid_of_one_and_determinism():
    y = np.random.default_rng(9).normal(size=300)
    only = ArimaSpec(2, 1, 1, s=96)
    assert select(y, [only]).spec == only
    grid = default_grid(s=24, max_p=1, max_q=1)
    a, b = select(y, grid), select(y, grid)
    assert a.spec == b.spec and model_to_json(a) == model_to_json(b)
    with pytest.raises(ValueError):
        select(y, [])


def test_select_raises_when_all_fits_flagged():
    with pytest.raises(DataError):
        select(np.full(200, 3.0), [ArimaSpec(0, 1, 0), ArimaSpec(1, 1, 0)])


def test_json_round_trip():
    y = ar1(0.7, 300, seed=10, mu=5.0)
    model = fit(y, ArimaSpec(1, 0, 1, s=96))
    text = model_to_json(model, {"station_id": 4})
    loaded, meta = model_from_json(text)
    assert meta == {"station_id": 4}
    assert np.array_equal(forecast(loaded, 50), forecast(model, 50))
    assert "spec: (1,0,1)(0,0,0)[96]" in model.report()
    with pytest.raises(DataError):
        model_from_json('{"format": "x"}')


def test_gap_interpolation_and_refusal():
    n = 100
    bikes = np.arange(n) % 10
    observed = np.ones(n, dtype=bool)
    observed[10:30] = False
    s = ResampledSeries(1, 0, 900 * n, bikes, 10 - bikes, observed)
    values = series_for_fit(s)
    assert np.allclose(values[10:30], np.interp(np.arange(10, 30), [9, 30], [9, 0]))
    observed[30:36] = False
    with pytest.raises(DataError, match="25%"):
        series_for_fit(ResampledSeries(1, 0, 900 * n, bikes, 10 - bikes, observed))
