"""Seasonal ARIMA baseline fitted by conditional sum of squares (CSS).

Model, with ``w`` the series after ``(1-B)^d (1-B^s)^D`` differencing::

    phi(B) Phi(B^s) (w_t - mu) = theta(B) Theta(B^s) e_t

CSS conditions on the first ``p + s*P`` differenced values and on zero
pre-sample shocks. Coefficients are found with a Nelder-Mead simplex started
at 0.1 for every coefficient and at the mean of ``w`` for ``mu``; stationarity
and invertibility are encouraged by a squared-hinge penalty on characteristic
root moduli below ``1 + ROOT_MARGIN``.

Only undifferenced specs estimate ``mu``; differenced ones fix it at zero.
AIC is ``n_eff * ln(css / n_eff) + 2k`` where ``k`` counts the estimated
coefficients, the intercept when present, and the innovation variance.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numba
import numpy as np

from .core import DataError, OccupancyLevel, classify_count
from .ingest import ResampledSeries

ROOT_MARGIN = 1e-3
PENALTY_WEIGHT = 1e4
SIMPLEX_TOL = 1e-8
MAX_ITER = 2000
MAX_GAP_FRACTION = 0.25
DAY_STEPS = 96


@dataclass(frozen=True, order=True)
class ArimaSpec:
    p: int = 0
    d: int = 0
    q: int = 0
    P: int = 0
    D: int = 0
    Q: int = 0
    s: int = DAY_STEPS

    def __post_init__(self) -> None:
        if not (0 <= self.p <= 3 and 0 <= self.q <= 3):
            raise ValueError("p and q must be in 0..3")
        if not (0 <= self.d <= 1 and 0 <= self.D <= 1):
            raise ValueError("d and D must be 0 or 1")
        if not (0 <= self.P <= 1 and 0 <= self.Q <= 1):
            raise ValueError("P and Q must be 0 or 1")
        if self.s < 1:
            raise ValueError("seasonal period must be >= 1")
        if self.n_params > 8:
            raise ValueError("at most 8 parameters (including the intercept)")

    @property
    def n_coeffs(self) -> int:
        return self.p + self.q + self.P + self.Q

    @property
    def n_params(self) -> int:
        """Coefficients plus the intercept."""
        return self.n_coeffs + 1

    @property
    def is_seasonal(self) -> bool:
        return self.D == 1 or self.P >= 1 or self.Q >= 1

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q})[{self.s}]"


def default_grid(
    s: int = DAY_STEPS, max_p: int = 3, max_q: int = 3, max_d: int = 1, seasonal: bool = True
) -> list[ArimaSpec]:
    """p in 0..max_p, q in 0..max_q, d in 0..max_d, P, D, Q in {0,1}.

    Specs over the 8-parameter limit are dropped; the result is sorted.
    """
    sea = (0, 1) if seasonal else (0,)
    specs = []
    for p, d, q, P, D, Q in itertools.product(
        range(max_p + 1), range(max_d + 1), range(max_q + 1), sea, sea, sea
    ):
        if p + q + P + Q + 1 <= 8:
            specs.append(ArimaSpec(p, d, q, P, D, Q, s))
    return sorted(specs)


@dataclass(frozen=True, eq=False)
class ArimaModel:
    spec: ArimaSpec
    ar_coeffs: np.ndarray
    ma_coeffs: np.ndarray
    seasonal_ar: np.ndarray
    seasonal_ma: np.ndarray
    intercept: float
    sigma2: float
    css: float
    n_obs: int
    n_eff: int
    aic: float
    converged: bool
    degenerate: bool = False
    iterations: int = 0
    history: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    skip: int = 0
    include_mean: bool = True

    @property
    def flagged(self) -> bool:
        return not self.converged or self.degenerate

    def report(self) -> str:
        fmt = lambda a: "[" + ", ".join(f"{v:.6f}" for v in a) + "]"  # noqa: E731
        lines = [
            f"spec: {self.spec}",
            f"ar: {fmt(self.ar_coeffs)}",
            f"ma: {fmt(self.ma_coeffs)}",
            f"seasonal_ar: {fmt(self.seasonal_ar)}",
            f"seasonal_ma: {fmt(self.seasonal_ma)}",
            f"intercept: {self.intercept:.6f}" + ("" if self.include_mean else " (fixed)"),
            f"sigma2: {self.sigma2:.6f}",
            f"css: {self.css:.6f}",
            f"n_obs: {self.n_obs}",
            f"n_eff: {self.n_eff}",
            f"aic: {self.aic:.6f}",
            f"converged: {str(self.converged).lower()}",
            f"degenerate: {str(self.degenerate).lower()}",
            f"iterations: {self.iterations}",
        ]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- differencing


def _difference_poly(d: int, D: int, s: int) -> np.ndarray:
    poly = np.array([1.0])
    for _ in range(d):
        poly = np.convolve(poly, [1.0, -1.0])
    for _ in range(D):
        seasonal = np.zeros(s + 1)
        seasonal[0], seasonal[s] = 1.0, -1.0
        poly = np.convolve(poly, seasonal)
    return poly


def difference(series: Sequence[float], d: int, D: int, s: int) -> np.ndarray:
    """Apply ``(1-B)^d (1-B^s)^D``; output is ``d + D*s`` shorter."""
    y = np.asarray(series, dtype=float)
    if len(y) <= d + D * s:
        raise ValueError(f"series of length {len(y)} too short to difference (d={d}, D={D}, s={s})")
    for _ in range(d):
        y = y[1:] - y[:-1]
    for _ in range(D):
        y = y[s:] - y[:-s]
    return y


# ---------------------------------------------------------------- objective


@numba.njit(cache=True)
def _lag_polys(params, p, q, P, Q, s):
    """Dense AR and MA lag polynomials (index = lag, entry 0 is 1)."""
    phi = params[1 : 1 + p]
    theta = params[1 + p : 1 + p + q]
    ar = np.zeros(p + s * P + 1)
    ar[0] = 1.0
    for i in range(p):
        ar[i + 1] = -phi[i]
    if P == 1:
        big = params[1 + p + q]
        for i in range(p + 1):
            ar[i + s] -= big * ar[i]
    ma = np.zeros(q + s * Q + 1)
    ma[0] = 1.0
    for i in range(q):
        ma[i + 1] = theta[i]
    if Q == 1:
        big = params[1 + p + q + P]
        for i in range(q + 1):
            ma[i + s] += big * ma[i]
    return ar, ma


@numba.njit(cache=True)
def _residuals(params, w, p, q, P, Q, s, skip):
    ar, ma = _lag_polys(params, p, q, P, Q, s)
    mu = params[0]
    ncond = p + s * P + skip
    n = w.shape[0] - ncond
    e = np.zeros(n)
    ar_lags = np.nonzero(ar)[0]
    ma_lags = np.nonzero(ma)[0]
    for t in range(n):
        tt = t + ncond
        acc = 0.0
        for k in ar_lags:
            acc += ar[k] * (w[tt - k] - mu)
        for k in ma_lags:
            if k > 0 and t - k >= 0:
                acc -= ma[k] * e[t - k]
        e[t] = acc
    return e


@numba.njit(cache=True)
def _root_penalty(coeffs, sign):
    """Squared hinge on moduli of the roots of 1 + sign*c1 z + ... (must lie outside the unit circle)."""
    m = coeffs.shape[0]
    if m == 0:
        return 0.0
    # np.roots wants highest power first: sign*c_m z^m + ... + sign*c_1 z + 1
    poly = np.empty(m + 1)
    for i in range(m):
        poly[i] = sign * coeffs[m - 1 - i]
    poly[m] = 1.0
    lead = 0
    while lead < m and poly[lead] == 0.0:
        lead += 1
    if lead == m:
        return 0.0
    degree = m - lead
    roots = np.empty(degree, np.complex128)
    if degree == 1:
        roots[0] = -1.0 / poly[lead]
    elif degree == 2:
        a, b = poly[lead], poly[lead + 1]
        root = np.sqrt(complex(b * b - 4.0 * a))
        roots[0] = (-b + root) / (2.0 * a)
        roots[1] = (-b - root) / (2.0 * a)
    else:
        # complex input: numba's real eigvals refuses polynomials with complex roots
        roots = np.roots(poly[lead:].astype(np.complex128))
    pen = 0.0
    for r in roots:
        gap = 1.0 + ROOT_MARGIN - abs(r)
        if gap > 0:
            pen += gap * gap
    return pen


@numba.njit(cache=True)
def _objective(params, w, p, q, P, Q, s, skip):
    e = _residuals(params, w, p, q, P, Q, s, skip)
    css = 0.0
    for v in e:
        css += v * v
    pen = _root_penalty(params[1 : 1 + p], -1.0)
    pen += _root_penalty(params[1 + p : 1 + p + q], 1.0)
    if P == 1:
        gap = abs(params[1 + p + q]) - 1.0 + ROOT_MARGIN
        if gap > 0:
            pen += gap * gap
    if Q == 1:
        gap = abs(params[1 + p + q + P]) - 1.0 + ROOT_MARGIN
        if gap > 0:
            pen += gap * gap
    return css * (1.0 + PENALTY_WEIGHT * pen) + PENALTY_WEIGHT * pen


@numba.njit(cache=True)
def _diameter(sim):
    k = sim.shape[0]
    best = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            for c in range(sim.shape[1]):
                v = abs(sim[i, c] - sim[j, c])
                if v > best:
                    best = v
    return best


@numba.njit(cache=True)
def nelder_mead(f, x0, args, tol, max_iter):
    """Nelder-Mead simplex (reflection 1, expansion 2, contraction 0.5, shrink 0.5).

    The start simplex perturbs each coordinate by 5% (0.00025 when zero).
    Converges when the largest coordinate difference between any two vertices
    drops below ``tol``. Returns ``(x, f(x), iterations, converged)``.
    """
    n = x0.shape[0]
    sim = np.empty((n + 1, n))
    fs = np.empty(n + 1)
    sim[0] = x0
    for i in range(n):
        v = x0.copy()
        v[i] = v[i] * 1.05 if v[i] != 0.0 else 0.00025
        sim[i + 1] = v
    for i in range(n + 1):
        fs[i] = f(sim[i], args)
    it = 0
    converged = False
    while it < max_iter:
        order = np.argsort(fs, kind="mergesort")
        sim = sim[order]
        fs = fs[order]
        if _diameter(sim) < tol:
            converged = True
            break
        it += 1
        centroid = np.zeros(n)
        for i in range(n):
            centroid += sim[i]
        centroid /= n
        xr = centroid + (centroid - sim[n])
        fr = f(xr, args)
        if fr < fs[0]:
            xe = centroid + 2.0 * (centroid - sim[n])
            fe = f(xe, args)
            if fe < fr:
                sim[n] = xe
                fs[n] = fe
            else:
                sim[n] = xr
                fs[n] = fr
            continue
        if fr < fs[n - 1]:
            sim[n] = xr
            fs[n] = fr
            continue
        if fr < fs[n]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = f(xc, args)
            if fc <= fr:
                sim[n] = xc
                fs[n] = fc
                continue
        else:
            xc = centroid + 0.5 * (sim[n] - centroid)
            fc = f(xc, args)
            if fc < fs[n]:
                sim[n] = xc
                fs[n] = fc
                continue
        for i in range(1, n + 1):
            sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
            fs[i] = f(sim[i], args)
    order = np.argsort(fs, kind="mergesort")
    return sim[order[0]].copy(), fs[order[0]], it, converged


@numba.njit(cache=True)
def _css_target(x, args):
    w, p, q, P, Q, s, skip, with_mean = args
    if with_mean:
        return _objective(x, w, p, q, P, Q, s, skip)
    return _objective(np.concatenate((np.zeros(1), x)), w, p, q, P, Q, s, skip)


# ---------------------------------------------------------------- fitting


def conditioning(spec: ArimaSpec) -> int:
    """Leading raw observations consumed before the first residual."""
    return spec.d + spec.D * spec.s + spec.p + spec.P * spec.s


def fit(
    series: Sequence[float],
    spec: ArimaSpec,
    *,
    skip: int = 0,
    start: Optional[np.ndarray] = None,
    include_mean: Optional[bool] = None,
) -> ArimaModel:
    """CSS fit of ``spec`` to a gap-free series.

    ``skip`` conditions on that many further leading observations (the
    residual recursion starts later), so candidates with different orders
    can be scored on the same sample.
    ``start`` overrides the default simplex origin; its layout is
    ``[intercept, ar..., ma..., seasonal_ar, seasonal_ma]``.

    The intercept is estimated only for undifferenced specs unless
    ``include_mean`` says otherwise; on a differenced series it would act as
    a drift that carries long forecasts into the capacity bounds.
    """
    y = np.asarray(series, dtype=float)
    if np.any(~np.isfinite(y)):
        raise ValueError("series contains non-finite values; interpolate gaps first")
    if len(y) < 10 * spec.n_params:
        raise ValueError(f"series of length {len(y)} shorter than 10 x {spec.n_params} parameters")
    w = difference(y, spec.d, spec.D, spec.s)
    ncond = spec.p + spec.s * spec.P
    n_eff = len(w) - ncond - skip
    if skip < 0:
        raise ValueError("skip must be non-negative")
    if n_eff <= spec.n_params + 1:
        raise ValueError("too few observations after differencing and conditioning")
    p, q, P, Q, s = spec.p, spec.q, spec.P, spec.Q, spec.s
    with_mean = (spec.d + spec.D == 0) if include_mean is None else bool(include_mean)
    x0 = np.concatenate([[w.mean() if with_mean else 0.0], np.full(spec.n_coeffs, 0.1)])
    if start is not None:
        x0 = np.asarray(start, dtype=float)
        if x0.shape != (spec.n_params,):
            raise ValueError(f"start must have {spec.n_params} entries")
    if not with_mean:
        x0[0] = 0.0
    if np.ptp(w) == 0.0:
        x = np.concatenate([[w[0] if with_mean else 0.0], np.zeros(spec.n_coeffs)])
        e = _residuals(x, np.ascontiguousarray(w), p, q, P, Q, s, skip)
        css = float(e @ e)
        return _model(spec, x, css, len(y), n_eff, True, True, 0, y, skip, with_mean)
    args = (np.ascontiguousarray(w), p, q, P, Q, s, skip, with_mean)
    origin = x0 if with_mean else x0[1:]
    x, _, iters, converged = nelder_mead(_css_target, origin, args, SIMPLEX_TOL, MAX_ITER)
    if not with_mean:
        x = np.concatenate([[0.0], x])
    e = _residuals(x, args[0], p, q, P, Q, s, skip)
    css = float(e @ e)
    return _model(
        spec, x, css, len(y), n_eff, bool(converged), css == 0.0, int(iters), y, skip, with_mean
    )


def _model(
    spec, x, css, n_obs, n_eff, converged, degenerate, iters, history, skip, with_mean
) -> ArimaModel:
    p, q, P = spec.p, spec.q, spec.P
    k = spec.n_coeffs + int(with_mean) + 1
    aic = n_eff * math.log(css / n_eff) + 2 * k if css > 0 else -math.inf
    return ArimaModel(
        spec=spec,
        ar_coeffs=x[1 : 1 + p].copy(),
        ma_coeffs=x[1 + p : 1 + p + q].copy(),
        seasonal_ar=x[1 + p + q : 1 + p + q + P].copy(),
        seasonal_ma=x[1 + p + q + P :].copy(),
        intercept=float(x[0]),
        sigma2=css / n_eff,
        css=css,
        n_obs=n_obs,
        n_eff=n_eff,
        aic=aic,
        converged=converged,
        degenerate=degenerate,
        iterations=iters,
        history=np.asarray(history, dtype=float).copy(),
        skip=skip,
        include_mean=with_mean,
    )


def _params(model: ArimaModel) -> np.ndarray:
    return np.concatenate(
        [[model.intercept], model.ar_coeffs, model.ma_coeffs, model.seasonal_ar, model.seasonal_ma]
    )


def fit_grid(series: Sequence[float], grid: Iterable[ArimaSpec], *, common_sample: bool = True) -> list[ArimaModel]:
    """Fit every spec; unfittable specs are dropped.

    With ``common_sample`` every fit sums residuals over the same trailing
    observations (those after the largest conditioning in the grid), which
    keeps AIC values comparable across orders.
    """
    grid = list(grid)
    lead = max((conditioning(g) for g in grid), default=0)
    out = []
    for spec in grid:
        skip = lead - conditioning(spec) if common_sample else 0
        try:
            out.append(fit(series, spec, skip=skip))
        except ValueError:
            continue
    return _repair_nested(series, out, lead if common_sample else None)


def _sub_specs(spec: ArimaSpec):
    """Specs with one fewer coefficient, paired with the slot to re-insert."""
    slots = {"p": 1 + spec.p - 1, "q": 1 + spec.p + spec.q - 1,
             "P": 1 + spec.p + spec.q, "Q": 1 + spec.p + spec.q + spec.P}
    for name, slot in slots.items():
        if getattr(spec, name) > 0:
            fields = dict(p=spec.p, d=spec.d, q=spec.q, P=spec.P, D=spec.D, Q=spec.Q, s=spec.s)
            fields[name] -= 1
            yield ArimaSpec(**fields), slot


def _repair_nested(series, fits: list[ArimaModel], lead: Optional[int]) -> list[ArimaModel]:
    """Re-fit any model that lands above a nested sub-model's css.

    The simplex can stall in a poorer basin than the smaller model it
    contains. Such fits are restarted from the sub-model's optimum with the
    extra coefficient at zero, and the better of the two results is kept.
    Only meaningful when nested pairs share a residual sample.
    """
    if lead is None:
        return fits
    by_spec = {m.spec: m for m in fits}
    for spec in sorted(by_spec, key=lambda g: (g.n_coeffs, g)):
        for sub, slot in _sub_specs(spec):
            small = by_spec.get(sub)
            model = by_spec[spec]
            if small is None or small.flagged or model.css <= small.css + 1e-9 and not model.flagged:
                continue
            start = np.insert(_params(small), slot, 0.0)
            try:
                retry = fit(series, spec, skip=lead - conditioning(spec), start=start)
            # sub and super share d and D, hence the same mean handling
            except ValueError:
                continue
            if model.flagged or (not retry.flagged and retry.css < model.css):
                by_spec[spec] = retry
    return [by_spec[m.spec] for m in fits]


def select(series: Sequence[float], grid: Optional[Sequence[ArimaSpec]] = None) -> ArimaModel:
    """Minimum-AIC converged fit; ties go to fewer parameters, then spec order."""
    grid = default_grid() if grid is None else list(grid)
    if not grid:
        raise ValueError("empty grid")
    if len(grid) == 1:
        return fit(series, grid[0])
    fits = fit_grid(series, grid)
    usable = [m for m in fits if not m.flagged]
    if not usable:
        raise DataError("every candidate ARIMA fit was flagged (non-converged or degenerate)")
    return min(usable, key=lambda m: (m.aic, m.spec.n_params, m.spec))


# ---------------------------------------------------------------- forecasting


def forecast(model: ArimaModel, steps: int) -> np.ndarray:
    """Recursive point forecasts (future shocks zero), integrated back to levels."""
    if not 0 <= steps <= 288:
        raise ValueError("steps must be in 0..288 (72 h of 15-minute steps)")
    spec = model.spec
    y = model.history
    w = difference(y, spec.d, spec.D, spec.s)
    params = _params(model)
    ar, ma = _lag_polys(params, spec.p, spec.q, spec.P, spec.Q, spec.s)
    mu = model.intercept
    ncond = spec.p + spec.s * spec.P + model.skip
    e_hist = _residuals(
        params, np.ascontiguousarray(w), spec.p, spec.q, spec.P, spec.Q, spec.s, model.skip
    )
    x = list(w - mu)
    e = [0.0] * ncond + list(e_hist)
    for _ in range(steps):
        t = len(x)
        value = 0.0
        for k in range(1, len(ar)):
            if ar[k] != 0.0 and t - k >= 0:
                value -= ar[k] * x[t - k]
        for k in range(1, len(ma)):
            if ma[k] != 0.0 and t - k >= 0:
                value += ma[k] * e[t - k]
        x.append(value)
        e.append(0.0)
    w_future = np.asarray(x[len(w):]) + mu
    delta = _difference_poly(spec.d, spec.D, spec.s)
    levels = list(y)
    for value in w_future:
        t = len(levels)
        total = value
        for k in range(1, len(delta)):
            if delta[k] != 0.0:
                total -= delta[k] * levels[t - k]
        levels.append(total)
    return np.asarray(levels[len(y):])


def forecast_levels(model: ArimaModel, steps: int, capacity: int) -> list[OccupancyLevel]:
    return [classify_count(v, capacity) for v in forecast(model, steps)]


def series_for_fit(series: ResampledSeries) -> np.ndarray:
    """Bike counts with unobserved cells linearly interpolated.

    Raises DataError when more than 25% of the window is missing.
    """
    obs = series.observed
    if len(obs) == 0 or obs.mean() < 1.0 - MAX_GAP_FRACTION:
        missing = 1.0 if len(obs) == 0 else 1.0 - obs.mean()
        raise DataError(f"{missing:.0%} of the fit window unobserved (limit 25%)")
    t = np.arange(len(obs))
    return np.interp(t, t[obs], series.bikes[obs].astype(float))


# ---------------------------------------------------------------- persistence

MODEL_FORMAT = "occforecast-arima"
MODEL_VERSION = 1


def model_to_json(model: ArimaModel, meta: Optional[dict] = None) -> str:
    spec = model.spec
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "spec": {k: getattr(spec, k) for k in ("p", "d", "q", "P", "D", "Q", "s")},
        "ar": model.ar_coeffs.tolist(),
        "ma": model.ma_coeffs.tolist(),
        "seasonal_ar": model.seasonal_ar.tolist(),
        "seasonal_ma": model.seasonal_ma.tolist(),
        "intercept": model.intercept,
        "sigma2": model.sigma2,
        "css": model.css,
        "n_obs": model.n_obs,
        "n_eff": model.n_eff,
        "aic": model.aic if math.isfinite(model.aic) else None,
        "converged": model.converged,
        "degenerate": model.degenerate,
        "iterations": model.iterations,
        "skip": model.skip,
        "include_mean": model.include_mean,
        "history": model.history.tolist(),
        "meta": dict(meta or {}),
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def model_from_json(text: str) -> tuple[ArimaModel, dict]:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise DataError("not an ARIMA model file")
    if doc.get("version") != MODEL_VERSION:
        raise DataError(f"unsupported ARIMA model version {doc.get('version')!r}")
    arr = lambda k: np.asarray(doc[k], dtype=float)  # noqa: E731
    model = ArimaModel(
        spec=ArimaSpec(**doc["spec"]),
        ar_coeffs=arr("ar"),
        ma_coeffs=arr("ma"),
        seasonal_ar=arr("seasonal_ar"),
        seasonal_ma=arr("seasonal_ma"),
        intercept=float(doc["intercept"]),
        sigma2=float(doc["sigma2"]),
        css=float(doc["css"]),
        n_obs=int(doc["n_obs"]),
        n_eff=int(doc["n_eff"]),
        aic=-math.inf if doc["aic"] is None else float(doc["aic"]),
        converged=bool(doc["converged"]),
        degenerate=bool(doc["degenerate"]),
        iterations=int(doc["iterations"]),
        history=arr("history"),
        skip=int(doc["skip"]),
        include_mean=bool(doc["include_mean"]),
    )
    return model, doc["meta"]
