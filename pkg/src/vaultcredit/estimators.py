"""Parameter estimation from a data bundle.

Impact coefficients, oracle staleness and volatility, gas/stress
correlation, utilization dynamics, stress quantile tables, the correlated
leverage ratio and the yield split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import special

from .core import DAY, HOUR
from .errors import DataError, DomainError, InsufficientData, Undefined
from .ingest import DataBundle

Window = tuple[int, int]


def resolve_window(bundle: DataBundle, window: Window | None, days: float | None = None) -> Window:
    """Explicit window, else the trailing ``days`` ending at the last snapshot."""
    if window is not None:
        start, end = int(window[0]), int(window[1])
        if end < start:
            raise DomainError(f"window end {end} before start {start}")
        return start, end
    end = bundle.end_time
    if days is None:
        start = min([bundle.snapshots[0].time] + [int(s.times[0]) for s in bundle.oracles.values()])
        return start, end
    return end - int(days * DAY), end


def hourly_grid(start: int, end: int) -> np.ndarray:
    first = -(-start // HOUR) * HOUR
    return np.arange(first, end + 1, HOUR, dtype=np.int64)


def sample_last(times: np.ndarray, values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Last observed value at or before each grid time (NaN before the first)."""
    idx = np.searchsorted(times, grid, side="right") - 1
    out = np.full(len(grid), np.nan)
    ok = idx >= 0
    out[ok] = values[idx[ok]]
    return out


# --- P1: impact regression -----------------------------------------------


def newey_west(x: np.ndarray, resid: np.ndarray, lags: int) -> np.ndarray:
    """HAC covariance of OLS coefficients with Bartlett weights."""
    xtx_inv = np.linalg.pinv(x.T @ x)
    g = x * resid[:, None]
    s = g.T @ g
    for lag in range(1, lags + 1):
        w = 1.0 - lag / (lags + 1.0)
        c = g[lag:].T @ g[:-lag]
        s += w * (c + c.T)
    return xtx_inv @ s @ xtx_inv


def nw_lags(n: int) -> int:
    return int(math.ceil(n ** (1.0 / 3.0))) if n > 0 else 0


@dataclass(frozen=True)
class RegressionFit:
    coef: np.ndarray
    std_errors: np.ndarray
    resid: np.ndarray
    lags: int


def fit_through_origin(x: np.ndarray, y: np.ndarray) -> RegressionFit:
    """OLS without intercept and Newey-West standard errors (rows in time order)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float)
    if len(y) < x.shape[1]:
        raise InsufficientData("fewer observations than regressors", len(y), x.shape[1])
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    lags = nw_lags(len(y))
    cov = newey_west(x, resid, min(lags, len(y) - 1))
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return RegressionFit(coef, se, resid, lags)


@dataclass(frozen=True)
class ImpactObservation:
    time: int
    asset: str
    x: float  # liquidation notional over depth
    eps: float
    clr: float = 0.0


@dataclass(frozen=True)
class ImpactFit:
    lam: dict[str, float]
    std_errors: dict[str, float]
    n_obs: int
    window: Window
    beta_clr: float | None = None
    beta_clr_se: float | None = None
    pooled: tuple[str, ...] = ()
    lags: int = 0

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "std_errors": self.std_errors,
            "n_obs": self.n_obs,
            "window": list(self.window),
            "beta_clr": self.beta_clr,
            "beta_clr_se": self.beta_clr_se,
            "pooled_assets": list(self.pooled),
            "hac_lags": self.lags,
        }


def fit_impact(obs: Sequence[ImpactObservation], include_clr: bool = False, min_obs: int = 8, window: Window = (0, 0)) -> ImpactFit:
    """Per-asset impact slopes through the origin, fitted jointly.

    Assets with fewer than ``min_obs`` observations share one pooled slope
    (reported under each such asset and listed in ``pooled``).  With
    ``include_clr`` a single CLR coefficient common to all assets is added.
    """
    n = len(obs)
    if n < min_obs:
        raise InsufficientData(f"impact regression needs {min_obs} observations", n, min_obs)
    obs = sorted(obs, key=lambda o: (o.time, o.asset))
    counts: dict[str, int] = {}
    for o in obs:
        counts[o.asset] = counts.get(o.asset, 0) + 1
    own = sorted(a for a, c in counts.items() if c >= min_obs)
    thin = tuple(sorted(a for a in counts if a not in own))
    cols = own + (["__pooled__"] if thin else [])
    x = np.zeros((n, len(cols) + (1 if include_clr else 0)))
    col_of = {a: cols.index(a) if a in own else cols.index("__pooled__") for a in counts}
    y = np.empty(n)
    for i, o in enumerate(obs):
        if not math.isfinite(o.x):
            raise DataError(f"non-finite impact regressor at t={o.time} for {o.asset}")
        x[i, col_of[o.asset]] = o.x
        if include_clr:
            x[i, -1] = o.clr
        y[i] = o.eps
    fit = fit_through_origin(x, y)
    lam = {a: float(fit.coef[col_of[a]]) for a in sorted(counts)}
    se = {a: float(fit.std_errors[col_of[a]]) for a in sorted(counts)}
    beta = float(fit.coef[-1]) if include_clr else None
    beta_se = float(fit.std_errors[-1]) if include_clr else None
    return ImpactFit(lam, se, n, window, beta, beta_se, thin, fit.lags)


def impact_observations(bundle: DataBundle, window: Window, cluster_seconds: int = HOUR, clr: Mapping[int, float] | None = None) -> list[ImpactObservation]:
    """One observation per (asset, execution bucket) of completed liquidations.

    The regressor is the bucket's total seized notional over the worst
    single-venue depth at the bucket start; the response is the
    notional-weighted execution deviation in the bucket.
    """
    buckets: dict[tuple[int, str], list[float]] = {}
    for e in bundle.liquidations:
        if not e.completed or not window[0] <= e.completion_time <= window[1]:
            continue
        b = (e.completion_time // cluster_seconds) * cluster_seconds
        for a in e.seized_collateral:
            q, p, _ = e.seized_collateral[a]
            acc = buckets.setdefault((b, a), [0.0, 0.0])
            acc[0] += q * p
            acc[1] += q * p * e.deviation(a)
    out = []
    for (b, a), (notional, dev) in sorted(buckets.items()):
        if notional <= 0:
            continue
        d = bundle.depth_at(a, b)
        if d is None:
            continue
        if d <= 0:
            raise DataError(f"zero depth for {a} at t={b}")
        out.append(ImpactObservation(b, a, notional / d, dev / notional, (clr or {}).get(b, 0.0)))
    return out


def estimate_lambda(bundle: DataBundle, window: Window | None = None, include_clr: bool = False, min_obs: int = 8, window_days: float = 180.0) -> ImpactFit:
    w = resolve_window(bundle, window, window_days)
    clr_by_bucket = None
    if include_clr:
        clr_by_bucket = {}
        for e in bundle.liquidations:
            if e.completed and w[0] <= e.completion_time <= w[1]:
                b = (e.completion_time // HOUR) * HOUR
                if b not in clr_by_bucket:
                    try:
                        clr_by_bucket[b] = estimate_clr(bundle, (b - 30 * DAY, b)).value
                    except (Undefined, InsufficientData):
                        clr_by_bucket[b] = 0.0
    obs = impact_observations(bundle, w, clr=clr_by_bucket)
    return fit_impact(obs, include_clr, min_obs, w)


# --- P2: oracle latency ----------------------------------------------------


@dataclass(frozen=True)
class OracleLatency:
    asset: str
    staleness_hours: float
    sigma: float
    n_returns: int
    window: Window
    source: str
    thin: bool = False


@dataclass(frozen=True)
class OracleLatencyFit:
    staleness: dict[str, float]
    sigma: dict[str, float]
    window_hours: int
    entries: dict[str, OracleLatency] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "staleness_hours": self.staleness,
            "sigma_per_sqrt_hour": self.sigma,
            "window_hours": self.window_hours,
            "sources": {a: e.source for a, e in self.entries.items()},
            "thin_assets": sorted(a for a, e in self.entries.items() if e.thin),
        }


def hourly_vol(prices: np.ndarray) -> float:
    """Root mean square of hourly log returns (zero-mean close-to-close)."""
    r = np.diff(np.log(prices))
    if len(r) == 0:
        raise InsufficientData("need at least two prices", len(prices), 2)
    return float(math.sqrt(np.mean(r * r)))


def estimate_oracle_latency(bundle: DataBundle, asset: str, window_hours: int = 720, at: int | None = None) -> OracleLatency:
    """Staleness at window end and hourly volatility over the window.

    Volatility uses reference prices when the bundle has them, else oracle
    marks, sampled on the hourly grid.
    """
    if asset not in bundle.oracles:
        raise DataError(f"no oracle series for {asset}")
    s = bundle.oracles[asset]
    end = bundle.end_time if at is None else int(at)
    start = end - window_hours * HOUR
    upd = s.update_times
    upd = upd[upd <= end]
    staleness = (end - int(upd[-1])) / HOUR if len(upd) else float(window_hours)
    grid = hourly_grid(start, end)
    if s.has_reference:
        ok = ~np.isnan(s.reference)
        px = sample_last(s.times[ok], s.reference[ok], grid)
        source = "reference"
    else:
        px = sample_last(s.times, s.prices, grid)
        source = "oracle"
    px = px[~np.isnan(px)]
    if len(px) < 2:
        raise InsufficientData(f"latency for {asset} needs two hourly prices", len(px), 2)
    return OracleLatency(asset, max(0.0, staleness), hourly_vol(px), len(px) - 1, (start, end), source, len(px) < 48)


def estimate_oracle_latencies(bundle: DataBundle, assets: Sequence[str], window_hours: int = 720, at: int | None = None) -> OracleLatencyFit:
    entries = {a: estimate_oracle_latency(bundle, a, window_hours, at) for a in assets}
    return OracleLatencyFit({a: e.staleness_hours for a, e in entries.items()}, {a: e.sigma for a, e in entries.items()}, window_hours, entries)


def false_solvency_prob(eta_bar: float, sigma: float, staleness_hours: float) -> float:
    """Chance that a stale mark hides a move larger than the buffer."""
    if eta_bar <= 0:
        raise DomainError("eta_bar must be positive")
    if sigma < 0 or staleness_hours < 0:
        raise DomainError("sigma and staleness must be >= 0")
    scale = sigma * math.sqrt(staleness_hours)
    if scale == 0:
        return 0.0
    return float(special.ndtr(-eta_bar / scale))


# --- P3: gas under stress ---------------------------------------------------


def stress_series(bundle: DataBundle, window: Window) -> tuple[np.ndarray, np.ndarray]:
    """Hourly collateral-weighted absolute log return.

    Weights are the oracle-valued collateral shares at the latest snapshot
    before each hour.
    """
    grid = hourly_grid(*window)
    assets = bundle.collateral_assets
    if len(grid) < 2 or not assets:
        return grid[1:], np.zeros(max(len(grid) - 1, 0))
    rets = []
    vals = []
    stimes = bundle.snapshot_times
    sidx = np.searchsorted(stimes, grid[1:], side="right") - 1
    for a in assets:
        s = bundle.oracles[a]
        px = sample_last(s.times, s.prices, grid)
        rets.append(np.abs(np.diff(np.log(px))))
        qty = np.array([bundle.snapshots[i].collateral_qty.get(a, 0.0) if i >= 0 else 0.0 for i in sidx])
        vals.append(qty * px[1:])
    r = np.array(rets)
    v = np.array(vals)
    tot = v.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(tot > 0, v / np.where(tot > 0, tot, 1.0), 1.0 / len(assets))
    s = np.nansum(w * r, axis=0)
    ok = ~np.isnan(r).any(axis=0)
    return grid[1:][ok], s[ok]


def hourly_gas(bundle: DataBundle, window: Window) -> tuple[np.ndarray, np.ndarray]:
    """Mean gas price per hour bucket, keyed by the bucket's end time."""
    if not bundle.gas:
        return np.array([], dtype=np.int64), np.array([])
    t = np.array([g.time for g in bundle.gas], dtype=np.int64)
    g = np.array([p.gas_price for p in bundle.gas])
    keep = (t > window[0] - HOUR) & (t <= window[1])
    t, g = t[keep], g[keep]
    bucket = -(-t // HOUR) * HOUR
    keys, inv = np.unique(bucket, return_inverse=True)
    sums = np.bincount(inv, weights=g)
    cnt = np.bincount(inv)
    return keys, sums / cnt


def stress_conditional_corr(gas: np.ndarray, stress: np.ndarray, q: float = 0.9, min_obs: int = 30) -> tuple[float, int]:
    """Pearson correlation of gas and stress on rows with stress at or above its q-quantile."""
    gas = np.asarray(gas, dtype=float)
    stress = np.asarray(stress, dtype=float)
    if len(gas) < min_obs:
        raise InsufficientData(f"gas/stress correlation needs {min_obs} joint hours", len(gas), min_obs)
    thr = np.quantile(stress, q)
    sel = stress >= thr
    g, s = gas[sel], stress[sel]
    if len(g) < 2 or np.ptp(g) == 0 or np.ptp(s) == 0:
        raise Undefined("zero-variance conditional sample", n=int(sel.sum()))
    rho = float(np.corrcoef(g, s)[0, 1])
    return max(-1.0, min(1.0, rho)), int(sel.sum())


def estimate_gas_stress_corr(bundle: DataBundle, window: Window | None = None, stress_quantile: float = 0.9, window_days: float = 30.0) -> tuple[float, int]:
    w = resolve_window(bundle, window, window_days)
    st, s = stress_series(bundle, w)
    gt, g = hourly_gas(bundle, w)
    common, i_s, i_g = np.intersect1d(st, gt, return_indices=True)
    return stress_conditional_corr(g[i_g], s[i_s], stress_quantile)


# --- P4: utilization dynamics ----------------------------------------------


@dataclass(frozen=True)
class UtilizationFit:
    drift_per_hour: float
    sigma_per_sqrt_hour: float
    jump_times: tuple[int, ...] = ()
    jump_sizes: tuple[float, ...] = ()
    jump_rate_per_hour: float = 0.0
    n_obs: int = 0
    sigma_all: float = 0.0
    jump_sigma_mult: float = 4.0

    def to_dict(self) -> dict:
        return {
            "drift_per_hour": self.drift_per_hour,
            "sigma_per_sqrt_hour": self.sigma_per_sqrt_hour,
            "jump_rate_per_hour": self.jump_rate_per_hour,
            "n_jumps": len(self.jump_sizes),
            "mean_jump_size": float(np.mean(self.jump_sizes)) if self.jump_sizes else None,
            "n_obs": self.n_obs,
            "sigma_all_rows": self.sigma_all,
            "jump_sigma_mult": self.jump_sigma_mult,
        }


def fit_utilization_path(times: np.ndarray, u: np.ndarray, n: float = 4.0, min_obs: int = 72) -> UtilizationFit:
    """Drift/diffusion/jump split of an hourly utilization path.

    A jump is an increment deviating from the all-rows mean by more than
    n times the all-rows standard deviation.  Drift and sigma are then
    refitted on the remaining increments.
    """
    u = np.asarray(u, dtype=float)
    if len(u) < min_obs:
        raise InsufficientData(f"utilization dynamics need {min_obs} hourly observations", len(u), min_obs)
    du = np.diff(u)
    mean_all = float(du.mean())
    sd_all = float(du.std(ddof=1)) if len(du) > 1 else 0.0
    jumps = np.abs(du - mean_all) > n * sd_all
    body = du[~jumps]
    drift = float(body.mean()) if len(body) else 0.0
    sd = float(body.std(ddof=1)) if len(body) > 1 else 0.0
    return UtilizationFit(
        drift,
        sd,
        tuple(int(t) for t in np.asarray(times)[1:][jumps]),
        tuple(float(x) for x in du[jumps]),
        float(jumps.sum()) / len(du),
        len(u),
        sd_all,
        n,
    )


def fit_utilization_dynamics(bundle: DataBundle, window: Window | None = None, jump_sigma_mult: float = 4.0, window_days: float = 30.0) -> UtilizationFit:
    w = resolve_window(bundle, window, window_days)
    grid = hourly_grid(*w)
    t = bundle.snapshot_times
    u = np.array([s.borrows / s.deposits if s.deposits > 0 else 1.0 for s in bundle.snapshots])
    path = sample_last(t, u, grid)
    ok = ~np.isnan(path)
    return fit_utilization_path(grid[ok], path[ok], jump_sigma_mult)


# --- P5: scenario inputs ---------------------------------------------------


DRAWDOWN_QUANTILES = (0.5, 0.9, 0.95, 0.99)
DEPTH_QUANTILES = (0.01, 0.05, 0.1, 0.5)
GAS_QUANTILES = (0.5, 0.9, 0.95, 0.99)


def window_drawdowns(prices: np.ndarray, horizon: int) -> np.ndarray:
    """Peak-to-trough drawdown inside each full window of ``horizon`` steps."""
    p = np.asarray(prices, dtype=float)
    if len(p) <= horizon:
        return np.array([])
    from numpy.lib.stride_tricks import sliding_window_view

    win = sliding_window_view(p, horizon + 1)
    peak = np.maximum.accumulate(win, axis=1)
    return (1.0 - win / peak).max(axis=1)


@dataclass(frozen=True)
class ScenarioInputs:
    drawdown: dict[str, dict[int, dict[float, float] | None]]
    depth: dict[str, dict[float, float] | None]
    gas: dict[float, float] | None
    stress_hours: int
    worst_case: tuple[str, ...]

    def to_dict(self) -> dict:
        def q(m):
            return None if m is None else {str(k): v for k, v in m.items()}

        return {
            "drawdown": {a: {str(h): q(m) for h, m in d.items()} for a, d in self.drawdown.items()},
            "depth": {a: q(m) for a, m in self.depth.items()},
            "gas": q(self.gas),
            "stress_hours": self.stress_hours,
            "worst_case": list(self.worst_case),
        }


def scenario_inputs(
    bundle: DataBundle,
    horizons: Sequence[int] = (24,),
    stress_quantile: float = 0.9,
    window: Window | None = None,
    quantiles: Sequence[float] = DRAWDOWN_QUANTILES,
) -> ScenarioInputs:
    """Empirical stress quantile tables.

    Drawdowns are per asset and horizon (hours); depth and gas quantiles are
    taken over hours whose stress measure is at or above its
    ``stress_quantile``.  Items without data become None and are listed in
    ``worst_case``.
    """
    w = resolve_window(bundle, window)
    grid = hourly_grid(*w)
    worst = []
    dd: dict[str, dict[int, dict[float, float] | None]] = {}
    for a in bundle.collateral_assets:
        s = bundle.oracles[a]
        px = sample_last(s.times, s.prices, grid)
        px = px[~np.isnan(px)]
        dd[a] = {}
        for h in horizons:
            x = window_drawdowns(px, h)
            if len(x) == 0:
                dd[a][h] = None
                worst.append(f"drawdown:{a}:{h}h")
            else:
                dd[a][h] = {q: float(np.quantile(x, q)) for q in quantiles}
    st, s = stress_series(bundle, w)
    stressed = st[s >= np.quantile(s, stress_quantile)] if len(s) else st
    depth: dict[str, dict[float, float] | None] = {}
    for a in bundle.collateral_assets:
        vals = [bundle.depth_at(a, int(t)) for t in stressed]
        vals = [v for v in vals if v is not None]
        if not vals:
            depth[a] = None
            worst.append(f"depth:{a}")
        else:
            depth[a] = {q: float(np.quantile(vals, q)) for q in DEPTH_QUANTILES}
    gt, g = hourly_gas(bundle, w)
    gsel = g[np.isin(gt, stressed)]
    if len(gsel) == 0:
        gas = None
        worst.append("gas")
    else:
        gas = {q: float(np.quantile(gsel, q)) for q in GAS_QUANTILES}
    return ScenarioInputs(dd, depth, gas, len(stressed), tuple(worst))


# --- CLR ----------------------------------------------------------------------


@dataclass(frozen=True)
class ClrEstimate:
    value: float
    weights: dict[str, float]
    n_returns: int


def clr_from_returns(pairs: Sequence[tuple[float, np.ndarray, np.ndarray]]) -> float:
    """CLR from (weight, collateral returns, debt returns) triples."""
    num = 0.0
    den = 0.0
    for w, ra, rb in pairs:
        if w <= 0:
            continue
        ra = np.asarray(ra, dtype=float)
        rb = np.asarray(rb, dtype=float)
        num += w * float(np.var(ra - rb, ddof=1))
        den += w * float(np.var(ra, ddof=1))
    if den <= 0:
        raise Undefined("collateral return variance is zero")
    return num / den


def debt_backing_weights(bundle: DataBundle, t: int) -> dict[tuple[str, str], float]:
    """Share of vault debt backed by each (collateral, debt) pair.

    Each account's debt is split over its collateral by collateral value.
    Without positions the vault is treated as one aggregate account.
    """
    prices = bundle.prices_at(t)
    pos = bundle.positions_at(t)
    weights: dict[tuple[str, str], float] = {}
    if pos:
        books = [(p.collateral, p.debt) for p in pos]
    else:
        snap = bundle.snapshot_at(t)
        debt = bundle.debt_assets[0] if bundle.debt_assets else None
        if debt is None:
            return {}
        books = [(snap.collateral_qty, {debt: snap.borrows / prices.get(debt, 1.0)})]
    for coll, debt in books:
        cv = {a: q * prices.get(a, 0.0) for a, q in coll.items()}
        tot = sum(cv.values())
        if tot <= 0:
            continue
        for d, q in debt.items():
            dv = q * prices.get(d, 1.0)
            for a, v in cv.items():
                if v > 0:
                    weights[(a, d)] = weights.get((a, d), 0.0) + dv * v / tot
    total = sum(weights.values())
    return {k: v / total for k, v in weights.items()} if total > 0 else {}


def estimate_clr(bundle: DataBundle, window: Window | None = None, window_days: float = 30.0) -> ClrEstimate:
    w = resolve_window(bundle, window, window_days)
    weights = debt_backing_weights(bundle, w[1])
    if not weights:
        raise Undefined("no collateral/debt pairs with positive weight")
    grid = hourly_grid(*w)
    rets = {}
    for a in {x for pair in weights for x in pair}:
        s = bundle.oracles[a]
        px = sample_last(s.times, s.prices, grid)
        rets[a] = np.diff(np.log(px))
    ok = np.all([~np.isnan(r) for r in rets.values()], axis=0)
    if ok.sum() < 2:
        raise InsufficientData("CLR needs joint return history", int(ok.sum()), 2)
    pairs = [(wt, rets[a][ok], rets[d][ok]) for (a, d), wt in sorted(weights.items())]
    return ClrEstimate(clr_from_returns(pairs), {f"{a}/{d}": v for (a, d), v in sorted(weights.items())}, int(ok.sum()))


# --- P6: yield decomposition ----------------------------------------------


@dataclass(frozen=True)
class YieldDecomposition:
    organic: float
    incentive: float
    basis: float
    arb: float
    organic_ratio: float | None

    @property
    def total(self) -> float:
        return self.organic + self.incentive + self.basis + self.arb

    def to_dict(self) -> dict:
        return {"organic": self.organic, "incentive": self.incentive, "basis": self.basis,
                "arb": self.arb, "total": self.total, "organic_ratio": self.organic_ratio}


def _annualize(stream, horizon_days: float) -> float:
    if isinstance(stream, (int, float)):
        return float(stream)
    return float(np.sum(stream)) * 365.0 / horizon_days


def decompose_yield(streams: Mapping[str, float | Sequence[float]], horizon_days: float = 365.0, protocol_bound: bool = True) -> YieldDecomposition:
    """Split vault yield into organic, incentive, basis and arbitrage parts.

    A stream is either an annualized rate or a sequence of period returns
    over ``horizon_days`` (summed, then annualized).  Labels are ``rate``,
    ``emission``, ``basis`` and ``arb``.
    """
    unknown = set(streams) - {"rate", "emission", "basis", "arb"}
    if unknown:
        raise DomainError(f"unknown income streams {sorted(unknown)}")
    if horizon_days <= 0:
        raise DomainError("horizon must be positive")
    lengths = {len(v) for v in streams.values() if not isinstance(v, (int, float))}
    if len(lengths) > 1:
        raise DomainError("income streams are not time-aligned")
    part = {k: _annualize(streams[k], horizon_days) if k in streams else 0.0 for k in ("rate", "emission", "basis", "arb")}
    if protocol_bound and part["basis"] != 0.0:
        raise DataError("protocol-bound vault reports a nonzero basis stream")
    total = sum(part.values())
    ratio = part["rate"] / total if total > 0 else None
    if ratio is not None:
        ratio = min(1.0, max(0.0, ratio))
    return YieldDecomposition(part["rate"], part["emission"], part["basis"], part["arb"], ratio)
