"""The five Level 1 risk metrics.

V1 stressed coverage, V2 volume-adjusted expected shortfall, V3 utilization
boundary hitting, V4 oracle integrity and V5 liquidation execution viability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import stats

from . import rng as rng_mod
from .core import LiquidationEvent, ParamVector, PositionRecord, VaultSnapshot
from .errors import DomainError, InfeasibleScenario, Undefined
from .estimators import false_solvency_prob

UNITS = {
    "V1": "ratio",
    "V2": "unit-of-account",
    "V3": "probability",
    "V4": "score",
    "V4a": "score",
    "V4b": "score",
    "V5": "probability",
    "V5ES": "unit-of-account",
}


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float | None
    scenario_id: str | None = None
    bounds: tuple[float, float] | None = None
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in UNITS:
            raise DomainError(f"unknown metric {self.name!r}")
        v = self.value
        if v is None:
            return
        if math.isnan(v):
            raise DomainError(f"{self.name}: NaN value; use None for undefined")
        if self.units in ("probability", "score") and not 0.0 <= v <= 1.0:
            raise DomainError(f"{self.name}={v} outside [0,1]")
        if self.name in ("V1", "V2", "V5ES") and v < 0:
            raise DomainError(f"{self.name}={v} is negative")

    @property
    def units(self) -> str:
        return UNITS[self.name]

    @property
    def defined(self) -> bool:
        return self.value is not None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "units": self.units,
            "scenario_id": self.scenario_id,
            "bounds": list(self.bounds) if self.bounds is not None else None,
            "diagnostics": dict(self.diagnostics),
        }


# --- V1 -------------------------------------------------------------------


@dataclass(frozen=True)
class V1Result:
    per_scenario: dict[str, MetricValue]
    overall: MetricValue


def v1_stressed_coverage(
    weights: Mapping[str, float],
    slippage_by_scenario: Mapping[str, Mapping[str, float]],
    acr_value: float | Mapping[str, float],
) -> V1Result:
    """Coverage after execution deviations, per scenario and worst case.

    ``acr_value`` may be a single ratio or one ratio per scenario (e.g. the
    coverage marked at the scenario's stressed prices).
    """
    if not slippage_by_scenario:
        raise DomainError("V1 needs at least one scenario")
    wsum = math.fsum(weights.values())
    if any(w < 0 for w in weights.values()) or abs(wsum - 1.0) > 1e-9:
        raise DomainError(f"collateral weights must be non-negative and sum to 1, got {wsum}")
    per = {}
    for sid in sorted(slippage_by_scenario):
        eps = slippage_by_scenario[sid]
        ratio = acr_value[sid] if isinstance(acr_value, Mapping) else acr_value
        if ratio < 0 or not math.isfinite(ratio):
            raise DomainError(f"ACR must be finite and >= 0, got {ratio}")
        ebar = 0.0
        for a, w in weights.items():
            if w == 0:
                continue
            if a not in eps:
                raise DomainError(f"scenario {sid}: no execution deviation for {a}")
            e = eps[a]
            if not 0.0 <= e < 1.0:
                raise DomainError(f"scenario {sid}: deviation {e} for {a} outside [0,1)")
            ebar += w * e
        diag = {
            "acr": ratio,
            "weighted_deviation": ebar,
            "breach_threshold": 1.0 - 1.0 / ratio if ratio > 0 else None,
            "breached": ratio * (1.0 - ebar) < 1.0,
        }
        per[sid] = MetricValue("V1", ratio * (1.0 - ebar), sid, diagnostics=diag)
    worst = min(per, key=lambda s: (per[s].value, s))
    overall = MetricValue("V1", per[worst].value, None, diagnostics={**per[worst].diagnostics, "worst_scenario": worst})
    return V1Result(per, overall)


# --- V2 -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LiquidationPaths:
    """Stressed marks, liquidation notional and depth along simulated paths.

    Arrays are (n_paths, n_assets) except ``costs`` which is (n_paths,).
    """

    assets: tuple[str, ...]
    prices: np.ndarray
    volumes: np.ndarray
    depth: np.ndarray
    costs: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.prices.shape[0]


def realized_assets(
    collateral_qty: Mapping[str, float],
    lam: Mapping[str, float],
    paths: LiquidationPaths,
    volume_scale: float = 1.0,
    gamma: float = 0.0,
    clr: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Collateral marked at impacted execution prices, less execution costs.

    Returns per-path assets and a per-path flag that is set when the linear
    impact pushed some execution price below zero (clipped to 0).
    """
    qty = np.array([collateral_qty.get(a, 0.0) for a in paths.assets])
    lam_v = np.array([lam.get(a, 0.0) for a in paths.assets]) * (1.0 + gamma * clr)
    if np.any(lam_v < 0):
        raise DomainError("impact coefficients must be >= 0")
    vol = paths.volumes * volume_scale
    if np.any((vol > 0) & (paths.depth <= 0)):
        raise InfeasibleScenario("zero depth with positive liquidation volume")
    with np.errstate(divide="ignore", invalid="ignore"):
        eps = np.where(vol > 0, lam_v * vol / np.where(paths.depth > 0, paths.depth, 1.0), 0.0)
    clipped = np.any(eps > 1.0, axis=1)
    exec_px = paths.prices * np.maximum(0.0, 1.0 - eps)
    return exec_px @ qty - paths.costs, clipped


def v2_expected_shortfall(
    liabilities: float,
    collateral_qty: Mapping[str, float],
    lam: Mapping[str, float],
    paths: LiquidationPaths,
    volume_scale: float = 1.0,
    gamma: float = 0.0,
    clr: float = 0.0,
    scenario_id: str | None = None,
) -> MetricValue:
    """Monte Carlo mean of (L - A)+ with A valued at impacted execution prices."""
    if liabilities <= 0:
        raise DomainError("liabilities must be positive")
    if paths.n_paths < 1:
        raise DomainError("need at least one path")
    assets, clipped = realized_assets(collateral_qty, lam, paths, volume_scale, gamma, clr)
    gap = np.maximum(0.0, liabilities - assets)
    mean = float(gap.mean())
    se = float(gap.std(ddof=1) / math.sqrt(len(gap))) if len(gap) > 1 else 0.0
    diag = {
        "loss_rate": min(1.0, mean / liabilities),
        "std_error": se,
        "n_paths": int(paths.n_paths),
        "shortfall_frequency": float(np.mean(gap > 0)),
        "clipped_paths": int(clipped.sum()),
        "impact_clipped": bool(clipped.any()),
    }
    return MetricValue("V2", mean, scenario_id, diagnostics=diag)


def _account_book(
    snapshot: VaultSnapshot,
    positions: Sequence[PositionRecord] | None,
    assets: tuple[str, ...],
    debt_prices: Mapping[str, float],
) -> tuple[np.ndarray, np.ndarray]:
    """Collateral matrix (accounts x assets) and oracle-valued debt per account."""
    if positions:
        coll = np.array([[p.collateral.get(a, 0.0) for a in assets] for p in positions])
        debt = np.array([sum(q * debt_prices.get(d, 1.0) for d, q in p.debt.items()) for p in positions])
        keep = debt > 0
        return coll[keep], debt[keep]
    coll = np.array([[snapshot.collateral_qty.get(a, 0.0) for a in assets]])
    return coll, np.array([snapshot.borrows])


def liquidation_paths(
    snapshot: VaultSnapshot,
    scenario,
    prices: Mapping[str, float],
    depth_state: Mapping[str, float],
    params: ParamVector,
    n_paths: int,
    seed: int,
    sigma: Mapping[str, float] | None = None,
    positions: Sequence[PositionRecord] | None = None,
    debt_prices: Mapping[str, float] | None = None,
    gas_cost_per_liquidation: float = 0.0,
    cascade: Mapping[str, float] | None = None,
    depth_vol_elasticity: float = 1.0,
    central: bool = False,
) -> LiquidationPaths:
    """Simulate stressed marks and the liquidation volume they trigger.

    Each collateral mark falls by the scenario drawdown and then diffuses
    lognormally over the horizon.  Accounts whose health factor drops below
    one are liquidated: close_factor of the debt is repaid and collateral
    worth (1+incentive) times that is sold.  Outside historical scenarios,
    depth also shrinks by the path's volatility ratio (observed historical
    depth already reflects it).  ``central`` gives the single zero-noise path.
    """
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    assets = tuple(sorted(snapshot.collateral_qty))
    k = len(assets)
    sig = np.array([(sigma or {}).get(a, 0.0) for a in assets])
    h = float(scenario.horizon_hours)
    dd = np.array([scenario.price_shock.get(a, 0.0) for a in assets])
    p0 = np.array([prices[a] for a in assets])
    if central:
        z = np.zeros((1, k))
        n_paths = 1
    else:
        z = rng_mod.stream(seed, f"v2:{scenario.id}").standard_normal((n_paths, k))
    s_h = sig * math.sqrt(h)
    drift = np.log1p(-dd) - 0.5 * s_h**2
    ret = drift + s_h * z
    px = p0 * np.exp(ret)

    base_depth = np.array([depth_state.get(a, 0.0) for a in assets])
    shock = np.array([scenario.depth_shock.get(a, 1.0) for a in assets])
    depth = np.broadcast_to(base_depth * shock, (n_paths, k)).copy()
    if scenario.kind != "historical" and depth_vol_elasticity > 0:
        # hourly realized vol of a path that moves ret over h hours, relative
        # to the calm sigma: sqrt(sigma^2 + (ret/h)^2) / sigma
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(sig > 0, np.sqrt(1.0 + (ret / (h * np.where(sig > 0, sig, 1.0))) ** 2), 1.0)
        depth = depth / ratio ** depth_vol_elasticity

    coll, debt = _account_book(snapshot, positions, assets, debt_prices or {})
    lltv = np.array([params.lltv.get(a, 0.0) for a in assets])
    value = px[:, None, :] * coll[None, :, :]
    coll_value = value.sum(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        hf = (value * lltv).sum(axis=2) / debt[None, :]
    liquidated = hf < 1.0
    repaid = params.close_factor * debt[None, :]
    seized_value = np.where(liquidated, np.minimum(coll_value, repaid * (1.0 + params.liq_incentive)), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.where(coll_value[..., None] > 0, value / coll_value[..., None], 0.0)
    volumes = (seized_value[..., None] * share).sum(axis=1)
    if cascade:
        volumes = volumes * np.array([cascade.get(a, 1.0) for a in assets])
    costs = liquidated.sum(axis=1) * gas_cost_per_liquidation
    return LiquidationPaths(assets, px, volumes, depth, costs.astype(float))


# --- V3 -------------------------------------------------------------------


def _poisson_cdf(mean: float, cap: int) -> np.ndarray | None:
    return None if mean <= 0 else stats.poisson.cdf(np.arange(cap), mean)


def _poisson_counts(u: np.ndarray, cdf: np.ndarray | None) -> np.ndarray:
    """Inverse-CDF Poisson draws, non-decreasing in the mean for fixed ``u``."""
    if cdf is None:
        return np.zeros(u.shape, dtype=np.int64)
    return np.searchsorted(cdf, u, side="left")


def _jump_total(cnt: np.ndarray, picks: np.ndarray, pool: np.ndarray) -> np.ndarray:
    out = np.zeros(len(cnt))
    idx = np.flatnonzero(cnt)
    if len(idx):
        draws = pool[np.minimum((picks[idx] * len(pool)).astype(np.int64), len(pool) - 1)]
        out[idx] = np.cumsum(draws, axis=1)[np.arange(len(idx)), cnt[idx] - 1]
    return out


def v3_boundary_hitting(
    u0: float,
    fit,
    horizon_hours: int,
    n_paths: int,
    seed: int,
    stress_overlay: float = 1.0,
    bridge: bool = True,
    scenario_id: str | None = None,
    max_jumps_per_step: int = 4,
) -> MetricValue:
    """Probability that utilization reaches 1 within the horizon.

    Hourly Euler steps of drift + diffusion with compound-Poisson jumps
    resampled from the fitted jump sizes; U reflects at 0.  The overlay
    scales the rate of upward jumps only.  All random inputs come from one
    stream keyed by ``seed`` and do not depend on ``u0`` or the overlay, so
    repeated calls share common random numbers.

    With ``bridge`` the diffusion between grid points is treated as a
    Brownian bridge, so each path contributes its exact conditional crossing
    probability instead of a grid-only 0/1 indicator.
    """
    if n_paths <= 0:
        raise DomainError("n_paths must be positive")
    if horizon_hours < 1:
        raise DomainError("horizon must be at least one step")
    if not 0.0 <= u0 <= 1.0:
        raise DomainError(f"u0={u0} outside [0,1]")
    if stress_overlay < 0:
        raise DomainError("stress overlay must be >= 0")
    diag: dict[str, Any] = {"n_paths": n_paths, "horizon_hours": horizon_hours, "u0": u0, "stress_overlay": stress_overlay}
    if u0 >= 1.0:
        return MetricValue("V3", 1.0, scenario_id, diagnostics={**diag, "std_error": 0.0})

    mu = float(fit.drift_per_hour)
    sig = float(fit.sigma_per_sqrt_hour)
    sizes = np.asarray(fit.jump_sizes, dtype=float)
    up = np.sort(sizes[sizes > 0])
    down = np.sort(sizes[sizes < 0])
    rate = float(fit.jump_rate_per_hour)
    n_jumps = max(len(sizes), 1)
    rate_up = rate * len(up) / n_jumps * stress_overlay
    rate_down = rate * len(down) / n_jumps

    cdf_up = _poisson_cdf(rate_up, max_jumps_per_step) if len(up) else None
    cdf_down = _poisson_cdf(rate_down, max_jumps_per_step) if len(down) else None
    g = rng_mod.stream(seed, "v3")
    u = np.full(n_paths, float(u0))
    survive = np.ones(n_paths)
    hit = np.zeros(n_paths, dtype=bool)
    for _ in range(horizon_hours):
        # same draws, in the same order, whatever u0 and the overlay are
        z = g.standard_normal(n_paths)
        u_up, u_down = g.random(n_paths), g.random(n_paths)
        pick_up = g.random((n_paths, max_jumps_per_step))
        pick_down = g.random((n_paths, max_jumps_per_step))
        y = u + mu + sig * z
        if bridge and sig > 0:
            gap0 = np.maximum(1.0 - u, 0.0)
            gap1 = np.maximum(1.0 - y, 0.0)
            survive *= 1.0 - np.exp(-2.0 * gap0 * gap1 / sig**2)
        hit |= y >= 1.0
        u = y + _jump_total(_poisson_counts(u_up, cdf_up), pick_up, up) + _jump_total(_poisson_counts(u_down, cdf_down), pick_down, down)
        hit |= u >= 1.0
        u = np.clip(u, 0.0, 1.0)
    prob = np.where(hit, 1.0, 1.0 - survive)
    est = float(min(1.0, max(0.0, prob.mean())))
    se = float(prob.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return MetricValue("V3", est, scenario_id, diagnostics={**diag, "std_error": se, "bridge": bridge})


# --- V4 -------------------------------------------------------------------


def nav_shortfall_floor(f_rwa: float, liabilities: float, nav_latency_days: float, downward_drift_per_day: float, price: float) -> float:
    if price <= 0:
        raise DomainError("price must be positive")
    if min(f_rwa, liabilities, nav_latency_days, downward_drift_per_day) < 0:
        raise DomainError("NAV floor inputs must be >= 0")
    return f_rwa * liabilities * nav_latency_days * downward_drift_per_day / price


def market_hours_gap(price: float, sigma_annual: float, closure_days: float) -> float:
    """Expected absolute price gap at reopening after a closure."""
    return price * sigma_annual * math.sqrt(closure_days / 365.0)


@dataclass(frozen=True)
class RwaInputs:
    f_rwa: float
    nav_latency_days: float
    drift_down_per_day: float
    price: float


@dataclass(frozen=True)
class MarketHoursInputs:
    sigma_annual: float
    closure_days: float
    price: float = 1.0


@dataclass(frozen=True)
class V4Result:
    v4a: MetricValue
    v4b: MetricValue
    v4: MetricValue
    floor_adjustments: dict[str, float]


def manipulation_score(benefit: float, cost: float) -> tuple[float, bool]:
    """Cost-to-benefit clamp; returns (score, degenerate_inputs)."""
    if benefit < 0 or cost < 0:
        raise DomainError("cost and benefit must be >= 0")
    if benefit == 0 and cost == 0:
        return 1.0, True
    if cost >= benefit:
        return 1.0, False
    return min(1.0, max(0.0, cost / benefit)), False


def v4_oracle_integrity(
    staleness_hours: float,
    sigma: float,
    eta_bar: float,
    benefit: float,
    cost: float,
    liabilities: float,
    rwa: RwaInputs | None = None,
    market_hours: MarketHoursInputs | None = None,
) -> V4Result:
    if liabilities <= 0:
        raise DomainError("liabilities must be positive")
    floors: dict[str, float] = {}
    delta = staleness_hours
    if market_hours is not None:
        delta = max(delta, market_hours.closure_days * 24.0)
        floors["market_hours_staleness_hours"] = delta
        floors["expected_open_gap"] = market_hours_gap(market_hours.price, market_hours.sigma_annual, market_hours.closure_days)
    p = false_solvency_prob(eta_bar, sigma, delta)
    v4a = 1.0 - p
    v4b, degenerate = manipulation_score(benefit, cost)
    v4 = v4a * v4b
    if rwa is not None:
        floor = nav_shortfall_floor(rwa.f_rwa, liabilities, rwa.nav_latency_days, rwa.drift_down_per_day, rwa.price)
        cap = max(0.0, 1.0 - floor / liabilities)
        floors["nav_shortfall_floor"] = floor
        floors["nav_cap"] = cap
        v4 = min(v4, cap)
    return V4Result(
        MetricValue("V4a", v4a, diagnostics={"false_solvency_prob": p, "staleness_hours": delta}),
        MetricValue("V4b", v4b, diagnostics={"degenerate_inputs": degenerate, "benefit": benefit, "cost": cost}),
        MetricValue("V4", v4, diagnostics={"v4a": v4a, "v4b": v4b}),
        floors,
    )


# --- V5 -------------------------------------------------------------------


def pi_star(cost_ratio: float, eps: float) -> float:
    """Smallest liquidation incentive that covers costs and slippage."""
    if not 0.0 <= eps < 1.0:
        raise DomainError(f"deviation {eps} outside [0,1)")
    if cost_ratio < 0:
        raise DomainError("cost ratio must be >= 0")
    return (cost_ratio + eps) / (1.0 - eps)


def event_pi_star(event: LiquidationEvent) -> float:
    repaid = event.repaid_value
    if repaid <= 0:
        raise DomainError("event has no repaid debt")
    return pi_star(event.execution_cost / repaid, min(event.mean_deviation(), 1.0 - 1e-12))


def is_viable(event: LiquidationEvent, incentive: float) -> bool:
    """Does selling (1+incentive)*repaid of collateral at the event's
    slippage cover the repayment plus gas and MEV?"""
    repaid = event.repaid_value
    eps = event.mean_deviation()
    profit = repaid * ((1.0 + incentive) * (1.0 - eps) - 1.0)
    return profit >= event.execution_cost


def viability_rate(events: Sequence[LiquidationEvent], incentive: float) -> float:
    if not events:
        raise Undefined("no liquidation triggers")
    return sum(is_viable(e, incentive) for e in events) / len(events)


def failed(event: LiquidationEvent, tau_max_hours: float) -> bool:
    return event.delay_seconds > tau_max_hours * 3600.0


@dataclass(frozen=True)
class V5Result:
    v5: MetricValue
    v5es: MetricValue
    pi_star: dict[str, float | None]
    failure_fraction: float


def v5_execution_viability(
    events: Sequence[LiquidationEvent],
    tau_max_hours: float,
    gas_corr: float | None = None,
    shortfall_given_failure: float | None = None,
    weighting: str = "debt",
) -> V5Result:
    """Share of liquidation triggers that executed within tau_max.

    ``weighting="debt"`` weights each trigger by its oracle-valued debt,
    ``"count"`` weights triggers equally.  The stall-count fraction is always
    reported in diagnostics.
    """
    if tau_max_hours <= 0:
        raise DomainError("tau_max must be positive")
    if not events:
        raise Undefined("no liquidation triggers")
    if weighting not in ("debt", "count"):
        raise DomainError(f"unknown weighting {weighting!r}")
    fails = np.array([failed(e, tau_max_hours) for e in events])
    count_frac = float(fails.mean())
    if weighting == "debt":
        w = np.array([e.repaid_value for e in events])
        frac = float((w * fails).sum() / w.sum()) if w.sum() > 0 else count_frac
    else:
        frac = count_frac
    stars = [event_pi_star(e) for e in events if e.completed and e.repaid_value > 0]
    ps: dict[str, float | None] = {"median": None, "p90": None, "n": len(stars)}
    if stars:
        ps["median"] = float(np.median(stars))
        ps["p90"] = float(np.quantile(stars, 0.9))
    diag = {
        "tau_max_hours": tau_max_hours,
        "weighting": weighting,
        "n_triggers": len(events),
        "n_failed": int(fails.sum()),
        "failure_fraction": frac,
        "stall_count_fraction": count_frac,
        "gas_stress_corr": gas_corr,
    }
    v5 = MetricValue("V5", 1.0 - frac, diagnostics=diag)
    if shortfall_given_failure is None:
        es = MetricValue("V5ES", None, diagnostics={"reason": "no conditional shortfall estimate"})
    else:
        es = MetricValue("V5ES", max(0.0, shortfall_given_failure) * frac, diagnostics={"shortfall_given_failure": shortfall_given_failure})
    return V5Result(v5, es, ps, frac)
