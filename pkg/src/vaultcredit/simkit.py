"""Synthetic vault worlds and independent brute-force oracles.

``generate`` runs an hourly world: GBM collateral prices with jumps and
planted crashes, a heartbeat/deviation oracle, pool depth that thins with
realized volatility, stress-coupled gas, a borrower book, a liquidator who
executes only when profitable, and depositors who run when coverage drops.
The data it emits is a normal :class:`DataBundle`; everything the engine is
not supposed to see (true prices, oracle errors, which triggers were viable)
goes into a separate truth record.

The scoring path never imports this module.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy import special

from . import rng as rng_mod
from .core import (
    HOUR,
    AssetId,
    AssetKind,
    DepthSnapshot,
    GasPoint,
    LiquidationEvent,
    OracleSeries,
    ParamVector,
    PositionRecord,
    VaultSnapshot,
)
from .errors import ConfigError
from .estimators import ImpactObservation
from .ingest import DataBundle, RehypoMeta, write_bundle

T0 = 1704067200  # 2024-01-01T00:00:00Z


@dataclass(frozen=True)
class AssetConfig:
    symbol: str
    kind: str = "crypto"
    price0: float = 100.0
    drift: float = 0.0  # log drift per hour
    vol: float = 0.01  # per sqrt hour
    jump_rate: float = 0.0  # per hour
    jump_mean: float = 0.0  # mean log jump
    jump_std: float = 0.0
    impact_lambda: float = 0.3
    depth: float = 4e6
    depth_vol_elasticity: float = 1.0
    ltv0: float = 0.75
    lltv: float = 0.85
    hd: int = 1
    per_layer_ltv: tuple[float, ...] = ()


@dataclass(frozen=True)
class Crash:
    hour: int
    size: float  # fractional price drop
    asset: str | None = None  # None hits every collateral asset


@dataclass(frozen=True)
class WorldConfig:
    assets: tuple[AssetConfig, ...]
    debt_symbol: str = "USDC"
    hours: int = 2000
    oracle_heartbeat_hours: int = 1
    oracle_deviation: float = 0.0
    oracle_lag_hours: int = 0
    oracle_bias: float = 0.0
    reference_noise: float = 0.001
    n_accounts: int = 40
    hf_low: float = 1.05
    hf_high: float = 1.8
    size_dispersion: float = 0.8
    deposits0: float = 1e7
    target_utilization: float = 0.8
    reopen_prob: float = 0.05
    deposit_vol: float = 0.002
    withdraw_jump_rate: float = 0.002
    withdraw_jump_size: float = 0.05
    run_threshold: float = 1.02
    run_fraction: float = 0.2
    liq_incentive: float = 0.05
    close_factor: float = 1.0
    timelock_hours: float = 24.0
    gas_units: float = 500000.0
    gas_base: float = 9e-5
    gas_vol: float = 0.2
    gas_stress_beta: float = 60.0
    gas_stress_cap: float = 3.0  # cap on the log gas-price uplift from stress
    priority_fee_frac: float = 0.1
    mev_mult: float = 1.0
    exec_delay_max_hours: float = 0.5
    slippage_noise: float = 0.0005
    bad_debt_after_hours: int = 72
    position_every_hours: int = 24
    position_history_hours: int | None = None
    crashes: tuple[Crash, ...] = ()
    venue: str = "amm"

    def __post_init__(self):
        if not self.assets:
            raise ConfigError("world needs at least one collateral asset")
        syms = [a.symbol for a in self.assets]
        if len(set(syms)) != len(syms) or self.debt_symbol in syms:
            raise ConfigError("asset symbols must be unique and distinct from the debt asset")
        if self.hours < 2:
            raise ConfigError("world needs at least two hours")
        if not 0 < self.target_utilization < 1:
            raise ConfigError("target utilization must lie in (0,1)")
        if not 1.0 <= self.hf_low <= self.hf_high:
            raise ConfigError("need 1 <= hf_low <= hf_high")
        if self.n_accounts < 1 or self.oracle_heartbeat_hours < 1:
            raise ConfigError("n_accounts and oracle heartbeat must be >= 1")
        for a in self.assets:
            if not 0 < a.ltv0 <= a.lltv <= 1:
                raise ConfigError(f"{a.symbol}: need 0 < ltv0 <= lltv <= 1")
            if a.vol < 0 or a.depth <= 0 or a.impact_lambda < 0:
                raise ConfigError(f"{a.symbol}: vol, depth and lambda must be non-negative (depth positive)")
            if a.hd < 1 or len(a.per_layer_ltv) != a.hd - 1:
                raise ConfigError(f"{a.symbol}: per_layer_ltv needs hd-1 entries")
        for c in self.crashes:
            if not 0 <= c.size < 1:
                raise ConfigError("crash size must lie in [0,1)")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "WorldConfig":
        d = dict(d)
        try:
            assets = tuple(AssetConfig(**{**a, "per_layer_ltv": tuple(a.get("per_layer_ltv", ()))}) for a in d.pop("assets"))
            crashes = tuple(Crash(**c) for c in d.pop("crashes", ()))
            return cls(assets=assets, crashes=crashes, **d)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed world config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "WorldConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"world config is not valid JSON: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Truth:
    seed: int
    true_prices: dict[str, np.ndarray]
    oracle_error: dict[str, np.ndarray]
    reference_noise: dict[str, np.ndarray]
    viable_at_trigger: tuple[bool, ...]
    uncapped: tuple[bool, ...]
    impact_lambda: dict[str, float]
    vol: dict[str, float]

    @property
    def failure_prob(self) -> float | None:
        if not self.viable_at_trigger:
            return None
        return 1.0 - sum(self.viable_at_trigger) / len(self.viable_at_trigger)

    def eta_variance(self, asset: str) -> float:
        return float(np.var(self.oracle_error[asset]))

    def to_dict(self, include_paths: bool = True) -> dict:
        out: dict[str, Any] = {
            "seed": self.seed,
            "failure_prob": self.failure_prob,
            "viable_at_trigger": list(self.viable_at_trigger),
            "uncapped": list(self.uncapped),
            "impact_lambda": self.impact_lambda,
            "vol_per_sqrt_hour": self.vol,
            "oracle_error_variance": {a: self.eta_variance(a) for a in sorted(self.oracle_error)},
        }
        if include_paths:
            out["true_prices"] = {a: [float(x) for x in v] for a, v in sorted(self.true_prices.items())}
        return out


@dataclass(frozen=True, eq=False)
class World:
    bundle: DataBundle
    truth: Truth
    config: WorldConfig


def _price_paths(cfg: WorldConfig, seed: int) -> dict[str, np.ndarray]:
    out = {}
    for a in cfg.assets:
        g = rng_mod.stream(seed, f"prices:{a.symbol}")
        z = g.standard_normal(cfg.hours - 1)
        nj = g.poisson(a.jump_rate, cfg.hours - 1) if a.jump_rate > 0 else np.zeros(cfg.hours - 1, dtype=int)
        jumps = nj * a.jump_mean + np.sqrt(nj) * a.jump_std * g.standard_normal(cfg.hours - 1)
        step = a.drift - 0.5 * a.vol**2 + a.vol * z + jumps
        for c in cfg.crashes:
            if (c.asset is None or c.asset == a.symbol) and 1 <= c.hour < cfg.hours:
                step[c.hour - 1] += math.log1p(-c.size)
        out[a.symbol] = a.price0 * np.exp(np.concatenate([[0.0], np.cumsum(step)]))
    return out


def _oracle(cfg: WorldConfig, true: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(true)
    marks = np.empty(n)
    upd = np.zeros(n, dtype=bool)
    last_t = 0
    cur = true[0] * (1 + cfg.oracle_bias)
    for t in range(n):
        target = true[max(0, t - cfg.oracle_lag_hours)] * (1 + cfg.oracle_bias)
        due = t == 0 or t - last_t >= cfg.oracle_heartbeat_hours
        moved = cfg.oracle_deviation > 0 and abs(target / cur - 1.0) >= cfg.oracle_deviation
        if due or moved:
            cur = target
            last_t = t
            upd[t] = True
        marks[t] = cur
    return marks, upd


def _trailing_vol(logp: np.ndarray, window: int = 24) -> np.ndarray:
    r2 = np.concatenate([[0.0], np.diff(logp) ** 2])
    c = np.cumsum(r2)
    out = np.empty(len(r2))
    for t in range(len(r2)):
        lo = max(0, t - window)
        k = t - lo
        out[t] = math.sqrt((c[t] - c[lo]) / k) if k > 0 else 0.0
    return out


def generate(config: WorldConfig | Mapping, seed: int, duration: int | None = None) -> World:
    """Run a world for ``duration`` hours (default ``config.hours``)."""
    cfg = config if isinstance(config, WorldConfig) else WorldConfig.from_dict(config)
    if duration is not None:
        cfg = WorldConfig(**{**{f: getattr(cfg, f) for f in cfg.__dataclass_fields__}, "hours": int(duration)})
    H = cfg.hours
    syms = [a.symbol for a in cfg.assets]
    k = len(syms)
    acfg = {a.symbol: a for a in cfg.assets}
    times = T0 + HOUR * np.arange(H, dtype=np.int64)

    true = _price_paths(cfg, seed)
    marks, upd, ref, zeta = {}, {}, {}, {}
    g_ref = rng_mod.stream(seed, "reference")
    for a in syms:
        marks[a], upd[a] = _oracle(cfg, true[a])
        noise = cfg.reference_noise * g_ref.standard_normal(H)
        zeta[a] = true[a] * noise
        ref[a] = true[a] + zeta[a]
        ref[a] = np.where(ref[a] > 0, ref[a], true[a])
    depth = {}
    for a in syms:
        c = acfg[a]
        rv = _trailing_vol(np.log(true[a]))
        with np.errstate(divide="ignore"):
            ratio = np.where(rv > c.vol, c.vol / np.where(rv > 0, rv, 1.0), 1.0) if c.vol > 0 else np.ones(H)
        depth[a] = c.depth * ratio ** c.depth_vol_elasticity

    px = np.array([marks[a] for a in syms])  # k x H, oracle marks
    logp = np.log(np.array([true[a] for a in syms]))
    absret = np.abs(np.diff(logp, axis=1, prepend=logp[:, :1]))
    g_gas = rng_mod.stream(seed, "gas")
    stress_eq = absret.mean(axis=0)
    uplift = np.minimum(cfg.gas_stress_beta * stress_eq, cfg.gas_stress_cap)
    gas = cfg.gas_base * np.exp(cfg.gas_vol * g_gas.standard_normal(H) + uplift)
    prio = cfg.priority_fee_frac * gas * (1.0 + uplift)

    # borrower book
    g = rng_mod.stream(seed, "accounts")
    n = cfg.n_accounts
    asset_of = np.arange(n) % k
    lltv = np.array([acfg[a].lltv for a in syms])
    coll = np.zeros(n)
    debt = np.zeros(n)
    open_ = np.zeros(n, dtype=bool)
    opened_at = np.zeros(n, dtype=np.int64)
    deposits = cfg.deposits0
    shares = cfg.deposits0
    sizes = np.exp(cfg.size_dispersion * g.standard_normal(n))
    sizes /= sizes.sum()

    def open_account(i: int, t: int, amount: float) -> None:
        hf = g.uniform(cfg.hf_low, cfg.hf_high)
        a = asset_of[i]
        coll[i] = amount * hf / (lltv[a] * px[a, t])
        debt[i] = amount
        open_[i] = True
        opened_at[i] = t

    for i in range(n):
        open_account(i, 0, cfg.target_utilization * deposits * sizes[i])

    pending: dict[int, dict] = {}  # account -> trigger record
    events: list[LiquidationEvent] = []
    viable0: list[bool] = []
    uncapped: list[bool] = []
    snaps, positions = [], []
    g_exec = rng_mod.stream(seed, "exec")
    g_dep = rng_mod.stream(seed, "deposits")
    pos_from = 0 if cfg.position_history_hours is None else max(0, H - cfg.position_history_hours)

    for t in range(H):
        p_t = px[:, t]
        a_px = p_t[asset_of]
        with np.errstate(divide="ignore", invalid="ignore"):
            hf = np.where(debt > 0, lltv[asset_of] * a_px * coll / np.where(debt > 0, debt, 1.0), np.inf)
        for i in np.flatnonzero(open_ & (debt > 0) & (hf < 1.0)):
            if i not in pending:
                pending[int(i)] = {"trigger": int(times[t]), "t": t, "record": None}
        gas_cost = cfg.gas_units * gas[t] + cfg.mev_mult * prio[t] * cfg.gas_units
        if pending:
            acct = sorted(pending)
            repaid = np.array([cfg.close_factor * debt[i] for i in acct])
            want = repaid * (1.0 + cfg.liq_incentive) / a_px[acct]
            seized = np.minimum(coll[acct], want)
            notional = seized * a_px[acct]
            noise = cfg.slippage_noise * g_exec.standard_normal(len(acct))
            delay = g_exec.uniform(0.0, cfg.exec_delay_max_hours * HOUR, len(acct))

            lam_a = np.array([acfg[s].impact_lambda for s in syms])[asset_of[acct]]
            depth_a = np.array([depth[s][t] for s in syms])[asset_of[acct]]
            which = asset_of[acct]

            def deviation(q: np.ndarray) -> np.ndarray:
                return np.clip(lam_a * q / depth_a + noise, 0.0, 0.99)

            def viable(eps: np.ndarray) -> np.ndarray:
                return seized * a_px[acct] * (1.0 - eps) - repaid >= gas_cost

            # the liquidator takes, smallest first, every trigger that keeps the
            # whole batch on that asset profitable at the batch's common impact
            ok = np.zeros(len(acct), dtype=bool)
            for j in np.argsort(notional, kind="stable"):
                trial = ok.copy()
                trial[j] = True
                same = which == which[j]
                q = notional[trial & same].sum()
                if viable(deviation(np.full(len(acct), q)))[trial & same].all():
                    ok = trial
            q_exec = np.zeros(k)
            np.add.at(q_exec, which[ok], notional[ok])
            eps2 = deviation(q_exec[which])
            eps1 = deviation(q_exec[which] + notional)
            for j, i in enumerate(acct):
                rec = pending[i]
                first = rec["record"] is None
                if first:
                    rec["viable0"] = bool(ok[j])
                    rec["uncapped"] = bool(want[j] <= coll[i])
                if ok[j]:
                    e = eps2[j]
                    done = int(times[t]) + int(delay[j])
                    events.append(_event(rec["trigger"], done, i, cfg.debt_symbol, repaid[j], syms[asset_of[i]], seized[j], p_t[asset_of[i]], e, cfg.gas_units, gas[t], cfg.mev_mult * prio[t] * cfg.gas_units))
                    viable0.append(rec["viable0"])
                    uncapped.append(rec["uncapped"] and bool(want[j] <= coll[i]))
                    coll[i] -= seized[j]
                    debt[i] -= repaid[j]
                    if debt[i] <= 1e-9 * cfg.deposits0:
                        debt[i] = 0.0
                        coll[i] = 0.0
                        open_[i] = False
                    del pending[i]
                else:
                    if first:
                        rec["record"] = _event(rec["trigger"], None, i, cfg.debt_symbol, repaid[j], syms[asset_of[i]], seized[j], p_t[asset_of[i]], eps1[j], cfg.gas_units, gas[t], cfg.mev_mult * prio[t] * cfg.gas_units)
                    if hf[i] >= 1.0 or t - rec["t"] >= cfg.bad_debt_after_hours:
                        # cured by a rebound, or written off: trigger never liquidated
                        events.append(rec["record"])
                        viable0.append(rec["viable0"])
                        uncapped.append(rec["uncapped"])
                        if hf[i] < 1.0:
                            loss = max(0.0, debt[i] - coll[i] * a_px[i])
                            deposits -= min(loss, deposits * 0.99)
                            debt[i] = 0.0
                            coll[i] = 0.0
                            open_[i] = False
                        del pending[i]

        # depositors
        borrows = float(debt[open_].sum())
        coll_val = float(sum(coll[open_ & (asset_of == j)].sum() * p_t[j] for j in range(k)))
        liquidity = max(0.0, deposits - borrows)
        share_px = deposits / shares
        flow = deposits * (math.exp(cfg.deposit_vol * g_dep.standard_normal()) - 1.0)
        if g_dep.random() < cfg.withdraw_jump_rate:
            flow -= cfg.withdraw_jump_size * deposits
        if deposits > 0 and coll_val / deposits < cfg.run_threshold:
            flow -= cfg.run_fraction * deposits
        flow = max(flow, -liquidity)
        deposits += flow
        shares += flow / share_px
        # new borrowing toward target utilization
        for i in np.flatnonzero(~open_):
            room = cfg.target_utilization * deposits - float(debt[open_].sum())
            if room <= 0:
                break
            if i in pending or g.random() >= cfg.reopen_prob:
                continue
            amount = min(room, cfg.target_utilization * cfg.deposits0 * sizes[i])
            if amount < 1e-4 * cfg.deposits0:
                break
            open_account(int(i), t, amount)
        borrows = float(debt[open_].sum())
        if borrows > deposits:
            deposits = borrows
        cq = {syms[j]: float(coll[open_ & (asset_of == j)].sum()) for j in range(k)}
        snaps.append(VaultSnapshot(int(times[t]), deposits, borrows, deposits, deposits, cq, shares))
        if t >= pos_from and (t % cfg.position_every_hours == 0 or t == H - 1):
            for i in np.flatnonzero(open_):
                positions.append(PositionRecord(f"acct{i:04d}", int(times[t]), {syms[asset_of[i]]: float(coll[i])}, {cfg.debt_symbol: float(debt[i])}))

    for i, rec in sorted(pending.items()):
        if rec["record"] is not None:
            events.append(rec["record"])
            viable0.append(rec["viable0"])
            uncapped.append(rec["uncapped"])

    order = sorted(range(len(events)), key=lambda j: (events[j].trigger_time, events[j].account))
    events = [events[j] for j in order]
    viable0 = [viable0[j] for j in order]
    uncapped = [uncapped[j] for j in order]

    oracles = {}
    for a in syms:
        oracles[a] = OracleSeries(AssetId(a, AssetKind(acfg[a].kind)), times, marks[a], upd[a], ref[a])
    stable = np.ones(H)
    oracles[cfg.debt_symbol] = OracleSeries(AssetId(cfg.debt_symbol), times, stable, (np.arange(H) % 24) == 0, stable.copy())
    depth_rows = {a: tuple(DepthSnapshot(a, int(times[t]), float(depth[a][t]), cfg.venue) for t in range(H)) for a in syms}
    gas_rows = tuple(GasPoint(int(times[t]), float(gas[t]), float(prio[t])) for t in range(H))
    params = (ParamVector(int(times[0]), {a: acfg[a].ltv0 for a in syms}, {a: acfg[a].lltv for a in syms},
                          cfg.liq_incentive, cfg.close_factor, {a: 1e12 for a in syms}, cfg.timelock_hours),)
    rehypo = {a: RehypoMeta(acfg[a].hd, tuple(acfg[a].per_layer_ltv)) for a in syms}
    present = frozenset({"snapshots.csv", "collateral.csv", "oracle.csv", "params.csv", "positions.csv",
                         "liquidations.csv", "depth.csv", "gas.csv", "rehypo.csv"})
    bundle = DataBundle({a: s.asset for a, s in oracles.items()}, tuple(snaps), tuple(positions), tuple(events),
                        dict(sorted(oracles.items())), depth_rows, gas_rows, params, rehypo, (cfg.debt_symbol,), present)
    truth = Truth(
        seed,
        {a: true[a] for a in syms},
        {a: marks[a] - true[a] for a in syms},
        {a: zeta[a] for a in syms},
        tuple(viable0),
        tuple(uncapped),
        {a: acfg[a].impact_lambda for a in syms},
        {a: acfg[a].vol for a in syms},
    )
    return World(bundle, truth, cfg)


def _event(trigger, done, i, debt_sym, repaid, asset, seized, price, eps, gas_units, gas_price, mev) -> LiquidationEvent:
    return LiquidationEvent(
        int(trigger), done, f"acct{i:04d}",
        {debt_sym: (float(repaid), 1.0)},
        {asset: (float(seized), float(price), float(price * (1.0 - eps)))},
        float(gas_units), float(gas_price), float(mev), 0.0,
    )


def write_world(world: World, directory: str | Path, include_paths: bool = True) -> None:
    """Write the bundle CSVs plus ``truth.json`` and ``world_config.json``."""
    d = Path(directory)
    write_bundle(world.bundle, d)
    (d / "truth.json").write_text(json.dumps(world.truth.to_dict(include_paths), indent=1, sort_keys=True) + "\n", encoding="utf-8")


# --- closed-form and brute-force oracles -------------------------------------


def first_passage_analytic(u0: float, barrier: float, drift: float, sigma: float, horizon: float) -> float:
    """P(max of u0 + drift*s + sigma*W_s over [0, horizon] >= barrier)."""
    gap = barrier - u0
    if gap <= 0:
        return 1.0
    if horizon <= 0:
        return 0.0
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    if sigma == 0:
        return 1.0 if drift * horizon >= gap else 0.0
    s = sigma * math.sqrt(horizon)
    a = special.ndtr((-gap + drift * horizon) / s)
    log_b = 2.0 * drift * gap / sigma**2 + special.log_ndtr((-gap - drift * horizon) / s)
    return float(min(1.0, max(0.0, a + math.exp(log_b))))


def first_passage_mc(u0: float, barrier: float, drift: float, sigma: float, horizon: float, n: int, seed: int) -> tuple[float, float]:
    """Exact simulation via the endpoint and its conditional running maximum.

    Returns (estimate, standard error).
    """
    g = rng_mod.stream(seed, "first-passage")
    x = drift * horizon + sigma * math.sqrt(horizon) * g.standard_normal(n)
    u = g.random(n)
    m = 0.5 * (x + np.sqrt(x * x - 2.0 * sigma**2 * horizon * np.log(u)))
    hit = (m >= barrier - u0).astype(float)
    return float(hit.mean()), float(hit.std(ddof=1) / math.sqrt(n))


def brute_force_shortfall(
    liabilities: float,
    prices: Mapping[str, float],
    collateral_qty: Mapping[str, float],
    volumes: Mapping[str, float],
    depth: Mapping[str, float],
    lam: Mapping[str, float],
    costs: float = 0.0,
) -> float:
    """(L - A)+ for one path, written out asset by asset."""
    assets = 0.0
    for a, qty in collateral_qty.items():
        eps = 0.0
        if volumes.get(a, 0.0) > 0:
            eps = lam.get(a, 0.0) * volumes[a] / depth[a]
        execution = prices[a] * (1.0 - eps)
        if execution < 0:
            execution = 0.0
        assets += execution * qty
    assets -= costs
    return liabilities - assets if liabilities > assets else 0.0


# --- samplers for estimator checks --------------------------------------------


def gbm_prices(p0: float, vol: float, n: int, seed: int, drift: float = 0.0) -> np.ndarray:
    z = rng_mod.stream(seed, "gbm").standard_normal(n - 1)
    steps = drift - 0.5 * vol**2 + vol * z
    return p0 * np.exp(np.concatenate([[0.0], np.cumsum(steps)]))


def impact_sample(lam: float, n: int, seed: int, beta_clr: float = 0.0, noise: float = 0.0, asset: str = "A") -> list[ImpactObservation]:
    """Observations from eps = lam*x + beta*clr + noise with random x, clr."""
    g = rng_mod.stream(seed, "impact")
    x = g.uniform(0.01, 0.5, n)
    clr = g.uniform(0.0, 0.2, n)
    eps = lam * x + beta_clr * clr + noise * g.standard_normal(n)
    return [ImpactObservation(T0 + HOUR * i, asset, float(x[i]), float(eps[i]), float(clr[i])) for i in range(n)]


def independent_pair(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    g = rng_mod.stream(seed, "independent")
    return g.lognormal(0.0, 0.3, n), np.abs(g.standard_normal(n))


def utilization_path(n: int, seed: int, u0: float = 0.5, drift: float = 0.0, sigma: float = 0.005, jump_rate: float = 0.0, jump_size: float = 0.0) -> np.ndarray:
    g = rng_mod.stream(seed, "utilization")
    steps = drift + sigma * g.standard_normal(n - 1) + jump_size * (g.random(n - 1) < jump_rate)
    return u0 + np.concatenate([[0.0], np.cumsum(steps)])


def return_pair(n: int, seed: int, rho: float, vol: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    g = rng_mod.stream(seed, "returns")
    a = g.standard_normal(n)
    b = rho * a + math.sqrt(max(0.0, 1.0 - rho * rho)) * g.standard_normal(n)
    return vol * a, vol * b


def backtest_population(n: int, seed: int, alpha0: float = 6.0, alpha1: float = -6.0, lo: float = 0.6, hi: float = 1.6) -> tuple[np.ndarray, np.ndarray]:
    """Episodes whose shortfall probability is logistic in V1."""
    g = rng_mod.stream(seed, "backtest")
    v1 = g.uniform(lo, hi, n)
    p = special.expit(alpha0 + alpha1 * v1)
    return v1, g.random(n) < p


def independent_population(n: int, seed: int, p: float = 0.3, lo: float = 0.6, hi: float = 1.6) -> tuple[np.ndarray, np.ndarray]:
    g = rng_mod.stream(seed, "independent-backtest")
    return g.uniform(lo, hi, n), g.random(n) < p
