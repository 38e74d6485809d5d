"""End-to-end scoring: bundle in, report dict out.

Every stage that can fall back (missing layer, too little data) records a
warning and continues with the conservative choice.  All randomness comes
from the master seed through labelled sub-streams, and per-scenario work is
independent of evaluation order, so the worker count never changes output.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import __version__
from . import estimators as est
from . import metrics as met
from . import scenarios as scn
from . import structural as st
from . import validate as val
from .aggregate import METRICS, NormalizationConfig, metric_raw, normalize, vcs
from .core import HOUR, VaultSnapshot, collateral_weights
from .errors import ConfigError, DegenerateData, InfeasibleScenario, InsufficientData, Undefined, VaultCreditError
from .ingest import DataBundle, IngestConfig, check_data_depth, load_bundle, resolve_depth_requirements
from .rng import GENERATOR_NAME

log = logging.getLogger("vaultcredit")

DEFAULT_CONFIG: dict[str, Any] = {
    "seed": 0,
    "bundle": None,
    "ingest": {"asset_kinds": {}, "debt_assets": None, "depth_days": {}},
    "horizon_hours": 24,
    "n_paths": 2000,
    "v3_paths": 20000,
    "v3_stress_overlay": 1.0,
    "tau_max_hours": 1.0,
    "impact": {"window_days": 180.0, "include_clr": False, "min_obs": 8, "gamma": 0.0, "fallback_lambda": 1.0},
    "oracle": {"window_hours": 720},
    "gas": {"window_days": 30.0, "stress_quantile": 0.9},
    "utilization": {"window_days": 30.0, "jump_sigma_mult": 4.0},
    "scenarios": {
        "set": "all",
        "file": None,
        "historical": {"q_h": 0.9, "trailing_years": 2.0},
        "parametric": {"drawdowns": list(scn.DEFAULT_DRAWDOWNS), "depth_factors": list(scn.DEFAULT_DEPTH_FACTORS), "gas_quantile": 0.95},
        "adversarial": {"k": 3.0, "resolution": 5, "depth_floor": 0.5},
    },
    "depth_vol_elasticity": 1.0,
    "v5_weighting": "debt",
    "weights": [0.2, 0.2, 0.2, 0.2, 0.2],
    "normalization": None,
    "graph": None,
    "level3_horizon_years": 1.0,
    "manipulation": {},
    "rwa": {},
    "market_hours": {},
    "structural": {"monitor_freq_per_year": 8760.0, "k_q": 3.0, "exit_queue": None, "strategies": None},
    "oracle_adequacy": None,
    "yield": None,
    "backtest": {"q_h": 0.75, "min_episodes": 10, "delta_star_hours": None},
}

SCENARIO_SETS = ("all", "historical", "parametric", "adversarial", "file")
# keys whose values are free-form maps rather than nested options
_OPEN_KEYS = {"asset_kinds", "depth_days", "manipulation", "rwa", "market_hours", "exit_queue", "strategies",
              "oracle_adequacy", "yield", "debt_assets", "drawdowns", "depth_factors", "weights"}


def _merge(base: dict, over: Mapping, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and k not in _OPEN_KEYS:
            if not isinstance(v, Mapping):
                raise ConfigError(f"config key {path + k!r} must be an object")
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(raw: Mapping | None = None, **overrides) -> dict:
    cfg = _merge(DEFAULT_CONFIG, raw or {})
    for k, v in overrides.items():
        if v is not None:
            cfg = _merge(cfg, {k: v})
    if cfg["scenarios"]["set"] not in SCENARIO_SETS:
        raise ConfigError(f"scenario set must be one of {SCENARIO_SETS}")
    if cfg["v5_weighting"] not in ("debt", "count"):
        raise ConfigError("v5_weighting must be 'debt' or 'count'")
    for key in ("n_paths", "v3_paths", "horizon_hours"):
        if int(cfg[key]) < 1:
            raise ConfigError(f"{key} must be >= 1")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    return cfg


def load_config(path: str | Path | None, **overrides) -> tuple[dict, Path]:
    """Parse a JSON config; relative file references resolve against its folder."""
    if path is None:
        return resolve_config({}, **overrides), Path.cwd()
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {p}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return resolve_config(raw, **overrides), p.parent


def config_hash(cfg: Mapping) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become None."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return jsonable(obj.to_dict())
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


class Warnings:
    def __init__(self, quiet: bool = False):
        self.items: list[str] = []
        self.quiet = quiet

    def add(self, msg: str) -> None:
        if msg not in self.items:
            if not self.quiet:
                log.warning(msg)
            self.items.append(msg)


# --- inputs -------------------------------------------------------------------


def bundle_path(cfg: Mapping, base: Path) -> Path:
    if not cfg["bundle"]:
        raise ConfigError("config names no bundle directory")
    p = Path(cfg["bundle"])
    return p if p.is_absolute() else base / p


def ingest(cfg: Mapping, base: Path, force: bool = False) -> tuple[DataBundle, Any, Warnings]:
    w = Warnings()
    icfg = IngestConfig.from_dict({**cfg["ingest"], "force": force})
    reqs = resolve_depth_requirements(icfg.depth_days, force)
    bundle = load_bundle(bundle_path(cfg, base), icfg)
    report = check_data_depth(bundle, reqs)
    for item in report.items:
        if item.status != "PASS":
            w.add(f"data depth {item.item}: {item.status}" + (f" ({item.note})" if item.note else ""))
    return bundle, report, w


@dataclasses.dataclass
class Estimates:
    impact: est.ImpactFit | None
    lam: dict[str, float]
    oracle: est.OracleLatencyFit | None
    gas_corr: float | None
    gas_corr_n: int
    utilization: est.UtilizationFit | None
    clr: est.ClrEstimate | None
    scenario_inputs: est.ScenarioInputs | None

    def to_dict(self) -> dict:
        return {
            "impact": self.impact.to_dict() if self.impact else None,
            "lambda_used": self.lam,
            "oracle_latency": {a: dataclasses.asdict(e) for a, e in self.oracle.entries.items()} if self.oracle else None,
            "gas_stress_corr": self.gas_corr,
            "gas_stress_corr_n": self.gas_corr_n,
            "utilization": dataclasses.asdict(self.utilization) if self.utilization else None,
            "clr": dataclasses.asdict(self.clr) if self.clr else None,
            "scenario_inputs": self.scenario_inputs.to_dict() if self.scenario_inputs else None,
        }


def estimate(bundle: DataBundle, cfg: Mapping, w: Warnings) -> Estimates:
    assets = bundle.collateral_assets
    ic = cfg["impact"]
    impact = None
    lam = {a: float(ic["fallback_lambda"]) for a in assets}
    try:
        impact = est.estimate_lambda(bundle, include_clr=ic["include_clr"], min_obs=int(ic["min_obs"]), window_days=float(ic["window_days"]))
        for a in assets:
            if a in impact.lam:
                lam[a] = impact.lam[a]
            else:
                w.add(f"no impact estimate for {a}: fallback lambda {ic['fallback_lambda']} (WORST-CASE)")
        if impact.pooled:
            w.add(f"impact fit pooled thin assets: {', '.join(impact.pooled)}")
    except (InsufficientData, DegenerateData, Undefined) as exc:
        w.add(f"impact estimate unavailable ({exc}): fallback lambda {ic['fallback_lambda']} (WORST-CASE)")

    oracle = None
    try:
        oracle = est.estimate_oracle_latencies(bundle, assets, int(cfg["oracle"]["window_hours"]))
        for a, e in oracle.entries.items():
            if e.thin:
                w.add(f"oracle volatility for {a} rests on a thin window")
    except VaultCreditError as exc:
        w.add(f"oracle latency unavailable ({exc})")

    gas_corr, gas_n = None, 0
    if not bundle.gas:
        w.add("gas layer missing: gas-stress correlation and V5 undefined (WORST-CASE)")
    else:
        try:
            gas_corr, gas_n = est.estimate_gas_stress_corr(bundle, stress_quantile=float(cfg["gas"]["stress_quantile"]), window_days=float(cfg["gas"]["window_days"]))
        except (InsufficientData, Undefined) as exc:
            w.add(f"gas-stress correlation unavailable ({exc})")

    util = None
    try:
        util = est.fit_utilization_dynamics(bundle, jump_sigma_mult=float(cfg["utilization"]["jump_sigma_mult"]), window_days=float(cfg["utilization"]["window_days"]))
    except (InsufficientData, DegenerateData) as exc:
        w.add(f"utilization dynamics unavailable ({exc}): V3 undefined (WORST-CASE)")

    clr = None
    try:
        clr = est.estimate_clr(bundle)
    except VaultCreditError as exc:
        w.add(f"CLR unavailable ({exc}): taken as 0")

    si = None
    try:
        si = est.scenario_inputs(bundle, horizons=(int(cfg["horizon_hours"]),))
        for item in si.worst_case:
            w.add(f"scenario input {item} missing (WORST-CASE)")
    except VaultCreditError as exc:
        w.add(f"scenario inputs unavailable ({exc})")
    return Estimates(impact, lam, oracle, gas_corr, gas_n, util, clr, si)


# --- market state at scoring time ---------------------------------------------


@dataclasses.dataclass
class State:
    time: int
    snapshot: VaultSnapshot
    prices: dict[str, float]
    depth: dict[str, float]
    params: Any
    positions: tuple
    sigma: dict[str, float]
    cascade: dict[str, float]
    gas_cost: Callable[[float], float]
    net_liabilities: float
    idle: float

    @property
    def assets(self) -> tuple[str, ...]:
        return tuple(sorted(self.snapshot.collateral_qty))


def cascade_multipliers(bundle: DataBundle, w: Warnings) -> dict[str, float]:
    out = {}
    for a in bundle.collateral_assets:
        meta = bundle.rehypo.get(a)
        if meta is None:
            if bundle.rehypo or "rehypo.csv" not in bundle.present:
                w.add(f"rehypothecation metadata missing for {a}: treated as primitive (WORST-CASE)")
            out[a] = 1.0
            continue
        out[a] = st.cascade_multiplier(meta.hd, [st.leverage_multiplier(x) for x in meta.per_layer_ltv])
    return out


def gas_cost_model(bundle: DataBundle) -> Callable[[float], float]:
    """Per-liquidation cost at a given gas-price quantile."""
    if not bundle.gas:
        return lambda q: 0.0
    prices = np.array([g.gas_price for g in bundle.gas])
    units = [e.gas_units for e in bundle.liquidations if e.gas_units > 0]
    mev = [e.mev_cost for e in bundle.liquidations]
    u = float(np.median(units)) if units else 0.0
    m = float(np.median(mev)) if mev else 0.0
    return lambda q: float(np.quantile(prices, q)) * u + m


def market_state(bundle: DataBundle, est_: Estimates, w: Warnings, t: int | None = None) -> State:
    t = bundle.end_time if t is None else t
    snap = bundle.snapshot_at(t)
    prices = bundle.prices_at(t)
    depth = {}
    for a in snap.collateral_qty:
        d = bundle.depth_at(a, t)
        if d is None:
            w.add(f"no depth for {a}: V2 liquidation volume meets zero depth (WORST-CASE)")
            d = 0.0
        depth[a] = d
    sigma = dict(est_.oracle.sigma) if est_.oracle else {}
    for a in snap.collateral_qty:
        sigma.setdefault(a, 0.0)
    positions = bundle.positions_at(t)
    if not positions:
        w.add("no position book: vault treated as one aggregate borrower")
    idle = max(0.0, snap.deposits - snap.borrows)
    net = snap.liabilities - idle
    if net <= 0:
        raise Undefined("liabilities are fully covered by idle liquidity")
    return State(t, snap, prices, depth, bundle.params_at(t), positions, sigma, cascade_multipliers(bundle, w),
                 gas_cost_model(bundle), net, idle)


def _debt_prices(bundle: DataBundle, state: State) -> dict[str, float]:
    return {d: state.prices.get(d, 1.0) for d in bundle.debt_assets}


def scenario_paths(bundle: DataBundle, state: State, s: scn.ScenarioSpec, cfg: Mapping, n_paths: int, seed: int, central: bool = False) -> met.LiquidationPaths:
    return met.liquidation_paths(
        state.snapshot, s, state.prices, state.depth, state.params, n_paths, seed,
        sigma=state.sigma, positions=state.positions, debt_prices=_debt_prices(bundle, state),
        gas_cost_per_liquidation=state.gas_cost(s.gas_quantile), cascade=state.cascade,
        depth_vol_elasticity=float(cfg["depth_vol_elasticity"]), central=central,
    )


def _lam_eff(est_: Estimates, cfg: Mapping) -> tuple[dict[str, float], float]:
    clr = est_.clr.value if est_.clr else 0.0
    return est_.lam, clr


def model_deviation(bundle: DataBundle, state: State, s: scn.ScenarioSpec, est_: Estimates, cfg: Mapping) -> dict[str, float]:
    """Execution deviation on the scenario's central path, lam * Q / D."""
    p = scenario_paths(bundle, state, s, cfg, 1, int(cfg["seed"]), central=True)
    lam, clr = _lam_eff(est_, cfg)
    scale = 1.0 + float(cfg["impact"]["gamma"]) * clr
    out = {}
    for j, a in enumerate(p.assets):
        q, d = p.volumes[0, j], p.depth[0, j]
        if q <= 0:
            out[a] = 0.0
        elif d <= 0:
            raise InfeasibleScenario(f"scenario {s.id}: zero depth for {a} with positive liquidation volume")
        else:
            out[a] = min(0.999999, lam[a] * scale * q / d)
    return out


def realized_deviation(bundle: DataBundle, s: scn.ScenarioSpec) -> dict[str, float]:
    """Median observed deviation per asset over a historical episode."""
    if s.kind != "historical" or "start" not in s.provenance:
        return {}
    t0 = int(s.provenance["start"])
    t1 = int(s.provenance["end"]) + int(s.horizon_hours) * HOUR
    seen: dict[str, list[float]] = {}
    for e in bundle.liquidations:
        if e.completed and t0 <= e.trigger_time <= t1:
            for a in e.seized_collateral:
                seen.setdefault(a, []).append(e.deviation(a))
    return {a: min(0.999999, float(np.median(v))) for a, v in seen.items()}


def stressed_acr(state: State, s: scn.ScenarioSpec) -> float:
    value = sum(q * state.prices[a] * (1.0 - s.price_shock.get(a, 0.0)) for a, q in state.snapshot.collateral_qty.items())
    return value / state.net_liabilities


def v1_inputs(bundle, state, s, est_, cfg) -> tuple[dict[str, float], float, str]:
    eps = realized_deviation(bundle, s)
    source = "realized" if eps else "model"
    if set(eps) != set(state.snapshot.collateral_qty):
        model = model_deviation(bundle, state, s, est_, cfg)
        for a, e in model.items():
            eps.setdefault(a, e)
    return eps, stressed_acr(state, s), source


# --- scenario set ---------------------------------------------------------------


def build_scenarios(bundle: DataBundle, state: State, est_: Estimates, cfg: Mapping, base: Path, w: Warnings) -> tuple[list[scn.ScenarioSpec], dict]:
    sc = cfg["scenarios"]
    which = sc["set"]
    h = int(cfg["horizon_hours"])
    out: list[scn.ScenarioSpec] = []
    info: dict[str, Any] = {}
    if which in ("all", "historical"):
        hs = scn.build_historical(bundle, float(sc["historical"]["q_h"]), float(sc["historical"]["trailing_years"]), h)
        if not hs:
            w.add("no historical stress episodes in the trailing window")
        out += hs
    if which in ("all", "parametric"):
        p = sc["parametric"]
        out += scn.build_parametric(state.assets, p["drawdowns"], p["depth_factors"], h, float(p["gas_quantile"]))
    if which == "file" or sc["file"]:
        if not sc["file"]:
            raise ConfigError("scenario set 'file' needs scenarios.file")
        f = Path(sc["file"])
        out += scn.load_scenarios(f if f.is_absolute() else base / f)
    if which in ("all", "adversarial"):
        a = sc["adversarial"]
        bounds = scn.k_sigma_bounds(state.sigma, h, float(a["k"]), float(a["depth_floor"]))

        def objective(s: scn.ScenarioSpec) -> float:
            eps, ratio, _ = v1_inputs(bundle, state, s, est_, cfg)
            weights = collateral_weights(state.snapshot, state.prices)
            return ratio * (1.0 - sum(weights[x] * eps[x] for x in weights))

        try:
            res = scn.build_adversarial(bounds, objective, int(a["resolution"]), lambda c: scn.scenario_from_coords(c, h))
            out.append(res.scenario)
            info["adversarial"] = {"scenario": res.scenario.id, "v1": res.value, "n_evaluated": res.n_evaluated}
        except InfeasibleScenario as exc:
            w.add(f"adversarial search hit an infeasible corner: {exc}")
    ids = [s.id for s in out]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate scenario ids")
    out = scn.flag_inconsistent(out, state.snapshot)
    keep, warns = scn.admissible(out, state.snapshot)
    for m in warns:
        w.add(m)
    if not keep:
        raise Undefined("no admissible stress scenarios")
    info["n_built"] = len(out)
    info["n_admissible"] = len(keep)
    return keep, info


# --- metrics ------------------------------------------------------------------


def score_scenario(bundle: DataBundle, state: State, s: scn.ScenarioSpec, est_: Estimates, cfg: Mapping) -> dict:
    seed = int(cfg["seed"])
    out: dict[str, Any] = {"scenario": s.to_dict()}
    try:
        eps, ratio, source = v1_inputs(bundle, state, s, est_, cfg)
        out["v1_inputs"] = {"deviation": eps, "acr": ratio, "deviation_source": source}
    except InfeasibleScenario as exc:
        out["v1_inputs"] = None
        out["infeasible"] = str(exc)
    lam, clr = _lam_eff(est_, cfg)
    paths = scenario_paths(bundle, state, s, cfg, int(cfg["n_paths"]), seed)
    try:
        v2 = met.v2_expected_shortfall(state.net_liabilities, state.snapshot.collateral_qty, lam, paths,
                                       gamma=float(cfg["impact"]["gamma"]), clr=clr, scenario_id=s.id)
        out["V2"] = v2
    except InfeasibleScenario as exc:
        out["V2"] = met.MetricValue("V2", None, s.id, diagnostics={"infeasible": str(exc)})
    if est_.utilization is not None:
        u0 = scn.scenario_utilization(s, state.snapshot)
        out["V3"] = met.v3_boundary_hitting(u0, est_.utilization, int(s.horizon_hours), int(cfg["v3_paths"]), seed,
                                            float(cfg["v3_stress_overlay"]), scenario_id=s.id)
    else:
        out["V3"] = met.MetricValue("V3", None, s.id, diagnostics={"reason": "no utilization fit"})
    return out


def vault_v4(bundle: DataBundle, state: State, est_: Estimates, cfg: Mapping, w: Warnings) -> dict:
    weights = collateral_weights(state.snapshot, state.prices)
    per = {}
    fail = 0.0
    v4b = 1.0
    cap = 1.0
    for a in sorted(weights):
        ltv0, lltv = state.params.ltv0[a], state.params.lltv[a]
        eta = 1.0 - ltv0 / lltv
        lat = est_.oracle.entries.get(a) if est_.oracle else None
        if lat is None:
            w.add(f"no oracle latency for {a}: V4a component WORST-CASE")
            p = 1.0
            res = None
        else:
            manip = cfg["manipulation"].get(a, {})
            benefit = float(manip.get("benefit", state.idle))
            cost = float(manip.get("cost", state.depth.get(a, 0.0) * (1.0 / lltv - 1.0)))
            rwa = cfg["rwa"].get(a)
            mh = cfg["market_hours"].get(a)
            res = met.v4_oracle_integrity(
                lat.staleness_hours, lat.sigma, eta, benefit, cost, state.snapshot.liabilities,
                met.RwaInputs(**rwa) if rwa else None, met.MarketHoursInputs(**mh) if mh else None,
            )
            p = res.v4a.diagnostics["false_solvency_prob"]
            if eta == 0:
                w.add(f"{a}: ltv0 equals lltv, no liquidation buffer")
            v4b = min(v4b, res.v4b.value)
            cap = min(cap, res.floor_adjustments.get("nav_cap", 1.0))
        fail += weights[a] * p
        per[a] = {"weight": weights[a], "eta_bar": eta, "false_solvency_prob": p, "detail": res}
    v4a = 1.0 - fail
    return {"V4": met.MetricValue("V4", min(v4a * v4b, cap), diagnostics={"v4a": v4a, "v4b": v4b, "nav_cap": cap}), "per_asset": per}


def shortfall_given_failure(bundle: DataBundle, tau_max: float) -> float | None:
    gaps = []
    for e in bundle.liquidations:
        if met.failed(e, tau_max):
            gaps.append(max(0.0, e.repaid_value - e.seized_oracle_value))
    return float(np.mean(gaps)) if gaps else None


def vault_v5(bundle: DataBundle, est_: Estimates, cfg: Mapping, w: Warnings) -> met.V5Result | None:
    tau = float(cfg["tau_max_hours"])
    if not bundle.gas:
        return None
    if not bundle.liquidations:
        w.add("no liquidation triggers: V5 undefined (WORST-CASE)")
        return None
    return met.v5_execution_viability(bundle.liquidations, tau, est_.gas_corr, shortfall_given_failure(bundle, tau), cfg["v5_weighting"])


def _worst(records: Sequence[met.MetricValue], key: Callable[[met.MetricValue], float], worst_is_min: bool) -> met.MetricValue | None:
    defined = [r for r in records if r is not None and r.value is not None]
    if not defined or len(defined) < len(records):
        return None
    sign = 1.0 if worst_is_min else -1.0
    return min(defined, key=lambda r: (sign * key(r), r.scenario_id or ""))


# --- the full run -------------------------------------------------------------------


def _level3(cfg: Mapping, base: Path, l1_loss: float | None, w: Warnings) -> dict | None:
    if not cfg["graph"]:
        w.add("no dependency graph: Level 3 not assessed")
        return None
    g = Path(cfg["graph"])
    graph = st.DependencyGraph.load(g if g.is_absolute() else base / g)
    cf = st.code_failure_prob(graph, float(cfg["level3_horizon_years"]))
    out = {"graph": graph.to_dict(), "code_failure": cf}
    if l1_loss is not None:
        out["dominance"] = st.dominance_check(cf.q_code, l1_loss)
    return out


def _structural(bundle: DataBundle, state: State, est_: Estimates, v5: met.V5Result | None, cfg: Mapping, w: Warnings) -> dict:
    sc = cfg["structural"]
    per = {}
    for a in state.assets:
        ltv0, lltv = state.params.ltv0[a], state.params.lltv[a]
        sig_annual = state.sigma.get(a, 0.0) * math.sqrt(8760.0)
        buf = st.buffer_adequacy(ltv0, lltv, sig_annual, float(sc["monitor_freq_per_year"]), float(sc["k_q"]))
        if not buf.passed:
            w.add(f"{a}: liquidation buffer below the volatility requirement")
        if buf.warning:
            w.add(buf.warning)
        per[a] = {
            "leverage_multiplier": st.leverage_multiplier(ltv0),
            "trigger_price_ratio": st.trigger_price_ratio(ltv0, lltv),
            "buffer": buf,
            "cascade_multiplier": state.cascade[a],
            "hd": bundle.rehypo[a].hd if a in bundle.rehypo else None,
        }
    strat = sc["strategies"] or {}
    wmax = st.duration_bounded_withdrawal_capacity(state.snapshot.deposits, state.snapshot.utilization,
                                                  strat.get("fracs", ()), strat.get("caps", ()))
    out: dict[str, Any] = {
        "per_asset": per,
        "clr": est_.clr.value if est_.clr else None,
        "pi_star": v5.pi_star if v5 else None,
        "withdrawal_capacity": wmax,
        "exit_queue": None,
        "oracle_adequacy": None,
    }
    if sc["exit_queue"]:
        q = sc["exit_queue"]
        out["exit_queue"] = st.exit_queue_duration(float(q["queue_len"]), float(q["churn_per_epoch"]), float(q.get("epoch_seconds", 384.0)))
    oa = cfg["oracle_adequacy"]
    if oa:
        out["oracle_adequacy"] = st.oracle_adequacy(float(oa["q0"]), float(oa["q_min"]), float(oa["worst_case_quality_std"]), float(oa["v4_sensitivity"]))
        if not out["oracle_adequacy"].passed:
            w.add("oracle quality below the adequacy threshold")
    return out


def _pi_bounds(bundle: DataBundle, cfg: Mapping, w: Warnings) -> dict:
    out: dict[str, Any] = {"pi1": {}, "pi2": None}
    end = bundle.end_time
    start = end - int(cfg["oracle"]["window_hours"]) * HOUR
    grid = est.hourly_grid(start, end)
    for a in bundle.collateral_assets:
        s = bundle.oracles[a]
        if not s.has_reference:
            w.add(f"no reference prices for {a}: oracle error bound not identified")
            out["pi1"][a] = None
            continue
        o = est.sample_last(s.times, s.prices, grid)
        r = est.sample_last(s.times, s.reference, grid)
        ok = ~(np.isnan(o) | np.isnan(r))
        o, r = o[ok], r[ok]
        try:
            out["pi1"][a] = val.pi1_oracle_bound(o - r, np.diff(np.log(o)), np.diff(np.log(r)))
        except InsufficientData as exc:
            w.add(f"oracle error bound for {a}: {exc}")
            out["pi1"][a] = None
    try:
        out["pi2"] = val.pi2_liquidation_bound(bundle.liquidations, float(cfg["tau_max_hours"]))
    except Undefined as exc:
        w.add(f"liquidation failure bound: {exc}")
    return out


def backtest_episodes(bundle: DataBundle, est_: Estimates, cfg: Mapping, w: Warnings) -> list[val.Episode]:
    """Stress onsets with V1 at onset and whether share price fell within h."""
    h = int(cfg["horizon_hours"])
    onsets = scn.build_historical(bundle, float(cfg["backtest"]["q_h"]), float(cfg["scenarios"]["historical"]["trailing_years"]), h)
    times = bundle.snapshot_times
    px = np.array([s.assets_book / s.share_supply for s in bundle.snapshots])
    out = []
    for s in onsets:
        t0 = int(s.provenance["start"])
        try:
            state = market_state(bundle, est_, Warnings(quiet=True), t0)
            weights = collateral_weights(state.snapshot, state.prices)
            eps = realized_deviation(bundle, s)
            if set(eps) != set(weights):
                calm = dataclasses.replace(s, price_shock={}, depth_shock={}, kind="parametric")
                for a, e in model_deviation(bundle, state, calm, est_, cfg).items():
                    eps.setdefault(a, e)
            ratio = sum(q * state.prices[a] for a, q in state.snapshot.collateral_qty.items()) / state.net_liabilities
            v1 = ratio * (1.0 - sum(weights[a] * eps[a] for a in weights))
        except (Undefined, InfeasibleScenario, VaultCreditError) as exc:
            w.add(f"backtest episode at {t0} skipped: {exc}")
            continue
        i0 = int(np.searchsorted(times, t0, side="right")) - 1
        i1 = int(np.searchsorted(times, t0 + h * HOUR, side="right"))
        seg = px[i0:i1]
        drop = np.flatnonzero(seg < seg[0] * (1.0 - 1e-12))
        hit = len(drop) > 0
        hours = float((times[i0 + drop[0]] - t0) / HOUR) if hit else None
        out.append(val.Episode(v1, hit, hours, None))
    return out


def _validation(bundle: DataBundle, est_: Estimates, state: State, cfg: Mapping, w: Warnings) -> dict:
    episodes = backtest_episodes(bundle, est_, cfg, w)
    out: dict[str, Any] = {"n_episodes": len(episodes), "episodes": episodes, "backtest": None, "gap": None}
    try:
        res = val.backtest_v1([e.v1 for e in episodes], [e.shortfall for e in episodes], int(cfg["backtest"]["min_episodes"]))
        out["backtest"] = {"status": "ok", **res.to_dict()}
    except (InsufficientData, DegenerateData) as exc:
        out["backtest"] = {"status": "not_estimable", "error": exc.to_dict()}
        w.add(f"backtest not estimable: {exc}")
    dstar = cfg["backtest"]["delta_star_hours"]
    dstar = float(state.params.timelock_hours if dstar is None else dstar)
    if episodes:
        out["gap"] = {"delta_star_hours": dstar, "value": val.gap_diagnostic(episodes, dstar), "latencies_observed": False}
    return out


def _yield(cfg: Mapping) -> Any:
    y = cfg["yield"]
    if not y:
        return None
    return est.decompose_yield(y.get("streams", {}), float(y.get("horizon_days", 365.0)), bool(y.get("protocol_bound", True)))


def run_score(cfg: Mapping, base: Path, force: bool = False, workers: int = 1) -> dict:
    bundle, depth, w = ingest(cfg, base, force)
    est_ = estimate(bundle, cfg, w)
    state = market_state(bundle, est_, w)
    scenarios, sinfo = build_scenarios(bundle, state, est_, cfg, base, w)

    def one(s):
        return score_scenario(bundle, state, s, est_, cfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, scenarios))
    else:
        rows = [one(s) for s in scenarios]

    feasible = [r for r in rows if r["v1_inputs"] is not None]
    for r in rows:
        if r["v1_inputs"] is None:
            w.add(f"scenario {r['scenario']['id']} infeasible for the impact model: {r['infeasible']}")
        v2 = r["V2"]
        if v2.value is not None and v2.diagnostics.get("impact_clipped"):
            w.add(f"scenario {r['scenario']['id']}: linear impact pushed execution prices below zero (clipped)")
    weights = collateral_weights(state.snapshot, state.prices)
    v1 = None
    if feasible:
        v1 = met.v1_stressed_coverage(
            weights,
            {r["scenario"]["id"]: r["v1_inputs"]["deviation"] for r in feasible},
            {r["scenario"]["id"]: r["v1_inputs"]["acr"] for r in feasible},
        )
    if len(feasible) < len(rows):
        v1_overall = None
    else:
        v1_overall = v1.overall if v1 else None
    v2_overall = _worst([r["V2"] for r in rows], lambda r: r.diagnostics["loss_rate"], worst_is_min=False)
    v3_overall = _worst([r["V3"] for r in rows], lambda r: r.value, worst_is_min=False)
    v4 = vault_v4(bundle, state, est_, cfg, w)
    v5 = vault_v5(bundle, est_, cfg, w)

    norm = NormalizationConfig.load(_resolve(cfg["normalization"], base))
    if not norm.calibrated:
        w.add("normalization breakpoints are UNCALIBRATED defaults")
    overall = {"V1": v1_overall, "V2": v2_overall, "V3": v3_overall, "V4": v4["V4"], "V5": v5.v5 if v5 else None}
    scores = {}
    for m in METRICS:
        ns = normalize(metric_raw(overall[m], norm.specs[m]), norm.specs[m])
        if ns.worst_case:
            w.add(f"{m} undefined: normalized score 0 (WORST-CASE)")
        scores[m] = ns
    report_vcs = vcs([scores[m].score for m in METRICS], cfg["weights"])

    l1_loss = float(np.mean([r["V2"].diagnostics["loss_rate"] for r in rows])) if all(r["V2"].value is not None for r in rows) else None
    level3 = _level3(cfg, base, l1_loss, w)
    structural = _structural(bundle, state, est_, v5, cfg, w)
    pi = _pi_bounds(bundle, cfg, w)
    validation = _validation(bundle, est_, state, cfg, w)
    yld = _yield(cfg)

    per_scenario = {}
    for r in rows:
        sid = r["scenario"]["id"]
        per_scenario[sid] = {
            "scenario": r["scenario"],
            "V1": v1.per_scenario.get(sid) if v1 else None,
            "V1_inputs": r["v1_inputs"],
            "V2": r["V2"],
            "V3": r["V3"],
        }
    report = {
        "run": {
            "engine_version": __version__,
            "config_hash": config_hash(cfg),
            "seed": int(cfg["seed"]),
            "rng": GENERATOR_NAME,
            "as_of": state.time,
        },
        "config": cfg,
        "data_depth": depth,
        "estimates": est_,
        "state": {
            "deposits": state.snapshot.deposits,
            "borrows": state.snapshot.borrows,
            "liabilities": state.snapshot.liabilities,
            "idle_liquidity": state.idle,
            "net_liabilities": state.net_liabilities,
            "utilization": state.snapshot.utilization,
            "collateral_weights": weights,
            "n_positions": len(state.positions),
        },
        "scenarios": {**sinfo, "ids": [s.id for s in scenarios]},
        "metrics": {
            "per_scenario": per_scenario,
            "overall": overall,
            "V4_detail": v4["per_asset"],
            "V5_detail": v5,
        },
        "pi_bounds": pi,
        "vcs": {**report_vcs.to_dict(), "normalized": scores, "normalization": norm.to_dict()},
        "level3": level3,
        "structural": structural,
        "yield": yld,
        "validation": validation,
        "warnings": w.items,
    }
    return jsonable(report)


def _resolve(p: str | None, base: Path) -> Path | None:
    if not p:
        return None
    q = Path(p)
    return q if q.is_absolute() else base / q


def run_estimate(cfg: Mapping, base: Path, force: bool = False) -> dict:
    bundle, depth, w = ingest(cfg, base, force)
    e = estimate(bundle, cfg, w)
    return jsonable({"config": cfg, "data_depth": depth, "estimates": e, "warnings": w.items})


def run_stress(cfg: Mapping, base: Path, force: bool = False) -> tuple[dict, list[scn.ScenarioSpec]]:
    bundle, depth, w = ingest(cfg, base, force)
    e = estimate(bundle, cfg, w)
    state = market_state(bundle, e, w)
    scenarios, info = build_scenarios(bundle, state, e, cfg, base, w)
    return jsonable({"config": cfg, "scenarios": {**info, "ids": [s.id for s in scenarios]}, "warnings": w.items}), scenarios


def run_backtest(cfg: Mapping, base: Path, force: bool = False) -> dict:
    bundle, depth, w = ingest(cfg, base, force)
    e = estimate(bundle, cfg, w)
    state = market_state(bundle, e, w)
    return jsonable({"config": cfg, "validation": _validation(bundle, e, state, cfg, w), "pi_bounds": _pi_bounds(bundle, cfg, w), "warnings": w.items})


def run_ingest(cfg: Mapping, base: Path, force: bool = False) -> dict:
    bundle, depth, w = ingest(cfg, base, force)
    counts = {
        "snapshots": len(bundle.snapshots),
        "positions": len(bundle.positions),
        "liquidations": len(bundle.liquidations),
        "oracle_assets": sorted(bundle.oracles),
        "collateral_assets": list(bundle.collateral_assets),
        "debt_assets": list(bundle.debt_assets),
        "gas_points": len(bundle.gas),
        "files": sorted(bundle.present),
    }
    return jsonable({"config": cfg, "counts": counts, "data_depth": depth, "warnings": w.items})
