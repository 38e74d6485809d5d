"""Stress scenario construction and the flow-consistency check."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .core import DAY, VaultSnapshot
from .errors import ConfigError, ScenarioEvaluationError
from .estimators import hourly_grid, sample_last
from .ingest import DataBundle

KINDS = ("historical", "parametric", "adversarial")
DEFAULT_DRAWDOWNS = (0.1, 0.2, 0.3, 0.5)
DEFAULT_DEPTH_FACTORS = (1.0, 0.75, 0.5)
INCONSISTENT = "inconsistent"
DEPOSITS_EXHAUSTED = "deposits_exhausted"


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    kind: str
    price_shock: Mapping[str, float]
    depth_shock: Mapping[str, float] = field(default_factory=dict)
    gas_quantile: float = 0.5
    delta_borrows: float = 0.0
    delta_deposits: float = 0.0
    horizon_hours: int = 24
    provenance: Mapping[str, Any] = field(default_factory=dict)
    utilization: float | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"scenario {self.id}: unknown kind {self.kind!r}")
        for a, d in self.price_shock.items():
            if not 0.0 <= d < 1.0:
                raise ConfigError(f"scenario {self.id}: drawdown {d} for {a} outside [0,1)")
        for a, f in self.depth_shock.items():
            if not 0.0 < f <= 1.0:
                raise ConfigError(f"scenario {self.id}: depth factor {f} for {a} outside (0,1]")
        if not 0.0 <= self.gas_quantile <= 1.0:
            raise ConfigError(f"scenario {self.id}: gas quantile outside [0,1]")
        if self.horizon_hours < 1:
            raise ConfigError(f"scenario {self.id}: horizon must be >= 1 hour")
        if self.utilization is not None and not 0.0 <= self.utilization <= 1.0:
            raise ConfigError(f"scenario {self.id}: utilization outside [0,1]")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "price_shock": dict(sorted(self.price_shock.items())),
            "depth_shock": dict(sorted(self.depth_shock.items())),
            "gas_quantile": self.gas_quantile,
            "delta_borrows": self.delta_borrows,
            "delta_deposits": self.delta_deposits,
            "horizon_hours": self.horizon_hours,
            "provenance": dict(self.provenance),
            "utilization": self.utilization,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioSpec":
        try:
            return cls(
                str(d["id"]),
                str(d["kind"]),
                {str(k): float(v) for k, v in d["price_shock"].items()},
                {str(k): float(v) for k, v in d.get("depth_shock", {}).items()},
                float(d.get("gas_quantile", 0.5)),
                float(d.get("delta_borrows", 0.0)),
                float(d.get("delta_deposits", 0.0)),
                int(d.get("horizon_hours", 24)),
                dict(d.get("provenance", {})),
                None if d.get("utilization") is None else float(d["utilization"]),
                tuple(d.get("flags", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed scenario record: {exc}") from exc


def dump_scenarios(scenarios: Sequence[ScenarioSpec], path: str | Path) -> None:
    Path(path).write_text(json.dumps([s.to_dict() for s in scenarios], indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_scenarios(path: str | Path) -> list[ScenarioSpec]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario set {path}: {exc}") from exc
    if isinstance(data, Mapping):
        data = data.get("scenarios", [])
    out = [ScenarioSpec.from_dict(d) for d in data]
    ids = [s.id for s in out]
    if len(set(ids)) != len(ids):
        raise ConfigError("scenario ids must be unique")
    return out


# --- consistency -------------------------------------------------------------


@dataclass(frozen=True)
class Consistency:
    passed: bool
    implied_utilization: float | None
    code: str = "ok"


def check_consistency(scenario: ScenarioSpec, snapshot: VaultSnapshot) -> Consistency:
    """Is the scenario's utilization reachable given its borrow/deposit flows?

    The bound is (B + dB) / (D - dD).  A scenario that asserts no
    utilization of its own takes the bound (capped at 1) and passes.
    """
    remaining = snapshot.deposits - scenario.delta_deposits
    if remaining <= 0:
        return Consistency(False, None, DEPOSITS_EXHAUSTED)
    bound = (snapshot.borrows + scenario.delta_borrows) / remaining
    u = scenario.utilization if scenario.utilization is not None else min(1.0, max(0.0, bound))
    ok = u <= bound + 1e-12
    return Consistency(ok, bound, "ok" if ok else INCONSISTENT)


def scenario_utilization(scenario: ScenarioSpec, snapshot: VaultSnapshot) -> float:
    """Utilization the scenario starts from, in [0,1]."""
    if scenario.utilization is not None:
        return scenario.utilization
    c = check_consistency(scenario, snapshot)
    if c.implied_utilization is None:
        return 1.0
    return min(1.0, max(0.0, c.implied_utilization))


def flag_inconsistent(scenarios: Sequence[ScenarioSpec], snapshot: VaultSnapshot) -> list[ScenarioSpec]:
    out = []
    for s in scenarios:
        c = check_consistency(s, snapshot)
        if not c.passed and c.code not in s.flags:
            s = replace(s, flags=tuple(s.flags) + (c.code,))
        out.append(s)
    return out


def admissible(scenarios: Sequence[ScenarioSpec], snapshot: VaultSnapshot) -> tuple[list[ScenarioSpec], list[str]]:
    """Scenarios fit for scoring, plus warnings for the flagged ones left out.

    An inconsistent scenario that carries no flag is a configuration error.
    """
    keep, warnings = [], []
    for s in scenarios:
        c = check_consistency(s, snapshot)
        if c.passed:
            keep.append(s)
        elif c.code in s.flags or INCONSISTENT in s.flags:
            warnings.append(f"scenario {s.id} excluded: {c.code}")
        else:
            raise ConfigError(f"scenario {s.id} fails the flow-consistency check ({c.code}) and is not flagged")
    return keep, warnings


# --- historical ---------------------------------------------------------------


def trailing_drawdown(prices: np.ndarray, horizon: int) -> np.ndarray:
    """Drawdown from the running peak of the last ``horizon`` steps."""
    p = np.asarray(prices, dtype=float)
    if len(p) == 0:
        return p
    from numpy.lib.stride_tricks import sliding_window_view

    padded = np.concatenate([np.full(horizon, p[0]), p])
    peak = sliding_window_view(padded, horizon + 1).max(axis=1)
    return 1.0 - p / peak


def _episodes(mask: np.ndarray, gap_hours: int) -> list[tuple[int, int]]:
    """Index ranges [start, end] of True runs, merging gaps <= gap_hours."""
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return []
    out = [[int(idx[0]), int(idx[0])]]
    for i in idx[1:]:
        if i - out[-1][1] - 1 <= gap_hours:
            out[-1][1] = int(i)
        else:
            out.append([int(i), int(i)])
    return [(a, b) for a, b in out]


def _stamp(t: int) -> str:
    return datetime.fromtimestamp(int(t), tz=timezone.utc).strftime("%Y%m%dT%H")


def build_historical(
    bundle: DataBundle,
    q_h: float = 0.9,
    trailing_years: float = 2.0,
    horizon_hours: int = 24,
    segment_quantile: float = 0.75,
    gap_hours: int = 6,
) -> list[ScenarioSpec]:
    """One scenario per stress episode in the trailing window.

    Episodes are runs of hours whose collateral-weighted drawdown exceeds the
    ``segment_quantile`` level, merged across gaps of up to ``gap_hours``.
    An episode qualifies when its peak reaches the ``q_h`` quantile.  The
    segmentation does not depend on ``q_h``, so raising it only removes
    episodes.
    """
    if not 0.0 <= q_h <= 1.0:
        raise ConfigError("q_H must lie in [0,1]")
    end = bundle.end_time
    start = max(end - int(trailing_years * 365 * DAY), min(int(s.times[0]) for s in bundle.oracles.values()))
    grid = hourly_grid(start, end)
    assets = bundle.collateral_assets
    if len(grid) < 2 or not assets:
        return []
    stimes = bundle.snapshot_times
    sidx = np.searchsorted(stimes, grid, side="right") - 1
    sidx = np.maximum(sidx, 0)
    dds, vals, pxs = {}, [], {}
    for a in assets:
        s = bundle.oracles[a]
        px = sample_last(s.times, s.prices, grid)
        px = np.where(np.isnan(px), s.prices[0], px)
        pxs[a] = px
        dds[a] = trailing_drawdown(px, horizon_hours)
        qty = np.array([bundle.snapshots[i].collateral_qty.get(a, 0.0) for i in sidx])
        vals.append(qty * px)
    v = np.array(vals)
    tot = v.sum(axis=0)
    w = np.where(tot > 0, v / np.where(tot > 0, tot, 1.0), 1.0 / len(assets))
    wdd = (w * np.array([dds[a] for a in assets])).sum(axis=0)

    seg = float(np.quantile(wdd, segment_quantile))
    thr = float(np.quantile(wdd, q_h))
    episodes = [(i, j) for i, j in _episodes(wdd > seg, gap_hours) if wdd[i:j + 1].max() >= thr]

    gas_t = np.array([g.time for g in bundle.gas], dtype=np.int64)
    gas_v = np.array([g.gas_price for g in bundle.gas])
    base_depth = {}
    for a in assets:
        ds = [d.depth for d in bundle.depth.get(a, ()) if start <= d.time <= end]
        base_depth[a] = float(np.median(ds)) if ds else None

    now = bundle.snapshots[-1]
    out = []
    for i, j in episodes:
        t0, t1 = int(grid[i]), int(grid[j])
        shock = {a: float(min(dds[a][i:j + 1].max(), 0.999)) for a in assets}
        depth = {}
        for a in assets:
            ds = [d.depth for d in bundle.depth.get(a, ()) if t0 <= d.time <= t1]
            if ds and base_depth[a]:
                depth[a] = float(min(1.0, max(1e-6, min(ds) / base_depth[a])))
            else:
                depth[a] = 1.0
        gq = 0.5
        if len(gas_v):
            sel = gas_v[(gas_t >= t0) & (gas_t <= t1)]
            if len(sel):
                gq = float(np.mean(gas_v <= sel.max()))
        s0, s1 = bundle.snapshot_at(t0), bundle.snapshot_at(t1)
        # flows are carried as relative changes applied to today's balance sheet
        db = (s1.borrows / s0.borrows - 1.0) * now.borrows if s0.borrows > 0 else 0.0
        dd = (1.0 - s1.deposits / s0.deposits) * now.deposits if s0.deposits > 0 else 0.0
        out.append(ScenarioSpec(
            id=f"hist-{_stamp(t0)}",
            kind="historical",
            price_shock=shock,
            depth_shock=depth,
            gas_quantile=gq,
            delta_borrows=db,
            delta_deposits=dd,
            horizon_hours=max(horizon_hours, j - i + 1),
            provenance={"start": t0, "end": t1, "peak_weighted_drawdown": float(wdd[i:j + 1].max()), "q_H": q_h,
                        "borrows_change": s1.borrows - s0.borrows, "deposits_change": s1.deposits - s0.deposits},
        ))
    return out


# --- parametric ---------------------------------------------------------------


def build_parametric(
    assets: Sequence[str],
    drawdowns: Sequence[float] = DEFAULT_DRAWDOWNS,
    depth_factors: Sequence[float] = DEFAULT_DEPTH_FACTORS,
    horizon_hours: int = 24,
    gas_quantile: float = 0.95,
) -> list[ScenarioSpec]:
    """Uniform drawdown and depth reduction across collateral, full grid."""
    if not drawdowns or not depth_factors:
        raise ConfigError("parametric grid needs non-empty drawdown and depth axes")
    for d in drawdowns:
        if not 0.0 <= d < 1.0:
            raise ConfigError(f"drawdown {d} outside [0,1)")
    for f in depth_factors:
        if not 0.0 < f <= 1.0:
            raise ConfigError(f"depth factor {f} outside (0,1]")
    out = []
    for d, f in itertools.product(drawdowns, depth_factors):
        out.append(ScenarioSpec(
            id=f"param-dd{d:.2f}-depth{f:.2f}",
            kind="parametric",
            price_shock={a: float(d) for a in assets},
            depth_shock={a: float(f) for a in assets},
            gas_quantile=gas_quantile,
            horizon_hours=horizon_hours,
            provenance={"drawdown": float(d), "depth_factor": float(f)},
        ))
    return out


# --- adversarial --------------------------------------------------------------


def k_sigma_bounds(sigma: Mapping[str, float], horizon_hours: int, k: float = 3.0, depth_floor: float = 0.5) -> dict[str, tuple[float, float]]:
    """Search box: drawdowns up to a k-sigma horizon move, depth down to a floor."""
    box = {}
    for a in sorted(sigma):
        hi = -math.expm1(-k * sigma[a] * math.sqrt(horizon_hours))
        box[f"drawdown:{a}"] = (0.0, min(hi, 0.99))
        box[f"depth:{a}"] = (depth_floor, 1.0)
    return box


def _coords_id(coords: Mapping[str, float]) -> str:
    return "adv-" + "-".join(f"{k}={v:.6f}" for k, v in sorted(coords.items()))


def scenario_from_coords(coords: Mapping[str, float], horizon_hours: int = 24, gas_quantile: float = 0.95) -> ScenarioSpec:
    price, depth = {}, {}
    for k, v in coords.items():
        dim, _, asset = k.partition(":")
        if dim == "drawdown":
            price[asset] = float(v)
        elif dim == "depth":
            depth[asset] = float(v)
        else:
            raise ConfigError(f"unknown adversarial dimension {k!r}")
    return ScenarioSpec(_coords_id(coords), "adversarial", price, depth, gas_quantile,
                        horizon_hours=horizon_hours, provenance={"grid": dict(sorted(coords.items()))})


@dataclass(frozen=True)
class AdversarialResult:
    scenario: ScenarioSpec
    value: float
    n_evaluated: int
    values: dict[str, float]


def build_adversarial(
    bounds: Mapping[str, tuple[float, float]],
    objective: Callable[[ScenarioSpec], float],
    resolution: int = 5,
    make_scenario: Callable[[Mapping[str, float]], ScenarioSpec] = scenario_from_coords,
) -> AdversarialResult:
    """Exhaustive grid argmin of ``objective`` over the box.

    Ties are broken by the lexicographically smallest scenario id.
    """
    if not bounds:
        raise ConfigError("adversarial search needs at least one dimension")
    if resolution < 2:
        raise ConfigError("grid resolution must be >= 2")
    dims = sorted(bounds)
    axes = []
    for d in dims:
        lo, hi = bounds[d]
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
            raise ConfigError(f"bad bounds for {d}: {(lo, hi)}")
        axes.append(np.linspace(lo, hi, resolution))
    best: tuple[float, str] | None = None
    best_s = None
    values = {}
    for point in itertools.product(*axes):
        coords = {d: float(x) for d, x in zip(dims, point)}
        s = make_scenario(coords)
        try:
            v = float(objective(s))
        except Exception as exc:
            raise ScenarioEvaluationError(f"objective failed at {coords}: {exc}", coords=coords) from exc
        values[s.id] = v
        if best is None or (v, s.id) < best:
            best, best_s = (v, s.id), s
    return AdversarialResult(best_s, best[0], len(values), values)
