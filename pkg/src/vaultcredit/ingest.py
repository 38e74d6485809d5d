"""Load, validate and index the flat-file data bundle.

Each layer lives in one CSV with a fixed header.  Timestamps may be epoch
seconds or ISO-8601; the format is detected once per file from its first
data row.  ``write_bundle`` emits a canonical form (epoch seconds, shortest
round-trip float text) so that load -> write -> load is the identity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    DAY,
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
from .errors import ConfigError, DanglingReferenceError, DataError, OrderingError, SchemaError

HEADERS = {
    "snapshots.csv": ["time", "deposits", "borrows", "liabilities", "assets_book", "share_supply"],
    "collateral.csv": ["time", "asset", "quantity"],
    "positions.csv": ["time", "account", "asset", "side", "quantity"],
    "liquidations.csv": [
        "trigger_time", "completion_time", "account", "asset", "side", "quantity",
        "oracle_price", "execution_price", "gas_units", "gas_price", "mev_cost", "fees",
    ],
    "oracle.csv": ["asset", "time", "price", "is_update", "reference_price"],
    "depth.csv": ["asset", "time", "depth", "venue"],
    "gas.csv": ["time", "gas_price", "priority_fee"],
    "params.csv": ["effective_time", "asset", "ltv0", "lltv", "liq_incentive", "close_factor", "cap", "timelock_hours"],
    "rehypo.csv": ["asset", "hd", "per_layer_ltv"],
}
ORACLE_HEADER_SHORT = HEADERS["oracle.csv"][:4]
REQUIRED_FILES = ("snapshots.csv", "collateral.csv", "oracle.csv", "params.csv")

# Minimum history per data item, in days.  None means "full history".
DEFAULT_DEPTH_DAYS: dict[str, float | None] = {
    "balance_sheet": 365.0,
    "positions": 182.5,
    "params": None,
    "liquidations": 182.5,
    "oracle_prices": 365.0,
    "reference_prices": 730.0,
    "depth": 182.5,
    "execution_prices": 182.5,
    "gas": 365.0,
    "mev_proxies": 182.5,
    "rehypo_metadata": None,
}


@dataclass(frozen=True)
class RehypoMeta:
    hd: int
    per_layer_ltv: tuple[float, ...]


@dataclass(frozen=True)
class IngestConfig:
    asset_kinds: Mapping[str, str] = field(default_factory=dict)
    debt_assets: tuple[str, ...] | None = None
    depth_days: Mapping[str, float | None] = field(default_factory=dict)
    force: bool = False

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "IngestConfig":
        d = d or {}
        debt = d.get("debt_assets")
        return cls(
            dict(d.get("asset_kinds", {})),
            tuple(debt) if debt is not None else None,
            dict(d.get("depth_days", {})),
            bool(d.get("force", False)),
        )


def resolve_depth_requirements(overrides: Mapping[str, float | None], force: bool = False) -> dict[str, float | None]:
    """Merge operator overrides into the defaults; relaxing needs ``force``."""
    out = dict(DEFAULT_DEPTH_DAYS)
    for item, days in overrides.items():
        if item not in out:
            raise ConfigError(f"unknown data-depth item {item!r}")
        base = DEFAULT_DEPTH_DAYS[item]
        if base is not None and (days is None or days < base) and not force:
            raise ConfigError(f"relaxing the {item} depth requirement below {base} days needs --force")
        out[item] = days
    return out


@dataclass(frozen=True, eq=False)
class DataBundle:
    assets: Mapping[str, AssetId]
    snapshots: tuple[VaultSnapshot, ...]
    positions: tuple[PositionRecord, ...]
    liquidations: tuple[LiquidationEvent, ...]
    oracles: Mapping[str, OracleSeries]
    depth: Mapping[str, tuple[DepthSnapshot, ...]]
    gas: tuple[GasPoint, ...]
    params: tuple[ParamVector, ...]
    rehypo: Mapping[str, RehypoMeta]
    debt_assets: tuple[str, ...] = ()
    present: frozenset[str] = frozenset()

    @cached_property
    def snapshot_times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots], dtype=np.int64)

    @cached_property
    def collateral_assets(self) -> tuple[str, ...]:
        names = set()
        for s in self.snapshots:
            names.update(a for a, q in s.collateral_qty.items())
        return tuple(sorted(names))

    @property
    def end_time(self) -> int:
        return self.snapshots[-1].time

    def snapshot_at(self, t: int) -> VaultSnapshot:
        i = int(np.searchsorted(self.snapshot_times, t, side="right")) - 1
        if i < 0:
            raise DataError(f"no snapshot at or before t={t}")
        return self.snapshots[i]

    def prices_at(self, t: int) -> dict[str, float]:
        out = {}
        for a, s in self.oracles.items():
            if len(s.times) and s.times[0] <= t:
                out[a] = s.price_at(t)
        return out

    def params_at(self, t: int) -> ParamVector:
        cur = None
        for p in self.params:
            if p.effective_time <= t:
                cur = p
        if cur is None:
            if not self.params:
                raise DataError("no parameter history")
            cur = self.params[0]
        return cur

    def positions_at(self, t: int) -> tuple[PositionRecord, ...]:
        """Latest position book at or before ``t``."""
        times = [p.time for p in self.positions if p.time <= t]
        if not times:
            return ()
        last = max(times)
        return tuple(p for p in self.positions if p.time == last)

    @cached_property
    def _depth_index(self) -> dict[str, list[tuple[np.ndarray, np.ndarray]]]:
        out = {}
        for a, rows in self.depth.items():
            venues: dict[str, list[DepthSnapshot]] = {}
            for d in rows:
                venues.setdefault(d.venue, []).append(d)
            out[a] = [(np.array([d.time for d in v], dtype=np.int64), np.array([d.depth for d in v]))
                      for _, v in sorted(venues.items())]
        return out

    def depth_at(self, asset: str, t: int) -> float | None:
        """Latest depth per venue at or before ``t``, worst single venue."""
        best = None
        for times, vals in self._depth_index.get(asset, ()):
            i = int(np.searchsorted(times, t, side="right")) - 1
            if i >= 0 and (best is None or vals[i] < best):
                best = float(vals[i])
        return best


def _parse_time(text: str, iso: bool, file: str, line: int) -> int:
    text = text.strip()
    try:
        if iso:
            dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
            if dt.tzinfo is None:
                dt = dt.replace(tzinfo=timezone.utc)
            return int(dt.timestamp())
        v = float(text)
    except ValueError:
        raise SchemaError(f"bad timestamp {text!r}", file, line) from None
    if not math.isfinite(v) or v != int(v):
        raise SchemaError(f"epoch timestamp must be an integer number of seconds, got {text!r}", file, line)
    return int(v)


def _is_epoch(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def _num(text: str, file: str, line: int, col: str, optional: bool = False) -> float | None:
    text = text.strip()
    if text == "":
        if optional:
            return None
        raise SchemaError(f"empty value in column {col}", file, line)
    try:
        v = float(text)
    except ValueError:
        raise SchemaError(f"column {col}: {text!r} is not a number", file, line) from None
    if not math.isfinite(v):
        raise SchemaError(f"column {col}: non-finite value {text!r}", file, line)
    return v


class _Rows:
    """Rows of one CSV with header check and time-format detection."""

    def __init__(self, path: Path, time_cols: Sequence[str]):
        self.file = path.name
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError("empty file (missing header)", self.file, 1) from None
            self.rows = [(i + 2, r) for i, r in enumerate(reader) if r]
        self.header = header
        expected = HEADERS[self.file]
        if self.file == "oracle.csv":
            if header not in (expected, ORACLE_HEADER_SHORT):
                raise SchemaError(f"header {header} does not match {expected}", self.file, 1)
        elif header != expected:
            raise SchemaError(f"header {header} does not match {expected}", self.file, 1)
        for line, r in self.rows:
            if len(r) != len(header):
                raise SchemaError(f"expected {len(header)} columns, got {len(r)}", self.file, line)
        self.iso = False
        if self.rows:
            first = dict(zip(header, self.rows[0][1]))[time_cols[0]]
            self.iso = not _is_epoch(first)

    def __iter__(self):
        for line, r in self.rows:
            yield line, dict(zip(self.header, r))

    def time(self, rec: dict, col: str, line: int, optional: bool = False) -> int | None:
        if optional and rec[col].strip() == "":
            return None
        return _parse_time(rec[col], self.iso, self.file, line)


def _require_asset(asset: str, known: Mapping, file: str, line: int) -> None:
    if asset not in known:
        raise DanglingReferenceError(f"asset {asset!r} has no oracle series", file, line)


def _load_oracles(path: Path, kinds: Mapping[str, str]) -> dict[str, OracleSeries]:
    rows = _Rows(path, ["time"])
    data: dict[str, list] = {}
    for line, rec in rows:
        asset = rec["asset"].strip()
        if not asset:
            raise SchemaError("empty asset", rows.file, line)
        t = rows.time(rec, "time", line)
        price = _num(rec["price"], rows.file, line, "price")
        if price <= 0:
            raise SchemaError("price must be positive", rows.file, line)
        flag = rec["is_update"].strip()
        if flag not in ("0", "1"):
            raise SchemaError(f"is_update must be 0 or 1, got {flag!r}", rows.file, line)
        ref = None
        if "reference_price" in rec:
            ref = _num(rec["reference_price"], rows.file, line, "reference_price", optional=True)
            if ref is not None and ref <= 0:
                raise SchemaError("reference price must be positive", rows.file, line)
        series = data.setdefault(asset, [])
        if series and t <= series[-1][0]:
            raise OrderingError(f"time {t} not after previous {series[-1][0]} for asset {asset}", rows.file, line)
        series.append((t, price, flag == "1", math.nan if ref is None else ref))
    out = {}
    with_ref = "reference_price" in rows.header
    for asset in sorted(data):
        arr = data[asset]
        ref = np.array([r[3] for r in arr]) if with_ref else None
        out[asset] = OracleSeries(
            AssetId(asset, AssetKind(kinds.get(asset, "crypto"))),
            np.array([r[0] for r in arr], dtype=np.int64),
            np.array([r[1] for r in arr]),
            np.array([r[2] for r in arr]),
            ref,
        )
    return out


def _load_snapshots(snap_path: Path, coll_path: Path, oracles: Mapping) -> tuple[VaultSnapshot, ...]:
    rows = _Rows(snap_path, ["time"])
    base = []
    for line, rec in rows:
        t = rows.time(rec, "time", line)
        if base and t <= base[-1][0]:
            raise OrderingError(f"time {t} not after previous {base[-1][0]}", rows.file, line)
        vals = [_num(rec[c], rows.file, line, c) for c in HEADERS["snapshots.csv"][1:]]
        base.append((t, line, vals))
    index = {t: i for i, (t, _, _) in enumerate(base)}
    coll: list[dict[str, float]] = [dict() for _ in base]
    crow = _Rows(coll_path, ["time"])
    prev_t = None
    for line, rec in crow:
        t = crow.time(rec, "time", line)
        if prev_t is not None and t < prev_t:
            raise OrderingError(f"time {t} before previous {prev_t}", crow.file, line)
        prev_t = t
        if t not in index:
            raise DanglingReferenceError(f"collateral row at t={t} has no snapshot", crow.file, line)
        asset = rec["asset"].strip()
        _require_asset(asset, oracles, crow.file, line)
        q = _num(rec["quantity"], crow.file, line, "quantity")
        if q < 0:
            raise SchemaError("quantity must be >= 0", crow.file, line)
        if asset in coll[index[t]]:
            raise SchemaError(f"duplicate collateral row for {asset} at t={t}", crow.file, line)
        coll[index[t]][asset] = q
    out = []
    for (t, line, v), c in zip(base, coll):
        try:
            out.append(VaultSnapshot(t, v[0], v[1], v[2], v[3], c, v[4]))
        except DataError as exc:
            raise DataError(exc.message, rows.file, line) from None
    return tuple(out)


def _load_positions(path: Path, oracles: Mapping) -> tuple[PositionRecord, ...]:
    rows = _Rows(path, ["time"])
    groups: dict[tuple[int, str], tuple[dict, dict]] = {}
    prev_t = None
    for line, rec in rows:
        t = rows.time(rec, "time", line)
        if prev_t is not None and t < prev_t:
            raise OrderingError(f"time {t} before previous {prev_t}", rows.file, line)
        prev_t = t
        asset = rec["asset"].strip()
        _require_asset(asset, oracles, rows.file, line)
        side = rec["side"].strip()
        if side not in ("C", "D"):
            raise SchemaError(f"side must be C or D, got {side!r}", rows.file, line)
        q = _num(rec["quantity"], rows.file, line, "quantity")
        if q < 0:
            raise SchemaError("quantity must be >= 0", rows.file, line)
        acct = rec["account"].strip()
        c, d = groups.setdefault((t, acct), ({}, {}))
        target = c if side == "C" else d
        if asset in target:
            raise SchemaError(f"duplicate {side} row for {acct}/{asset} at t={t}", rows.file, line)
        target[asset] = q
    return tuple(PositionRecord(acct, t, c, d) for (t, acct), (c, d) in groups.items())


_EVENT_FIELDS = ("completion_time", "gas_units", "gas_price", "mev_cost", "fees")


def _load_liquidations(path: Path, oracles: Mapping) -> tuple[LiquidationEvent, ...]:
    rows = _Rows(path, ["trigger_time"])
    events: dict[tuple[int, str], dict] = {}
    prev_t = None
    for line, rec in rows:
        t = rows.time(rec, "trigger_time", line)
        if prev_t is not None and t < prev_t:
            raise OrderingError(f"trigger time {t} before previous {prev_t}", rows.file, line)
        prev_t = t
        done = rows.time(rec, "completion_time", line, optional=True)
        acct = rec["account"].strip()
        asset = rec["asset"].strip()
        _require_asset(asset, oracles, rows.file, line)
        side = rec["side"].strip()
        if side not in ("repaid", "seized"):
            raise SchemaError(f"side must be repaid or seized, got {side!r}", rows.file, line)
        qty = _num(rec["quantity"], rows.file, line, "quantity")
        px = _num(rec["oracle_price"], rows.file, line, "oracle_price")
        if qty < 0 or px <= 0:
            raise SchemaError("quantity must be >= 0 and oracle price > 0", rows.file, line)
        head = {
            "completion_time": done,
            **{c: _num(rec[c], rows.file, line, c) for c in ("gas_units", "gas_price", "mev_cost", "fees")},
        }
        ev = events.get((t, acct))
        if ev is None:
            ev = events[(t, acct)] = {"head": head, "repaid": {}, "seized": {}, "line": line}
        elif ev["head"] != head:
            raise SchemaError(f"event fields {_EVENT_FIELDS} differ across rows of one event", rows.file, line)
        if side == "repaid":
            if asset in ev["repaid"]:
                raise SchemaError(f"duplicate repaid row for {asset}", rows.file, line)
            ev["repaid"][asset] = (qty, px)
        else:
            x = _num(rec["execution_price"], rows.file, line, "execution_price", optional=True)
            if x is None:
                if done is not None:
                    raise SchemaError("completed seizure needs an execution price", rows.file, line)
                x = px
            if x < 0:
                raise SchemaError("execution price must be >= 0", rows.file, line)
            if asset in ev["seized"]:
                raise SchemaError(f"duplicate seized row for {asset}", rows.file, line)
            ev["seized"][asset] = (qty, px, x)
    out = []
    for (t, acct), ev in events.items():
        if not ev["repaid"]:
            raise SchemaError(f"event {acct}@{t} has no repaid rows", rows.file, ev["line"])
        h = ev["head"]
        try:
            out.append(LiquidationEvent(t, h["completion_time"], acct, ev["repaid"], ev["seized"],
                                        h["gas_units"], h["gas_price"], h["mev_cost"], h["fees"]))
        except DataError as exc:
            raise DataError(exc.message, rows.file, ev["line"]) from None
    return tuple(out)


def _load_depth(path: Path, oracles: Mapping) -> dict[str, tuple[DepthSnapshot, ...]]:
    rows = _Rows(path, ["time"])
    data: dict[str, list[DepthSnapshot]] = {}
    last: dict[tuple[str, str], int] = {}
    for line, rec in rows:
        asset = rec["asset"].strip()
        _require_asset(asset, oracles, rows.file, line)
        t = rows.time(rec, "time", line)
        venue = rec["venue"].strip()
        key = (asset, venue)
        if key in last and t <= last[key]:
            raise OrderingError(f"time {t} not after previous {last[key]} for {asset}/{venue}", rows.file, line)
        series = data.setdefault(asset, [])
        if series and t < series[-1].time:
            raise OrderingError(f"time {t} before previous {series[-1].time} for {asset}", rows.file, line)
        last[key] = t
        try:
            series.append(DepthSnapshot(asset, t, _num(rec["depth"], rows.file, line, "depth"), venue))
        except DataError as exc:
            raise DataError(exc.message, rows.file, line) from None
    return {a: tuple(v) for a, v in sorted(data.items())}


def _load_gas(path: Path) -> tuple[GasPoint, ...]:
    rows = _Rows(path, ["time"])
    out: list[GasPoint] = []
    for line, rec in rows:
        t = rows.time(rec, "time", line)
        if out and t <= out[-1].time:
            raise OrderingError(f"time {t} not after previous {out[-1].time}", rows.file, line)
        g = _num(rec["gas_price"], rows.file, line, "gas_price")
        pf = _num(rec["priority_fee"], rows.file, line, "priority_fee", optional=True)
        try:
            out.append(GasPoint(t, g, pf))
        except DataError as exc:
            raise DataError(exc.message, rows.file, line) from None
    return tuple(out)


def _load_params(path: Path, oracles: Mapping) -> tuple[ParamVector, ...]:
    rows = _Rows(path, ["effective_time"])
    groups: dict[int, dict] = {}
    prev_t = None
    for line, rec in rows:
        t = rows.time(rec, "effective_time", line)
        if prev_t is not None and t < prev_t:
            raise OrderingError(f"effective time {t} before previous {prev_t}", rows.file, line)
        prev_t = t
        asset = rec["asset"].strip()
        _require_asset(asset, oracles, rows.file, line)
        v = {c: _num(rec[c], rows.file, line, c) for c in HEADERS["params.csv"][2:]}
        g = groups.setdefault(t, {"ltv0": {}, "lltv": {}, "caps": {}, "vault": None, "line": line})
        vault = (v["liq_incentive"], v["close_factor"], v["timelock_hours"])
        if g["vault"] is not None and g["vault"] != vault:
            raise SchemaError("liq_incentive, close_factor and timelock_hours must agree across assets at one effective time", rows.file, line)
        g["vault"] = vault
        if asset in g["ltv0"]:
            raise SchemaError(f"duplicate params row for {asset} at t={t}", rows.file, line)
        g["ltv0"][asset] = v["ltv0"]
        g["lltv"][asset] = v["lltv"]
        g["caps"][asset] = v["cap"]
    out = []
    for t, g in groups.items():
        inc, cf, lock = g["vault"]
        try:
            out.append(ParamVector(t, g["ltv0"], g["lltv"], inc, cf, g["caps"], lock))
        except DataError as exc:
            raise DataError(exc.message, rows.file, g["line"]) from None
    return tuple(out)


def _load_rehypo(path: Path, oracles: Mapping) -> dict[str, RehypoMeta]:
    rows = _Rows(path, ["asset"])
    out = {}
    for line, rec in rows:
        asset = rec["asset"].strip()
        _require_asset(asset, oracles, rows.file, line)
        hd = _num(rec["hd"], rows.file, line, "hd")
        if hd < 1 or hd != int(hd):
            raise SchemaError("hd must be a positive integer", rows.file, line)
        text = rec["per_layer_ltv"].strip()
        ltvs = tuple(_num(x, rows.file, line, "per_layer_ltv") for x in text.split(";")) if text else ()
        if len(ltvs) != int(hd) - 1:
            raise SchemaError(f"per_layer_ltv needs hd-1={int(hd) - 1} entries", rows.file, line)
        if any(not 0 <= x < 1 for x in ltvs):
            raise SchemaError("per-layer ltv must lie in [0,1)", rows.file, line)
        if asset in out:
            raise SchemaError(f"duplicate rehypo row for {asset}", rows.file, line)
        out[asset] = RehypoMeta(int(hd), ltvs)
    return out


def load_bundle(paths: str | Path | Mapping[str, str | Path], config: IngestConfig | None = None) -> DataBundle:
    """Load a bundle from a directory of standard file names or a name->path map."""
    config = config or IngestConfig()
    if isinstance(paths, Mapping):
        files = {name: Path(p) for name, p in paths.items() if Path(p).exists()}
        unknown = set(files) - set(HEADERS)
        if unknown:
            raise ConfigError(f"unknown bundle files {sorted(unknown)}")
    else:
        root = Path(paths)
        if not root.is_dir():
            raise DataError(f"bundle directory {root} does not exist")
        files = {name: root / name for name in HEADERS if (root / name).exists()}
    for name in REQUIRED_FILES:
        if name not in files:
            raise DataError("required file is missing", name)

    oracles = _load_oracles(files["oracle.csv"], config.asset_kinds)
    snapshots = _load_snapshots(files["snapshots.csv"], files["collateral.csv"], oracles)
    if not snapshots:
        raise DataError("no snapshots", "snapshots.csv")
    params = _load_params(files["params.csv"], oracles)
    positions = _load_positions(files["positions.csv"], oracles) if "positions.csv" in files else ()
    liqs = _load_liquidations(files["liquidations.csv"], oracles) if "liquidations.csv" in files else ()
    depth = _load_depth(files["depth.csv"], oracles) if "depth.csv" in files else {}
    gas = _load_gas(files["gas.csv"]) if "gas.csv" in files else ()
    rehypo = _load_rehypo(files["rehypo.csv"], oracles) if "rehypo.csv" in files else {}

    if config.debt_assets is not None:
        for a in config.debt_assets:
            if a not in oracles:
                raise DanglingReferenceError(f"configured debt asset {a!r} has no oracle series")
        debt = tuple(config.debt_assets)
    else:
        found = {a for p in positions for a in p.debt} | {a for e in liqs for a in e.repaid_debt}
        if not found:
            coll = {a for s in snapshots for a in s.collateral_qty}
            found = set(oracles) - coll
        debt = tuple(sorted(found))
    assets = {a: s.asset for a, s in oracles.items()}
    return DataBundle(assets, snapshots, positions, liqs, oracles, depth, gas, params, rehypo, debt, frozenset(files))


def _fmt(v: float | int | None) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) if not isinstance(x, str) else x for x in r])


def write_bundle(bundle: DataBundle, directory: str | Path) -> None:
    """Write the canonical CSV form of ``bundle`` into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write(d / "snapshots.csv", HEADERS["snapshots.csv"],
           ([s.time, s.deposits, s.borrows, s.liabilities, s.assets_book, s.share_supply] for s in bundle.snapshots))
    _write(d / "collateral.csv", HEADERS["collateral.csv"],
           ([s.time, a, q] for s in bundle.snapshots for a, q in sorted(s.collateral_qty.items())))
    with_ref = any(s.reference is not None for s in bundle.oracles.values())
    header = HEADERS["oracle.csv"] if with_ref else ORACLE_HEADER_SHORT

    def oracle_rows():
        for a in sorted(bundle.oracles):
            s = bundle.oracles[a]
            for i in range(len(s.times)):
                row = [a, int(s.times[i]), float(s.prices[i]), "1" if s.is_update[i] else "0"]
                if with_ref:
                    r = s.reference[i] if s.reference is not None else math.nan
                    row.append(None if math.isnan(r) else float(r))
                yield row

    _write(d / "oracle.csv", header, oracle_rows())
    _write(d / "params.csv", HEADERS["params.csv"],
           ([p.effective_time, a, p.ltv0[a], p.lltv[a], p.liq_incentive, p.close_factor, p.caps.get(a, 0.0), p.timelock_hours]
            for p in bundle.params for a in p.ltv0))
    if "positions.csv" in bundle.present or bundle.positions:
        _write(d / "positions.csv", HEADERS["positions.csv"],
               ([p.time, p.account, a, side, q]
                for p in bundle.positions
                for side, m in (("C", p.collateral), ("D", p.debt))
                for a, q in m.items()))
    if "liquidations.csv" in bundle.present or bundle.liquidations:
        def liq_rows():
            for e in bundle.liquidations:
                head = [e.trigger_time, e.completion_time, e.account]
                tail = [e.gas_units, e.gas_price, e.mev_cost, e.fees]
                for a, (q, p) in e.repaid_debt.items():
                    yield head + [a, "repaid", q, p, None] + tail
                for a, (q, p, x) in e.seized_collateral.items():
                    yield head + [a, "seized", q, p, x] + tail
        _write(d / "liquidations.csv", HEADERS["liquidations.csv"], liq_rows())
    if "depth.csv" in bundle.present or bundle.depth:
        _write(d / "depth.csv", HEADERS["depth.csv"],
               ([x.asset, x.time, x.depth, x.venue] for a in sorted(bundle.depth) for x in bundle.depth[a]))
    if "gas.csv" in bundle.present or bundle.gas:
        _write(d / "gas.csv", HEADERS["gas.csv"], ([g.time, g.gas_price, g.priority_fee] for g in bundle.gas))
    if "rehypo.csv" in bundle.present or bundle.rehypo:
        _write(d / "rehypo.csv", HEADERS["rehypo.csv"],
               ([a, m.hd, ";".join(_fmt(x) for x in m.per_layer_ltv)] for a, m in sorted(bundle.rehypo.items())))


@dataclass(frozen=True)
class DepthItem:
    item: str
    status: str  # PASS, FAIL or WORST-CASE
    observed_days: float | None
    required_days: float | None
    note: str = ""

    def to_dict(self) -> dict:
        return {"item": self.item, "status": self.status, "observed_days": self.observed_days,
                "required_days": self.required_days, "note": self.note}


@dataclass(frozen=True)
class DepthReport:
    items: tuple[DepthItem, ...]

    def by_item(self) -> dict[str, DepthItem]:
        return {i.item: i for i in self.items}

    @property
    def problems(self) -> list[DepthItem]:
        return [i for i in self.items if i.status != "PASS"]


def _span_days(times: Sequence[int] | np.ndarray) -> float | None:
    if len(times) == 0:
        return None
    return (int(max(times)) - int(min(times))) / DAY


def check_data_depth(bundle: DataBundle, requirements: Mapping[str, float | None] | None = None) -> DepthReport:
    """Compare each item's observed history with its required depth.

    Items whose data is absent are marked WORST-CASE; downstream stages then
    substitute conservative values.
    """
    req = dict(DEFAULT_DEPTH_DAYS)
    if requirements:
        req.update(requirements)
    items = []

    def span_item(name: str, span: float | None, present: bool, note: str = "") -> None:
        need = req[name]
        if not present or span is None:
            items.append(DepthItem(name, "WORST-CASE", span, need, note or "absent"))
        else:
            ok = need is None or span >= need
            items.append(DepthItem(name, "PASS" if ok else "FAIL", span, need, note))

    span_item("balance_sheet", _span_days(bundle.snapshot_times), True)
    span_item("positions", _span_days([p.time for p in bundle.positions]), bool(bundle.positions))

    if bundle.params:
        first = bundle.params[0].effective_time
        full = first <= bundle.snapshots[0].time
        span = _span_days([first, bundle.end_time])
        items.append(DepthItem("params", "PASS" if full else "FAIL", span, req["params"],
                               "" if full else "parameter history starts after the first snapshot"))
    else:
        items.append(DepthItem("params", "WORST-CASE", None, req["params"], "absent"))

    span_item("liquidations", _span_days([e.trigger_time for e in bundle.liquidations]), "liquidations.csv" in bundle.present)
    oracle_spans = [_span_days(s.times) for s in bundle.oracles.values()]
    span_item("oracle_prices", min(oracle_spans) if oracle_spans else None, bool(oracle_spans))
    ref_spans = [_span_days(s.times[~np.isnan(s.reference)]) for s in bundle.oracles.values() if s.has_reference]
    span_item("reference_prices", min(ref_spans) if ref_spans else None, bool(ref_spans))
    depth_spans = [_span_days([x.time for x in v]) for v in bundle.depth.values()]
    span_item("depth", min(depth_spans) if depth_spans else None, bool(depth_spans))
    execs = [e.completion_time for e in bundle.liquidations if e.completed and e.seized_collateral]
    span_item("execution_prices", _span_days(execs), bool(execs))
    span_item("gas", _span_days([g.time for g in bundle.gas]), bool(bundle.gas))
    mev = [g.time for g in bundle.gas if g.priority_fee is not None]
    span_item("mev_proxies", _span_days(mev), bool(mev))

    coll = bundle.collateral_assets
    missing = [a for a in coll if a not in bundle.rehypo]
    if "rehypo.csv" not in bundle.present:
        items.append(DepthItem("rehypo_metadata", "WORST-CASE", None, None, "absent; assets treated as primitive"))
    elif missing:
        items.append(DepthItem("rehypo_metadata", "WORST-CASE", None, None, f"no entry for {missing}"))
    else:
        items.append(DepthItem("rehypo_metadata", "PASS", None, None, "static"))
    return DepthReport(tuple(items))
