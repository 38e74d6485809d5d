"""Domain types and balance-sheet accounting identities.

Assets are referred to by symbol throughout; the :class:`AssetId` registry in
a bundle carries the asset kind.  All monetary amounts are floats in a single
unit of account and all timestamps are integer UTC seconds.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DataError, DomainError

HOUR = 3600
DAY = 86400


class AssetKind(str, enum.Enum):
    CRYPTO = "crypto"
    LST = "lst"
    RWA = "rwa"
    SHARE = "share"


@dataclass(frozen=True, order=True)
class AssetId:
    symbol: str
    kind: AssetKind = AssetKind.CRYPTO

    def __post_init__(self):
        if not self.symbol:
            raise DomainError("asset symbol must be nonempty")
        object.__setattr__(self, "kind", AssetKind(self.kind))


def _check_money(name: str, value: float) -> None:
    if not math.isfinite(value) or value < 0:
        raise DataError(f"{name} must be finite and non-negative, got {value!r}")


@dataclass(frozen=True)
class VaultSnapshot:
    time: int
    deposits: float
    borrows: float
    liabilities: float
    assets_book: float
    collateral_qty: Mapping[str, float]
    share_supply: float

    def __post_init__(self):
        for name in ("deposits", "borrows", "liabilities", "assets_book"):
            _check_money(name, getattr(self, name))
        for asset, qty in self.collateral_qty.items():
            _check_money(f"collateral[{asset}]", qty)
        if not (math.isfinite(self.share_supply) and self.share_supply > 0):
            raise DataError(f"share_supply must be positive, got {self.share_supply!r}")
        if self.borrows > self.deposits:
            raise DataError(f"borrows {self.borrows} exceed deposits {self.deposits} at t={self.time}")

    @property
    def utilization(self) -> float:
        return utilization(self.borrows, self.deposits)

    def collateral_value(self, prices: Mapping[str, float]) -> float:
        return sum(qty * _price(prices, a) for a, qty in self.collateral_qty.items())


@dataclass(frozen=True)
class ParamVector:
    effective_time: int
    ltv0: Mapping[str, float]
    lltv: Mapping[str, float]
    liq_incentive: float
    close_factor: float
    caps: Mapping[str, float] = field(default_factory=dict)
    timelock_hours: float = 0.0
    u_max: float = 1.0

    def __post_init__(self):
        for a, v in self.lltv.items():
            if not 0 < v <= 1:
                raise DataError(f"lltv[{a}]={v} outside (0,1]")
        for a, v in self.ltv0.items():
            if not 0 < v <= 1:
                raise DataError(f"ltv0[{a}]={v} outside (0,1]")
            if a in self.lltv and v > self.lltv[a]:
                raise DataError(f"ltv0[{a}]={v} exceeds lltv {self.lltv[a]}")
        if self.liq_incentive < 0:
            raise DataError(f"liquidation incentive must be >= 0, got {self.liq_incentive}")
        if not 0 < self.close_factor <= 1:
            raise DataError(f"close_factor {self.close_factor} outside (0,1]")
        if self.timelock_hours < 0:
            raise DataError("timelock_hours must be >= 0")
        if not 0 < self.u_max <= 1:
            raise DataError(f"u_max {self.u_max} outside (0,1]")


@dataclass(frozen=True)
class PositionRecord:
    account: str
    time: int
    collateral: Mapping[str, float] = field(default_factory=dict)
    debt: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.collateral and not self.debt:
            raise DataError(f"position {self.account} at t={self.time} has neither collateral nor debt")
        for m in (self.collateral, self.debt):
            for a, q in m.items():
                _check_money(f"position quantity[{a}]", q)


@dataclass(frozen=True)
class LiquidationEvent:
    """One liquidation trigger and, if it happened, its execution.

    ``repaid_debt`` maps asset -> (quantity, oracle price) and
    ``seized_collateral`` maps asset -> (quantity, oracle price, execution
    price).  A missing ``completion_time`` means the liquidation stalled.
    """

    trigger_time: int
    completion_time: int | None
    account: str
    repaid_debt: Mapping[str, tuple[float, float]]
    seized_collateral: Mapping[str, tuple[float, float, float]]
    gas_units: float = 0.0
    gas_price: float = 0.0
    mev_cost: float = 0.0
    fees: float = 0.0

    def __post_init__(self):
        if self.completion_time is not None and self.completion_time < self.trigger_time:
            raise DataError(f"completion before trigger for {self.account} at t={self.trigger_time}")
        for name in ("gas_units", "gas_price", "mev_cost", "fees"):
            _check_money(name, getattr(self, name))

    @property
    def completed(self) -> bool:
        return self.completion_time is not None

    @property
    def delay_seconds(self) -> float:
        if self.completion_time is None:
            return math.inf
        return float(self.completion_time - self.trigger_time)

    @property
    def repaid_value(self) -> float:
        return sum(q * p for q, p in self.repaid_debt.values())

    @property
    def seized_oracle_value(self) -> float:
        return sum(q * p for q, p, _ in self.seized_collateral.values())

    @property
    def proceeds(self) -> float:
        return sum(q * x for q, _, x in self.seized_collateral.values())

    @property
    def execution_cost(self) -> float:
        return self.gas_units * self.gas_price + self.mev_cost

    @property
    def a0_violation(self) -> bool:
        """Execution above the oracle mark on some seized asset."""
        return any(x > p for _, p, x in self.seized_collateral.values())

    def deviation(self, asset: str) -> float:
        """Execution deviation for one asset, clipped at 0 for A0 violators."""
        _, p, x = self.seized_collateral[asset]
        if p <= 0:
            raise DomainError(f"non-positive oracle price for {asset}")
        return max(0.0, 1.0 - x / p)

    def mean_deviation(self) -> float:
        """Oracle-value-weighted deviation across seized assets."""
        total = self.seized_oracle_value
        if total <= 0:
            return 0.0
        return sum(q * p * self.deviation(a) for a, (q, p, _) in self.seized_collateral.items()) / total


@dataclass(frozen=True, eq=False)
class OracleSeries:
    """Oracle marks for one asset, plus the update log and optional reference."""

    asset: AssetId
    times: np.ndarray
    prices: np.ndarray
    is_update: np.ndarray
    reference: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.int64)
        p = np.asarray(self.prices, dtype=float)
        u = np.asarray(self.is_update, dtype=bool)
        if not (len(t) == len(p) == len(u)):
            raise DataError(f"oracle series {self.asset.symbol}: length mismatch")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise DataError(f"oracle series {self.asset.symbol}: times not strictly increasing")
        if np.any(~np.isfinite(p)) or np.any(p <= 0):
            raise DataError(f"oracle series {self.asset.symbol}: prices must be positive")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "prices", p)
        object.__setattr__(self, "is_update", u)
        if self.reference is not None:
            r = np.asarray(self.reference, dtype=float)
            if len(r) != len(t):
                raise DataError(f"oracle series {self.asset.symbol}: reference length mismatch")
            ok = ~np.isnan(r)
            if np.any(r[ok] <= 0) or np.any(~np.isfinite(r[ok])):
                raise DataError(f"oracle series {self.asset.symbol}: reference prices must be positive")
            object.__setattr__(self, "reference", r)

    @property
    def update_times(self) -> np.ndarray:
        return self.times[self.is_update]

    @property
    def has_reference(self) -> bool:
        return self.reference is not None and bool(np.any(~np.isnan(self.reference)))

    def price_at(self, t: int) -> float:
        """Last mark at or before ``t``."""
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        if i < 0:
            raise DataError(f"no oracle price for {self.asset.symbol} at or before t={t}")
        return float(self.prices[i])


@dataclass(frozen=True)
class DepthSnapshot:
    asset: str
    time: int
    depth: float
    venue: str

    def __post_init__(self):
        if not (math.isfinite(self.depth) and self.depth > 0):
            raise DataError(f"depth for {self.asset} at t={self.time} must be positive, got {self.depth}")


@dataclass(frozen=True)
class GasPoint:
    time: int
    gas_price: float
    priority_fee: float | None = None

    def __post_init__(self):
        _check_money("gas_price", self.gas_price)
        if self.priority_fee is not None:
            _check_money("priority_fee", self.priority_fee)


def _price(prices: Mapping[str, float], asset: str) -> float:
    try:
        return float(prices[asset])
    except KeyError:
        raise DataError(f"missing price for asset {asset}") from None


def share_price_and_loss(assets_book: float, share_supply: float, entry_price: float, exit_price: float) -> tuple[float, float]:
    if share_supply <= 0:
        raise DomainError("share supply must be positive")
    if entry_price <= 0:
        raise DomainError("entry price must be positive")
    return assets_book / share_supply, max(0.0, 1.0 - exit_price / entry_price)


def acr(assets_liq: float, liabilities: float) -> float:
    """Asset coverage ratio A/L."""
    if liabilities <= 0:
        raise DomainError("liabilities must be positive")
    return assets_liq / liabilities


def utilization(borrows: float, deposits: float) -> float:
    if deposits <= 0:
        raise DomainError("deposits must be positive")
    if borrows > deposits:
        raise DataError(f"borrows {borrows} exceed deposits {deposits}")
    return borrows / deposits


def health_factor(position: PositionRecord, prices: Mapping[str, float], params: ParamVector) -> float:
    """lltv-weighted collateral value over oracle-valued debt; +inf without debt."""
    debt = sum(q * _price(prices, a) for a, q in position.debt.items())
    coll = 0.0
    for a, q in position.collateral.items():
        if a not in params.lltv:
            raise DataError(f"no lltv for collateral asset {a}")
        coll += params.lltv[a] * _price(prices, a) * q
    if debt <= 0:
        return math.inf
    return coll / debt


def recovery_rate(event: LiquidationEvent) -> float:
    repaid = event.repaid_value
    if repaid <= 0:
        raise DomainError("recovery rate needs positive repaid debt")
    return (event.proceeds - event.fees - event.execution_cost) / repaid


def collateral_weights(snapshot: VaultSnapshot, prices: Mapping[str, float]) -> dict[str, float]:
    values = {a: q * _price(prices, a) for a, q in snapshot.collateral_qty.items()}
    total = sum(values.values())
    if total <= 0:
        raise DomainError("collateral weights need positive collateral value")
    return {a: v / total for a, v in values.items()}


def shortfall(liabilities: float, assets_liq: float) -> tuple[float, float]:
    """Shortfall (L-A)+ and its loss rate relative to L."""
    if liabilities <= 0:
        raise DomainError("liabilities must be positive")
    gap = max(0.0, liabilities - assets_liq)
    return gap, min(1.0, gap / liabilities)
