"""Code-integrity failure probabilities and closed-form structural diagnostics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import ConfigError, DomainError

NODE_KINDS = ("vault", "protocol", "oracle", "bridge", "messaging")
DEFAULT_K_Q = 3.0
FAT_TAIL_WARNING = (
    "buffer adequacy uses k_q=3 under a normal approximation; fat-tailed "
    "returns need materially larger buffers"
)


@dataclass(frozen=True)
class GraphNode:
    node_id: str
    kind: str
    q_annual: float


@dataclass(frozen=True)
class DependencyGraph:
    nodes: tuple[GraphNode, ...]
    edges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.nodes:
            raise ConfigError("dependency graph needs at least one node")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ConfigError("dependency graph node ids must be unique")
        for n in self.nodes:
            if n.kind not in NODE_KINDS:
                raise ConfigError(f"node {n.node_id}: unknown kind {n.kind!r}")
            if not 0.0 <= n.q_annual <= 1.0:
                raise ConfigError(f"node {n.node_id}: q_annual {n.q_annual} outside [0,1]")
        known = set(ids)
        for a, b in self.edges:
            if a not in known or b not in known:
                raise ConfigError(f"edge ({a},{b}) references an unknown node")

    @classmethod
    def from_dict(cls, d: dict) -> "DependencyGraph":
        try:
            nodes = tuple(GraphNode(str(n["id"]), str(n["kind"]), float(n["q_annual"])) for n in d["nodes"])
            edges = tuple((str(a), str(b)) for a, b in d.get("edges", []))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed dependency graph: {exc}") from exc
        return cls(nodes, edges)

    @classmethod
    def load(cls, path: str | Path) -> "DependencyGraph":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.node_id, "kind": n.kind, "q_annual": n.q_annual} for n in self.nodes],
            "edges": [list(e) for e in self.edges],
        }


@dataclass(frozen=True)
class CodeFailure:
    q_code: float
    per_node_q: dict[str, float]
    marginal: dict[str, float]
    horizon_years: float


def horizon_prob(q_annual: float, horizon_years: float) -> float:
    """Per-node failure probability over the horizon, memoryless scaling."""
    return -math.expm1(horizon_years * math.log1p(-q_annual)) if q_annual < 1 else 1.0


def code_failure_prob(graph: DependencyGraph, horizon_years: float = 1.0) -> CodeFailure:
    """Probability that at least one critical-path contract fails.

    Nodes are treated as independent, so this is a lower bound when failures
    are positively correlated.  ``marginal[i]`` is the increase in q_code
    from adding node i last, i.e. q_i times the survival of all others.
    """
    if horizon_years <= 0:
        raise DomainError("horizon must be positive")
    qs = {n.node_id: horizon_prob(n.q_annual, horizon_years) for n in graph.nodes}
    survive = math.prod(1.0 - q for q in qs.values())
    marginal = {}
    for i, qi in qs.items():
        others = math.prod(1.0 - q for j, q in qs.items() if j != i)
        marginal[i] = qi * others
    return CodeFailure(1.0 - survive, qs, marginal, horizon_years)


def homogeneous_marginal(q: float, k: int) -> float:
    """Increase in q_code from adding a (k+1)-th node with the same q."""
    return (1.0 - q) ** k * q


@dataclass(frozen=True)
class Dominance:
    verdict: str
    margin: float
    full_loss: float


def dominance_check(q_code: float, expected_l1_loss_rate: float, l3_loss_rate: float = 1.0) -> Dominance:
    for name, v in (("q_code", q_code), ("expected_l1_loss_rate", expected_l1_loss_rate)):
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"{name}={v} outside [0,1]")
    verdict = "L3-dominant" if q_code > expected_l1_loss_rate else "L1-dominant"
    full = (1.0 - q_code) * expected_l1_loss_rate + q_code * l3_loss_rate
    return Dominance(verdict, q_code - expected_l1_loss_rate, full)


def leverage_multiplier(ltv0: float, n: float = math.inf) -> float:
    """Total collateral exposure from re-depositing borrowed funds n times."""
    if not 0.0 < ltv0 < 1.0:
        raise DomainError(f"ltv0={ltv0} outside (0,1)")
    if n < 0:
        raise DomainError("loop count must be >= 0")
    if math.isinf(n):
        return 1.0 / (1.0 - ltv0)
    return (1.0 - ltv0 ** (n + 1)) / (1.0 - ltv0)


def cascade_multiplier(hd: int, per_layer: float | Sequence[float]) -> float:
    """Shock amplification through hd layers of share-token collateral.

    ``per_layer`` is either one multiplier used for every layer or the
    sequence of hd-1 layer multipliers.
    """
    if hd < 1 or int(hd) != hd:
        raise DomainError("hd must be a positive integer")
    if isinstance(per_layer, (int, float)):
        layers = [float(per_layer)] * (hd - 1)
    else:
        layers = [float(x) for x in per_layer]
        if len(layers) != hd - 1:
            raise DomainError(f"expected {hd - 1} layer multipliers, got {len(layers)}")
    if any(x < 1.0 for x in layers):
        raise DomainError("layer multipliers must be >= 1")
    return math.prod(layers)


def trigger_price_ratio(ltv0: float, lltv: float) -> float:
    if not 0.0 < ltv0 <= lltv <= 1.0:
        raise DomainError(f"need 0 < ltv0 <= lltv <= 1, got {ltv0}, {lltv}")
    return ltv0 / lltv


@dataclass(frozen=True)
class BufferCheck:
    buffer: float
    required: float
    passed: bool
    warning: str | None = None


def buffer_adequacy(ltv0: float, lltv: float, sigma_annual: float, monitor_freq_per_year: float, k_q: float = DEFAULT_K_Q) -> BufferCheck:
    if monitor_freq_per_year <= 0 or k_q <= 0:
        raise DomainError("monitoring frequency and k_q must be positive")
    if sigma_annual < 0:
        raise DomainError("sigma must be >= 0")
    buffer = lltv - ltv0
    required = k_q * sigma_annual / math.sqrt(monitor_freq_per_year)
    return BufferCheck(buffer, required, buffer >= required, FAT_TAIL_WARNING if k_q <= DEFAULT_K_Q else None)


@dataclass(frozen=True)
class ExitQueue:
    epochs: float
    seconds: float


def exit_queue_duration(queue_len: float, churn_per_epoch: float, epoch_seconds: float = 384.0) -> ExitQueue:
    if churn_per_epoch <= 0:
        raise DomainError("churn per epoch must be positive")
    if queue_len < 0:
        raise DomainError("queue length must be >= 0")
    epochs = queue_len / churn_per_epoch
    return ExitQueue(epochs, epochs * epoch_seconds)


@dataclass(frozen=True)
class WithdrawalCapacity:
    capacity: float
    liquidity_side: float
    strategy_side: float
    binding: str


def duration_bounded_withdrawal_capacity(
    deposits: float,
    utilization: float,
    strategy_fracs: Sequence[float] = (),
    strategy_caps: Sequence[float] = (),
) -> WithdrawalCapacity:
    if len(strategy_fracs) != len(strategy_caps):
        raise DomainError("strategy fractions and caps must have equal length")
    if sum(strategy_fracs) > 1 + 1e-12 or any(f < 0 for f in strategy_fracs):
        raise DomainError("strategy fractions must be >= 0 and sum to <= 1")
    if any(c < 0 for c in strategy_caps):
        raise DomainError("strategy caps must be >= 0")
    liquid = deposits * (1.0 - utilization)
    if strategy_fracs:
        strat = sum(f * c if f > 0 else 0.0 for f, c in zip(strategy_fracs, strategy_caps))
    else:
        strat = math.inf
    binding = "liquidity" if liquid <= strat else "strategy"
    return WithdrawalCapacity(min(liquid, strat), liquid, strat, binding)


@dataclass(frozen=True)
class OracleAdequacy:
    required_q0: float
    passed: bool


def oracle_adequacy(q0: float, q_min: float, worst_case_quality_std: float, v4_sensitivity: float) -> OracleAdequacy:
    if v4_sensitivity <= 0:
        raise DomainError("V4 sensitivity must be positive")
    required = q_min + worst_case_quality_std / v4_sensitivity
    return OracleAdequacy(required, q0 >= required)
