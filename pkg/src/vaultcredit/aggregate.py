"""Score normalization and the two Vault Credit Score operators."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError

METRICS = ("V1", "V2", "V3", "V4", "V5")
UNIFORM_WEIGHTS = (0.2, 0.2, 0.2, 0.2, 0.2)


@dataclass(frozen=True)
class NormalizationSpec:
    """Monotone piecewise-linear map from a raw metric to a [0,1] score.

    ``source`` names the field that is mapped: ``"value"`` or a diagnostics
    key of the metric record (V2 is scored on its loss-rate form).
    """

    metric: str
    breakpoints: tuple[tuple[float, float], ...]
    higher_is_safer: bool
    source: str = "value"

    def __post_init__(self):
        bp = tuple((float(x), float(y)) for x, y in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        if len(bp) < 2:
            raise ConfigError(f"{self.metric}: need at least two breakpoints")
        xs = [x for x, _ in bp]
        ys = [y for _, y in bp]
        if any(not math.isfinite(v) for v in xs + ys):
            raise ConfigError(f"{self.metric}: breakpoints must be finite")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ConfigError(f"{self.metric}: raw breakpoints must be strictly increasing")
        if any(not 0.0 <= y <= 1.0 for y in ys):
            raise ConfigError(f"{self.metric}: scores must lie in [0,1]")
        steps = [b - a for a, b in zip(ys, ys[1:])]
        if self.higher_is_safer:
            ok = all(s >= 0 for s in steps) and ys[0] == 0.0 and ys[-1] == 1.0
        else:
            ok = all(s <= 0 for s in steps) and ys[0] == 1.0 and ys[-1] == 0.0
        if not ok:
            raise ConfigError(f"{self.metric}: scores must run monotonically between endpoints 0 and 1 in the declared direction")

    @classmethod
    def from_dict(cls, metric: str, d: Mapping) -> "NormalizationSpec":
        try:
            return cls(metric, tuple(tuple(p) for p in d["breakpoints"]), bool(d["higher_is_safer"]), str(d.get("source", "value")))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{metric}: malformed normalization spec: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "breakpoints": [list(p) for p in self.breakpoints],
            "higher_is_safer": self.higher_is_safer,
            "source": self.source,
        }


@dataclass(frozen=True)
class NormalizationConfig:
    specs: Mapping[str, NormalizationSpec]
    calibrated: bool = False
    note: str = ""

    @classmethod
    def from_dict(cls, d: Mapping) -> "NormalizationConfig":
        metrics = d.get("metrics")
        if not isinstance(metrics, Mapping):
            raise ConfigError("normalization config needs a 'metrics' mapping")
        specs = {m: NormalizationSpec.from_dict(m, metrics[m]) for m in METRICS if m in metrics}
        missing = [m for m in METRICS if m not in specs]
        if missing:
            raise ConfigError(f"normalization config lacks {missing}")
        return cls(specs, bool(d.get("calibrated", False)), str(d.get("note", "")))

    @classmethod
    def load(cls, path: str | Path | None = None) -> "NormalizationConfig":
        if path is None:
            text = resources.files("vaultcredit").joinpath("data/normalization.json").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"normalization config is not valid JSON: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "calibrated": self.calibrated,
            "note": self.note,
            "metrics": {m: s.to_dict() for m, s in self.specs.items()},
        }


@dataclass(frozen=True)
class NormalizedScore:
    score: float
    worst_case: bool = False
    raw: float | None = None


def normalize(raw: float | None, spec: NormalizationSpec) -> NormalizedScore:
    """Map a raw metric value to [0,1]; undefined input scores 0."""
    if raw is None or (isinstance(raw, float) and math.isnan(raw)):
        return NormalizedScore(0.0, True, None)
    xs = np.array([x for x, _ in spec.breakpoints])
    ys = np.array([y for _, y in spec.breakpoints])
    if math.isinf(raw):
        s = ys[-1] if raw > 0 else ys[0]
    else:
        s = float(np.interp(raw, xs, ys))
    return NormalizedScore(min(1.0, max(0.0, float(s))), False, float(raw))


def metric_raw(record, spec: NormalizationSpec) -> float | None:
    """Pull the field a normalization rule scores from a metric record (None if undefined)."""
    if record is None:
        return None
    if spec.source == "value":
        return record.value
    v = record.diagnostics.get(spec.source)
    return None if v is None else float(v)


@dataclass(frozen=True)
class VcsReport:
    scores: tuple[float, ...]
    weights: tuple[float, ...]
    vcs_mult: float
    vcs_add: float
    worst_link: str
    names: tuple[str, ...] = field(default=METRICS)

    def to_dict(self) -> dict:
        return {
            "scores": dict(zip(self.names, self.scores)),
            "weights": dict(zip(self.names, self.weights)),
            "vcs_mult": self.vcs_mult,
            "vcs_add": self.vcs_add,
            "worst_link": self.worst_link,
        }


def vcs(scores: Sequence[float], weights: Sequence[float] = UNIFORM_WEIGHTS, names: Sequence[str] = METRICS) -> VcsReport:
    """Multiplicative (weakest-link) and weighted-additive scores."""
    s = tuple(float(x) for x in scores)
    w = tuple(float(x) for x in weights)
    if len(s) != len(names) or len(w) != len(names):
        raise ConfigError(f"expected {len(names)} scores and weights")
    if any(not 0.0 <= x <= 1.0 for x in s):
        raise ConfigError(f"scores must lie in [0,1], got {s}")
    if any(x < 0 for x in w) or abs(math.fsum(w) - 1.0) > 1e-12:
        raise ConfigError(f"weights must be non-negative and sum to 1, got {w}")
    mult = math.prod(s)
    add = math.fsum(wi * si for wi, si in zip(w, s))
    worst = names[min(range(len(s)), key=lambda i: (s[i], i))]
    return VcsReport(s, w, mult, add, worst, tuple(names))
