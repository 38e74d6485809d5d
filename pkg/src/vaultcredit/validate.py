"""Backtesting, the timing Gap diagnostic and partial-identification bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .core import LiquidationEvent
from .errors import DegenerateData, DomainError, InsufficientData, Undefined

Z_95 = 1.6448536269514722


@dataclass(frozen=True)
class Episode:
    v1: float
    shortfall: bool
    shortfall_hours: float | None = None  # time from onset to first shortfall
    latency_hours: float | None = None  # observed governance/operator response time


@dataclass(frozen=True)
class BacktestResult:
    alpha0: float
    alpha1: float
    alpha1_std_error: float
    n_episodes: int
    directional_pass: bool
    iterations: int
    wald_z: float

    def to_dict(self) -> dict:
        return {
            "alpha0": self.alpha0,
            "alpha1": self.alpha1,
            "alpha1_std_error": self.alpha1_std_error,
            "wald_z": self.wald_z,
            "n_episodes": self.n_episodes,
            "directional_pass": self.directional_pass,
            "iterations": self.iterations,
        }


def _separated(x: np.ndarray, y: np.ndarray) -> bool:
    x1, x0 = x[y == 1], x[y == 0]
    return x1.max() <= x0.min() or x0.max() <= x1.min()


def backtest_v1(v1: Sequence[float], shortfall: Sequence[bool], min_episodes: int = 10, tol: float = 1e-10, max_iter: int = 100) -> BacktestResult:
    """Logistic regression of the shortfall indicator on V1 at onset.

    ``directional_pass`` requires alpha1 < 0 and a one-sided Wald test
    significant at 5%.
    """
    x = np.asarray(v1, dtype=float)
    y = np.asarray(shortfall, dtype=float)
    n = len(x)
    if n != len(y):
        raise DomainError("V1 and outcome arrays differ in length")
    if n < min_episodes:
        raise InsufficientData(f"backtest needs {min_episodes} episodes", n, min_episodes)
    pos = int(y.sum())
    diag = {"n": n, "n_shortfall": pos}
    if pos == 0 or pos == n:
        raise DegenerateData("single-class outcomes", reason="single_class", **diag)
    if np.ptp(x) == 0:
        raise DegenerateData("V1 has no variation", reason="constant_regressor", **diag)
    if _separated(x, y):
        raise DegenerateData("outcomes are separated by V1", reason="separation", **diag)
    X = np.column_stack([np.ones(n), x])
    beta = np.zeros(2)
    for it in range(1, max_iter + 1):
        p = special.expit(X @ beta)
        w = p * (1.0 - p)
        hess = X.T @ (X * w[:, None])
        step = np.linalg.solve(hess, X.T @ (y - p))
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    else:
        raise DegenerateData("Newton iterations did not converge", reason="no_convergence", **diag)
    p = special.expit(X @ beta)
    cov = np.linalg.inv(X.T @ (X * (p * (1.0 - p))[:, None]))
    se = float(math.sqrt(cov[1, 1]))
    z = float(beta[1] / se)
    return BacktestResult(float(beta[0]), float(beta[1]), se, n, bool(beta[1] < 0 and z < -Z_95), it, z)


def gap_diagnostic(episodes: Sequence[Episode], delta_star_hours: float) -> float:
    """Share of episodes reaching shortfall within the response window minus
    the share where the observed response came within it."""
    if not episodes:
        raise DomainError("gap diagnostic needs at least one episode")
    fast = np.mean([e.shortfall and e.shortfall_hours is not None and e.shortfall_hours <= delta_star_hours for e in episodes])
    timely = np.mean([e.latency_hours is not None and e.latency_hours <= delta_star_hours for e in episodes])
    return float(fast - timely)


@dataclass(frozen=True)
class Pi1Bound:
    spread_variance: float
    lower_bound: float
    mean_spread: float
    bias_sign: int
    lead_lag: dict[int, float] = field(default_factory=dict)
    n_obs: int = 0

    def to_dict(self) -> dict:
        return {
            "spread_variance": self.spread_variance,
            "lower_bound": self.lower_bound,
            "mean_spread": self.mean_spread,
            "bias_sign": self.bias_sign,
            "lead_lag": {str(k): v for k, v in sorted(self.lead_lag.items())},
            "n_obs": self.n_obs,
        }


def _autocov(x: np.ndarray, lag: int) -> float:
    d = x - x.mean()
    return float(np.dot(d[lag:], d[:-lag]) / len(d)) if lag else float(np.dot(d, d) / len(d))


def _xcorr(a: np.ndarray, b: np.ndarray, lag: int) -> float:
    """corr(a_t, b_{t-lag})."""
    if lag > 0:
        a, b = a[lag:], b[:-lag]
    elif lag < 0:
        a, b = a[:lag], b[-lag:]
    if len(a) < 3 or np.std(a) == 0 or np.std(b) == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def pi1_oracle_bound(spread: Sequence[float], oracle_returns: Sequence[float] | None = None, reference_returns: Sequence[float] | None = None, max_lag: int = 24, min_obs: int = 30) -> Pi1Bound:
    """What the oracle/reference spread S = P_oracle - P_ref identifies.

    ``spread_variance`` is Var(S).  With reference noise independent of the
    oracle error, Var(S) = Var(error) + Var(noise), so it over-states the
    error variance.  ``lower_bound`` is the lag-1 autocovariance of S
    (floored at 0): serially independent reference noise drops out of it,
    leaving the error's own lag-1 autocovariance, which cannot exceed the
    error variance.  The sign of mean(S) identifies the bias direction.
    ``lead_lag`` holds corr(oracle_t, reference_{t-k}) for |k| <= max_lag
    when return series are given.
    """
    s = np.asarray(spread, dtype=float)
    n = len(s)
    if n < min_obs:
        raise InsufficientData(f"spread bound needs {min_obs} observations", n, min_obs)
    var = float(np.var(s))
    lb = max(0.0, _autocov(s, 1))
    mean = float(s.mean())
    sign = int(np.sign(mean)) if abs(mean) > 1e-12 * max(1.0, float(np.abs(s).max())) else 0
    ll = {}
    if oracle_returns is not None and reference_returns is not None:
        a = np.asarray(oracle_returns, dtype=float)
        b = np.asarray(reference_returns, dtype=float)
        for k in range(-max_lag, max_lag + 1):
            ll[k] = _xcorr(a, b, k)
    return Pi1Bound(var, lb, mean, sign, ll, n)


def pi2_liquidation_bound(events: Sequence[LiquidationEvent], tau_max_hours: float) -> float:
    """Share of triggers still unliquidated after tau_max."""
    if not events:
        raise Undefined("no liquidation triggers")
    if tau_max_hours < 0:
        raise DomainError("tau_max must be >= 0")
    return sum(e.delay_seconds > tau_max_hours * 3600.0 for e in events) / len(events)
