"""The eleven acceptance criteria at their stated tolerances.

Each check prints one PASS/FAIL line (also collected into the pytest
terminal summary).  Run directly with ``python3 tests/test_acceptance.py``
for the summary without pytest.
"""

from __future__ import annotations

import hashlib
import math
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from acceptance_log import record  # noqa: E402
from vaultcredit import aggregate, estimators, metrics, rng, simkit, structural, validate  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent


def coverage_bound() -> tuple[bool, str]:
    g = rng.stream(1, "acceptance:v1")
    start = time.perf_counter()
    violations = equal_mismatch = 0
    n = 10_000
    for i in range(n):
        k = int(g.integers(1, 6))
        w = g.dirichlet(np.ones(k))
        weights = {f"A{j}": float(x) for j, x in enumerate(w)}
        eps = g.uniform(0.0, 0.999, k)
        if i % 4 == 0:
            eps[:] = 0.0
        elif i % 4 == 1:
            eps[g.random(k) < 0.5] = 0.0
        ratio = float(g.uniform(0.2, 3.0))
        res = metrics.v1_stressed_coverage(weights, {"s": {f"A{j}": float(e) for j, e in enumerate(eps)}}, ratio)
        v1 = res.overall.value
        if v1 > ratio:
            violations += 1
        if (v1 == ratio) != bool(np.all(eps == 0)):
            equal_mismatch += 1
    took = time.perf_counter() - start
    ok = violations == 0 and equal_mismatch == 0 and took < 5.0
    return ok, f"{n} draws, {violations} above ACR, {equal_mismatch} equality mismatches, {took:.2f}s (limit 5s)"


def breach_threshold() -> tuple[bool, str]:
    res = metrics.v1_stressed_coverage({"A": 1.0}, {"at": {"A": 0.2}, "below": {"A": 0.2 - 1e-9}, "above": {"A": 0.2 + 1e-9}}, 1.25)
    at = res.per_scenario["at"]
    thr = at.diagnostics["breach_threshold"]
    ok = (abs(at.value - 1.0) <= 1e-12 and abs(thr - 0.2) <= 1e-12
          and res.per_scenario["below"].value > 1.0 and res.per_scenario["above"].value < 1.0)
    return ok, f"V1(0.2)={at.value!r}, threshold={thr!r}, tol 1e-12"


def _v2_paths(n: int) -> tuple[metrics.LiquidationPaths, dict, dict]:
    g = rng.stream(3, "acceptance:v2")
    assets = ("A", "B", "C")
    prices = np.array([100.0, 50.0, 10.0]) * np.exp(-0.3 + 0.2 * g.standard_normal((n, 3)))
    depth = g.uniform(2e6, 6e6, (n, 3))
    share = g.dirichlet(np.ones(3), n)
    volumes = share * 1e6  # unit notional; the grid scales it
    qty = {"A": 20_000.0, "B": 30_000.0, "C": 100_000.0}
    lam = {"A": 0.2, "B": 0.3, "C": 0.4}
    return metrics.LiquidationPaths(assets, prices, volumes, depth, np.zeros(n)), qty, lam


def v2_convexity() -> tuple[bool, str]:
    start = time.perf_counter()
    paths, qty, lam = _v2_paths(10_000)
    grid = np.linspace(0.0, 1.9, 20)
    liabilities = 3.0e6
    lam2 = {a: 2 * v for a, v in lam.items()}
    v, v2, clipped = [], [], 0
    for s in grid:
        m1 = metrics.v2_expected_shortfall(liabilities, qty, lam, paths, volume_scale=float(s))
        m2 = metrics.v2_expected_shortfall(liabilities, qty, lam2, paths, volume_scale=float(s))
        v.append(m1.value)
        v2.append(m2.value)
        clipped += m1.diagnostics["clipped_paths"] + m2.diagnostics["clipped_paths"]
    d2 = np.diff(v, 2)
    took = time.perf_counter() - start
    mono = all(b >= a for a, b in zip(v, v2))
    ok = d2.min() >= -1e-9 and mono and clipped == 0 and took < 30.0 and v[-1] > v[0]
    return ok, (f"min second difference {d2.min():.3e} (>= -1e-9), lambda->2lambda monotone={mono}, "
                f"V2 from {v[0]:.1f} to {v[-1]:.1f}, {took:.2f}s at 10000 paths (limit 30s)")


def v3_oracle() -> tuple[bool, str]:
    start = time.perf_counter()
    fit = estimators.UtilizationFit(0.0, 0.01)
    m = metrics.v3_boundary_hitting(0.9, fit, 24, 100_000, seed=4)
    exact = simkit.first_passage_analytic(0.9, 1.0, 0.0, 0.01, 24)
    se = m.diagnostics["std_error"]
    within = abs(m.value - exact) <= 3 * se
    grid = [0.80, 0.85, 0.90, 0.95, 0.99]
    vals = [metrics.v3_boundary_hitting(u, fit, 24, 100_000, seed=4).value for u in grid]
    mono = all(b >= a for a, b in zip(vals, vals[1:]))
    took = time.perf_counter() - start
    ok = within and mono and took < 60.0
    return ok, (f"MC {m.value:.5f} vs analytic {exact:.5f} (|diff|={abs(m.value - exact):.2e}, 3SE={3 * se:.2e}); "
                f"monotone over u0 {grid}: {mono}; {took:.2f}s (limit 60s)")


def lambda_recovery() -> tuple[bool, str]:
    clean = estimators.fit_impact(simkit.impact_sample(0.02, 200, seed=5))
    err = abs(clean.lam["A"] - 0.02)
    noisy = estimators.fit_impact(simkit.impact_sample(0.03, 400, seed=5, beta_clr=0.5, noise=1e-4), include_clr=True)
    lam_ok = abs(noisy.lam["A"] - 0.03) <= 3 * noisy.std_errors["A"]
    beta_ok = abs(noisy.beta_clr - 0.5) <= 3 * noisy.beta_clr_se
    ok = err <= 1e-10 and lam_ok and beta_ok
    return ok, (f"noiseless |err|={err:.1e} (tol 1e-10); noisy lambda {noisy.lam['A']:.6f}+-{noisy.std_errors['A']:.1e}, "
                f"beta {noisy.beta_clr:.5f}+-{noisy.beta_clr_se:.1e} (within 3 HAC SE: {lam_ok and beta_ok})")


def vcs_operators() -> tuple[bool, str]:
    g = rng.stream(6, "acceptance:vcs")
    zeroing = 0
    for i in range(5):
        s = g.uniform(0.01, 1.0, 5)
        s[i] = 0.0
        zeroing += aggregate.vcs(s).vcs_mult == 0.0
    bad = 0
    for _ in range(10_000):
        r = aggregate.vcs(g.random(5))
        bad += r.vcs_mult > r.vcs_add
    ok = zeroing == 5 and bad == 0
    return ok, f"single-zero patterns zeroed {zeroing}/5; mult > add in {bad}/10000 random vectors"


def level3_constants() -> tuple[bool, str]:
    def graph(k: int, q: float) -> structural.DependencyGraph:
        return structural.DependencyGraph(tuple(structural.GraphNode(f"n{i}", "protocol", q) for i in range(k)))

    one = structural.code_failure_prob(graph(1, 0.0013), 1.0).q_code
    worst_marg = 0.0
    for q in (0.0013, 0.01, 0.05):
        for k in range(1, 8):
            step = structural.code_failure_prob(graph(k + 1, q)).q_code - structural.code_failure_prob(graph(k, q)).q_code
            node = structural.code_failure_prob(graph(k + 1, q)).marginal["n0"]
            worst_marg = max(worst_marg, abs(step - structural.homogeneous_marginal(q, k)), abs(node - structural.homogeneous_marginal(q, k)))
    q = 0.0013
    at = structural.dominance_check(q, q).verdict
    above = structural.dominance_check(math.nextafter(q, 1.0), q).verdict
    below = structural.dominance_check(math.nextafter(q, 0.0), q).verdict
    ok = abs(one - 0.0013) <= 1e-15 and worst_marg <= 1e-15 and at == "L1-dominant" and above == "L3-dominant" and below == "L1-dominant"
    return ok, f"k=1 q_code={one!r}; max marginal error {worst_marg:.1e} (tol 1e-15); verdict at/above equality: {at}/{above}"


def structural_constants() -> tuple[bool, str]:
    lev = structural.leverage_multiplier(0.80)
    trig = structural.trigger_price_ratio(0.8, 0.9)
    gap = metrics.market_hours_gap(100.0, 0.2, 2.0)
    ok = abs(lev - 5.0) <= 1e-9 and abs(trig - 0.8 / 0.9) <= 1e-9 and abs(gap - 100 * 0.2 * math.sqrt(2 / 365)) <= 1e-9
    return ok, f"leverage {lev!r}, trigger ratio {trig!r}, open gap {gap!r} (tol 1e-9)"


PI_WORLD = simkit.WorldConfig(
    assets=(simkit.AssetConfig("ETH", price0=100.0, vol=0.01, impact_lambda=0.3, depth=2e6),
            simkit.AssetConfig("BTC", price0=200.0, vol=0.008, impact_lambda=0.25, depth=3e6)),
    hours=1000, oracle_heartbeat_hours=6, oracle_deviation=0.01, reference_noise=0.001,
    n_accounts=30, crashes=(simkit.Crash(400, 0.25),),
)


def pi_bounds() -> tuple[bool, str]:
    pi2_bad = pi1_bad = 0
    worst_slack = math.inf
    for seed in range(50):
        w = simkit.generate(PI_WORLD, seed)
        truth = w.truth
        if truth.failure_prob is None:
            pi2_bad += 1
            continue
        bound = validate.pi2_liquidation_bound(w.bundle.liquidations, 1.0)
        pi2_bad += bound > truth.failure_prob + 1e-12
        for a in ("ETH", "BTC"):
            s = w.bundle.oracles[a]
            res = validate.pi1_oracle_bound(s.prices - s.reference)
            slack = truth.eta_variance(a) - res.lower_bound
            worst_slack = min(worst_slack, slack)
            pi1_bad += slack < 0
    ok = pi2_bad == 0 and pi1_bad == 0
    return ok, f"50 worlds: pi2 above truth in {pi2_bad}; pi1 bound above Var(eta) in {pi1_bad}/100 asset-worlds (min slack {worst_slack:.3g})"


def backtest_direction() -> tuple[bool, str]:
    passes = 0
    for seed in range(100):
        v1, y = simkit.backtest_population(200, seed)
        res = validate.backtest_v1(v1, y)
        passes += res.alpha1 < 0 and res.directional_pass
    return passes >= 95, f"{passes}/100 replications with alpha1 < 0 and directional_pass (need >= 95)"


def _score(out: Path, workers: int) -> bytes:
    cmd = [sys.executable, "-m", "vaultcredit", "score", "--config", str(ROOT / "demo" / "config.json"),
           "--out", str(out), "--workers", str(workers)]
    subprocess.run(cmd, check=True, capture_output=True)
    return (out / "report.json").read_bytes()


def demo_determinism() -> tuple[bool, str]:
    start = time.perf_counter()
    with tempfile.TemporaryDirectory() as d:
        reports = [_score(Path(d) / f"run{i}", w) for i, w in enumerate((1, 1, 4))]
    took = time.perf_counter() - start
    digests = [hashlib.sha256(r).hexdigest()[:12] for r in reports]
    ok = len(set(reports)) == 1 and took < 120.0
    return ok, f"sha256 {digests} for workers (1,1,4); {took:.1f}s (limit 120s)"


CRITERIA = [
    (1, "coverage bound", coverage_bound),
    (2, "breach threshold", breach_threshold),
    (3, "V2 convexity and impact monotonicity", v2_convexity),
    (4, "V3 first-passage match and u0 monotonicity", v3_oracle),
    (5, "impact coefficient recovery", lambda_recovery),
    (6, "VCS operators", vcs_operators),
    (7, "code-failure constants", level3_constants),
    (8, "structural constants", structural_constants),
    (9, "partial-identification bounds vs truth", pi_bounds),
    (10, "backtest direction", backtest_direction),
    (11, "end-to-end determinism", demo_determinism),
]


@pytest.mark.parametrize("number,title,check", CRITERIA, ids=[f"criterion_{n:02d}" for n, _, _ in CRITERIA])
def test_criterion(number, title, check):
    ok, detail = check()
    record(number, title, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for number, title, check in CRITERIA:
        ok, detail = check()
        record(number, title, ok, detail)
        failed += not ok
    sys.exit(1 if failed else 0)
