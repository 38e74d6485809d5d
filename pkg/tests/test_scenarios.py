import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vaultcredit import scenarios as sc
from vaultcredit import simkit
from vaultcredit.core import VaultSnapshot
from vaultcredit.errors import ConfigError, ScenarioEvaluationError


def flat_world(crash=None, hours=800):
    crashes = (simkit.Crash(crash, 0.3),) if crash is not None else ()
    cfg = simkit.WorldConfig(assets=(simkit.AssetConfig("ETH", vol=0.0),), hours=hours, crashes=crashes)
    return simkit.generate(cfg, 1).bundle


class TestHistorical:
    def test_planted_crash(self):
        out = sc.build_historical(flat_world(crash=300), q_h=0.9)
        assert len(out) == 1
        s = out[0]
        assert s.kind == "historical"
        assert s.price_shock["ETH"] == pytest.approx(0.3)
        assert s.provenance["start"] >= simkit.T0 + 300 * 3600

    def test_calm_history(self):
        assert sc.build_historical(flat_world()) == []

    def test_q_zero_keeps_every_episode(self, small_world):
        everything = sc.build_historical(small_world.bundle, q_h=0.0)
        assert len(everything) >= len(sc.build_historical(small_world.bundle, q_h=0.5)) >= 1

    def test_monotone_in_threshold(self, small_world):
        ids = [{s.id for s in sc.build_historical(small_world.bundle, q_h=q)} for q in (0.5, 0.75, 0.9, 0.99)]
        for looser, stricter in zip(ids, ids[1:]):
            assert stricter <= looser

    def test_bad_threshold(self, small_world):
        with pytest.raises(ConfigError):
            sc.build_historical(small_world.bundle, q_h=1.5)


class TestParametric:
    def test_grid_size(self):
        out = sc.build_parametric(["A", "B"], (0.1, 0.2, 0.3), (0.5, 1.0))
        assert len(out) == 6
        assert len({s.id for s in out}) == 6
        assert all(s.price_shock == {"A": s.provenance["drawdown"], "B": s.provenance["drawdown"]} for s in out)

    def test_empty_axis(self):
        with pytest.raises(ConfigError):
            sc.build_parametric(["A"], (), (1.0,))

    def test_out_of_range(self):
        with pytest.raises(ConfigError):
            sc.build_parametric(["A"], (1.0,), (1.0,))
        with pytest.raises(ConfigError):
            sc.build_parametric(["A"], (0.1,), (0.0,))

    def test_default_grid_halves_depth(self):
        assert any(s.depth_shock["A"] == 0.5 for s in sc.build_parametric(["A"]))


def drawdown_sum(s):
    return -sum(s.price_shock.values()) - sum(1 - v for v in s.depth_shock.values())


class TestAdversarial:
    def test_corner(self):
        r = sc.build_adversarial({"drawdown:A": (0.0, 0.4), "depth:A": (0.5, 1.0)}, drawdown_sum, resolution=5)
        assert r.scenario.price_shock["A"] == pytest.approx(0.4)
        assert r.scenario.depth_shock["A"] == pytest.approx(0.5)
        assert r.n_evaluated == 25

    def test_tie_breaks_on_id(self):
        r = sc.build_adversarial({"drawdown:A": (0.0, 0.4)}, lambda s: 0.0, resolution=3)
        assert r.scenario.id == min(r.values)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 0.5), st.floats(0.5, 1.0), st.floats(0.1, 5), st.integers(2, 6))
    def test_matches_enumeration(self, c_dd, c_depth, scale, res):
        def f(s):
            return scale * (s.price_shock["A"] - c_dd) ** 2 + (s.depth_shock["A"] - c_depth) ** 2

        bounds = {"drawdown:A": (0.0, 0.5), "depth:A": (0.5, 1.0)}
        r = sc.build_adversarial(bounds, f, resolution=res)
        brute = min(f(sc.scenario_from_coords({"depth:A": float(b), "drawdown:A": float(a)}))
                    for a, b in itertools.product(np.linspace(0, 0.5, res), np.linspace(0.5, 1.0, res)))
        assert r.value == brute
        assert all(r.value <= v for v in r.values.values())

    def test_objective_failure_names_point(self):
        def boom(s):
            raise ValueError("nope")

        with pytest.raises(ScenarioEvaluationError) as err:
            sc.build_adversarial({"drawdown:A": (0.0, 0.1)}, boom, resolution=2)
        assert "drawdown:A" in str(err.value)

    def test_bad_inputs(self):
        with pytest.raises(ConfigError):
            sc.build_adversarial({}, drawdown_sum)
        with pytest.raises(ConfigError):
            sc.build_adversarial({"drawdown:A": (0.5, 0.1)}, drawdown_sum)
        with pytest.raises(ConfigError):
            sc.scenario_from_coords({"vol:A": 0.1})

    def test_k_sigma_box(self):
        box = sc.k_sigma_bounds({"A": 0.01}, 24)
        assert box["drawdown:A"][1] == pytest.approx(1 - np.exp(-3 * 0.01 * np.sqrt(24)))
        assert box["depth:A"] == (0.5, 1.0)


class TestConsistency:
    snap = VaultSnapshot(0, 100.0, 80.0, 100.0, 100.0, {"A": 1.0}, 100.0)

    def test_flows_reach_full_utilization(self):
        s = sc.ScenarioSpec("s", "parametric", {}, delta_borrows=10.0, delta_deposits=10.0, utilization=1.0)
        c = sc.check_consistency(s, self.snap)
        assert c.passed and c.implied_utilization == pytest.approx(1.0)

    def test_claimed_utilization_unreachable(self):
        s = sc.ScenarioSpec("s", "parametric", {}, utilization=0.95)
        c = sc.check_consistency(s, self.snap)
        assert not c.passed and c.code == "inconsistent" and c.implied_utilization == pytest.approx(0.8)

    def test_deposits_exhausted(self):
        s = sc.ScenarioSpec("s", "parametric", {}, delta_deposits=100.0)
        assert sc.check_consistency(s, self.snap).code == "deposits_exhausted"
        assert sc.scenario_utilization(s, self.snap) == 1.0

    def test_admissible(self):
        good = sc.ScenarioSpec("good", "parametric", {})
        bad = sc.ScenarioSpec("bad", "parametric", {}, utilization=0.95)
        with pytest.raises(ConfigError):
            sc.admissible([good, bad], self.snap)
        keep, warnings = sc.admissible(sc.flag_inconsistent([good, bad], self.snap), self.snap)
        assert [s.id for s in keep] == ["good"] and len(warnings) == 1


def test_scenario_file_round_trip(tmp_path):
    out = sc.build_parametric(["A", "B"], (0.1,), (0.5,))
    sc.dump_scenarios(out, tmp_path / "s.json")
    assert sc.load_scenarios(tmp_path / "s.json") == out
