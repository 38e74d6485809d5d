import filecmp
import shutil

import pytest

from vaultcredit import ingest
from vaultcredit.core import DAY
from vaultcredit.errors import ConfigError, DanglingReferenceError, DataError, OrderingError, SchemaError

T0 = 1704067200
H = 3600

MINIMAL = {
    "snapshots.csv": ["time,deposits,borrows,liabilities,assets_book,share_supply"]
    + [f"{T0 + i * H},1000,800,1000,1000,1000" for i in range(3)],
    "collateral.csv": ["time,asset,quantity"] + [f"{T0 + i * H},ETH,10" for i in range(3)],
    "oracle.csv": ["asset,time,price,is_update,reference_price"]
    + [f"ETH,{T0 + i * H},{100 + i},1,{100 + i}" for i in range(3)]
    + [f"USDC,{T0 + i * H},1,1," for i in range(3)],
    "params.csv": ["effective_time,asset,ltv0,lltv,liq_incentive,close_factor,cap,timelock_hours",
                   f"{T0},ETH,0.75,0.85,0.05,1.0,1e12,24"],
}


def write(tmp_path, files, **extra):
    content = {**files, **extra}
    for name, lines in content.items():
        (tmp_path / name).write_text("\n".join(lines) + "\n")
    return tmp_path


class TestLoad:
    def test_minimal(self, tmp_path):
        b = ingest.load_bundle(write(tmp_path, MINIMAL))
        assert len(b.snapshots) == 3
        assert b.collateral_assets == ("ETH",)
        assert b.debt_assets == ("USDC",)
        assert b.snapshots[-1].utilization == pytest.approx(0.8)

    def test_iso_timestamps(self, tmp_path):
        iso = dict(MINIMAL)
        iso["snapshots.csv"] = [MINIMAL["snapshots.csv"][0]] + [
            f"2024-01-01T0{i}:00:00Z,1000,800,1000,1000,1000" for i in range(3)]
        b = ingest.load_bundle(write(tmp_path, iso))
        assert list(b.snapshot_times) == [T0, T0 + H, T0 + 2 * H]

    def test_out_of_order(self, tmp_path):
        bad = dict(MINIMAL)
        bad["snapshots.csv"] = [MINIMAL["snapshots.csv"][0], MINIMAL["snapshots.csv"][2], MINIMAL["snapshots.csv"][1]]
        with pytest.raises(OrderingError) as err:
            ingest.load_bundle(write(tmp_path, bad))
        assert "snapshots.csv" in str(err.value) and "3" in str(err.value)

    def test_dangling_asset(self, tmp_path):
        liq = ["trigger_time,completion_time,account,asset,side,quantity,oracle_price,execution_price,gas_units,gas_price,mev_cost,fees",
               f"{T0},{T0 + 60},a,USDC,repaid,10,1.0,,1,1,0,0",
               f"{T0},{T0 + 60},a,DOGE,seized,1,11,10.5,1,1,0,0"]
        with pytest.raises(DanglingReferenceError) as err:
            ingest.load_bundle(write(tmp_path, MINIMAL, **{"liquidations.csv": liq}))
        assert "liquidations.csv" in str(err.value)

    def test_bad_header(self, tmp_path):
        bad = dict(MINIMAL)
        bad["params.csv"] = ["when,asset"] + MINIMAL["params.csv"][1:]
        with pytest.raises(SchemaError):
            ingest.load_bundle(write(tmp_path, bad))

    def test_missing_required(self, tmp_path):
        write(tmp_path, MINIMAL)
        (tmp_path / "params.csv").unlink()
        with pytest.raises(DataError):
            ingest.load_bundle(tmp_path)

    def test_negative_price(self, tmp_path):
        bad = dict(MINIMAL)
        bad["oracle.csv"] = MINIMAL["oracle.csv"][:1] + ["ETH,1704067200,-1,1,1"]
        with pytest.raises(SchemaError):
            ingest.load_bundle(write(tmp_path, bad))


class TestDepthReport:
    def test_demo_items(self, demo_dir):
        r = ingest.check_data_depth(ingest.load_bundle(demo_dir / "bundle")).by_item()
        assert r["oracle_prices"].status == "PASS"
        assert r["reference_prices"].status == "FAIL"  # 400 days of history against 730 required

    def test_short_liquidation_history_fails(self, tmp_path):
        liq = ["trigger_time,completion_time,account,asset,side,quantity,oracle_price,execution_price,gas_units,gas_price,mev_cost,fees",
               f"{T0},{T0 + 60},a,USDC,repaid,10,1.0,,1,1,0,0",
               f"{T0 + 60 * DAY},{T0 + 60 * DAY + 60},b,USDC,repaid,10,1.0,,1,1,0,0"]
        r = ingest.check_data_depth(ingest.load_bundle(write(tmp_path, MINIMAL, **{"liquidations.csv": liq}))).by_item()
        assert r["liquidations"].status == "FAIL"
        assert r["liquidations"].observed_days == pytest.approx(60.0)

    def test_absent_items_are_worst_case(self, tmp_path):
        r = ingest.check_data_depth(ingest.load_bundle(write(tmp_path, MINIMAL))).by_item()
        for item in ("mev_proxies", "gas", "depth", "rehypo_metadata", "liquidations"):
            assert r[item].status == "WORST-CASE"

    def test_monotone_in_requirement(self, demo_dir):
        b = ingest.load_bundle(demo_dir / "bundle")
        lenient = ingest.check_data_depth(b, {"oracle_prices": 10.0}).by_item()["oracle_prices"].status
        strict = ingest.check_data_depth(b, {"oracle_prices": 10_000.0}).by_item()["oracle_prices"].status
        assert (lenient, strict) == ("PASS", "FAIL")

    def test_relaxing_needs_force(self):
        with pytest.raises(ConfigError):
            ingest.resolve_depth_requirements({"gas": 30.0})
        assert ingest.resolve_depth_requirements({"gas": 30.0}, force=True)["gas"] == 30.0
        assert ingest.resolve_depth_requirements({"gas": 400.0})["gas"] == 400.0
        with pytest.raises(ConfigError):
            ingest.resolve_depth_requirements({"nonsense": 1.0})


def test_round_trip_is_identity(tmp_path, small_world):
    first, second = tmp_path / "a", tmp_path / "b"
    ingest.write_bundle(small_world.bundle, first)
    ingest.write_bundle(ingest.load_bundle(first), second)
    names = sorted(p.name for p in first.iterdir())
    match, mismatch, errors = filecmp.cmpfiles(first, second, names, shallow=False)
    assert not mismatch and not errors and len(match) >= 8


def test_mapping_input(tmp_path, demo_dir):
    shutil.copytree(demo_dir / "bundle", tmp_path / "b")
    paths = {name: tmp_path / "b" / name for name in ingest.HEADERS}
    b = ingest.load_bundle(paths)
    assert len(b.snapshots) > 100
