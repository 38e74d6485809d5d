from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
DEMO = ROOT / "demo"

sys.path.insert(0, str(Path(__file__).resolve().parent))

from acceptance_log import LINES  # noqa: E402


@pytest.fixture(scope="session")
def demo_dir() -> Path:
    return DEMO


@pytest.fixture(scope="session")
def small_world():
    """A short two-asset world with a planted crash, shared across tests."""
    from vaultcredit import simkit

    cfg = simkit.WorldConfig(
        assets=(
            simkit.AssetConfig("ETH", price0=100.0, vol=0.01, impact_lambda=0.3, depth=2e6),
            simkit.AssetConfig("BTC", price0=200.0, vol=0.008, impact_lambda=0.25, depth=3e6, hd=2, per_layer_ltv=(0.5,)),
        ),
        hours=1200,
        oracle_heartbeat_hours=6,
        oracle_deviation=0.01,
        n_accounts=30,
        crashes=(simkit.Crash(400, 0.25),),
    )
    return simkit.generate(cfg, 11)


def pytest_terminal_summary(terminalreporter):
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
