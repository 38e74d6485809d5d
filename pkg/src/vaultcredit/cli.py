"""``vce`` command line: ingest, estimate, stress, score, backtest, simulate."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path
from typing import Mapping

from . import pipeline
from .errors import VaultCreditError

COMMANDS = ("ingest", "estimate", "stress", "score", "backtest", "simulate")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_atomic(out: Path, files: Mapping[str, str]) -> None:
    """Write every file or none: stage in a sibling temp dir, then move in."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    os.chmod(tmp, 0o755)
    try:
        for name, text in files.items():
            p = tmp / name
            p.parent.mkdir(parents=True, exist_ok=True)
            with open(p, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        if not out.exists():
            os.replace(tmp, out)
            return
        if not out.is_dir():
            raise VaultCreditError(f"output path {out} exists and is not a directory")
        for name in files:
            dest = out / name
            dest.parent.mkdir(parents=True, exist_ok=True)
            os.replace(tmp / name, dest)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    wr.writerows(rows)
    return buf.getvalue()


def flat_tables(report: Mapping) -> dict[str, str]:
    rows = []
    for sid, rec in sorted(report["metrics"]["per_scenario"].items()):
        for m in ("V1", "V2", "V3"):
            v = rec.get(m)
            rows.append([sid, m, "" if v is None or v["value"] is None else repr(v["value"])])
    for m, v in sorted(report["metrics"]["overall"].items()):
        rows.append(["overall", m, "" if v is None or v["value"] is None else repr(v["value"])])
    scores = [[m, repr(s["score"]), s["worst_case"]] for m, s in sorted(report["vcs"]["normalized"].items())]
    scores += [["vcs_mult", repr(report["vcs"]["vcs_mult"]), ""], ["vcs_add", repr(report["vcs"]["vcs_add"]), ""]]
    return {
        "metrics.csv": _csv(["scenario", "metric", "value"], rows),
        "scores.csv": _csv(["metric", "score", "worst_case"], scores),
        "warnings.csv": _csv(["warning"], [[w] for w in report["warnings"]]),
    }


def _overrides(args) -> dict:
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.bundle is not None:
        over["bundle"] = str(Path(args.bundle).resolve())
    if args.scenario_set is not None:
        over["scenarios"] = {"set": args.scenario_set}
    return over


def cmd_simulate(args) -> dict[str, str]:
    from . import simkit  # the scoring path never imports the generator

    if args.config is None:
        raise VaultCreditError("simulate needs --config pointing at a world config")
    cfg = simkit.WorldConfig.load(args.config)
    world = simkit.generate(cfg, args.seed if args.seed is not None else 0, args.hours)
    with tempfile.TemporaryDirectory() as d:
        simkit.write_world(world, d, include_paths=not args.no_paths)
        files = {p.name: p.read_text(encoding="utf-8") for p in sorted(Path(d).iterdir())}
    files["world_config.json"] = dumps(world.config.to_dict())
    return files


def run(argv: list[str] | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = argparse.ArgumentParser(prog="vce", description="Vault credit-risk engine")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON config (world config for simulate)")
    parser.add_argument("--seed", type=int, help="master seed, overrides the config")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--workers", type=int, default=1, help="threads for per-scenario work")
    parser.add_argument("--force", action="store_true", help="allow relaxed data-depth requirements")
    parser.add_argument("--scenario-set", choices=pipeline.SCENARIO_SETS)
    parser.add_argument("--format", choices=("json", "csv"), default="json", help="csv adds flat tables next to the JSON")
    parser.add_argument("--bundle", help="bundle directory, overrides the config")
    parser.add_argument("--hours", type=int, help="simulate: world length in hours")
    parser.add_argument("--no-paths", action="store_true", help="simulate: leave true price paths out of truth.json")
    args = parser.parse_args(argv)

    logging.basicConfig(level=os.environ.get("VCE_LOG", "WARNING").upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.workers < 1:
            raise VaultCreditError("--workers must be >= 1")
        if args.command == "simulate":
            files = cmd_simulate(args)
            echo = json.loads(files["world_config.json"])
        else:
            cfg, base = pipeline.load_config(args.config, **_overrides(args))
            echo = cfg
            files = _pipeline_files(args, cfg, base)
        write_atomic(Path(args.out), files)
    except VaultCreditError as exc:
        stdout.write(dumps({"status": "error", "command": args.command, "error": exc.to_dict()}))
        return 2
    except (OSError, ValueError) as exc:
        stdout.write(dumps({"status": "error", "command": args.command,
                            "error": {"code": type(exc).__name__, "message": str(exc)}}))
        return 2
    stdout.write(dumps({"status": "ok", "command": args.command, "out": str(args.out), "files": sorted(files), "config": echo}))
    return 0


def _pipeline_files(args, cfg, base) -> dict[str, str]:
    if args.command == "score":
        report = pipeline.run_score(cfg, base, args.force, args.workers)
        files = {"report.json": dumps(report)}
        if args.format == "csv":
            files.update(flat_tables(report))
        return files
    if args.command == "stress":
        summary, scenarios = pipeline.run_stress(cfg, base, args.force)
        return {"stress.json": dumps(summary), "scenarios.json": dumps([s.to_dict() for s in scenarios])}
    cmd, name = {
        "ingest": (pipeline.run_ingest, "ingest.json"),
        "estimate": (pipeline.run_estimate, "estimates.json"),
        "backtest": (pipeline.run_backtest, "validation.json"),
    }[args.command]
    return {name: dumps(cmd(cfg, base, args.force))}


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
