"""Command-line interface: ``keygen``, ``simulate``, ``detect``, ``experiment``.

Exit codes: 0 success, 1 score below ``--threshold``, 2 configuration or
schema error, 3 data error, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import secrets
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .detect import DetectionConfig, detect, detect_with_offset
from .errors import (BandEdgeError, ConfigurationError, DataFormatError, EmptyBandError,
                     InsufficientDataError, ReplicationError)
from .harness import evaluate, roc_auc, run_replications, simulate_pair, sweep, sweep_csv
from .io import atomic_write_text, dump_json, key_id, load_key, read_glimpses, save_key, \
    write_glimpses
from .watermark import PolicyRateBounds, SecretKey

log = logging.getLogger("conoco")

OUTPUT_ENV = "CONOCO_OUTPUT_DIR"
EXIT_OK, EXIT_BELOW, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3, 4


def _output_dir(arg: str | None, cfg: ExperimentConfig | None = None) -> Path:
    if arg:
        return Path(arg)
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get(OUTPUT_ENV, "conoco-out"))


def _provenance(cfg: ExperimentConfig) -> dict:
    return {"config": cfg.raw, "master_seed": cfg.master_seed, "version": __version__}


def _csv_header(cfg: ExperimentConfig) -> str:
    return "# provenance: " + json.dumps(_provenance(cfg), sort_keys=True,
                                          separators=(",", ":")) + "\n"


def _rows(header: list[str], rows) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                            for v in row))
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_keygen(args) -> int:
    seed = args.seed if args.seed is not None else secrets.randbits(64)
    key = SecretKey(seed, (args.band[0], args.band[1]))
    save_key(args.out, key)
    print(json.dumps({"path": str(args.out), "seed": key.seed, "band_hz": list(key.band),
                      "key_id": key_id(key)}))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = _output_dir(args.out, cfg)
    sc, st = cfg.scenario, cfg.strategy
    owner = cfg.key.seed if cfg.key is not None else None
    summary = []
    for i in range(cfg.n):
        g_wm, g_plain, r_wm, r_plain, seeds = simulate_pair(sc, st, i, cfg.master_seed, owner)
        kid = key_id(SecretKey(seeds["owner"], sc.band))
        base = {"scenario": sc.name, "strategy": st.name, "sensor": asdict(sc.sensor),
                "replication": i, **_provenance(cfg)}
        name = f"glimpses_{i:04d}.csv"
        write_glimpses(out / "watermarked" / name, g_wm,
                       {**base, "watermarked": st.name != "none", "key_id": kid})
        write_glimpses(out / "plain" / name, g_plain,
                       {**base, "watermarked": False, "key_id": None})
        summary.append({"replication": i, "key_id": kid, "reward_watermarked": r_wm,
                        "reward_plain": r_plain, "glimpses": len(g_wm)})
    atomic_write_text(out / "simulation.json",
                      dump_json({**_provenance(cfg), "replications": summary}))
    print(json.dumps({"output_dir": str(out), "files": 2 * cfg.n}))
    return EXIT_OK


def cmd_detect(args) -> int:
    glimpses = read_glimpses(args.glimpses, args.rate)
    key = load_key(args.key)
    bounds = PolicyRateBounds(args.bounds[0], args.bounds[1])
    config = DetectionConfig(grid_points=args.grid_points, win_len=args.win_len,
                             max_offset=args.max_offset)
    if args.offset_handling:
        if config.max_offset is None:
            duration = float(glimpses.timestamps[-1] - glimpses.timestamps[0])
            config = replace(config, max_offset=0.5 * duration)
        report = detect_with_offset(glimpses, None, key, bounds, config)
    else:
        report = detect(glimpses, None, key, bounds, config)
    doc = report.to_dict()
    doc["key_id"] = key_id(key)
    doc["glimpse_rate_hz"] = glimpses.rate
    print(json.dumps(doc, indent=2, sort_keys=True))
    if args.threshold is not None and report.score < args.threshold:
        return EXIT_BELOW
    return EXIT_OK


def _experiment_roc(cfg: ExperimentConfig, out: Path, wrong_key: bool) -> dict:
    owner = cfg.key.seed if cfg.key is not None else None
    rs = run_replications(cfg.scenario, cfg.strategy, cfg.n, cfg.master_seed, wrong_key,
                          cfg.workers, owner)
    report = evaluate(rs, cfg.ci_level, cfg.ci_replicates, cfg.master_seed)
    head = _csv_header(cfg)
    cols = ["replication", "positive", "negative", "reward_positive", "reward_negative"]
    rows = [[r.index, r.positive, r.negative, r.reward_positive, r.reward_negative]
            for r in rs.records]
    if wrong_key:
        cols += ["wrong_positive", "wrong_negative"]
        rows = [row + [r.wrong_positive, r.wrong_negative] for row, r in zip(rows, rs.records)]
        _, wpts = roc_auc(rs.wrong_positives, rs.wrong_negatives)
        atomic_write_text(out / "roc_wrong_key.csv", head + _rows(["fpr", "tpr"], wpts))
    atomic_write_text(out / "scores.csv", head + _rows(cols, rows))
    atomic_write_text(out / "roc.csv", head + _rows(["fpr", "tpr"], report.roc_points))
    return report.to_dict()


def _experiment_reward(cfg: ExperimentConfig, out: Path) -> dict:
    owner = cfg.key.seed if cfg.key is not None else None
    rs = run_replications(cfg.scenario, cfg.strategy, cfg.n, cfg.master_seed,
                          workers=cfg.workers, owner_seed=owner)
    rows = [[r.index, r.reward_positive, r.reward_negative] for r in rs.records]
    atomic_write_text(out / "rewards.csv", _csv_header(cfg) + _rows(
        ["replication", "reward_watermarked", "reward_plain"], rows))
    report = evaluate(rs, cfg.ci_level, cfg.ci_replicates, cfg.master_seed)
    return {"watermarked": report.reward_positive, "plain": report.reward_negative,
            "difference": report.reward_difference,
            "difference_ci": list(report.reward_difference_ci),
            "ci_level": cfg.ci_level, "ci_replicates": cfg.ci_replicates,
            "ci_method": report.ci_method, "n": len(rs)}


def _experiment_sweep(cfg: ExperimentConfig, out: Path) -> dict:
    rows = sweep(cfg.sweep_axis, list(cfg.sweep_values), cfg.scenario, cfg.strategy, cfg.n,
                 cfg.master_seed, cfg.ci_level, cfg.ci_replicates, cfg.workers)
    atomic_write_text(out / "sweep.csv", _csv_header(cfg) + sweep_csv(cfg.sweep_axis, rows))
    return {"axis": cfg.sweep_axis, "rows": [asdict(r) for r in rows]}


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    out = _output_dir(args.out, cfg)
    if cfg.experiment == "roc":
        metrics = _experiment_roc(cfg, out, wrong_key=False)
    elif cfg.experiment == "anonymity":
        metrics = _experiment_roc(cfg, out, wrong_key=True)
    elif cfg.experiment == "reward":
        metrics = _experiment_reward(cfg, out)
    else:
        metrics = _experiment_sweep(cfg, out)
    atomic_write_text(out / "summary.json", dump_json({
        **_provenance(cfg), "experiment": cfg.experiment, "n": cfg.n,
        "seeds_rule": "replication i uses replication_seeds(master_seed, i)",
        "metrics": metrics,
    }))
    print(json.dumps({"output_dir": str(out), "experiment": cfg.experiment}))
    return EXIT_OK


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conoco", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", help="write a secret key file")
    k.add_argument("--out", required=True, type=Path)
    k.add_argument("--band", required=True, nargs=2, type=float, metavar=("LO_HZ", "HI_HZ"))
    k.add_argument("--seed", type=int, help="owner seed (default: OS entropy)")
    k.set_defaults(func=cmd_keygen)

    s = sub.add_parser("simulate", help="simulate watermarked and plain glimpse files")
    s.add_argument("config", type=Path)
    s.add_argument("--out", help=f"output directory (default: config, then ${OUTPUT_ENV})")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("detect", help="score a glimpse file against a key")
    d.add_argument("glimpses", type=Path)
    d.add_argument("--key", required=True, type=Path)
    d.add_argument("--bounds", nargs=2, type=float, default=(19.0, 21.0),
                   metavar=("F_LB", "F_UB"), help="policy rate bounds in Hz")
    d.add_argument("--rate", type=float, help="glimpse rate in Hz (default: sidecar)")
    d.add_argument("--offset-handling", action="store_true",
                   help="search the recording offset with GCC-PHAT")
    d.add_argument("--max-offset", type=float, help="largest offset in seconds")
    d.add_argument("--grid-points", type=int, default=41)
    d.add_argument("--win-len", type=int)
    d.add_argument("--threshold", type=float,
                   help="exit with status 1 when the score is below this value")
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("experiment", help="run an ROC, anonymity, reward or sweep experiment")
    e.add_argument("config", type=Path)
    e.add_argument("--out", help=f"output directory (default: config, then ${OUTPUT_ENV})")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (BandEdgeError, ConfigurationError) as exc:
        print(f"conoco: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, InsufficientDataError, EmptyBandError, OSError) as exc:
        print(f"conoco: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ReplicationError as exc:
        cause = exc.__cause__
        kind = EXIT_DATA if isinstance(cause, (InsufficientDataError, EmptyBandError,
                                               BandEdgeError)) else EXIT_INTERNAL
        print(f"conoco: {exc}", file=sys.stderr)
        return kind
    except Exception as exc:  # noqa: BLE001 - last-resort invariant guard
        log.debug("unexpected failure", exc_info=True)
        print(f"conoco: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
