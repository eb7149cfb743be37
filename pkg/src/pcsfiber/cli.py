"""Command line entry point: ``pcsfiber {run,sweep,dm-info,analyze}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .framing import interleave
from .harness import CSV_COLUMNS, StageError, config_hash, load_config, run_single, run_sweep
from .metrics import mean_run_length, run_length_stats
from .shaping import TargetDistribution, build_sequence, codebook_info, derive_composition


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _config(args):
    return load_config(
        args.config,
        base=args.preset,
        seed=args.seed,
        output_path=getattr(args, "out", None),
    )


def _cmd_run(args) -> int:
    cfg = _config(args)
    if args.channel:
        cfg = cfg.replace(channel_kind=args.channel)
    row = run_single(cfg, args.n, args.pilots == "on")
    record = dataclasses.asdict(row)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.with_name(out.name + ".json").write_text(
            json.dumps(
                {"config_hash": config_hash(cfg), "config": dataclasses.asdict(cfg), "result": record},
                indent=2,
                default=str,
            )
            + "\n"
        )
    print(json.dumps(record))
    return 0


def _cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.lengths:
        cfg = cfg.replace(block_lengths=_int_list(args.lengths))
    if args.pilots:
        cfg = cfg.replace(pilots=args.pilots)
    rows = run_sweep(cfg, workers=args.workers)
    print(",".join(CSV_COLUMNS))
    for r in rows:
        print(",".join(str(v) for v in dataclasses.astuple(r)))
    return 0


def _cmd_dm_info(args) -> int:
    cfg = _config(args)
    dist = TargetDistribution(_float_list(args.dist)) if args.dist else cfg.target
    lengths = _int_list(args.lengths) if args.lengths else cfg.block_lengths
    print(f"H(A) = {dist.entropy():.6f} bits")
    print(f"{'n':>6} {'composition':>24} {'k':>6} {'rate':>8} {'rate_loss':>10}  log2(#seq)")
    for n in lengths:
        comp = derive_composition(dist, n)
        info = codebook_info(comp, dist)
        counts = ",".join(str(c) for c in comp.counts)
        log2m = math.log2(info.num_sequences)
        print(f"{n:>6} {counts:>24} {info.k:>6} {info.rate:>8.4f} {info.rate_loss:>10.6f}  {log2m:.4f}")
    return 0


def _cmd_analyze(args) -> int:
    cfg = _config(args)
    rng = np.random.default_rng(cfg.seed)
    seq = build_sequence(cfg.target, args.n, args.length, rng)
    label = f"n={args.n}"
    if args.interleave:
        seq = interleave(seq, rng)
        label += " interleaved"
    stats = run_length_stats(seq)
    print(f"{label}: {len(seq)} amplitudes, mean run length {mean_run_length(seq):.4f}")
    for amp in sorted(stats):
        hist = stats[amp]
        print(f"  amplitude {amp}: {sum(hist.values())} runs, longest {max(hist)}, "
              + " ".join(f"{k}:{hist[k]}" for k in sorted(hist)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcsfiber", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI config file")
    common.add_argument("--preset", choices=["paper", "desk"], default="paper")
    common.add_argument("--seed", type=int)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="simulate one block length")
    p.add_argument("--n", type=int, required=True, help="CCDM block length")
    p.add_argument("--pilots", choices=["on", "off"], default="off")
    p.add_argument("--channel", choices=["fiber", "awgn"])
    p.add_argument("--out", help="write a JSON record with the resolved config to OUT.json")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="sweep block lengths and pilot settings")
    p.add_argument("--out", help="results CSV (appended, resumable)")
    p.add_argument("--lengths", help="comma separated block lengths")
    p.add_argument("--pilots", choices=["on", "off", "both"])
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("dm-info", parents=[common], help="print CCDM codebook sizes and rate loss")
    p.add_argument("--dist", help="comma separated amplitude probabilities")
    p.add_argument("--lengths", help="comma separated block lengths")
    p.set_defaults(func=_cmd_dm_info)

    p = sub.add_parser("analyze", parents=[common], help="run-length statistics of a CCDM sequence")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--length", type=int, default=100_000, help="number of amplitudes")
    p.add_argument("--interleave", action="store_true")
    p.set_defaults(func=_cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"pcsfiber: error {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"pcsfiber: error [config] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
