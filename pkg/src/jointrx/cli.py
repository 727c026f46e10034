"""Command line front end.

    jointrx simulate   --config run.cfg [--snr-db 0:1:8 --receivers ...]
    jointrx decode-one --snr-db 6 --trial 0 [--json trace.json]
    jointrx gen-code   --n 96 --dv 3 --dc 6 --code-seed 1 [--out code.alist]
    jointrx selftest

Every config-file key is also a flag of the same name; flags win over the
file.  Exit codes: 0 success, 1 config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import rng
from .iterative import iterative_sdr
from .ldpc import encode, generate_regular_code, write_alist
from .mimo import simulate_frame
from .receivers import joint_sdr_detect
from .sim import (ConfigError, build_context, config_from_dict,
                  parse_config_text, render_csv, run_trials, write_csv)

_CONFIG_KEYS = ("code", "alist", "n", "dv", "dc", "code_seed", "frame_bits",
                "nt", "nr", "fading", "snr_db", "receivers", "trials", "seed",
                "max_block_errors", "out", "workers", "max_rounds",
                "select_fraction", "spa_iters", "solver_tol",
                "solver_max_iter")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None,
                        help="flat key = value config file")
    for key in _CONFIG_KEYS:
        parser.add_argument("--" + key.replace("_", "-"), dest=key,
                            type=str, default=None)


def _raw_config(args: argparse.Namespace) -> dict[str, str]:
    raw: dict[str, str] = {}
    if args.config:
        raw.update(parse_config_text(Path(args.config).read_text()))
    for key in _CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    return raw


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = config_from_dict(_raw_config(args))
    summary = run_trials(cfg)
    write_csv(summary, cfg.out)
    sys.stdout.write(render_csv(summary))
    sys.stdout.write(f"wrote {cfg.out}\n")
    return 0


def _cmd_decode_one(args: argparse.Namespace) -> int:
    raw = _raw_config(args)
    raw.setdefault("receivers", "iter_sdr")
    cfg = config_from_dict(raw)
    ctx = build_context(cfg)
    trial = args.trial
    snr_db = cfg.snr_db[0]
    info = rng.bits(rng.derive_key(cfg.seed, "info", 0, trial), ctx.k_info)
    code_bits = encode(ctx.graph, info)
    frame = simulate_frame(code_bits, cfg.nt, cfg.nr, snr_db, cfg.fading,
                           rng.derive_key(cfg.seed, "frame", 0, trial))
    det = joint_sdr_detect(frame, ctx.graph, tol=cfg.solver_tol,
                           max_iter=cfg.solver_max_iter)
    bits, trace = iterative_sdr(frame, ctx.graph, ctx.iter_cfg)
    report = {
        "snr_db": snr_db,
        "trial": trial,
        "k_info": ctx.k_info,
        "detector_bit_errors": int((det.hard_bits != code_bits).sum()),
        "decoded_info_errors": int(
            (bits[list(ctx.info_cols)] != info).sum()),
        "stop_reason": trace.stop_reason,
        "trace": trace.to_dict(),
    }
    text = json.dumps(report, indent=2)
    if args.json:
        Path(args.json).write_text(text + "\n")
    sys.stdout.write(text + "\n")
    return 0


def _cmd_gen_code(args: argparse.Namespace) -> int:
    graph = generate_regular_code(int(args.n or 96), int(args.dv or 3),
                                  int(args.dc or 6), int(args.code_seed or 1))
    text = write_alist(graph)
    if args.out:
        Path(args.out).write_text(text)
        sys.stdout.write(f"wrote {args.out}\n")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_selftest(_args: argparse.Namespace) -> int:
    from .acceptance import run_selftest
    return 0 if run_selftest() else 2


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="jointrx", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo sweep")
    _add_config_flags(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_one = sub.add_parser("decode-one",
                           help="run one frame and dump the iteration trace")
    _add_config_flags(p_one)
    p_one.add_argument("--trial", type=int, default=0)
    p_one.add_argument("--json", type=str, default=None)
    p_one.set_defaults(func=_cmd_decode_one)

    p_gen = sub.add_parser("gen-code", help="emit an alist parity-check file")
    for key in ("n", "dv", "dc", "code_seed"):
        p_gen.add_argument("--" + key.replace("_", "-"), dest=key, type=str,
                           default=None)
    p_gen.add_argument("--out", type=str, default=None)
    p_gen.set_defaults(func=_cmd_gen_code)

    p_self = sub.add_parser("selftest",
                            help="run the fast acceptance checks")
    p_self.set_defaults(func=_cmd_selftest)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 1
    except FileNotFoundError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
