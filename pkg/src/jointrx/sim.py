"""Monte Carlo harness: coded frames, receiver sweep over SNR, BER/BLER
aggregation, and CSV output.

Determinism contract: every trial draws its information bits and channel
from substreams keyed by (master seed, snr index, trial index), all
receivers in a trial see the identical frame, and per-cell aggregation
(including the early-stop cutoff) is evaluated in trial-index order, so
the summary is byte-identical at any worker count.  The wall_ms column
is the one exception: it reports measured time and is therefore the only
volatile field in the CSV.
"""

from __future__ import annotations

import math
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, rng, sdp
from .iterative import IterConfig, iterative_sdr
from .ldpc import (TannerGraph, code_dimension, encode,
                   generate_regular_code, info_positions, parse_alist,
                   spa_decode, uncoded_graph)
from .mimo import FrameModel, mmse_detect, simulate_frame
from .receivers import (build_joint_problem, disjoint_problem,
                        disjoint_sdr_detect, f_to_llr, joint_sdr_detect,
                        ml_bruteforce)

RECEIVERS = ("mmse", "ml", "disjoint_sdr", "joint_sdr", "iter_sdr")

CSV_HEADER = ("snr_db,receiver,blocks,bit_errors,block_errors,"
              "ber,bler,mean_solver_iters,mean_rounds,wall_ms")

SNR_CONVENTION = ("snr_db = 10*log10(Es*N_t/sigma_n^2) per receive antenna, "
                  "Es = 2 per transmit antenna")

# LLR magnitude for hard-decision decoding of the ML detector's bits
HARD_DECISION_LLR = 2.0


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    code: str = "generate"          # generate | alist | none
    alist: str = ""
    n: int = 96
    dv: int = 3
    dc: int = 6
    code_seed: int = 1
    frame_bits: int = 96            # frame length when code = none
    nt: int = 2
    nr: int = 2
    fading: str = "rayleigh_iid"
    snr_db: tuple[float, ...] = (0.0, 2.0, 4.0, 6.0, 8.0)
    receivers: tuple[str, ...] = ("mmse", "joint_sdr")
    trials: int = 100
    seed: int = 0
    max_block_errors: int = 0       # 0 disables early stop
    out: str = "results.csv"
    workers: int = 1
    max_rounds: int = 4
    select_fraction: float = 0.2
    spa_iters: int = 50
    solver_tol: float = 1e-6
    solver_max_iter: int = 50000

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.snr_db:
            raise ConfigError("snr_db list must be nonempty")
        if not self.receivers:
            raise ConfigError("receiver set must be nonempty")
        for r in self.receivers:
            if r not in RECEIVERS:
                raise ConfigError(f"unknown receiver {r!r}")
        if self.code not in ("generate", "alist", "none"):
            raise ConfigError(f"unknown code source {self.code!r}")
        if self.fading not in ("awgn", "rayleigh_iid"):
            raise ConfigError(f"unknown fading {self.fading!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def iter_config(self) -> IterConfig:
        return IterConfig(max_rounds=self.max_rounds,
                          select_fraction=self.select_fraction,
                          spa_iters=self.spa_iters,
                          solver_tol=self.solver_tol,
                          solver_max_iter=self.solver_max_iter)

    def echo(self) -> dict[str, str]:
        keys = ("code", "alist", "n", "dv", "dc", "code_seed", "frame_bits",
                "nt", "nr", "fading", "snr_db", "receivers", "trials", "seed",
                "max_block_errors", "out", "workers", "max_rounds",
                "select_fraction", "spa_iters", "solver_tol", "solver_max_iter")
        out = {}
        for k in keys:
            v = getattr(self, k)
            if isinstance(v, tuple):
                v = ",".join(_fmt(x) if isinstance(x, float) else str(x)
                             for x in v)
            out[k] = str(v)
        return out


def parse_snr_spec(spec: str) -> tuple[float, ...]:
    """Parse 'a:step:b' (inclusive), 'x,y,z', or a single value."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad snr range {spec!r}, want start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("snr range step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + i * step for i in range(max(count, 0)))
    return tuple(float(tok) for tok in spec.split(",") if tok.strip())


def parse_config_text(text: str) -> dict[str, str]:
    """Flat 'key = value' lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, val = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        out[key] = val
    return out


_INT_KEYS = {"n", "dv", "dc", "code_seed", "frame_bits", "nt", "nr", "trials",
             "seed", "max_block_errors", "workers", "max_rounds", "spa_iters",
             "solver_max_iter"}
_FLOAT_KEYS = {"select_fraction", "solver_tol"}


def config_from_dict(raw: dict[str, str]) -> SimConfig:
    kwargs: dict = {}
    for key, val in raw.items():
        if key in _INT_KEYS:
            kwargs[key] = int(val)
        elif key in _FLOAT_KEYS:
            kwargs[key] = float(val)
        elif key == "snr_db":
            kwargs[key] = parse_snr_spec(val)
        elif key == "receivers":
            kwargs[key] = tuple(tok.strip() for tok in val.split(",")
                                if tok.strip())
        elif key in ("code", "alist", "fading", "out"):
            kwargs[key] = val
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        return SimConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# per-process context


@dataclass
class _Context:
    cfg: SimConfig
    graph: TannerGraph
    k_info: int
    info_cols: tuple[int, ...]
    iter_cfg: IterConfig
    joint_ws: sdp.Workspace | None = None
    disjoint_ws: sdp.Workspace | None = None


def load_graph(cfg: SimConfig) -> TannerGraph:
    if cfg.code == "generate":
        return generate_regular_code(cfg.n, cfg.dv, cfg.dc, cfg.code_seed)
    if cfg.code == "alist":
        return parse_alist(Path(cfg.alist).read_text())
    return uncoded_graph(cfg.frame_bits)


def build_context(cfg: SimConfig) -> _Context:
    graph = load_graph(cfg)
    if graph.n % (2 * cfg.nt) != 0:
        raise ConfigError(f"code length {graph.n} not divisible by 2*nt")
    ctx = _Context(cfg=cfg, graph=graph, k_info=code_dimension(graph),
                   info_cols=info_positions(graph),
                   iter_cfg=cfg.iter_config())
    # warm the structure caches once so trial workers only pay per-frame cost
    zeros = np.zeros(graph.n, dtype=np.uint8)
    probe = simulate_frame(zeros, cfg.nt, cfg.nr, math.inf, cfg.fading, 0)
    if {"joint_sdr", "iter_sdr"} & set(cfg.receivers):
        ctx.joint_ws = sdp.make_workspace(build_joint_problem(probe, graph))
    if "disjoint_sdr" in cfg.receivers:
        ctx.disjoint_ws = sdp.make_workspace(disjoint_problem(probe))
    return ctx


@dataclass
class TrialOutcome:
    bit_errors: int
    block_error: bool
    solver_iters: int
    rounds: int
    wall_s: float
    flagged: bool = False


def run_trial(ctx: _Context, si: int, snr_db: float, trial: int,
              receivers: tuple[str, ...]) -> dict[str, TrialOutcome]:
    cfg = ctx.cfg
    info = rng.bits(rng.derive_key(cfg.seed, "info", si, trial), ctx.k_info)
    code_bits = encode(ctx.graph, info)
    frame = simulate_frame(code_bits, cfg.nt, cfg.nr, snr_db, cfg.fading,
                           rng.derive_key(cfg.seed, "frame", si, trial))
    out: dict[str, TrialOutcome] = {}
    for name in receivers:
        t0 = time.perf_counter()
        try:
            decoded, iters, rounds, flagged = _run_receiver(ctx, name, frame)
            errors = int((decoded[list(ctx.info_cols)] != info).sum())
            out[name] = TrialOutcome(
                bit_errors=errors, block_error=errors > 0,
                solver_iters=iters, rounds=rounds,
                wall_s=time.perf_counter() - t0, flagged=flagged)
        except (ValueError, np.linalg.LinAlgError, RuntimeError):
            out[name] = TrialOutcome(
                bit_errors=ctx.k_info, block_error=True, solver_iters=0,
                rounds=0, wall_s=time.perf_counter() - t0, flagged=True)
    return out


def _run_receiver(ctx: _Context, name: str,
                  frame: FrameModel) -> tuple[np.ndarray, int, int, bool]:
    cfg = ctx.cfg
    if name == "mmse":
        _, llr = mmse_detect(frame)
        hard, _, _ = spa_decode(ctx.graph, llr, cfg.spa_iters)
        return hard, 0, 0, False
    if name == "ml":
        det = ml_bruteforce(frame)
        llr = HARD_DECISION_LLR * (1.0 - 2.0 * det.hard_bits.astype(float))
        hard, _, _ = spa_decode(ctx.graph, llr, cfg.spa_iters)
        return hard, 0, 0, False
    if name == "disjoint_sdr":
        det = disjoint_sdr_detect(frame, tol=cfg.solver_tol,
                                  max_iter=cfg.solver_max_iter,
                                  workspace=ctx.disjoint_ws)
        hard, _, _ = spa_decode(ctx.graph, f_to_llr(det.soft_f), cfg.spa_iters)
        flagged = det.solver_status is not sdp.SolveStatus.OPTIMAL
        return hard, det.solver_iters, 1, flagged
    if name == "joint_sdr":
        det = joint_sdr_detect(frame, ctx.graph, tol=cfg.solver_tol,
                               max_iter=cfg.solver_max_iter,
                               workspace=ctx.joint_ws)
        if det.soft_f is None:
            return det.hard_bits, det.solver_iters, 1, True
        hard, _, _ = spa_decode(ctx.graph, f_to_llr(det.soft_f), cfg.spa_iters)
        flagged = det.solver_status is not sdp.SolveStatus.OPTIMAL
        return hard, det.solver_iters, 1, flagged
    if name == "iter_sdr":
        bits, trace = iterative_sdr(frame, ctx.graph, ctx.iter_cfg)
        iters = sum(r.solver_iters for r in trace.rounds)
        flagged = trace.stop_reason == "infeasible"
        return bits, iters, len(trace.rounds), flagged
    raise ConfigError(f"unknown receiver {name!r}")


# ---------------------------------------------------------------------------
# sweep driver


@dataclass
class CellStats:
    snr_db: float
    receiver: str
    blocks: int
    bit_errors: int
    block_errors: int
    ber: float
    bler: float
    mean_solver_iters: float
    mean_rounds: float
    wall_ms: float
    flagged: int = 0


@dataclass
class SimSummary:
    cells: list[CellStats]
    k_info: int
    seed: int
    config_echo: dict[str, str]
    trial_records: dict[tuple[int, str], list[TrialOutcome]] | None = None


_WORKER_CTX: _Context | None = None


def _init_worker(raw_cfg: dict[str, str]) -> None:
    global _WORKER_CTX
    _WORKER_CTX = build_context(config_from_dict(raw_cfg))


def _worker_trial(task) -> tuple[int, int, dict[str, TrialOutcome]]:
    si, snr_db, trial, receivers = task
    return si, trial, run_trial(_WORKER_CTX, si, snr_db, trial, receivers)


def run_trials(cfg: SimConfig, keep_trial_records: bool = False) -> SimSummary:
    """Run the sweep.  Early stop per (snr, receiver) cell is applied in
    trial-index order, so results never depend on completion order or on
    the worker count."""
    ctx = build_context(cfg)
    outcomes: dict[tuple[int, str], dict[int, TrialOutcome]] = {
        (si, r): {} for si in range(len(cfg.snr_db)) for r in cfg.receivers}

    pool = None
    if cfg.workers > 1:
        pool = ProcessPoolExecutor(max_workers=cfg.workers,
                                   initializer=_init_worker,
                                   initargs=(cfg.echo(),))
    try:
        for si, snr_db in enumerate(cfg.snr_db):
            active = list(cfg.receivers)
            done = 0
            while done < cfg.trials and active:
                chunk = min(max(4 * cfg.workers, 8), cfg.trials - done)
                tasks = [(si, snr_db, t, tuple(active))
                         for t in range(done, done + chunk)]
                if pool is not None:
                    results = list(pool.map(_worker_trial, tasks))
                else:
                    results = [(t[0], t[2], run_trial(ctx, *t[:3],
                                                      receivers=t[3]))
                               for t in tasks]
                for _, trial, per_rx in results:
                    for name, outcome in per_rx.items():
                        outcomes[(si, name)][trial] = outcome
                done += chunk
                if cfg.max_block_errors > 0:
                    active = [r for r in active
                              if _cutoff(outcomes[(si, r)], done,
                                         cfg.max_block_errors) is None]
    finally:
        if pool is not None:
            pool.shutdown()

    cells = []
    records: dict[tuple[int, str], list[TrialOutcome]] = {}
    for si, snr_db in enumerate(cfg.snr_db):
        for name in cfg.receivers:
            per_trial = outcomes[(si, name)]
            computed = max(per_trial) + 1 if per_trial else 0
            cut = None
            if cfg.max_block_errors > 0:
                cut = _cutoff(per_trial, computed, cfg.max_block_errors)
            last = cut if cut is not None else computed - 1
            used = [per_trial[t] for t in range(last + 1)]
            cells.append(_aggregate(snr_db, name, used, ctx.k_info))
            if keep_trial_records:
                records[(si, name)] = used
    return SimSummary(cells=cells, k_info=ctx.k_info, seed=cfg.seed,
                      config_echo=cfg.echo(),
                      trial_records=records if keep_trial_records else None)


def _cutoff(per_trial: dict[int, TrialOutcome], upto: int,
            max_block_errors: int) -> int | None:
    """First trial index (scanning in order) at which the cumulative block
    error count reaches the cap, or None if it never does."""
    cum = 0
    for t in range(upto):
        if t not in per_trial:
            return None
        if per_trial[t].block_error:
            cum += 1
            if cum >= max_block_errors:
                return t
    return None


def _aggregate(snr_db: float, name: str, used: list[TrialOutcome],
               k_info: int) -> CellStats:
    blocks = len(used)
    bit_errors = sum(o.bit_errors for o in used)
    block_errors = sum(o.block_error for o in used)
    denom = max(blocks, 1)
    return CellStats(
        snr_db=snr_db, receiver=name, blocks=blocks, bit_errors=bit_errors,
        block_errors=block_errors,
        ber=bit_errors / (denom * k_info),
        bler=block_errors / denom,
        mean_solver_iters=sum(o.solver_iters for o in used) / denom,
        mean_rounds=sum(o.rounds for o in used) / denom,
        wall_ms=1000.0 * sum(o.wall_s for o in used),
        flagged=sum(o.flagged for o in used))


# ---------------------------------------------------------------------------
# CSV


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def version_string() -> str:
    v = __version__
    try:
        proc = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                              cwd=Path(__file__).resolve().parent,
                              capture_output=True, text=True, timeout=5)
        if proc.returncode == 0 and proc.stdout.strip():
            v += "+g" + proc.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return v


def render_csv(summary: SimSummary) -> str:
    lines = [f"# jointrx {version_string()}",
             f"# snr_convention: {SNR_CONVENTION}",
             f"# seed = {summary.seed}",
             f"# k_info = {summary.k_info}"]
    for key in sorted(summary.config_echo):
        lines.append(f"# {key} = {summary.config_echo[key]}")
    flagged = sum(c.flagged for c in summary.cells)
    if flagged:
        lines.append(f"# flagged_trials = {flagged}")
    lines.append(CSV_HEADER)
    for c in summary.cells:
        lines.append(",".join([
            _fmt(c.snr_db), c.receiver, str(c.blocks), str(c.bit_errors),
            str(c.block_errors), _fmt(c.ber), _fmt(c.bler),
            _fmt(c.mean_solver_iters), _fmt(c.mean_rounds), _fmt(c.wall_ms)]))
    return "\n".join(lines) + "\n"


def write_csv(summary: SimSummary, path: str | Path) -> None:
    Path(path).write_text(render_csv(summary))


def read_csv(path: str | Path) -> list[dict[str, str]]:
    rows = []
    header: list[str] | None = None
    for line in Path(path).read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append(dict(zip(header, line.split(","))))
    return rows
