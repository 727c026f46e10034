"""Iterative constrained-relaxation receiver: solve the joint problem,
decode, pick the most reliable bits, tighten their boxes, repeat.

Selection is cumulative and irrevocable: round r keeps every previously
tightened bit (and its box) and grows the set to ceil(r * fraction * n)
using the current posterior ranking.  A bit leaning 0 (positive LLR)
gets box [0, p1]; a bit leaning 1 gets [p1, 1], with p1 = Pr[b=1] from
the posterior.  The loop stops on decoder parity success, on the round
cap, or when the tightened problem becomes infeasible (in which case the
last successful round's decision is returned).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .ldpc import TannerGraph, spa_decode
from .mimo import FrameModel
from .receivers import build_joint_problem, f_to_llr

STOP_PARITY = "parity_satisfied"
STOP_MAX_ROUNDS = "max_rounds"
STOP_INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class IterConfig:
    max_rounds: int = 4
    select_fraction: float = 0.2
    spa_iters: int = 50
    solver_tol: float = 1e-6
    solver_max_iter: int = 50000

    def __post_init__(self):
        if not 0.0 < self.select_fraction <= 1.0:
            raise ValueError("select_fraction must be in (0, 1]")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")


@dataclass
class RoundRecord:
    round: int
    solver_status: str
    objective: float
    solver_iters: int
    tightened_bits: int
    parity_ok: bool
    llr_abs_mean: float
    llr_abs_min: float
    llr_abs_max: float


@dataclass
class IterTrace:
    rounds: list[RoundRecord] = field(default_factory=list)
    stop_reason: str = ""

    def to_dict(self) -> dict:
        return {
            "stop_reason": self.stop_reason,
            "rounds": [vars(r) for r in self.rounds],
        }


def _reliability_order(posterior: np.ndarray) -> np.ndarray:
    # descending |LLR|; ties broken by lower bit index (stable sort)
    return np.argsort(-np.abs(posterior), kind="stable")


def iterative_sdr(frame: FrameModel, graph: TannerGraph, cfg: IterConfig,
                  box_override: dict[int, tuple[float, float]] | None = None,
                  ) -> tuple[np.ndarray, IterTrace]:
    """Run the tightening loop; returns (hard decision, trace).

    box_override is a fault-injection seam for tests: the given boxes are
    intersected into every tightened round (round >= 1), which can force
    an infeasible problem on demand.
    """
    n = graph.n
    boxes = np.tile([0.0, 1.0], (n, 1))
    selected = np.zeros(n, dtype=bool)
    trace = IterTrace()
    workspace = sdp.make_workspace(build_joint_problem(frame, graph, boxes))
    warm = None
    best_bits = np.zeros(n, dtype=np.uint8)

    for rnd in range(cfg.max_rounds):
        if rnd >= 1 and box_override:
            for j, (lo, hi) in box_override.items():
                boxes[j, 0] = max(boxes[j, 0], lo)
                boxes[j, 1] = min(boxes[j, 1], hi)
        problem = build_joint_problem(frame, graph, boxes)
        sol = sdp.solve(problem, tol=cfg.solver_tol,
                        max_iter=cfg.solver_max_iter,
                        workspace=workspace, warm_start=warm)
        if sol.status is sdp.SolveStatus.INFEASIBLE:
            trace.rounds.append(RoundRecord(
                round=rnd, solver_status=sol.status.value, objective=float("nan"),
                solver_iters=sol.iterations, tightened_bits=int(selected.sum()),
                parity_ok=False, llr_abs_mean=float("nan"),
                llr_abs_min=float("nan"), llr_abs_max=float("nan")))
            trace.stop_reason = STOP_INFEASIBLE
            return best_bits, trace
        warm = sol.warm_state

        llr0 = f_to_llr(sdp.extract_soft_bits(sol, problem))
        hard, posterior, parity_ok = spa_decode(graph, llr0, cfg.spa_iters)
        mag = np.abs(posterior)
        trace.rounds.append(RoundRecord(
            round=rnd, solver_status=sol.status.value, objective=sol.objective,
            solver_iters=sol.iterations, tightened_bits=int(selected.sum()),
            parity_ok=parity_ok, llr_abs_mean=float(mag.mean()),
            llr_abs_min=float(mag.min()), llr_abs_max=float(mag.max())))
        best_bits = hard

        if parity_ok:
            trace.stop_reason = STOP_PARITY
            return best_bits, trace
        if rnd == cfg.max_rounds - 1:
            trace.stop_reason = STOP_MAX_ROUNDS
            return best_bits, trace

        # grow the tightened set to its round-(rnd+1) size, keeping all
        # previous members and their boxes untouched
        target = min(n, int(np.ceil((rnd + 1) * cfg.select_fraction * n)))
        for j in _reliability_order(posterior):
            if selected.sum() >= target:
                break
            if selected[j]:
                continue
            selected[j] = True
            p1 = 1.0 / (1.0 + np.exp(posterior[j]))
            if posterior[j] >= 0:
                boxes[j] = [0.0, p1]
            else:
                boxes[j] = [p1, 1.0]

    raise AssertionError("unreachable: loop always returns")
