"""Concrete detectors: exhaustive ML oracle, per-block relaxation without
code knowledge ("disjoint"), and the code-constrained joint relaxation,
plus the rounding and soft-bit bridges between detector and decoder.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import sdp
from .ldpc import LLR_MAX, TannerGraph, fs_constraints
from .mimo import FrameModel, RealChannelBlock, demap_real_symbols
from .sdp import Coupling, SdpProblem, SdpSolution, SolveStatus

ML_SEARCH_CAP = 2 ** 20


@dataclass
class DetectionResult:
    hard_bits: np.ndarray
    soft_f: np.ndarray | None
    objective: float
    solver_status: SolveStatus | None = None
    rank_ratio: np.ndarray | None = None   # per-block lambda2 / lambda1
    solver_iters: int = 0


def build_cost_matrix(H: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exactly symmetric PSD C with [s' t] C [s; t] = ||y - t H s||^2."""
    G = np.hstack([H, -y[:, None]])
    C = G.T @ G
    return 0.5 * (C + C.T)


def frame_cost_blocks(frame: FrameModel) -> tuple[np.ndarray, ...]:
    return tuple(build_cost_matrix(b.H, b.y) for b in frame.blocks)


def round_block(X: np.ndarray) -> np.ndarray:
    """Sign read-out of the last column: the relaxation stores t*s there.

    Zero entries resolve to +1 so rounding is reproducible.
    """
    col = X[:-1, -1]
    return np.where(col >= 0, 1.0, -1.0)


def rank_one_ratio(X: np.ndarray) -> float:
    lam = np.linalg.eigvalsh(X)
    top = lam[-1]
    if top <= 0:
        return 1.0
    return float(max(lam[-2], 0.0) / top)


def f_to_llr(f: np.ndarray) -> np.ndarray:
    """Soft bits in [0,1] -> LLRs ln((1-f)/f), clamped to +-LLR_MAX."""
    delta = math.exp(-LLR_MAX) / (1.0 + math.exp(-LLR_MAX))
    fc = np.clip(np.asarray(f, dtype=np.float64), delta, 1.0 - delta)
    return np.clip(np.log((1.0 - fc) / fc), -LLR_MAX, LLR_MAX)


@lru_cache(maxsize=8)
def _pm1_candidates(width: int) -> np.ndarray:
    rows = list(itertools.product((-1.0, 1.0), repeat=width))
    return np.array(rows)


def ml_bruteforce(frame: FrameModel) -> DetectionResult:
    """Exhaustive per-block minimization of ||y_k - H_k s||^2 over QPSK."""
    width = 2 * frame.N_t
    if 2 ** width > ML_SEARCH_CAP:
        raise ValueError(f"search space 4^{frame.N_t} exceeds cap {ML_SEARCH_CAP}")
    cand = _pm1_candidates(width)
    bits = np.empty(frame.K * width, dtype=np.uint8)
    objective = 0.0
    for k, block in enumerate(frame.blocks):
        resid = block.y[None, :] - cand @ block.H.T
        costs = np.einsum("ij,ij->i", resid, resid)
        best = int(np.argmin(costs))
        objective += float(costs[best])
        bits[k * width:(k + 1) * width] = demap_real_symbols(cand[best])
    return DetectionResult(hard_bits=bits, soft_f=None, objective=objective)


def _rounded_bits_and_ratios(sol: SdpSolution, nt: int):
    width = 2 * nt
    bits = np.empty(len(sol.X) * width, dtype=np.uint8)
    ratios = np.empty(len(sol.X))
    for k, X in enumerate(sol.X):
        bits[k * width:(k + 1) * width] = demap_real_symbols(round_block(X))
        ratios[k] = rank_one_ratio(X)
    return bits, ratios


def disjoint_problem(frame: FrameModel) -> SdpProblem:
    return SdpProblem(blocks=frame_cost_blocks(frame))


def disjoint_sdr_detect(frame: FrameModel, tol: float = 1e-7,
                        max_iter: int = 50000,
                        workspace: sdp.Workspace | None = None) -> DetectionResult:
    """Per-block relaxation with diagonal constraints only, then rounding.

    The soft read-out inverts the QPSK mapping on the last column:
    f_re = (X[i,-1]+1)/2 and f_im = (1-X[i,-1])/2, clipped to [0,1].
    """
    problem = disjoint_problem(frame)
    sol = sdp.solve(problem, tol=tol, max_iter=max_iter, workspace=workspace)
    bits, ratios = _rounded_bits_and_ratios(sol, frame.N_t)
    nt = frame.N_t
    soft = np.empty(frame.K * 2 * nt)
    for k, X in enumerate(sol.X):
        col = X[:-1, -1]
        blk = np.empty(2 * nt)
        blk[0::2] = (col[:nt] + 1.0) / 2.0
        blk[1::2] = (1.0 - col[nt:]) / 2.0
        soft[k * 2 * nt:(k + 1) * 2 * nt] = blk
    return DetectionResult(hard_bits=bits, soft_f=np.clip(soft, 0.0, 1.0),
                           objective=sol.objective, solver_status=sol.status,
                           rank_ratio=ratios, solver_iters=sol.iterations)


@lru_cache(maxsize=8)
def _cached_fs(graph: TannerGraph):
    return tuple(fs_constraints(graph))


def build_joint_problem(frame: FrameModel, graph: TannerGraph,
                        boxes: np.ndarray | None = None) -> SdpProblem:
    """Joint problem: cost blocks + QPSK mapping couplings + parity
    inequalities + per-bit boxes (defaults to [0,1]^n)."""
    n = graph.n
    nt = frame.N_t
    if frame.K * 2 * nt != n:
        raise ValueError(f"frame carries {frame.K * 2 * nt} bits, code has {n}")
    if boxes is None:
        boxes = np.tile([0.0, 1.0], (n, 1))
    couplings = []
    for k in range(frame.K):
        base = 2 * nt * k
        for a in range(nt):
            couplings.append(Coupling(block=k, row=a, scalar=base + 2 * a,
                                      coeff=2.0, offset=-1.0))
            couplings.append(Coupling(block=k, row=nt + a, scalar=base + 2 * a + 1,
                                      coeff=-2.0, offset=1.0))
    return SdpProblem(blocks=frame_cost_blocks(frame),
                      couplings=tuple(couplings),
                      scalar_count=n,
                      inequalities=_cached_fs(graph),
                      boxes=np.asarray(boxes, dtype=np.float64))


def joint_sdr_detect(frame: FrameModel, graph: TannerGraph,
                     boxes: np.ndarray | None = None, tol: float = 1e-7,
                     max_iter: int = 50000,
                     workspace: sdp.Workspace | None = None,
                     warm_start: sdp.WarmState | None = None) -> DetectionResult:
    problem = build_joint_problem(frame, graph, boxes)
    sol = sdp.solve(problem, tol=tol, max_iter=max_iter, workspace=workspace,
                    warm_start=warm_start)
    if sol.status is SolveStatus.INFEASIBLE:
        return DetectionResult(hard_bits=np.zeros(graph.n, dtype=np.uint8),
                               soft_f=None, objective=sol.objective,
                               solver_status=sol.status,
                               solver_iters=sol.iterations)
    bits, ratios = _rounded_bits_and_ratios(sol, frame.N_t)
    soft = sdp.extract_soft_bits(sol, problem)
    return DetectionResult(hard_bits=bits, soft_f=soft,
                           objective=sol.objective, solver_status=sol.status,
                           rank_ratio=ratios, solver_iters=sol.iterations)
