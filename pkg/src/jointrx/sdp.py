"""First-order solver for the block-structured semidefinite programs used
by the detectors:

    minimize    sum_k tr(C_k X_k)
    subject to  diag(X_k) = 1,            X_k PSD (size d x d)
                X_k[i, d-1] = a f_j + b   (couplings, a in {+2,-2}, b in {-+1})
                G f <= h                  (parity inequalities)
                lo <= f <= 1 boxes        (per-scalar boxes in [0, 1])

The problem is put in conic form  A x + s = b,  s in {0}^eq x R+^ineq x
PSD^K  over x = [svec(X_1); ...; svec(X_K); f], and solved by ADMM
(Douglas-Rachford splitting): a least-squares x-update using a cached
sparse factorization of A'A, a cone projection for s (per-block
eigendecompositions for the PSD part), and a scaled dual ascent, with
over-relaxation 1.6, Ruiz equilibration of A (PSD rows share one scale
per block so the cone is preserved), and a deterministic residual-ratio
penalty adaptation.  Primal infeasibility is declared when the usual
ray certificate built from the dual difference sequence keeps firing
for a sustained window of iterations.

Because A depends only on the constraint pattern (never on costs, box
bounds, or right-hand sides), workspaces are cached and reused across
Monte Carlo trials and across the rounds of the iterative receiver.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .ldpc import FsConstraint

EPS_EQ = 1e-6
EPS_INEQ = 1e-6
EPS_PSD = 1e-7

_ALPHA = 1.6                  # over-relaxation
_CHECK_EVERY = 25             # residual / certificate cadence
_INFEAS_WINDOW = 50           # iterations the certificate must persist
_INFEAS_TOL = 1e-6
_RHO_ADAPT_EVERY = 100
_RHO_TRIGGER = 25.0
_SQRT2 = math.sqrt(2.0)


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITER_LIMIT = "iter_limit"


class Coupling(NamedTuple):
    """tr(B_row X_block) = coeff * f[scalar] + offset."""
    block: int
    row: int
    scalar: int
    coeff: float
    offset: float


@dataclass(frozen=True, eq=False)
class SdpProblem:
    blocks: tuple[np.ndarray, ...]
    couplings: tuple[Coupling, ...] = ()
    scalar_count: int = 0
    inequalities: tuple[FsConstraint, ...] = ()
    boxes: np.ndarray | None = None      # (scalar_count, 2) columns lo, hi

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("need at least one cost block")
        d = self.blocks[0].shape[0]
        for C in self.blocks:
            if C.shape != (d, d):
                raise ValueError("cost blocks must share one square shape")
            if np.abs(C - C.T).max() != 0.0:
                raise ValueError("cost block is not exactly symmetric")
            if not np.isfinite(C).all():
                raise ValueError("NaN/inf in cost block")
        for c in self.couplings:
            if not (0 <= c.block < len(self.blocks) and 0 <= c.row < d - 1
                    and 0 <= c.scalar < self.scalar_count):
                raise ValueError(f"coupling out of range: {c}")
            if c.coeff not in (2.0, -2.0) or c.offset not in (1.0, -1.0):
                raise ValueError(f"coupling coefficients must be +-2 / -+1: {c}")
        for q in self.inequalities:
            if any(j >= self.scalar_count for j in q.coeffs):
                raise ValueError("inequality references unknown scalar")
        if self.scalar_count:
            if self.boxes is None or self.boxes.shape != (self.scalar_count, 2):
                raise ValueError("boxes must be (scalar_count, 2)")
            if not np.isfinite(self.boxes).all():
                raise ValueError("NaN/inf in boxes")
            if (self.boxes < 0).any() or (self.boxes > 1).any():
                raise ValueError("boxes must lie within [0, 1]")

    @property
    def d(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)


@dataclass
class Residuals:
    max_eq: float
    max_ineq: float
    min_eig: float


@dataclass
class WarmState:
    x: np.ndarray
    s: np.ndarray
    u: np.ndarray
    rho: float


@dataclass
class SdpSolution:
    X: list[np.ndarray]
    f: np.ndarray
    objective: float
    status: SolveStatus
    residuals: Residuals
    iterations: int
    trace: list[tuple[int, float, float, float, float]] | None = None
    warm_state: WarmState | None = field(default=None, repr=False)


def _structure_key(p: SdpProblem):
    ineq = tuple((tuple(sorted(q.coeffs.items()))) for q in p.inequalities)
    return (p.d, p.num_blocks, p.scalar_count, p.couplings, ineq)


class Workspace:
    """Constraint matrix, equilibration, and factorization for one
    problem structure (costs and right-hand sides excluded)."""

    def __init__(self, p: SdpProblem):
        d, K, nf = p.d, p.num_blocks, p.scalar_count
        D = d * (d + 1) // 2
        iu0, iu1 = np.triu_indices(d)
        svw = np.where(iu0 == iu1, 1.0, _SQRT2)
        diag_pos = np.where(iu0 == iu1)[0]
        last_pos = np.array([np.nonzero((iu0 == i) & (iu1 == d - 1))[0][0]
                             for i in range(d - 1)])

        self.d, self.K, self.nf, self.D = d, K, nf, D
        self.iu0, self.iu1, self.svw = iu0, iu1, svw
        self.ncols = K * D + nf
        self.n_eq = K * d + len(p.couplings)
        self.n_ineq = len(p.inequalities) + 2 * nf
        self.mrows = self.n_eq + self.n_ineq + K * D
        self.psd_start = self.n_eq + self.n_ineq
        self.key = _structure_key(p)

        rows, cols, vals = [], [], []

        def put(r, c, v):
            rows.append(r)
            cols.append(c)
            vals.append(v)

        r = 0
        for k in range(K):
            for i in range(d):
                put(r, k * D + diag_pos[i], 1.0)
                r += 1
        self.coup = p.couplings
        for c in p.couplings:
            put(r, c.block * D + last_pos[c.row], 1.0 / _SQRT2)
            put(r, K * D + c.scalar, -c.coeff)
            r += 1
        self.ineq_start = r
        for q in p.inequalities:
            for j, coef in sorted(q.coeffs.items()):
                put(r, K * D + j, float(coef))
            r += 1
        self.box_start = r
        for j in range(nf):
            put(r, K * D + j, 1.0)       # f_j <= hi_j
            r += 1
        for j in range(nf):
            put(r, K * D + j, -1.0)      # -f_j <= -lo_j
            r += 1
        for k in range(K):
            for ppos in range(D):
                put(r, k * D + ppos, -1.0)
                r += 1
        assert r == self.mrows

        A = sp.coo_matrix((vals, (rows, cols)),
                          shape=(self.mrows, self.ncols)).tocsr()
        self.a_norm = max(1.0, abs(A).max())
        self.E, self.Dv = self._ruiz(A)
        Abar = sp.diags(self.E) @ A @ sp.diags(self.Dv)
        self.A = Abar.tocsr()
        self.AT = Abar.T.tocsr()
        M = (self.AT @ self.A).tocsc()
        self.lu = splu(M)

        # pieces for fast residual evaluation in original units
        if p.inequalities:
            gr, gc, gv = [], [], []
            for qi, q in enumerate(p.inequalities):
                for j, coef in sorted(q.coeffs.items()):
                    gr.append(qi)
                    gc.append(j)
                    gv.append(float(coef))
            self.Gf = sp.coo_matrix((gv, (gr, gc)),
                                    shape=(len(p.inequalities), nf)).tocsr()
            self.fs_rhs = np.array([float(q.rhs) for q in p.inequalities])
        else:
            self.Gf = None
            self.fs_rhs = np.zeros(0)
        self.coup_block = np.array([c.block for c in p.couplings], dtype=np.int64)
        self.coup_row = np.array([c.row for c in p.couplings], dtype=np.int64)
        self.coup_scalar = np.array([c.scalar for c in p.couplings], dtype=np.int64)
        self.coup_coeff = np.array([c.coeff for c in p.couplings])
        self.coup_offset = np.array([c.offset for c in p.couplings])

    def _ruiz(self, A: sp.csr_matrix, iters: int = 10):
        m, ncols = A.shape
        E = np.ones(m)
        Dv = np.ones(ncols)
        coo = A.tocoo()
        arow, acol, aval = coo.row, coo.col, np.abs(coo.data)
        K, D = self.K, self.D
        for _ in range(iters):
            scaled = aval * E[arow] * Dv[acol]
            rmax = np.zeros(m)
            np.maximum.at(rmax, arow, scaled)
            # PSD rows of one block share a single factor to keep the cone
            psd = rmax[self.psd_start:].reshape(K, D)
            psd[:] = psd.max(axis=1, keepdims=True)
            rmax[rmax == 0] = 1.0
            E = E / np.sqrt(rmax)
            scaled = aval * E[arow] * Dv[acol]
            cmax = np.zeros(ncols)
            np.maximum.at(cmax, acol, scaled)
            cmax[cmax == 0] = 1.0
            Dv = Dv / np.sqrt(cmax)
        return E, Dv

    # --- svec helpers -----------------------------------------------------

    def mats_from_svec(self, seg: np.ndarray) -> np.ndarray:
        v = seg.reshape(self.K, self.D) / self.svw
        X = np.zeros((self.K, self.d, self.d))
        X[:, self.iu0, self.iu1] = v
        X[:, self.iu1, self.iu0] = v
        return X

    def svec_from_mats(self, X: np.ndarray) -> np.ndarray:
        return (X[:, self.iu0, self.iu1] * self.svw).reshape(-1)

    def project_psd(self, seg: np.ndarray) -> np.ndarray:
        X = self.mats_from_svec(seg)
        lam, V = np.linalg.eigh(X)
        lam = np.maximum(lam, 0.0)
        Xp = np.einsum("kij,kj,klj->kil", V, lam, V)
        Xp = 0.5 * (Xp + Xp.transpose(0, 2, 1))
        return self.svec_from_mats(Xp)


_workspace_cache: dict[tuple, Workspace] = {}


def make_workspace(p: SdpProblem) -> Workspace:
    key = _structure_key(p)
    ws = _workspace_cache.get(key)
    if ws is None:
        ws = Workspace(p)
        if len(_workspace_cache) >= 8:
            _workspace_cache.pop(next(iter(_workspace_cache)))
        _workspace_cache[key] = ws
    return ws


def _assemble_b_c(p: SdpProblem, ws: Workspace):
    b = np.zeros(ws.mrows)
    b[:ws.K * ws.d] = 1.0
    b[ws.K * ws.d:ws.n_eq] = ws.coup_offset
    nq = len(p.inequalities)
    b[ws.ineq_start:ws.ineq_start + nq] = ws.fs_rhs
    if ws.nf:
        b[ws.box_start:ws.box_start + ws.nf] = p.boxes[:, 1]
        b[ws.box_start + ws.nf:ws.box_start + 2 * ws.nf] = -p.boxes[:, 0]
    c = np.zeros(ws.ncols)
    Cstack = np.stack(p.blocks)
    c[:ws.K * ws.D] = ws.svec_from_mats(Cstack)
    return b, c, Cstack


def solve(p: SdpProblem, tol: float = 1e-7, max_iter: int = 50000,
          workspace: Workspace | None = None,
          warm_start: WarmState | None = None,
          collect_trace: bool = False) -> SdpSolution:
    """Run the splitting to residual <= tol or max_iter.

    Equality and inequality residual targets are floored at EPS_EQ /
    EPS_INEQ so a looser tol never weakens the solution contract; the
    dual (optimality) residual target is tol itself.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    ws = workspace if workspace is not None else make_workspace(p)
    if ws.key != _structure_key(p):
        raise ValueError("workspace was built for a different structure")
    b, c, Cstack = _assemble_b_c(p, ws)
    bbar = ws.E * b
    cbar = ws.Dv * c
    c_norm = max(1.0, np.abs(cbar).max())
    b_norm = max(1.0, np.abs(b).max())

    eq_tol = min(tol, EPS_EQ)
    ineq_tol = min(tol, EPS_INEQ)

    if warm_start is not None:
        x = warm_start.x.copy()
        s = warm_start.s.copy()
        u = warm_start.u.copy()
        rho = warm_start.rho
    else:
        x = np.zeros(ws.ncols)
        s = np.zeros(ws.mrows)
        u = np.zeros(ws.mrows)
        rho = 1.0

    n_eq = ws.n_eq
    psd0 = ws.psd_start
    fcol = ws.K * ws.D
    Dv_f = ws.Dv[fcol:]
    KD = ws.K * ws.d

    trace: list[tuple[int, float, float, float, float]] | None = (
        [] if collect_trace else None)
    status = SolveStatus.ITER_LIMIT
    it = 0
    u_ckpt = u.copy()
    infeas_run = 0
    s_prev = s.copy()
    Ax = ws.A @ x

    def candidate():
        f = np.asarray(Dv_f * x[fcol:])
        s_orig = s / ws.E
        X = ws.mats_from_svec(s_orig[psd0:])
        return f, X

    def primal_residuals(f, X):
        eq = float(np.abs(X[:, range(ws.d), range(ws.d)] - 1.0).max())
        if len(ws.coup):
            cres = X[ws.coup_block, ws.coup_row, ws.d - 1] \
                - ws.coup_coeff * f[ws.coup_scalar] - ws.coup_offset
            eq = max(eq, float(np.abs(cres).max()))
        ineq = 0.0
        if ws.Gf is not None:
            ineq = float(np.maximum(ws.Gf @ f - ws.fs_rhs, 0.0).max())
        if ws.nf:
            ineq = max(ineq,
                       float(np.maximum(p.boxes[:, 0] - f, 0.0).max()),
                       float(np.maximum(f - p.boxes[:, 1], 0.0).max()))
        return eq, ineq

    for it in range(1, max_iter + 1):
        rhs = ws.AT @ (bbar - s - u) - cbar / rho
        x = ws.lu.solve(rhs)
        Ax = ws.A @ x
        v = _ALPHA * Ax + (1.0 - _ALPHA) * (bbar - s)
        w = bbar - v - u
        if it % _CHECK_EVERY == 0:
            s_prev = s
        s_new = np.empty_like(s)
        s_new[:n_eq] = 0.0
        np.maximum(w[n_eq:psd0], 0.0, out=s_new[n_eq:psd0])
        s_new[psd0:] = ws.project_psd(w[psd0:])
        s = s_new
        u = u + v + s - bbar

        if it % _CHECK_EVERY == 0:
            f, X = candidate()
            eq_res, ineq_res = primal_residuals(f, X)
            dual_res = rho * float(np.abs(ws.AT @ (s - s_prev)).max()) / c_norm
            if collect_trace:
                obj = float(np.einsum("kij,kij->", Cstack, X))
                trace.append((it, eq_res, ineq_res, dual_res, obj))
            if eq_res <= eq_tol and ineq_res <= ineq_tol and dual_res <= tol:
                status = SolveStatus.OPTIMAL
                break

            # primal infeasibility: normalized ray from the dual window.
            # The original-unit dual is y = E (rho u); A' y = (A_bar'(y/E))/Dv.
            dy = ws.E * (rho * (u - u_ckpt))
            u_ckpt = u.copy()
            nrm = float(np.abs(dy).max())
            y_scale = max(1.0, rho * float(np.abs(ws.E * u).max()))
            fired = False
            if nrm > 1e-9 * y_scale:
                nu = dy / nrm
                at_nu = float(np.abs((ws.AT @ (nu / ws.E)) / ws.Dv).max())
                bt_nu = float(b @ nu)
                cone_ok = bool((nu[n_eq:psd0] >= -_INFEAS_TOL).all())
                if cone_ok:
                    eigs = np.linalg.eigvalsh(ws.mats_from_svec(nu[psd0:]))
                    cone_ok = bool(eigs.min() >= -_INFEAS_TOL * ws.d)
                fired = (at_nu <= _INFEAS_TOL * ws.a_norm
                         and bt_nu <= -1e-9 * b_norm and cone_ok)
            infeas_run = infeas_run + _CHECK_EVERY if fired else 0
            if infeas_run >= _INFEAS_WINDOW:
                status = SolveStatus.INFEASIBLE
                break

            if it % _RHO_ADAPT_EVERY == 0:
                pri_n = float(np.abs(Ax + s - bbar).max()) / max(
                    1.0, float(np.abs(Ax).max()), float(np.abs(s).max()),
                    float(np.abs(bbar).max()))
                ratio = (pri_n + 1e-30) / (dual_res + 1e-30)
                if ratio > _RHO_TRIGGER or ratio < 1.0 / _RHO_TRIGGER:
                    rho_new = float(np.clip(rho * math.sqrt(ratio), 1e-4, 1e4))
                    u = u * (rho / rho_new)
                    rho = rho_new

    f, X = candidate()
    eq_res, ineq_res = primal_residuals(f, X)
    eigs = np.linalg.eigvalsh(X)
    min_eig = float(eigs.min()) if ws.K else 0.0
    objective = float(np.einsum("kij,kij->", Cstack, X))
    if status is SolveStatus.OPTIMAL and min_eig < -EPS_PSD:
        status = SolveStatus.ITER_LIMIT   # defensive; projection keeps PSD
    return SdpSolution(
        X=[X[k] for k in range(ws.K)],
        f=np.clip(f, 0.0, 1.0) if ws.nf else np.zeros(0),
        objective=objective,
        status=status,
        residuals=Residuals(max_eq=eq_res, max_ineq=ineq_res, min_eig=min_eig),
        iterations=it,
        trace=trace,
        warm_state=WarmState(x=x.copy(), s=s.copy(), u=u.copy(), rho=rho),
    )


def extract_soft_bits(sol: SdpSolution, p: SdpProblem) -> np.ndarray:
    """Scalar bit variables clipped to [0, 1]."""
    if sol.status is SolveStatus.INFEASIBLE:
        raise ValueError("no bit variables: problem infeasible")
    if p.scalar_count != sol.f.size:
        raise ValueError("solution does not match problem")
    return np.clip(sol.f, 0.0, 1.0)
