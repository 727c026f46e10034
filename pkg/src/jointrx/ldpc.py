"""Binary LDPC codes: Tanner graphs, encoding, sum-product decoding, and
the parity-polytope inequalities used by the constrained detector.

A parity check over variables N_i is satisfied by exactly the binary
points whose support in N_i has even cardinality.  The convex hull of
those points is cut out by one inequality per odd subset F of N_i:

    sum_{j in F} f_j - sum_{j in N_i \\ F} f_j <= |F| - 1

together with 0 <= f_j <= 1.  ``fs_constraints`` enumerates these
(2^(d-1) per degree-d check), which is why a degree cap applies.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import rng

log = logging.getLogger(__name__)

LLR_MAX = 30.0

EVEN_SUBSET_DEGREE_CAP = 16
FS_DEGREE_CAP = 12

_EDGE_REPAIR_TRIES = 2000


@dataclass(frozen=True)
class TannerGraph:
    """Immutable bipartite parity-check structure.

    check_adj[i] is the sorted tuple of variable indices in check i;
    var_adj[j] the sorted tuple of checks incident to variable j.
    """

    m: int
    n: int
    check_adj: tuple[tuple[int, ...], ...]
    var_adj: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.m < 0 or self.n <= 0:
            raise ValueError(f"bad dimensions m={self.m}, n={self.n}")
        if len(self.check_adj) != self.m or len(self.var_adj) != self.n:
            raise ValueError("adjacency length does not match m/n")
        edges = set()
        for i, row in enumerate(self.check_adj):
            if len(row) == 0:
                raise ValueError(f"check {i} has degree 0")
            if len(set(row)) != len(row):
                raise ValueError(f"duplicate edge in check {i}")
            for j in row:
                if not 0 <= j < self.n:
                    raise ValueError(f"check {i}: variable index {j} out of range")
                edges.add((i, j))
        transposed = set()
        for j, col in enumerate(self.var_adj):
            if len(set(col)) != len(col):
                raise ValueError(f"duplicate edge at variable {j}")
            for i in col:
                if not 0 <= i < self.m:
                    raise ValueError(f"variable {j}: check index {i} out of range")
                transposed.add((i, j))
        if edges != transposed:
            raise ValueError("check_adj and var_adj disagree on the edge set")

    @classmethod
    def from_check_rows(cls, n: int, rows: list[list[int]]) -> "TannerGraph":
        m = len(rows)
        var_adj: list[list[int]] = [[] for _ in range(n)]
        for i, row in enumerate(rows):
            for j in row:
                var_adj[j].append(i)
        return cls(
            m=m,
            n=n,
            check_adj=tuple(tuple(sorted(r)) for r in rows),
            var_adj=tuple(tuple(sorted(c)) for c in var_adj),
        )

    def check_degrees(self) -> list[int]:
        return [len(r) for r in self.check_adj]

    def var_degrees(self) -> list[int]:
        return [len(c) for c in self.var_adj]


# ---------------------------------------------------------------------------
# alist interchange format


def parse_alist(text: str) -> TannerGraph:
    """Parse alist text: "n m" / max degrees / degree lists / 1-based rows.

    Zero padding inside adjacency rows is accepted (and dropped); the
    canonical form written by ``write_alist`` never contains it.
    """
    lines = text.splitlines()

    def ints(lineno: int, expect: int | None = None) -> list[int]:
        if lineno > len(lines):
            raise ValueError(f"line {lineno}: missing (file truncated)")
        raw = lines[lineno - 1].split()
        try:
            vals = [int(tok) for tok in raw]
        except ValueError:
            raise ValueError(f"line {lineno}: non-integer token") from None
        if expect is not None and len(vals) != expect:
            raise ValueError(f"line {lineno}: expected {expect} values, got {len(vals)}")
        return vals

    header = ints(1)
    if len(header) != 2:
        raise ValueError("line 1: expected 'n m'")
    n, m = header
    if n <= 0 or m < 0:
        raise ValueError(f"line 1: bad dimensions n={n}, m={m}")
    max_deg = ints(2)
    if len(max_deg) != 2:
        raise ValueError("line 2: expected 'max_dv max_dc'")
    var_deg = ints(3, expect=n)
    chk_deg = ints(4, expect=m)

    def adjacency(first_line: int, count: int, degrees: list[int],
                  limit: int, kind: str) -> list[list[int]]:
        rows = []
        for r in range(count):
            lineno = first_line + r
            vals = [v for v in ints(lineno) if v != 0]
            if len(vals) != degrees[r]:
                raise ValueError(
                    f"line {lineno}: {kind} row has {len(vals)} entries, "
                    f"declared degree {degrees[r]}")
            out = []
            for v in vals:
                if not 1 <= v <= limit:
                    raise ValueError(f"line {lineno}: index {v} out of range")
                out.append(v - 1)
            if len(set(out)) != len(out):
                raise ValueError(f"line {lineno}: duplicate index")
            rows.append(out)
        return rows

    var_rows = adjacency(5, n, var_deg, m, "variable")
    chk_rows = adjacency(5 + n, m, chk_deg, n, "check")

    graph = TannerGraph.from_check_rows(n, chk_rows)
    declared = tuple(tuple(sorted(r)) for r in var_rows)
    if declared != graph.var_adj:
        raise ValueError("variable and check adjacency rows disagree")
    return graph


def write_alist(graph: TannerGraph) -> str:
    """Canonical alist text: sorted rows, single spaces, no zero padding."""
    out = [f"{graph.n} {graph.m}"]
    out.append(f"{max(graph.var_degrees(), default=0)} "
               f"{max(graph.check_degrees(), default=0)}")
    out.append(" ".join(str(d) for d in graph.var_degrees()))
    out.append(" ".join(str(d) for d in graph.check_degrees()))
    for col in graph.var_adj:
        out.append(" ".join(str(i + 1) for i in col))
    for row in graph.check_adj:
        out.append(" ".join(str(j + 1) for j in row))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# code construction


def generate_regular_code(n: int, dv: int, dc: int, seed: int) -> TannerGraph:
    """Seeded (dv, dc)-regular graph via random edge-socket permutation.

    Permutations producing duplicate edges are rejected and redrawn (new
    sub-key per attempt); deterministic for fixed (n, dv, dc, seed).
    """
    if dv < 2 or dc < 2:
        raise ValueError("dv and dc must both be >= 2")
    if (n * dv) % dc != 0:
        raise ValueError(f"n*dv = {n * dv} not divisible by dc = {dc}")
    m = n * dv // dc
    sockets = n * dv
    for attempt in range(_EDGE_REPAIR_TRIES):
        key = rng.derive_key(seed, "regular-code", n, dv, dc, attempt)
        perm = rng.permutation(key, sockets)
        rows: list[list[int]] = [[] for _ in range(m)]
        ok = True
        for t in range(sockets):
            i, j = t // dc, int(perm[t]) // dv
            if j in rows[i]:
                ok = False
                break
            rows[i].append(j)
        if ok:
            return TannerGraph.from_check_rows(n, rows)
    raise RuntimeError(
        f"no duplicate-free ({dv},{dc}) graph after {_EDGE_REPAIR_TRIES} tries")


def uncoded_graph(n: int) -> TannerGraph:
    """Degenerate code with no checks: every bit is an information bit."""
    return TannerGraph(m=0, n=n, check_adj=(), var_adj=((),) * n)


def parity_matrix(graph: TannerGraph) -> np.ndarray:
    P = np.zeros((graph.m, graph.n), dtype=np.uint8)
    for i, row in enumerate(graph.check_adj):
        P[i, list(row)] = 1
    return P


@dataclass(frozen=True)
class _Encoding:
    rank: int
    pivot_cols: tuple[int, ...]
    free_cols: tuple[int, ...]
    # rref rows restricted to the free columns, shape (rank, n-rank)
    reduced: np.ndarray = field(compare=False)


@lru_cache(maxsize=32)
def _encoding(graph: TannerGraph) -> _Encoding:
    P = parity_matrix(graph)
    m, n = P.shape
    r = 0
    pivots: list[int] = []
    for col in range(n):
        rows = np.nonzero(P[r:, col])[0]
        if rows.size == 0:
            continue
        pivot = r + int(rows[0])
        if pivot != r:
            P[[r, pivot]] = P[[pivot, r]]
        mask = P[:, col].copy()
        mask[r] = 0
        P[mask == 1] ^= P[r]
        pivots.append(col)
        r += 1
        if r == m:
            break
    free = tuple(j for j in range(n) if j not in set(pivots))
    if r < m:
        log.warning("parity matrix rank-deficient: rank %d < m %d; k = %d",
                    r, m, n - r)
    return _Encoding(rank=r, pivot_cols=tuple(pivots), free_cols=free,
                     reduced=P[:r][:, list(free)].copy())


def code_dimension(graph: TannerGraph) -> int:
    """Number of information bits k = n - rank(P)."""
    if graph.m == 0:
        return graph.n
    return graph.n - _encoding(graph).rank


def info_positions(graph: TannerGraph) -> tuple[int, ...]:
    """Systematic (pivot-free) columns carrying the information bits."""
    if graph.m == 0:
        return tuple(range(graph.n))
    return _encoding(graph).free_cols


def encode(graph: TannerGraph, info: np.ndarray) -> np.ndarray:
    """Systematic encoding by GF(2) elimination of the parity matrix."""
    info = np.asarray(info, dtype=np.uint8) & 1
    if graph.m == 0:
        if info.size != graph.n:
            raise ValueError(f"info length {info.size} != n {graph.n}")
        return info.copy()
    enc = _encoding(graph)
    k = graph.n - enc.rank
    if info.size != k:
        raise ValueError(f"info length {info.size} != k {k}")
    c = np.zeros(graph.n, dtype=np.uint8)
    c[list(enc.free_cols)] = info
    # row i of the rref reads c[pivot_i] + reduced[i] . info = 0 (mod 2)
    c[list(enc.pivot_cols)] = (enc.reduced @ info) & 1
    return c


def check_parity(graph: TannerGraph, c: np.ndarray) -> bool:
    c = np.asarray(c)
    if c.size != graph.n:
        raise ValueError(f"codeword length {c.size} != n {graph.n}")
    if graph.m == 0:
        return True
    st = _node_structure(graph)
    syndrome = np.bincount(st.edge_check, weights=c[st.edge_var].astype(float),
                           minlength=graph.m).astype(np.int64) & 1
    return not syndrome.any()


# ---------------------------------------------------------------------------
# parity polytope


def enumerate_even_subsets(graph: TannerGraph, check: int,
                           degree_cap: int = EVEN_SUBSET_DEGREE_CAP) -> list[tuple[int, ...]]:
    """All even-cardinality subsets of N_check, including the empty set.

    Exponential; intended as a desk-scale oracle, hence the cap.
    """
    neighborhood = graph.check_adj[check]
    d = len(neighborhood)
    if d > degree_cap:
        raise ValueError(f"check degree {d} exceeds oracle cap {degree_cap}")
    subsets: list[tuple[int, ...]] = []
    for size in range(0, d + 1, 2):
        subsets.extend(itertools.combinations(neighborhood, size))
    return subsets


@dataclass(frozen=True)
class FsConstraint:
    """One parity inequality: +1 coefficients on the odd subset, -1 on the
    rest of the check's neighborhood, right-hand side |subset| - 1."""

    check: int
    subset: tuple[int, ...]
    coeffs: dict[int, int] = field(compare=False)
    rhs: int = 0

    def __post_init__(self):
        if len(self.subset) % 2 != 1:
            raise ValueError("subset cardinality must be odd")
        if self.rhs != len(self.subset) - 1:
            raise ValueError("rhs must equal |subset| - 1")
        on = {j for j, c in self.coeffs.items() if c == +1}
        off = {j for j, c in self.coeffs.items() if c == -1}
        if on != set(self.subset) or (on & off):
            raise ValueError("coefficients inconsistent with subset")

    def violated_by(self, f: np.ndarray, tol: float = 0.0) -> bool:
        return self.evaluate(f) > self.rhs + tol

    def evaluate(self, f: np.ndarray) -> float:
        return float(sum(c * f[j] for j, c in self.coeffs.items()))


def fs_constraints(graph: TannerGraph,
                   degree_cap: int = FS_DEGREE_CAP) -> list[FsConstraint]:
    """Every parity inequality of every check: 2^(d_i - 1) per check."""
    out: list[FsConstraint] = []
    for i, neighborhood in enumerate(graph.check_adj):
        d = len(neighborhood)
        if d > degree_cap:
            raise ValueError(
                f"check {i} degree {d} exceeds cap {degree_cap}; "
                "use a lower-degree code (cut separation is out of scope)")
        for size in range(1, d + 1, 2):
            for subset in itertools.combinations(neighborhood, size):
                inside = set(subset)
                coeffs = {j: (+1 if j in inside else -1) for j in neighborhood}
                out.append(FsConstraint(check=i, subset=subset, coeffs=coeffs,
                                        rhs=size - 1))
    return out


# ---------------------------------------------------------------------------
# sum-product decoding


@dataclass(frozen=True)
class _NodeStructure:
    # edges sorted by (check, var); var_order permutes them to var-major
    edge_check: np.ndarray = field(compare=False)
    edge_var: np.ndarray = field(compare=False)


@lru_cache(maxsize=32)
def _node_structure(graph: TannerGraph) -> _NodeStructure:
    checks, vars_ = [], []
    for i, row in enumerate(graph.check_adj):
        checks.extend([i] * len(row))
        vars_.extend(row)
    return _NodeStructure(
        edge_check=np.asarray(checks, dtype=np.int64),
        edge_var=np.asarray(vars_, dtype=np.int64),
    )


def spa_decode(graph: TannerGraph, llr: np.ndarray,
               max_iter: int) -> tuple[np.ndarray, np.ndarray, bool]:
    """Flooding sum-product in the LLR domain (tanh rule), early exit on
    parity satisfaction.

    Returns (hard decisions, a-posteriori LLRs clamped to +-LLR_MAX,
    converged flag).  Convention: llr = ln(P0/P1), so positive leans 0.
    """
    lam = np.clip(np.asarray(llr, dtype=np.float64), -LLR_MAX, LLR_MAX)
    if lam.size != graph.n:
        raise ValueError(f"llr length {lam.size} != n {graph.n}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if graph.m == 0:
        hard = (lam < 0).astype(np.uint8)
        return hard, lam.copy(), True

    st = _node_structure(graph)
    ec, ev = st.edge_check, st.edge_var
    msg_vc = lam[ev]
    hard = (lam < 0).astype(np.uint8)
    posterior = lam.copy()
    converged = False

    for _ in range(max_iter):
        # check update: leave-one-out tanh products via log magnitudes
        t = np.tanh(0.5 * msg_vc)
        t = np.where(t == 0.0, 1e-300, t)
        logmag = np.log(np.abs(t))
        neg = (t < 0.0).astype(np.int64)
        sum_log = np.bincount(ec, weights=logmag, minlength=graph.m)
        sum_neg = np.bincount(ec, weights=neg.astype(float),
                              minlength=graph.m).astype(np.int64)
        loo_mag = np.minimum(np.exp(sum_log[ec] - logmag), 1.0 - 1e-16)
        loo_sign = 1.0 - 2.0 * ((sum_neg[ec] - neg) & 1)
        msg_cv = np.clip(loo_sign * 2.0 * np.arctanh(loo_mag),
                         -LLR_MAX, LLR_MAX)
        # variable update and a-posteriori combine
        total = lam + np.bincount(ev, weights=msg_cv, minlength=graph.n)
        msg_vc = np.clip(total[ev] - msg_cv, -LLR_MAX, LLR_MAX)
        posterior = np.clip(total, -LLR_MAX, LLR_MAX)
        hard = (posterior < 0).astype(np.uint8)
        syndrome = np.bincount(ec, weights=hard[ev].astype(float),
                               minlength=graph.m).astype(np.int64) & 1
        if not syndrome.any():
            converged = True
            break

    return hard, posterior, converged
