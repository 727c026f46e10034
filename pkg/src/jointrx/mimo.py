"""Complex baseband MIMO model, Gray-QPSK mapping, real lifting, seeded
channel/noise generation, and the linear MMSE baseline detector.

Conventions used throughout:
  * QPSK symbols are +-1 +-j: the first bit of an antenna's pair drives
    the real part via 2f-1, the second drives the imaginary part via
    1-2f.  Symbol energy Es = 2 per transmit antenna.
  * snr_db means 10*log10(Es * N_t / sigma_n^2) per receive antenna,
    so sigma_n^2 = 2 * N_t * 10^(-snr_db/10).  Complex noise is
    CN(0, sigma_n^2), i.e. variance sigma_n^2/2 per real dimension.
  * The real lifting stacks [Re; Im] and H -> [[Re, -Im], [Im, Re]],
    which preserves residual norms exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .ldpc import LLR_MAX

QPSK_ES = 2.0


@dataclass(frozen=True, eq=False)
class ComplexChannelBlock:
    Hc: np.ndarray      # N_r x N_t complex gains
    yc: np.ndarray      # N_r received samples
    sigma2: float       # total complex noise variance per entry

    def __post_init__(self):
        if self.Hc.ndim != 2 or self.yc.shape != (self.Hc.shape[0],):
            raise ValueError("inconsistent block dimensions")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")


@dataclass(frozen=True, eq=False)
class RealChannelBlock:
    H: np.ndarray             # 2N_r x 2N_t real
    y: np.ndarray             # 2N_r real
    sigma2_per_dim: float     # noise variance per real dimension

    def __post_init__(self):
        rows, cols = self.H.shape
        if rows % 2 or cols % 2 or self.y.shape != (rows,):
            raise ValueError("inconsistent block dimensions")
        nr, nt = rows // 2, cols // 2
        a, b = self.H[:nr, :nt], self.H[:nr, nt:]
        c, d = self.H[nr:, :nt], self.H[nr:, nt:]
        if not (np.array_equal(a, d) and np.array_equal(b, -c)):
            raise ValueError("H lacks the [[Re, -Im], [Im, Re]] structure")
        if self.sigma2_per_dim < 0:
            raise ValueError("sigma2_per_dim must be >= 0")

    @property
    def nt(self) -> int:
        return self.H.shape[1] // 2

    @property
    def nr(self) -> int:
        return self.H.shape[0] // 2


@dataclass(frozen=True, eq=False)
class FrameModel:
    blocks: tuple[RealChannelBlock, ...]
    N_t: int
    N_r: int
    K: int
    truth: np.ndarray | None = None   # transmitted code bits, for scoring

    def __post_init__(self):
        if len(self.blocks) != self.K:
            raise ValueError("block count does not match K")
        if self.truth is not None and self.truth.size != self.K * 2 * self.N_t:
            raise ValueError("truth length != K * 2 * N_t")


def map_qpsk(code_bits: np.ndarray, N_t: int) -> np.ndarray:
    """Bits -> (K, N_t) complex symbols, spatial dimension first."""
    b = np.asarray(code_bits, dtype=np.float64)
    if b.size % (2 * N_t) != 0:
        raise ValueError(f"bit count {b.size} not divisible by 2*N_t = {2 * N_t}")
    pairs = b.reshape(-1, N_t, 2)
    return (2.0 * pairs[:, :, 0] - 1.0) + 1j * (1.0 - 2.0 * pairs[:, :, 1])


def demap_qpsk(symbols: np.ndarray) -> np.ndarray:
    """Sign read-out inverse of map_qpsk (ties resolve toward +1)."""
    s = np.asarray(symbols)
    bits = np.empty(s.shape + (2,), dtype=np.uint8)
    bits[..., 0] = (s.real >= 0)
    bits[..., 1] = (s.imag < 0)
    return bits.reshape(-1)


def demap_real_symbols(s: np.ndarray) -> np.ndarray:
    """+-1 lifted symbol vector [Re_1..Re_Nt, Im_1..Im_Nt] -> 2N_t bits."""
    s = np.asarray(s, dtype=np.float64)
    nt = s.size // 2
    bits = np.empty(s.size, dtype=np.uint8)
    bits[0::2] = (s[:nt] >= 0)
    bits[1::2] = (s[nt:] < 0)
    return bits


def lift_real_symbols(symbols: np.ndarray) -> np.ndarray:
    """(K, N_t) complex symbols -> (K, 2N_t) stacked [Re; Im]."""
    return np.concatenate([symbols.real, symbols.imag], axis=1)


def complex_to_real(block: ComplexChannelBlock) -> RealChannelBlock:
    re, im = block.Hc.real, block.Hc.imag
    H = np.block([[re, -im], [im, re.copy()]])
    y = np.concatenate([block.yc.real, block.yc.imag])
    return RealChannelBlock(H=H, y=y, sigma2_per_dim=block.sigma2 / 2.0)


def noise_variance(snr_db: float, N_t: int) -> float:
    """Complex noise variance from the declared SNR convention."""
    if math.isinf(snr_db):
        return 0.0
    return QPSK_ES * N_t * 10.0 ** (-snr_db / 10.0)


def simulate_frame(code_bits: np.ndarray, N_t: int, N_r: int, snr_db: float,
                   fading: str, seed: int) -> FrameModel:
    """Generate the K per-time channel blocks carrying ``code_bits``.

    fading "rayleigh_iid" draws every H entry CN(0,1) independently per
    block; "awgn" uses the identity channel (requires N_r == N_t).
    Noise and channel substreams are keyed by (seed, block, purpose).
    """
    bits_arr = np.asarray(code_bits, dtype=np.uint8)
    if bits_arr.size % (2 * N_t) != 0:
        raise ValueError(f"bit count {bits_arr.size} not divisible by 2*N_t")
    if fading not in ("awgn", "rayleigh_iid"):
        raise ValueError(f"unknown fading model {fading!r}")
    if fading == "awgn" and N_r != N_t:
        raise ValueError("awgn mode requires N_r == N_t")

    symbols = map_qpsk(bits_arr, N_t)
    K = symbols.shape[0]
    sigma2 = noise_variance(snr_db, N_t)
    blocks = []
    for k in range(K):
        if fading == "rayleigh_iid":
            g = rng.normals(rng.derive_key(seed, "H", k), 2 * N_r * N_t)
            g = g.reshape(2, N_r, N_t) / math.sqrt(2.0)
            Hc = g[0] + 1j * g[1]
        else:
            Hc = np.eye(N_r, dtype=np.complex128)
        w = rng.normals(rng.derive_key(seed, "noise", k), 2 * N_r)
        nc = math.sqrt(sigma2 / 2.0) * (w[:N_r] + 1j * w[N_r:])
        yc = Hc @ symbols[k] + nc
        blocks.append(complex_to_real(
            ComplexChannelBlock(Hc=Hc, yc=yc, sigma2=sigma2)))
    return FrameModel(blocks=tuple(blocks), N_t=N_t, N_r=N_r, K=K,
                      truth=bits_arr.copy())


def mmse_detect(frame: FrameModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-block MMSE equalization with Gaussian-approximation soft output.

    Returns (symbol estimates, per-bit LLRs).  LLRs follow ln(P0/P1) and
    are clamped to +-LLR_MAX.  The per-stream bias mu = diag(W H) gives
    the unbiased estimate s_hat/mu with effective noise (1-mu)/mu.
    """
    shat = np.empty((frame.K, 2 * frame.N_t))
    llr = np.empty(frame.K * 2 * frame.N_t)
    nt = frame.N_t
    for k, block in enumerate(frame.blocks):
        H, y = block.H, block.y
        G = H.T @ H + block.sigma2_per_dim * np.eye(H.shape[1])
        try:
            WH = np.linalg.solve(G, H.T @ H)
            est = np.linalg.solve(G, H.T @ y)
        except np.linalg.LinAlgError:
            Ginv = np.linalg.pinv(G)                 # sigma2 = 0, rank-deficient H
            WH = Ginv @ (H.T @ H)
            est = Ginv @ (H.T @ y)
        mu = np.clip(np.diag(WH), 1e-12, 1.0 - 1e-12)
        tau2 = (1.0 - mu) / mu
        z = est / mu
        # s = +1 <-> bit 1 on real parts, bit 0 on imaginary parts
        per_sym = 2.0 * z / np.maximum(tau2, 1e-30)
        block_llr = np.empty(2 * nt)
        block_llr[0::2] = -per_sym[:nt]
        block_llr[1::2] = per_sym[nt:]
        llr[k * 2 * nt:(k + 1) * 2 * nt] = np.clip(block_llr, -LLR_MAX, LLR_MAX)
        shat[k] = est
    return shat, llr


def mmse_hard_bits(frame: FrameModel) -> np.ndarray:
    shat, _ = mmse_detect(frame)
    return np.concatenate([demap_real_symbols(shat[k]) for k in range(frame.K)])
