"""FTN sequence estimation.

Two detectors work on the tau-spaced matched-filter samples:

* successive symbol-by-symbol estimation with go-back-K (SSSgbKSE), which
  cancels ISI of past decisions and revisits the symbol K steps back once
  K newer decisions are available;
* a log-MAP BCJR over the whitened ISI trellis, the near-optimal benchmark.

Both accept a single frame (N,) or a batch (F, N) and emit LLRs with the
polar decoder's convention (positive means bit 0, i.e. symbol +1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import solve_triangular

from .modem_channel import gram_factor
from .polar import LLR_MAX
from .pulse_isi import IsiTaps

DEFAULT_STATE_CAP = 2 ** 14


@dataclass(frozen=True)
class DetectorConfig:
    """Detector settings.

    ``kind`` is ``"sss"`` or ``"bcjr"``. ``nu_max`` truncates the whitened
    BCJR memory (reduced-state mode); ``llr_scaling="empirical"`` replaces
    the noise variance in the SSS soft-to-LLR step by the per-frame mean
    squared distance of the soft values from their decisions.
    """

    kind: str
    taps: IsiTaps
    sigma2: float
    go_back_k: int = 1
    llr_clamp: float = LLR_MAX
    nu_max: int | None = None
    state_cap: int = DEFAULT_STATE_CAP
    modulation: str = "bpsk"
    llr_scaling: str = "sigma2"

    def __post_init__(self):
        if self.kind not in ("sss", "bcjr"):
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.kind == "sss" and not 0 <= self.go_back_k < self.taps.L:
            raise ValueError(f"go-back K={self.go_back_k} must satisfy 0 <= K < L={self.taps.L}")
        if self.llr_scaling not in ("sigma2", "empirical"):
            raise ValueError(f"unknown llr_scaling {self.llr_scaling!r}")


@dataclass
class SoftEstimates:
    soft: np.ndarray
    hard: np.ndarray


def quantize(soft_value, modulation: str = "bpsk"):
    """Nearest constellation point; an exact zero decides for +1."""
    v = np.asarray(soft_value)
    if modulation == "bpsk":
        return np.where(np.real(v) >= 0, 1.0, -1.0)
    if modulation == "qpsk":
        re = np.where(np.real(v) >= 0, 1.0, -1.0)
        im = np.where(np.imag(v) >= 0, 1.0, -1.0)
        return (re + 1j * im) / np.sqrt(2)
    raise ValueError(f"unknown modulation {modulation!r}")


def sss_gbk_estimate(y: np.ndarray, cfg: DetectorConfig) -> SoftEstimates:
    """Successive symbol-by-symbol estimation with go-back-K.

    Step k first estimates symbol k by removing the ISI of the L-1 previous
    decisions. When k >= K it then re-estimates symbol k-K, additionally
    removing the ISI of its K successors k-K+1 .. k. Decisions used for
    cancellation are quantized; the returned soft value of each symbol is
    the last one computed for it.

    Symbols before the frame start are zero. For K = 0 no re-estimation
    takes place.
    """
    y = np.asarray(y)
    single = y.ndim == 1
    if single:
        y = y[None, :]
    g = cfg.taps.g
    L = cfg.taps.L
    K = cfg.go_back_k
    if not 0 <= K < L:
        raise ValueError(f"go-back K={K} must be smaller than L={L}")
    f, n = y.shape
    dtype = np.result_type(y.dtype, float)
    pad = L - 1
    # hard[:, pad + j] holds the current decision for symbol j
    hard = np.zeros((f, pad + n), dtype=dtype)
    soft = np.zeros((f, n), dtype=dtype)
    # past-ISI weights g[L-1] .. g[1] line up with decisions j-L+1 .. j-1
    w_past = g[:0:-1]
    w_next = g[1:K + 1]
    g0 = g[0]
    for k in range(n):
        est = y[:, k]
        if pad:
            est = est - hard[:, k:k + pad] @ w_past
        est = est / g0
        soft[:, k] = est
        hard[:, pad + k] = quantize(est, cfg.modulation)
        if K and k >= K:
            j = k - K
            re = y[:, j] - hard[:, pad + j + 1:pad + k + 1] @ w_next
            if pad:
                re = re - hard[:, j:j + pad] @ w_past
            re = re / g0
            soft[:, j] = re
            hard[:, pad + j] = quantize(re, cfg.modulation)
    out = SoftEstimates(soft=soft, hard=hard[:, pad:])
    if single:
        return SoftEstimates(soft=out.soft[0], hard=out.hard[0])
    return out


def soft_to_llr(soft: SoftEstimates | np.ndarray, cfg: DetectorConfig) -> np.ndarray:
    """Bit LLRs ``2 a / sigma2`` (BPSK) or per-dimension equivalent (QPSK).

    QPSK LLRs are interleaved as [b0 (I), b1 (Q)] per symbol, matching
    :func:`ftnpolar.modem_channel.map_bits`.
    """
    s = soft.soft if isinstance(soft, SoftEstimates) else np.asarray(soft)
    var = cfg.sigma2
    if cfg.llr_scaling == "empirical":
        dist = np.abs(s - quantize(s, cfg.modulation)) ** 2
        if cfg.modulation == "qpsk":
            dist = dist / 2
        var = np.maximum(np.mean(dist, axis=-1, keepdims=True), 1e-12)
    if cfg.modulation == "bpsk":
        llr = 2.0 * np.real(s) / var
    else:
        amp = 1 / np.sqrt(2)
        llr = np.empty(s.shape[:-1] + (2 * s.shape[-1],))
        llr[..., 0::2] = 2 * amp * np.real(s) / var
        llr[..., 1::2] = 2 * amp * np.imag(s) / var
    return np.clip(llr, -cfg.llr_clamp, cfg.llr_clamp)


class BcjrDetector:
    """Log-MAP forward-backward detector on the whitened FTN model.

    With ``Gram = C C^T`` (lower Cholesky, banded), ``z = C^{-1} y`` equals
    ``C^T a`` plus white noise of variance sigma2. ``C^T`` is upper banded,
    so the trellis runs over the reversed sequence where the model becomes
    causal: ``z'_k = sum_m h[k, m] b_{k-m}`` with ``h[k, m] = C[j+m, j]``
    and ``j = N-1-k``. Coefficients that would reach past the frame are zero,
    which makes the uniform start state exact.

    Args:
        taps: ISI taps.
        sigma2: per-dimension noise variance.
        n: frame length in symbols.
        nu_max: optional memory truncation.
        state_cap: largest allowed trellis size.
        amplitude: symbol amplitude per dimension (1 for BPSK).
    """

    def __init__(self, taps: IsiTaps, sigma2: float, n: int, nu_max: int | None = None,
                 state_cap: int = DEFAULT_STATE_CAP, amplitude: float = 1.0,
                 llr_clamp: float = LLR_MAX):
        nu = taps.L - 1
        if nu_max is not None:
            nu = min(nu, nu_max)
        nu = min(nu, max(n - 1, 0))
        if 2 ** nu > state_cap:
            raise ValueError(
                f"BCJR trellis would need 2^{nu} states (cap {state_cap}); "
                f"reduce the memory with nu_max"
            )
        self.n = n
        self.nu = nu
        self.sigma2 = sigma2
        self.amplitude = amplitude
        self.llr_clamp = llr_clamp
        chol, _ = gram_factor(taps, n)
        self._chol = chol
        coef = np.zeros((n, nu + 1))
        for k in range(n):
            j = n - 1 - k
            m = np.arange(min(nu, n - 1 - j) + 1)
            coef[k, m] = chol[j + m, j]
        self.coef = coef * amplitude
        n_states = 2 ** nu
        s = np.arange(n_states)
        # symbols[s, bit, m]: m = 0 current symbol, m >= 1 symbol m steps back
        sym = np.empty((n_states, 2, nu + 1))
        sym[:, 0, 0] = 1.0
        sym[:, 1, 0] = -1.0
        for m in range(1, nu + 1):
            sym[:, :, m] = (1.0 - 2.0 * ((s >> (m - 1)) & 1))[:, None]
        self._sym = sym.reshape(2 * n_states, nu + 1)
        self.n_states = n_states

    def whiten(self, y: np.ndarray) -> np.ndarray:
        return solve_triangular(self._chol, np.atleast_2d(y).T, lower=True).T

    def llr(self, y: np.ndarray) -> np.ndarray:
        """Per-symbol LLRs for frames y of shape (N,) or (F, N)."""
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        y2 = np.atleast_2d(y)
        if y2.shape[1] != self.n:
            raise ValueError(f"frame length {y2.shape[1]} != {self.n}")
        z = np.ascontiguousarray(self.whiten(y2)[:, ::-1])
        inv2s = 1.0 / (2.0 * self.sigma2)
        if self.nu == 0:
            llr = 4.0 * self.coef[:, 0] * z * inv2s
        else:
            means = (self.coef @ self._sym.T).reshape(self.n, self.n_states, 2)
            llr = _forward_backward(z, means, inv2s)
        llr = np.clip(llr[:, ::-1], -self.llr_clamp, self.llr_clamp)
        return llr[0] if single else llr


@njit(cache=True)
def _max_star(a, b):
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def _forward_backward(z, means, inv2s):
    """Log-MAP recursions; ``means[k, s, bit]`` is the noiseless output of
    leaving state ``s`` with ``bit`` at step ``k``. State ``s`` moves to
    ``2 * (s % (S/2)) + bit``."""
    f, n = z.shape
    n_states = means.shape[1]
    half = n_states // 2
    out = np.empty((f, n))
    alphas = np.empty((n, n_states))
    gam = np.empty((n_states, 2))
    alpha = np.zeros(n_states)
    new = np.empty(n_states)
    beta = np.zeros(n_states)
    for fr in range(f):
        alpha[:] = 0.0
        for k in range(n):
            alphas[k, :] = alpha
            zk = z[fr, k]
            for s in range(n_states):
                for b in range(2):
                    d = zk - means[k, s, b]
                    gam[s, b] = -d * d * inv2s
            top = -np.inf
            for r in range(half):
                for b in range(2):
                    v = _max_star(alpha[r] + gam[r, b], alpha[r + half] + gam[r + half, b])
                    new[2 * r + b] = v
                    top = max(top, v)
            for s in range(n_states):
                alpha[s] = new[s] - top
        beta[:] = 0.0
        for k in range(n - 1, -1, -1):
            zk = z[fr, k]
            m0 = -np.inf
            m1 = -np.inf
            for s in range(n_states):
                r = s % half
                d0 = zk - means[k, s, 0]
                d1 = zk - means[k, s, 1]
                gam[s, 0] = -d0 * d0 * inv2s + beta[2 * r]
                gam[s, 1] = -d1 * d1 * inv2s + beta[2 * r + 1]
                m0 = max(m0, alphas[k, s] + gam[s, 0])
                m1 = max(m1, alphas[k, s] + gam[s, 1])
            s0 = 0.0
            s1 = 0.0
            top = -np.inf
            for s in range(n_states):
                s0 += math.exp(alphas[k, s] + gam[s, 0] - m0)
                s1 += math.exp(alphas[k, s] + gam[s, 1] - m1)
                v = _max_star(gam[s, 0], gam[s, 1])
                new[s] = v
                top = max(top, v)
            out[fr, k] = (m0 + math.log(s0)) - (m1 + math.log(s1))
            for s in range(n_states):
                beta[s] = new[s] - top
    return out


def bcjr_detect(y: np.ndarray, cfg: DetectorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(bit LLRs, hard symbols)`` from the BCJR benchmark."""
    y = np.asarray(y)
    n = y.shape[-1]
    if cfg.modulation == "bpsk":
        det = BcjrDetector(cfg.taps, cfg.sigma2, n, cfg.nu_max, cfg.state_cap,
                           llr_clamp=cfg.llr_clamp)
        llr = det.llr(np.real(y))
        return llr, np.where(llr >= 0, 1.0, -1.0)
    # real taps keep I and Q independent: two BPSK trellises at amplitude 1/sqrt(2)
    det = BcjrDetector(cfg.taps, cfg.sigma2, n, cfg.nu_max, cfg.state_cap,
                       amplitude=1 / np.sqrt(2), llr_clamp=cfg.llr_clamp)
    li, lq = det.llr(np.real(y)), det.llr(np.imag(y))
    llr = np.empty(y.shape[:-1] + (2 * n,))
    llr[..., 0::2] = li
    llr[..., 1::2] = lq
    hard = (np.where(li >= 0, 1.0, -1.0) + 1j * np.where(lq >= 0, 1.0, -1.0)) / np.sqrt(2)
    return llr, hard
