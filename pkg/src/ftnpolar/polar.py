"""Polar codes over the binary erasure channel: construction, encoding and
successive cancellation (SC) decoding.

The generator matrix is the plain Kronecker power of ``F = [[1, 0], [1, 1]]``
with no bit-reversal permutation. LLRs follow ``log P(0) / P(1)``, so a
positive value favours bit 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LLR_MAX = 300.0


def _log2_exact(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise ValueError(f"code length must be a power of two, got {n}")
    return n.bit_length() - 1


def polarize(n: int, epsilon: float = 0.5) -> np.ndarray:
    """Symmetric capacities of the ``n`` bit-channels of a BEC(epsilon).

    Index ``2i-1`` of the length-N level gets ``I**2`` and index ``2i`` gets
    ``2I - I**2``, where ``I`` is the capacity of index ``i`` at length N/2.
    """
    _log2_exact(n)
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    cap = np.array([1.0 - epsilon])
    while cap.size < n:
        nxt = np.empty(2 * cap.size)
        nxt[0::2] = cap * cap
        nxt[1::2] = 2 * cap - cap * cap
        cap = nxt
    return cap


def select_frozen(capacities: np.ndarray, m: int) -> np.ndarray:
    """Boolean mask, True where frozen; the ``m`` highest capacities stay free.

    Equal capacities are resolved in favour of the larger index.
    """
    capacities = np.asarray(capacities, dtype=float)
    n = capacities.size
    if not 0 <= m <= n:
        raise ValueError(f"message length {m} outside [0, {n}]")
    # lexsort sorts by the last key first: capacity, then index
    order = np.lexsort((np.arange(n), capacities))
    frozen = np.ones(n, dtype=bool)
    if m:
        frozen[order[-m:]] = False
    return frozen


@dataclass(frozen=True)
class PolarCode:
    n: int
    m: int
    epsilon: float = 0.5
    capacities: np.ndarray = field(init=False, repr=False)
    frozen: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cap = polarize(self.n, self.epsilon)
        frozen = select_frozen(cap, self.m)
        cap.setflags(write=False)
        frozen.setflags(write=False)
        object.__setattr__(self, "capacities", cap)
        object.__setattr__(self, "frozen", frozen)

    @property
    def rate(self) -> float:
        return self.m / self.n

    @property
    def info_positions(self) -> np.ndarray:
        return np.flatnonzero(~self.frozen)


def transform(d: np.ndarray) -> np.ndarray:
    """Compute ``d @ F^{kron s}`` over GF(2) along the last axis, O(N log N)."""
    x = np.array(d, dtype=np.uint8, copy=True)
    n = x.shape[-1]
    _log2_exact(n)
    half = n // 2
    lead = x.shape[:-1]
    while half >= 1:
        # split into blocks of 2*half; left half ^= right half
        v = x.reshape(*lead, n // (2 * half), 2, half)
        v[..., 0, :] ^= v[..., 1, :]
        half //= 2
    return x


def generator_matrix(n: int) -> np.ndarray:
    """Dense ``F^{kron log2 n}`` as a uint8 matrix."""
    s = _log2_exact(n)
    f = np.array([[1, 0], [1, 1]], dtype=np.uint8)
    h = np.ones((1, 1), dtype=np.uint8)
    for _ in range(s):
        h = np.kron(h, f)
    return h


def encode(u: np.ndarray, code: PolarCode) -> np.ndarray:
    """Scatter message bits into free positions and apply the polar transform.

    ``u`` may be a single message of length M or a batch of shape (F, M).
    """
    u = np.asarray(u, dtype=np.uint8)
    if u.shape[-1] != code.m:
        raise ValueError(f"message length {u.shape[-1]} != M = {code.m}")
    d = np.zeros(u.shape[:-1] + (code.n,), dtype=np.uint8)
    d[..., ~code.frozen] = u
    return transform(d)


def _f_minsum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))


def _f_exact(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    t = np.tanh(a / 2) * np.tanh(b / 2)
    t = np.clip(t, -1 + 1e-15, 1 - 1e-15)
    return np.clip(2 * np.arctanh(t), -LLR_MAX, LLR_MAX)


def _g(a: np.ndarray, b: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.where(v.astype(bool), -a, a) + b


class SCDecoder:
    """Successive cancellation decoder for one :class:`PolarCode`.

    Decodes a batch of frames at once; the recursion walks the code tree and
    each leaf makes the hard decision ``bit = 0 iff LLR >= 0``. Subtrees made
    only of frozen bits are skipped since their decisions are known zeros.

    Args:
        code: the polar code.
        exact_f: use the exact tanh rule at f-nodes instead of min-sum.
    """

    def __init__(self, code: PolarCode, exact_f: bool = False):
        self.code = code
        self._f = _f_exact if exact_f else _f_minsum
        self._all_frozen = {}
        self._mark(0, code.n)

    def _mark(self, start: int, size: int) -> bool:
        frozen = bool(self.code.frozen[start:start + size].all())
        self._all_frozen[(start, size)] = frozen
        if size > 1:
            self._mark(start, size // 2)
            self._mark(start + size // 2, size // 2)
        return frozen

    def decode(self, llr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(u_hat, d_hat)`` for LLRs of shape (N,) or (F, N)."""
        llr = np.asarray(llr, dtype=float)
        single = llr.ndim == 1
        if single:
            llr = llr[None, :]
        if llr.shape[-1] != self.code.n:
            raise ValueError(f"LLR length {llr.shape[-1]} != N = {self.code.n}")
        llr = np.clip(np.nan_to_num(llr, posinf=LLR_MAX, neginf=-LLR_MAX), -LLR_MAX, LLR_MAX)
        d_hat = np.zeros(llr.shape, dtype=np.uint8)
        self._node(llr, 0, d_hat)
        u_hat = d_hat[:, ~self.code.frozen]
        if single:
            return u_hat[0], d_hat[0]
        return u_hat, d_hat

    def _node(self, llr: np.ndarray, start: int, d_hat: np.ndarray) -> np.ndarray:
        """Decode the subtree at ``start``; return its re-encoded bits."""
        size = llr.shape[1]
        if self._all_frozen[(start, size)]:
            return np.zeros(llr.shape, dtype=np.uint8)
        if size == 1:
            bit = (llr < 0).astype(np.uint8)
            d_hat[:, start:start + 1] = bit
            return bit
        half = size // 2
        a, b = llr[:, :half], llr[:, half:]
        v1 = self._node(self._f(a, b), start, d_hat)
        v2 = self._node(_g(a, b, v1), start + half, d_hat)
        return np.concatenate([v1 ^ v2, v2], axis=1)


def sc_decode(llr: np.ndarray, code: PolarCode, exact_f: bool = False):
    """Convenience wrapper around :class:`SCDecoder`."""
    return SCDecoder(code, exact_f=exact_f).decode(llr)
