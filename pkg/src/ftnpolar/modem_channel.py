"""Bit mapping, FTN waveform synthesis, AWGN and matched-filter sampling.

Two equivalent channel paths are provided. The waveform path builds the
oversampled transmit signal, adds white noise and runs the matched filter;
it is the reference used for validation. The discrete path applies the ISI
taps directly and colours the noise with a Cholesky factor of the tap Gram
matrix, which is what the BER sweeps use.

Arrays carry frames along the first axis when batched: symbols of shape
(F, N) produce samples of shape (F, N).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import LinAlgError, cholesky, toeplitz
from scipy.signal import fftconvolve

from .pulse_isi import IsiTaps, PulseSpec, rrc_pulse

log = logging.getLogger(__name__)

BITS_PER_SYMBOL = {"bpsk": 1, "qpsk": 2}


@dataclass
class Frame:
    """Everything one codeword passes through on its way to the sink."""

    info_bits: np.ndarray
    coded_bits: np.ndarray
    symbols: np.ndarray | None = None
    rx_samples: np.ndarray | None = None
    soft_estimates: np.ndarray | None = None
    llrs: np.ndarray | None = None
    decoded_bits: np.ndarray | None = None


@dataclass(frozen=True)
class NoiseSpec:
    ebn0_db: float
    sigma2: float
    rng_seed: int = 1

    @classmethod
    def from_ebn0(cls, ebn0_db: float, code_rate: float = 1.0, bits_per_symbol: int = 1,
                  rng_seed: int = 1) -> "NoiseSpec":
        return cls(ebn0_db, ebn0_to_sigma2(ebn0_db, code_rate, bits_per_symbol), rng_seed)


def ebn0_to_sigma2(ebn0_db: float, code_rate: float = 1.0, bits_per_symbol: int = 1) -> float:
    """Per-dimension noise variance N0/2 for unit symbol energy."""
    if not 0 < code_rate <= 1:
        raise ValueError(f"code rate must lie in (0, 1], got {code_rate}")
    if bits_per_symbol not in (1, 2):
        raise ValueError(f"bits_per_symbol must be 1 or 2, got {bits_per_symbol}")
    return 1.0 / (2.0 * code_rate * bits_per_symbol * 10.0 ** (ebn0_db / 10.0))


def map_bits(x: np.ndarray, modulation: str = "bpsk") -> np.ndarray:
    """BPSK: 0 -> +1, 1 -> -1. QPSK: Gray pairs ``((1-2b0) + 1j(1-2b1)) / sqrt(2)``."""
    x = np.asarray(x)
    if modulation == "bpsk":
        return 1.0 - 2.0 * x
    if modulation == "qpsk":
        if x.shape[-1] % 2:
            raise ValueError("QPSK needs an even number of bits")
        b = 1.0 - 2.0 * x
        return (b[..., 0::2] + 1j * b[..., 1::2]) / np.sqrt(2)
    raise ValueError(f"unknown modulation {modulation!r}")


# -- waveform path -----------------------------------------------------------

def _pulse_samples(spec: PulseSpec) -> np.ndarray:
    return rrc_pulse(spec.grid(), spec)


def _pad_samples(spec: PulseSpec) -> int:
    """Grid samples of zero padding ahead of the first pulse centre at t = 0."""
    return int(np.ceil(spec.span_symbols / spec.dt - 1e-9))


def ftn_modulate(symbols: np.ndarray, spec: PulseSpec) -> np.ndarray:
    """Oversampled ``s(t) = sum_n a_n p(t - n tau T)`` with grid period ``tau T / Q``.

    Symbol ``n`` (0-based) sits at grid index ``pad + n Q``; the waveform
    carries ``span_symbols`` of padding on both ends.
    """
    symbols = np.asarray(symbols)
    q = spec.oversampling
    pad = _pad_samples(spec)
    n = symbols.shape[-1]
    length = 2 * pad + (n - 1) * q + 1
    train = np.zeros(symbols.shape[:-1] + (length,), dtype=symbols.dtype)
    train[..., pad:pad + (n - 1) * q + 1:q] = symbols
    p = _pulse_samples(spec)
    half = p.size // 2
    full = fftconvolve(train, np.broadcast_to(p, train.shape[:-1] + p.shape), mode="full", axes=-1)
    return full[..., half:half + length]


def add_awgn(waveform: np.ndarray, noise: NoiseSpec, spec: PulseSpec,
             rng: np.random.Generator) -> np.ndarray:
    """Add white noise whose matched-filter output has variance ``sigma2``.

    Complex waveforms get ``sigma2`` in each of the I and Q dimensions.
    """
    if noise.sigma2 == 0:
        return np.array(waveform, copy=True)
    scale = np.sqrt(noise.sigma2 / spec.dt)
    return waveform + scale * white_noise(waveform.shape, rng, np.iscomplexobj(waveform))


def matched_filter_sample(waveform: np.ndarray, spec: PulseSpec, n_symbols: int) -> np.ndarray:
    """Correlate with ``p`` and sample at every symbol centre ``k tau T``."""
    waveform = np.asarray(waveform)
    q = spec.oversampling
    pad = _pad_samples(spec)
    expected = 2 * pad + (n_symbols - 1) * q + 1
    if waveform.shape[-1] != expected:
        raise ValueError(
            f"waveform has {waveform.shape[-1]} samples, expected {expected} for "
            f"{n_symbols} symbols on this grid"
        )
    p = _pulse_samples(spec)
    half = p.size // 2
    idx = pad + np.arange(n_symbols) * q
    # correlation at the sample instants only: windowed dot products
    windows = np.lib.stride_tricks.sliding_window_view(
        np.pad(waveform, [(0, 0)] * (waveform.ndim - 1) + [(half, half)]), p.size, axis=-1
    )
    return spec.dt * (windows[..., idx, :] @ p[::-1])


# -- discrete path -----------------------------------------------------------

@lru_cache(maxsize=32)
def _gram_factor_cached(taps_key: bytes, n: int) -> tuple[np.ndarray, float]:
    g = np.frombuffer(taps_key)
    col = np.zeros(n)
    m = min(n, g.size)
    col[:m] = g[:m]
    gram = toeplitz(col)
    loading = 0.0
    step = 1e-9
    while True:
        try:
            chol = cholesky(gram + loading * np.eye(n), lower=True)
            break
        except LinAlgError:
            loading = step
            step *= 10
    if loading:
        log.warning("tap Gram matrix not positive definite for N=%d; diagonal loading %.1e",
                    n, loading)
    chol.setflags(write=False)
    return chol, loading


def gram_factor(taps: IsiTaps, n: int) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of the N x N tap Gram matrix and the loading used.

    The Gram matrix is ``toeplitz(g) + loading * I``; ``loading`` is zero
    when the plain matrix is positive definite and otherwise the first of
    1e-9, 1e-8, ... that makes it so.
    """
    return _gram_factor_cached(np.ascontiguousarray(taps.g, dtype=float).tobytes(), int(n))


def apply_isi(symbols: np.ndarray, taps: IsiTaps, loading: float = 0.0) -> np.ndarray:
    """Noiseless ``y_k = sum_n a_n g(|k - n|)`` with symbols outside the frame zero."""
    h = taps.two_sided().astype(float)
    h[taps.L - 1] += loading
    full = fftconvolve(symbols, np.broadcast_to(h, np.shape(symbols)[:-1] + h.shape),
                       mode="full", axes=-1) if np.ndim(symbols) > 1 else np.convolve(symbols, h)
    return full[..., taps.L - 1:taps.L - 1 + np.shape(symbols)[-1]]


def color_noise(white: np.ndarray, taps: IsiTaps, sigma2: float) -> np.ndarray:
    """Turn unit white noise into noise with covariance ``sigma2 * Gram``."""
    chol, _ = gram_factor(taps, white.shape[-1])
    return np.sqrt(sigma2) * (white @ chol.T)


def white_noise(shape, rng: np.random.Generator, complex_noise: bool = False) -> np.ndarray:
    w = rng.standard_normal(shape)
    if complex_noise:
        w = w + 1j * rng.standard_normal(shape)
    return w


def discrete_channel(symbols: np.ndarray, taps: IsiTaps, noise: NoiseSpec,
                     rng: np.random.Generator) -> np.ndarray:
    """Sampled matched-filter output of the tap model with coloured noise.

    When the Gram matrix needs diagonal loading the same loading is applied
    to the desired-symbol tap, so signal and noise keep one covariance model.
    """
    symbols = np.asarray(symbols)
    n = symbols.shape[-1]
    _, loading = gram_factor(taps, n)
    y = apply_isi(symbols, taps, loading)
    if noise.sigma2 > 0:
        w = white_noise(symbols.shape, rng, np.iscomplexobj(symbols))
        y = y + color_noise(w, taps, noise.sigma2)
    return y
