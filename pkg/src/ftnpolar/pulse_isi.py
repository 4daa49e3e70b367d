"""Root-raised-cosine pulse, its autocorrelation and the FTN ISI taps.

Time is measured in symbol periods (T = 1) and the pulse has unit energy,
so the autocorrelation peak g(0) is 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: fraction of pulse energy that may be lost to truncation
ENERGY_TOLERANCE = 1e-6


def _rrc_unwindowed(t: np.ndarray, beta: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    at_zero = t == 0.0
    at_sing = np.abs(np.abs(t) - 1.0 / (4.0 * beta)) < 1e-12
    regular = ~(at_zero | at_sing)
    tr = t[regular]
    num = np.sin(np.pi * tr * (1 - beta)) + 4 * beta * tr * np.cos(np.pi * tr * (1 + beta))
    den = np.pi * tr * (1 - (4 * beta * tr) ** 2)
    out[regular] = num / den
    out[at_zero] = 1 - beta + 4 * beta / np.pi
    arg = np.pi / (4 * beta)
    out[at_sing] = beta / np.sqrt(2) * (
        (1 + 2 / np.pi) * np.sin(arg) + (1 - 2 / np.pi) * np.cos(arg)
    )
    return out


def raised_cosine(t, beta: float) -> np.ndarray:
    """Raised-cosine Nyquist pulse with roll-off ``beta`` (unit peak)."""
    t = np.asarray(t, dtype=float)
    out = np.sinc(t) * np.cos(np.pi * beta * t)
    den = 1 - (2 * beta * t) ** 2
    sing = np.abs(den) < 1e-12
    # limit at |t| = 1/(2 beta)
    out = np.where(sing, np.pi / 4 * np.sinc(1 / (2 * beta)), out / np.where(sing, 1.0, den))
    return out


@dataclass(frozen=True)
class PulseSpec:
    """Waveform parameters of the FTN transmitter.

    Attributes:
        beta: RRC roll-off factor in (0, 1].
        tau: time-packing factor in (0, 1]; pulses are sent every ``tau * T``.
        span_symbols: one-sided truncation of the pulse, in symbol periods.
        oversampling: waveform samples per ``tau * T`` interval.
    """

    beta: float = 0.3
    tau: float = 1.0
    span_symbols: int = 32
    oversampling: int = 8

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if int(self.span_symbols) != self.span_symbols or self.span_symbols < 1:
            raise ValueError(f"span_symbols must be a positive integer, got {self.span_symbols}")
        if int(self.oversampling) != self.oversampling or self.oversampling < 4:
            raise ValueError(f"oversampling must be an integer >= 4, got {self.oversampling}")
        lost = 1.0 - truncated_energy(self)
        if lost > ENERGY_TOLERANCE:
            raise ValueError(
                f"span of {self.span_symbols} symbols keeps only 1 - {lost:.2e} of the "
                f"pulse energy (beta={self.beta}); increase span_symbols"
            )

    @property
    def dt(self) -> float:
        """Waveform grid period."""
        return self.tau / self.oversampling

    def grid(self) -> np.ndarray:
        """Symmetric time grid covering the truncated pulse."""
        half = int(np.floor(self.span_symbols / self.dt + 1e-9))
        return np.arange(-half, half + 1) * self.dt


def truncated_energy(spec: PulseSpec, points_per_symbol: int = 64) -> float:
    """Energy of the pulse restricted to ``|t| <= span`` (Simpson's rule)."""
    from scipy.integrate import simpson

    n = 2 * spec.span_symbols * points_per_symbol + 1
    t = np.linspace(-spec.span_symbols, spec.span_symbols, n)
    return float(simpson(_rrc_unwindowed(t, spec.beta) ** 2, x=t))


def rrc_pulse(t, spec: PulseSpec) -> np.ndarray:
    """Unit-energy root-raised-cosine amplitude, zero beyond the truncation span."""
    t = np.asarray(t, dtype=float)
    p = _rrc_unwindowed(t, spec.beta)
    return np.where(np.abs(t) <= spec.span_symbols + 1e-12, p, 0.0)


def autocorrelation_g(t, spec: PulseSpec) -> np.ndarray:
    """Pulse autocorrelation ``g(t) = int p(x) p(x - t) dx``.

    For a unit-energy RRC pulse this is the raised cosine with the same
    roll-off, evaluated in closed form.
    """
    return raised_cosine(t, spec.beta)


@dataclass(frozen=True)
class IsiTaps:
    """One-sided ISI taps ``g[l] = g(l * tau * T)``, ``l = 0 .. L-1``."""

    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("taps must be a non-empty 1-D array")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @property
    def L(self) -> int:
        return self.g.size

    def two_sided(self) -> np.ndarray:
        """Taps ``g[-(L-1)] .. g[L-1]`` as a symmetric impulse response."""
        return np.concatenate([self.g[:0:-1], self.g])

    def interference_energy(self) -> float:
        return float(np.sum(self.g[1:] ** 2))


def isi_taps(spec: PulseSpec, tap_threshold: float = 1e-3) -> IsiTaps:
    """Sample g at multiples of tau and drop the tail below ``tap_threshold``.

    L is the smallest count such that every later sample is below the
    threshold in magnitude; it never exceeds ``span_symbols / tau``.
    """
    if not 0 < tap_threshold < 1:
        raise ValueError(f"tap_threshold must lie in (0, 1), got {tap_threshold}")
    cap = max(1, int(np.floor(spec.span_symbols / spec.tau + 1e-9)))
    g = autocorrelation_g(np.arange(cap) * spec.tau, spec)
    big = np.nonzero(np.abs(g) >= tap_threshold)[0]
    L = int(big[-1]) + 1
    return IsiTaps(g[:L].copy())
