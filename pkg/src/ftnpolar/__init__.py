"""Polar-coded faster-than-Nyquist signaling: simulation library and CLI."""

from .detect import (
    BcjrDetector, DetectorConfig, SoftEstimates, bcjr_detect, quantize, soft_to_llr,
    sss_gbk_estimate,
)
from .modem_channel import (
    Frame, NoiseSpec, add_awgn, discrete_channel, ebn0_to_sigma2, ftn_modulate, map_bits,
    matched_filter_sample,
)
from .polar import LLR_MAX, PolarCode, SCDecoder, encode, polarize, sc_decode, select_frozen
from .pulse_isi import IsiTaps, PulseSpec, autocorrelation_g, isi_taps, rrc_pulse
from .sim_harness import BerRecord, SimConfig, gap_db, run_ber_point, spectral_efficiency, sweep

__version__ = "0.1.0"
