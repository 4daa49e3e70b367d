"""Monte-Carlo BER engine for polar-coded FTN links.

A point simulates frames until ``min_bit_errors`` bit errors have been seen
or ``max_frames`` frames have been sent. Each frame draws its bits and noise
from its own generator, seeded from ``(point seed, frame index)``, and the
stop rule is applied in frame order; the record therefore does not depend on
batch size or worker count.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .detect import BcjrDetector, DetectorConfig, soft_to_llr, sss_gbk_estimate
from .modem_channel import (
    BITS_PER_SYMBOL,
    NoiseSpec,
    apply_isi,
    color_noise,
    ebn0_to_sigma2,
    ftn_modulate,
    gram_factor,
    map_bits,
    matched_filter_sample,
)
from .polar import PolarCode, SCDecoder, encode
from .pulse_isi import IsiTaps, PulseSpec, isi_taps

log = logging.getLogger(__name__)

CSV_FIELDS = ["ebn0_db", "tau", "beta", "detector", "K", "coding", "N", "M", "bits",
              "bit_errors", "frame_errors", "ber", "fer", "seed"]


@dataclass(frozen=True)
class SimConfig:
    """One simulated curve.

    ``n`` is the codeword length for polar coding and the frame length in
    bits when uncoded. ``stop_below_ber`` ends a sweep after the first point
    whose BER falls below it.
    """

    tau: float
    detector: str = "sss"
    beta: float = 0.3
    modulation: str = "bpsk"
    coding: str = "polar"
    n: int = 1024
    m: int = 512
    epsilon: float = 0.5
    go_back_k: int = 1
    tap_threshold: float = 1e-3
    nu_max: int | None = None
    ebn0_grid: tuple[float, ...] = (0.0,)
    min_bit_errors: int = 100
    max_frames: int = 10 ** 6
    master_seed: int = 1
    channel_path: str = "discrete"
    span_symbols: int = 32
    oversampling: int = 8
    exact_f: bool = False
    llr_scaling: str = "sigma2"
    batch_frames: int = 64
    stop_below_ber: float | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "ebn0_grid", tuple(float(x) for x in self.ebn0_grid))
        if not self.ebn0_grid:
            raise ValueError("Eb/N0 grid is empty")
        if any(b <= a for a, b in zip(self.ebn0_grid, self.ebn0_grid[1:])):
            raise ValueError("Eb/N0 grid must be strictly increasing")
        if self.min_bit_errors <= 0 or self.max_frames <= 0 or self.batch_frames <= 0:
            raise ValueError("min_bit_errors, max_frames and batch_frames must be positive")
        if self.detector not in ("sss", "bcjr"):
            raise ValueError(f"unknown detector {self.detector!r}")
        if self.coding not in ("none", "polar"):
            raise ValueError(f"unknown coding {self.coding!r}")
        if self.modulation not in BITS_PER_SYMBOL:
            raise ValueError(f"unknown modulation {self.modulation!r}")
        if self.channel_path not in ("discrete", "waveform"):
            raise ValueError(f"unknown channel path {self.channel_path!r}")
        if self.n < 1 or (self.coding == "polar" and self.n & (self.n - 1)):
            raise ValueError(f"polar code length must be a power of two, got {self.n}")
        if self.coding == "polar" and not 0 < self.m <= self.n:
            raise ValueError(f"message length must lie in (0, N], got M={self.m}")
        if self.n % BITS_PER_SYMBOL[self.modulation]:
            raise ValueError("frame bits must fill whole symbols")
        if self.go_back_k < 0:
            raise ValueError("go-back K must be non-negative")
        PulseSpec(self.beta, self.tau, self.span_symbols, self.oversampling)

    @property
    def rate(self) -> float:
        return self.m / self.n if self.coding == "polar" else 1.0

    @property
    def info_bits(self) -> int:
        return self.m if self.coding == "polar" else self.n

    @property
    def bits_per_symbol(self) -> int:
        return BITS_PER_SYMBOL[self.modulation]

    @property
    def n_symbols(self) -> int:
        return self.n // self.bits_per_symbol


@dataclass
class BerRecord:
    ebn0_db: float
    bits_simulated: int
    bit_errors: int
    frame_errors: int
    frames: int
    seed: int
    elapsed: float = field(default=0.0, compare=False)

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_simulated if self.bits_simulated else 0.0

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else 0.0


def spectral_efficiency(cfg: SimConfig) -> float:
    """Information bits per second per Hz of baseband BPSK bandwidth (T = 1)."""
    return cfg.rate * (1.0 / cfg.tau) / (0.5 * (1.0 + cfg.beta))


def point_seed(master_seed: int, ebn0_db: float) -> int:
    """Seed of one grid point, keyed on its Eb/N0 value in milli-dB."""
    milli = int(round(ebn0_db * 1000)) + 2 ** 31
    return int(np.random.SeedSequence([master_seed, milli]).generate_state(1, np.uint64)[0])


class Link:
    """Transmitter, channel and receiver for one (config, Eb/N0) pair."""

    def __init__(self, cfg: SimConfig, ebn0_db: float):
        self.cfg = cfg
        self.pulse = PulseSpec(cfg.beta, cfg.tau, cfg.span_symbols, cfg.oversampling)
        self.taps: IsiTaps = isi_taps(self.pulse, cfg.tap_threshold)
        self.sigma2 = ebn0_to_sigma2(ebn0_db, cfg.rate, cfg.bits_per_symbol)
        self.noise = NoiseSpec(ebn0_db, self.sigma2)
        self.det_cfg = DetectorConfig(
            kind=cfg.detector, taps=self.taps, sigma2=self.sigma2, go_back_k=cfg.go_back_k,
            nu_max=cfg.nu_max, modulation=cfg.modulation, llr_scaling=cfg.llr_scaling,
        )
        self.code = PolarCode(cfg.n, cfg.m, cfg.epsilon) if cfg.coding == "polar" else None
        self.decoder = SCDecoder(self.code, exact_f=cfg.exact_f) if self.code else None
        if cfg.channel_path == "discrete":
            _, self.loading = gram_factor(self.taps, cfg.n_symbols)
        if cfg.detector == "bcjr":
            # constructing once also validates the trellis size up front
            amp = 1.0 if cfg.modulation == "bpsk" else 1 / np.sqrt(2)
            self.bcjr = BcjrDetector(self.taps, self.sigma2, cfg.n_symbols, cfg.nu_max,
                                     amplitude=amp)

    def _draw(self, seed: int, frames: range):
        cfg = self.cfg
        cplx = cfg.modulation == "qpsk"
        bits, noise = [], []
        if cfg.channel_path == "waveform":
            n_noise = 2 * int(np.ceil(cfg.span_symbols / self.pulse.dt - 1e-9)) \
                + (cfg.n_symbols - 1) * cfg.oversampling + 1
        else:
            n_noise = cfg.n_symbols
        for i in frames:
            rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
            bits.append(rng.integers(0, 2, cfg.info_bits, dtype=np.uint8))
            w = rng.standard_normal(n_noise)
            if cplx:
                w = w + 1j * rng.standard_normal(n_noise)
            noise.append(w)
        return np.array(bits), np.array(noise)

    def run_frames(self, seed: int, frames: range) -> tuple[np.ndarray, np.ndarray]:
        """Bit errors and frame-error flags for the given frame indices."""
        cfg = self.cfg
        u, white = self._draw(seed, frames)
        x = encode(u, self.code) if self.code else u
        a = map_bits(x, cfg.modulation)
        if cfg.channel_path == "discrete":
            y = apply_isi(a, self.taps, self.loading)
            if self.sigma2 > 0:
                y = y + color_noise(white, self.taps, self.sigma2)
        else:
            s = ftn_modulate(a, self.pulse)
            r = s + np.sqrt(self.sigma2 / self.pulse.dt) * white
            y = matched_filter_sample(r, self.pulse, cfg.n_symbols)
        if cfg.detector == "sss":
            llr = soft_to_llr(sss_gbk_estimate(y, self.det_cfg), self.det_cfg)
        elif cfg.modulation == "bpsk":
            llr = self.bcjr.llr(np.real(y))
        else:
            llr = np.empty(y.shape[:-1] + (2 * y.shape[-1],))
            llr[..., 0::2] = self.bcjr.llr(np.real(y))
            llr[..., 1::2] = self.bcjr.llr(np.imag(y))
        if self.decoder:
            u_hat, _ = self.decoder.decode(llr)
        else:
            u_hat = (llr < 0).astype(np.uint8)
        errors = np.count_nonzero(u_hat != u, axis=1)
        return errors, errors > 0


def _run_chunk(args):
    cfg, ebn0_db, seed, start, stop = args
    link = _link_cache(cfg, ebn0_db)
    return link.run_frames(seed, range(start, stop))


_LINKS: dict = {}


def _link_cache(cfg: SimConfig, ebn0_db: float) -> Link:
    key = (cfg, ebn0_db)
    if key not in _LINKS:
        _LINKS.clear()
        _LINKS[key] = Link(cfg, ebn0_db)
    return _LINKS[key]


def worker_count() -> int:
    cap = os.environ.get("FTN_SIM_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def run_ber_point(cfg: SimConfig, ebn0_db: float, workers: int | None = None) -> BerRecord:
    """Simulate one Eb/N0 point until the error target or frame cap is reached."""
    t0 = time.perf_counter()
    seed = point_seed(cfg.master_seed, ebn0_db)
    workers = workers or worker_count()
    bits_per_frame = cfg.info_bits
    frames = bit_errors = frame_errors = 0
    batch = cfg.batch_frames
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while frames < cfg.max_frames and bit_errors < cfg.min_bit_errors:
            chunks = []
            start = frames
            for _ in range(workers):
                stop = min(start + batch, cfg.max_frames)
                if stop > start:
                    chunks.append((cfg, ebn0_db, seed, start, stop))
                start = stop
            try:
                if pool:
                    results = list(pool.map(_run_chunk, chunks))
                else:
                    results = [_run_chunk(c) for c in chunks]
            except Exception as exc:
                raise RuntimeError(
                    f"simulation failed at Eb/N0={ebn0_db} dB in frames "
                    f"{chunks[0][3]}..{chunks[-1][4] - 1}: {exc}"
                ) from exc
            errors = np.concatenate([r[0] for r in results])
            flags = np.concatenate([r[1] for r in results])
            # stop at the first frame that reaches the error target
            need = cfg.min_bit_errors - bit_errors
            hit = np.flatnonzero(np.cumsum(errors) >= need)
            take = hit[0] + 1 if hit.size else errors.size
            frames += int(take)
            bit_errors += int(errors[:take].sum())
            frame_errors += int(flags[:take].sum())
    finally:
        if pool:
            pool.shutdown()
    return BerRecord(ebn0_db=ebn0_db, bits_simulated=frames * bits_per_frame,
                     bit_errors=bit_errors, frame_errors=frame_errors, frames=frames,
                     seed=seed, elapsed=time.perf_counter() - t0)


class SweepError(RuntimeError):
    """A sweep stopped early; ``records`` holds the points finished so far."""

    def __init__(self, message: str, records: list[BerRecord]):
        super().__init__(message)
        self.records = records


def csv_row(cfg: SimConfig, rec: BerRecord) -> dict:
    coded = cfg.coding == "polar"
    return {
        "ebn0_db": repr(rec.ebn0_db), "tau": repr(cfg.tau), "beta": repr(cfg.beta),
        "detector": cfg.detector, "K": cfg.go_back_k if cfg.detector == "sss" else "",
        "coding": cfg.coding, "N": cfg.n, "M": cfg.m if coded else cfg.n,
        "bits": rec.bits_simulated, "bit_errors": rec.bit_errors,
        "frame_errors": rec.frame_errors, "ber": repr(rec.ber), "fer": repr(rec.fer),
        "seed": rec.seed,
    }


def sweep(cfg: SimConfig, csv_path: str | os.PathLike | None = None,
          workers: int | None = None, abort_on_zero: bool = True,
          append: bool = False) -> list[BerRecord]:
    """Run every grid point in order, appending a CSV row after each.

    With ``abort_on_zero`` the sweep ends after two consecutive error-free
    points; ``cfg.stop_below_ber`` ends it after the first point below that
    BER.
    """
    records: list[BerRecord] = []
    fh = writer = None
    try:
        if csv_path is not None:
            write_header = not append or not os.path.exists(csv_path) \
                or os.path.getsize(csv_path) == 0
            fh = open(csv_path, "a" if append else "w", newline="")
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
            if write_header:
                writer.writeheader()
                fh.flush()
    except OSError as exc:
        raise SweepError(f"cannot open {csv_path}: {exc}", records) from exc
    try:
        zero_run = 0
        for ebn0 in cfg.ebn0_grid:
            try:
                rec = run_ber_point(cfg, ebn0, workers)
            except Exception as exc:
                raise SweepError(str(exc), records) from exc
            records.append(rec)
            log.info("%s Eb/N0=%.2f dB: %d/%d errors, BER=%.3e (%.1fs)", cfg.name or cfg.detector,
                     ebn0, rec.bit_errors, rec.bits_simulated, rec.ber, rec.elapsed)
            if writer:
                try:
                    writer.writerow(csv_row(cfg, rec))
                    fh.flush()
                except OSError as exc:
                    raise SweepError(f"write to {csv_path} failed: {exc}", records) from exc
            zero_run = zero_run + 1 if rec.bit_errors == 0 else 0
            if abort_on_zero and zero_run >= 2:
                break
            if cfg.stop_below_ber is not None and rec.ber < cfg.stop_below_ber:
                break
    finally:
        if fh:
            fh.close()
    return records


def ebn0_at_ber(records: list[BerRecord], target: float = 1e-4,
                extrapolate: bool = False) -> float | None:
    """Eb/N0 where the curve crosses ``target``, by log-linear interpolation.

    Points without errors carry no information and are skipped. When no pair
    of points brackets the target, ``extrapolate`` extends the line through
    the last two points; otherwise None is returned.
    """
    pts = sorted((r.ebn0_db, r.ber) for r in records if r.bit_errors > 0)
    return crossing(pts, target, extrapolate)


def crossing(points, target: float, extrapolate: bool = False) -> float | None:
    pts = [(float(x), float(b)) for x, b in points if b > 0]
    lt = math.log10(target)
    for (x0, b0), (x1, b1) in zip(pts, pts[1:]):
        if b0 >= target >= b1 and b0 != b1:
            return x0 + (lt - math.log10(b0)) / (math.log10(b1) - math.log10(b0)) * (x1 - x0)
    if extrapolate and len(pts) >= 2:
        (x0, b0), (x1, b1) = pts[-2], pts[-1]
        if b1 < b0:
            return x0 + (lt - math.log10(b0)) / (math.log10(b1) - math.log10(b0)) * (x1 - x0)
    return None


def gap_db(reference: list[BerRecord], other: list[BerRecord], target: float = 1e-4,
           extrapolate: bool = False) -> float | None:
    """Horizontal distance ``other - reference`` in dB at BER ``target``."""
    a = ebn0_at_ber(reference, target, extrapolate)
    b = ebn0_at_ber(other, target, extrapolate)
    if a is None or b is None:
        return None
    return b - a


def config_to_dict(cfg: SimConfig) -> dict:
    d = asdict(cfg)
    d["ebn0_grid"] = list(cfg.ebn0_grid)
    return d


def config_from_dict(d: dict) -> SimConfig:
    known = {f.name for f in fields(SimConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    return SimConfig(**d)


__all__ = [
    "BerRecord", "CSV_FIELDS", "Link", "SimConfig", "SweepError", "config_from_dict",
    "config_to_dict", "crossing", "ebn0_at_ber", "gap_db", "point_seed",
    "run_ber_point", "spectral_efficiency", "sweep",
]
