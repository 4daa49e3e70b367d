"""Command-line front-end for polar-coded FTN BER sweeps.

Example::

    ftn-sim --tau 0.8 --detector sss bcjr --coding none --K 1 \\
        --ebn0 4:0.5:10 --out tau08_uncoded.csv

A YAML experiment file may hold either one mapping of :class:`SimConfig`
keys or ``experiments: [...]`` with one mapping per run; ``out`` sets the
CSV path. Command-line flags override file values for every experiment.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from itertools import groupby

import numpy as np
import yaml

from .sim_harness import (
    BerRecord,
    SimConfig,
    SweepError,
    config_from_dict,
    config_to_dict,
    gap_db,
    spectral_efficiency,
    sweep,
)

log = logging.getLogger("ftnpolar")

DEFAULT_OUT = "ftn_results.csv"
DETECTORS = {"sss": "sss", "bcjr": "bcjr"}
CODINGS = {"none": "none", "polar": "polar"}

# flag dest -> SimConfig field
FLAG_FIELDS = {
    "tau": "tau", "beta": "beta", "K": "go_back_k", "L_threshold": "tap_threshold",
    "numax": "nu_max", "coding": "coding", "N": "n", "M": "m", "epsilon": "epsilon",
    "mod": "modulation", "ebn0": "ebn0_grid", "min_errors": "min_bit_errors",
    "max_frames": "max_frames", "seed": "master_seed", "channel": "channel_path",
    "stop_below": "stop_below_ber",
}


class UsageError(Exception):
    pass


def parse_grid(text: str) -> tuple[float, ...]:
    """``start:step:stop`` (stop included) or a comma-separated list."""
    if ":" in text:
        try:
            start, step, stop = (float(v) for v in text.split(":"))
        except ValueError:
            raise UsageError(f"bad Eb/N0 range {text!r}; expected start:step:stop") from None
        if step <= 0 or stop < start:
            raise UsageError(f"bad Eb/N0 range {text!r}")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 10) for i in range(count))
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"bad Eb/N0 list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ftn-sim", description=__doc__.split("\n\n")[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="YAML experiment file")
    p.add_argument("--tau", type=float, help="time-packing factor in (0, 1]")
    p.add_argument("--beta", type=float, help="RRC roll-off (default 0.3)")
    p.add_argument("--detector", nargs="+", choices=sorted(DETECTORS),
                   help="one or more detectors; two give a gap report")
    p.add_argument("--K", type=int, help="SSSgbKSE go-back depth (default 1)")
    p.add_argument("--L-threshold", dest="L_threshold", type=float,
                   help="ISI tap magnitude threshold (default 1e-3)")
    p.add_argument("--numax", type=int, help="BCJR memory truncation")
    p.add_argument("--coding", choices=sorted(CODINGS), help="default polar")
    p.add_argument("--N", type=int, help="codeword / frame length in bits (default 1024)")
    p.add_argument("--M", type=int, help="message length (default 512)")
    p.add_argument("--epsilon", type=float, help="BEC design erasure probability (default 0.5)")
    p.add_argument("--mod", choices=["bpsk", "qpsk"], help="default bpsk")
    p.add_argument("--ebn0", help="Eb/N0 grid in dB, start:step:stop or a,b,c")
    p.add_argument("--min-errors", dest="min_errors", type=int, help="bit errors per point")
    p.add_argument("--max-frames", dest="max_frames", type=int, help="frame cap per point")
    p.add_argument("--stop-below", dest="stop_below", type=float,
                   help="end a sweep after the first point with BER below this")
    p.add_argument("--seed", type=int, help="master seed (default 1)")
    p.add_argument("--channel", choices=["waveform", "discrete"], help="default discrete")
    p.add_argument("--target-ber", dest="target_ber", type=float, default=1e-4,
                   help="BER at which detector gaps are reported")
    p.add_argument("--out", help=f"CSV output path (default {DEFAULT_OUT})")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _file_experiments(path: str) -> tuple[list[dict], str | None]:
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: top level must be a mapping")
    out = doc.pop("out", None)
    if "experiments" in doc:
        exps = doc.pop("experiments")
        if doc:
            raise UsageError(f"{path}: unknown keys next to experiments: {sorted(doc)}")
        if not isinstance(exps, list) or not all(isinstance(e, dict) for e in exps):
            raise UsageError(f"{path}: experiments must be a list of mappings")
        return [dict(e) for e in exps], out
    return [doc], out


def parse_args(argv: list[str] | None = None) -> tuple[list[SimConfig], str, float]:
    """Resolve flags and an optional experiment file into configurations.

    Raises UsageError for missing, conflicting or out-of-range values.
    """
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    experiments, out = ([{}], None)
    if args.config:
        try:
            experiments, out = _file_experiments(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read {args.config}: {exc}") from exc
    overrides = {}
    for dest, fname in FLAG_FIELDS.items():
        value = getattr(args, dest)
        if value is None:
            continue
        overrides[fname] = parse_grid(value) if dest == "ebn0" else value
    if args.tau is not None and not 0 < args.tau <= 1:
        raise UsageError(f"--tau must lie in (0, 1], got {args.tau}")
    configs = []
    for exp in experiments:
        exp = {**exp, **overrides}
        detectors = args.detector or exp.pop("detectors", None) or [exp.get("detector")]
        for det in detectors:
            d = dict(exp)
            if det is not None:
                d["detector"] = det
            if "tau" not in d:
                raise UsageError("--tau is required")
            if d.get("detector") is None:
                raise UsageError("--detector is required")
            if "ebn0_grid" in d and isinstance(d["ebn0_grid"], str):
                d["ebn0_grid"] = parse_grid(d["ebn0_grid"])
            try:
                configs.append(config_from_dict(d))
            except (TypeError, ValueError) as exc:
                raise UsageError(str(exc)) from exc
    return configs, args.out or out or DEFAULT_OUT, args.target_ber


def to_experiment_file(configs: list[SimConfig], out: str | None = None) -> str:
    """Serialize configurations as a YAML experiment file."""
    doc: dict = {"experiments": [config_to_dict(c) for c in configs]}
    if out:
        doc["out"] = out
    return yaml.safe_dump(doc, sort_keys=False)


def _pair_key(cfg: SimConfig):
    return config_to_dict(replace(cfg, detector="sss", go_back_k=0, nu_max=None, name=""))


def summarize(results: list[tuple[SimConfig, list[BerRecord]]], target: float) -> str:
    lines = []
    for cfg, recs in results:
        label = cfg.name or cfg.detector + (f" K={cfg.go_back_k}" if cfg.detector == "sss" else "")
        lines.append(f"tau={cfg.tau} beta={cfg.beta} coding={cfg.coding} {label}: "
                     f"SE={spectral_efficiency(cfg):.3f} bit/s/Hz")
        lines.append(f"  {'Eb/N0 [dB]':>10}  {'bits':>10}  {'errors':>7}  {'BER':>10}")
        for r in recs:
            lines.append(f"  {r.ebn0_db:10.2f}  {r.bits_simulated:10d}  {r.bit_errors:7d}  "
                         f"{r.ber:10.3e}")
    # gaps between detectors that otherwise share a configuration
    keyed = sorted(((repr(_pair_key(c)), c, r) for c, r in results), key=lambda t: t[0])
    for _, group in groupby(keyed, key=lambda t: t[0]):
        group = list(group)
        refs = [(c, r) for _, c, r in group if c.detector == "bcjr"]
        others = [(c, r) for _, c, r in group if c.detector == "sss"]
        for rc, rr in refs:
            for oc, orr in others:
                gap = gap_db(rr, orr, target)
                text = f"{gap:.2f} dB" if gap is not None else "not bracketed by the grid"
                lines.append(f"gap at BER {target:g}, tau={oc.tau} coding={oc.coding}: "
                             f"SSSgbKSE(K={oc.go_back_k}) - BCJR = {text}")
    return "\n".join(lines)


def run(configs: list[SimConfig], out: str, target: float = 1e-4, stream=None) -> int:
    """Run every sweep into one CSV and print a summary; returns the exit code."""
    stream = stream or sys.stdout
    results = []
    for i, cfg in enumerate(configs):
        try:
            recs = sweep(cfg, out, append=i > 0)
        except SweepError as exc:
            print(f"error: {exc} ({len(exc.records)} points kept in {out})", file=sys.stderr)
            results.append((cfg, exc.records))
            print(summarize(results, target), file=stream)
            return 1
        results.append((cfg, recs))
    print(summarize(results, target), file=stream)
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        configs, out, target = parse_args(argv)
    except UsageError as exc:
        build_parser().print_usage(sys.stderr)
        print(f"ftn-sim: error: {exc}", file=sys.stderr)
        return 2
    return run(configs, out, target)


if __name__ == "__main__":
    sys.exit(main())
