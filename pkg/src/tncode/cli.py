"""Command-line front end: decoding one syndrome, the benchmark sweeps,
the oracle regression suite, and the timing probe.

Exit status is 0 on success, 1 when a check or decode reports failure, and
2 for configuration problems (malformed JSON, unknown fields, bad flags).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bench import (
    ConfigError,
    ExperimentConfig,
    emit_results,
    render_results,
    run_ad_benchmark,
    run_cbf_benchmark,
    run_oracle_check,
    run_timing,
)
from .channels import ZeroProbabilityError
from .decoder import DecoderConfig, decode
from .lattice import Syndrome, build_lattice
from .noise import IsingParams, amplitude_damping, cbf_network_factors, iid_network_factors


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tncode",
        description="tensor-network decoding and benchmarks for the surface code",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("decode", "decode one syndrome described by a JSON file"),
        ("bench-ad", "amplitude-damping decoder comparison sweep"),
        ("bench-cbf", "correlated-flip logical error rate sweep"),
        ("oracle-check", "run the exhaustive d=3 oracle regression suite"),
        ("timing", "measure decode wall time across lattice sizes"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to the JSON description")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output path (defaults to stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--workers", type=int, default=1, help="sampling processes")
    return parser


def _load_json(path) -> dict:
    if path is None:
        raise ConfigError("this command requires --config")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc


def _decode_request(args) -> int:
    req = _load_json(args.config)
    try:
        height, width = (int(v) for v in req["lattice"])
        lat = build_lattice(height, width)
        s = Syndrome(tuple(int(b) for b in req["syndrome"]))
        spec = dict(req["noise"])
        kind = spec.pop("kind")
        if kind == "amplitude-damping":
            noise = iid_network_factors(amplitude_damping(float(spec.pop("gamma"))), lat)
        elif kind == "correlated-flip":
            params = IsingParams(
                beta=float(spec.pop("beta")),
                h=float(spec.pop("h", 0.01)),
                j1=float(spec.pop("j1", 1.0)),
                j2=float(spec.pop("j2", -1.5)),
            )
            noise = cbf_network_factors(params, lat)
        else:
            raise ConfigError(f"unknown noise kind {kind!r}")
        if spec:
            raise ConfigError(f"unknown noise fields: {sorted(spec)}")
        chi = req.get("chi", 8)
        cfg = DecoderConfig(
            chi=None if chi is None else int(chi),
            norm=str(req.get("norm", "diamond")),
        )
        extra = set(req) - {"lattice", "syndrome", "noise", "chi", "norm", "seed"}
        if extra:
            raise ConfigError(f"unknown request fields: {sorted(extra)}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad decode request: {exc}") from exc

    seed = args.seed if args.seed is not None else req.get("seed", 0)
    rng = np.random.default_rng(int(seed))
    correction, lc, diagnostics = decode(s, noise, lat, cfg, rng=rng)
    out = {
        "correction": correction,
        "ptm": [[float(f"{v:.12g}") for v in row] for row in diagnostics["ptm"]],
        "syndrome_probability": float(f"{lc.syndrome_probability():.12g}"),
        "truncation_error": float(f"{lc.truncation_error:.12g}"),
    }
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _experiment_config(args, expected_kinds, default_kind=None) -> ExperimentConfig:
    if args.config is not None:
        cfg = ExperimentConfig.from_json(args.config)
    elif default_kind is not None:
        cfg = ExperimentConfig.from_dict({"kind": default_kind})
    else:
        raise ConfigError("this command requires --config")
    if cfg.kind not in expected_kinds:
        raise ConfigError(
            f"config kind {cfg.kind!r} does not fit this command "
            f"(expected one of {', '.join(expected_kinds)})"
        )
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    return cfg


def _emit(rows, cfg, args) -> None:
    path = args.out or cfg.out
    if path:
        emit_results(rows, path, fmt=args.format, config=cfg)
        total = sum(r.wall_time for r in rows)
        sys.stderr.write(f"{len(rows)} rows -> {path} ({total:.1f}s)\n")
    else:
        sys.stdout.write(render_results(rows, fmt=args.format, config=cfg))


def _dispatch(args) -> int:
    if args.command == "decode":
        return _decode_request(args)
    if args.command == "bench-ad":
        cfg = _experiment_config(args, ("ad-sweep", "ad-size-sweep"))
        _emit(run_ad_benchmark(cfg, workers=args.workers), cfg, args)
        return 0
    if args.command == "bench-cbf":
        cfg = _experiment_config(args, ("cbf-sweep",))
        _emit(run_cbf_benchmark(cfg, workers=args.workers), cfg, args)
        return 0
    if args.command == "timing":
        cfg = _experiment_config(args, ("timing",), default_kind="timing")
        _emit(run_timing(cfg, workers=args.workers), cfg, args)
        return 0
    cfg = _experiment_config(args, ("oracle-check",), default_kind="oracle-check")
    report = run_oracle_check(cfg, workers=args.workers)
    text = "\n".join(report.lines()) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if report.passed else 1


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return 2
    except ZeroProbabilityError as exc:
        sys.stderr.write(f"decode failure: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
