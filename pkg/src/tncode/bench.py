"""Monte Carlo benchmark harness: experiment configs, decoder comparison
loops, interval statistics, and deterministic result files.

Experiments are described by a single JSON document::

    {
      "kind": "cbf-sweep",          # ad-sweep | ad-size-sweep | cbf-sweep
                                    # | oracle-check | timing
      "sizes": [5],                 # code distances, or short sides for ad
      "betas": [1.25, 1.11, 1.0],   # cbf/timing points (x axis is 1/beta)
      "gammas": [0.09, 0.2],        # ad points
      "ising": {"h": 0.01, "j1": 1.0, "j2": -1.5},
      "chi": 8, "norm": "diamond", "samples": 12000, "seed": 7,
      "out": "results.csv"
    }

Every trial derives its own generator from ``(seed, point, trial)``, so
result rows are identical for any worker count and any run.  Emitted files
carry the full config (defaults included) and no wall-clock values, which
keeps them byte-reproducible; per-row wall time stays on the in-memory
``ResultRow`` only.  Rows from the ``timing`` kind are the one exception to
reproducibility, since their values are measured durations.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channels import (
    CONJUGATION_SIGNS,
    QubitChannel,
    ZeroProbabilityError,
    diamond_distance_from_identity,
    select_correction,
)
from .decoder import (
    DecoderConfig,
    build_code_network,
    decode,
    impose_syndrome,
    logical_choi,
)
from .lattice import Syndrome, build_lattice
from .noise import (
    IsingParams,
    SpinConfig,
    amplitude_damping,
    cbf_energy,
    cbf_exact_distribution,
    cbf_mcmc_sample,
    cbf_network_factors,
    iid_network_factors,
)
from .oracles import (
    DenseChannelOracle,
    DenseSyndromeSampler,
    NetworkSyndromeSampler,
    ml_decode_cbf_exact,
    mwpm_decode,
    mwpm_frame,
)

_Z95 = 1.959963984540054
_MCMC_SWEEPS = 100
_DENSE_QUBIT_CAP = 12
_TIMING_REPS = 3

_KINDS = ("ad-sweep", "ad-size-sweep", "cbf-sweep", "oracle-check", "timing")
_AD_KINDS = ("ad-sweep", "ad-size-sweep")

_CSV_COLUMNS = (
    "kind",
    "size",
    "param",
    "x",
    "decoder",
    "metric",
    "value",
    "half_width",
    "samples",
    "decode_failures",
    "chi",
    "norm",
    "seed",
    "note",
)


class ConfigError(ValueError):
    """An experiment description that fails validation."""


def _round12(v: float) -> float:
    """Collapse a float to the 12 significant digits the files carry."""
    v = float(v)
    return float(f"{v:.12g}") if math.isfinite(v) else v


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a sweep kind plus every knob it needs.

    ``sizes`` are code distances for cbf/timing kinds and short lattice
    sides W for the amplitude-damping kinds (the long side is 2W-1, and the
    exact oracles cap W at 3).  ``h``/``j1``/``j2`` fix the flip-model
    couplings; each beta in ``betas`` completes them to an ``IsingParams``.
    """

    kind: str
    sizes: tuple[int, ...]
    gammas: tuple[float, ...] = ()
    betas: tuple[float, ...] = ()
    h: float = 0.01
    j1: float = 1.0
    j2: float = -1.5
    chi: int | None = 8
    norm: str = "diamond"
    samples: int = 12000
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if not self.sizes:
            raise ConfigError("at least one lattice size is required")
        if any(s < 2 for s in self.sizes):
            raise ConfigError(f"lattice sizes must be at least 2, got {self.sizes}")
        if self.kind in _AD_KINDS:
            if any(s > 3 for s in self.sizes):
                raise ConfigError(
                    "amplitude-damping sweeps need an exact reference channel, "
                    "which caps the short side at 3"
                )
            if not self.gammas:
                raise ConfigError(f"{self.kind} requires a gamma list")
            if self.betas:
                raise ConfigError(f"{self.kind} takes gammas, not betas")
            if any(not 0.0 <= g <= 1.0 for g in self.gammas):
                raise ConfigError(f"gammas must lie in [0, 1], got {self.gammas}")
        elif self.kind in ("cbf-sweep", "timing"):
            if not self.betas:
                raise ConfigError(f"{self.kind} requires a beta list")
            if self.gammas:
                raise ConfigError(f"{self.kind} takes betas, not gammas")
            if any(b <= 0.0 for b in self.betas):
                raise ConfigError(f"betas must be positive, got {self.betas}")
        else:
            if self.gammas or self.betas:
                raise ConfigError("oracle-check takes no sweep lists")
        if self.chi is not None and int(self.chi) < 1:
            raise ConfigError(f"bond cap must be at least 1, got {self.chi}")
        if self.norm not in ("trace", "diamond"):
            raise ConfigError(f"unknown selection norm {self.norm!r}")
        if int(self.samples) < 1:
            raise ConfigError(f"sample count must be at least 1, got {self.samples}")
        if int(self.seed) < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

    def ising(self, beta: float) -> IsingParams:
        return IsingParams(beta=beta, h=self.h, j1=self.j1, j2=self.j2)

    def to_dict(self) -> dict:
        """The full config with every default written out."""
        return {
            "kind": self.kind,
            "sizes": list(self.sizes),
            "gammas": list(self.gammas),
            "betas": list(self.betas),
            "ising": {"h": self.h, "j1": self.j1, "j2": self.j2},
            "chi": self.chi,
            "norm": self.norm,
            "samples": int(self.samples),
            "seed": int(self.seed),
            "out": self.out,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("experiment config must be a JSON object")
        work = dict(doc)
        kind = work.pop("kind", None)
        if kind not in _KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}")
        defaults = {
            "sizes": {"timing": (3, 5, 7, 9), "oracle-check": (3,)}.get(kind),
            "betas": {"timing": (1.25,)}.get(kind, ()),
            "samples": {"timing": 8}.get(kind, 12000),
            "norm": {"timing": "trace"}.get(kind, "diamond"),
        }
        ising = work.pop("ising", {})
        if not isinstance(ising, dict) or not set(ising) <= {"h", "j1", "j2"}:
            raise ConfigError(f"ising block must hold only h/j1/j2, got {ising!r}")
        kwargs = {"kind": kind}
        kwargs.update({k: ising[k] for k in ("h", "j1", "j2") if k in ising})
        for name in ("sizes", "gammas", "betas", "chi", "norm", "samples", "seed", "out"):
            if name in work:
                kwargs[name] = work.pop(name)
            elif defaults.get(name) is not None:
                kwargs[name] = defaults[name]
        if work:
            raise ConfigError(f"unknown config fields: {sorted(work)}")
        if "sizes" not in kwargs:
            raise ConfigError(f"{kind} requires a sizes list")
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed config file {path}: {exc}") from exc
        return cls.from_dict(doc)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def wilson_interval(successes: int, trials: int, z: float = _Z95):
    """The score interval for a binomial rate, as (low, high).

    Unlike the normal approximation it stays inside [0, 1] and keeps its
    coverage at the extreme rates the low-noise sweep points produce.
    """
    if trials < 1:
        raise ValueError("interval needs at least one trial")
    if not 0 <= successes <= trials:
        raise ValueError(f"{successes} successes out of {trials} trials")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    spread = (
        z * math.sqrt(phat * (1.0 - phat) / trials + z * z / (4 * trials * trials))
        / denom
    )
    return max(0.0, centre - spread), min(1.0, centre + spread)


def mean_interval(values) -> tuple[float, float]:
    """Sample mean and its 95% half-width (normal theory, ddof 1)."""
    values = list(values)
    if not values:
        return float("nan"), float("nan")
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, _Z95 * math.sqrt(var / n)


# ---------------------------------------------------------------------------
# Result rows
# ---------------------------------------------------------------------------


@dataclass
class ResultRow:
    """One measured point of one decoder, as it appears in the output."""

    kind: str
    size: int
    param: str
    x: float
    decoder: str
    metric: str
    value: float
    half_width: float
    samples: int
    decode_failures: int
    chi: int | None
    norm: str
    seed: int
    note: str = ""
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        self.x = _round12(self.x)
        self.value = _round12(self.value)
        self.half_width = _round12(self.half_width)
        if math.isfinite(self.half_width) and self.half_width < 0.0:
            raise ValueError(f"negative half-width {self.half_width}")
        if self.metric == "logical-error rate" and math.isfinite(self.value):
            if not 0.0 <= self.value <= 1.0:
                raise ValueError(f"rate {self.value} outside [0, 1]")

    def record(self) -> dict:
        return {name: getattr(self, name) for name in _CSV_COLUMNS}


# ---------------------------------------------------------------------------
# Trial sampling (top level so process pools can ship it)
# ---------------------------------------------------------------------------


def _trial_rng(seed: int, point: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(point, trial))
    )


def _cbf_sample_chunk(args):
    """Syndrome ints and residual classes for one index range of trials.

    Draws are folded onto the nonnegative-magnetization sector: a global
    spin flip leaves every pair and plaquette energy and hence the whole
    syndrome unchanged, so the two sectors differ only through the field
    term and by one logical operator.  At desk-scale lattices the flipped
    sector keeps order-one Boltzmann weight, which would bury the decoder
    comparison under spontaneous global flips no decoder can see; folding
    conditions the noise on the sector the field prefers.
    """
    d, params, seed, point, lo, hi = args
    lat = build_lattice(d, d)
    out = []
    for i in range(lo, hi):
        rng = _trial_rng(seed, point, i)
        sigma = cbf_mcmc_sample(params, lat, _MCMC_SWEEPS, rng)
        spins = sigma.spins
        if int(spins.sum()) < 0:
            sigma = SpinConfig(-spins)
        frame = sigma.frame(lat)
        s = lat.syndrome_of(frame)
        residual = lat.homology_class(frame.compose(lat.recovery_frame(s)))
        out.append((s.as_int(), residual))
    return out


def _ad_sample_chunk(args):
    """Sampled syndrome ints for one index range of trials."""
    w, gamma, seed, point, lo, hi = args
    lat = build_lattice(w, 2 * w - 1)
    channel = amplitude_damping(gamma)
    if lat.n_qubits <= _DENSE_QUBIT_CAP:
        sampler = DenseSyndromeSampler(channel, lat)
    else:
        sampler = NetworkSyndromeSampler(channel, lat)
    return [
        sampler.sample(_trial_rng(seed, point, i)).as_int() for i in range(lo, hi)
    ]


def _scatter(fn, point_args, n: int, workers: int):
    """Run ``fn`` over index chunks of ``range(n)``; order-preserving."""
    workers = max(1, int(workers))
    step = max(1, math.ceil(n / workers))
    spans = [(lo, min(lo + step, n)) for lo in range(0, n, step)]
    argses = [point_args + span for span in spans]
    if workers == 1 or len(argses) == 1:
        parts = [fn(a) for a in argses]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(argses))) as pool:
            parts = list(pool.map(fn, argses))
    return [item for part in parts for item in part]


# ---------------------------------------------------------------------------
# Benchmark protocols
# ---------------------------------------------------------------------------


def run_cbf_benchmark(cfg: ExperimentConfig, workers: int = 1):
    """Logical error rates of the network decoder and matching, per (d, beta).

    Each trial draws a flip pattern from the Metropolis chain, computes its
    syndrome, and asks both decoders for a correction; a trial fails when
    the residual logical class after recovery and correction is not the
    identity.  Decoding is cached per distinct syndrome.  Trials whose
    network decode raises are counted in ``decode_failures`` and leave the
    rate denominator; if every trial fails the row carries nan and a note.
    """
    if cfg.kind != "cbf-sweep":
        raise ConfigError(f"run_cbf_benchmark got kind {cfg.kind!r}")
    rows = []
    point = 0
    for d in cfg.sizes:
        lat = build_lattice(d, d)
        for beta in cfg.betas:
            start = time.perf_counter()
            params = cfg.ising(beta)
            noise = cbf_network_factors(params, lat)
            net = build_code_network(lat, noise)
            dcfg = DecoderConfig(chi=cfg.chi, norm=cfg.norm)
            trials = _scatter(
                _cbf_sample_chunk, (d, params, cfg.seed, point), cfg.samples, workers
            )
            tn_label: dict[int, str | None] = {}
            mw_label: dict[int, str] = {}
            note = ""
            for s_int, _ in trials:
                if s_int in tn_label:
                    continue
                s = Syndrome.from_int(s_int, lat.n_checks)
                try:
                    tn_label[s_int] = decode(s, noise, lat, dcfg, network=net)[0]
                except (ZeroProbabilityError, ValueError) as exc:
                    tn_label[s_int] = None
                    if not note:
                        note = f"syndrome {s_int}: {exc}"
                mw_label[s_int] = mwpm_decode(s, lat)
            tn_fail = tn_n = tn_err = 0
            mw_fail = 0
            for s_int, residual in trials:
                label = tn_label[s_int]
                if label is None:
                    tn_err += 1
                else:
                    tn_n += 1
                    tn_fail += label != residual
                mw_fail += mw_label[s_int] != residual
            elapsed = time.perf_counter() - start
            shared = dict(
                kind=cfg.kind,
                size=d,
                param="inv_beta",
                x=1.0 / beta,
                metric="logical-error rate",
                samples=cfg.samples,
                chi=cfg.chi,
                norm=cfg.norm,
                seed=cfg.seed,
                wall_time=elapsed,
            )
            if tn_n > 0:
                lo, hi = wilson_interval(tn_fail, tn_n)
                rows.append(
                    ResultRow(
                        decoder="tn",
                        value=tn_fail / tn_n,
                        half_width=(hi - lo) / 2.0,
                        decode_failures=tn_err,
                        note=note,
                        **shared,
                    )
                )
            else:
                rows.append(
                    ResultRow(
                        decoder="tn",
                        value=float("nan"),
                        half_width=float("nan"),
                        decode_failures=tn_err,
                        note=note or "every trial failed to decode",
                        **shared,
                    )
                )
            lo, hi = wilson_interval(mw_fail, cfg.samples)
            rows.append(
                ResultRow(
                    decoder="mwpm",
                    value=mw_fail / cfg.samples,
                    half_width=(hi - lo) / 2.0,
                    decode_failures=0,
                    **shared,
                )
            )
            point += 1
    return rows


def _corrected_distance(label: str, exact_ptm: np.ndarray) -> float:
    corrected = QubitChannel(np.diag(CONJUGATION_SIGNS[label]) @ exact_ptm)
    return diamond_distance_from_identity(corrected)


def run_ad_benchmark(cfg: ExperimentConfig, workers: int = 1):
    """Mean diamond distance after correction, per (W, gamma) and decoder.

    Syndromes are drawn from the exact post-noise distribution (dense
    simulation up to 12 qubits, network chain rule above).  For every
    distinct syndrome the exact conditioned channel is computed once; the
    reported value for a decoder is the diamond distance from the identity
    after applying its correction to that channel, averaged over the trial
    stream, with a 95% normal-theory half-width.
    """
    if cfg.kind not in _AD_KINDS:
        raise ConfigError(f"run_ad_benchmark got kind {cfg.kind!r}")
    rows = []
    point = 0
    for w in cfg.sizes:
        lat = build_lattice(w, 2 * w - 1)
        dense = lat.n_qubits <= _DENSE_QUBIT_CAP
        for gamma in cfg.gammas:
            start = time.perf_counter()
            channel = amplitude_damping(gamma)
            noise = iid_network_factors(channel, lat)
            net = build_code_network(lat, noise)
            dcfg = DecoderConfig(chi=cfg.chi, norm=cfg.norm)
            exact_cfg = DecoderConfig(chi=None, norm=cfg.norm)
            oracle = DenseChannelOracle(channel, lat) if dense else None
            trials = _scatter(
                _ad_sample_chunk, (w, gamma, cfg.seed, point), cfg.samples, workers
            )
            per_syndrome: dict[int, tuple | None] = {}
            note = ""
            for s_int in trials:
                if s_int in per_syndrome:
                    continue
                s = Syndrome.from_int(s_int, lat.n_checks)
                try:
                    if dense:
                        exact_lc, _ = oracle.channel(s)
                    else:
                        imposed = impose_syndrome(net, s, lat.recovery_frame(s))
                        exact_lc = logical_choi(imposed, lat, exact_cfg)
                    exact_ptm = exact_lc.normalized_ptm()
                    opt = select_correction(exact_lc, norm=cfg.norm)
                except (ZeroProbabilityError, ValueError) as exc:
                    per_syndrome[s_int] = None
                    if not note:
                        note = f"syndrome {s_int}: {exc}"
                    continue
                try:
                    tn = decode(s, noise, lat, dcfg, network=net)[0]
                except (ZeroProbabilityError, ValueError) as exc:
                    tn = None
                    if not note:
                        note = f"syndrome {s_int}: {exc}"
                mw = mwpm_decode(s, lat)
                dist = {}
                for label in {tn, opt, mw} - {None}:
                    dist[label] = _corrected_distance(label, exact_ptm)
                per_syndrome[s_int] = (
                    dist.get(tn),
                    dist[opt],
                    dist[mw],
                )
            streams = {"tn": [], "optimal": [], "mwpm": []}
            fails = {"tn": 0, "optimal": 0, "mwpm": 0}
            for s_int in trials:
                entry = per_syndrome[s_int]
                if entry is None:
                    for name in fails:
                        fails[name] += 1
                    continue
                tn_d, opt_d, mw_d = entry
                if tn_d is None:
                    fails["tn"] += 1
                else:
                    streams["tn"].append(tn_d)
                streams["optimal"].append(opt_d)
                streams["mwpm"].append(mw_d)
            elapsed = time.perf_counter() - start
            for name in ("tn", "optimal", "mwpm"):
                value, half = mean_interval(streams[name])
                rows.append(
                    ResultRow(
                        kind=cfg.kind,
                        size=w,
                        param="gamma",
                        x=gamma,
                        decoder=name,
                        metric="diamond-distance mean",
                        value=value,
                        half_width=half,
                        samples=cfg.samples,
                        decode_failures=fails[name],
                        chi=cfg.chi,
                        norm=cfg.norm,
                        seed=cfg.seed,
                        note=note if fails[name] else "",
                        wall_time=elapsed,
                    )
                )
            point += 1
    return rows


def run_timing(cfg: ExperimentConfig, workers: int = 1):
    """Decode wall time per lattice size under the flip model.

    Per size, ``samples`` syndromes come from seeded Metropolis chains; each
    is decoded ``_TIMING_REPS`` times and contributes its fastest repeat,
    and the row reports the median over syndromes.  Runs serially whatever
    ``workers`` says, so the measurements do not contend for cores.  The
    default selection norm for this kind is ``trace``: the flip-model
    channels make the same choice under either norm, and the cheap selection
    keeps the measured time on the contraction the size sweep probes.
    """
    if cfg.kind != "timing":
        raise ConfigError(f"run_timing got kind {cfg.kind!r}")
    del workers
    rows = []
    beta = cfg.betas[0]
    for point, d in enumerate(cfg.sizes):
        lat = build_lattice(d, d)
        params = cfg.ising(beta)
        noise = cbf_network_factors(params, lat)
        net = build_code_network(lat, noise)
        dcfg = DecoderConfig(chi=cfg.chi, norm=cfg.norm)
        syndromes = []
        for i in range(cfg.samples):
            rng = _trial_rng(cfg.seed, point, i)
            frame = cbf_mcmc_sample(params, lat, _MCMC_SWEEPS, rng).frame(lat)
            syndromes.append(lat.syndrome_of(frame))
        start = time.perf_counter()
        decode(syndromes[0], noise, lat, dcfg, network=net)
        times = []
        failures = 0
        note = ""
        for s in syndromes:
            best = math.inf
            try:
                for _ in range(_TIMING_REPS):
                    t0 = time.perf_counter()
                    decode(s, noise, lat, dcfg, network=net)
                    best = min(best, time.perf_counter() - t0)
            except (ZeroProbabilityError, ValueError) as exc:
                failures += 1
                if not note:
                    note = f"syndrome {s.as_int()}: {exc}"
                continue
            times.append(best)
        elapsed = time.perf_counter() - start
        rows.append(
            ResultRow(
                kind=cfg.kind,
                size=d,
                param="qubits",
                x=float(lat.n_qubits),
                decoder="tn",
                metric="decode-seconds median",
                value=float(np.median(times)) if times else float("nan"),
                half_width=0.0,
                samples=cfg.samples,
                decode_failures=failures,
                chi=cfg.chi,
                norm=cfg.norm,
                seed=cfg.seed,
                note=note,
                wall_time=elapsed,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Oracle regression suite
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_dev: float
    detail: str = ""

    def line(self) -> str:
        word = "pass" if self.passed else "FAIL"
        tail = f"  {self.detail}" if self.detail else ""
        return f"{self.name}: {word} (max deviation {self.max_dev:.3e}){tail}"


@dataclass
class OracleReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list:
        return [c.line() for c in self.checks]


def _check_dense_choi(lat, chi, cap) -> CheckResult:
    channel = amplitude_damping(0.2)
    noise = iid_network_factors(channel, lat)
    net = build_code_network(lat, noise)
    oracle = DenseChannelOracle(channel, lat)
    dcfg = DecoderConfig(chi=chi, norm="trace")
    worst = 0.0
    for s_int in range(cap):
        s = Syndrome.from_int(s_int, lat.n_checks)
        ref, _ = oracle.channel(s)
        imposed = impose_syndrome(net, s, lat.recovery_frame(s))
        try:
            lc = logical_choi(imposed, lat, dcfg)
        except ZeroProbabilityError:
            # A starved bond cap can cancel the mass contraction outright;
            # that is a failed comparison, not a crash of the whole report.
            return CheckResult(
                "dense-choi", False, math.inf,
                f"contraction collapsed on syndrome {s_int}",
            )
        got = lc.c * math.exp(lc.log_magnitude)
        scale = float(np.max(np.abs(ref.c)))
        worst = max(worst, float(np.max(np.abs(got - ref.c))) / scale)
    return CheckResult(
        "dense-choi",
        worst <= 1e-8,
        worst,
        f"amplitude damping 0.2, {cap} syndromes, relative",
    )


def _check_ml_agreement(lat, chi, cfg) -> CheckResult:
    disagreements = 0
    total = 0
    for beta in (0.8, 1.0, 1.4):
        params = cfg.ising(beta)
        noise = cbf_network_factors(params, lat)
        net = build_code_network(lat, noise)
        dcfg = DecoderConfig(chi=chi, norm=cfg.norm)
        x_checks = sum(1 for f in lat.checks if f.kind == "x")
        for z_bits in range(1 << (lat.n_checks - x_checks)):
            s = Syndrome.from_int(z_bits << x_checks, lat.n_checks)
            total += 1
            try:
                tn = decode(s, noise, lat, dcfg, network=net)[0]
            except ZeroProbabilityError:
                # A starved bond cap can cancel the contraction; count the
                # undecodable syndrome against agreement rather than abort.
                disagreements += 1
                continue
            if tn != ml_decode_cbf_exact(s, params, lat):
                disagreements += 1
    frac = disagreements / total
    return CheckResult(
        "ml-agreement",
        disagreements == 0,
        frac,
        f"{total} reachable syndromes over three betas",
    )


def _min_weight_table(lat) -> np.ndarray:
    """Exhaustive minimum matching cost per syndrome.

    Matching corrects the two check sectors independently, so its cost
    model charges a Y as one X plus one Z.  The minimum then splits into
    per-sector minima over single-type error masks, which keeps this an
    exhaustive pass over 2^N masks rather than 4^N frames.
    """
    n = lat.n_qubits
    pop = np.zeros(1 << n, dtype=np.int32)
    for v in range(1, 1 << n):
        pop[v] = pop[v >> 1] + (v & 1)
    masks = np.arange(1 << n)
    kinds = [f.kind for f in lat.checks]
    nx = kinds.count("x")
    sector = {}
    for kind in ("x", "z"):
        checks = [f for f in lat.checks if f.kind == kind]
        synd = np.zeros(1 << n, dtype=np.int64)
        for i, face in enumerate(checks):
            mask = 0
            for r, c in face.qubits:
                mask |= 1 << lat.qubit_index(r, c)
            synd |= ((pop[masks & mask] & 1) << i).astype(np.int64)
        table = np.full(1 << len(checks), np.iinfo(np.int32).max, dtype=np.int32)
        np.minimum.at(table, synd, pop)
        sector[kind] = table
    out = np.zeros(1 << lat.n_checks, dtype=np.int64)
    for s in range(1 << lat.n_checks):
        out[s] = sector["x"][s & ((1 << nx) - 1)] + sector["z"][s >> nx]
    return out


def _check_mwpm_weight(lat, cap) -> CheckResult:
    table = _min_weight_table(lat)
    worst = 0
    for s_int in range(cap):
        s = Syndrome.from_int(s_int, lat.n_checks)
        frame = mwpm_frame(s, lat)
        cost = frame.x_mask.bit_count() + frame.z_mask.bit_count()
        worst = max(worst, cost - int(table[s_int]))
    return CheckResult(
        "mwpm-weight",
        worst == 0,
        float(worst),
        f"{cap} syndromes, per-sector support against the exhaustive minimum",
    )


def _check_mcmc_exact(lat, cfg) -> CheckResult:
    params = cfg.ising(1.0)
    dist = cbf_exact_distribution(params, lat)
    probs = np.zeros(1 << lat.n_checks)
    for spins, weight in zip(dist.spins, dist.probabilities):
        s = lat.syndrome_of(SpinConfig(spins).frame(lat))
        probs[s.as_int()] += weight
    n = 10_000
    rng = np.random.default_rng(17)
    counts = np.zeros(1 << lat.n_checks)
    for _ in range(n):
        out = cbf_mcmc_sample(params, lat, 60, rng, start="uniform")
        counts[lat.syndrome_of(out.frame(lat)).as_int()] += 1
    worst = 0.0
    for k in np.nonzero(probs)[0]:
        sd = math.sqrt(n * probs[k] * (1.0 - probs[k]))
        worst = max(worst, abs(counts[k] - n * probs[k]) / sd)
    stray = float(counts[probs == 0.0].sum())
    return CheckResult(
        "mcmc-exact",
        worst <= 3.0 and stray == 0.0,
        worst,
        f"{n} Metropolis draws, score in standard deviations",
    )


def _check_factor_global(lat, cfg) -> CheckResult:
    from .tensors import Tensor, contract

    params = cfg.ising(1.0)
    fac = cbf_network_factors(params, lat)
    h, w = lat.height, lat.width
    acc = None
    for r in range(h):
        for c in range(w):
            t = fac.site_tensor(r, c)
            diag = np.einsum("aabcde->abcde", t)
            cell = Tensor(
                diag,
                (f"p{r}_{c}", f"v{r-1}_{c}", f"v{r}_{c}", f"h{r}_{c-1}", f"h{r}_{c}"),
            )
            acc = cell if acc is None else contract(acc, cell)
    order = tuple(f"p{r}_{c}" for r in range(h) for c in range(w))
    assembled = np.real(
        acc.transpose_to(
            order + tuple(l for l in acc.labels if l not in order)
        ).data.reshape(4**lat.n_qubits)
    )
    flat = IsingParams(beta=params.beta, h=params.h, j1=params.j1, j2=0.0)
    expected = np.zeros(4**lat.n_qubits)
    for code in range(1 << lat.n_qubits):
        spins = 1 - 2 * ((code >> np.arange(lat.n_qubits)) & 1)
        weight = math.exp(-flat.beta * cbf_energy(SpinConfig(spins), flat, lat))
        vec = np.array([1.0])
        for s in spins:
            vec = np.kron(vec, np.array([1.0, 1.0, float(s), float(s)]))
        expected += weight * vec
    ratio = assembled / expected
    worst = float(np.max(np.abs(ratio / ratio[0] - 1.0)))
    return CheckResult(
        "factor-global",
        worst <= 1e-10,
        worst,
        "site factors against the exhaustive global transfer matrix",
    )


def _check_mass_normalization(lat) -> CheckResult:
    sampler = DenseSyndromeSampler(amplitude_damping(0.2), lat)
    total = math.fsum(
        sampler.syndrome_probability(Syndrome.from_int(k, lat.n_checks))
        for k in range(1 << lat.n_checks)
    )
    dev = abs(total - 1.0)
    return CheckResult(
        "mass-normalization",
        dev <= 1e-12,
        dev,
        "sum of dense syndrome probabilities",
    )


def run_oracle_check(cfg: ExperimentConfig, workers: int = 1) -> OracleReport:
    """The d=3 exhaustive regression suite over every independent oracle.

    ``cfg.chi`` is the network decoder's bond cap for the comparisons
    (None, the default, contracts exactly); forcing it low demonstrates the
    checks' sensitivity.  ``cfg.samples`` below 256 trims the syndrome
    enumerations, which is only meant for smoke runs.
    """
    if cfg.kind != "oracle-check":
        raise ConfigError(f"run_oracle_check got kind {cfg.kind!r}")
    del workers
    lat = build_lattice(3, 3)
    cap = min(cfg.samples, 1 << lat.n_checks)
    chi = cfg.chi
    checks = [
        _check_dense_choi(lat, chi, cap),
        _check_ml_agreement(lat, chi, cfg),
        _check_mwpm_weight(lat, cap),
        _check_mcmc_exact(lat, cfg),
        _check_factor_global(lat, cfg),
        _check_mass_normalization(lat),
    ]
    return OracleReport(checks)


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def render_results(rows, fmt: str = "csv", config: ExperimentConfig | None = None) -> str:
    """Serialize rows to text; stable field order, 12 significant digits.

    Wall time is deliberately absent so that equal configs produce equal
    bytes.  CSV carries the config as ``#`` comment lines; JSON carries it
    as a metadata object.
    """
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown output format {fmt!r}")
    cfg_doc = config.to_dict() if config is not None else None
    if fmt == "json":
        doc = {
            "config": cfg_doc,
            "rows": [row.record() for row in rows],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    buf.write("# tncode results\n")
    if cfg_doc is not None:
        buf.write("# config: " + json.dumps(cfg_doc, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for row in rows:
        writer.writerow([_csv_cell(row.record()[name]) for name in _CSV_COLUMNS])
    return buf.getvalue()


def emit_results(rows, path, fmt: str = "csv", config: ExperimentConfig | None = None):
    """Write rows to ``path``; see ``render_results`` for the layout."""
    text = render_results(rows, fmt=fmt, config=config)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _typed_record(rec: dict) -> ResultRow:
    chi = rec.get("chi")
    if chi in ("", None):
        chi = None
    else:
        chi = int(chi)
    return ResultRow(
        kind=str(rec["kind"]),
        size=int(rec["size"]),
        param=str(rec["param"]),
        x=float(rec["x"]),
        decoder=str(rec["decoder"]),
        metric=str(rec["metric"]),
        value=float(rec["value"]),
        half_width=float(rec["half_width"]),
        samples=int(rec["samples"]),
        decode_failures=int(rec["decode_failures"]),
        chi=chi,
        norm=str(rec["norm"]),
        seed=int(rec["seed"]),
        note=str(rec.get("note") or ""),
    )


def parse_results(path):
    """Read a results file back as (config dict or None, list of rows)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        return doc.get("config"), [_typed_record(r) for r in doc["rows"]]
    config = None
    body = []
    for line in text.splitlines():
        if line.startswith("# config: "):
            config = json.loads(line[len("# config: "):])
        elif not line.startswith("#"):
            body.append(line)
    reader = csv.DictReader(io.StringIO("\n".join(body)))
    return config, [_typed_record(rec) for rec in reader]
