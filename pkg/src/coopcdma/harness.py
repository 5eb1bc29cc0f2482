"""Monte Carlo BER engine, CSV output and the named experiment presets.

Every trial is one packet. Its random draws (codes, channels, symbols and
unit-variance noise for every link) depend only on ``(master_seed,
trial_index)`` and are made before any detector or selector runs. Two
experiments that differ only in detector, selector or SNR therefore see
exactly the same realizations, which makes paired comparisons meaningful.

The trial seed is ``splitmix64(splitmix64(master_seed) ^ trial_index)``,
feeding a PCG64 generator. Because results are reduced in trial order the
output does not depend on how trials are spread over worker processes.
"""

from __future__ import annotations

import csv
import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .detect import ML_GUARD_BITS, Detector, make_block_detector
from .relaysel import (
    SubsetEvaluator,
    select_exhaustive,
    select_proposed_greedy,
    select_standard_greedy,
)
from .sysmodel import (
    ChannelRealization,
    SignatureMatrix,
    SystemConfig,
    effective_signatures,
    generate_channels,
    generate_codes,
    power_normalize,
)
from .txsim import (
    complex_noise,
    relay_process,
    snr_to_sigma2,
    stack_destination,
    stacked_signatures,
    synth_phase1,
    synth_phase2,
)

__all__ = [
    "Selector",
    "ExperimentSpec",
    "ResultRow",
    "TrialStats",
    "TrialDraws",
    "splitmix64",
    "trial_seed",
    "draw_trial",
    "simulate_packet",
    "run_trial",
    "run_experiment",
    "run_experiments",
    "resolve_workers",
    "count_bit_errors",
    "write_csv",
    "read_csv",
    "format_float",
    "CSV_HEADER",
    "PRESETS",
    "preset",
]

_MASK64 = (1 << 64) - 1
_CODE_STREAM = 0xC0DE5EED

CSV_HEADER = (
    "sweep", "detector", "selector", "bit_errors", "bits", "ber",
    "mean_set_size", "mean_minmax_sinr_db", "trials", "seed",
)


class Selector(str, enum.Enum):
    NONE = "none"
    ALL_RELAYS = "all"
    STANDARD_GREEDY = "standard"
    PROPOSED_GREEDY = "proposed"
    EXHAUSTIVE = "exhaustive"


def splitmix64(x: int) -> int:
    """One step of the SplitMix64 output function on a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def trial_seed(master_seed: int, trial_index: int) -> int:
    return splitmix64(splitmix64(master_seed & _MASK64) ^ (trial_index & _MASK64))


@dataclass(frozen=True)
class ExperimentSpec:
    """One curve: a detector/selector pair swept over SNR or user count.

    Parameters
    ----------
    config : SystemConfig
        Base scenario. The swept field is overridden per point.
    sweep : {"snr", "users"}
        Which parameter ``values`` sweeps.
    values : tuple
        Sweep points, in dB for ``"snr"`` and user counts for ``"users"``.
    detector : Detector
        Detector used at the relays and at the destination.
    selector : Selector
        Relay selection rule. ``NONE`` with ``cooperative=True`` lets every
        relay forward.
    cooperative : bool
        If false only the direct link is simulated.
    """

    config: SystemConfig
    sweep: str = "snr"
    values: tuple = ()
    detector: Detector = Detector.GLSIC
    selector: Selector = Selector.NONE
    cooperative: bool = False

    def __post_init__(self):
        object.__setattr__(self, "detector", Detector(self.detector))
        object.__setattr__(self, "selector", Selector(self.selector))
        if self.sweep not in ("snr", "users"):
            raise ValueError(f"sweep must be 'snr' or 'users', got {self.sweep!r}")
        if self.sweep == "users":
            vals = tuple(int(v) for v in self.values)
            if any(v < 1 for v in vals):
                raise ValueError("user counts must be >= 1")
        else:
            vals = tuple(float(v) for v in self.values)
            if not all(math.isfinite(v) for v in vals):
                raise ValueError("SNR values must be finite")
        object.__setattr__(self, "values", vals)
        if self.selector is not Selector.NONE and not self.cooperative:
            raise ValueError(f"selector {self.selector.value!r} needs a cooperative experiment")
        if self.cooperative and self.config.L < 1:
            raise ValueError("a cooperative experiment needs at least one relay")
        if self.detector is Detector.MLORACLE:
            bps = self.config.constellation.bits_per_symbol
            kmax = max(vals) if self.sweep == "users" and vals else self.config.K
            if kmax * bps > ML_GUARD_BITS:
                raise ValueError(
                    f"ML oracle over {kmax} users needs {kmax * bps} bits of search, "
                    f"guard is {ML_GUARD_BITS}"
                )

    def point_config(self, value) -> SystemConfig:
        if self.sweep == "snr":
            return replace(self.config, snr_db=float(value))
        K = int(value)
        return replace(self.config, K=K, n_group=min(self.config.n_group, K))


@dataclass(frozen=True)
class ResultRow:
    sweep_value: float
    detector: str
    selector: str
    bit_errors: int
    bits: int
    ber: float
    mean_set_size: float
    mean_minmax_sinr_db: float
    trials: int
    seed: int


@dataclass(frozen=True)
class TrialStats:
    bit_errors: int
    bits: int
    set_size: int
    minmax_sinr_db: float


@dataclass(frozen=True)
class TrialDraws:
    """All randomness of one packet; noise arrays have unit variance."""

    codes: list
    channels: ChannelRealization
    symbols: np.ndarray  # (P, K) indices
    n_sd: np.ndarray  # (P, M)
    n_sr: np.ndarray  # (L, P, M)
    n_rd: np.ndarray  # (P, M)


def draw_trial(config: SystemConfig, trial_index: int) -> TrialDraws:
    rng = np.random.Generator(np.random.PCG64(trial_seed(config.master_seed, trial_index)))
    if config.regenerate_codes:
        codes = generate_codes(config, rng)
    else:
        fixed = np.random.Generator(np.random.PCG64(trial_seed(config.master_seed, _CODE_STREAM)))
        codes = generate_codes(config, fixed)
    channels = generate_channels(config, rng)
    P, K, L, M = config.P, config.K, config.L, config.M
    symbols = rng.integers(0, config.constellation.size, size=(P, K))
    n_sd = complex_noise(rng, (P, M))
    n_sr = complex_noise(rng, (L, P, M))
    n_rd = complex_noise(rng, (P, M))
    return TrialDraws(codes, channels, symbols, n_sd, n_sr, n_rd)


def count_bit_errors(tx: np.ndarray, rx: np.ndarray, constellation) -> int:
    """Bit errors between two arrays of symbol indices under Gray labelling."""
    bits = constellation.bits
    return int(np.count_nonzero(bits[np.asarray(tx)] != bits[np.asarray(rx)]))


def _select(selector: Selector, codes, channels, sigma2):
    if selector is Selector.STANDARD_GREEDY:
        r = select_standard_greedy(codes, channels, sigma2)
    elif selector is Selector.PROPOSED_GREEDY:
        r = select_proposed_greedy(codes, channels, sigma2)
    elif selector is Selector.EXHAUSTIVE:
        r = select_exhaustive(codes, channels, sigma2)
    else:
        members = tuple(range(channels.L))
        return members, SubsetEvaluator(codes, channels, sigma2)(members)
    return r.members, r.sinr


def _db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def simulate_packet(
    config: SystemConfig,
    draws: TrialDraws,
    detector,
    selector: Selector,
    cooperative: bool,
    sigma2: float,
) -> TrialStats:
    """Send one packet and count bit errors at the destination.

    ``detector`` is a block detector as returned by
    :func:`coopcdma.detect.make_block_detector`; it runs at every active
    relay and at the destination.
    """
    cons = config.constellation
    codes, ch = draws.codes, draws.channels
    b = cons.points[draws.symbols]
    noise_scale = math.sqrt(sigma2)
    if not cooperative:
        E = effective_signatures(codes, ch.sd)
        y = b @ E + noise_scale * draws.n_sd
        dec = detector(y, E, sigma2)
        active = ()
        sinr = SubsetEvaluator(codes, ch, sigma2)(active)
    else:
        active, sinr = _select(selector, codes, ch, sigma2)
        a = power_normalize(active)
        y_sd, y_sr = synth_phase1(
            codes, ch, b, sigma2, amplitude=a, relays=active, noise_sd=draws.n_sd, noise_sr=draws.n_sr
        )
        rdec = relay_process(y_sr, codes, ch, detector, sigma2, amplitude=a, relays=active)
        rsym = cons.points[np.maximum(rdec, 0)]
        y_rd = synth_phase2(codes, ch, rsym, active, sigma2, amplitude=a, noise=draws.n_rd)
        H = stacked_signatures(codes, ch, active, a)
        dec = detector(stack_destination(y_sd, y_rd), H, sigma2)
    errors = count_bit_errors(draws.symbols, dec, cons)
    bits = draws.symbols.size * cons.bits_per_symbol
    return TrialStats(errors, bits, len(active), _db(sinr))


def run_trial(spec: ExperimentSpec, trial_index: int) -> tuple:
    """Stats of one packet at every sweep point, in sweep order."""
    out = []
    draws = None
    for value in spec.values:
        cfg = spec.point_config(value)
        if draws is None or spec.sweep == "users":
            draws = draw_trial(cfg, trial_index)
        det = make_block_detector(
            spec.detector, cfg.constellation, cfg.d_th, cfg.n_group, cfg.grey_region
        )
        sigma2 = snr_to_sigma2(cfg.snr_db)
        out.append(simulate_packet(cfg, draws, det, spec.selector, spec.cooperative, sigma2))
    return tuple(out)


def _run_chunk(args):
    spec, indices = args
    return [run_trial(spec, t) for t in indices]


def resolve_workers(workers: Optional[int] = None) -> int:
    """Worker count: explicit value, else ``SIM_THREADS``, where 0 means all cores."""
    if workers is None:
        raw = os.environ.get("SIM_THREADS", "0").strip() or "0"
        try:
            workers = int(raw)
        except ValueError:
            raise ValueError(f"SIM_THREADS must be an integer, got {raw!r}") from None
    if workers < 0:
        raise ValueError("worker count must be nonnegative")
    return workers or (os.cpu_count() or 1)


def _map_trials(spec: ExperimentSpec, workers: int) -> list:
    T = spec.config.trials
    workers = min(workers, T)
    if workers <= 1:
        return [run_trial(spec, t) for t in range(T)]
    size = max(1, -(-T // (4 * workers)))
    chunks = [(spec, range(s, min(T, s + size))) for s in range(0, T, size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return [r for part in pool.map(_run_chunk, chunks) for r in part]


def run_experiment(spec: ExperimentSpec, workers: Optional[int] = None) -> list[ResultRow]:
    """Aggregate all trials of ``spec`` into one row per sweep point.

    Rows come out sorted by sweep value. The result depends only on
    ``spec`` (including its master seed), not on ``workers``.
    """
    if not spec.values:
        return []
    order = sorted(range(len(spec.values)), key=lambda i: spec.values[i])
    spec = replace(spec, values=tuple(spec.values[i] for i in order))
    per_trial = _map_trials(spec, resolve_workers(workers))
    T = len(per_trial)
    rows = []
    for j, value in enumerate(spec.values):
        stats = [t[j] for t in per_trial]
        errors = sum(s.bit_errors for s in stats)
        bits = sum(s.bits for s in stats)
        rows.append(
            ResultRow(
                sweep_value=value,
                detector=spec.detector.value,
                selector=spec.selector.value,
                bit_errors=errors,
                bits=bits,
                ber=errors / bits if bits else math.nan,
                mean_set_size=sum(s.set_size for s in stats) / T if T else math.nan,
                mean_minmax_sinr_db=math.fsum(s.minmax_sinr_db for s in stats) / T if T else math.nan,
                trials=T,
                seed=spec.config.master_seed,
            )
        )
    return rows


def run_experiments(specs: Iterable[ExperimentSpec], workers: Optional[int] = None) -> list[ResultRow]:
    return [row for spec in specs for row in run_experiment(spec, workers)]


def format_float(x: float) -> str:
    """Positional decimal with 10 significant digits, e.g. ``0.003000000000``."""
    return np.format_float_positional(float(x), precision=10, unique=False, fractional=False)


def _format_sweep(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else format_float(v)


def write_csv(rows: Sequence[ResultRow], path) -> None:
    """Write rows with a fixed header, ``\\n`` line ends and UTF-8 encoding."""
    try:
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc.strerror}") from exc
    with fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([
                _format_sweep(r.sweep_value), r.detector, r.selector, r.bit_errors, r.bits,
                format_float(r.ber), format_float(r.mean_set_size),
                format_float(r.mean_minmax_sinr_db), r.trials, r.seed,
            ])


def read_csv(path) -> list[ResultRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        rows = []
        for rec in reader:
            sweep = int(rec[0]) if rec[0].lstrip("-").isdigit() else float(rec[0])
            rows.append(
                ResultRow(sweep, rec[1], rec[2], int(rec[3]), int(rec[4]), float(rec[5]),
                          float(rec[6]), float(rec[7]), int(rec[8]), int(rec[9]))
            )
    return rows


def _range(start, step, stop):
    n = int(round((stop - start) / step))
    return tuple(start + i * step for i in range(n + 1))


def _fig3(base):
    cfg = replace(base, K=20, N=32, L=0)
    return [
        ExperimentSpec(cfg, "snr", _range(0, 2, 16), det)
        for det in (Detector.MMSE, Detector.SIC, Detector.GLSIC, Detector.MBGLSIC)
    ]


_SELECTORS = (
    Selector.PROPOSED_GREEDY, Selector.STANDARD_GREEDY, Selector.ALL_RELAYS, Selector.EXHAUSTIVE,
)


def _fig4a(base):
    cfg = replace(base, K=10, L=6, N=16)
    return [
        ExperimentSpec(cfg, "snr", _range(0, 2, 20), Detector.GLSIC, sel, True) for sel in _SELECTORS
    ]


def _fig4b(base):
    cfg = replace(base, K=10, L=6, N=16, snr_db=15.0)
    return [
        ExperimentSpec(cfg, "users", _range(4, 2, 20), Detector.GLSIC, sel, True) for sel in _SELECTORS
    ]


def _fig5(base):
    cfg = replace(base, K=10, L=6, N=16)
    return [
        ExperimentSpec(cfg, "snr", _range(0, 2, 20), det, Selector.PROPOSED_GREEDY, True)
        for det in (Detector.MMSE, Detector.SIC, Detector.GLSIC, Detector.MBGLSIC)
    ]


PRESETS = {"fig3": _fig3, "fig4a": _fig4a, "fig4b": _fig4b, "fig5": _fig5}


def preset(name: str, base: Optional[SystemConfig] = None) -> list[ExperimentSpec]:
    """Experiment list of a named figure preset.

    ``base`` supplies everything the preset does not fix (packet length,
    trials, seed, modulation and so on); the defaults give 1000-symbol
    packets and 300 trials.
    """
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    base = base or SystemConfig()
    if base.K < base.n_group:
        base = replace(base, n_group=1)
    return PRESETS[name](base)
