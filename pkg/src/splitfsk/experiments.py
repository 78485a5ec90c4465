"""Monte Carlo BER sweeps, efficiency reports and capture decoding.

Every run is a pure function of its :class:`ExperimentConfig`: random
streams come from ``SeedSequence((seed, point, block))`` and the CSV output
is byte-identical for identical configs.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from .channel import FirChannel, NoiseModel, apply_channel, channel_from_tf, noise_psd
from .circuit import (CircuitParams, analyze_peaks, derive_transfer_function, efficiency,
                      eval_H, find_poles, peak_frequencies_approx, reference_params)
from .errors import ConfigError, DomainError
from .modem import (FilterBank, ModemConfig, WaveformKind, coherent_demod, design_filterbank,
                    noncoherent_demod, read_waveform, symbol_frame, theoretical_ber, transmit)
from .transient import peak_tones, settled_efficiency, transient_efficiency

BUILTIN_CONFIGS = {"reference": {}}

_NOISE_SIDES = ("sigma1", "sigma2", "mixed")
_RECEIVERS = ("coherent", "noncoherent")


@dataclass(frozen=True)
class ExperimentConfig:
    """All inputs of an experiment.

    ``circuit`` overrides component values of the reference link.  ``k_tx``
    and ``k_rx`` default to the true ``k``.  ``guard`` is ``"tu/10"`` or a
    guard interval in seconds.  ``tones`` selects the transmit tones:
    ``"exact"`` (peak analysis of the circuit at ``k_tx``) or ``"approx"``
    (closed-form peak estimate).
    """

    circuit: dict = field(default_factory=dict)
    k: float = 0.4
    k_tx: float | None = None
    k_rx: float | None = None
    rates: tuple = (20e3,)
    guard: str | float = "tu/10"
    kind: str = "FSK"
    tones: str = "exact"
    esn0_db: tuple = (4.0, 6.0, 8.0, 10.0)
    noise_side: str = "sigma2"
    sigma1_share: float = 0.5
    receiver: str = "coherent"
    quantize: bool = False
    target_errors: int = 100
    max_bits: int = 1_000_000
    min_bits: int = 0
    block_samples: int = 2_000_000
    seed: int = 1
    fs: float = 20e6
    k_grid: tuple = (0.3, 0.35, 0.4, 0.45, 0.5)
    efficiency_k: tuple = (0.2, 0.4, 0.6)
    efficiency_points: int = 401
    windows: tuple = (10e-6, 100e-6, 1000e-6)
    transition: str = "+-"
    timing_offset: int | None = None
    capture: str | None = None
    reference_bits: str | None = None

    def __post_init__(self):
        for name in ("rates", "esn0_db", "k_grid", "efficiency_k", "windows"):
            value = getattr(self, name)
            value = (value,) if np.isscalar(value) else value
            object.__setattr__(self, name, tuple(float(v) for v in value))
        object.__setattr__(self, "circuit", dict(self.circuit))
        try:
            self.validate()
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    def validate(self):
        for name in ("k", "k_tx", "k_rx"):
            v = getattr(self, name)
            if v is not None and not 0 <= v < 1:
                raise ConfigError(f"{name} must lie in [0, 1)")
        for name in ("k_grid", "efficiency_k"):
            if any(not 0 <= v < 1 for v in getattr(self, name)):
                raise ConfigError(f"{name} values must lie in [0, 1)")
        if not self.rates or any(r <= 0 for r in self.rates):
            raise ConfigError("rates must be positive")
        if self.target_errors < 1 or self.max_bits < 1 or self.block_samples < 1:
            raise ConfigError("trial budget must be >= 1")
        if self.noise_side not in _NOISE_SIDES:
            raise ConfigError(f"noise_side must be one of {_NOISE_SIDES}")
        if self.receiver not in _RECEIVERS:
            raise ConfigError(f"receiver must be one of {_RECEIVERS}")
        if self.tones not in ("exact", "approx"):
            raise ConfigError("tones must be 'exact' or 'approx'")
        if self.transition not in ("+-", "-+"):
            raise ConfigError("transition must be '+-' or '-+'")
        if not 0 <= self.sigma1_share <= 1:
            raise ConfigError("sigma1_share must lie in [0, 1]")
        if any(not math.isfinite(v) for v in self.esn0_db):
            raise ConfigError("Es/N0 grid must be finite")
        try:
            WaveformKind(self.kind)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not (self.guard == "tu/10" or (isinstance(self.guard, (int, float)) and self.guard >= 0)):
            raise ConfigError("guard must be 'tu/10' or a non-negative number of seconds")
        self.params()

    def params(self, k: float | None = None) -> CircuitParams:
        try:
            return reference_params(self.k if k is None else k, **self.circuit)
        except TypeError as exc:
            raise ConfigError(f"bad circuit block: {exc}") from exc

    @property
    def tx_coupling(self) -> float:
        return self.k if self.k_tx is None else self.k_tx

    @property
    def rx_coupling(self) -> float:
        return self.tx_coupling if self.k_rx is None else self.k_rx

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key, value in d.items():
            if isinstance(value, tuple):
                d[key] = list(value)
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, source: str) -> "ExperimentConfig":
        """Built-in config name or path to a JSON file."""
        if source in BUILTIN_CONFIGS:
            return cls.from_dict(BUILTIN_CONFIGS[source])
        try:
            with open(source) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {source!r}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)


@dataclass
class ResultRecord:
    experiment: str
    config_hash: str
    seed: int
    rows: list
    meta: dict = field(default_factory=dict)
    runtime: float = 0.0

    def csv_text(self) -> str:
        if not self.rows:
            return ""
        buf = io.StringIO()
        columns = list(self.rows[0])
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in columns])
        return buf.getvalue()

    def metadata(self) -> dict:
        return {"experiment": self.experiment, "config_hash": self.config_hash,
                "seed": self.seed, "runtime_s": self.runtime, **_jsonable(self.meta)}

    def write(self, directory, stem: str | None = None) -> tuple[str, str]:
        os.makedirs(directory, exist_ok=True)
        stem = stem or self.experiment
        csv_path = os.path.join(directory, f"{stem}.csv")
        json_path = os.path.join(directory, f"{stem}.json")
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.csv_text())
        with open(json_path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
        return csv_path, json_path


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else str(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, WaveformKind):
        return obj.value
    return obj


def wilson_interval(errors: int, trials: int, confidence: float = 0.95):
    if trials == 0:
        return (0.0, 1.0)
    ci = stats.binomtest(int(errors), int(trials)).proportion_ci(confidence, method="wilson")
    return (float(ci.low), float(ci.high))


def esn0_for_ber(ber: float) -> float:
    """Es/N0 (dB) at which orthogonal signaling reaches ``ber``."""
    if not 0 < ber < 0.5:
        raise DomainError("ber must lie in (0, 0.5)")
    return optimize.brentq(lambda x: theoretical_ber(x) - ber, -30.0, 40.0, xtol=1e-10)


def equivalent_loss_db(esn0_db: float, ber: float) -> float:
    """Horizontal distance (dB) from the orthogonal-signaling curve."""
    if ber <= 0 or ber >= 0.5:
        return float("nan")
    return esn0_db - esn0_for_ber(ber)


def tone_pair(p: CircuitParams, mode: str = "exact"):
    if mode == "approx":
        return peak_frequencies_approx(p.k, p.f0)
    return peak_tones(p)


def modem_config(cfg: ExperimentConfig, rate: float, k: float) -> ModemConfig:
    f_minus, f_plus = tone_pair(cfg.params(k), cfg.tones)
    guard = None if cfg.guard == "tu/10" else float(cfg.guard)
    return ModemConfig.for_rate(f_minus, f_plus, rate, WaveformKind(cfg.kind), cfg.fs, guard)


def _unit_noise(side: str, sigma1_share: float = 0.5) -> NoiseModel:
    if side == "sigma1":
        return NoiseModel(1.0, 0.0)
    if side == "sigma2":
        return NoiseModel(0.0, 1.0)
    return NoiseModel(math.sqrt(sigma1_share), math.sqrt(1 - sigma1_share))


class Link:
    """Transmitter, channel and coherent receiver for one operating point.

    The receiver knows the true transmit phase, the channel phase at its own
    tones and a timing offset that is calibrated on a noiseless run
    (see :meth:`calibrate_offset`).
    """

    def __init__(self, p: CircuitParams, tx: ModemConfig, rx: ModemConfig | None = None,
                 energy_tol: float = 1e-4, timing_offset: int | None = None):
        self.p = p
        self.tx = tx
        self.rx = rx or tx
        if self.rx.N != tx.N or self.rx.Ng != tx.Ng or self.rx.fs != tx.fs:
            raise DomainError("transmitter and receiver timing must agree")
        self.channel: FirChannel = channel_from_tf(derive_transfer_function(p), tx.fs, energy_tol)
        self.channel_phase = tuple(np.angle(self.channel.frequency_response([self.rx.f_minus, self.rx.f_plus])))
        self.warmup = int(math.ceil(self.channel.L_h / tx.N)) + 1
        self.offset = self.calibrate_offset() if timing_offset is None else int(timing_offset)
        self.Es = self.measure_es()

    def _frame(self, bits):
        x = transmit(bits, self.tx)
        return symbol_frame(bits, self.tx), x

    def _correlate(self, r, frame):
        res = coherent_demod(r, self.rx, frame, self.channel_phase, self.offset)
        return res.corr_minus, res.corr_plus

    def _calibration_bits(self, n=256):
        return np.random.default_rng(np.random.SeedSequence((2**31 - 1, n))).integers(0, 2, n)

    def calibrate_offset(self, n_bits: int = 512, reference_esn0_db: float = 12.0) -> int:
        """Offset minimizing the predicted error rate in white Gaussian noise
        at ``reference_esn0_db`` (noise level fixed by the zero-offset Es)."""
        bits = self._calibration_bits(n_bits)
        frame, x = self._frame(bits)
        s = apply_channel(np.append(x, np.zeros(self.tx.N)), self.channel, NoiseModel())
        seg0 = s[:n_bits * self.tx.N].reshape(n_bits, self.tx.N)[self.warmup:, self.tx.Ng:]
        es0 = np.mean(np.sum(seg0 ** 2, axis=1)) / self.tx.fs
        n0 = es0 / 10 ** (reference_esn0_db / 10)
        sigma = math.sqrt(n0 * self.tx.Tu / 2)  # std of the correlator difference
        sign = np.where(bits == 1, 1.0, -1.0)[self.warmup:]
        step = max(1, self.tx.N // 200)
        best, best_p = 0, np.inf
        for off in range(0, self.tx.N, step):
            res = coherent_demod(s, self.rx, frame, self.channel_phase, off)
            margin = sign * (res.corr_plus - res.corr_minus)[self.warmup:]
            p = float(np.mean(special.erfc(margin / (math.sqrt(2) * sigma)))) / 2
            if p < best_p * (1 - 1e-9):
                best, best_p = off, p
        return best

    def measure_es(self, n_bits: int = 256) -> float:
        """Mean received energy per useful window (noiseless)."""
        bits = self._calibration_bits(n_bits)
        _, x = self._frame(bits)
        s = apply_channel(np.append(x, np.zeros(self.tx.N)), self.channel, NoiseModel())
        seg = s[self.offset:self.offset + n_bits * self.tx.N].reshape(n_bits, self.tx.N)[:, self.tx.Ng:]
        return float(np.mean(np.sum(seg[self.warmup:] ** 2, axis=1)) / self.tx.fs)

    def n0(self, noise: NoiseModel) -> float:
        """One-sided noise density at the receiver tones."""
        psd = noise_psd(self.channel, noise, [self.rx.f_minus, self.rx.f_plus])
        return float(2 * np.mean(psd))

    def noise_scale(self, esn0_db: float, unit: NoiseModel, es: float | None = None) -> float:
        """Factor on ``unit`` giving the requested Es/N0."""
        es = self.Es if es is None else es
        return math.sqrt(es / (10 ** (esn0_db / 10) * self.n0(unit)))

    def block(self, n_bits: int, seed, unit: NoiseModel):
        """Bits plus signal and unit-noise correlations for one block."""
        ss_bits, ss_noise = np.random.SeedSequence(seed).spawn(2)
        total = self.warmup + n_bits + 1
        bits = np.random.default_rng(ss_bits).integers(0, 2, total)
        frame, x = self._frame(bits)
        s = apply_channel(x, self.channel, NoiseModel())
        n = apply_channel(np.zeros_like(x), self.channel, unit, ss_noise)
        keep = slice(self.warmup, self.warmup + n_bits)
        frame_keep = bits[keep]
        cs = [c[keep] for c in self._correlate(s, frame)]
        cn = [c[keep] for c in self._correlate(n, frame)]
        return frame_keep, cs, cn, (bits, frame, s, n, keep)


@dataclass
class _Counter:
    errors: int = 0
    bits: int = 0

    def done(self, cfg: ExperimentConfig) -> bool:
        return (self.bits >= cfg.max_bits
                or (self.errors >= cfg.target_errors and self.bits >= cfg.min_bits))


def _quantize_int8(x):
    peak = np.max(np.abs(x))
    return np.round(x * (127.0 / peak)) if peak > 0 else x


def simulate_curve(link: Link, cfg: ExperimentConfig, esn0_db, unit: NoiseModel,
                   point_index: int = 0, es_reference: float | None = None,
                   filterbank: FilterBank | None = None) -> list[dict]:
    """BER at each Es/N0 of the grid.

    All grid points share the transmitted bits and the unit noise of each
    block; each point stops on its own error target or bit cap.
    """
    grid = list(esn0_db)
    scales = [link.noise_scale(e, unit, es_reference) for e in grid]
    counters = [_Counter() for _ in grid]
    bits_per_block = max(64, cfg.block_samples // link.tx.N)
    block_index = 0
    while not all(c.done(cfg) for c in counters):
        bits, cs, cn, raw = link.block(bits_per_block, (cfg.seed, point_index, block_index), unit)
        block_index += 1
        for counter, scale in zip(counters, scales):
            if counter.done(cfg):
                continue
            take = min(bits_per_block, cfg.max_bits - counter.bits)
            if cfg.receiver == "coherent" and not cfg.quantize:
                decided = (cs[1] + scale * cn[1]) > (cs[0] + scale * cn[0])
            else:
                decided = _demod_samples(link, cfg, raw, scale, filterbank)
            counter.errors += int(np.count_nonzero(decided[:take] != bits[:take]))
            counter.bits += take
    rows = []
    for e, scale, c in zip(grid, scales, counters):
        ber = c.errors / c.bits
        lo, hi = wilson_interval(c.errors, c.bits)
        rows.append({"esn0_db": e, "bits": c.bits, "errors": c.errors, "ber": ber,
                     "ci_low": lo, "ci_high": hi, "theory": theoretical_ber(e),
                     "noise_scale": scale})
    return rows


def _demod_samples(link, cfg, raw, scale, filterbank):
    all_bits, frame, s, n, keep = raw
    r = s + scale * n
    if cfg.quantize:
        r = _quantize_int8(r)
    if cfg.receiver == "coherent":
        res = coherent_demod(r, link.rx, frame, link.channel_phase, link.offset)
        decided = res.corr_plus > res.corr_minus
    else:
        res = noncoherent_demod(r, link.rx, filterbank, len(all_bits), link.offset)
        decided = res.bits.astype(bool)
    return decided[keep]


def _link_for(cfg: ExperimentConfig, rate: float, kind: str | None = None) -> Link:
    cfg = cfg if kind is None else cfg.replace(kind=kind)
    tx = modem_config(cfg, rate, cfg.tx_coupling)
    rx = modem_config(cfg, rate, cfg.rx_coupling)
    return Link(cfg.params(), tx, rx, timing_offset=cfg.timing_offset)


def _link_meta(link: Link, unit: NoiseModel) -> dict:
    return {"f_minus": link.tx.f_minus, "f_plus": link.tx.f_plus,
            "rx_f_minus": link.rx.f_minus, "rx_f_plus": link.rx.f_plus,
            "fs": link.tx.fs, "samples_per_symbol": link.tx.N, "guard_samples": link.tx.Ng,
            "taps": len(link.channel.taps), "timing_offset": link.offset,
            "Es": link.Es, "N0_unit": link.n0(unit),
            "es_definition": "mean noiseless received energy over the useful window",
            "n0_definition": "twice the two-sided noise PSD averaged over the receiver tones"}


def _filterbank_for(cfg: ExperimentConfig, link: Link) -> FilterBank | None:
    if cfg.receiver != "noncoherent":
        return None
    return design_filterbank(cfg.params().f0, link.tx.fs)


def run_ber_sweep(cfg: ExperimentConfig) -> ResultRecord:
    """BER against Es/N0 for every configured rate."""
    start = time.perf_counter()
    unit = _unit_noise(cfg.noise_side, cfg.sigma1_share)
    rows, meta = [], {"links": {}}
    for i, rate in enumerate(cfg.rates):
        link = _link_for(cfg, rate)
        fb = _filterbank_for(cfg, link)
        for row in simulate_curve(link, cfg, cfg.esn0_db, unit, i, filterbank=fb):
            rows.append({"rate": rate, "kind": cfg.kind, "receiver": cfg.receiver, **row})
        meta["links"][str(rate)] = _link_meta(link, unit)
    return ResultRecord("ber", cfg.config_hash(), cfg.seed, rows, meta,
                        time.perf_counter() - start)


def curve_gap_db(rows_a, rows_b) -> float:
    """Largest horizontal distance between two BER curves on a shared grid,
    using points where both curves have at least one error."""
    gaps = []
    for a, b in zip(rows_a, rows_b):
        if a["errors"] and b["errors"] and a["ber"] < 0.5 and b["ber"] < 0.5:
            gaps.append(abs(esn0_for_ber(a["ber"]) - esn0_for_ber(b["ber"])))
    return max(gaps) if gaps else float("nan")


def correlator_noise_variance(link: Link, unit: NoiseModel, scale: float, n_bits: int, seed) -> float:
    """Measured variance of the tone correlators under noise only."""
    _, _, cn, _ = link.block(n_bits, seed, unit)
    return float(np.var(scale * np.concatenate(cn)))


def run_noise_side_equivalence(cfg: ExperimentConfig) -> ResultRecord:
    """Same sweep with noise injected before (sigma1) or after (sigma2) the
    channel, both calibrated to the same Es/N0 at the receiver tones."""
    start = time.perf_counter()
    rows, meta = [], {"gap_db": {}, "variance_ratio": {}}
    for i, rate in enumerate(cfg.rates):
        link = _link_for(cfg, rate)
        curves = {}
        for j, side in enumerate(("sigma1", "sigma2")):
            unit = _unit_noise(side)
            curves[side] = simulate_curve(link, cfg, cfg.esn0_db, unit, 2 * i + j)
            for row in curves[side]:
                rows.append({"rate": rate, "noise_side": side, **row})
        mid = cfg.esn0_db[len(cfg.esn0_db) // 2]
        var = [correlator_noise_variance(link, _unit_noise(side), link.noise_scale(mid, _unit_noise(side)),
                                         max(64, cfg.block_samples // link.tx.N), (cfg.seed, 10_000 + i))
               for side in ("sigma1", "sigma2")]
        meta["gap_db"][str(rate)] = curve_gap_db(curves["sigma1"], curves["sigma2"])
        meta["variance_ratio"][str(rate)] = var[0] / var[1]
    return ResultRecord("noise_side", cfg.config_hash(), cfg.seed, rows, meta,
                        time.perf_counter() - start)


def run_mismatch_sweep(cfg: ExperimentConfig) -> ResultRecord:
    """BER when transmitter and receiver assume coupling ``k_tx`` (from
    ``k_grid``) while the channel has coupling ``k``.

    Tones follow the closed-form peak estimate for ``k_tx``.  The noise
    level is fixed by the matched link's Es so that gain loss is visible.
    """
    start = time.perf_counter()
    unit = _unit_noise(cfg.noise_side, cfg.sigma1_share)
    base_cfg = cfg.replace(tones="approx", k_tx=None, k_rx=None)
    rate = cfg.rates[0]
    baseline = _link_for(base_cfg, rate)
    rows, meta = [], {"es_reference": baseline.Es, "rate": rate, "links": {}}
    for i, k_est in enumerate(cfg.k_grid):
        link = _link_for(base_cfg.replace(k_tx=k_est, k_rx=k_est), rate)
        for row in simulate_curve(link, cfg, cfg.esn0_db, unit, i, es_reference=baseline.Es):
            rows.append({"k_true": cfg.k, "k_est": k_est, **row})
        meta["links"][str(k_est)] = _link_meta(link, unit)
    return ResultRecord("mismatch", cfg.config_hash(), cfg.seed, rows, meta,
                        time.perf_counter() - start)


def extrapolate_required_esn0(rows, target: float = 1e-6, min_errors: int = 10) -> dict:
    """Es/N0 needed for ``target`` BER, extrapolated from the waterfall.

    The measured curve is described by its horizontal loss against the
    orthogonal-signaling curve; the loss of the two highest-SNR points with
    at least ``min_errors`` errors is carried to the target.
    """
    usable = [r for r in rows if r["errors"] >= min_errors and r["ber"] < 0.1]
    if not usable:
        return {"esn0_db": float("nan"), "loss_db": float("nan"), "extrapolated": True, "points": 0}
    usable.sort(key=lambda r: r["esn0_db"])
    tail = usable[-2:]
    weights = np.array([r["errors"] for r in tail], dtype=float)
    losses = np.array([equivalent_loss_db(r["esn0_db"], r["ber"]) for r in tail])
    loss = float(np.sum(weights * losses) / weights.sum())
    measured_below = [r for r in rows if r["bits"] and r["errors"] == 0]
    return {"esn0_db": esn0_for_ber(target) + loss, "loss_db": loss, "extrapolated": True,
            "points": len(tail), "error_free_points": len(measured_below)}


OFFPEAK_CASES = {
    "unbalanced": {"k": 0.2, "circuit": {}, "tones": "exact"},
    "unsplit": {"k": 0.4, "circuit": {"RL": 40.0}, "tones": "approx"},
}


def run_offpeak_cases(cfg: ExperimentConfig) -> ResultRecord:
    """Weak coupling (k = 0.2, tones at the circuit's peak pair) and a
    heavier load (RL = 40 ohm, k = 0.4, closed-form tones) at the first
    configured rate; the Es/N0 for BER 1e-6 is extrapolated."""
    start = time.perf_counter()
    unit = _unit_noise(cfg.noise_side, cfg.sigma1_share)
    rate = cfg.rates[0]
    rows, meta = [], {"rate": rate, "cases": {}}
    for i, (name, case) in enumerate(OFFPEAK_CASES.items()):
        circuit = {**cfg.circuit, **case["circuit"]}
        case_cfg = cfg.replace(k=case["k"], k_tx=None, k_rx=None, circuit=circuit, tones=case["tones"])
        link = _link_for(case_cfg, rate)
        curve = simulate_curve(link, case_cfg, cfg.esn0_db, unit, i)
        for row in curve:
            rows.append({"case": name, **row})
        tf = derive_transfer_function(case_cfg.params())
        mags = np.abs(eval_H(tf, 2 * np.pi * np.array([link.tx.f_minus, link.tx.f_plus])))
        meta["cases"][name] = {**_link_meta(link, unit),
                               "mag_minus": mags[0], "mag_plus": mags[1],
                               "split": analyze_peaks(case_cfg.params()).split,
                               "required_esn0_1e-6": extrapolate_required_esn0(curve)}
    return ResultRecord("offpeak", cfg.config_hash(), cfg.seed, rows, meta,
                        time.perf_counter() - start)


def run_efficiency_report(cfg: ExperimentConfig) -> ResultRecord:
    """Efficiency curves, the three steady-state values and window
    efficiencies after both tone switches."""
    start = time.perf_counter()
    p = cfg.params()
    rows = []
    f = np.linspace(0.5 * p.f0, 1.6 * p.f0, cfg.efficiency_points)
    for k in cfg.efficiency_k:
        eta = efficiency(cfg.params(k), 2 * np.pi * f)
        rows.extend({"k": k, "f_hz": fi, "eta": float(e)} for fi, e in zip(f, np.atleast_1d(eta)))
    f_minus, f_plus = peak_tones(p)
    steady = {name: float(efficiency(p, 2 * np.pi * fr))
              for name, fr in (("eta_minus", f_minus), ("eta_0", p.f0), ("eta_plus", f_plus))}
    settled = {name: settled_efficiency(p, fr)
               for name, fr in (("eta_minus", f_minus), ("eta_0", p.f0), ("eta_plus", f_plus))}
    transient = {}
    for T in cfg.windows:
        down = transient_efficiency(p, "FSK", "+-", T, tones=(f_minus, f_plus))
        up = transient_efficiency(p, "FSK", "-+", T, tones=(f_minus, f_plus))
        transient[repr(T)] = {"plus_to_minus": down, "minus_to_plus": up, "mean": 0.5 * (down + up)}
    maxima = {repr(k): float(f[np.argmax([r["eta"] for r in rows if r["k"] == k])])
              for k in cfg.efficiency_k}
    meta = {"f_minus": f_minus, "f_plus": f_plus, "f0": p.f0, "steady_phasor": steady,
            "steady_transient": settled, "transient": transient, "curve_argmax_hz": maxima,
            "window_alignment": "window starts at the tone switch; mean over 8 switch phases"}
    return ResultRecord("efficiency", cfg.config_hash(), cfg.seed, rows, meta,
                        time.perf_counter() - start)


def circuit_report(cfg: ExperimentConfig) -> dict:
    p = cfg.params()
    tf = derive_transfer_function(p)
    poles = find_poles(tf)
    pa = analyze_peaks(p)
    f_approx = peak_frequencies_approx(p.k, p.f0)
    return {
        "params": p.as_dict(), "f0": p.f0, "Q1": p.Q1, "Q2": p.Q2,
        "coefficients": {"a3": tf.a3, "b4": tf.b4, "b3": tf.b3, "b2": tf.b2, "b1": tf.b1, "b0": tf.b0},
        "poles": {"sigma1": poles.sigma1, "omega1": poles.omega1,
                  "sigma2": poles.sigma2, "omega2": poles.omega2},
        "peaks": dataclasses.asdict(pa),
        "peaks_approx": {"f_minus": f_approx[0], "f_plus": f_approx[1]},
        "efficiency": {"at_f_minus": float(efficiency(p, 2 * np.pi * pa.f_minus)),
                       "at_f0": float(efficiency(p, 2 * np.pi * p.f0)),
                       "at_f_plus": float(efficiency(p, 2 * np.pi * pa.f_plus))},
    }


@dataclass
class DecodeReport:
    bits: np.ndarray
    low_mean: np.ndarray
    high_mean: np.ndarray
    low_confidence: np.ndarray
    errors: int | None
    ber: float | None


def read_reference_bits(path) -> np.ndarray:
    with open(path) as fh:
        text = "".join(ch for ch in fh.read() if ch in "01")
    return np.frombuffer(text.encode(), dtype=np.uint8) - ord("0")


def decode_capture(path, cfg: ExperimentConfig, reference=None, offset: int = 0) -> DecodeReport:
    """Noncoherent decoding of a capture file written by
    :func:`splitfsk.modem.write_waveform` (float32 or int8)."""
    samples, header = read_waveform(path)
    p = cfg.params()
    f_minus, f_plus = tone_pair(p, cfg.tones)
    fs, T, Tg = header["fs"], header["T"], header["Tg"]
    mcfg = ModemConfig(f_minus, f_plus, T - Tg, Tg, fs, header["kind"])
    fb = design_filterbank(p.f0, fs)
    n_symbols = len(samples) // mcfg.N
    res = noncoherent_demod(samples, mcfg, fb, n_symbols, offset)
    errors = ber = None
    if reference is not None:
        ref = np.asarray(reference, dtype=np.int8)[:n_symbols]
        errors = int(np.count_nonzero(ref != res.bits[:len(ref)]))
        ber = errors / len(ref) if len(ref) else None
    return DecodeReport(res.bits, res.low_mean, res.high_mean, res.low_confidence, errors, ber)


def decode_record(cfg: ExperimentConfig) -> ResultRecord:
    start = time.perf_counter()
    if not cfg.capture:
        raise ConfigError("decode needs 'capture' in the config")
    reference = read_reference_bits(cfg.reference_bits) if cfg.reference_bits else None
    rep = decode_capture(cfg.capture, cfg, reference, cfg.timing_offset or 0)
    rows = [{"symbol": i, "bit": int(b), "low_mean": float(lo), "high_mean": float(hi),
             "low_confidence": bool(fl)}
            for i, (b, lo, hi, fl) in enumerate(zip(rep.bits, rep.low_mean, rep.high_mean, rep.low_confidence))]
    meta = {"symbols": len(rep.bits), "errors": rep.errors, "ber": rep.ber,
            "low_confidence_count": int(np.count_nonzero(rep.low_confidence))}
    return ResultRecord("decode", cfg.config_hash(), cfg.seed, rows, meta,
                        time.perf_counter() - start)
