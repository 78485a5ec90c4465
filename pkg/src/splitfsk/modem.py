"""Binary continuous-phase FSK and rectified FSK with cyclic extension.

Two receivers are provided: a coherent correlator with genie phase
knowledge, and a noncoherent lowpass/bandpass filterbank that only needs
symbol timing.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, signal, special

from .errors import DomainError, FormatError, LengthMismatch, SpecInfeasible

SQRT2 = math.sqrt(2.0)


class WaveformKind(str, enum.Enum):
    FSK = "FSK"
    RFSK_BIPOLAR = "RFSK_BIPOLAR"
    RFSK_UNIPOLAR = "RFSK_UNIPOLAR"


def samples_per_symbol(rate: float, fs_target: float = 20e6) -> int:
    """Samples per symbol at ``fs_target``, rounded up when the target rate
    is not an integer multiple of the symbol rate."""
    ratio = fs_target / rate
    n = round(ratio)
    return n if abs(ratio - n) < 1e-9 * ratio else math.ceil(ratio)


@dataclass(frozen=True)
class ModemConfig:
    f_minus: float
    f_plus: float
    Tu: float
    Tg: float
    fs: float
    kind: WaveformKind = WaveformKind.FSK
    N: int = field(init=False)
    Ng: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", WaveformKind(self.kind))
        if not 0 < self.f_minus < self.f_plus < self.fs / 2:
            raise DomainError("need 0 < f_minus < f_plus < fs/2")
        if self.Tu <= 0 or self.Tg < 0:
            raise DomainError("need Tu > 0 and Tg >= 0")
        n_total = self.T * self.fs
        n_guard = self.Tg * self.fs
        for n in (n_total, n_guard):
            if abs(n - round(n)) > 1e-9 * max(1.0, n):
                raise DomainError("T and Tg must span an integer number of samples")
        object.__setattr__(self, "N", int(round(n_total)))
        object.__setattr__(self, "Ng", int(round(n_guard)))

    @classmethod
    def for_rate(cls, f_minus, f_plus, rate, kind=WaveformKind.FSK,
                 fs_target=20e6, guard=None):
        """Config for ``rate`` bit/s: ``Tg = Tu/10`` unless ``guard`` (seconds)
        is given; both rounded to whole samples."""
        n = samples_per_symbol(rate, fs_target)
        fs = rate * n
        ng = round(n / 11) if guard is None else round(guard * fs)
        if not 0 <= ng < n:
            raise DomainError("guard interval must be shorter than the symbol")
        return cls(f_minus, f_plus, (n - ng) / fs, ng / fs, fs, kind)

    @property
    def T(self) -> float:
        return self.Tu + self.Tg

    @property
    def Nu(self) -> int:
        return self.N - self.Ng

    @property
    def f_center(self) -> float:
        return 0.5 * (self.f_plus + self.f_minus)

    @property
    def f_dev(self) -> float:
        return 0.5 * (self.f_plus - self.f_minus)

    @property
    def rate(self) -> float:
        return self.fs / self.N

    def tone(self, bit: int) -> float:
        return self.f_plus if bit else self.f_minus


@dataclass(frozen=True)
class SymbolFrame:
    bits: np.ndarray
    symbols: np.ndarray
    phases: np.ndarray  # start phase of each symbol, in [0, 2*pi)


def symbol_frame(bits, cfg: ModemConfig, phase0: float = 0.0) -> SymbolFrame:
    bits = np.asarray(bits, dtype=np.int8)
    if bits.ndim != 1 or bits.size == 0:
        raise DomainError("bits must be a nonempty 1-D sequence")
    if np.any((bits != 0) & (bits != 1)):
        raise DomainError("bits must be 0 or 1")
    freqs = np.where(bits == 1, cfg.f_plus, cfg.f_minus)
    advance = np.mod(2 * np.pi * freqs * cfg.N / cfg.fs, 2 * np.pi)
    phases = np.mod(phase0 + np.concatenate(([0.0], np.cumsum(advance[:-1]))), 2 * np.pi)
    return SymbolFrame(bits=bits, symbols=2 * bits.astype(np.int8) - 1, phases=phases)


def modulate(bits, cfg: ModemConfig, phase0: float = 0.0) -> np.ndarray:
    """Continuous-phase sqrt(2)-amplitude sinusoid, one tone per bit."""
    frame = symbol_frame(bits, cfg, phase0)
    freqs = np.where(frame.bits == 1, cfg.f_plus, cfg.f_minus)
    n = np.arange(cfg.N) / cfg.fs
    phase = frame.phases[:, None] + 2 * np.pi * freqs[:, None] * n[None, :]
    return (SQRT2 * np.sin(phase)).ravel()


def rectify(waveform, kind) -> np.ndarray:
    """Sign of the waveform (``+1`` at zero); unipolar clips ``-1`` to 0."""
    kind = WaveformKind(kind)
    if kind is WaveformKind.FSK:
        raise DomainError("rectify needs an RFSK kind")
    out = np.where(np.asarray(waveform) >= 0, 1.0, -1.0)
    if kind is WaveformKind.RFSK_UNIPOLAR:
        out[out < 0] = 0.0
    return out


def transmit(bits, cfg: ModemConfig, phase0: float = 0.0) -> np.ndarray:
    """Transmit waveform of the configured kind."""
    s = modulate(bits, cfg, phase0)
    return s if cfg.kind is WaveformKind.FSK else rectify(s, cfg.kind)


def _symbol_matrix(r, n_symbols, cfg: ModemConfig, offset: int) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    needed = n_symbols * cfg.N
    if len(r) < needed:
        raise LengthMismatch(f"need {needed} samples for {n_symbols} symbols, got {len(r)}")
    if offset < 0:
        raise DomainError("offset must be >= 0")
    seg = r[offset:offset + needed]
    if len(seg) < needed:
        seg = np.pad(seg, (0, needed - len(seg)))
    return seg.reshape(n_symbols, cfg.N)[:, cfg.Ng:]


@dataclass(frozen=True)
class CoherentResult:
    bits: np.ndarray
    corr_minus: np.ndarray
    corr_plus: np.ndarray


def coherent_demod(r, cfg: ModemConfig, frame: SymbolFrame,
                   channel_phase=(0.0, 0.0), offset: int = 0) -> CoherentResult:
    """Correlate each useful window against both tones.

    The reference for a tone starts from the symbol's true transmit phase
    and is rotated by ``channel_phase = (arg at f_minus, arg at f_plus)``.
    ``offset`` delays the decision windows by that many samples.
    """
    n_sym = len(frame.bits)
    block = _symbol_matrix(r, n_sym, cfg, offset)
    n = np.arange(cfg.Ng, cfg.N) + offset
    corr = []
    for f, psi in zip((cfg.f_minus, cfg.f_plus), channel_phase):
        theta = 2 * np.pi * f * n / cfg.fs + psi
        c = np.sin(frame.phases) * (block @ np.cos(theta)) + np.cos(frame.phases) * (block @ np.sin(theta))
        corr.append(c / cfg.fs)
    bits = (corr[1] > corr[0]).astype(np.int8)
    return CoherentResult(bits=bits, corr_minus=corr[0], corr_plus=corr[1])


def theoretical_ber(esn0_db):
    """Bit error probability of binary orthogonal signaling."""
    esn0 = np.power(10.0, np.asarray(esn0_db, dtype=float) / 10.0)
    pb = 0.5 * special.erfc(np.sqrt(esn0 / 2.0))
    return float(pb) if pb.ndim == 0 else pb


def guard_loss_db(Tu: float, Tg: float) -> float:
    """Energy lost to the cyclic extension, in dB."""
    return 10 * math.log10((Tu + Tg) / Tu)


@dataclass(frozen=True)
class FilterSpecs:
    numtaps: int = 291
    ripple_db: float = 0.4
    atten_db: float = 30.0
    bandwidth: float = 1e6
    transition: float = 0.05  # fraction of f0 on each side of the split


@dataclass(frozen=True)
class FilterBank:
    lowpass: np.ndarray
    bandpass: np.ndarray
    fs: float
    f0: float
    specs: FilterSpecs
    achieved: dict

    @property
    def delay(self) -> int:
        return (self.specs.numtaps - 1) // 2


def _response_db(taps, fs, n=4096):
    f, h = signal.freqz(taps, worN=n, fs=fs)
    return f, 20 * np.log10(np.maximum(np.abs(h), 1e-300))


def _measure(taps, fs, passband, stopbands):
    f, db = _response_db(taps, fs)
    pmask = (f >= passband[0]) & (f <= passband[1])
    smask = np.zeros_like(f, dtype=bool)
    for lo, hi in stopbands:
        smask |= (f >= lo) & (f <= hi)
    ripple = db[pmask].max() - db[pmask].min()
    atten = db[pmask].mean() - db[smask].max()
    return float(ripple), float(atten), float(db[pmask].mean())


def noise_bandwidth(taps, fs, n=16384) -> float:
    """One-sided equivalent noise bandwidth relative to the peak gain."""
    f, h = signal.freqz(taps, worN=n, fs=fs)
    p = np.abs(h) ** 2
    return float(integrate.trapezoid(p, f) / p.max())


def design_filterbank(f0: float, fs: float, specs: FilterSpecs = FilterSpecs()) -> FilterBank:
    """Equiripple lowpass below ``f0`` and bandpass above it.

    The bandpass upper edge is tuned so both filters have the same noise
    bandwidth; both are scaled to unit mean passband gain.
    """
    if not 0 < f0 < fs / 2:
        raise DomainError("need 0 < f0 < fs/2")
    lo_edge = f0 * (1 - specs.transition)
    hi_edge = f0 * (1 + specs.transition)
    gap = hi_edge - lo_edge
    dp = (10 ** (specs.ripple_db / 20) - 1) / (10 ** (specs.ripple_db / 20) + 1)
    ds = 10 ** (-specs.atten_db / 20)
    weight = [1.0, dp / ds]
    nyq = fs / 2

    lowpass = signal.remez(specs.numtaps, [0, lo_edge, hi_edge, nyq], [1, 0],
                           weight=weight, fs=fs)

    def bandpass_for(upper):
        bands = [0, lo_edge, hi_edge, upper, upper + gap, nyq]
        return signal.remez(specs.numtaps, bands, [0, 1, 0], weight=[weight[1], 1, weight[1]], fs=fs)

    target = noise_bandwidth(lowpass, fs)
    upper = hi_edge + specs.bandwidth
    if upper + gap >= nyq:
        raise SpecInfeasible("bandpass does not fit below Nyquist")
    try:
        upper = optimize.brentq(lambda u: noise_bandwidth(bandpass_for(u), fs) - target,
                                hi_edge + 0.5 * specs.bandwidth,
                                min(hi_edge + 1.5 * specs.bandwidth, nyq - 2 * gap), xtol=100.0)
    except ValueError:
        pass  # keep the nominal width; the checks below report the mismatch
    bandpass = bandpass_for(upper)

    r_lp, a_lp, g_lp = _measure(lowpass, fs, (0, lo_edge), [(hi_edge, nyq)])
    r_bp, a_bp, g_bp = _measure(bandpass, fs, (hi_edge, upper), [(0, lo_edge), (upper + gap, nyq)])
    lowpass = lowpass / 10 ** (g_lp / 20)
    bandpass = bandpass / 10 ** (g_bp / 20)
    achieved = {
        "lowpass_ripple_db": r_lp, "lowpass_atten_db": a_lp,
        "bandpass_ripple_db": r_bp, "bandpass_atten_db": a_bp,
        "bandpass_upper_hz": upper,
        "noise_bandwidth_ratio": noise_bandwidth(bandpass, fs) / noise_bandwidth(lowpass, fs),
    }
    if max(r_lp, r_bp) > specs.ripple_db or min(a_lp, a_bp) < specs.atten_db:
        raise SpecInfeasible(f"{specs.numtaps} taps do not meet the specs", achieved)
    return FilterBank(lowpass, bandpass, fs, f0, specs, achieved)


@dataclass(frozen=True)
class NoncoherentResult:
    bits: np.ndarray
    low_mean: np.ndarray
    high_mean: np.ndarray
    low_confidence: np.ndarray


def noncoherent_demod(r, cfg: ModemConfig, fb: FilterBank, n_symbols: int | None = None,
                      offset: int = 0, confidence_margin: float = 0.05) -> NoncoherentResult:
    """Compare the rectified filter outputs averaged over each useful window.

    Bit 1 is decided only if the bandpass mean is strictly larger.  Decisions
    whose relative margin is below ``confidence_margin`` are flagged.
    """
    r = np.asarray(r, dtype=float)
    if n_symbols is None:
        n_symbols = len(r) // cfg.N
    if n_symbols < 1:
        raise LengthMismatch("capture shorter than one symbol")
    d = fb.delay
    means = []
    for taps in (fb.lowpass, fb.bandpass):
        y = signal.oaconvolve(r, taps)[d:d + len(r)]
        means.append(np.abs(_symbol_matrix(y, n_symbols, cfg, offset)).mean(axis=1))
    low, high = means
    bits = (high > low).astype(np.int8)
    top = np.maximum(low, high)
    flag = (top == 0) | (np.abs(high - low) <= confidence_margin * top)
    return NoncoherentResult(bits, low, high, flag)


_HEADER_KEYS = ("fs", "T", "Tg", "kind", "format")


def _header_path(path) -> str:
    return os.fspath(path) + ".hdr"


def write_waveform(path, samples, cfg: ModemConfig, fmt: str = "f32") -> None:
    """Raw little-endian samples plus a ``key=value`` text sidecar.

    ``fmt='int8'`` scales the peak to 127 and rounds, mimicking an 8-bit
    oscilloscope capture.
    """
    x = np.asarray(samples, dtype=float)
    if fmt == "f32":
        data = x.astype("<f4")
    elif fmt == "int8":
        peak = np.max(np.abs(x)) if x.size else 0.0
        scale = 127.0 / peak if peak > 0 else 1.0
        data = np.clip(np.round(x * scale), -128, 127).astype("i1")
    else:
        raise FormatError(f"unknown sample format {fmt!r}")
    data.tofile(path)
    with open(_header_path(path), "w") as fh:
        fh.write(f"fs={cfg.fs!r}\nT={cfg.T!r}\nTg={cfg.Tg!r}\nkind={cfg.kind.value}\nformat={fmt}\n")


def read_header(path) -> dict:
    try:
        with open(_header_path(path)) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise FormatError(f"missing header sidecar: {exc}") from exc
    header = {}
    for ln in lines:
        key, sep, value = ln.partition("=")
        if not sep:
            raise FormatError(f"malformed header line {ln!r}")
        header[key.strip()] = value.strip()
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise FormatError(f"header lacks {missing}")
    try:
        for k in ("fs", "T", "Tg"):
            header[k] = float(header[k])
        header["kind"] = WaveformKind(header["kind"])
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    if header["format"] not in ("f32", "int8") or header["fs"] <= 0 or header["T"] <= header["Tg"] or header["Tg"] < 0:
        raise FormatError("inconsistent header values")
    return header


def read_waveform(path):
    """Return ``(samples as float64, header dict)``."""
    header = read_header(path)
    dtype = "<f4" if header["format"] == "f32" else "i1"
    return np.fromfile(path, dtype=dtype).astype(float), header
