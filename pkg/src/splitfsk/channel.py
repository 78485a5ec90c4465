"""Equivalent discrete-time channel: impulse response, FIR taps, noise.

Three independent routes lead from ``H(s)`` to samples of the impulse
response: residues at the poles (the reference), an inverse DFT of the
spectrum, and the bilinear map to ``H(z)`` followed by the inverse
z-transform.  The FIR channel used in simulations is built from the
residue route.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import signal

from .circuit import PolePairs, TransferFunction, eval_H, find_poles
from .errors import (AliasingRisk, DomainError, RepeatedPoles,
                     UnstableDiscretization)

#: Residual-energy fraction defining the effective duration (-30 dB ISI).
T_EFF_ENERGY = 1e-3


@dataclass(frozen=True)
class ImpulseResponse:
    """Samples ``h(l*Ts)`` of the causal impulse response (unit 1/s).

    ``t_eff`` is the time by which all but ``T_EFF_ENERGY`` of the energy
    has arrived; ``t_envelope`` is the time after which |h| stays below 1 %
    of its peak.
    """

    samples: np.ndarray
    Ts: float
    t_eff: float
    t_envelope: float

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.samples)) * self.Ts


def _durations(h: np.ndarray, Ts: float, energy_fraction: float = T_EFF_ENERGY):
    energy = h * h
    total = energy.sum()
    if total == 0:
        return 0.0, 0.0
    tail = np.append(np.cumsum(energy[::-1])[::-1][1:], 0.0)  # energy after sample l
    idx = int(np.nonzero(tail < energy_fraction * total)[0][0])
    t_eff = (idx + 1) * Ts
    mag = np.abs(h)
    tail_max = np.maximum.accumulate(mag[::-1])[::-1]
    above = np.nonzero(tail_max >= 0.01 * mag.max())[0]
    t_env = (above[-1] + 1) * Ts if above.size else 0.0
    return t_eff, t_env


def _make_response(h, Ts):
    t_eff, t_env = _durations(h, Ts)
    return ImpulseResponse(samples=h, Ts=Ts, t_eff=t_eff, t_envelope=t_env)


def impulse_response_partial_fractions(poles: PolePairs, tf: TransferFunction,
                                       Ts: float, duration: float) -> ImpulseResponse:
    """``h(t) = 2 Re sum_i r_i exp(s_i t)`` over the two upper poles, where
    ``r_i = N(s_i) / D'(s_i)``."""
    if Ts <= 0 or duration <= 0:
        raise DomainError("Ts and duration must be > 0")
    n = int(math.ceil(duration / Ts))
    if tf.a3 == 0:
        return ImpulseResponse(np.zeros(n), Ts, 0.0, 0.0)
    up = poles.upper
    if abs(up[0] - up[1]) < 1e-6 * tf.omega0:
        raise RepeatedPoles("poles coincide; use impulse_response_idft instead")
    slowest = min(abs(poles.sigma1), abs(poles.sigma2))
    if duration < 5.0 / slowest:
        raise DomainError(f"duration must cover >= 5 decay constants ({5 / slowest:.3g} s)")

    dD = np.polyder(tf.denominator)
    residues = tf.a3 * up ** 3 / np.polyval(dD, up)
    t = np.arange(n) * Ts
    h = 2.0 * np.real(residues[None, :] * np.exp(np.outer(t, up))).sum(axis=1)
    return _make_response(h, Ts)


def impulse_response_idft(tf: TransferFunction, Ts: float, duration: float,
                          fold: bool = True, images: int = 64) -> ImpulseResponse:
    """Impulse response from an inverse DFT of the sampled spectrum.

    With ``fold=True`` the spectral images beyond the Nyquist frequency are
    folded back (the 1/s asymptote in closed form, the remainder summed over
    ``images`` replicas), so the result is the exact sampled response of a
    relative-degree-one H(s).  With ``fold=False`` the plain spectrum is used
    and the Nyquist-rate gain must be negligible.
    """
    if Ts <= 0 or duration <= 0:
        raise DomainError("Ts and duration must be > 0")
    n = int(math.ceil(duration / Ts))
    if tf.a3 == 0:
        return ImpulseResponse(np.zeros(n), Ts, 0.0, 0.0)

    poles = find_poles(tf)
    slowest = min(abs(poles.sigma1), abs(poles.sigma2))
    record = max(n * Ts, 25.0 / slowest)  # time aliasing below e^-25
    nfft = 1 << int(math.ceil(math.log2(record / Ts)))
    m = np.arange(nfft // 2 + 1)
    w = 2 * math.pi * m / (nfft * Ts)
    ws = 2 * math.pi / Ts

    if not fold:
        grid = np.linspace(w[1], w[-1], 2048)
        peak = np.max(np.abs(eval_H(tf, grid)))
        if abs(eval_H(tf, w[-1])) >= 1e-3 * peak:
            raise AliasingRisk("|H| at Nyquist exceeds 1e-3 of peak; use fold=True or smaller Ts")
        spectrum = np.zeros(len(w), dtype=complex)
        spectrum[1:] = eval_H(tf, w[1:])
    else:
        c = tf.a3 / tf.b4  # H(s) ~ c / s for large |s|
        den = tf.denominator
        shifts = np.arange(-images, images + 1)[:, None] * ws
        s = 1j * (w[None, :] + shifts)
        with np.errstate(divide="ignore", invalid="ignore"):
            Hs = tf.a3 * s ** 3 / np.polyval(den, s)
            rest = np.where(s == 0, 0.0, Hs - c / s).sum(axis=0)
            cot = np.cos(w * Ts / 2) / np.sin(w * Ts / 2)
            spectrum = c * Ts / 2j * cot + rest
        # DC: the singular parts cancel; remaining images pair into real terms
        spectrum[0] = np.sum(np.where(shifts[:, 0] == 0, 0.0, Hs[:, 0])).real

    seq = np.fft.irfft(spectrum, nfft)
    h = seq[:n] / Ts
    # the DFT returns the midpoint h(0+)/2 at the jump; report h(0+)
    h[0] *= 2.0
    return _make_response(h, Ts)


@dataclass(frozen=True)
class DiscreteTF:
    """Rational ``H(z)``; coefficient arrays in descending powers of z (equal
    degree), i.e. directly usable as ``scipy.signal.lfilter(num, den, x)``."""

    num: np.ndarray
    den: np.ndarray
    Ts: float

    def frequency_response(self, f) -> np.ndarray:
        zinv = np.exp(-2j * np.pi * np.asarray(f, dtype=float) * self.Ts)
        return np.polyval(self.num[::-1], zinv) / np.polyval(self.den[::-1], zinv)

    def poles(self) -> np.ndarray:
        return np.roots(self.den)


def bilinear_discretize(tf: TransferFunction, Ts: float,
                        prewarp_hz: float | None = None) -> DiscreteTF:
    """Substitute ``s = K (z - 1)/(z + 1)`` with ``K = 2/Ts`` (or the
    prewarped constant matching ``prewarp_hz`` exactly)."""
    if Ts <= 0:
        raise DomainError("Ts must be > 0")
    if prewarp_hz is None:
        K = 2.0 / Ts
    else:
        wp = 2 * math.pi * prewarp_hz
        K = wp / math.tan(wp * Ts / 2)

    def substitute(coeffs_desc):
        order = 4
        coeffs = coeffs_desc[::-1]  # ascending powers of s
        acc = np.zeros(order + 1)
        for i, c in enumerate(coeffs):
            if c == 0:
                continue
            term = P.polymul(P.polypow([-1.0, 1.0], i), P.polypow([1.0, 1.0], order - i))
            acc = P.polyadd(acc, c * K ** i * term)
        acc = np.pad(acc, (0, order + 1 - len(acc)))
        return acc[::-1]  # descending powers of z

    num = substitute(np.pad(tf.numerator, (1, 0)))
    den = substitute(tf.denominator)
    return DiscreteTF(num=num / den[0], den=den / den[0], Ts=Ts)


@dataclass(frozen=True)
class FirChannel:
    """Real FIR taps ``h_l`` (gain per sample), ``0 <= l <= L_h``.

    ``J`` is the number of samples per data symbol.
    """

    taps: np.ndarray
    Ts: float
    J: int = 1

    @property
    def L_h(self) -> int:
        return len(self.taps) - 1

    @property
    def memory(self) -> float:
        return self.L_h * self.Ts

    def frequency_response(self, f) -> np.ndarray:
        f = np.atleast_1d(np.asarray(f, dtype=float))
        l = np.arange(len(self.taps))
        return np.exp(-2j * np.pi * np.outer(f, l) * self.Ts) @ self.taps

    def with_oversampling(self, J: int) -> "FirChannel":
        return FirChannel(self.taps, self.Ts, int(J))


def _truncate(h: np.ndarray, energy_tol: float) -> np.ndarray:
    energy = h * h
    total = energy.sum()
    if total == 0:
        return h[:1]
    tail = np.cumsum(energy[::-1])[::-1][1:]  # energy after sample l
    below = np.nonzero(tail < energy_tol * total)[0]
    L_h = int(below[0]) if below.size else len(h) - 1
    return h[:L_h + 1].copy()


def fir_taps(hz: DiscreteTF, energy_tol: float = 1e-4) -> FirChannel:
    """Impulse response of the ``H(z)`` recursion, truncated where the
    remaining energy falls below ``energy_tol`` of the total."""
    radius = np.max(np.abs(hz.poles())) if len(hz.den) > 1 else 0.0
    if radius >= 1.0:
        raise UnstableDiscretization(f"pole radius {radius:.6f} >= 1")
    if radius == 0.0:
        n = len(hz.num) + 1
    else:
        n = int(math.ceil(math.log(energy_tol * 1e-4) / (2 * math.log(radius)))) + len(hz.num)
    impulse = np.zeros(n)
    impulse[0] = 1.0
    h = signal.lfilter(hz.num, hz.den, impulse)
    return FirChannel(_truncate(h, energy_tol), hz.Ts)


def fir_from_impulse(ir: ImpulseResponse, energy_tol: float = 1e-4) -> FirChannel:
    """FIR taps ``Ts * h(l Ts)`` with the first tap halved (trapezoidal rule
    at the jump of h at t = 0)."""
    taps = ir.samples * ir.Ts
    taps[0] *= 0.5
    return FirChannel(_truncate(taps, energy_tol), ir.Ts)


def channel_from_tf(tf: TransferFunction, fs: float, energy_tol: float = 1e-4) -> FirChannel:
    """Reference FIR channel at sample rate ``fs`` via the residue route."""
    poles = find_poles(tf)
    slowest = min(abs(poles.sigma1), abs(poles.sigma2))
    ir = impulse_response_partial_fractions(poles, tf, 1.0 / fs, 30.0 / slowest)
    return fir_from_impulse(ir, energy_tol)


@dataclass(frozen=True)
class NoiseModel:
    """``n = sigma1 * (h_norm * n1) + sigma2 * n2`` with unit-power white
    Gaussian ``n1`` (primary side) and ``n2`` (secondary side).

    ``h_norm`` is the FIR channel scaled to unit average power over its
    memory ``L_h``.
    """

    sigma1: float = 0.0
    sigma2: float = 0.0

    def __post_init__(self):
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise DomainError("noise standard deviations must be >= 0")


def normalized_taps(ch: FirChannel) -> np.ndarray:
    rms = math.sqrt(np.mean(ch.taps ** 2))
    return ch.taps / rms if rms > 0 else ch.taps


def noise_psd(ch: FirChannel, nm: NoiseModel, f) -> np.ndarray:
    """Two-sided noise power spectral density (per Hz) at frequencies ``f``."""
    g = np.abs(FirChannel(normalized_taps(ch), ch.Ts).frequency_response(f)) ** 2
    return (nm.sigma1 ** 2 * g + nm.sigma2 ** 2) * ch.Ts


def _rngs(seed):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(2)]


def upsample(symbols, J: int) -> np.ndarray:
    """Insert ``J - 1`` zeros after every symbol."""
    symbols = np.asarray(symbols, dtype=float)
    out = np.zeros(len(symbols) * J)
    out[::J] = symbols
    return out


def apply_channel(x, ch: FirChannel, nm: NoiseModel, rng_seed=None,
                  upsample_symbols: bool = False) -> np.ndarray:
    """Convolve ``x`` with the taps and add the composite noise.

    ``rng_seed`` may be an int, a tuple of ints or a ``SeedSequence``; the
    output is a deterministic function of ``(x, ch, nm, rng_seed)``.
    """
    x = np.asarray(x, dtype=float)
    if upsample_symbols:
        x = upsample(x, ch.J)
    n = len(x)
    y = signal.oaconvolve(x, ch.taps)[:n] if np.any(x) else np.zeros(n)
    if nm.sigma1 == 0 and nm.sigma2 == 0:
        return y
    rng1, rng2 = _rngs(rng_seed)
    if nm.sigma1 > 0:
        n1 = rng1.standard_normal(n)
        y += nm.sigma1 * signal.oaconvolve(n1, normalized_taps(ch))[:n]
    if nm.sigma2 > 0:
        y += nm.sigma2 * rng2.standard_normal(n)
    return y


def write_taps_csv(path, ch: FirChannel) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["l", "t_seconds", "h_l"])
        for l, h in enumerate(ch.taps):
            writer.writerow([l, repr(l * ch.Ts), repr(float(h))])
