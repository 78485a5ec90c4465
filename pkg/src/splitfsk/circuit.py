"""Frequency-domain model of the two-coil series-series resonant link.

The primary loop is an ideal source ``V1`` in series with ``RS``, ``R1``,
``C1`` and ``L1``; the secondary loop carries ``L2``, ``C2``, ``R2`` and the
Ohmic load ``RL``.  Both loops share the mutual inductance
``M = k * sqrt(L1 * L2)``.  All phasors are RMS phasors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import minimize_scalar

from .errors import DomainError, NoSplitInRange, NumericFailure, SingularSystem

#: Largest coupling accepted; at k = 1 the quartic denominator degenerates.
K_MAX = 0.999

REFERENCE_F0 = 1e6
REFERENCE_L = 6.3e-6


@dataclass(frozen=True)
class CircuitParams:
    """Component values of the series-series link; derived quantities are filled in on
    construction.

    Units: farad, henry, ohm.  ``k`` is the dimensionless coupling coefficient.
    """

    C1: float
    C2: float
    L1: float
    L2: float
    R1: float
    R2: float
    RS: float
    RL: float
    k: float

    M: float = field(init=False, repr=False)
    RS_eff: float = field(init=False, repr=False)
    RL_eff: float = field(init=False, repr=False)
    L1_leak: float = field(init=False, repr=False)
    L2_leak: float = field(init=False, repr=False)
    omega0: float = field(init=False, repr=False)
    Q1: float = field(init=False, repr=False)
    Q2: float = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("C1", "C2", "L1", "L2", "R1", "R2", "RS", "RL"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be finite and > 0, got {value!r}")
        if not (0.0 <= self.k <= K_MAX):
            raise DomainError(f"coupling k must lie in [0, {K_MAX}], got {self.k!r}")
        lc1 = self.L1 * self.C1
        lc2 = self.L2 * self.C2
        if abs(lc1 - lc2) / lc1 >= 1e-12:
            raise DomainError("circuit is not perfectly tuned: L1*C1 != L2*C2")

        M = self.k * math.sqrt(self.L1 * self.L2)
        omega0 = 1.0 / math.sqrt(lc1)
        derived = {
            "M": M,
            "RS_eff": self.RS + self.R1,
            "RL_eff": self.RL + self.R2,
            "L1_leak": self.L1 - M,
            "L2_leak": self.L2 - M,
            "omega0": omega0,
            "Q1": omega0 * self.L1 / (self.R1 + self.RS),
            "Q2": omega0 * self.L2 / (self.R2 + self.RL),
        }
        for name, value in derived.items():
            object.__setattr__(self, name, value)

    @property
    def f0(self) -> float:
        return self.omega0 / (2 * math.pi)

    def with_k(self, k: float) -> "CircuitParams":
        return replace(self, k=k)

    def replace(self, **changes) -> "CircuitParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {name: getattr(self, name)
                for name in ("C1", "C2", "L1", "L2", "R1", "R2", "RS", "RL", "k")}


def reference_params(k: float = 0.4, **overrides) -> CircuitParams:
    """The reference link: 6.3 uH coils, 0.62 ohm coil loss, 0.17 ohm source,
    10 ohm load, capacitors tuned for f0 = 1 MHz exactly (4.02 nF).

    Any field may be overridden, e.g. ``reference_params(RL=40.0)``.
    """
    C = 1.0 / ((2 * math.pi * REFERENCE_F0) ** 2 * REFERENCE_L)
    values = dict(C1=C, C2=C, L1=REFERENCE_L, L2=REFERENCE_L, R1=0.62, R2=0.62,
                  RS=0.17, RL=10.0, k=k)
    values.update(overrides)
    return CircuitParams(**values)


def reference_params_4nf(k: float = 0.4, **overrides) -> CircuitParams:
    """Same as :func:`reference_params` but with C1 = C2 = 4 nF exactly
    (f0 = 1.0026 MHz)."""
    values = dict(C1=4e-9, C2=4e-9)
    values.update(overrides)
    return reference_params(k, **values)


@dataclass(frozen=True)
class TransferFunction:
    """``H(s) = a3 s^3 / (b4 s^4 + b3 s^3 + b2 s^2 + b1 s + b0)``."""

    a3: float
    b4: float
    b3: float
    b2: float
    b1: float
    b0: float

    @property
    def numerator(self) -> np.ndarray:
        return np.array([self.a3, 0.0, 0.0, 0.0])

    @property
    def denominator(self) -> np.ndarray:
        return np.array([self.b4, self.b3, self.b2, self.b1, self.b0])

    @property
    def omega0(self) -> float:
        # b1 = omega0^2 * b3 holds for every perfectly tuned circuit
        return math.sqrt(self.b1 / self.b3)

    @property
    def f0(self) -> float:
        return self.omega0 / (2 * math.pi)

    def normalized_denominator(self) -> np.ndarray:
        """Denominator coefficients of D(omega0 * z) / b0, highest power first.

        All entries are O(1), which keeps root finding well conditioned.
        """
        w0 = self.omega0
        d = self.denominator
        powers = np.arange(4, -1, -1)
        return d * w0 ** powers / self.b0


def _coefficients(p: CircuitParams, k: float) -> TransferFunction:
    M = k * math.sqrt(p.L1 * p.L2)
    rs, rl = p.RS + p.R1, p.RL + p.R2
    return TransferFunction(
        a3=p.RL * M,
        b4=p.L1 * p.L2 * (1.0 - k * k),
        b3=rs * p.L2 + rl * p.L1,
        b2=rs * rl + p.L1 / p.C2 + p.L2 / p.C1,
        b1=rl / p.C1 + rs / p.C2,
        b0=1.0 / (p.C1 * p.C2),
    )


def derive_transfer_function(p: CircuitParams) -> TransferFunction:
    return _coefficients(p, p.k)


def eval_H(tf: TransferFunction, omega):
    """Complex gain ``H(j omega)``; ``omega`` may be a scalar or an array (rad/s)."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise DomainError("omega must be > 0")
    s = 1j * omega
    out = tf.a3 * s ** 3 / np.polyval(tf.denominator, s)
    return out if out.ndim else complex(out)


def wrap_phase(phase: float, tol: float = 1e-9) -> float:
    """Map an angle into (-pi, pi]; values within ``tol`` of -pi go to +pi."""
    phase = math.remainder(phase, 2 * math.pi)
    if phase <= -math.pi + tol:
        phase += 2 * math.pi
    return phase


@dataclass(frozen=True)
class PolePairs:
    """Upper-half-plane representatives of the two conjugate pole pairs,
    ordered so that ``sigma1 < sigma2 < 0``."""

    sigma1: float
    omega1: float
    sigma2: float
    omega2: float

    @property
    def upper(self) -> np.ndarray:
        return np.array([complex(self.sigma1, self.omega1),
                         complex(self.sigma2, self.omega2)])

    @property
    def all(self) -> np.ndarray:
        up = self.upper
        return np.concatenate([up, up.conj()])


def _companion_roots(coeffs: np.ndarray) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    c = c / c[0]
    n = len(c) - 1
    comp = np.zeros((n, n))
    comp[0, :] = -c[1:]
    comp[1:, :-1] = np.eye(n - 1)
    return np.linalg.eigvals(comp)


def _newton_polish(coeffs: np.ndarray, roots: np.ndarray, iters: int = 4) -> np.ndarray:
    dcoeffs = np.polyder(coeffs)
    out = roots.astype(complex).copy()
    for i, z in enumerate(out):
        best = z
        best_res = abs(np.polyval(coeffs, z))
        for _ in range(iters):
            d = np.polyval(dcoeffs, z)
            if d == 0:
                break
            z = z - np.polyval(coeffs, z) / d
            res = abs(np.polyval(coeffs, z))
            if res < best_res:
                best, best_res = z, res
        out[i] = best
    return out


def find_poles(tf: TransferFunction, tol: float = 1e-6) -> PolePairs:
    """Roots of D(s) from companion-matrix eigenvalues, Newton polished."""
    if tf.b4 <= 0:
        raise DomainError("b4 must be > 0")
    w0 = tf.omega0
    scaled = tf.normalized_denominator()
    z = _newton_polish(scaled, _companion_roots(scaled))
    roots = z * w0

    den = tf.denominator
    scale = np.max(np.abs(den))
    residual = np.max(np.abs(np.polyval(den, roots))) / scale
    if not residual < tol:
        raise NumericFailure(f"pole residual {residual:.3e} exceeds {tol:g}")

    upper = sorted((r for r in roots if r.imag > 0), key=lambda r: r.real)
    if len(upper) != 2:
        raise NumericFailure("expected two complex-conjugate pole pairs (a resonance is overdamped)")
    (p1, p2) = upper
    return PolePairs(float(p1.real), float(p1.imag), float(p2.real), float(p2.imag))


def real_gain_frequencies(tf: TransferFunction):
    """Frequencies (Hz) at which H(j omega) is real-valued.

    These are the roots of ``b4 w^4 - b2 w^2 + b0 = 0``; H is negative real
    at the lower one and positive real at the upper one.  Returns ``None``
    when the biquadratic has no two distinct positive roots.
    """
    beta = tf.normalized_denominator()
    b4, b2 = beta[0], beta[2]
    disc = b2 * b2 - 4.0 * b4
    if disc <= 0:
        return None
    root = math.sqrt(disc)
    # numerically stable pair of roots in u = (omega/omega0)^2
    u_hi = (b2 + root) / (2.0 * b4)
    u_lo = 1.0 / (b4 * u_hi)
    if u_lo <= 0:
        return None
    f0 = tf.f0
    return f0 * math.sqrt(u_lo), f0 * math.sqrt(u_hi)


def _stationary_polynomial(tf: TransferFunction) -> Polynomial:
    # |H|^2 ~ u^3 / P(u) with u = (omega/omega0)^2; stationary where 3P - uP' = 0
    beta = tf.normalized_denominator()
    b4, b3, b2, b1 = beta[0], beta[1], beta[2], beta[3]
    even = Polynomial([1.0, -b2, b4])
    odd = Polynomial([b1, -b3])
    P = even ** 2 + Polynomial([0.0, 1.0]) * odd ** 2
    return 3 * P - Polynomial([0.0, 1.0]) * P.deriv()


def magnitude_maxima(tf: TransferFunction) -> list:
    """Angular frequencies (rad/s) of the local maxima of |H(j omega)|, ascending.

    Stationary points come from an exact polynomial condition; each maximum
    is then refined by golden-section search on |H|.
    """
    if tf.a3 == 0:
        return []
    Q = _stationary_polynomial(tf)
    dQ = Q.deriv()
    w0 = tf.omega0
    stationary = sorted(u.real for u in Q.roots()
                        if abs(u.imag) <= 1e-9 * max(1.0, abs(u.real)) and u.real > 0)
    maxima = []
    for i, u in enumerate(stationary):
        if dQ(u) >= 0:
            continue
        w = w0 * math.sqrt(u)
        lo = w0 * math.sqrt(stationary[i - 1]) if i > 0 else 0.99 * w
        hi = w0 * math.sqrt(stationary[i + 1]) if i + 1 < len(stationary) else 1.01 * w
        lo, hi = max(lo, 0.99 * w), min(hi, 1.01 * w)
        lo, hi = 0.5 * (lo + w), 0.5 * (hi + w)
        try:
            res = minimize_scalar(lambda x: -abs(eval_H(tf, x)), bracket=(lo, w, hi),
                                  method="golden", options={"xtol": 1e-12})
            if lo < res.x < hi:
                w = float(res.x)
        except ValueError:
            # bracket too flat to refine; the polynomial root is already exact
            pass
        maxima.append(w)
    return sorted(maxima)


@dataclass(frozen=True)
class PeakAnalysis:
    """Peak report.

    ``f_minus``/``f_plus`` are the frequencies at which H is real (negative
    at f-, positive at f+); ``fmax_minus``/``fmax_plus`` locate the local
    maxima of |H|.  ``split`` is true iff |H| has two local maxima.
    """

    split: bool
    f_minus: float
    f_plus: float
    mag_minus: float
    mag_plus: float
    phase_minus: float
    phase_plus: float
    fmax_minus: float
    fmax_plus: float
    k_split: float | None = None


def peak_frequencies_exact(tf: TransferFunction) -> PeakAnalysis:
    maxima = magnitude_maxima(tf)
    f0 = tf.f0
    split = len(maxima) >= 2
    real_pts = real_gain_frequencies(tf)
    if split and real_pts is not None:
        f_minus, f_plus = real_pts
    else:
        f_minus = f_plus = f0
    if maxima:
        fmax = (maxima[0] / (2 * math.pi), maxima[-1] / (2 * math.pi))
    else:
        fmax = (f0, f0)

    h_minus = eval_H(tf, 2 * math.pi * f_minus)
    h_plus = eval_H(tf, 2 * math.pi * f_plus)
    return PeakAnalysis(
        split=split,
        f_minus=f_minus,
        f_plus=f_plus,
        mag_minus=abs(h_minus),
        mag_plus=abs(h_plus),
        phase_minus=wrap_phase(np.angle(h_minus)),
        phase_plus=wrap_phase(np.angle(h_plus)),
        fmax_minus=fmax[0],
        fmax_plus=fmax[1],
    )


def analyze_peaks(p: CircuitParams) -> PeakAnalysis:
    """:func:`peak_frequencies_exact` with ``k_split`` filled in."""
    pa = peak_frequencies_exact(derive_transfer_function(p))
    try:
        ks = find_k_split(p)
    except NoSplitInRange:
        ks = None
    return replace(pa, k_split=ks)


def peak_frequencies_approx(k: float, f0: float):
    """Closed-form peak estimates ``(f0/sqrt(1+k), f0/sqrt(1-k))``."""
    if not (0.0 <= k < 1.0):
        raise DomainError(f"k must lie in [0, 1), got {k!r}")
    return f0 / math.sqrt(1.0 + k), f0 / math.sqrt(1.0 - k)


def coupling_from_peaks(f_minus: float, f_plus: float) -> float:
    if not (0 < f_minus <= f_plus):
        raise DomainError("need 0 < f_minus <= f_plus")
    wm2, wp2 = f_minus ** 2, f_plus ** 2
    return (wp2 - wm2) / (wp2 + wm2)


def peak_ratio(k: float) -> float:
    """f+/f- implied by the closed-form peak estimates."""
    return math.sqrt((1.0 + k) / (1.0 - k))


def orthogonal_couplings(n: int) -> list:
    """Couplings for which f+/f- is an integer m = 2, 3, ...: k = (m^2-1)/(m^2+1)."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return [(m * m - 1) / (m * m + 1) for m in range(2, n + 2)]


@dataclass(frozen=True)
class SteadyState:
    omega: float
    V1: complex
    V2: complex
    I1: complex
    I2: complex
    P1: float
    P2: float
    eta: float
    Z1: complex


def _mesh_matrix(p: CircuitParams, s):
    z11 = p.RS_eff + s * p.L1 + 1.0 / (s * p.C1)
    z22 = p.RL_eff + s * p.L2 + 1.0 / (s * p.C2)
    zm = -s * p.M
    return z11, z22, zm


def solve_steady_state(p: CircuitParams, omega: float, V1: complex = 1.0) -> SteadyState:
    """Solve the two mesh equations at ``s = j omega`` for the loop currents."""
    if not omega > 0:
        raise DomainError("omega must be > 0")
    z11, z22, zm = _mesh_matrix(p, 1j * omega)
    Z = np.array([[z11, zm], [zm, z22]])
    if np.linalg.cond(Z) > 1e12:
        raise SingularSystem("mesh impedance matrix is ill-conditioned")
    I1, I2 = np.linalg.solve(Z, np.array([V1, 0.0], dtype=complex))
    V2 = p.RL * I2
    P1 = float((V1 * np.conj(I1)).real)
    P2 = float(abs(V2) ** 2 / p.RL)
    return SteadyState(omega=omega, V1=complex(V1), V2=complex(V2), I1=complex(I1),
                       I2=complex(I2), P1=P1, P2=P2, eta=P2 / P1, Z1=complex(V1 / I1))


def efficiency(p: CircuitParams, omega) -> np.ndarray:
    """Vectorized steady-state efficiency P2/P1 (same algebra as
    :func:`solve_steady_state`)."""
    omega = np.asarray(omega, dtype=float)
    z11, z22, zm = _mesh_matrix(p, 1j * omega)
    det = z11 * z22 - zm * zm
    I1 = z22 / det
    I2 = -zm / det
    P1 = I1.conj().real
    P2 = p.RL * np.abs(I2) ** 2
    return P2 / P1


def input_impedance(p: CircuitParams, omega):
    z11, z22, zm = _mesh_matrix(p, 1j * np.asarray(omega, dtype=float))
    return z11 - zm * zm / z22


def efficiency_curve(p: CircuitParams, omega_grid) -> list:
    """List of ``(omega, eta)`` pairs."""
    grid = np.asarray(omega_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0):
        raise DomainError("omega grid must be a non-empty 1-D array of positive values")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("omega grid must be strictly increasing")
    eta = efficiency(p, grid)
    return [(float(w), float(e)) for w, e in zip(grid, eta)]


def _is_split(p: CircuitParams, k: float) -> bool:
    return len(magnitude_maxima(_coefficients(p, k))) >= 2


def find_k_split(p: CircuitParams, tol: float = 1e-4) -> float:
    """Smallest coupling at which |H| has two local maxima (bisection).

    ``p.k`` is ignored.
    """
    hi = 1.0 - 1e-6
    if not _is_split(p, hi):
        raise NoSplitInRange("no frequency splitting for any k < 1")
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _is_split(p, mid):
            hi = mid
        else:
            lo = mid
    return hi
