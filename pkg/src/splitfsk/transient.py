"""Time-domain simulation of the coupled series-resonant loops.

The state is ``(i1, i2, vC1, vC2)``.  Integration is classical fixed-step
RK4.  Because the circuit is linear and time invariant, one RK4 step is an
exact affine map ``x' = Phi x + G [v(t), v(t+dt/2), v(t+dt)]``; the
recursion is run in modal coordinates with ``scipy.signal.lfilter``, which
gives the same numbers as a stepwise loop at a fraction of the cost.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate as quad
from scipy import signal

from .circuit import (CircuitParams, analyze_peaks, derive_transfer_function,
                      peak_frequencies_approx, real_gain_frequencies)
from .errors import DomainError, NotSettled, SingularInductance, StepTooLarge


@dataclass(frozen=True)
class StateVector:
    i1: np.ndarray | float
    i2: np.ndarray | float
    vC1: np.ndarray | float
    vC2: np.ndarray | float

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.i1, self.i2, self.vC1, self.vC2), axis=-1).astype(float)

    @classmethod
    def from_array(cls, x) -> "StateVector":
        x = np.asarray(x, dtype=float)
        return cls(x[..., 0], x[..., 1], x[..., 2], x[..., 3])

    @classmethod
    def zero(cls) -> "StateVector":
        return cls(0.0, 0.0, 0.0, 0.0)


def _inductance_inverse(p: CircuitParams) -> np.ndarray:
    det = p.L1 * p.L2 - p.M ** 2
    if det <= 1e-12 * p.L1 * p.L2:
        raise SingularInductance("inductance matrix is singular (k -> 1)")
    return np.array([[p.L2, p.M], [p.M, p.L1]]) / det


def state_matrices(p: CircuitParams):
    """``(A, b)`` with ``dx/dt = A x + b v1``."""
    Linv = _inductance_inverse(p)
    A = np.zeros((4, 4))
    # inductor voltages [v1 - R'S i1 - vC1, -vC2 - R'L i2]
    drive = np.array([[-p.RS_eff, 0.0, -1.0, 0.0],
                      [0.0, -p.RL_eff, 0.0, -1.0]])
    A[:2] = Linv @ drive
    A[2, 0] = 1.0 / p.C1
    A[3, 1] = 1.0 / p.C2
    b = np.zeros(4)
    b[:2] = Linv[:, 0]
    return A, b


def derivatives(x, v1, p: CircuitParams):
    """Time derivative of the state for source voltage ``v1``.

    ``x`` may be a ``StateVector`` or an array whose last axis is the state.
    """
    as_state = isinstance(x, StateVector)
    arr = x.as_array() if as_state else np.asarray(x, dtype=float)
    Linv = _inductance_inverse(p)
    i1, i2, c1, c2 = (arr[..., j] for j in range(4))
    u1 = v1 - p.RS_eff * i1 - c1
    u2 = -c2 - p.RL_eff * i2
    di1 = Linv[0, 0] * u1 + Linv[0, 1] * u2
    di2 = Linv[1, 0] * u1 + Linv[1, 1] * u2
    out = np.stack([di1, di2, i1 / p.C1, i2 / p.C2], axis=-1)
    return StateVector.from_array(out) if as_state else out


def rk4_step(x, v_start, v_mid, v_end, dt, p: CircuitParams) -> np.ndarray:
    """One classical Runge-Kutta step (reference implementation)."""
    k1 = derivatives(x, v_start, p)
    k2 = derivatives(x + 0.5 * dt * k1, v_mid, p)
    k3 = derivatives(x + 0.5 * dt * k2, v_mid, p)
    k4 = derivatives(x + dt * k3, v_end, p)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_maps(p: CircuitParams, dt: float):
    """``Phi`` and ``G`` (4x3) of the RK4 step for the linear circuit."""
    A, b = state_matrices(p)
    hA = dt * A
    I = np.eye(4)
    Phi = I + hA + hA @ hA / 2 + hA @ hA @ hA / 6 + hA @ hA @ hA @ hA / 24
    # input weights follow from expanding the four stages
    g_start = dt / 6 * (I + hA + hA @ hA / 2 + hA @ hA @ hA / 4) @ b
    g_mid = dt / 6 * (4 * I + 2 * hA + hA @ hA / 2) @ b
    g_end = dt / 6 * b
    return Phi, np.column_stack([g_start, g_mid, g_end])


def peak_tones(p: CircuitParams):
    """Peak frequencies of the circuit (Hz); the real-gain pair when |H| has a
    single maximum, the approximate pair if even that does not exist."""
    an = analyze_peaks(p)
    if an.split:
        return an.f_minus, an.f_plus
    pair = real_gain_frequencies(derive_transfer_function(p))
    return pair if pair is not None else peak_frequencies_approx(p.k, p.f0)


def _default_f_plus(p: CircuitParams) -> float:
    return peak_frequencies_approx(p.k, p.f0)[1] if p.k > 0 else p.f0


@dataclass(frozen=True)
class TransientResult:
    """Sampled waveforms on ``t`` and window energies.

    With a batch of runs, series have shape ``(len(t), batch)``.
    """

    t: np.ndarray
    v1: np.ndarray
    i1: np.ndarray
    v2: np.ndarray
    i2: np.ndarray
    E1: np.ndarray | float
    E2: np.ndarray | float
    final_state: StateVector
    states: np.ndarray

    @property
    def eta_T(self):
        return self.E2 / self.E1


def _run_recursion(Phi, G, x0, inputs):
    """States ``x_0 .. x_n`` of ``x_{m+1} = Phi x_m + G u_m``.

    ``x0``: (B, 4); ``inputs``: (n, 3, B).  Returns (n+1, B, 4).
    """
    n, _, B = inputs.shape
    lam, V = np.linalg.eig(Phi)
    if np.linalg.cond(V) < 1e8:
        Vinv = np.linalg.inv(V)
        forcing = np.einsum("ij,njb->nib", Vinv @ G, inputs)  # (n, 4, B)
        z0 = Vinv @ x0.T  # (4, B)
        z = np.empty((n + 1, 4, B), dtype=complex)
        z[0] = z0
        for m in range(4):
            z[1:, m, :], _ = signal.lfilter([1.0], [1.0, -lam[m]], forcing[:, m, :],
                                            axis=0, zi=(lam[m] * z0[m])[None, :])
        x = np.einsum("ij,njb->nbi", V, z).real
        return x
    x = np.empty((n + 1, B, 4))
    x[0] = x0
    for m in range(n):
        x[m + 1] = x[m] @ Phi.T + (G @ inputs[m]).T
    return x


def integrate(p: CircuitParams, drive: Callable, t_span, dt: float | None = None,
              x0=None, f_plus: float | None = None) -> TransientResult:
    """RK4 integration of the circuit under source voltage ``drive(t)``.

    ``drive`` maps a time array of shape (n,) to shape (n,) or (n, B) for a
    batch of B runs.  ``dt`` defaults to ``1/(100 f_plus)`` and may not exceed
    ``1/(50 f_plus)``; it is shrunk slightly to fit the span exactly.
    Energies use the trapezoidal rule on the step grid.
    """
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise DomainError("t_span must be increasing")
    f_plus = f_plus or _default_f_plus(p)
    dt = dt if dt is not None else 1.0 / (100 * f_plus)
    if dt <= 0 or dt > 1.0 / (50 * f_plus) * (1 + 1e-12):
        raise StepTooLarge(f"dt={dt:.3g} s exceeds 1/(50 f_plus)")
    n = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    dt = (t1 - t0) / n
    t = t0 + dt * np.arange(n + 1)

    def sample(tt):
        v = np.asarray(drive(tt), dtype=float)
        return np.broadcast_to(v, tt.shape) if v.ndim == 0 else v

    v_grid = sample(t)
    batched = v_grid.ndim == 2
    v_grid = v_grid.reshape(n + 1, -1)
    B = v_grid.shape[1]
    v_mid = sample(t[:-1] + dt / 2).reshape(n, -1)
    v_mid = np.broadcast_to(v_mid, (n, B))

    if x0 is None:
        x0 = np.zeros((B, 4))
    else:
        x0 = x0.as_array() if isinstance(x0, StateVector) else np.asarray(x0, dtype=float)
        x0 = np.broadcast_to(x0.reshape(-1, 4), (B, 4)).copy()

    Phi, G = rk4_maps(p, dt)
    inputs = np.stack([v_grid[:-1], v_mid, v_grid[1:]], axis=1)
    x = _run_recursion(Phi, G, x0, inputs)

    i1, i2 = x[..., 0], x[..., 1]
    v2 = p.RL * i2
    E1 = quad.trapezoid(v_grid * i1, t, axis=0)
    E2 = quad.trapezoid(v2 * i2, t, axis=0)
    if not batched:
        v_grid, i1, i2, v2, E1, E2 = v_grid[:, 0], i1[:, 0], i2[:, 0], v2[:, 0], float(E1[0]), float(E2[0])
        final = StateVector.from_array(x[-1, 0])
    else:
        final = StateVector.from_array(x[-1])
    return TransientResult(t=t, v1=v_grid, i1=i1, v2=v2, i2=i2, E1=E1, E2=E2,
                           final_state=final, states=x if batched else x[:, 0])


def tone_drive(freq: float, phase=0.0, kind: str = "FSK", t_switch: float = 0.0,
               freq_after: float | None = None) -> Callable:
    """Unit-power source: ``sqrt(2) sin`` (FSK) or its sign (RFSK).

    With ``freq_after`` the frequency changes at ``t_switch`` without a phase
    jump; ``phase`` is the phase at ``t_switch`` and may be an array (batch).
    """
    phase = np.asarray(phase, dtype=float)
    f_after = freq if freq_after is None else freq_after

    def v(t):
        t = np.asarray(t, dtype=float)
        f = np.where(t < t_switch, freq, f_after)
        arg = 2 * np.pi * f * (t - t_switch)
        arg = arg[:, None] + phase[None, :] if phase.ndim else arg + phase
        s = np.sin(arg)
        return math.sqrt(2) * s if kind == "FSK" else np.where(s >= 0, 1.0, -1.0)

    return v


def _cycle_efficiency(res: TransientResult, steps_per_cycle: int, which: int):
    """Efficiency over cycle ``which`` (negative counts from the end)."""
    n = len(res.t) - 1
    start = n + which * steps_per_cycle if which < 0 else which * steps_per_cycle
    sl = slice(start, start + steps_per_cycle + 1)
    tt = res.t[sl]
    e1 = quad.trapezoid(res.v1[sl] * res.i1[sl], tt, axis=0)
    e2 = quad.trapezoid(res.v2[sl] * res.i2[sl], tt, axis=0)
    return e2 / e1


def _settle(p, tone, cycles, phase, kind, steps_per_cycle):
    if cycles < 50:
        raise DomainError("cycles must be >= 50")
    dt = 1.0 / (tone * steps_per_cycle)
    drive = tone_drive(tone, phase, kind)
    state, done = None, 0
    while done < 10 * cycles:
        res = integrate(p, drive, (0.0, cycles / tone), dt=dt, x0=state, f_plus=tone)
        done += cycles
        state = res.final_state
        prev = _cycle_efficiency(res, steps_per_cycle, -2)
        last = _cycle_efficiency(res, steps_per_cycle, -1)
        if np.all(np.abs(last - prev) < 1e-3 * np.abs(last)):
            return state, last
    raise NotSettled(f"no stable per-cycle efficiency after {done} cycles")


def _steps_per_cycle(p, tone, dt):
    dt = dt if dt is not None else 1.0 / (100 * max(_default_f_plus(p), tone))
    return max(100, int(math.ceil(1.0 / (tone * dt))))


def steady_state_settle(p: CircuitParams, tone: float, cycles: int = 200,
                        phase=0.0, kind: str = "FSK", dt: float | None = None) -> StateVector:
    """State reached after driving ``tone`` from rest until the per-cycle
    efficiency changes by less than 0.1 %.  The drive phase at the returned
    state is ``phase``."""
    state, _ = _settle(p, tone, cycles, phase, kind, _steps_per_cycle(p, tone, dt))
    return state


def settled_efficiency(p: CircuitParams, tone: float, cycles: int = 200,
                       kind: str = "FSK", dt: float | None = None) -> float:
    """Efficiency over the last cycle of a settled single-tone run."""
    _, eta = _settle(p, tone, cycles, 0.0, kind, _steps_per_cycle(p, tone, dt))
    return float(eta)


@dataclass(frozen=True)
class TransitionEfficiency:
    eta_T: float
    per_phase: np.ndarray
    phases: np.ndarray
    result: TransientResult


def transition_run(p: CircuitParams, f_from: float, f_to: float, T_window: float,
                   kind: str = "FSK", n_phases: int = 8, cycles: int = 200,
                   dt: float | None = None) -> TransitionEfficiency:
    """Window efficiency after a tone switch at ``t = 0``.

    The circuit starts in the settled state of ``f_from``; the result is
    averaged over ``n_phases`` equally spaced drive phases at the switch.
    """
    phases = 2 * np.pi * np.arange(n_phases) / n_phases
    f_plus = max(f_from, f_to)
    dt = dt if dt is not None else 1.0 / (100 * f_plus)
    x0 = steady_state_settle(p, f_from, cycles, phases, kind, dt)
    drive = tone_drive(f_from, phases, kind, 0.0, f_to)
    res = integrate(p, drive, (0.0, T_window), dt=dt, x0=x0, f_plus=f_plus)
    per_phase = np.asarray(res.eta_T)
    return TransitionEfficiency(float(per_phase.mean()), per_phase, phases, res)


def transient_efficiency(p: CircuitParams, drive_kind: str = "FSK", transition: str = "+-",
                         T_window: float = 10e-6, tones=None, **kwargs) -> float:
    """``E2/E1`` over ``T_window`` after a switch ``'+-'`` (f_plus to
    f_minus) or ``'-+'``.  ``tones`` defaults to ``peak_tones(p)``."""
    if drive_kind == "RFSK":
        drive_kind = "RFSK_BIPOLAR"
    if drive_kind not in ("FSK", "RFSK_BIPOLAR"):
        raise DomainError(f"unknown drive kind {drive_kind!r}")
    f_minus, f_plus = tones if tones is not None else peak_tones(p)
    if transition == "+-":
        pair = (f_plus, f_minus)
    elif transition == "-+":
        pair = (f_minus, f_plus)
    else:
        raise DomainError("transition must be '+-' or '-+'")
    return transition_run(p, *pair, T_window, kind=drive_kind, **kwargs).eta_T


def stored_energy(p: CircuitParams, x) -> np.ndarray:
    """Magnetic plus electric energy; the mutual term enters as ``-M i1 i2``."""
    x = x.as_array() if isinstance(x, StateVector) else np.asarray(x)
    i1, i2, c1, c2 = (x[..., j] for j in range(4))
    return (0.5 * p.L1 * i1 ** 2 + 0.5 * p.L2 * i2 ** 2 - p.M * i1 * i2
            + 0.5 * p.C1 * c1 ** 2 + 0.5 * p.C2 * c2 ** 2)


def energy_balance(p: CircuitParams, res: TransientResult) -> dict:
    """Input energy against dissipation plus change in stored energy."""
    states = res.states
    dissipated = quad.trapezoid(p.RS_eff * res.i1 ** 2 + p.RL_eff * res.i2 ** 2, res.t, axis=0)
    delta = stored_energy(p, states[-1]) - stored_energy(p, states[0])
    return {"E_in": res.E1, "dissipated": dissipated, "delta_stored": delta,
            "residual": res.E1 - dissipated - delta}


def write_waveforms_csv(path, res: TransientResult, column: int = 0) -> None:
    """CSV with columns t, v1, i1, v2, i2 (one batch member)."""
    def pick(a):
        return a[:, column] if a.ndim == 2 else a

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "v1", "i1", "v2", "i2"])
        for row in zip(res.t, pick(res.v1), pick(res.i1), pick(res.v2), pick(res.i2)):
            w.writerow([repr(float(v)) for v in row])
