"""Lindblad dynamics of the qubit-oscillator system.

Joint states are ``(2 d) x (2 d)`` density matrices ordered
``kron(qubit, oscillator)`` with qubit index 0 = ``|g>``, 1 = ``|e>`` and
``sigma_z = diag(1, -1)``. Two frames are available:

``rotating``
    ``H(t) = g chi(t) (a e^{-i w_r t} + a^dag e^{i w_r t}) sigma_z``. The pi
    pulses are folded into the sign ``chi(t)``; the pi/2 pulses are ideal
    instantaneous rotations. Qubit relaxation rates swap while ``chi = -1``
    because the toggled frame exchanges ``sigma^-`` and ``sigma^+``.
``lab``
    the full coefficient table with counter-rotating terms and finite-width
    pulses. Needs a step that resolves ``omega_ge``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import constants

from .dephasing import NoiseTrajectory, ProtocolTiming
from .errors import ConfigurationError, NumericError
from .fockspace import (
    HilbertConfig,
    build_operators,
    check_truncation,
    projector,
)
from .measurement import InitialState
from ._rng import stream

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]])
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e|
SIGMA_PLUS = SIGMA_MINUS.T.copy()

TRACE_TOL = 1e-7
POSITIVITY_TOL = 1e-6
# RK4 is stable on the negative real axis up to |lambda dt| = 2.78
RK4_SAFE = 1.5
RK4_LIMIT = 2.5


def thermal_occupation(omega: float, temp: float) -> float:
    """Bose factor ``1 / (exp(hbar omega / k_B T) - 1)``."""
    if temp <= 0:
        raise ConfigurationError("temperature must be positive")
    if omega <= 0:
        raise ConfigurationError("frequency must be positive")
    x = constants.hbar * omega / (constants.k * temp)
    if x > 700:
        return 0.0
    return 1.0 / math.expm1(x)


def rotation(theta: float, axis: str) -> np.ndarray:
    """``exp(-i theta sigma_axis / 2)``; ``rotation(pi/2, 'x') |g> = (|g> - i|e>)/sqrt(2)``."""
    sig = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}[axis]
    return math.cos(theta / 2) * np.eye(2) - 1j * math.sin(theta / 2) * sig


@dataclass(frozen=True)
class DeviceParams:
    """Device constants in SI units; frequencies in rad/s."""

    omega_r: float = 2 * math.pi * 200e6
    omega_ge: float = 2 * math.pi * 10.8e9
    delta: float = 2 * math.pi * 4e9
    epsilon: float | None = None
    g: float = 2 * math.pi * 2e6
    i_p: float = 300e-9
    q_factor: float = 1e4
    t1_qubit: float = 10e-6
    temp_qubit: float = 0.050
    temp_ho: float = 0.015

    def __post_init__(self):
        for name in ("omega_r", "omega_ge", "delta", "g", "i_p", "q_factor", "t1_qubit", "temp_qubit", "temp_ho"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.delta > self.omega_ge:
            raise ConfigurationError("delta cannot exceed omega_ge")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", math.sqrt(self.omega_ge**2 - self.delta**2))
        else:
            if self.epsilon < 0:
                raise ConfigurationError("epsilon must be non-negative")
            ge = math.hypot(self.delta, self.epsilon)
            if abs(ge - self.omega_ge) > 1e-12 * self.omega_ge:
                raise ConfigurationError(
                    f"omega_ge={self.omega_ge!r} differs from sqrt(delta^2 + epsilon^2)={ge!r}"
                )

    @property
    def kappa(self) -> float:
        return self.omega_r / self.q_factor

    @property
    def n_ho(self) -> float:
        return thermal_occupation(self.omega_r, self.temp_ho)


@dataclass(frozen=True)
class LindbladRates:
    kappa_down: float = 0.0
    kappa_up: float = 0.0
    gamma_eg: float = 0.0
    gamma_ge: float = 0.0
    gamma_phi: float = 0.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ConfigurationError(f"{name} must be non-negative")

    @classmethod
    def from_device(cls, device: DeviceParams, gamma_phi: float = 0.0) -> LindbladRates:
        """Detailed-balance rates; pure dephasing is off unless ``gamma_phi`` is given."""
        n_ho = device.n_ho
        boltz = math.exp(-constants.hbar * device.omega_ge / (constants.k * device.temp_qubit))
        gamma_eg = 1.0 / (device.t1_qubit * (1.0 + boltz))
        return cls(
            kappa_down=device.kappa * (1 + n_ho),
            kappa_up=device.kappa * n_ho,
            gamma_eg=gamma_eg,
            gamma_ge=gamma_eg * boltz,
            gamma_phi=gamma_phi,
        )

    @property
    def is_zero(self) -> bool:
        return not any(self.__dict__.values())


class Pulse(NamedTuple):
    t_center: float
    width: float
    angle: float
    axis: str
    label: str


_AXIS_PHASE = {"x": 0.0, "y": -math.pi / 2}


@dataclass(frozen=True)
class PulseSchedule:
    """Ordered qubit rotations. ``width = 0`` marks an ideal instantaneous pulse.

    A finite pulse has constant amplitude ``A`` with ``A (delta / omega_ge) width = angle``
    and drive phase 0 for ``x``, ``-pi/2`` for ``y``.
    """

    pulses: tuple[Pulse, ...]
    t_end: float
    delta_over_ge: float = 1.0

    def __post_init__(self):
        times = [p.t_center for p in self.pulses]
        if times != sorted(times):
            raise ConfigurationError("pulses must be in time order")
        for p in self.pulses:
            if p.width < 0 or p.axis not in _AXIS_PHASE:
                raise ConfigurationError(f"bad pulse {p}")
        for a, b in zip(self.pulses[:-1], self.pulses[1:]):
            if a.t_center + a.width / 2 > b.t_center - b.width / 2 + 1e-18:
                raise ConfigurationError("pulses overlap")

    @property
    def ideal(self) -> bool:
        return all(p.width == 0 for p in self.pulses)

    def amplitude(self, p: Pulse) -> float:
        if p.width == 0:
            return math.inf
        return p.angle / (self.delta_over_ge * p.width)

    def rotation_angle(self, p: Pulse) -> float:
        """``int A (delta / omega_ge) dt`` over the pulse."""
        return p.angle if p.width == 0 else self.amplitude(p) * self.delta_over_ge * p.width

    def drive(self, t: float) -> tuple[float, float]:
        """Amplitude ``A(t)`` and phase ``phi(t)`` of the finite pulses at time ``t``."""
        for p in self.pulses:
            if p.width > 0 and abs(t - p.t_center) < p.width / 2:
                return self.amplitude(p), _AXIS_PHASE[p.axis]
        return 0.0, 0.0

    def pi_pulse_times(self) -> np.ndarray:
        return np.array([p.t_center for p in self.pulses if p.label == "pi_x"])

    def chi(self, t) -> np.ndarray:
        """Sign ``+1`` before the first pi pulse, flipping at each one."""
        flips = np.searchsorted(self.pi_pulse_times(), np.asarray(t, dtype=float), side="right")
        return 1.0 - 2.0 * (flips % 2)


def cpmg_schedule(timing: ProtocolTiming, width: float = 0.0, delta_over_ge: float = 1.0) -> PulseSchedule:
    """``(pi/2)_x - [(pi)_x]^N_p - (pi/2)_y`` over one block starting at ``t = 0``.

    Pi pulses are centred at odd multiples of half the pulse spacing. Finite
    pi/2 pulses last ``width / 2`` (same amplitude) and end at 0 / start at ``t_e``.
    """
    if width < 0 or width > timing.pulse_spacing / 2:
        raise ConfigurationError("pulse width must be in [0, pi / (2 omega_r)]")
    pulses = [Pulse(-width / 4, width / 2, math.pi / 2, "x", "pi2_x")]
    pulses += [Pulse(t, width, math.pi, "x", "pi_x") for t in timing.pulse_times()]
    pulses.append(Pulse(timing.t_e + width / 4, width / 2, math.pi / 2, "y", "pi2_y"))
    return PulseSchedule(tuple(pulses), timing.t_e, delta_over_ge)


def _hamiltonian(t, device, cfg, frame, chi, amp, ph, dw):
    ops = build_operators(cfg)
    a, adag = ops.a, ops.adag
    eye = np.eye(a.shape[0])
    rot = np.exp(1j * device.omega_r * t)
    if frame == "rotating":
        out = np.kron(SIGMA_Z, device.g * chi * (a * np.conj(rot) + adag * rot))
        if dw:
            out = out - 0.5 * chi * dw * np.kron(SIGMA_Z, eye)
        return out
    wge, eps, delta, g = device.omega_ge, device.epsilon, device.delta, device.g
    f = {
        "z": g * eps / wge * rot,
        "y": -g * delta / wge * rot * math.sin(wge * t),
        "x": -g * delta / wge * rot * math.cos(wge * t),
    }
    fc = {
        "z": -amp * eps / wge * math.cos(wge * t + ph),
        "y": amp / 2 * delta / wge * math.sin(2 * wge * t + ph),
        "x": amp / 2 * delta / wge * math.cos(2 * wge * t + ph),
    }
    fe = {"z": dw, "y": 0.0, "x": 0.0}
    if dw and eps > 0:
        fe["y"] = dw * delta / eps * math.sin(wge * t)
        fe["x"] = dw * delta / eps * math.cos(wge * t)
    sig = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}
    out = np.zeros((2 * a.shape[0],) * 2, dtype=complex)
    for i in "xyz":
        out += np.kron(sig[i], a * np.conj(f[i]) + adag * f[i] + (fc[i] - 0.5 * fe[i]) * eye)
    drive = amp / 2 * delta / wge * (math.cos(ph) * SIGMA_X - math.sin(ph) * SIGMA_Y)
    return out + np.kron(drive, eye)


def hamiltonian(
    t: float,
    device: DeviceParams,
    schedule: PulseSchedule,
    cfg: HilbertConfig,
    frame: str = "rotating",
    noise: NoiseTrajectory | None = None,
) -> np.ndarray:
    """Joint Hamiltonian at time ``t`` in rad/s.

    ``rotating``: ``g chi(t) (a e^{-i w_r t} + h.c.) sigma_z - chi(t) delta_omega(t) sigma_z / 2``.
    ``lab``: the full table, sum over ``i`` of
    ``(a f_i^* + a^dag f_i + f_ci - f_eps_i / 2) sigma_i`` plus the drive
    ``(A/2)(delta/omega_ge)(cos(phase) sigma_x - sin(phase) sigma_y)``.
    """
    if frame not in ("rotating", "lab"):
        raise ConfigurationError(f"unknown frame {frame!r}")
    dw = 0.0 if noise is None else float(noise(t)[0])
    amp, ph = schedule.drive(t)
    return _hamiltonian(t, device, cfg, frame, float(schedule.chi(t)), amp, ph, dw)


def dissipator(op: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``O rho O^dag - (O^dag O rho + rho O^dag O) / 2``."""
    op = np.asarray(op)
    rho = np.asarray(rho)
    if op.shape != rho.shape or op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ConfigurationError(f"dimension mismatch: operator {op.shape}, state {rho.shape}")
    od = op.conj().T
    ood = od @ op
    return op @ rho @ od - 0.5 * (ood @ rho + rho @ ood)


def _collapse_ops(rates: LindbladRates, cfg: HilbertConfig, swapped: bool = False) -> list[tuple[float, np.ndarray]]:
    ops = build_operators(cfg)
    eye_o = np.eye(ops.a.shape[0])
    eg, ge = (rates.gamma_ge, rates.gamma_eg) if swapped else (rates.gamma_eg, rates.gamma_ge)
    terms = [
        (rates.kappa_down, np.kron(np.eye(2), ops.a)),
        (rates.kappa_up, np.kron(np.eye(2), ops.adag)),
        (eg, np.kron(SIGMA_MINUS, eye_o)),
        (ge, np.kron(SIGMA_PLUS, eye_o)),
        (rates.gamma_phi, np.kron(SIGMA_Z, eye_o)),
    ]
    return [(k, o) for k, o in terms if k > 0]


def _dense_rhs(h: np.ndarray, rho: np.ndarray, collapse) -> np.ndarray:
    out = -1j * (h @ rho - rho @ h)
    for k, op in collapse:
        out += k * dissipator(op, rho)
    return out


class _BlockRHS:
    """Rotating-frame right-hand side on the ``(2, d, 2, d)`` view of the state.

    ``H = sigma_z (x) h`` with ``h`` tridiagonal, so every product is a shifted
    slice and one evaluation costs O(d^2).
    """

    def __init__(self, device: DeviceParams, rates: LindbladRates, dim: int):
        self.g = device.g
        self.w = device.omega_r
        self.sq = np.sqrt(np.arange(1, dim, dtype=float))
        n = np.arange(dim, dtype=float)
        up = np.append(n[1:], 0.0)  # diagonal of the truncated a a^dag
        self.anti_down = 0.5 * (n[:, None, None] + n[None, None, :])
        self.anti_up = 0.5 * (up[:, None, None] + up[None, None, :])
        self.jump = np.outer(self.sq, self.sq)[:, None, :]
        self.szl = np.array([1.0, -1.0])[:, None, None, None]
        self.szr = np.array([1.0, -1.0])[None, None, :, None]
        self.rates = rates

    def __call__(self, t: float, chi: float, dw: float, rho: np.ndarray) -> np.ndarray:
        sq, r = self.sq, self.rates
        c = self.g * chi * np.exp(-1j * self.w * t)
        cc = np.conj(c)
        # h rho along the left oscillator index, rho h along the right one
        h_rho = np.zeros_like(rho)
        h_rho[:, :-1] += c * sq[:, None, None] * rho[:, 1:]
        h_rho[:, 1:] += cc * sq[:, None, None] * rho[:, :-1]
        rho_h = np.zeros_like(rho)
        rho_h[..., 1:] += c * sq * rho[..., :-1]
        rho_h[..., :-1] += cc * sq * rho[..., 1:]
        out = -1j * (self.szl * h_rho - self.szr * rho_h)
        if dw:
            out += 0.5j * chi * dw * (self.szl - self.szr) * rho
        if r.kappa_down:
            out -= r.kappa_down * self.anti_down * rho
            out[:, :-1, :, :-1] += r.kappa_down * self.jump * rho[:, 1:, :, 1:]
        if r.kappa_up:
            out -= r.kappa_up * self.anti_up * rho
            out[:, 1:, :, 1:] += r.kappa_up * self.jump * rho[:, :-1, :, :-1]
        eg, ge = (r.gamma_eg, r.gamma_ge) if chi > 0 else (r.gamma_ge, r.gamma_eg)
        if eg:
            out[0, :, 0] += eg * rho[1, :, 1]
            out[1, :, 1] -= eg * rho[1, :, 1]
            out[0, :, 1] -= 0.5 * eg * rho[0, :, 1]
            out[1, :, 0] -= 0.5 * eg * rho[1, :, 0]
        if ge:
            out[1, :, 1] += ge * rho[0, :, 0]
            out[0, :, 0] -= ge * rho[0, :, 0]
            out[0, :, 1] -= 0.5 * ge * rho[0, :, 1]
            out[1, :, 0] -= 0.5 * ge * rho[1, :, 0]
        if r.gamma_phi:
            out[0, :, 1] -= 2 * r.gamma_phi * rho[0, :, 1]
            out[1, :, 0] -= 2 * r.gamma_phi * rho[1, :, 0]
        return out


def _rk4(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + dt / 2, y + dt / 2 * k1)
    k3 = f(t + dt / 2, y + dt / 2 * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def max_step(device: DeviceParams, frame: str) -> float:
    """Largest allowed step: 1/20 of the period of the fastest retained frequency."""
    omega = device.omega_r if frame == "rotating" else device.omega_ge
    return 2 * math.pi / omega / 20


def damping_bound(rates: LindbladRates, dim: int) -> float:
    """Largest decay rate of the dissipator on a ``dim``-level oscillator, 1/s."""
    return (
        rates.kappa_down * (dim - 1)
        + rates.kappa_up * dim
        + 0.5 * (rates.gamma_eg + rates.gamma_ge)
        + 2 * rates.gamma_phi
    )


def stable_step(device: DeviceParams, rates: LindbladRates, cfg: HilbertConfig, frame: str = "rotating") -> float:
    """:func:`max_step`, reduced when strong damping would make RK4 unstable."""
    bound = damping_bound(rates, cfg.dim)
    limit = max_step(device, frame)
    return limit if bound == 0 else min(limit, RK4_SAFE / bound)


@dataclass
class Evolution:
    times: np.ndarray
    states: list[np.ndarray]
    trace_drift: float
    min_eigenvalue: float
    steps: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _breakpoints(schedule: PulseSchedule, t0: float, t1: float) -> list[float]:
    pts = {t0, t1}
    for p in schedule.pulses:
        edges = [p.t_center] if p.width == 0 else [p.t_center - p.width / 2, p.t_center + p.width / 2]
        pts.update(x for x in edges if t0 < x < t1)
    return sorted(pts)


def evolve(
    rho0: np.ndarray,
    device: DeviceParams,
    schedule: PulseSchedule,
    rates: LindbladRates,
    cfg: HilbertConfig,
    dt: float,
    t_span: tuple[float, float],
    frame: str = "rotating",
    noise: NoiseTrajectory | None = None,
    record_every: int = 0,
    apply_pulses: bool = True,
    t_offset: float = 0.0,
    fast: bool = True,
) -> Evolution:
    """Fixed-step RK4 integration of the master equation over ``t_span``.

    The span is cut at pulse edges and each piece is covered by equal steps no
    longer than ``dt``; ``chi`` and the drive are constant on a piece.
    Zero-width pulses are applied as instantaneous rotations, those at the
    ends of the span only when ``apply_pulses``; in the rotating frame pi
    pulses only flip ``chi``. ``t_offset`` is added to the time seen by the
    oscillator phase and the noise, so blocks can be run in local time.
    With ``record_every = k`` every k-th step is stored, otherwise only the
    initial and final states.
    """
    if frame not in ("rotating", "lab"):
        raise ConfigurationError(f"unknown frame {frame!r}")
    dim = cfg.dim
    n_tot = 2 * dim
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (n_tot, n_tot):
        raise ConfigurationError(f"initial state must be {n_tot}x{n_tot}")
    limit = max_step(device, frame)
    if not 0 < dt <= limit * (1 + 1e-12):
        raise ConfigurationError(f"dt={dt:.3e} s violates the step contract (max {limit:.3e} s in the {frame} frame)")
    if dt * damping_bound(rates, dim) > RK4_LIMIT:
        raise ConfigurationError(
            f"dt={dt:.3e} s is unstable for these damping rates at dim={dim}; use stable_step() = "
            f"{stable_step(device, rates, cfg, frame):.3e} s"
        )
    t0, t1 = map(float, t_span)
    if t1 < t0:
        raise ConfigurationError("t_span must be increasing")
    if frame == "rotating" and not schedule.ideal:
        raise ConfigurationError("the rotating frame uses ideal pulses only")
    tr0 = np.trace(rho0).real

    use_blocks = fast and frame == "rotating"
    block = _BlockRHS(device, rates, dim) if use_blocks else None
    coll = {1.0: _collapse_ops(rates, cfg)}
    coll[-1.0] = _collapse_ops(rates, cfg, swapped=True) if frame == "rotating" else coll[1.0]

    def rhs_factory(chi, amp, ph):
        def rhs(t, rho):
            tt = t + t_offset
            dw = 0.0 if noise is None else float(noise(tt)[0])
            if use_blocks:
                return block(tt, chi, dw, rho.reshape(2, dim, 2, dim)).reshape(n_tot, n_tot)
            return _dense_rhs(_hamiltonian(tt, device, cfg, frame, chi, amp, ph, dw), rho, coll[chi])

        return rhs

    def kick(t, rho, edge):
        if edge and not apply_pulses:
            return rho
        for p in schedule.pulses:
            if p.width == 0 and p.t_center == t and not (frame == "rotating" and p.label == "pi_x"):
                u = np.kron(rotation(p.angle, p.axis), np.eye(dim))
                rho = u @ rho @ u.conj().T
        return rho

    pts = _breakpoints(schedule, t0, t1)
    rho = kick(t0, rho0.copy(), True)
    times, states = [t0], [rho.copy()]
    steps = 0
    for a, b in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (a + b)
        amp, ph = schedule.drive(mid)
        rhs = rhs_factory(float(schedule.chi(mid)), amp, ph)
        n = max(1, math.ceil((b - a) / dt - 1e-9))
        h = (b - a) / n
        for k in range(n):
            rho = _rk4(rhs, a + k * h, rho, h)
            steps += 1
            if record_every and steps % record_every == 0:
                times.append(a + (k + 1) * h)
                states.append(rho.copy())
        rho = kick(b, rho, b == t1)
    rho = 0.5 * (rho + rho.conj().T)
    if times[-1] != t1 or len(states) == 1:
        times.append(t1)
        states.append(rho.copy())
    else:
        states[-1] = rho.copy()
    drift = abs(np.trace(rho).real - tr0)
    lam_min = float(np.linalg.eigvalsh(rho).min())
    if drift > TRACE_TOL:
        raise NumericError(f"trace drifted by {drift:.3e} over the run")
    if lam_min < -POSITIVITY_TOL:
        raise NumericError(f"positivity lost: minimum eigenvalue {lam_min:.3e} at t={t1:.6g} s with dt={dt:.3e} s")
    return Evolution(np.array(times), states, drift, lam_min, steps)


def partial_trace_qubit(rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0] // 2
    r4 = rho.reshape(2, d, 2, d)
    return r4[0, :, 0, :] + r4[1, :, 1, :]


def qubit_block(rho: np.ndarray, q: int) -> np.ndarray:
    d = rho.shape[0] // 2
    return rho.reshape(2, d, 2, d)[q, :, q, :]


def run_block(
    rho_osc: np.ndarray,
    device: DeviceParams,
    timing: ProtocolTiming,
    rates: LindbladRates,
    cfg: HilbertConfig,
    dt: float | None = None,
    t_offset: float = 0.0,
    noise: NoiseTrajectory | None = None,
) -> np.ndarray:
    """One repetition up to the readout: joint state after the final ``(pi/2)_y``.

    The qubit starts in ``|g>``. For odd ``N_p`` the net product of pi pulses,
    ``-i sigma_x``, is applied before the final pulse.
    """
    schedule = cpmg_schedule(timing)
    dt = dt or stable_step(device, rates, cfg)
    eye = np.eye(cfg.dim)
    u_x = np.kron(rotation(math.pi / 2, "x"), eye)
    rho = u_x @ np.kron(np.diag([1.0, 0.0]).astype(complex), rho_osc) @ u_x.conj().T
    ev = evolve(rho, device, schedule, rates, cfg, dt, (0.0, timing.t_e), noise=noise,
                apply_pulses=False, t_offset=t_offset)
    rho = ev.final
    if timing.n_p % 2:
        u_c = np.kron(-1j * SIGMA_X, eye)
        rho = u_c @ rho @ u_c.conj().T
    u_y = np.kron(rotation(math.pi / 2, "y"), eye)
    return u_y @ rho @ u_y.conj().T


@dataclass
class DissipativeRun:
    """Per-step oscillator variance of ``I`` averaged over Born-sampled trajectories."""

    steps: np.ndarray
    mean_variance: np.ndarray
    stderr_variance: np.ndarray
    variances: np.ndarray
    results: np.ndarray
    initial_variance: float

    @property
    def min_variance(self) -> float:
        return float(self.mean_variance.min())


def _variance_i(rho: np.ndarray, cfg: HilbertConfig) -> float:
    ops = build_operators(cfg)
    m1 = np.trace(ops.I @ rho).real
    m2 = np.trace(ops.I @ ops.I @ rho).real
    return m2 - m1**2


def protocol_with_dissipation(
    s: int,
    device: DeviceParams | None = None,
    rates: LindbladRates | None = None,
    timing: ProtocolTiming | None = None,
    initial: InitialState | None = None,
    cfg: HilbertConfig | None = None,
    n_traj: int = 16,
    seed: int = 0,
    dt: float | None = None,
    noise_factory=None,
) -> DissipativeRun:
    """Repeat measure-and-reset ``s`` times with dissipation on during each block.

    Each trajectory samples the readout from the Born rule, keeps the
    conditioned oscillator state and resets the qubit to ``|g>``. Outcomes are
    labelled as in the Kraus convention, ``+1`` = excited, which the final
    ``-i sigma_x`` keeps valid for odd ``N_p``; a block that starts half an
    oscillator period out of phase measures ``-I`` and its label is flipped. ``noise_factory(index)`` may return a
    :class:`NoiseTrajectory` to add frequency noise to every block.
    """
    device = device or DeviceParams()
    rates = LindbladRates.from_device(device) if rates is None else rates
    timing = timing or ProtocolTiming(8, device.omega_r)
    if timing.omega_r != device.omega_r:
        raise ConfigurationError("timing and device disagree on omega_r")
    if initial is None:
        initial = InitialState.thermal(device.n_ho)
    cfg = cfg or HilbertConfig(60)
    if s < 1 or n_traj < 1:
        raise ConfigurationError("s and n_traj must be positive")
    rho_init = initial.prepare(cfg)
    if rho_init.ndim == 1:
        rho_init = projector(rho_init)
    var0 = _variance_i(rho_init, cfg)
    variances = np.empty((n_traj, s))
    results = np.empty((n_traj, s), dtype=np.int8)
    for k in range(n_traj):
        rng = stream(seed, k)
        noise = noise_factory(k) if noise_factory else None
        rho_osc = rho_init
        for j in range(s):
            t_off = j * timing.period
            joint = run_block(rho_osc, device, timing, rates, cfg, dt, t_off, noise)
            p_e = float(np.trace(qubit_block(joint, 1)).real)
            r = 1 if rng.random() < p_e else -1
            blk = qubit_block(joint, 1 if r > 0 else 0)
            p = p_e if r > 0 else 1 - p_e
            rho_osc = blk / p
            rho_osc = 0.5 * (rho_osc + rho_osc.conj().T)
            check_truncation(rho_osc, what=f"oscillator state (trajectory {k}, step {j + 1})")
            variances[k, j] = _variance_i(rho_osc, cfg)
            # a block starting half an oscillator period late measures -I
            results[k, j] = (1 if math.cos(device.omega_r * t_off) >= 0 else -1) * r
    mean = variances.mean(axis=0)
    err = variances.std(axis=0, ddof=1) / math.sqrt(n_traj) if n_traj > 1 else np.zeros(s)
    return DissipativeRun(np.arange(1, s + 1), mean, err, variances, results, var0)
