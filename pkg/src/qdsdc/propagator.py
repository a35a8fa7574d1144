"""Master-equation time stepping: fixed-step RK4 and a matrix-exponential oracle."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .hilbert import (DIM, Label, PhysicalityReport, assert_physical, dyad,
                      hermitize, lindblad_dissipator, pure_dephasing_term)
from .model import HBAR, DeviceModel, Frame, frame_diagonal, hamiltonian

log = logging.getLogger(__name__)

TRACE_RENORM_THRESHOLD = 1e-12


class PropagationError(RuntimeError):
    def __init__(self, step: int, t: float, report: PhysicalityReport):
        super().__init__(f"unphysical state at step {step} (t = {t:.4f} ps): "
                         f"{report}")
        self.step = step
        self.t = t
        self.report = report


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("time step must be positive")
        n = (self.t_end - self.t_start) / self.dt
        if n < 0 or abs(n - round(n)) > 1e-9:
            raise ValueError(f"({self.t_end} - {self.t_start}) / {self.dt} "
                             f"is not a whole number of steps")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_steps + 1)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n, 4, 4)
    frame: Frame

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def populations(self) -> np.ndarray:
        return np.real(np.diagonal(self.states, axis1=1, axis2=2))

    def at(self, t: float) -> np.ndarray:
        i = int(round((t - self.times[0]) / self.dt))
        if not 0 <= i < len(self.times) or abs(self.times[i] - t) > 1e-9:
            raise KeyError(f"t = {t} ps is not a trajectory sample")
        return self.states[i]


def _radiative_channels() -> list[np.ndarray]:
    return [dyad(Label.G, Label.X_H), dyad(Label.G, Label.X_V),
            dyad(Label.X_H, Label.B), dyad(Label.X_V, Label.B)]


class Generator:
    """Time-dependent Liouvillian of one device model in one frame.

    Acts on single matrices or stacks (..., 4, 4). The time-independent
    dissipative part (dephasing, radiative channels, incoherent pump) is
    tabulated once by applying the operator-form terms to the 16 basis
    dyads; each call then costs one commutator and one 16x16 product.
    """

    def __init__(self, m: DeviceModel, frame: Frame):
        self.model = m
        self.frame = frame
        self._diag = frame_diagonal(m, frame)
        self.gamma_pure = m.rates.gamma_pure / HBAR
        self.gamma_rad = m.rates.gamma_rad / HBAR
        self.p_incoh = m.rates.p_incoh / HBAR
        basis = np.eye(DIM * DIM, dtype=complex).reshape(-1, DIM, DIM)
        cols = self.dissipative(basis).reshape(DIM * DIM, DIM * DIM)
        # row j is vec(D(E_j)), so vec(D(rho)) = vec(rho) @ cols
        self._dissipator_t = cols

    def dissipative(self, rho: np.ndarray) -> np.ndarray:
        out = pure_dephasing_term(rho, self.gamma_pure)
        for s in _radiative_channels():
            out = out + self.gamma_rad * lindblad_dissipator(s, rho)
        pump = dyad(Label.B, Label.G)
        return out + self.p_incoh * lindblad_dissipator(pump, rho)

    def hamiltonian(self, t: float) -> np.ndarray:
        return hamiltonian(self.model, t, self.frame, diagonal=self._diag)

    def __call__(self, t: float, rho: np.ndarray) -> np.ndarray:
        h = self.hamiltonian(t) * (-1j / HBAR)
        flat = rho.reshape(rho.shape[:-2] + (DIM * DIM,)) @ self._dissipator_t
        return h @ rho - rho @ h + flat.reshape(rho.shape)


def liouvillian_apply(m: DeviceModel, t: float, rho: np.ndarray,
                      frame: Frame) -> np.ndarray:
    """d rho / dt at time t, ps^-1."""
    return Generator(m, frame)(t, rho)


def rk4_step(gen: Generator, t: float, rho: np.ndarray, dt: float, *,
             physical: bool) -> np.ndarray:
    """One classic RK4 step.

    ``physical=True`` treats ``rho`` as a state: the result is Hermitized and
    its trace renormalized when the drift exceeds TRACE_RENORM_THRESHOLD.
    ``physical=False`` is for conditioned (non-state) matrices and leaves the
    result untouched.
    """
    k1 = gen(t, rho)
    k2 = gen(t + 0.5 * dt, rho + 0.5 * dt * k1)
    k3 = gen(t + 0.5 * dt, rho + 0.5 * dt * k2)
    k4 = gen(t + dt, rho + dt * k3)
    out = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if physical:
        out = hermitize(out)
        tr = np.trace(out).real
        if abs(tr - 1.0) > TRACE_RENORM_THRESHOLD:
            log.debug("renormalizing trace drift %.3e at t=%.3f ps",
                      tr - 1.0, t + dt)
            out = out / tr
    return out


def rk4_step_matrix(gen: Generator, t: float, dt: float) -> np.ndarray:
    """The linear map of one non-physical RK4 step on row-major vec(rho).

    Obtained by running ``rk4_step`` on the 16 basis dyads, so
    vec(step(C)) = vec(C) @ M for any matrix C. Used to advance large stacks
    of conditioned matrices with a single product per step.
    """
    basis = np.eye(DIM * DIM, dtype=complex).reshape(-1, DIM, DIM)
    return rk4_step(gen, t, basis, dt, physical=False).reshape(DIM * DIM,
                                                                DIM * DIM)


def _check(rho: np.ndarray, step: int, t: float) -> None:
    report = assert_physical(rho)
    if not report.ok:
        raise PropagationError(step, t, report)


def propagate(m: DeviceModel, rho0: np.ndarray, grid: TimeGrid,
              frame: Frame) -> Trajectory:
    gen = Generator(m, frame)
    times = grid.times
    states = np.empty((len(times), DIM, DIM), dtype=complex)
    rho = np.array(rho0, dtype=complex)
    _check(rho, 0, times[0])
    states[0] = rho
    for k in range(grid.n_steps):
        rho = rk4_step(gen, times[k], rho, grid.dt, physical=True)
        _check(rho, k + 1, times[k + 1])
        states[k + 1] = rho
    return Trajectory(times, states, frame)


def _dissipative_superop(m: DeviceModel) -> np.ndarray:
    eye = np.eye(DIM)
    off = 1.0 - eye
    sup = np.diag(-0.5 * (m.rates.gamma_pure / HBAR) * off.reshape(-1))

    def diss(s):
        sds = s.conj().T @ s
        return (2.0 * np.kron(s, s.conj()) - np.kron(sds, eye)
                - np.kron(eye, sds.T))

    for s in _radiative_channels():
        sup = sup + (m.rates.gamma_rad / HBAR) * diss(s)
    return sup + (m.rates.p_incoh / HBAR) * diss(dyad(Label.B, Label.G))


def _commutator_superop(h: np.ndarray) -> np.ndarray:
    eye = np.eye(DIM)
    return (-1j / HBAR) * (np.kron(h, eye) - np.kron(eye, h.T))


def liouvillian_matrix(m: DeviceModel, t: float, frame: Frame) -> np.ndarray:
    """16x16 generator acting on row-major vec(rho).

    Built from Kronecker identities, vec(A rho B) = (A kron B^T) vec(rho),
    independently of the operator-form Generator.
    """
    return _commutator_superop(hamiltonian(m, t, frame)) + \
        _dissipative_superop(m)


def expm_oracle(m: DeviceModel, rho0: np.ndarray, grid: TimeGrid,
                frame: Frame, substeps: int = 1) -> Trajectory:
    """Piecewise-constant propagation, exp(L(t_mid) h) per interval.

    Each grid step is cut into ``substeps`` intervals of length h; the
    generator is frozen at each interval midpoint. The scheme is second order
    in h, so a comparison against RK4 at the same step needs substeps > 1.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    times = grid.times
    h = grid.dt / substeps
    static = _dissipative_superop(m)
    diag = frame_diagonal(m, frame)
    states = np.empty((len(times), DIM, DIM), dtype=complex)
    v = np.array(rho0, dtype=complex).reshape(-1)
    states[0] = v.reshape(DIM, DIM)
    _check(states[0], 0, times[0])
    for k in range(grid.n_steps):
        for j in range(substeps):
            t_mid = times[k] + (j + 0.5) * h
            lmat = _commutator_superop(
                hamiltonian(m, t_mid, frame, diagonal=diag)) + static
            v = expm(lmat * h) @ v
        states[k + 1] = v.reshape(DIM, DIM)
        _check(states[k + 1], k + 1, times[k + 1])
    return Trajectory(times, states, frame)


def max_frobenius_deviation(a: Trajectory, b: Trajectory) -> float:
    """Largest ||rho_a - rho_b||_F over the samples both trajectories share."""
    shared_a, shared_b = [], []
    tb = {round(t, 9): i for i, t in enumerate(b.times)}
    for i, t in enumerate(a.times):
        j = tb.get(round(t, 9))
        if j is not None:
            shared_a.append(i)
            shared_b.append(j)
    if not shared_a:
        raise ValueError("trajectories share no samples")
    diff = a.states[shared_a] - b.states[shared_b]
    return float(np.max(np.sqrt(np.sum(np.abs(diff) ** 2, axis=(1, 2)))))


def ground_state() -> np.ndarray:
    return dyad(Label.G, Label.G)


def steps_between(t0: float, t1: float, dt: float) -> int:
    n = (t1 - t0) / dt
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"{t1 - t0} ps is not a multiple of {dt} ps")
    return int(round(n))

