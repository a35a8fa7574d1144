"""Bias-dependent level scheme, Gaussian laser pulses and the QD Hamiltonian.

Units: level energies and laser photon energies in meV, Rabi energies and
dissipation rates in ueV, time in ps. The Hamiltonian is returned in ueV;
rates are divided by HBAR once, when the Liouvillian is assembled.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field, replace

import numpy as np

from .hilbert import DIM, Label

HBAR = 658.2119569  # ueV ps


class BiasRangeError(ValueError):
    pass


@dataclass(frozen=True)
class StarkModel:
    """Quadratic-at-most Stark tuning of the X and XX emission lines.

    Both lines are polynomials in (V - v_ref). The constant terms are pinned
    by the two-photon anchor: E_X + E_XX = 2 * e_tpe at v_ref, split by the
    biexciton binding energy. The default slopes are illustrative values,
    not fitted to data.
    """

    v_ref: float = -0.12  # V
    e_tpe: float = 1341.17  # meV
    binding: float = 4.0  # meV, E_X - E_XX at v_ref
    x_slope: float = -0.7  # meV/V
    xx_slope: float = -1.3  # meV/V
    x_curvature: float = 0.0  # meV/V^2
    xx_curvature: float = 0.0  # meV/V^2
    v_min: float = -1.32
    v_max: float = 1.08

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")
        if self.binding >= 2 * self.e_tpe:
            raise ValueError("binding energy too large for the anchor")

    @property
    def x_coeffs(self) -> tuple[float, float, float]:
        return (self.e_tpe + 0.5 * self.binding, self.x_slope, self.x_curvature)

    @property
    def xx_coeffs(self) -> tuple[float, float, float]:
        return (self.e_tpe - 0.5 * self.binding, self.xx_slope,
                self.xx_curvature)

    def _check(self, bias: float) -> float:
        if not (self.v_min - 1e-12 <= bias <= self.v_max + 1e-12):
            raise BiasRangeError(
                f"bias {bias:+.4f} V outside the Stark model's valid range "
                f"[{self.v_min:+.4f}, {self.v_max:+.4f}] V")
        return bias - self.v_ref

    def e_x(self, bias: float) -> float:
        u = self._check(bias)
        c0, c1, c2 = self.x_coeffs
        return c0 + u * (c1 + u * c2)

    def e_xx(self, bias: float) -> float:
        u = self._check(bias)
        c0, c1, c2 = self.xx_coeffs
        return c0 + u * (c1 + u * c2)

    def e_b(self, bias: float) -> float:
        return self.e_x(bias) + self.e_xx(bias)

    def slope_x(self, bias: float) -> float:
        return self.x_slope + 2 * self.x_curvature * self._check(bias)

    def slope_xx(self, bias: float) -> float:
        return self.xx_slope + 2 * self.xx_curvature * self._check(bias)

    def slope_b(self, bias: float) -> float:
        return self.slope_x(bias) + self.slope_xx(bias)

    def resonance_bias(self, line: str, energy: float) -> float:
        """Bias at which the X (or XX) line sits at ``energy`` (linear part only
        when the curvature vanishes, nearest root otherwise)."""
        c0, c1, c2 = self.x_coeffs if line == "X" else self.xx_coeffs
        if c2 == 0.0:
            return self.v_ref + (energy - c0) / c1
        roots = np.roots([c2, c1, c0 - energy])
        roots = roots[np.isreal(roots)].real
        if roots.size == 0:
            raise ValueError(f"{line} line never reaches {energy} meV")
        return self.v_ref + roots[np.argmin(np.abs(roots))]


@dataclass(frozen=True)
class LevelEnergies:
    """Configuration energies above the ground state, meV."""

    G: float
    H: float
    V: float
    B: float

    def as_array(self) -> np.ndarray:
        return np.array([self.G, self.H, self.V, self.B])


@dataclass(frozen=True)
class PulseSpec:
    amplitude: float  # peak Rabi energy Omega0, ueV
    center: float  # t0, ps
    width: float  # Sigma, ps
    energy: float  # photon energy hbar*omega, meV
    polarization: str  # "H" or "V"

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError(f"pulse width must be positive, got {self.width}")
        if self.amplitude < 0:
            raise ValueError("pulse amplitude must be non-negative")
        if self.polarization not in ("H", "V"):
            raise ValueError(f"polarization must be H or V, "
                             f"got {self.polarization!r}")

    def envelope(self, t):
        return np.exp(-(np.asarray(t) - self.center) ** 2
                      / (2.0 * self.width ** 2))


@dataclass(frozen=True)
class DissipatorRates:
    gamma_pure: float = 4.0  # ueV
    gamma_rad: float = 4.0  # ueV
    p_incoh: float = 4.0  # ueV

    def __post_init__(self):
        for name in ("gamma_pure", "gamma_rad", "p_incoh"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def default_tpe_pulse(stark: StarkModel | None = None) -> PulseSpec:
    stark = stark or StarkModel()
    return PulseSpec(288.7, 200.0, 100.0, stark.e_tpe, "H")


def default_control_pulse(energy: float) -> PulseSpec:
    return PulseSpec(103.1, 300.0, 100.0, energy, "V")


@dataclass(frozen=True)
class DeviceModel:
    """Everything needed to build the generator at one bias voltage."""

    stark: StarkModel = field(default_factory=StarkModel)
    bias: float = -0.12  # V
    fss: float = 0.0  # ueV, E_H - E_V
    rates: DissipatorRates = field(default_factory=DissipatorRates)
    tpe: PulseSpec = field(default_factory=default_tpe_pulse)
    control: PulseSpec = field(
        default_factory=lambda: default_control_pulse(StarkModel().e_x(0.2)))

    def __post_init__(self):
        if self.tpe.polarization != "H":
            raise ValueError("the TPE pulse must be H-polarized")
        if self.control.polarization != "V":
            raise ValueError("the control pulse must be V-polarized")

    def at_bias(self, bias: float) -> "DeviceModel":
        return replace(self, bias=bias)

    @property
    def pulses(self) -> tuple[PulseSpec, PulseSpec]:
        return (self.tpe, self.control)


@dataclass(frozen=True)
class Frame:
    """Rotating frame at photon energy ``energy`` (meV); 0 is the lab frame.

    The frame rotates |X_H>, |X_V> at omega and |B> at 2*omega.
    """

    energy: float = 0.0

    @classmethod
    def lab(cls) -> "Frame":
        return cls(0.0)

    @property
    def is_lab(self) -> bool:
        return self.energy == 0.0

    @property
    def omega(self) -> float:
        return self.energy * 1e3 / HBAR

    def __str__(self) -> str:
        return "lab" if self.is_lab else f"rotating@{self.energy:.6f}meV"


def default_frame(m: DeviceModel) -> Frame:
    return Frame(m.tpe.energy)


def level_energies(m: DeviceModel, bias: float | None = None) -> LevelEnergies:
    bias = m.bias if bias is None else bias
    e_v = m.stark.e_x(bias)
    e_b = m.stark.e_b(bias)
    return LevelEnergies(0.0, e_v + m.fss * 1e-3, e_v, e_b)


def pulse_amplitude(p: PulseSpec, t):
    """(Omega0/hbar) exp(-(t-t0)^2/(2 Sigma^2) + i omega t), in rad/ps."""
    t = np.asarray(t, dtype=float)
    omega = p.energy * 1e3 / HBAR
    return (p.amplitude / HBAR) * p.envelope(t) * np.exp(1j * omega * t)


_EXCITATIONS = np.array([0, 1, 1, 2])


def frame_diagonal(m: DeviceModel, frame: Frame) -> np.ndarray:
    """Diagonal of H0 in the frame, ueV."""
    lv = level_energies(m)
    return (lv.as_array() - _EXCITATIONS * frame.energy) * 1e3


def hamiltonian(m: DeviceModel, t: float, frame: Frame,
                diagonal: np.ndarray | None = None) -> np.ndarray:
    """H0 + H_int at time t in ``frame``, ueV.

    Laser i enters as hbar*Omega_i(t) on |G><X_i| and |X_i><B| (plus h.c.).
    In a rotating frame the carrier is reduced to exp(i(omega_i - omega_f)t);
    the phase is built from the energy difference so no large carrier is
    ever evaluated.
    """
    h = np.zeros((DIM, DIM), dtype=complex)
    diag = frame_diagonal(m, frame) if diagonal is None else diagonal
    h.flat[:: DIM + 1] = diag
    for p in m.pulses:
        if p.amplitude == 0.0:
            continue
        residual = (p.energy - frame.energy) * 1e3 / HBAR
        arg = -0.5 * ((t - p.center) / p.width) ** 2
        c = p.amplitude * cmath.exp(complex(arg, residual * t))
        x = Label.X_H if p.polarization == "H" else Label.X_V
        h[Label.G, x] += c
        h[x, Label.B] += c
        h[x, Label.G] += c.conjugate()
        h[Label.B, x] += c.conjugate()
    return h


def ac_stark_scale(m: DeviceModel, t: float | None = None) -> float:
    """Summed two-level light shifts of |G> and |B>, ueV.

    Every laser-driven transition touching G or B contributes
    (sqrt(detuning^2 + 4 Omega^2) - |detuning|)/2 with Omega the envelope
    value at ``t`` (default: the control pulse centre). This bounds the
    light-induced displacement of the B->G energy difference.
    """
    t = m.control.center if t is None else t
    lv = level_energies(m)
    total = 0.0
    for p in m.pulses:
        omega = p.amplitude * float(p.envelope(t))
        if omega == 0.0:
            continue
        e_x = lv.H if p.polarization == "H" else lv.V
        for gap in (e_x - lv.G, lv.B - e_x):
            det = (gap - p.energy) * 1e3
            total += 0.5 * (np.hypot(det, 2 * omega) - abs(det))
    return total
