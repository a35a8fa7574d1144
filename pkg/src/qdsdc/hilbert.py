"""Operator algebra on the four-configuration quantum-dot space.

Basis ordering is fixed everywhere in the package: G=0, X_H=1, X_V=2, B=3.
All operators are dense 4x4 complex arrays. Functions that act on density
matrices also accept stacks of shape (..., 4, 4).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

DIM = 4


class Label(IntEnum):
    G = 0
    X_H = 1
    X_V = 2
    B = 3


LABELS = tuple(Label)


def dyad(a: Label, b: Label) -> np.ndarray:
    """Return |a><b| as a 4x4 complex matrix."""
    op = np.zeros((DIM, DIM), dtype=complex)
    op[int(a), int(b)] = 1.0
    return op


def adjoint(op: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(op, -1, -2))


def lindblad_dissipator(sigma: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """2 s rho s^+ - s^+ s rho - rho s^+ s.

    The factor 2 sits inside the bracket and there is no global 1/2, so a
    channel multiplied by a rate gamma empties its source population at 2*gamma.
    """
    sd = adjoint(sigma)
    sds = sd @ sigma
    return 2.0 * sigma @ rho @ sd - sds @ rho - rho @ sds


def pure_dephasing_term(rho: np.ndarray, gamma_pure: float) -> np.ndarray:
    """Damp every coherence of ``rho`` at rate gamma_pure/2 (angular units).

    Equivalent to -(gamma_pure/2) * sum_{a != b} |a><a| rho |b><b|.
    """
    off = np.array(rho, dtype=complex, copy=True)
    idx = np.arange(DIM)
    off[..., idx, idx] = 0.0
    return -0.5 * gamma_pure * off


def hermitize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + adjoint(rho))


@dataclass
class PhysicalityReport:
    trace_deviation: float
    hermiticity_deviation: float
    min_eigenvalue: float
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        status = "ok" if self.ok else "; ".join(self.violations)
        return (f"trace dev {self.trace_deviation:.3e}, herm dev "
                f"{self.hermiticity_deviation:.3e}, min eig "
                f"{self.min_eigenvalue:.3e} [{status}]")


def assert_physical(rho: np.ndarray, tol_trace: float = 1e-8,
                    tol_herm: float = 1e-10,
                    tol_pos: float = 1e-8) -> PhysicalityReport:
    """Check trace, Hermiticity and positivity of a single density matrix.

    Never raises on a bad state; the caller decides what to do with the
    returned violation list.
    """
    rho = np.asarray(rho, dtype=complex)
    violations = []
    if not np.all(np.isfinite(rho)):
        return PhysicalityReport(np.inf, np.inf, -np.inf,
                                 ["non-finite entries"])
    trace_dev = abs(np.trace(rho) - 1.0)
    herm_dev = float(np.max(np.abs(rho - adjoint(rho))))
    min_eig = float(np.linalg.eigvalsh(hermitize(rho))[0])
    if trace_dev > tol_trace:
        violations.append(f"trace deviates from 1 by {trace_dev:.3e}")
    if herm_dev > tol_herm:
        violations.append(f"not Hermitian (max |rho - rho^+| = {herm_dev:.3e})")
    if min_eig < -tol_pos:
        violations.append(f"negative eigenvalue {min_eig:.3e}")
    return PhysicalityReport(float(trace_dev), herm_dev, min_eig, violations)


def emission_operator() -> np.ndarray:
    """sigma_V = |G><X_V| + |X_V><B|, the V-polarized QD emission operator."""
    return dyad(Label.G, Label.X_V) + dyad(Label.X_V, Label.B)
