"""
C3 of the atom-surface potential U = -C3 / d^3 for a dielectric half-space.

    eps(i xi) = 1 + (2 / pi) * int_0^inf omega eps''(omega) / (omega^2 + xi^2) d omega
    C3 = hbar / (16 pi^2 eps0) * int_0^inf alpha(i xi) (eps(i xi) - 1) / (eps(i xi) + 1) d xi

with alpha in SI units (C m^2 / V).
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy.constants as sc
from scipy.integrate import trapezoid

from core.base import ConfigError, ConvergenceError, TableRangeError
from core.physics.atoms import TransitionTable, alpha_imaginary

logger = logging.getLogger(__name__)

PERMITTIVITY_COLUMNS = ["energy_eV", "eps1", "eps2"]
REQUIRED_SPAN_EV = (0.5, 6.0)
TAIL_LIMIT = 0.01
END_PIECE_LIMIT = 1e-6
XI_RANGE = (1e8, 1e22)
EV_TO_RAD_S = sc.e / sc.hbar

GAINP_EPS_STATIC = 9.5
GAINP_INDEX = 3.34
GAINP_INDEX_WAVELENGTH_NM = 780.0
GAINP_OSCILLATORS_EV = (3.2, 5.0)
GAINP_DAMPING = 0.1


@dataclass(frozen=True)
class PermittivityTable:
    energy_eV: np.ndarray
    eps1: np.ndarray
    eps2: np.ndarray
    provenance: str = "table"

    def __post_init__(self):
        if len(self.energy_eV) < 2 or np.any(np.diff(self.energy_eV) <= 0):
            raise ConfigError("permittivity energies must be strictly increasing")
        if self.energy_eV[0] > REQUIRED_SPAN_EV[0] or self.energy_eV[-1] < REQUIRED_SPAN_EV[1]:
            raise TableRangeError(f"permittivity table covers {self.energy_eV[0]:.3g}-{self.energy_eV[-1]:.3g} eV, "
                                  f"needs at least {REQUIRED_SPAN_EV[0]}-{REQUIRED_SPAN_EV[1]} eV")

    @property
    def omega(self) -> np.ndarray:
        return self.energy_eV * EV_TO_RAD_S


def load_permittivity_table(path: Union[str, Path]) -> PermittivityTable:
    path = Path(path)
    frame = pd.read_csv(path, comment="#", skipinitialspace=True)
    columns = [str(c).strip() for c in frame.columns]
    if columns != PERMITTIVITY_COLUMNS:
        raise ConfigError(f"{path.name}: columns must be {PERMITTIVITY_COLUMNS}, got {columns}")
    return PermittivityTable(energy_eV=frame["energy_eV"].to_numpy(float), eps1=frame["eps1"].to_numpy(float),
                             eps2=frame["eps2"].to_numpy(float), provenance=path.name)


def lorentz_table(strengths, centers_eV, damping: float, energy_eV: np.ndarray, provenance: str) -> PermittivityTable:
    """eps = 1 + sum S_j w_j^2 / (w_j^2 - w^2 - i gamma_j w), gamma_j = damping * w_j."""
    w = np.asarray(energy_eV, dtype=float)
    eps = np.ones_like(w, dtype=complex)
    for strength, center in zip(strengths, centers_eV):
        eps += strength * center ** 2 / (center ** 2 - w ** 2 - 1j * damping * center * w)
    return PermittivityTable(energy_eV=w, eps1=eps.real, eps2=eps.imag, provenance=provenance)


def gainp_oscillator_strengths() -> np.ndarray:
    """Strengths of the two GaInP oscillators fixed by eps(0) = 9.5 and n = 3.34 at 780 nm.

    Both oscillators sit above the 1.85 eV band edge, so sub-gap absorption
    is only the damping wing.
    """
    w_ref = sc.h * sc.c / (GAINP_INDEX_WAVELENGTH_NM * 1e-9) / sc.e
    rows = []
    for w in (0.0, w_ref):
        rows.append([(c ** 2 / (c ** 2 - w ** 2 - 1j * GAINP_DAMPING * c * w)).real for c in GAINP_OSCILLATORS_EV])
    rhs = [GAINP_EPS_STATIC - 1.0, GAINP_INDEX ** 2 - 1.0]
    return np.linalg.solve(np.array(rows), np.array(rhs))


def gainp_two_oscillator_table(points: int = 4000, energy_range: Tuple[float, float] = (0.5, 40.0)) -> PermittivityTable:
    """GaInP stand-in: two damped oscillators giving eps(0) = 9.5 and n = 3.34 at 780 nm."""
    energy = np.linspace(energy_range[0], energy_range[1], points)
    return lorentz_table(gainp_oscillator_strengths(), GAINP_OSCILLATORS_EV, GAINP_DAMPING, energy,
                         provenance="two-oscillator GaInP model")


def _tail_amplitude(table: PermittivityTable) -> float:
    """A in eps'' ~ A / omega^3, the median of eps'' omega^3 over the top half of the table."""
    omega = table.omega
    top = omega >= omega[-1] / 2.0
    return float(np.median(table.eps2[top] * omega[top] ** 3))


def _tail_integral(amplitude: float, w_max: float, xi: np.ndarray) -> np.ndarray:
    """int_{w_max}^inf omega (A / omega^3) / (omega^2 + xi^2) d omega."""
    x = xi / w_max
    small = x < 1e-3
    safe = np.where(small, 1.0, x)
    exact = (1.0 - np.arctan(safe) / safe) / (safe ** 2 * w_max ** 3)
    series = (1.0 / 3.0 - x ** 2 / 5.0) / w_max ** 3
    return amplitude * np.where(small, series, exact)


def eps_imaginary_axis(table: PermittivityTable, xi) -> np.ndarray:
    """eps(i xi) from eps'' by the Kramers-Kronig integral; xi in rad/s."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if np.any(xi <= 0):
        raise ValueError("xi must be positive")
    omega = table.omega
    integrand = omega[None, :] * table.eps2[None, :] / (omega[None, :] ** 2 + xi[:, None] ** 2)
    body = trapezoid(integrand, omega, axis=1)

    amplitude = max(_tail_amplitude(table), 0.0)
    w_max = omega[-1]
    tail = _tail_integral(amplitude, w_max, xi)
    total = body + tail
    inside = xi <= w_max
    if np.any(inside) and np.any(tail[inside] > TAIL_LIMIT * total[inside]):
        raise TableRangeError("permittivity table ends too early: high-energy tail exceeds 1% of the integral")
    return 1.0 + 2.0 / np.pi * total


@dataclass(frozen=True)
class CasimirCoefficient:
    c3_SI: float
    c3_spectroscopic: float
    quadrature_error: float
    source: str

    @classmethod
    def from_si(cls, c3_SI: float, quadrature_error: float, source: str) -> "CasimirCoefficient":
        return cls(c3_SI=c3_SI, c3_spectroscopic=c3_SI / sc.h * 1e18, quadrature_error=quadrature_error,
                   source=source)

    def to_dict(self) -> dict:
        return {"c3_Hz_um3": self.c3_spectroscopic, "c3_SI": self.c3_SI,
                "quadrature_error": self.quadrature_error, "source": self.source}


def reflection_ratio(table: Optional[PermittivityTable], xi: np.ndarray) -> np.ndarray:
    """(eps - 1) / (eps + 1) on the imaginary axis; 1 for a perfect conductor."""
    if table is None:
        return np.ones_like(xi)
    eps = eps_imaginary_axis(table, xi)
    return (eps - 1.0) / (eps + 1.0)


def compute_c3(table: Optional[PermittivityTable], atom_table: TransitionTable,
               xi_range: Tuple[float, float] = XI_RANGE, n_start: int = 64, n_max: int = 4096,
               rel_tol: float = 1e-4,
               polarizability_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> CasimirCoefficient:
    """C3 by log-grid trapezoid quadrature, doubling the nodes until stable.

    ``table=None`` is the perfect-conductor limit. Pieces outside xi_range are
    added analytically (alpha constant below, alpha ~ 1/xi^2 above) and must
    each stay below END_PIECE_LIMIT of the total.
    """
    alpha = polarizability_fn if polarizability_fn is not None else (lambda x: alpha_imaginary(atom_table, x))
    lo, hi = np.log(xi_range[0]), np.log(xi_range[1])
    prefactor = sc.hbar / (16.0 * np.pi ** 2 * sc.epsilon_0)

    def integral(n):
        u = np.linspace(lo, hi, n)
        xi = np.exp(u)
        f = alpha(xi) * reflection_ratio(table, xi)
        body = trapezoid(f * xi, u)
        below = f[0] * xi[0]
        above = f[-1] * xi[-1]
        return body + below + above, (below, above)

    n = n_start
    value, ends = integral(n)
    change = np.inf
    while n < n_max:
        n *= 2
        refined, ends = integral(n)
        change = abs(refined - value) / abs(refined)
        value = refined
        logger.debug("C3 quadrature with %d nodes: change %.2e", n, change)
        if change < rel_tol:
            break
    if change > 0.01:
        raise ConvergenceError(f"C3 quadrature still changes by {change:.2%} at {n} nodes")
    for side, bound, piece in zip(("below", "above"), xi_range, ends):
        if piece > END_PIECE_LIMIT * value:
            raise ConvergenceError(f"C3 integrand {side} xi={bound:.1e} rad/s carries {piece / value:.1e} of the total; "
                                   f"widen xi_range")

    source = "perfect conductor" if table is None else table.provenance
    result = CasimirCoefficient.from_si(prefactor * value, float(change), source)
    logger.info("C3 = %.4g Hz um^3 (%s)", result.c3_spectroscopic, source)
    return result
