"""
87Rb line data, angular-momentum algebra and dynamic polarizabilities.

Reduced dipoles follow the Wigner-Eckart convention with 3j symbols, so the
free-space rate of a J -> J' line is omega^3 |<J||d||J'>|^2 / (3 pi eps0 hbar c^3 (2J'+1)).
Hyperfine splittings are ignored inside the polarizabilities and kept only
for the level bookkeeping.
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.constants as sc
from sympy import Rational
from sympy.physics.wigner import wigner_6j

from core.base import ConfigError, DomainError, ResonanceError

logger = logging.getLogger(__name__)

TRANSITION_FORMAT = "transitions/v1"
TRANSITION_COLUMNS = ["label", "lambda_nm", "reduced_dipole_Cm", "gamma0_rad_s", "J", "Jp"]
RB87_NUCLEAR_SPIN = 1.5
RB87_MASS_KG = 1.443160648e-25
RESONANCE_GUARD = 10.0


@dataclass(frozen=True)
class Transition:
    label: str
    wavelength_nm: float
    reduced_dipole_Cm: float
    gamma0: float
    J: float
    Jp: float

    @property
    def omega(self) -> float:
        """Angular frequency in rad/s."""
        return 2.0 * np.pi * sc.c / (self.wavelength_nm * 1e-9)


@dataclass(frozen=True)
class TransitionTable:
    lines: Tuple[Transition, ...]
    nuclear_spin: float = RB87_NUCLEAR_SPIN
    source: str = "bundled"

    def __post_init__(self):
        for line in self.lines:
            if line.wavelength_nm <= 0 or line.gamma0 <= 0 or line.reduced_dipole_Cm <= 0:
                raise ConfigError(f"transition {line.label}: wavelength, rate and dipole must be > 0")
        if "D2" not in {line.label for line in self.lines}:
            raise ConfigError("transition table has no D2 entry")

    def line(self, label: str) -> Transition:
        for item in self.lines:
            if item.label == label:
                return item
        raise DomainError(f"no transition labelled {label!r}")

    @property
    def ground_J(self) -> float:
        return self.lines[0].J

    @property
    def hyperfine(self) -> Dict[str, List[float]]:
        """F levels of the ground state and of every excited manifold."""
        levels = {"ground": hyperfine_levels(self.ground_J, self.nuclear_spin)}
        for item in self.lines:
            levels[item.label] = hyperfine_levels(item.Jp, self.nuclear_spin)
        return levels


def hyperfine_levels(J: float, I: float) -> List[float]:
    start = abs(J - I)
    return [start + i for i in range(int(round(J + I - start)) + 1)]


def load_transition_table(path: Union[str, Path], source: Optional[str] = None) -> TransitionTable:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline().strip()
    if first.lstrip("#").strip() != f"format: {TRANSITION_FORMAT}":
        raise ConfigError(f"{path.name}: expected header '# format: {TRANSITION_FORMAT}', got {first!r}")
    frame = pd.read_csv(path, comment="#", skipinitialspace=True)
    columns = [str(c).strip() for c in frame.columns]
    if columns != TRANSITION_COLUMNS:
        unknown = sorted(set(columns) - set(TRANSITION_COLUMNS))
        missing = sorted(set(TRANSITION_COLUMNS) - set(columns))
        raise ConfigError(f"{path.name}: columns must be {TRANSITION_COLUMNS} "
                          f"(unknown {unknown}, missing {missing})")
    lines = tuple(
        Transition(label=str(row.label).strip(), wavelength_nm=float(row.lambda_nm),
                   reduced_dipole_Cm=float(row.reduced_dipole_Cm), gamma0=float(row.gamma0_rad_s),
                   J=float(row.J), Jp=float(row.Jp))
        for row in frame.itertuples(index=False)
    )
    return TransitionTable(lines=lines, source=source or path.name)


# ---------------------------------------------------------------------------
# angular momentum

def _doubled(value: float, name: str) -> int:
    doubled = round(2.0 * float(value))
    if abs(2.0 * float(value) - doubled) > 1e-9:
        raise DomainError(f"{name}={value} is not a half-integer")
    return int(doubled)


def _half(doubled: int) -> int:
    return doubled // 2


def wigner3j(j1, j2, j3, m1, m2, m3) -> float:
    """Wigner 3j symbol from the Racah formula in exact rational arithmetic."""
    tj = [_doubled(j, "j") for j in (j1, j2, j3)]
    tm = [_doubled(m, "m") for m in (m1, m2, m3)]
    for j, m in zip(tj, tm):
        if j < 0:
            raise DomainError("j must be non-negative")
        if (j + m) % 2:
            raise DomainError("j - m must be an integer")
    if any(abs(m) > j for j, m in zip(tj, tm)) or sum(tm) != 0:
        return 0.0
    a, b, c = tj
    if (a + b + c) % 2 or c > a + b or c < abs(a - b):
        return 0.0

    A, B, C = (_half(x) for x in (a + b - c, a - b + c, -a + b + c))
    fact = math.factorial
    triangle = Fraction(fact(A) * fact(B) * fact(C), fact(_half(a + b + c) + 1))
    squared = triangle
    for j, m in zip(tj, tm):
        squared *= fact(_half(j + m)) * fact(_half(j - m))

    k_min = max(0, _half(b - c - tm[0]), _half(a - c + tm[1]))
    k_max = min(A, _half(a - tm[0]), _half(b + tm[1]))
    total = Fraction(0)
    for k in range(k_min, k_max + 1):
        denominator = (fact(k) * fact(_half(c - b + tm[0]) + k) * fact(_half(c - a - tm[1]) + k)
                       * fact(A - k) * fact(_half(a - tm[0]) - k) * fact(_half(b + tm[1]) - k))
        total += Fraction((-1) ** k, denominator)
    if total == 0:
        return 0.0
    phase = -1 if _half(a - b - tm[2]) % 2 else 1
    sign = phase * (1 if total > 0 else -1)
    return sign * math.sqrt(total * total * squared)


def wigner6j(j1, j2, j3, j4, j5, j6) -> float:
    args = [Rational(_doubled(j, "j"), 2) for j in (j1, j2, j3, j4, j5, j6)]
    return float(wigner_6j(*args))


def clebsch_gordan_factor(F, mF, q, Fp) -> float:
    """<F mF; 1 q | F' mF+q>, normalized so the cycling channel has |C| = 1."""
    if q not in (-1, 0, 1):
        raise DomainError(f"q must be -1, 0 or +1 (got {q})")
    mFp = mF + q
    if abs(mFp) > Fp or abs(mF) > F:
        return 0.0
    phase = -1 if int(round(F - 1 + mF + q)) % 2 else 1
    return phase * math.sqrt(2 * Fp + 1) * wigner3j(F, 1, Fp, mF, q, -mFp)


def hyperfine_strength(F, Fp, J=0.5, Jp=1.5, I=RB87_NUCLEAR_SPIN) -> float:
    """Relative strength S_FF' of F -> F' within a J -> J' line; sums to 1 over F'."""
    return (2 * Fp + 1) * (2 * J + 1) * wigner6j(J, Jp, 1, Fp, F, I) ** 2


def channel_fraction(F, mF, q, Fp, J=0.5, Jp=1.5, I=RB87_NUCLEAR_SPIN) -> float:
    """Share of the J -> J' line strength carried by |F mF> -> |F' mF+q>."""
    c = clebsch_gordan_factor(F, mF, q, Fp)
    return hyperfine_strength(F, Fp, J, Jp, I) * (2 * F + 1) / (2 * Fp + 1) * c * c


def channel_fractions(F, mF, J=0.5, Jp=1.5, I=RB87_NUCLEAR_SPIN) -> Dict[Tuple[int, float], float]:
    """{(q, F'): fraction} over every allowed channel; the values sum to one."""
    fractions = {}
    for Fp in hyperfine_levels(Jp, I):
        for q in (-1, 0, 1):
            value = channel_fraction(F, mF, q, Fp, J, Jp, I)
            if value > 0:
                fractions[(q, Fp)] = value
    return fractions


def channel_strength(F, mF, q, Fp, J=0.5, Jp=1.5, I=RB87_NUCLEAR_SPIN) -> float:
    """Channel oscillator strength relative to the cycling transition (which gives 1)."""
    return channel_fraction(F, mF, q, Fp, J, Jp, I) * (2 * Jp + 1) / (2 * J + 1)


# ---------------------------------------------------------------------------
# polarizabilities

@dataclass(frozen=True)
class Polarizability:
    alpha_s: float
    alpha_v: float
    omega: complex


def _denominators(table: TransitionTable, omega) -> Tuple[np.ndarray, bool]:
    omega = complex(omega)
    imaginary = omega.real == 0.0 and omega.imag != 0.0
    if imaginary:
        w2 = -omega.imag ** 2
    else:
        if omega.imag != 0.0:
            raise DomainError("frequency must be real or purely imaginary")
        for line in table.lines:
            if abs(abs(omega.real) - line.omega) < RESONANCE_GUARD * line.gamma0:
                raise ResonanceError(f"{omega.real:.6e} rad/s is within {RESONANCE_GUARD:g} linewidths "
                                     f"of {line.label}")
        w2 = omega.real ** 2
    return np.array([line.omega ** 2 - w2 for line in table.lines]), imaginary


def scalar_weight(line: Transition) -> float:
    return 2.0 * line.omega * line.reduced_dipole_Cm ** 2 / (3.0 * sc.hbar * (2.0 * line.J + 1.0))


def vector_weight(line: Transition) -> float:
    J, Jp = line.J, line.Jp
    sign = -1.0 if int(round(J + Jp + 1)) % 2 else 1.0
    return (sign * math.sqrt(6.0 * J * (2.0 * J + 1.0) / (J + 1.0)) * wigner6j(1, 1, 1, J, J, Jp)
            * line.reduced_dipole_Cm ** 2 * 2.0 / sc.hbar)


def hyperfine_vector_factor(F, J=0.5, I=RB87_NUCLEAR_SPIN) -> float:
    """alpha_v^F / alpha_v^J for the ground hyperfine level F.

    Projection of J onto F, so a stretched state sees the fine-structure shift.
    """
    if F == 0:
        return 0.0
    return (F / J) * (F * (F + 1) + J * (J + 1) - I * (I + 1)) / (2.0 * F * (F + 1))


def polarizability(table: TransitionTable, omega, F: Optional[float] = None) -> Polarizability:
    """Ground-state alpha_s, alpha_v (C m^2 / V) at real omega or at omega = i*xi.

    alpha_v refers to the fine-structure level unless F is given.
    """
    denominators, imaginary = _denominators(table, omega)
    alpha_s = float(sum(scalar_weight(line) / d for line, d in zip(table.lines, denominators)))
    alpha_v = 0.0
    if not imaginary:
        w = complex(omega).real
        alpha_v = float(sum(vector_weight(line) * w / d for line, d in zip(table.lines, denominators)))
        if F is not None:
            alpha_v *= hyperfine_vector_factor(F, table.ground_J, table.nuclear_spin)
    return Polarizability(alpha_s=alpha_s, alpha_v=alpha_v, omega=complex(omega))


def alpha_imaginary(table: TransitionTable, xi: Sequence[float]) -> np.ndarray:
    """alpha_s(i xi) on an array of xi (rad/s)."""
    xi = np.asarray(xi, dtype=float)
    total = np.zeros_like(xi)
    for line in table.lines:
        total += scalar_weight(line) / (line.omega ** 2 + xi ** 2)
    return total


def free_space_rate(line: Transition) -> float:
    """Gamma_0 from the reduced dipole, rad/s."""
    return (line.omega ** 3 * line.reduced_dipole_Cm ** 2
            / (3.0 * np.pi * sc.epsilon_0 * sc.hbar * sc.c ** 3 * (2.0 * line.Jp + 1.0)))
