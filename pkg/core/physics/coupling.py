"""
Atom-photon coupling near the waveguide edge.

Public positions are (x, d, z) in nm with d the distance from the slab edge
into the vacuum gap (lattice y = -d). Rates are returned in units of the
free-space D2 rate Gamma_0:

    Gamma_1D / Gamma_0 = (3 / 4pi) a lambda0^2 n_g sigma_ch |e_q* . E|^2

for a field normalized to unit energy (integral of eps |E|^2 over one cell).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from core.base import DomainError, NoMinimumError, ZeroVgError
from core.physics import C_NM_THZ
from core.physics.atoms import TransitionTable, channel_strength, hyperfine_levels

logger = logging.getLogger(__name__)

MIN_VG = 1e-6
MASK_FLOOR = 1e-12
BASIN_SPAN_KT = 5.0

# spherical basis vectors e_q, quantization axis z
SPHERICAL = {
    1: -np.array([1.0, 1.0j, 0.0]) / np.sqrt(2.0),
    0: np.array([0.0, 0.0, 1.0], dtype=complex),
    -1: np.array([1.0, -1.0j, 0.0]) / np.sqrt(2.0),
}


@dataclass(frozen=True)
class Channel:
    F: float
    mF: float
    q: int
    Fp: float
    line: str = "D2"

    def __post_init__(self):
        if self.q not in (-1, 0, 1):
            raise DomainError(f"q must be -1, 0 or +1 (got {self.q})")


def spherical_projection(E: np.ndarray, q: int) -> np.ndarray:
    """|e_q* . E|^2 over the last axis."""
    return np.abs(E @ SPHERICAL[q].conj()) ** 2


def _channel_weight(channel: Channel, table: TransitionTable) -> Tuple[float, float]:
    line = table.line(channel.line)
    sigma = channel_strength(channel.F, channel.mF, channel.q, channel.Fp, line.J, line.Jp, table.nuclear_spin)
    return sigma, line.wavelength_nm


def _group_index(field) -> float:
    if abs(field.vg) < MIN_VG:
        raise ZeroVgError(f"group velocity {field.vg:.3e} c at the band edge")
    return 1.0 / abs(field.vg)


def purcell_prefactor(field, channel: Channel, table: TransitionTable, both_directions: bool = False) -> float:
    sigma, lambda0 = _channel_weight(channel, table)
    factor = 3.0 / (4.0 * np.pi) * field.a * lambda0 ** 2 * _group_index(field) * sigma
    return 2.0 * factor if both_directions else factor


def gamma1d(field, channel: Channel, pos, table: TransitionTable, both_directions: bool = False):
    """Gamma_1D / Gamma_0 of one channel at pos = (x, d, z) (arrays broadcast)."""
    x, d, z = pos
    prefactor = purcell_prefactor(field, channel, table, both_directions)
    E = field.normalized().evaluate(x, -np.asarray(d, dtype=float), z)
    value = prefactor * spherical_projection(E, channel.q)
    return float(value) if np.ndim(value) == 0 else value


def channel_rates(field, F: float, mF: float, pos, table: TransitionTable, line: str = "D2",
                  both_directions: bool = False) -> Dict[Tuple[int, float], float]:
    """Gamma_1D / Gamma_0 for every allowed (q, F') channel out of |F, mF>."""
    transition = table.line(line)
    rates = {}
    for Fp in hyperfine_levels(transition.Jp, table.nuclear_spin):
        for q in (-1, 0, 1):
            if abs(mF + q) > Fp:
                continue
            channel = Channel(F=F, mF=mF, q=q, Fp=Fp, line=line)
            if channel_strength(F, mF, q, Fp, transition.J, transition.Jp, table.nuclear_spin) == 0.0:
                continue
            rates[(q, Fp)] = gamma1d(field, channel, pos, table, both_directions)
    return rates


def sigma_ratio(field, pos, table: TransitionTable, F: float = 2, mF: float = 2) -> float:
    """Excitation of the strongest sigma+ channel over the sigma- channel into the same F'."""
    rates = channel_rates(field, F, mF, pos, table)
    plus = [(v, Fp) for (q, Fp), v in rates.items() if q == 1]
    if not plus:
        return 0.0
    value, Fp = max(plus)
    minus = rates.get((-1, Fp), 0.0)
    return value / minus if minus > 0 else np.inf


def beta_factor(gamma1d_over_gamma0, gamma_prime: float = 1.0):
    """beta = g / (g + Gamma'/Gamma_0)."""
    g = np.asarray(gamma1d_over_gamma0, dtype=float)
    if np.any(g < 0):
        raise DomainError("Gamma_1D must be non-negative")
    value = g / (g + gamma_prime)
    return float(value) if value.ndim == 0 else value


def ellipticity_vector(E: np.ndarray) -> np.ndarray:
    """C = Im(E* x E) / |E|^2 over the last axis; NaN where the field vanishes."""
    E = np.asarray(E, dtype=complex)
    intensity = np.sum(np.abs(E) ** 2, axis=-1)
    floor = MASK_FLOOR * (intensity.max() if intensity.size else 0.0)
    cross = np.imag(np.cross(E.conj(), E))
    with np.errstate(invalid="ignore", divide="ignore"):
        c = cross / intensity[..., None]
    c[intensity <= floor] = np.nan
    return c


def sigma_plus_fraction(E: np.ndarray) -> np.ndarray:
    E = np.asarray(E, dtype=complex)
    intensity = np.sum(np.abs(E) ** 2, axis=-1)
    floor = MASK_FLOOR * (intensity.max() if intensity.size else 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = spherical_projection(E, 1) / intensity
    return np.where(intensity > floor, f, np.nan)


@dataclass(frozen=True)
class EllipticityMap:
    xs: np.ndarray
    ds: np.ndarray
    zs: np.ndarray
    C_vec: np.ndarray
    f_sigma_plus: np.ndarray

    @property
    def Cz(self) -> np.ndarray:
        return self.C_vec[..., 2]


def ellipticity(field, xs, ds, zs) -> EllipticityMap:
    xs, ds, zs = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (xs, ds, zs))
    E = field.evaluate_grid(xs, -ds, zs)
    return EllipticityMap(xs=xs, ds=ds, zs=zs, C_vec=ellipticity_vector(E), f_sigma_plus=sigma_plus_fraction(E))


@dataclass(frozen=True)
class CouplingMap:
    xs: np.ndarray
    ds: np.ndarray
    zs: np.ndarray
    gamma1d_over_gamma0: np.ndarray
    beta: np.ndarray
    Cz: np.ndarray
    f_sigma_plus: np.ndarray
    channel: Channel

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.gamma1d_over_gamma0.shape

    def to_frame(self) -> pd.DataFrame:
        X, D, Z = np.meshgrid(self.xs, self.ds, self.zs, indexing="ij")
        return pd.DataFrame({
            "x_nm": X.ravel(),
            "y_nm": D.ravel(),
            "z_nm": Z.ravel(),
            "gamma1d_over_gamma0": self.gamma1d_over_gamma0.ravel(),
            "beta": self.beta.ravel(),
            "Cz": self.Cz.ravel(),
            "f_sigma_plus": self.f_sigma_plus.ravel(),
        })


def coupling_map(field, channel: Channel, xs, ds, zs, table: TransitionTable, gamma_prime: float = 1.0,
                 both_directions: bool = False, threads: int = 1) -> CouplingMap:
    """Purcell factor, beta and polarization on the (x, d, z) grid."""
    xs, ds, zs = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (xs, ds, zs))
    unit = field.normalized()
    prefactor = purcell_prefactor(unit, channel, table, both_directions)

    def work(x):
        return unit.evaluate_grid(np.array([x]), -ds, zs)[0]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        E = np.stack(list(pool.map(work, xs)))
    rate = prefactor * spherical_projection(E, channel.q)
    return CouplingMap(
        xs=xs, ds=ds, zs=zs, gamma1d_over_gamma0=rate, beta=beta_factor(rate, gamma_prime),
        Cz=ellipticity_vector(E)[..., 2], f_sigma_plus=sigma_plus_fraction(E), channel=channel,
    )


def periodic_labels(mask: np.ndarray) -> np.ndarray:
    """Connected regions of a 3D mask whose first and last x planes touch."""
    labels, count = ndimage.label(mask)
    left, right = labels[0].ravel(), labels[-1].ravel()
    joined = (left > 0) & (right > 0)
    graph = coo_matrix((np.ones(int(joined.sum())), (left[joined], right[joined])), shape=(count + 1, count + 1))
    _, merged = connected_components(graph, directed=False)
    return np.where(mask, merged[labels] + 1, 0)


def beta_thermal(potential, coupling: CouplingMap, T: float, mF: float = 0,
                 r_min: Optional[Tuple[float, float, float]] = None) -> float:
    """Boltzmann average of beta over the trap basin at temperature T (K).

    The basin is the connected region around the minimum (the grid point
    nearest r_min when given, else the lowest grid point) with
    U < U_min + 5 k_B T.
    """
    if T <= 0:
        raise DomainError("temperature must be positive")
    U = potential.total(mF)
    if U.shape != coupling.shape:
        raise DomainError(f"potential grid {U.shape} does not match coupling grid {coupling.shape}")
    if r_min is None:
        index = np.unravel_index(int(np.argmin(U)), U.shape)
    else:
        xs = coupling.xs
        period = xs[-1] + (xs[1] - xs[0]) if len(xs) > 1 else np.inf
        dx = np.abs(xs - r_min[0])
        index = (int(np.argmin(np.minimum(dx, period - dx))),
                 int(np.argmin(np.abs(coupling.ds - r_min[1]))),
                 int(np.argmin(np.abs(coupling.zs - r_min[2]))))
    if index[1] in (0, U.shape[1] - 1) or index[2] in (0, U.shape[2] - 1):
        raise NoMinimumError("potential minimum lies on the grid boundary")

    kT = T * 1e3  # mK
    excess = U - U[index]
    labels = periodic_labels(excess < BASIN_SPAN_KT * kT)
    basin = labels == labels[index]
    weights = np.where(basin, np.exp(-np.where(basin, excess, 0.0) / kT), 0.0)
    beta = np.nan_to_num(coupling.beta)
    return float(np.sum(weights * beta) / np.sum(weights))


def purcell_along_band(solver, bands, band: int, pos, channel: Channel, table: TransitionTable,
                       k_window: Optional[Tuple[float, float]] = None) -> pd.DataFrame:
    """Gamma_1D / Gamma_0 at a fixed atom position for every k-sample of a tracked band."""
    kk = bands.k_over_pi_a
    select = np.ones(len(kk), dtype=bool)
    if k_window is not None:
        select = (kk >= k_window[0] - 1e-12) & (kk <= k_window[1] + 1e-12)
    rows = []
    for ik in np.flatnonzero(select):
        sorted_band = int(bands.tracking[ik, band])
        try:
            field = solver.field(float(bands.k[ik]), sorted_band)
            rate = gamma1d(field, channel, pos, table)
        except ZeroVgError:
            logger.debug("skipping k/(pi/a)=%.4f: zero group velocity", kk[ik])
            continue
        nu = float(bands.freqs[ik, band])
        rows.append({
            "k_over_pi_a": float(kk[ik]),
            "freq_THz": nu,
            "wavelength_nm": C_NM_THZ / nu,
            "ng": 1.0 / abs(field.vg),
            "gamma1d_over_gamma0": rate,
            "beta": beta_factor(rate),
        })
    return pd.DataFrame(rows, columns=["k_over_pi_a", "freq_THz", "wavelength_nm", "ng",
                                       "gamma1d_over_gamma0", "beta"])


def thermal_coupling(potential, coupling: CouplingMap, depth_mK: float, fraction: float = 0.1,
                     mF: float = 0, r_min: Optional[Tuple[float, float, float]] = None) -> float:
    """beta averaged at a temperature equal to ``fraction`` of the trap depth."""
    return beta_thermal(potential, coupling, fraction * depth_mK * 1e-3, mF, r_min)
