"""
Supercell plane-wave eigensolver for the 2D effective-index model.

Only the in-plane-E polarization is solved, in the H_z formulation:

    sum_G' (k+G).(k+G') eta(G-G') h(G') = (omega/c)^2 h(G)

with eta the inverse of the permittivity Fourier matrix. Frequencies are
returned as linear frequency nu in THz; wavevectors are in rad/nm.
"""
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.optimize import brentq, linear_sum_assignment

from core.base import ConvergenceError, DegeneracyWarning, DomainError, NoGuidedBandError
from core.physics import C_NM_THZ
from core.physics.lattice import (
    DielectricMap, EpsFourier, StructureParams, build_structure, bulk_crystal,
    check_nyquist, fourier_coefficients,
)

logger = logging.getLogger(__name__)

TRACKING_THRESHOLD = 0.5
DEFAULT_K_SAMPLES = 64


def frequency_thz(eigenvalue):
    """(omega/c)^2 in nm^-2 -> linear frequency in THz."""
    return C_NM_THZ * np.sqrt(np.clip(eigenvalue, 0.0, None)) / (2.0 * np.pi)


@dataclass(frozen=True)
class ReciprocalBasis:
    g_vectors: np.ndarray
    m_indices: np.ndarray
    cutoff: float
    cell: Tuple[float, float]

    @property
    def size(self) -> int:
        return len(self.g_vectors)

    @staticmethod
    def orders(cell: Tuple[float, float], cutoff: float) -> Tuple[int, int]:
        return (int(np.floor(cutoff * cell[0] / (2.0 * np.pi))),
                int(np.floor(cutoff * cell[1] / (2.0 * np.pi))))

    @classmethod
    def circular(cls, cell: Tuple[float, float], cutoff: float) -> "ReciprocalBasis":
        """All G with |G| <= cutoff (rad/nm); closed under negation, contains G = 0."""
        mx_max, my_max = cls.orders(cell, cutoff)
        mx, my = np.meshgrid(np.arange(-mx_max, mx_max + 1), np.arange(-my_max, my_max + 1),
                             indexing="ij")
        m = np.stack([mx.ravel(), my.ravel()], axis=-1)
        g = 2.0 * np.pi * m / np.asarray(cell)[None, :]
        norm = np.hypot(g[:, 0], g[:, 1])
        keep = norm <= cutoff * (1.0 + 1e-12)
        m, g, norm = m[keep], g[keep], norm[keep]
        order = np.lexsort((m[:, 1], m[:, 0], np.round(norm, 12)))
        return cls(g_vectors=g[order], m_indices=m[order], cutoff=float(cutoff), cell=tuple(cell))

    @classmethod
    def for_map(cls, eps_map: DielectricMap, cutoff_2pi_over_a: float) -> "ReciprocalBasis":
        cutoff = cutoff_2pi_over_a * 2.0 * np.pi / eps_map.cell_vectors[0]
        check_nyquist(eps_map, cls.orders(eps_map.cell_vectors, cutoff))
        return cls.circular(eps_map.cell_vectors, cutoff)


def assemble_operator(k_vector, basis: ReciprocalBasis, fourier: EpsFourier) -> np.ndarray:
    kg = np.asarray(k_vector, dtype=float)[None, :] + basis.g_vectors
    dot = kg[:, 0][:, None] * kg[:, 0][None, :] + kg[:, 1][:, None] * kg[:, 1][None, :]
    return dot * fourier.eta


def _velocity_operator(k_vector, basis: ReciprocalBasis, fourier: EpsFourier) -> np.ndarray:
    kgx = k_vector[0] + basis.g_vectors[:, 0]
    return (kgx[:, None] + kgx[None, :]) * fourier.eta


def _solve_k(k_vector, basis: ReciprocalBasis, fourier: EpsFourier, n_bands: int):
    operator = assemble_operator(k_vector, basis, fourier)
    try:
        values, vectors = scipy.linalg.eigh(operator, subset_by_index=[0, n_bands - 1])
    except (np.linalg.LinAlgError, ValueError) as e:
        raise ConvergenceError(f"eigensolver failed at k={k_vector}: {e}") from e
    return np.clip(values, 0.0, None), vectors


def _hf_velocity(k_vector, basis, fourier, values, vectors) -> np.ndarray:
    """Hellmann-Feynman group velocity in units of c."""
    dm = _velocity_operator(np.asarray(k_vector, dtype=float), basis, fourier)
    slope = np.real(np.sum(vectors.conj() * (dm @ vectors), axis=0))
    root = np.sqrt(values)
    return np.divide(slope, 2.0 * root, out=np.zeros_like(slope), where=root > 0)


def _coefficient_field(eps_map: DielectricMap, basis: ReciprocalBasis, coefficients) -> np.ndarray:
    """Periodic part sum_G c_G exp(iG.(r - r0)) sampled on the map grid."""
    nx, ny = eps_map.grid_shape
    grid = np.zeros((nx, ny) + np.shape(coefficients)[1:], dtype=complex)
    m = basis.m_indices
    grid[m[:, 0] % nx, m[:, 1] % ny] = coefficients
    return np.fft.ifft2(grid, axes=(0, 1)) * (nx * ny)


def _edge_fractions(eps_map: DielectricMap, basis: ReciprocalBasis, vectors) -> np.ndarray:
    if eps_map.edge_window is None:
        return np.zeros(vectors.shape[1])
    intensity = np.abs(_coefficient_field(eps_map, basis, vectors)) ** 2
    ys = eps_map.y_coords()
    window = (ys >= eps_map.edge_window[0]) & (ys <= eps_map.edge_window[1])
    total = intensity.sum(axis=(0, 1))
    return intensity[:, window].sum(axis=(0, 1)) / total


@dataclass(frozen=True)
class BandSet:
    k: np.ndarray
    freqs: np.ndarray
    tracking: np.ndarray
    a: float
    vg: Optional[np.ndarray] = None
    edge_fraction: Optional[np.ndarray] = None

    @property
    def n_bands(self) -> int:
        return self.freqs.shape[1]

    @property
    def k_over_pi_a(self) -> np.ndarray:
        return self.k * self.a / np.pi

    def light_line(self) -> np.ndarray:
        return C_NM_THZ * np.abs(self.k) / (2.0 * np.pi)

    def sorted_index(self, band: int, k: float) -> int:
        ik = int(np.argmin(np.abs(self.k - k)))
        return int(self.tracking[ik, band])

    def to_frame(self) -> pd.DataFrame:
        rows = []
        vg = self.vg if self.vg is not None else np.full_like(self.freqs, np.nan)
        for ik, kk in enumerate(self.k_over_pi_a):
            for band in range(self.n_bands):
                speed = abs(vg[ik, band])
                rows.append({
                    "k_over_pi_a": kk,
                    "band_index": band,
                    "freq_THz": self.freqs[ik, band],
                    "vg_over_c": vg[ik, band],
                    "ng": 1.0 / speed if speed > 0 else np.inf,
                })
        return pd.DataFrame(rows, columns=["k_over_pi_a", "band_index", "freq_THz", "vg_over_c", "ng"])


def solve_bands(eps_map: DielectricMap, basis: ReciprocalBasis, k_list: Sequence[float], n_bands: int,
                fourier: Optional[EpsFourier] = None, threads: int = 1,
                threshold: float = TRACKING_THRESHOLD) -> BandSet:
    """Lowest n_bands per k (k along x, rad/nm), tracked across k by modal overlap."""
    if n_bands > basis.size:
        raise DomainError(f"n_bands={n_bands} exceeds the {basis.size} plane waves of the basis")
    fourier = fourier if fourier is not None else fourier_coefficients(eps_map, basis)
    ks = np.asarray(k_list, dtype=float)

    def work(kx):
        k_vector = np.array([kx, 0.0])
        values, vectors = _solve_k(k_vector, basis, fourier, n_bands)
        speed = _hf_velocity(k_vector, basis, fourier, values, vectors)
        edge = _edge_fractions(eps_map, basis, vectors)
        return values, vectors, speed, edge

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(work, ks))

    freqs = np.empty((len(ks), n_bands))
    velocity = np.empty_like(freqs)
    edge = np.empty_like(freqs)
    tracking = np.empty((len(ks), n_bands), dtype=int)
    previous = None
    ambiguous = 0
    for ik, (values, vectors, speed, fraction) in enumerate(results):
        if previous is None:
            perm = np.arange(n_bands)
        else:
            overlap = np.abs(previous.conj().T @ vectors)
            _, perm = linear_sum_assignment(-overlap)
            if np.any(overlap.max(axis=1) < threshold):
                ambiguous += 1
        tracking[ik] = perm
        freqs[ik] = frequency_thz(values[perm])
        velocity[ik] = speed[perm]
        edge[ik] = fraction[perm]
        previous = vectors[:, perm]

    if ambiguous:
        warnings.warn(f"band tracking ambiguous at {ambiguous} k-points", DegeneracyWarning)
    logger.info("solved %d k-points x %d bands with %d plane waves", len(ks), n_bands, basis.size)
    return BandSet(k=ks, freqs=freqs, tracking=tracking, a=eps_map.cell_vectors[0],
                   vg=velocity, edge_fraction=edge)


def bulk_gap(params: StructureParams, n_eff: float, cutoff_2pi_over_a: float, n_bands: int = 8,
             n_kx: int = 9, n_ky: int = 5, threads: int = 1) -> Optional[Tuple[float, float]]:
    """Widest complete gap (THz) of the unperturbed bulk crystal, or None."""
    cell = bulk_crystal(params, n_eff)
    basis = ReciprocalBasis.for_map(cell, cutoff_2pi_over_a)
    fourier = fourier_coefficients(cell, basis)
    kx = np.linspace(0.0, np.pi / cell.cell_vectors[0], n_kx)
    ky = np.linspace(0.0, np.pi / cell.cell_vectors[1], n_ky)
    points = [np.array([x, y]) for x in kx for y in ky]

    def work(k_vector):
        return frequency_thz(_solve_k(k_vector, basis, fourier, n_bands)[0])

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        freqs = np.array(list(pool.map(work, points)))
    tops, bottoms = freqs.max(axis=0), freqs.min(axis=0)
    best = None
    for n in range(n_bands - 1):
        if bottoms[n + 1] > tops[n]:
            gap = (float(tops[n]), float(bottoms[n + 1]))
            if best is None or gap[1] - gap[0] > best[1] - best[0]:
                best = gap
    return best


@dataclass(frozen=True)
class GuidedBand:
    band: int
    k_min: float
    k_max: float
    nu_min: float
    nu_max: float
    n_samples: int


def guided_mask(bands: BandSet, gap: Optional[Tuple[float, float]] = None,
                min_edge_fraction: float = 0.5) -> np.ndarray:
    mask = bands.freqs < bands.light_line()[:, None]
    if bands.edge_fraction is not None:
        mask &= bands.edge_fraction >= min_edge_fraction
    if gap is not None:
        mask &= (bands.freqs > gap[0]) & (bands.freqs < gap[1])
    return mask


def classify_guided_bands(bands: BandSet, gap: Optional[Tuple[float, float]],
                          min_edge_fraction: float = 0.5, min_samples: int = 3) -> List[GuidedBand]:
    """Bands lying inside the bulk gap, below the light line and localized at the edge."""
    mask = guided_mask(bands, gap, min_edge_fraction)
    guided = []
    for band in range(bands.n_bands):
        samples = np.flatnonzero(mask[:, band])
        if len(samples) < min_samples:
            continue
        guided.append(GuidedBand(
            band=band,
            k_min=float(bands.k_over_pi_a[samples].min()),
            k_max=float(bands.k_over_pi_a[samples].max()),
            nu_min=float(bands.freqs[samples, band].min()),
            nu_max=float(bands.freqs[samples, band].max()),
            n_samples=len(samples),
        ))
    return guided


def mode_at_frequency(bands: BandSet, nu: float, band: Optional[int] = None,
                      min_edge_fraction: float = 0.5) -> Tuple[int, float]:
    """(tracked band, k in rad/nm) where a guided band reaches frequency nu."""
    mask = guided_mask(bands, None, min_edge_fraction)
    candidates = [band] if band is not None else range(bands.n_bands)
    for b in candidates:
        curve = bands.freqs[:, b] - nu
        for ik in range(len(bands.k) - 1):
            if curve[ik] == 0.0 or curve[ik] * curve[ik + 1] < 0:
                if not (mask[ik, b] or mask[ik + 1, b]):
                    continue
                weight = curve[ik] / (curve[ik] - curve[ik + 1]) if curve[ik] != 0.0 else 0.0
                return b, float(bands.k[ik] + weight * (bands.k[ik + 1] - bands.k[ik]))
    raise NoGuidedBandError(f"no guided band reaches {nu:.3f} THz")


@dataclass(frozen=True)
class SlabProfile:
    n: float
    t: float
    lambda0: float
    n_eff: float
    k_in: float
    kappa: float
    z: np.ndarray = field(repr=False)
    f_z: np.ndarray = field(repr=False)

    def profile(self, z) -> np.ndarray:
        z = np.abs(np.asarray(z, dtype=float))
        half = self.t / 2.0
        inside = np.cos(self.k_in * np.minimum(z, half))
        outside = np.cos(self.k_in * half) * np.exp(-self.kappa * (z - half))
        return np.where(z <= half, inside, outside)

    @property
    def inside_weight(self) -> float:
        """Integral of f^2 over |z| < t/2."""
        return self.t / 2.0 + np.sin(self.k_in * self.t) / (2.0 * self.k_in)

    @property
    def outside_weight(self) -> float:
        return np.cos(self.k_in * self.t / 2.0) ** 2 / self.kappa

    @property
    def z_weight(self) -> float:
        return self.inside_weight + self.outside_weight


def slab_effective_index(n: float, t: float, lambda0: float, points: int = 401) -> SlabProfile:
    """Fundamental TE mode of a symmetric slab in vacuum."""
    if n <= 1 or t <= 0 or lambda0 <= 0:
        raise DomainError(f"slab needs n > 1, t > 0, lambda > 0 (got {n}, {t}, {lambda0})")
    k0 = 2.0 * np.pi / lambda0
    v = k0 * t / 2.0 * np.sqrt(n ** 2 - 1.0)

    def mismatch(u):
        return u * np.sin(u) - np.sqrt(max(v ** 2 - u ** 2, 0.0)) * np.cos(u)

    upper = min(v, np.pi / 2.0)
    u = brentq(mismatch, upper * 1e-12, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    k_in = 2.0 * u / t
    kappa = 2.0 * np.sqrt(max(v ** 2 - u ** 2, 0.0)) / t
    n_eff = np.sqrt(n ** 2 - (k_in / k0) ** 2)
    span = t / 2.0 + 6.0 / kappa
    z = np.linspace(-span, span, points)
    profile = SlabProfile(n=n, t=t, lambda0=lambda0, n_eff=float(n_eff), k_in=float(k_in),
                          kappa=float(kappa), z=z, f_z=np.empty(0))
    return replace(profile, f_z=profile.profile(z))


@dataclass(frozen=True)
class BlochMode:
    k: float
    band: int
    freq: float
    vg: float
    vg_hf: float
    coefficients: np.ndarray = field(repr=False)
    basis: ReciprocalBasis = field(repr=False)
    eps_map: DielectricMap = field(repr=False)
    E_inplane: np.ndarray = field(repr=False)
    z_weight: float = 1.0
    norm_cell: float = 1.0

    @property
    def a(self) -> float:
        return self.eps_map.cell_vectors[0]

    def evaluate(self, x, y) -> np.ndarray:
        """Exact plane-wave sum of (E_x, E_y) at points (x, y); shape (..., 2)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float) - self.eps_map.y_origin
        phase = np.exp(1j * (np.multiply.outer(x, self.k + self.basis.g_vectors[:, 0])
                             + np.multiply.outer(y, self.basis.g_vectors[:, 1])))
        return phase @ self.coefficients

    def energy(self) -> float:
        """Grid quadrature of eps |E|^2 over the cell times the z weight."""
        intensity = np.sum(np.abs(self.E_inplane) ** 2, axis=-1)
        return float(np.sum(self.eps_map.eps_grid * intensity) * self.eps_map.pixel_area * self.z_weight)


def _track_frequency(k, basis, fourier, reference, n_bands) -> float:
    values, vectors = _solve_k(np.array([k, 0.0]), basis, fourier, n_bands)
    j = int(np.argmax(np.abs(vectors.conj().T @ reference)))
    return float(frequency_thz(values[j]))


def bloch_field(eps_map: DielectricMap, basis: ReciprocalBasis, k: float, band: int,
                fourier: Optional[EpsFourier] = None, slab: Optional[SlabProfile] = None,
                fd_step: Optional[float] = None) -> BlochMode:
    """Normalized in-plane E of the band-th (sorted) mode at k."""
    fourier = fourier if fourier is not None else fourier_coefficients(eps_map, basis)
    a = eps_map.cell_vectors[0]
    n_bands = min(band + 3, basis.size)
    k_vector = np.array([k, 0.0])
    values, vectors = _solve_k(k_vector, basis, fourier, n_bands)
    eigenvalue, h = values[band], vectors[:, band]
    if eigenvalue <= 0:
        raise DomainError(f"band {band} at k={k} has zero frequency")

    step = fd_step if fd_step is not None else (np.pi / a) / 64.0
    if abs(k) + step > np.pi / a + 1e-15:
        k_lo, k_hi = k - np.sign(k) * step, k
        if k_lo > k_hi:
            k_lo, k_hi = k_hi, k_lo
    else:
        k_lo, k_hi = k - step, k + step
    nu_lo = _track_frequency(k_lo, basis, fourier, h, n_bands)
    nu_hi = _track_frequency(k_hi, basis, fourier, h, n_bands)
    vg = 2.0 * np.pi * (nu_hi - nu_lo) / (k_hi - k_lo) / C_NM_THZ
    vg_hf = float(_hf_velocity(k_vector, basis, fourier, values[band:band + 1], h[:, None])[0])

    omega_over_c = np.sqrt(eigenvalue)
    kg = k_vector[None, :] + basis.g_vectors
    displacement = -np.stack([kg[:, 1] * h, -kg[:, 0] * h], axis=1) / omega_over_c
    coefficients = fourier.eta @ displacement

    bloch = np.exp(1j * k * eps_map.x_coords())[:, None, None]
    e_grid = _coefficient_field(eps_map, basis, coefficients) * bloch
    z_weight = slab.z_weight if slab is not None else 1.0
    intensity = np.sum(np.abs(e_grid) ** 2, axis=-1)
    norm = np.sum(eps_map.eps_grid * intensity) * eps_map.pixel_area * z_weight
    scale = 1.0 / np.sqrt(norm)
    mode = BlochMode(k=float(k), band=band, freq=float(frequency_thz(eigenvalue)), vg=float(vg),
                     vg_hf=vg_hf, coefficients=coefficients * scale, basis=basis, eps_map=eps_map,
                     E_inplane=e_grid * scale, z_weight=z_weight)
    return replace(mode, norm_cell=mode.energy())


@dataclass(frozen=True)
class Field3D:
    """E_3D(x, y, z) = scale * E_2D(x, y) * f(z), optionally power-scaled and reversed."""

    mode: BlochMode
    slab: SlabProfile
    scale: float
    vg: float
    amplitude: float = 1.0
    conjugate: bool = False

    @property
    def a(self) -> float:
        return self.mode.a

    @property
    def freq(self) -> float:
        return self.mode.freq

    def normalized(self) -> "Field3D":
        return replace(self, amplitude=1.0)

    def scaled(self, factor: float) -> "Field3D":
        return replace(self, amplitude=self.amplitude * factor)

    def reversed(self) -> "Field3D":
        return replace(self, conjugate=not self.conjugate)

    def _finish(self, e2, f) -> np.ndarray:
        e = self.amplitude * self.scale * e2 * f[..., None]
        if self.conjugate:
            e = e.conj()
        return np.concatenate([e, np.zeros(e.shape[:-1] + (1,), dtype=complex)], axis=-1)

    def evaluate(self, x, y, z) -> np.ndarray:
        """(E_x, E_y, E_z) at lattice points; shape (..., 3)."""
        x, y, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(z, float))
        return self._finish(self.mode.evaluate(x, y), self.slab.profile(z))

    def evaluate_grid(self, xs, ys, zs) -> np.ndarray:
        """Field on the tensor grid xs x ys x zs; shape (nx, ny, nz, 3)."""
        X, Y = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float), indexing="ij")
        e2 = self.mode.evaluate(X, Y)[:, :, None, :]
        f = self.slab.profile(np.asarray(zs, float))[None, None, :]
        return self._finish(e2, f)

    def eps_weights(self) -> Tuple[np.ndarray, float, float]:
        fill = self.mode.eps_map.fill()
        return 1.0 + (self.slab.n ** 2 - 1.0) * fill, self.slab.inside_weight, self.slab.outside_weight

    def energy(self) -> float:
        """Integral of eps |E|^2 over the 3D cell (grid quadrature in x, y; exact in z)."""
        eps_in, inside, outside = self.eps_weights()
        intensity = np.sum(np.abs(self.mode.E_inplane) ** 2, axis=-1)
        total = np.sum((eps_in * inside + outside) * intensity) * self.mode.eps_map.pixel_area
        return float(total * (self.amplitude * self.scale) ** 2)


def extend_to_3d(mode: BlochMode, slab: SlabProfile) -> Field3D:
    unscaled = Field3D(mode=mode, slab=slab, scale=1.0, vg=abs(mode.vg))
    return replace(unscaled, scale=1.0 / np.sqrt(unscaled.energy()))


class WaveguideSolver:
    """Structure, slab reduction, basis and Fourier matrices for one geometry."""

    def __init__(self, params: StructureParams, cutoff_2pi_over_a: float = 4.0, n_bands: int = 12,
                 threads: int = 1):
        self.params = params
        self.n_bands = n_bands
        self.threads = threads
        self.cutoff = cutoff_2pi_over_a
        self.slab = slab_effective_index(params.n_slab, params.t, params.lambda_ref)
        self.eps_map = build_structure(params, n_eff=self.slab.n_eff)
        self.basis = ReciprocalBasis.for_map(self.eps_map, cutoff_2pi_over_a)
        self.fourier = fourier_coefficients(self.eps_map, self.basis)

    def k_grid(self, n_k: int = DEFAULT_K_SAMPLES, window: Tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
        return np.linspace(window[0], window[1], n_k) * np.pi / self.params.a

    def solve(self, k_list) -> BandSet:
        return solve_bands(self.eps_map, self.basis, k_list, self.n_bands, fourier=self.fourier,
                           threads=self.threads)

    def gap(self, n_bands: int = 8) -> Optional[Tuple[float, float]]:
        return bulk_gap(self.params, self.slab.n_eff, self.cutoff, n_bands=n_bands, threads=self.threads)

    def mode(self, k: float, band: int) -> BlochMode:
        return bloch_field(self.eps_map, self.basis, k, band, fourier=self.fourier, slab=self.slab)

    def field(self, k: float, band: int) -> Field3D:
        return extend_to_3d(self.mode(k, band), self.slab)
