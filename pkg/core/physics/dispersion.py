"""
Group-index analysis, plateau detection and the band-flattening optimization.

The optimizer varies the six row perturbations (dy1, dr1, dy2, dr2, dy3, dr3)
with Nelder-Mead from the start point plus seeded random restarts, then a
coordinate-wise polish. The cost is

    w_ng * mean((n_g - target)^2) / target^2 + w_gvd * mean((dn_g / d(ka))^2)

over the k-window of the slow band.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.optimize import minimize

from core.base import MaxIterError, NoPlateauError, OverlapError, ResolutionError
from core.physics import C_NM_THZ, D2_WAVELENGTH_NM
from core.physics.lattice import StructureParams, check_geometry
from core.physics.pwe import BandSet, WaveguideSolver, guided_mask

logger = logging.getLogger(__name__)

PLATEAU_TOLERANCE = 0.15
MIN_PLATEAU_SAMPLES = 3
MIN_CURVE_SAMPLES = 8
PENALTY = 1e6
N_PARAMS = 6


class OptimizationSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    target_ng: float = Field(30.0, ge=5, le=60)
    k_window: Tuple[float, float] = (0.6, 0.95)
    weights: Tuple[float, float] = (1.0, 4.0)
    bounds: List[Tuple[float, float]] = Field(
        default_factory=lambda: [(-60.0, 60.0), (-20.0, 20.0)] * 3
    )
    max_iters: int = Field(200, ge=1)
    tol: float = Field(1e-3, gt=0)
    restarts: int = Field(3, ge=0)
    k_samples: int = Field(16, ge=MIN_CURVE_SAMPLES)
    polish_step_nm: float = Field(0.25, gt=0)
    band: Optional[int] = Field(None, ge=0)
    nu_ref_thz: float = Field(C_NM_THZ / D2_WAVELENGTH_NM, gt=0)

    @field_validator("bounds")
    @classmethod
    def _six_ordered_bounds(cls, bounds):
        if len(bounds) != N_PARAMS:
            raise ValueError(f"expected {N_PARAMS} bounds (dy1, dr1, dy2, dr2, dy3, dr3)")
        for lo, hi in bounds:
            if lo > hi:
                raise ValueError(f"bound ({lo}, {hi}) is reversed")
        return bounds

    @model_validator(mode="after")
    def _window_inside_zone(self):
        lo, hi = self.k_window
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError("k_window must satisfy 0 <= k_lo < k_hi <= 1 (units of pi/a)")
        return self


@dataclass(frozen=True)
class Plateau:
    nu_min: float
    nu_max: float
    ng_center: float
    k_min: float
    k_max: float
    n_samples: int


@dataclass(frozen=True)
class DispersionReport:
    k: np.ndarray
    nu: np.ndarray
    ng: np.ndarray
    plateau: Optional[Plateau]
    plateau_width_nm: float
    plateau_width_thz: float
    gvd_rms: float

    def to_dict(self) -> dict:
        plateau = None
        if self.plateau is not None:
            plateau = {
                "nu_min_THz": self.plateau.nu_min,
                "nu_max_THz": self.plateau.nu_max,
                "ng_center": self.plateau.ng_center,
                "k_min_over_pi_a": self.plateau.k_min,
                "k_max_over_pi_a": self.plateau.k_max,
            }
        return {
            "plateau": plateau,
            "plateau_width_nm": self.plateau_width_nm,
            "plateau_width_THz": self.plateau_width_thz,
            "gvd_rms": self.gvd_rms,
        }


def group_velocity(k: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """v_g / c from the tracked band; central differences, one-sided at the ends."""
    return 2.0 * np.pi * np.gradient(nu, k) / C_NM_THZ


def group_index(k: np.ndarray, nu: np.ndarray) -> np.ndarray:
    speed = np.abs(group_velocity(k, nu))
    with np.errstate(divide="ignore"):
        return np.where(speed > 0, 1.0 / np.where(speed > 0, speed, 1.0), np.inf)


def find_plateau(k_over_pi_a: np.ndarray, nu: np.ndarray, ng: np.ndarray, vg: np.ndarray,
                 tolerance: float = PLATEAU_TOLERANCE) -> Optional[Plateau]:
    """Widest (in frequency) run of samples whose n_g stays within +-tolerance of its centre."""
    ratio = (1.0 + tolerance) / (1.0 - tolerance)
    best = None
    best_width = -1.0
    n = len(ng)
    for i in range(n):
        if not np.isfinite(ng[i]) or vg[i] == 0:
            continue
        lo = hi = ng[i]
        for j in range(i, n):
            if not np.isfinite(ng[j]) or np.sign(vg[j]) != np.sign(vg[i]):
                break
            lo, hi = min(lo, ng[j]), max(hi, ng[j])
            if hi > ratio * lo:
                break
            if j - i + 1 >= MIN_PLATEAU_SAMPLES:
                width = abs(nu[j] - nu[i])
                if width > best_width:
                    best_width = width
                    best = Plateau(
                        nu_min=float(min(nu[i], nu[j])), nu_max=float(max(nu[i], nu[j])),
                        ng_center=float((lo + hi) / 2.0),
                        k_min=float(k_over_pi_a[i]), k_max=float(k_over_pi_a[j]),
                        n_samples=j - i + 1,
                    )
    return best


def group_index_curve(bands: BandSet, band: int, k_window: Optional[Tuple[float, float]] = None,
                      require_plateau: bool = True) -> DispersionReport:
    """n_g(k) of one tracked band and its widest 15% plateau."""
    kk = bands.k_over_pi_a
    select = np.ones(len(kk), dtype=bool)
    if k_window is not None:
        select = (kk >= k_window[0] - 1e-12) & (kk <= k_window[1] + 1e-12)
    if select.sum() < MIN_CURVE_SAMPLES:
        raise ResolutionError(f"need at least {MIN_CURVE_SAMPLES} k-samples, got {select.sum()}")

    k, nu = bands.k[select], bands.freqs[select, band]
    vg = group_velocity(k, nu)
    ng = group_index(k, nu)
    plateau = find_plateau(kk[select], nu, ng, vg)
    if plateau is None and require_plateau:
        raise NoPlateauError(f"band {band}: no {MIN_PLATEAU_SAMPLES}-sample window within "
                             f"{PLATEAU_TOLERANCE:.0%} of its centre")

    width_nm = width_thz = 0.0
    gvd_rms = float("nan")
    if plateau is not None:
        width_thz = plateau.nu_max - plateau.nu_min
        width_nm = C_NM_THZ / plateau.nu_min - C_NM_THZ / plateau.nu_max
        inside = (nu >= plateau.nu_min) & (nu <= plateau.nu_max)
        slope = np.gradient(ng, nu)
        gvd_rms = float(np.sqrt(np.mean(slope[inside] ** 2)))
    return DispersionReport(k=k, nu=nu, ng=ng, plateau=plateau, plateau_width_nm=float(width_nm),
                            plateau_width_thz=float(width_thz), gvd_rms=gvd_rms)


def select_slow_band(bands: BandSet, spec: OptimizationSpec, min_edge_fraction: float = 0.5) -> Optional[int]:
    """Edge-guided band closest to the reference frequency at the window centre."""
    if spec.band is not None:
        return spec.band
    centre = int(np.argmin(np.abs(bands.k_over_pi_a - 0.5 * sum(spec.k_window))))
    guided = guided_mask(bands, None, min_edge_fraction)[centre]
    candidates = np.flatnonzero(guided)
    if len(candidates) == 0:
        return None
    return int(candidates[np.argmin(np.abs(bands.freqs[centre, candidates] - spec.nu_ref_thz))])


def cost_terms(bands: BandSet, band: int, spec: OptimizationSpec) -> Tuple[float, float]:
    kk = bands.k_over_pi_a
    select = (kk >= spec.k_window[0] - 1e-12) & (kk <= spec.k_window[1] + 1e-12)
    k, nu = bands.k[select], bands.freqs[select, band]
    ng = group_index(k, nu)
    if len(k) < 2 or not np.all(np.isfinite(ng)):
        return PENALTY, 0.0
    target = spec.target_ng
    ng_term = float(np.mean((ng - target) ** 2) / target ** 2)
    slope = np.gradient(ng, k * bands.a)
    return ng_term, float(np.mean(slope ** 2))


def cost_from_bands(bands: BandSet, band: int, spec: OptimizationSpec) -> float:
    ng_term, gvd_term = cost_terms(bands, band, spec)
    return spec.weights[0] * ng_term + spec.weights[1] * gvd_term


def window_bands(params: StructureParams, spec: OptimizationSpec, cutoff_2pi_over_a: float = 4.0,
                 n_bands: int = 12, threads: int = 1) -> BandSet:
    solver = WaveguideSolver(params, cutoff_2pi_over_a=cutoff_2pi_over_a, n_bands=n_bands, threads=threads)
    return solver.solve(solver.k_grid(spec.k_samples, spec.k_window))


def cost(params: StructureParams, spec: OptimizationSpec, cutoff_2pi_over_a: float = 4.0,
         n_bands: int = 12, threads: int = 1) -> float:
    try:
        check_geometry(params)
    except OverlapError as e:
        logger.debug("penalty for invalid geometry: %s", e)
        return PENALTY
    bands = window_bands(params, spec, cutoff_2pi_over_a, n_bands, threads)
    band = select_slow_band(bands, spec)
    if band is None:
        logger.debug("penalty: no guided band in the window")
        return PENALTY
    return cost_from_bands(bands, band, spec)


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    cost: float
    best: float
    params: np.ndarray


@dataclass
class OptimizationResult:
    params: StructureParams
    report: Optional[DispersionReport]
    trace: List[TraceRow] = field(default_factory=list)
    cost: float = float("nan")
    converged: bool = True

    @property
    def evaluations(self) -> int:
        return len(self.trace)

    def trace_frame(self) -> pd.DataFrame:
        names = ["dy1", "dr1", "dy2", "dr2", "dy3", "dr3"]
        rows = []
        for row in self.trace:
            entry = {"iter": row.iteration, "cost": row.cost, "best": row.best}
            entry.update(dict(zip(names, row.params)))
            rows.append(entry)
        return pd.DataFrame(rows, columns=["iter", "cost", "best"] + names)


def _run_start(objective: Callable[[np.ndarray], float], start: np.ndarray, lo: np.ndarray,
               hi: np.ndarray, spec: OptimizationSpec):
    evaluations = []

    def wrapped(vector):
        vector = np.clip(vector, lo, hi)
        value = float(objective(vector))
        evaluations.append((vector.copy(), value))
        return value

    result = minimize(wrapped, start, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                      options={"maxiter": spec.max_iters, "xatol": spec.tol, "fatol": spec.tol * 1e-3})
    return evaluations, bool(result.success)


def optimize(params0: StructureParams, spec: OptimizationSpec,
             objective: Optional[Callable[[np.ndarray], float]] = None, seed: int = 0,
             cutoff_2pi_over_a: float = 4.0, n_bands: int = 12, threads: int = 1,
             strict: bool = False) -> OptimizationResult:
    """Best-found perturbation vector within spec.bounds.

    ``objective`` replaces the band-structure cost (it receives the 6-vector).
    """
    bounds = np.asarray(spec.bounds, dtype=float)
    lo, hi = bounds[:, 0], bounds[:, 1]
    band_cost = objective is None
    if band_cost:
        def objective(vector):
            return cost(params0.with_perturbations(vector), spec, cutoff_2pi_over_a, n_bands, threads)

    x0 = params0.perturbation_vector()
    if np.all(hi - lo == 0):
        value = float(objective(x0))
        return OptimizationResult(params=params0, report=None, cost=value,
                                  trace=[TraceRow(0, value, value, x0)])

    rng = np.random.default_rng(seed)
    starts = [np.clip(x0, lo, hi)] + [rng.uniform(lo, hi) for _ in range(spec.restarts)]
    with ThreadPoolExecutor(max_workers=max(1, min(threads, len(starts)))) as pool:
        runs = list(pool.map(lambda s: _run_start(objective, s, lo, hi, spec), starts))

    evaluations = [item for run, _ in runs for item in run]
    converged = all(ok for _, ok in runs)

    best_vector, best_cost = min(evaluations, key=lambda item: item[1])
    improved = True
    polish_budget = spec.max_iters
    while improved and polish_budget > 0:
        improved = False
        for i in range(N_PARAMS):
            for step in (spec.polish_step_nm, -spec.polish_step_nm):
                candidate = best_vector.copy()
                candidate[i] = np.clip(candidate[i] + step, lo[i], hi[i])
                if candidate[i] == best_vector[i]:
                    continue
                value = float(objective(candidate))
                evaluations.append((candidate, value))
                polish_budget -= 1
                if value < best_cost:
                    best_vector, best_cost, improved = candidate, value, True

    trace = []
    running = np.inf
    for iteration, (vector, value) in enumerate(evaluations):
        running = min(running, value)
        trace.append(TraceRow(iteration, value, running, vector))

    # ties go to the least perturbation
    floor = best_cost + abs(best_cost) * 1e-12 + 1e-15
    ties = [vector for vector, value in evaluations if value <= floor]
    best_vector = min(ties, key=lambda v: (float(np.linalg.norm(v)), tuple(v)))

    best_params = params0.with_perturbations(best_vector)
    report = None
    if band_cost and best_cost < PENALTY:
        report = _final_report(best_params, spec, cutoff_2pi_over_a, n_bands, threads)
    result = OptimizationResult(params=best_params, report=report, trace=trace,
                                cost=best_cost, converged=converged)
    logger.info("optimization finished: cost %.6g after %d evaluations (converged=%s)",
                best_cost, result.evaluations, converged)
    if strict and not converged:
        raise MaxIterError(f"optimizer stopped at max_iters={spec.max_iters}", result=result)
    return result


def _final_report(params: StructureParams, spec: OptimizationSpec, cutoff_2pi_over_a: float,
                  n_bands: int, threads: int) -> Optional[DispersionReport]:
    bands = window_bands(params, spec, cutoff_2pi_over_a, n_bands, threads)
    band = select_slow_band(bands, spec)
    if band is None:
        return None
    return group_index_curve(bands, band, spec.k_window, require_plateau=False)
