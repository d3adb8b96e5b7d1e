"""
Two-color evanescent dipole trap next to the waveguide edge.

Trap grids use (x, d, z) in nm with d the distance from the edge into the
vacuum gap. Potentials are stored in mK (U / k_B). Field amplitudes follow
E(t) = Re[E exp(-i omega t)], so a beam with polarizabilities alpha_s, alpha_v
shifts |F, mF> by

    U = -alpha_s |E|^2 / 4 + (alpha_v / 4) (mF / F) Im(E_x E_y*)
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.constants as sc
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.base import DomainError, NoGuidedBandError, NoMinimumError, ZeroVgError
from core.physics import C_NM_THZ
from core.physics.atoms import TransitionTable, polarizability

logger = logging.getLogger(__name__)

COHERENCE_WINDOW_THZ = 1e-3
DOUBLE_WELL_BARRIER_MK = 1e-3
# barriers below this fraction of max |U| are rounding noise
BARRIER_FLOOR = 1e-9
CP_MIN_DISTANCE_NM = 10.0
NOMINAL_DISTANCE_NM = 115.0
MIN_VG = 1e-6
# normalized fields carry nm^-3/2; SI fields carry m^-3/2
NM_FIELD_TO_SI = 10.0 ** 13.5


class BeamSpec(BaseModel):
    """One trapping beam: a guided mode picked by wavelength or by (band, k)."""

    model_config = ConfigDict(extra="forbid")

    label: str = "beam"
    wavelength_nm: Optional[float] = Field(None, gt=0)
    power_mW: float = Field(ge=0)
    direction: Literal["+x", "-x"] = "+x"
    detuning_GHz: float = 0.0
    band: Optional[int] = Field(None, ge=0)
    k_over_pi_a: Optional[float] = Field(None, ge=0, le=1)

    @model_validator(mode="after")
    def _mode_reference(self):
        if self.k_over_pi_a is not None and self.band is None:
            raise ValueError("k_over_pi_a needs band")
        if self.wavelength_nm is None and self.k_over_pi_a is None:
            raise ValueError("give wavelength_nm or band with k_over_pi_a")
        return self


class TrapGrid(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x_points: int = Field(24, ge=4)
    d_min_nm: float = Field(20.0, gt=0)
    d_max_nm: float = 320.0
    d_step_nm: float = Field(5.0, gt=0)
    z_min_nm: float = -200.0
    z_max_nm: float = 200.0
    z_step_nm: float = Field(10.0, gt=0)

    def axes(self, a: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        xs = np.arange(self.x_points) * a / self.x_points
        ds = np.arange(self.d_min_nm, self.d_max_nm + self.d_step_nm / 2, self.d_step_nm)
        zs = np.arange(self.z_min_nm, self.z_max_nm + self.z_step_nm / 2, self.z_step_nm)
        return xs, ds, zs


@dataclass(frozen=True)
class TrapBeam:
    field: object
    nu_thz: float
    label: str = "beam"
    power_mW: float = 0.0

    @property
    def omega(self) -> float:
        return 2.0 * np.pi * self.nu_thz * 1e12

    @property
    def wavelength_nm(self) -> float:
        return C_NM_THZ / self.nu_thz


def physical_field(field, power_mW: float, direction: str = "+x"):
    """Scale a unit-energy field to carry power_mW: eps0/2 * integral eps |E|^2 = P a / v_g."""
    if power_mW < 0:
        raise DomainError("beam power must be non-negative")
    unit = field.normalized()
    if abs(unit.vg) < MIN_VG:
        raise ZeroVgError(f"group velocity {unit.vg:.3e} c at the band edge")
    energy = power_mW * 1e-3 * unit.a * 1e-9 / (abs(unit.vg) * sc.c)
    scaled = unit.scaled(np.sqrt(2.0 * energy / sc.epsilon_0) * NM_FIELD_TO_SI)
    return scaled.reversed() if direction == "-x" else scaled


def joule_to_mK(energy):
    return energy / sc.k * 1e3


@dataclass
class PotentialField:
    """Separable trap contributions on the (x, d, z) grid, in mK."""

    xs: np.ndarray
    ds: np.ndarray
    zs: np.ndarray
    F: float
    scalar_red: np.ndarray
    scalar_blue: np.ndarray
    vector: Dict[float, np.ndarray]
    cp: np.ndarray
    cp_clamped: Optional[np.ndarray] = None
    beams: Tuple[TrapBeam, ...] = ()

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.scalar_red.shape

    @property
    def mF_values(self) -> List[float]:
        return sorted(self.vector)

    def total(self, mF: float = 0) -> np.ndarray:
        if mF not in self.vector:
            raise DomainError(f"mF={mF} not computed (have {self.mF_values})")
        return self.scalar_red + self.scalar_blue + self.vector[mF] + self.cp

    def with_cp(self, cp: np.ndarray, clamped: Optional[np.ndarray] = None) -> "PotentialField":
        return replace(self, cp=np.broadcast_to(cp, self.shape).copy(), cp_clamped=clamped)


def _coherent_groups(beams: Sequence[TrapBeam]) -> List[List[TrapBeam]]:
    groups: List[List[TrapBeam]] = []
    for beam in sorted(beams, key=lambda item: item.nu_thz):
        if groups and beam.nu_thz - groups[-1][0].nu_thz <= COHERENCE_WINDOW_THZ:
            groups[-1].append(beam)
        else:
            groups.append([beam])
    return groups


def light_shift(beams: Sequence[TrapBeam], table: TransitionTable, xs, ds, zs, F: float = 2,
                mF_values: Optional[Sequence[float]] = None, threads: int = 1) -> PotentialField:
    """Scalar and vector light shifts of all beams (no surface term).

    Beams closer than 1 GHz add coherently; the rest add as time averages.
    """
    xs, ds, zs = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (xs, ds, zs))
    if mF_values is None:
        mF_values = [m - F for m in range(int(round(2 * F)) + 1)]
    shape = (len(xs), len(ds), len(zs))
    groups = _coherent_groups(beams)

    def work(group):
        nu = float(np.mean([beam.nu_thz for beam in group]))
        alpha = polarizability(table, 2.0 * np.pi * nu * 1e12, F=F)
        E = sum(beam.field.evaluate_grid(xs, -ds, zs) for beam in group)
        intensity = np.sum(np.abs(E) ** 2, axis=-1)
        circular = np.imag(E[..., 0] * E[..., 1].conj())
        return alpha, joule_to_mK(-alpha.alpha_s * intensity / 4.0), joule_to_mK(alpha.alpha_v * circular / 4.0)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(work, groups))

    red, blue = np.zeros(shape), np.zeros(shape)
    circular_total = np.zeros(shape)
    for alpha, scalar, vector in parts:
        if alpha.alpha_s > 0:
            red += scalar
        else:
            blue += scalar
        circular_total += vector
    vector_terms = {float(m): circular_total * (m / F if F else 0.0) for m in mF_values}
    return PotentialField(xs=xs, ds=ds, zs=zs, F=F, scalar_red=red, scalar_blue=blue, vector=vector_terms,
                          cp=np.zeros(shape), beams=tuple(beams))


def surface_distance(ds, zs, t_nm: float) -> np.ndarray:
    """Distance (nm) from (d, z) to the slab occupying d <= 0, |z| <= t/2."""
    D, Z = np.meshgrid(np.asarray(ds, dtype=float), np.asarray(zs, dtype=float), indexing="ij")
    above = np.maximum(np.abs(Z) - t_nm / 2.0, 0.0)
    beside = np.maximum(D, 0.0)
    return np.hypot(beside, above)


def casimir_polder_term(xs, ds, zs, c3_J_m3: float, t_nm: float,
                        d_min: float = CP_MIN_DISTANCE_NM) -> Tuple[np.ndarray, np.ndarray]:
    """-C3 / d^3 in mK on the grid and the mask of points clamped at d_min."""
    if c3_J_m3 <= 0:
        raise DomainError("C3 must be positive")
    distance = surface_distance(ds, zs, t_nm)
    clamped = distance < d_min
    distance = np.maximum(distance, d_min) * 1e-9
    u = joule_to_mK(-c3_J_m3 / distance ** 3)
    nx = len(np.atleast_1d(xs))
    return (np.broadcast_to(u, (nx,) + u.shape).copy(),
            np.broadcast_to(clamped, (nx,) + clamped.shape).copy())


@dataclass(frozen=True)
class TrapReport:
    r_min: Tuple[float, float, float]
    u_min_mK: float
    depth_mK: float
    freqs_MHz: Tuple[float, float, float]
    double_well_z: bool
    mF_spread_mK: float
    powers_mW: Tuple[float, ...] = ()
    wavelengths_nm: Tuple[float, ...] = ()
    barriers_mK: Dict[str, float] = field(default_factory=dict)
    principal_freqs_MHz: Tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "r_min_nm": list(self.r_min),
            "depth_mK": self.depth_mK,
            "freqs_MHz": list(self.freqs_MHz),
            "principal_freqs_MHz": list(self.principal_freqs_MHz),
            "double_well_z": self.double_well_z,
            "mF_spread_mK": self.mF_spread_mK,
            "powers_mW": list(self.powers_mW),
            "wavelengths_nm": list(self.wavelengths_nm),
        }


def _second_derivative(values: np.ndarray, i: int, h: float, periodic: bool) -> float:
    n = len(values)

    def at(j):
        return values[j % n] if periodic else values[j]

    if periodic or 2 <= i <= n - 3:
        return (-at(i - 2) + 16 * at(i - 1) - 30 * at(i) + 16 * at(i + 1) - at(i + 2)) / (12.0 * h * h)
    return (at(i - 1) - 2 * at(i) + at(i + 1)) / (h * h)


def _local_quadratic(U: np.ndarray, index: Tuple[int, int, int],
                     steps: Tuple[float, float, float]) -> Tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient and full Hessian of U at a grid point; x is periodic."""
    nx = U.shape[0]

    def at(offset):
        i, j, k = (index[0] + offset[0]) % nx, index[1] + offset[1], index[2] + offset[2]
        return U[i, j, k]

    lines = (U[:, index[1], index[2]], U[index[0], :, index[2]], U[index[0], index[1], :])
    e = np.eye(3, dtype=int)
    gradient = np.zeros(3)
    hessian = np.zeros((3, 3))
    for p in range(3):
        gradient[p] = (at(e[p]) - at(-e[p])) / (2.0 * steps[p])
        hessian[p, p] = _second_derivative(lines[p], index[p], steps[p], periodic=(p == 0))
        for q in range(p + 1, 3):
            mixed = at(e[p] + e[q]) - at(e[p] - e[q]) - at(e[q] - e[p]) + at(-e[p] - e[q])
            hessian[p, q] = hessian[q, p] = mixed / (4.0 * steps[p] * steps[q])
    return gradient, hessian


def _double_well(line: np.ndarray, zs: np.ndarray, step: float) -> bool:
    interior = np.flatnonzero((line[1:-1] < line[:-2]) & (line[1:-1] <= line[2:])) + 1
    for i in interior:
        if zs[i] >= 0:
            continue
        partner = [j for j in interior if abs(zs[j] + zs[i]) <= step * 0.51]
        if not partner:
            continue
        j = partner[0]
        barrier = line[i:j + 1].max() - max(line[i], line[j])
        if barrier > DOUBLE_WELL_BARRIER_MK:
            return True
    return False


def analyze_trap(potential: PotentialField, mass: float, mF: float = 0,
                 box: Tuple[float, float] = (30.0, 300.0)) -> TrapReport:
    """Minimum, depth, trap frequencies and double-well flag of U_mF."""
    U = potential.total(mF)
    xs, ds, zs = potential.xs, potential.ds, potential.zs
    inside = np.flatnonzero((ds >= box[0]) & (ds <= box[1]))
    if len(inside) < 3:
        raise DomainError(f"search box {box} holds fewer than 3 grid rows")
    sub = U[:, inside, :]
    ix, jd, iz = np.unravel_index(int(np.argmin(sub)), sub.shape)
    id_ = inside[jd]
    if jd in (0, len(inside) - 1) or iz in (0, len(zs) - 1):
        raise NoMinimumError(f"lowest point sits on the search-box boundary at d={ds[id_]:.1f} nm, "
                             f"z={zs[iz]:.1f} nm")
    u0 = U[ix, id_, iz]

    lines = {
        "+x": np.roll(U[:, id_, iz], -ix),
        "-x": np.roll(U[::-1, id_, iz], ix + 1 - len(xs)),
        "+y": U[ix, id_:, iz],
        "-y": U[ix, id_::-1, iz],
        "+z": U[ix, id_, iz:],
        "-z": U[ix, id_, iz::-1],
    }
    barriers = {key: float(line.max() - u0) for key, line in lines.items()}
    depth = min(barriers.values())
    if depth <= BARRIER_FLOOR * float(np.abs(U).max()):
        raise NoMinimumError("no escape barrier around the lowest point")

    a = xs[-1] + (xs[1] - xs[0])
    hx, hd, hz = (xs[1] - xs[0]), (ds[1] - ds[0]), (zs[1] - zs[0])
    steps = np.array([hx, hd, hz])
    gradient, hessian = _local_quadratic(U, (ix, id_, iz), (hx, hd, hz))
    eigenvalues = np.linalg.eigvalsh(hessian)
    if eigenvalues.min() <= 0:
        raise NoMinimumError(f"Hessian at the lowest point is not positive definite "
                             f"(eigenvalues {np.array2string(eigenvalues, precision=3)} mK/nm^2)")
    shift = -np.linalg.solve(hessian, gradient)
    if np.any(np.abs(shift) > steps):
        raise NoMinimumError("gradient does not vanish within one grid step of the lowest point")
    # mK/nm^2 -> J/m^2
    to_si = sc.k * 1e-3 / 1e-18
    freqs = tuple(float(np.sqrt(c * to_si / mass) / (2.0 * np.pi) * 1e-6) for c in np.diag(hessian))
    principal = tuple(float(np.sqrt(c * to_si / mass) / (2.0 * np.pi) * 1e-6) for c in eigenvalues)

    r_min = (float((xs[ix] + shift[0]) % a), float(ds[id_] + shift[1]), float(zs[iz] + shift[2]))
    at_min = [potential.total(m)[ix, id_, iz] for m in potential.mF_values]
    report = TrapReport(
        r_min=r_min, u_min_mK=float(u0), depth_mK=float(depth), freqs_MHz=freqs,
        double_well_z=_double_well(U[ix, id_, :], zs, hz),
        mF_spread_mK=float(max(at_min) - min(at_min)),
        principal_freqs_MHz=principal,
        powers_mW=tuple(beam.power_mW for beam in potential.beams),
        wavelengths_nm=tuple(beam.wavelength_nm for beam in potential.beams),
        barriers_mK=barriers,
    )
    logger.info("trap minimum at d=%.1f nm, depth %.3f mK", r_min[1], depth)
    return report


def axis_cuts(potential: PotentialField, report: TrapReport) -> Dict[str, pd.DataFrame]:
    """U_mF along x, d and z through the reported minimum."""
    ix = int(np.argmin(np.abs(potential.xs - report.r_min[0])))
    id_ = int(np.argmin(np.abs(potential.ds - report.r_min[1])))
    iz = int(np.argmin(np.abs(potential.zs - report.r_min[2])))
    cuts = {
        "x": (potential.xs, lambda U: U[:, id_, iz]),
        "y": (potential.ds, lambda U: U[ix, :, iz]),
        "z": (potential.zs, lambda U: U[ix, id_, :]),
    }
    frames = {}
    for axis, (coords, take) in cuts.items():
        data = {"coord_nm": coords}
        for m in potential.mF_values:
            data[f"U_mK_mF{m:+g}"] = take(potential.total(m))
        frames[axis] = pd.DataFrame(data)
    return frames


def intensity_offset(first, second, a: float, d: float, z: float = 0.0, samples: int = 64) -> float:
    """Shift between the x intensity patterns of two fields, in units of a, folded to [0, 0.5]."""
    xs = np.arange(samples) * a / samples
    profiles = []
    for item in (first, second):
        E = item.evaluate(xs, np.full_like(xs, -d), np.full_like(xs, z))
        intensity = np.sum(np.abs(E) ** 2, axis=-1)
        profiles.append(intensity - intensity.mean())
    corr = np.fft.ifft(np.fft.fft(profiles[0]) * np.fft.fft(profiles[1]).conj()).real
    shift = int(np.argmax(corr)) / samples
    return float(min(shift, 1.0 - shift))


def resolve_beam(solver, spec: BeamSpec, bands) -> TrapBeam:
    """Guided mode for a beam spec, scaled to its power and direction."""
    from core.physics.pwe import mode_at_frequency

    if spec.k_over_pi_a is not None:
        k = spec.k_over_pi_a * np.pi / solver.params.a
        base = solver.field(k, bands.sorted_index(spec.band, k))
        nu = base.freq
    else:
        nu = C_NM_THZ / spec.wavelength_nm
        band, k = mode_at_frequency(bands, nu, spec.band)
        base = solver.field(k, bands.sorted_index(band, k))
    nu += spec.detuning_GHz * 1e-3
    return TrapBeam(field=physical_field(base, spec.power_mW, spec.direction), nu_thz=nu,
                    label=spec.label, power_mW=spec.power_mW)


BeamResolver = Callable[[BeamSpec], TrapBeam]


@dataclass
class TrapModel:
    """Everything a potential evaluation needs apart from the beams."""

    resolver: BeamResolver
    table: TransitionTable
    grid: Tuple[np.ndarray, np.ndarray, np.ndarray]
    t_nm: float
    mass: float
    F: float = 2
    mF: float = 0
    c3_J_m3: Optional[float] = None
    include_cp: bool = True
    box: Tuple[float, float] = (30.0, 300.0)
    threads: int = 1

    def beams(self, specs: Sequence[BeamSpec]) -> List[TrapBeam]:
        return [self.resolver(spec) for spec in specs]

    def potential(self, beams: Sequence[TrapBeam]) -> PotentialField:
        xs, ds, zs = self.grid
        result = light_shift(beams, self.table, xs, ds, zs, F=self.F, threads=self.threads)
        if self.include_cp and self.c3_J_m3:
            cp, clamped = casimir_polder_term(xs, ds, zs, self.c3_J_m3, self.t_nm)
            result = result.with_cp(cp, clamped)
        return result

    def analyze(self, potential: PotentialField) -> TrapReport:
        return analyze_trap(potential, self.mass, self.mF, self.box)

    def run(self, specs: Sequence[BeamSpec]) -> Tuple[PotentialField, TrapReport]:
        potential = self.potential(self.beams(specs))
        return potential, self.analyze(potential)


def _spread_at(potential: PotentialField, point: Tuple[float, float, float]) -> float:
    ix = int(np.argmin(np.abs(potential.xs - point[0])))
    id_ = int(np.argmin(np.abs(potential.ds - point[1])))
    iz = int(np.argmin(np.abs(potential.zs - point[2])))
    values = [potential.total(m)[ix, id_, iz] for m in potential.mF_values]
    return float(max(values) - min(values))


def _spread(model: TrapModel, beams: Sequence[TrapBeam]) -> float:
    potential = model.potential(beams)
    try:
        point = model.analyze(potential).r_min
    except NoMinimumError:
        logger.warning("no trap minimum; evaluating the mF spread at d=%.0f nm", NOMINAL_DISTANCE_NM)
        point = (0.0, NOMINAL_DISTANCE_NM, 0.0)
    return _spread_at(potential, point)


@dataclass(frozen=True)
class ZeemanReport:
    spread_single_mK: float
    spread_paired_mK: float
    reduction: float

    def to_dict(self) -> dict:
        return {"spread_single_mK": self.spread_single_mK, "spread_paired_mK": self.spread_paired_mK,
                "reduction": self.reduction}


def counter_propagating_pairs(beams: Sequence[TrapBeam], table: TransitionTable,
                              red_detuning_GHz: float = 280.0, blue_detuning_GHz: float = 250.0) -> List[TrapBeam]:
    """Split every beam into two half-power beams running in opposite directions, the second detuned.

    The detuned partner reuses the carrier's spatial mode, time-reversed:
    only its frequency (and so the polarizability) moves by the detuning.
    This is an approximation; a GHz offset shifts the Bloch mode by a
    negligible fraction of the band at fixed frequency.
    """
    paired = []
    for beam in beams:
        red = polarizability(table, beam.omega).alpha_s > 0
        detuning = red_detuning_GHz if red else blue_detuning_GHz
        half = beam.field.scaled(1.0 / np.sqrt(2.0))
        paired.append(replace(beam, field=half, power_mW=beam.power_mW / 2))
        paired.append(replace(beam, field=half.reversed(), power_mW=beam.power_mW / 2,
                              nu_thz=beam.nu_thz + detuning * 1e-3, label=f"{beam.label}-counter"))
    return paired


def zeeman_compensation(model: TrapModel, specs: Sequence[BeamSpec], red_detuning_GHz: float = 280.0,
                        blue_detuning_GHz: float = 250.0) -> ZeemanReport:
    """mF spread with single-direction beams versus detuned counter-propagating pairs."""
    beams = model.beams(specs)
    single = _spread(model, beams)
    paired = _spread(model, counter_propagating_pairs(beams, model.table, red_detuning_GHz, blue_detuning_GHz))
    reduction = 1.0 if single == 0.0 else 1.0 - paired / single
    return ZeemanReport(spread_single_mK=single, spread_paired_mK=paired, reduction=reduction)


@dataclass(frozen=True)
class ScanResult:
    table: pd.DataFrame
    intervals: List[Tuple[float, float]]

    @property
    def feasible_width_nm(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))


def _intervals(wavelengths: np.ndarray, feasible: np.ndarray) -> List[Tuple[float, float]]:
    intervals = []
    start = None
    for i, ok in enumerate(feasible):
        if ok and start is None:
            start = i
        if start is not None and (not ok or i == len(feasible) - 1):
            stop = i if ok else i - 1
            intervals.append((float(wavelengths[start]), float(wavelengths[stop])))
            start = None
    return intervals


SCAN_COLUMNS = ["wavelength_nm", "feasible", "power_mW", "depth_mK", "y_min_nm"]


def wavelength_scan(model: TrapModel, specs: Sequence[BeamSpec], label: str,
                    lambda_range: Tuple[float, float], step_nm: float, power_cap_mW: float,
                    power_step_mW: float) -> ScanResult:
    """For each wavelength of beam ``label``, the least power (on a fixed grid) giving a stable trap."""
    if power_cap_mW <= 0:
        return ScanResult(table=pd.DataFrame(columns=SCAN_COLUMNS), intervals=[])
    if not any(spec.label == label for spec in specs):
        raise DomainError(f"no beam labelled {label!r}")
    wavelengths = np.arange(lambda_range[0], lambda_range[1] + step_nm / 2, step_nm)
    powers = np.arange(1, int(np.floor(power_cap_mW / power_step_mW + 1e-9)) + 1) * power_step_mW
    rows = []
    for wavelength in wavelengths:
        row = {"wavelength_nm": float(wavelength), "feasible": False, "power_mW": np.nan,
               "depth_mK": np.nan, "y_min_nm": np.nan}
        for power in powers:
            trial = [spec.model_copy(update={"wavelength_nm": float(wavelength), "power_mW": float(power),
                                             "k_over_pi_a": None})
                     if spec.label == label else spec for spec in specs]
            try:
                _, report = model.run(trial)
            except (NoMinimumError, NoGuidedBandError, ZeroVgError) as e:
                logger.debug("%.2f nm at %.3f mW: %s", wavelength, power, e)
                continue
            row.update(feasible=True, power_mW=float(power), depth_mK=report.depth_mK, y_min_nm=report.r_min[1])
            break
        rows.append(row)
    frame = pd.DataFrame(rows, columns=SCAN_COLUMNS)
    return ScanResult(table=frame, intervals=_intervals(wavelengths, frame["feasible"].to_numpy()))


def double_well_scan(model: TrapModel, specs: Sequence[BeamSpec], label: str,
                     powers_mW: Sequence[float]) -> pd.DataFrame:
    """Double-well flag and trap figures as the power of beam ``label`` varies."""
    rows = []
    for power in powers_mW:
        trial = [spec.model_copy(update={"power_mW": float(power)}) if spec.label == label else spec
                 for spec in specs]
        row = {"power_mW": float(power), "trapped": False, "double_well_z": False,
               "depth_mK": np.nan, "y_min_nm": np.nan, "z_min_nm": np.nan}
        try:
            _, report = model.run(trial)
        except NoMinimumError as e:
            logger.debug("%.3f mW: %s", power, e)
        else:
            row.update(trapped=True, double_well_z=report.double_well_z, depth_mK=report.depth_mK,
                       y_min_nm=report.r_min[1], z_min_nm=report.r_min[2])
        rows.append(row)
    return pd.DataFrame(rows, columns=["power_mW", "trapped", "double_well_z", "depth_mK", "y_min_nm", "z_min_nm"])
