"""
Half-W1 geometry and its dielectric representation on a periodic supercell.

Coordinates are in nm. The slab edge sits at y = 0: vacuum for y < 0, an
unpatterned strip of width L, then rows of holes on a triangular lattice
(rows parallel to the edge, propagation along x). Row i (1-based) has its
nominal centre at y = L + r + (i - 1) * a * sqrt(3) / 2; odd rows are centred
on x = 0, even rows are offset by a / 2.
"""
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.base import CutoffError, OverlapError, ResolutionError
from core.physics import D2_WAVELENGTH_NM

if TYPE_CHECKING:
    from core.physics.pwe import ReciprocalBasis

logger = logging.getLogger(__name__)

MAX_PERTURBED_ROW = 3
MIN_POINTS_PER_PERIOD = 32
PAIR_CHECK_SPAN = 3


class GridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    nx: int = Field(64, gt=0)
    ny: int = Field(640, gt=0)
    subsample: int = Field(8, ge=1)


class RowPerturbation(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    index: int = Field(ge=1)
    dy: float = Field(0.0, alias="dy_nm")
    dr: float = Field(0.0, alias="dr_nm")


class StructureParams(BaseModel):
    """Full parametric half-W1 geometry, read from the structure config file."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    a: float = Field(alias="a_nm", gt=0)
    r: float = Field(alias="r_nm", ge=0)
    L: float = Field(alias="L_nm", ge=0)
    t: float = Field(alias="t_nm", gt=0)
    n_slab: float = Field(gt=1)
    rows: Tuple[RowPerturbation, ...] = ()
    n_rows: int = Field(10, ge=1)
    w_vac: float = Field(1200.0, alias="w_vac_nm", ge=0)
    w_cap: Optional[float] = Field(None, alias="w_cap_nm", ge=0)
    grid: GridSpec = GridSpec()
    # +dy moves a row away from the edge when set
    dy_toward_bulk: bool = True
    lambda_ref: float = Field(D2_WAVELENGTH_NM, alias="lambda_ref_nm", gt=0)

    @field_validator("rows")
    @classmethod
    def _only_first_rows_perturbed(cls, rows: Tuple[RowPerturbation, ...]) -> Tuple[RowPerturbation, ...]:
        seen = set()
        kept = []
        for row in rows:
            if row.index in seen:
                raise ValueError(f"row {row.index} listed twice")
            seen.add(row.index)
            if row.index > MAX_PERTURBED_ROW:
                if row.dy != 0.0 or row.dr != 0.0:
                    raise ValueError(
                        f"row {row.index}: only rows 1-{MAX_PERTURBED_ROW} may be perturbed"
                    )
                continue
            kept.append(row)
        return tuple(sorted(kept, key=lambda item: item.index))

    @property
    def row_spacing(self) -> float:
        return self.a * np.sqrt(3.0) / 2.0

    @property
    def cap_width(self) -> float:
        return self.row_spacing if self.w_cap is None else self.w_cap

    def perturbation(self, index: int) -> Tuple[float, float]:
        for row in self.rows:
            if row.index == index:
                return row.dy, row.dr
        return 0.0, 0.0

    def perturbation_vector(self) -> np.ndarray:
        """(dy1, dr1, dy2, dr2, dy3, dr3) in nm."""
        values = []
        for index in range(1, MAX_PERTURBED_ROW + 1):
            values.extend(self.perturbation(index))
        return np.asarray(values, dtype=float)

    def with_perturbations(self, vector) -> "StructureParams":
        vector = np.asarray(vector, dtype=float).reshape(MAX_PERTURBED_ROW, 2)
        rows = tuple(
            RowPerturbation(index=i + 1, dy=float(dy), dr=float(dr))
            for i, (dy, dr) in enumerate(vector)
        )
        return self.model_copy(update={"rows": rows})

    def to_config(self) -> dict:
        """Config-file form, same schema as the input file."""
        return self.model_dump(by_alias=True, exclude_none=True, mode="json")


@dataclass(frozen=True)
class Hole:
    row: int
    x: float
    y: float
    radius: float


def hole_rows(params: StructureParams) -> List[Hole]:
    """One representative hole per row; the row repeats with period a in x."""
    sign = 1.0 if params.dy_toward_bulk else -1.0
    holes = []
    for index in range(1, params.n_rows + 1):
        dy, dr = params.perturbation(index)
        holes.append(Hole(
            row=index,
            x=0.0 if index % 2 == 1 else params.a / 2.0,
            y=params.L + params.r + (index - 1) * params.row_spacing + sign * dy,
            radius=params.r + dr,
        ))
    return holes


def check_geometry(params: StructureParams) -> List[Hole]:
    """Raise OverlapError unless every hole is positive, separated and clear of the edge."""
    holes = hole_rows(params)
    for hole in holes:
        if hole.radius < 0:
            raise OverlapError(f"row {hole.row}: effective radius {hole.radius:.3f} nm is negative")
        if hole.radius == 0:
            continue
        if 2.0 * hole.radius >= params.a:
            raise OverlapError(f"row {hole.row}: neighbouring holes in the row overlap")
        if hole.y - hole.radius <= 0:
            raise OverlapError(f"row {hole.row}: hole crosses the slab edge")

    for i, first in enumerate(holes):
        for second in holes[i + 1:i + 1 + PAIR_CHECK_SPAN]:
            if first.radius == 0 or second.radius == 0:
                continue
            dx = abs(first.x - second.x) % params.a
            dx = min(dx, params.a - dx)
            distance = np.hypot(dx, first.y - second.y)
            if distance <= first.radius + second.radius:
                raise OverlapError(
                    f"rows {first.row} and {second.row} overlap "
                    f"(centre distance {distance:.3f} nm)"
                )
    return holes


def periodic_offset(x, period: float):
    """Signed distance to the nearest lattice image, in [-period/2, period/2)."""
    return np.mod(np.asarray(x) + period / 2.0, period) - period / 2.0


def supersample(xs: np.ndarray, ys: np.ndarray, pixel: Tuple[float, float], subsample: int,
                indicator: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """Pixel-averaged indicator on an s x s sub-grid of every pixel.

    ``indicator`` receives X of shape (nx*s, 1) and Y of shape (1, ny*s)
    and returns a boolean array of the broadcast shape.
    """
    offsets = (np.arange(subsample) + 0.5) / subsample - 0.5
    sub_x = (xs[:, None] + offsets[None, :] * pixel[0]).ravel()
    sub_y = (ys[:, None] + offsets[None, :] * pixel[1]).ravel()
    mask = indicator(sub_x[:, None], sub_y[None, :])
    return mask.reshape(len(xs), subsample, len(ys), subsample).mean(axis=(1, 3))


@dataclass(frozen=True)
class DielectricMap:
    eps_grid: np.ndarray
    cell_vectors: Tuple[float, float]
    # y of the first pixel centre; the Fourier phase origin is (0, y_origin)
    y_origin: float
    n_eff: float
    holes: Tuple[Hole, ...] = ()
    edge_window: Optional[Tuple[float, float]] = None
    params: Optional[StructureParams] = field(default=None, compare=False)

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return self.eps_grid.shape

    @property
    def pixel(self) -> Tuple[float, float]:
        nx, ny = self.grid_shape
        return self.cell_vectors[0] / nx, self.cell_vectors[1] / ny

    @property
    def pixel_area(self) -> float:
        dx, dy = self.pixel
        return dx * dy

    def x_coords(self) -> np.ndarray:
        return np.arange(self.grid_shape[0]) * self.pixel[0]

    def y_coords(self) -> np.ndarray:
        return self.y_origin + np.arange(self.grid_shape[1]) * self.pixel[1]

    def fill(self) -> np.ndarray:
        """Dielectric area fraction per pixel."""
        if self.n_eff ** 2 - 1.0 <= 0:
            return np.zeros_like(self.eps_grid)
        return (self.eps_grid - 1.0) / (self.n_eff ** 2 - 1.0)


def _check_resolution(a: float, nx: int, pixel_y: float) -> None:
    if nx < MIN_POINTS_PER_PERIOD:
        raise ResolutionError(f"grid nx={nx} is below {MIN_POINTS_PER_PERIOD} points per period")
    if pixel_y > a / MIN_POINTS_PER_PERIOD:
        raise ResolutionError(
            f"grid y spacing {pixel_y:.3f} nm is coarser than a/{MIN_POINTS_PER_PERIOD}"
        )


def _hole_indicator(holes, a: float, edge: Optional[float]):
    def indicator(x, y):
        solid = np.broadcast_to(y >= edge, np.broadcast_shapes(x.shape, y.shape)).copy() \
            if edge is not None else np.ones(np.broadcast_shapes(x.shape, y.shape), dtype=bool)
        for hole in holes:
            if hole.radius <= 0:
                continue
            rows = np.abs(y[0] - hole.y) < hole.radius
            if not np.any(rows):
                continue
            dx = periodic_offset(x - hole.x, a)
            inside = dx ** 2 + (y[:, rows] - hole.y) ** 2 < hole.radius ** 2
            solid[:, rows] &= ~inside
        return solid

    return indicator


def build_structure(params: StructureParams, n_eff: Optional[float] = None) -> DielectricMap:
    """Anti-aliased permittivity of the half-W1 supercell.

    ``n_eff`` defaults to the slab effective index at ``params.lambda_ref``.
    """
    holes = check_geometry(params)
    if n_eff is None:
        from core.physics.pwe import slab_effective_index
        n_eff = slab_effective_index(params.n_slab, params.t, params.lambda_ref).n_eff

    top = max(hole.y + max(hole.radius, 0.0) for hole in holes) + params.cap_width
    height = top + params.w_vac
    nx, ny = params.grid.nx, params.grid.ny
    pixel = (params.a / nx, height / ny)
    _check_resolution(params.a, nx, pixel[1])

    xs = np.arange(nx) * pixel[0]
    ys = -params.w_vac + (np.arange(ny) + 0.5) * pixel[1]
    fill = supersample(xs, ys, pixel, params.grid.subsample,
                       _hole_indicator(holes, params.a, edge=0.0))
    eps = 1.0 + (n_eff ** 2 - 1.0) * fill

    window_top = holes[min(MAX_PERTURBED_ROW, len(holes)) - 1].y
    logger.debug("built %dx%d supercell, height %.1f nm, n_eff %.4f", nx, ny, height, n_eff)
    return DielectricMap(
        eps_grid=eps,
        cell_vectors=(params.a, height),
        y_origin=float(ys[0]),
        n_eff=float(n_eff),
        holes=tuple(holes),
        edge_window=(-params.w_vac / 2.0, window_top),
        params=params,
    )


def bulk_crystal(params: StructureParams, n_eff: float) -> DielectricMap:
    """Rectangular two-hole cell (a x a*sqrt(3)) of the unperturbed bulk crystal."""
    h = params.row_spacing
    height = 2.0 * h
    nx = params.grid.nx
    ny = int(np.ceil(height * nx / params.a))
    pixel = (params.a / nx, height / ny)
    holes = (Hole(row=1, x=0.0, y=h / 2.0, radius=params.r),
             Hole(row=2, x=params.a / 2.0, y=1.5 * h, radius=params.r))
    xs = np.arange(nx) * pixel[0]
    ys = (np.arange(ny) + 0.5) * pixel[1]
    fill = supersample(xs, ys, pixel, params.grid.subsample,
                       _hole_indicator(holes, params.a, edge=None))
    return DielectricMap(
        eps_grid=1.0 + (n_eff ** 2 - 1.0) * fill,
        cell_vectors=(params.a, height),
        y_origin=float(ys[0]),
        n_eff=float(n_eff),
        holes=holes,
    )


@dataclass(frozen=True)
class EpsFourier:
    eps_hat: np.ndarray
    eta: np.ndarray
    dc: float


def check_nyquist(eps_map: DielectricMap, m_max: Tuple[int, int]) -> None:
    nx, ny = eps_map.grid_shape
    if 4 * m_max[0] >= nx or 4 * m_max[1] >= ny:
        raise CutoffError(
            f"plane-wave orders ({m_max[0]}, {m_max[1]}) exceed the Nyquist limit "
            f"of the {nx}x{ny} grid"
        )


def fourier_coefficients(eps_map: DielectricMap, basis: "ReciprocalBasis") -> EpsFourier:
    """eps(G - G') matrix and its inverse (inverse-rule inverse-permittivity matrix)."""
    m = basis.m_indices
    check_nyquist(eps_map, tuple(int(v) for v in np.abs(m).max(axis=0)))
    nx, ny = eps_map.grid_shape
    coeffs = np.fft.fft2(eps_map.eps_grid) / (nx * ny)

    dm = m[:, None, :] - m[None, :, :]
    eps_hat = coeffs[dm[..., 0] % nx, dm[..., 1] % ny]
    eta = scipy.linalg.inv(eps_hat)
    eta = 0.5 * (eta + eta.conj().T)
    return EpsFourier(eps_hat=eps_hat, eta=eta, dc=float(coeffs[0, 0].real))
