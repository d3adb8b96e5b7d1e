import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from core.base import ConfigError
from core.physics.atoms import RB87_MASS_KG
from core.physics.dispersion import OptimizationSpec
from core.physics.lattice import StructureParams
from core.physics.trap import BeamSpec, TrapGrid


class SolverSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cutoff_2pi_over_a: float = Field(4.0, gt=0)
    n_bands: int = Field(12, ge=1)
    n_k: int = Field(64, ge=2)
    edge_fraction_min: float = Field(0.5, ge=0, le=1)
    bulk_n_bands: int = Field(8, ge=2)


class CouplingSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    F: float = 2
    mF: float = 2
    q: int = Field(1, ge=-1, le=1)
    Fp: float = 3
    line: str = "D2"
    # atom position (x, d, z) in nm, d measured from the edge
    position_nm: Tuple[float, float, float] = (0.0, 115.0, 0.0)
    gamma_prime: float = Field(1.0, gt=0)
    both_directions: bool = False
    band: Optional[int] = Field(None, ge=0)
    k_over_pi_a: Optional[float] = Field(None, ge=0, le=1)
    wavelength_nm: Optional[float] = Field(None, gt=0)
    map_x_points: int = Field(16, ge=1)
    map_d_nm: Tuple[float, float, float] = (20.0, 300.0, 10.0)
    map_z_nm: Tuple[float, float, float] = (0.0, 0.0, 10.0)


class TrapSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    beams: List[BeamSpec] = Field(default_factory=lambda: [
        BeamSpec(label="red", wavelength_nm=784.5, power_mW=0.1),
        BeamSpec(label="blue", wavelength_nm=737.0, power_mW=1.65),
    ])
    F: float = 2
    mF: float = 0
    include_cp: bool = True
    c3_Hz_um3: Optional[float] = Field(None, gt=0)
    mass_kg: float = Field(RB87_MASS_KG, gt=0)
    search_box_nm: Tuple[float, float] = (30.0, 300.0)
    grid: TrapGrid = TrapGrid()
    red_pair_detuning_GHz: float = 280.0
    blue_pair_detuning_GHz: float = 250.0
    temperature_fraction: float = Field(0.1, gt=0)
    scan_label: str = "blue"
    scan_range_nm: Tuple[float, float] = (720.0, 745.0)
    scan_step_nm: float = Field(1.0, gt=0)
    scan_power_cap_mW: float = Field(3.0, ge=0)
    scan_power_step_mW: float = Field(0.25, gt=0)
    double_well_label: str = "blue"
    double_well_powers_mW: List[float] = Field(default_factory=lambda: [0.5, 1.0, 1.65, 2.5, 3.5, 5.0])


class CasimirSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    permittivity_file: Optional[str] = None
    xi_range: Tuple[float, float] = (1e8, 1e22)
    n_start: int = Field(64, ge=4)
    n_max: int = Field(4096, ge=8)
    rel_tol: float = Field(1e-4, gt=0)


class ToolkitSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    solver: SolverSettings = SolverSettings()
    optimization: OptimizationSpec = OptimizationSpec()
    coupling: CouplingSettings = CouplingSettings()
    trap: TrapSettings = TrapSettings()
    casimir: CasimirSettings = CasimirSettings()


def format_validation_error(error: ValidationError) -> str:
    """'a_nm: Field required; grid.nx: ...' from a pydantic error."""
    parts = []
    for item in error.errors():
        path = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{path}: {item['msg']}")
    return "; ".join(parts)


def validated(model: type, data: Any, origin: str = ""):
    try:
        return model.model_validate(data)
    except ValidationError as e:
        prefix = f"{origin}: " if origin else ""
        raise ConfigError(prefix + format_validation_error(e)) from e


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"{path}: file not found") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def load_structure(path: Union[str, Path]) -> StructureParams:
    return validated(StructureParams, read_json(path), str(path))


def merge_sections(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Section-wise merge: keys of each override section replace the defaults."""
    merged = {key: dict(value) if isinstance(value, dict) else value for key, value in base.items()}
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key].update(value)
        else:
            merged[key] = value
    return merged


def load_settings(defaults: Dict[str, Any], settings_path: Optional[Union[str, Path]] = None,
                  spec_path: Optional[Union[str, Path]] = None) -> ToolkitSettings:
    data = dict(defaults)
    origin = "settings"
    if settings_path is not None:
        data = merge_sections(data, read_json(settings_path))
        origin = str(settings_path)
    if spec_path is not None:
        data["optimization"] = read_json(spec_path)
        origin = str(spec_path)
    return validated(ToolkitSettings, data, origin)
