import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pytest

from core.data_manager import BUNDLED_DIR, TRANSITIONS_FILE
from core.physics.atoms import load_transition_table
from core.physics.coupling import SPHERICAL
from core.physics.lattice import StructureParams
from core.physics.pwe import WaveguideSolver

SMALL_STRUCTURE = {
    "a_nm": 212.0,
    "r_nm": 63.0,
    "L_nm": 337.0,
    "t_nm": 150.0,
    "n_slab": 3.34,
    "n_rows": 3,
    "w_vac_nm": 300.0,
    "grid": {"nx": 32, "ny": 256, "subsample": 4},
}

FAST_SETTINGS = {
    "solver": {"cutoff_2pi_over_a": 2.0, "n_bands": 6, "n_k": 16, "bulk_n_bands": 4},
}


@dataclass(frozen=True)
class EvanescentField:
    """Analytic stand-in for Field3D: a fixed polarization decaying away from the edge."""

    polarization: tuple = tuple(SPHERICAL[1])
    a: float = 212.0
    freq: float = 384.2
    vg: float = 0.05
    k: float = 0.8 * np.pi / 212.0
    kappa: float = 0.01
    waist: float = 200.0
    scale: float = 1e-3
    amplitude: float = 1.0
    conjugate: bool = False

    def normalized(self):
        return replace(self, amplitude=1.0)

    def scaled(self, factor):
        return replace(self, amplitude=self.amplitude * factor)

    def reversed(self):
        return replace(self, conjugate=not self.conjugate)

    def evaluate(self, x, y, z):
        x, y, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(z, float))
        envelope = np.exp(1j * self.k * x + self.kappa * y - (z / self.waist) ** 2)
        E = self.amplitude * self.scale * envelope[..., None] * np.asarray(self.polarization, dtype=complex)
        return E.conj() if self.conjugate else E

    def evaluate_grid(self, xs, ys, zs):
        X, Y, Z = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float), np.asarray(zs, float), indexing="ij")
        return self.evaluate(X, Y, Z)


def polarized(plus_fraction: float, **kwargs) -> EvanescentField:
    """Field with |e_+* . E|^2 = plus_fraction and the rest in sigma-."""
    vector = np.sqrt(plus_fraction) * SPHERICAL[1] + np.sqrt(1.0 - plus_fraction) * SPHERICAL[-1]
    return EvanescentField(polarization=tuple(vector), **kwargs)


@pytest.fixture
def table():
    return load_transition_table(BUNDLED_DIR / TRANSITIONS_FILE)


@pytest.fixture
def small_params():
    return StructureParams.model_validate(SMALL_STRUCTURE)


@pytest.fixture
def small_solver(small_params):
    return WaveguideSolver(small_params, cutoff_2pi_over_a=2.0, n_bands=6)


@pytest.fixture
def field():
    return EvanescentField()


@pytest.fixture
def structure_file(tmp_path) -> Path:
    path = tmp_path / "structure.json"
    path.write_text(json.dumps(SMALL_STRUCTURE), encoding="utf-8")
    return path


@pytest.fixture
def settings_file(tmp_path):
    def write(extra=None, name="settings.json") -> Path:
        data = {key: dict(value) for key, value in FAST_SETTINGS.items()}
        for key, value in (extra or {}).items():
            data.setdefault(key, {}).update(value)
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return write
