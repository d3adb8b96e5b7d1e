import warnings

import numpy as np
import pytest
import scipy.constants as sc

from core.base import ConfigError, ConvergenceError, TableRangeError
from core.data_manager import BUNDLED_DIR, PERMITTIVITY_FILE
from core.physics.casimir import (
    EV_TO_RAD_S, GAINP_DAMPING, GAINP_OSCILLATORS_EV, CasimirCoefficient, PermittivityTable, compute_c3,
    eps_imaginary_axis, gainp_oscillator_strengths, gainp_two_oscillator_table, load_permittivity_table, lorentz_table,
)

GAINP_REFERENCE_HZ_UM3 = 1391.0


@pytest.fixture(scope="module")
def gainp():
    return gainp_two_oscillator_table()


def test_kramers_kronig_matches_lorentz_oscillator():
    strength, center, damping = 2.0, 4.0, 0.05
    energies = np.linspace(0.01, 100.0, 20001)
    table = lorentz_table([strength], [center], damping, energies, provenance="lorentz")
    xi_eV = np.array([1.0, 2.0, 5.0, 10.0])
    exact = 1.0 + strength * center ** 2 / (center ** 2 + xi_eV ** 2 + damping * center * xi_eV)
    np.testing.assert_allclose(eps_imaginary_axis(table, xi_eV * EV_TO_RAD_S), exact, rtol=5e-3)


def test_imaginary_axis_permittivity_decreases(gainp):
    eps = eps_imaginary_axis(gainp, np.geomspace(1e13, 1e17, 20))
    assert np.all(eps > 1.0)
    assert np.all(np.diff(eps) < 0)
    with pytest.raises(ValueError):
        eps_imaginary_axis(gainp, [0.0])


def test_single_pole_perfect_conductor(table):
    omega0, weight = 2.4e15, 5e-39 * 2.4e15 ** 2
    result = compute_c3(None, table, polarizability_fn=lambda xi: weight / (omega0 ** 2 + xi ** 2))
    expected = sc.hbar / (16.0 * np.pi ** 2 * sc.epsilon_0) * weight * np.pi / (2.0 * omega0)
    assert result.c3_SI == pytest.approx(expected, rel=1e-4)
    assert result.source == "perfect conductor"


def test_default_range_keeps_end_pieces_negligible(table):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        result = compute_c3(None, table)
    assert result.c3_spectroscopic == pytest.approx(2180.0, rel=0.02)


def test_gainp_model_near_reference(table, gainp):
    result = compute_c3(gainp, table)
    assert result.c3_spectroscopic == pytest.approx(GAINP_REFERENCE_HZ_UM3, rel=0.25)
    assert result.quadrature_error < 0.01
    assert result.source == "two-oscillator GaInP model"
    assert compute_c3(None, table).c3_SI > result.c3_SI


def test_short_range_fails(table):
    with pytest.raises(ConvergenceError, match="above"):
        compute_c3(None, table, xi_range=(1e8, 1e18))
    with pytest.raises(ConvergenceError, match="below"):
        compute_c3(None, table, xi_range=(1e13, 1e22))


def test_table_span_and_ordering():
    with pytest.raises(TableRangeError):
        PermittivityTable(energy_eV=np.linspace(1.0, 5.0, 50), eps1=np.ones(50), eps2=np.zeros(50))
    with pytest.raises(ConfigError):
        PermittivityTable(energy_eV=np.array([0.1, 3.0, 2.0, 8.0]), eps1=np.ones(4), eps2=np.zeros(4))


def test_permittivity_file(tmp_path):
    good = tmp_path / "good.csv"
    energies = np.linspace(0.1, 20.0, 200)
    rows = "\n".join(f"{e},{1.0},{0.0}" for e in energies)
    good.write_text("# measured\nenergy_eV,eps1,eps2\n" + rows + "\n")
    loaded = load_permittivity_table(good)
    assert loaded.provenance == "good.csv"
    assert len(loaded.energy_eV) == 200

    bad = tmp_path / "bad.csv"
    bad.write_text("energy,eps_real,eps_imag\n0.1,1,0\n20,1,0\n")
    with pytest.raises(ConfigError, match="columns"):
        load_permittivity_table(bad)


def test_spectroscopic_units_round_trip():
    coefficient = CasimirCoefficient.from_si(GAINP_REFERENCE_HZ_UM3 * sc.h * 1e-18, 0.0, "reference")
    assert coefficient.c3_spectroscopic == pytest.approx(GAINP_REFERENCE_HZ_UM3, rel=1e-12)
    assert set(coefficient.to_dict()) == {"c3_Hz_um3", "c3_SI", "quadrature_error", "source"}


def gainp_analytic(xi_eV):
    eps = np.ones_like(xi_eV)
    for strength, center in zip(gainp_oscillator_strengths(), GAINP_OSCILLATORS_EV):
        eps += strength * center ** 2 / (center ** 2 + xi_eV ** 2 + GAINP_DAMPING * center * xi_eV)
    return eps


def test_gainp_model_is_kramers_kronig_consistent(gainp):
    xi_eV = np.array([1e-3, 0.5, 1.6, 5.0, 20.0])
    np.testing.assert_allclose(eps_imaginary_axis(gainp, xi_eV * EV_TO_RAD_S), gainp_analytic(xi_eV), rtol=2e-2)
    assert eps_imaginary_axis(gainp, [1e-3 * EV_TO_RAD_S])[0] == pytest.approx(9.5, rel=2e-2)


def test_bundled_table_matches_model(table, gainp):
    bundled = load_permittivity_table(BUNDLED_DIR / PERMITTIVITY_FILE)
    assert bundled.provenance == PERMITTIVITY_FILE
    xi = np.geomspace(1e13, 1e17, 9)
    np.testing.assert_allclose(eps_imaginary_axis(bundled, xi), eps_imaginary_axis(gainp, xi), rtol=1e-2)
    result = compute_c3(bundled, table)
    assert result.c3_spectroscopic == pytest.approx(compute_c3(gainp, table).c3_spectroscopic, rel=1e-2)
    assert result.c3_spectroscopic == pytest.approx(GAINP_REFERENCE_HZ_UM3, rel=0.25)
