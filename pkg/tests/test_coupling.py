from dataclasses import dataclass

import numpy as np
import pytest

from core.base import DomainError, NoMinimumError, ZeroVgError
from core.physics.coupling import (
    SPHERICAL, Channel, CouplingMap, beta_factor, beta_thermal, channel_rates, coupling_map, ellipticity, gamma1d,
    periodic_labels, purcell_along_band, sigma_ratio, thermal_coupling,
)

from conftest import EvanescentField, polarized

CYCLING = Channel(F=2, mF=2, q=1, Fp=3)
POS = (0.0, 100.0, 0.0)


@dataclass
class Bowl:
    U: np.ndarray

    def total(self, mF=0):
        return self.U


def grid_axes():
    return np.array([0.0, 53.0, 106.0, 159.0]), np.linspace(20.0, 200.0, 10), np.linspace(-100.0, 100.0, 9)


def bowl_for(xs, ds, zs, d0=100.0, curvature=1e-4):
    X, D, Z = np.meshgrid(xs, ds, zs, indexing="ij")
    return Bowl(curvature * ((D - d0) ** 2 + Z ** 2))


def test_beta_from_rates():
    assert beta_factor(1.0) == pytest.approx(0.5)
    assert beta_factor(3.0, gamma_prime=1.0) == pytest.approx(0.75)
    np.testing.assert_allclose(beta_factor(np.array([0.0, 1.0])), [0.0, 0.5])
    with pytest.raises(DomainError):
        beta_factor(-0.1)


def test_rate_scales_inverse_with_group_velocity(table):
    slow = gamma1d(EvanescentField(vg=0.025), CYCLING, POS, table)
    fast = gamma1d(EvanescentField(vg=0.05), CYCLING, POS, table)
    assert slow / fast == pytest.approx(2.0, rel=1e-10)
    both = gamma1d(EvanescentField(vg=0.05), CYCLING, POS, table, both_directions=True)
    assert both == pytest.approx(2.0 * fast)


def test_band_edge_raises(table):
    with pytest.raises(ZeroVgError):
        gamma1d(EvanescentField(vg=0.0), CYCLING, POS, table)


def test_rate_independent_of_field_scaling(table, field):
    assert gamma1d(field.scaled(7.0), CYCLING, POS, table) == pytest.approx(gamma1d(field, CYCLING, POS, table))


def test_rate_decays_away_from_edge(table, field):
    rates = gamma1d(field, CYCLING, (0.0, np.array([50.0, 100.0, 150.0]), 0.0), table)
    assert rates.shape == (3,)
    assert np.all(np.diff(rates) < 0)
    assert rates[1] / rates[0] == pytest.approx(np.exp(-2.0 * field.kappa * 50.0), rel=1e-10)


def test_time_reversal_swaps_helicity(table):
    field = polarized(0.7)
    forward = gamma1d(field, Channel(2, 0, -1, 3), POS, table)
    backward = gamma1d(field.reversed(), Channel(2, 0, 1, 3), POS, table)
    assert backward == pytest.approx(forward, rel=1e-12)
    assert forward > 0


def test_invalid_channel():
    with pytest.raises(DomainError):
        Channel(F=2, mF=0, q=2, Fp=3)


def test_circular_and_linear_polarization():
    pure = ellipticity(EvanescentField(), [0.0], [100.0], [0.0])
    assert pure.Cz[0, 0, 0] == pytest.approx(1.0)
    assert pure.f_sigma_plus[0, 0, 0] == pytest.approx(1.0)

    linear = ellipticity(EvanescentField(polarization=(1.0, 0.0, 0.0)), [0.0], [100.0], [0.0])
    assert linear.Cz[0, 0, 0] == pytest.approx(0.0, abs=1e-15)
    assert linear.f_sigma_plus[0, 0, 0] == pytest.approx(0.5)


def test_channel_rates_of_stretched_state(table):
    rates = channel_rates(polarized(0.91), 2, 2, POS, table)
    assert set(rates) == {(1, 3.0), (0, 2.0), (0, 3.0), (-1, 1.0), (-1, 2.0), (-1, 3.0)}
    assert rates[(0, 2.0)] == pytest.approx(0.0, abs=1e-30)


def test_sigma_ratio_compares_same_excited_level(table):
    assert sigma_ratio(polarized(0.91), POS, table) == pytest.approx(15.0 * 0.91 / 0.09, rel=1e-9)
    assert sigma_ratio(polarized(1.0), POS, table) > 1e6


def test_coupling_map_shape_and_frame(table, field):
    xs, ds, zs = grid_axes()
    result = coupling_map(field, CYCLING, xs, ds, zs, table, threads=2)
    assert result.shape == (4, 10, 9)
    assert np.all((result.beta >= 0) & (result.beta < 1))
    np.testing.assert_allclose(result.Cz, 1.0)
    frame = result.to_frame()
    assert len(frame) == 4 * 10 * 9
    assert list(frame.columns) == ["x_nm", "y_nm", "z_nm", "gamma1d_over_gamma0", "beta", "Cz", "f_sigma_plus"]
    assert frame["gamma1d_over_gamma0"].iloc[0] == pytest.approx(gamma1d(field, CYCLING, (0.0, 20.0, -100.0), table))


def test_thermal_average_collapses_to_minimum_when_cold(table, field):
    xs, ds, zs = grid_axes()
    coupling = coupling_map(field, CYCLING, xs, ds, zs, table)
    bowl = bowl_for(xs, ds, zs)
    assert beta_thermal(bowl, coupling, 1e-9) == pytest.approx(coupling.beta[0, 4, 4], rel=1e-9)

    warm = beta_thermal(bowl, coupling, 1e-3)
    assert coupling.beta.min() < warm < coupling.beta.max()
    assert thermal_coupling(bowl, coupling, depth_mK=10.0) == pytest.approx(warm)


def test_thermal_average_anchors_on_requested_minimum(table, field):
    xs, ds, zs = grid_axes()
    coupling = coupling_map(field, CYCLING, xs, ds, zs, table)
    X, D, Z = np.meshgrid(xs, ds, zs, indexing="ij")
    two_wells = Bowl(np.minimum(1e-4 * ((D - 60.0) ** 2 + Z ** 2), 1e-4 * ((D - 160.0) ** 2 + Z ** 2) - 0.01))
    near = beta_thermal(two_wells, coupling, 1e-9, r_min=(0.0, 60.0, 0.0))
    far = beta_thermal(two_wells, coupling, 1e-9)
    assert near == pytest.approx(coupling.beta[0, 2, 4], rel=1e-9)
    assert far == pytest.approx(coupling.beta[0, 7, 4], rel=1e-9)


def test_thermal_average_errors(table, field):
    xs, ds, zs = grid_axes()
    coupling = coupling_map(field, CYCLING, xs, ds, zs, table)
    with pytest.raises(DomainError):
        beta_thermal(bowl_for(xs, ds, zs), coupling, 0.0)
    with pytest.raises(NoMinimumError):
        beta_thermal(bowl_for(xs, ds, zs, d0=0.0), coupling, 1e-4)
    with pytest.raises(DomainError, match="grid"):
        beta_thermal(bowl_for(xs[:2], ds, zs), coupling, 1e-4)


def test_purcell_along_band(small_solver, table):
    bands = small_solver.solve(small_solver.k_grid(9))
    frame = purcell_along_band(small_solver, bands, 0, POS, CYCLING, table, k_window=(0.3, 0.9))
    assert list(frame.columns) == ["k_over_pi_a", "freq_THz", "wavelength_nm", "ng", "gamma1d_over_gamma0", "beta"]
    assert len(frame) > 0
    assert frame["k_over_pi_a"].between(0.3, 0.9).all()
    assert (frame["gamma1d_over_gamma0"] >= 0).all()
    np.testing.assert_allclose(frame["beta"], frame["gamma1d_over_gamma0"] / (1.0 + frame["gamma1d_over_gamma0"]))


def test_spherical_basis_is_orthonormal():
    for q, e in SPHERICAL.items():
        for p, f in SPHERICAL.items():
            assert np.vdot(e, f) == pytest.approx(1.0 if p == q else 0.0)


def test_labels_join_across_periodic_x():
    mask = np.zeros((6, 3, 3), dtype=bool)
    mask[[0, 1, 5], 1, 1] = True
    mask[3, 1, 1] = True
    labels = periodic_labels(mask)
    assert labels[0, 1, 1] == labels[1, 1, 1] == labels[5, 1, 1]
    assert labels[3, 1, 1] not in (0, labels[0, 1, 1])
    assert not labels[~mask].any()


def test_thermal_average_follows_basin_across_cell_edge():
    a = 212.0
    xs = np.arange(8) * a / 8
    ds, zs = np.linspace(20.0, 200.0, 10), np.linspace(-100.0, 100.0, 9)
    X, D, Z = np.meshgrid(xs, ds, zs, indexing="ij")
    theta = 2.0 * np.pi * X / a
    U = 0.2 * (1.0 - np.cos(theta)) + 1e-4 * ((D - 100.0) ** 2 + Z ** 2)
    beta = 0.5 + 0.2 * np.sin(theta) + 0.1 * np.cos(theta) + 1e-3 * (D - 100.0)

    def average(shift):
        rolled = np.roll(beta, shift, axis=0)
        coupling = CouplingMap(xs=xs, ds=ds, zs=zs, gamma1d_over_gamma0=rolled, beta=rolled, Cz=rolled,
                               f_sigma_plus=rolled, channel=CYCLING)
        return beta_thermal(Bowl(np.roll(U, shift, axis=0)), coupling, 2e-5)

    assert average(0) == pytest.approx(average(4), rel=1e-9)
    assert average(0) == pytest.approx(beta_thermal(Bowl(U), CouplingMap(
        xs=xs, ds=ds, zs=zs, gamma1d_over_gamma0=beta, beta=beta, Cz=beta, f_sigma_plus=beta, channel=CYCLING,
    ), 2e-5, r_min=(a - 1.0, 100.0, 0.0)), rel=1e-9)
