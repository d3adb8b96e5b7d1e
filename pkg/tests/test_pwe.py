import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import j1

from core.base import DomainError, NoGuidedBandError
from core.physics import C_NM_THZ
from core.physics.coupling import ellipticity_vector
from core.physics.lattice import DielectricMap, fourier_coefficients, periodic_offset, supersample
from core.physics.pwe import (
    BandSet, ReciprocalBasis, classify_guided_bands, mode_at_frequency, slab_effective_index, solve_bands,
)


def uniform_map(eps: float, cell=(200.0, 400.0), grid=(32, 64)) -> DielectricMap:
    return DielectricMap(eps_grid=np.full(grid, eps), cell_vectors=cell, y_origin=0.0, n_eff=np.sqrt(eps))


def test_empty_lattice_matches_folded_light_lines():
    eps = 2.25
    eps_map = uniform_map(eps)
    basis = ReciprocalBasis.circular(eps_map.cell_vectors, 3.0 * 2.0 * np.pi / 200.0)
    ks = np.linspace(0.0, np.pi / 200.0, 5)
    bands = solve_bands(eps_map, basis, ks, n_bands=6)
    for ik, k in enumerate(ks):
        norms = np.sort(np.hypot(k + basis.g_vectors[:, 0], basis.g_vectors[:, 1]))[:6]
        expected = C_NM_THZ * norms / (2.0 * np.pi * np.sqrt(eps))
        np.testing.assert_allclose(np.sort(bands.freqs[ik]), expected, rtol=1e-6, atol=1e-9)


def _transfer_matrix_edges(n1, d1, n2, d2):
    """First-gap edges (omega / c, rad/nm) of a two-layer stack at K a = pi."""
    def excess(q):
        return (np.cos(n1 * q * d1) * np.cos(n2 * q * d2)
                - 0.5 * (n1 / n2 + n2 / n1) * np.sin(n1 * q * d1) * np.sin(n2 * q * d2) + 1.0)

    qs = np.linspace(1e-4, 0.012, 20001)
    values = excess(qs)
    down = int(np.flatnonzero((values[:-1] > 0) & (values[1:] <= 0))[0])
    up = int(np.flatnonzero((values[:-1] <= 0) & (values[1:] > 0))[0])
    return brentq(excess, qs[down], qs[down + 1]), brentq(excess, qs[up], qs[up + 1])


def test_bragg_stack_gap_edges_match_transfer_matrix():
    a, n1, n2 = 200.0, 3.0, 1.5
    nx = 256
    xs = np.arange(nx) * a / nx
    eps_grid = np.where(xs < 100.0, n1 ** 2, n2 ** 2)[:, None] * np.ones((1, 32))
    eps_map = DielectricMap(eps_grid=eps_grid, cell_vectors=(a, 50.0), y_origin=0.0, n_eff=n1)
    basis = ReciprocalBasis.for_map(eps_map, 20.0)
    bands = solve_bands(eps_map, basis, [np.pi / a], n_bands=2)

    lower, upper = _transfer_matrix_edges(n1, 100.0, n2, 100.0)
    q = 2.0 * np.pi * np.sort(bands.freqs[0]) / C_NM_THZ
    assert q[0] == pytest.approx(lower, rel=5e-3)
    assert q[1] == pytest.approx(upper, rel=5e-3)


def test_disk_fourier_coefficients_follow_bessel_profile():
    a, r, nx = 200.0, 60.0, 128
    xs = np.arange(nx) * a / nx

    def disk(x, y):
        return periodic_offset(x, a) ** 2 + periodic_offset(y, a) ** 2 < r ** 2

    fill = supersample(xs, xs, (a / nx, a / nx), 8, disk)
    eps_map = DielectricMap(eps_grid=4.0 - 3.0 * fill, cell_vectors=(a, a), y_origin=0.0, n_eff=2.0)
    basis = ReciprocalBasis.circular((a, a), 2.0 * 2.0 * np.pi / a)
    fourier = fourier_coefficients(eps_map, basis)

    zero = int(np.flatnonzero((basis.m_indices == 0).all(axis=1))[0])
    f = np.pi * r ** 2 / a ** 2
    g = np.hypot(basis.g_vectors[:, 0], basis.g_vectors[:, 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        expected = np.where(g > 0, -3.0 * f * 2.0 * j1(g * r) / (g * r), 4.0 - 3.0 * f)
    np.testing.assert_allclose(fourier.eps_hat[:, zero].real, expected, atol=5e-3)
    np.testing.assert_allclose(fourier.eps_hat[:, zero].imag, 0.0, atol=1e-10)


def test_slab_mode_satisfies_te_dispersion():
    slab = slab_effective_index(3.34, 150.0, 780.0)
    k0 = 2.0 * np.pi / 780.0
    assert 1.0 < slab.n_eff < 3.34
    assert slab.k_in * np.tan(slab.k_in * 75.0) == pytest.approx(slab.kappa, rel=1e-8)
    assert slab.k_in ** 2 + slab.kappa ** 2 == pytest.approx(k0 ** 2 * (3.34 ** 2 - 1.0), rel=1e-10)
    assert slab.profile(0.0) == pytest.approx(1.0)
    assert slab.inside_weight + slab.outside_weight == pytest.approx(slab.z_weight)


def test_slab_index_limits():
    assert slab_effective_index(3.34, 5.0, 780.0).n_eff < 1.05
    assert slab_effective_index(3.34, 5000.0, 780.0).n_eff > 0.99 * 3.34
    with pytest.raises(DomainError):
        slab_effective_index(1.0, 150.0, 780.0)


def linear_bands(ng: float = 4.0, n_k: int = 33, a: float = 212.0) -> BandSet:
    ks = np.linspace(0.0, np.pi / a, n_k)
    freqs = (C_NM_THZ * ks / (2.0 * np.pi * ng))[:, None]
    return BandSet(k=ks, freqs=freqs, tracking=np.zeros((n_k, 1), dtype=int), a=a,
                   vg=np.full((n_k, 1), 1.0 / ng), edge_fraction=np.ones((n_k, 1)))


def test_mode_at_frequency_interpolates_k():
    bands = linear_bands()
    nu = 0.6 * bands.freqs[-1, 0]
    band, k = mode_at_frequency(bands, nu)
    assert band == 0
    assert k == pytest.approx(0.6 * np.pi / 212.0, rel=1e-9)
    with pytest.raises(NoGuidedBandError):
        mode_at_frequency(bands, 2.0 * bands.freqs[-1, 0])


def test_classify_guided_bands_respects_gap():
    bands = linear_bands()
    top = bands.freqs[-1, 0]
    guided = classify_guided_bands(bands, (0.25 * top, 0.75 * top))
    assert len(guided) == 1
    assert guided[0].k_min >= 0.25 and guided[0].k_max <= 0.75
    assert classify_guided_bands(bands, (2.0 * top, 3.0 * top)) == []


def test_solver_tracks_bands(small_solver):
    bands = small_solver.solve(small_solver.k_grid(9))
    assert bands.freqs.shape == (9, 6)
    assert np.all(bands.freqs[1:] > 0)
    assert np.all(bands.freqs < 1e4)
    assert sorted(bands.tracking[4]) == list(range(6))
    frame = bands.to_frame()
    assert list(frame.columns) == ["k_over_pi_a", "band_index", "freq_THz", "vg_over_c", "ng"]
    assert len(frame) == 9 * 6


def test_bloch_periodicity_and_time_reversal(small_solver, small_params):
    a = small_params.a
    k = 0.5 * np.pi / a
    mode = small_solver.mode(k, 0)
    x = np.linspace(0.0, a, 7)
    y = np.full_like(x, -40.0)
    np.testing.assert_allclose(mode.evaluate(x + a, y), np.exp(1j * k * a) * mode.evaluate(x, y),
                               atol=1e-12 * np.abs(mode.evaluate(x, y)).max())

    backward = small_solver.mode(-k, 0)
    forward_intensity = np.sum(np.abs(mode.E_inplane) ** 2, axis=-1)
    backward_intensity = np.sum(np.abs(backward.E_inplane) ** 2, axis=-1)
    np.testing.assert_allclose(backward_intensity, forward_intensity, atol=1e-6 * forward_intensity.max())
    assert backward.freq == pytest.approx(mode.freq, rel=1e-10)


def test_hellmann_feynman_matches_finite_difference(small_solver, small_params):
    mode = small_solver.mode(0.5 * np.pi / small_params.a, 0)
    assert mode.vg_hf == pytest.approx(mode.vg, rel=1e-2)


def test_mode_and_field_are_energy_normalized(small_solver, small_params):
    k = 0.5 * np.pi / small_params.a
    assert small_solver.mode(k, 0).energy() == pytest.approx(1.0, rel=1e-10)
    field = small_solver.field(k, 0)
    assert field.energy() == pytest.approx(1.0, rel=1e-10)
    assert field.scaled(3.0).energy() == pytest.approx(9.0, rel=1e-10)
    point = field.evaluate(10.0, -30.0, 20.0)
    np.testing.assert_allclose(field.reversed().evaluate(10.0, -30.0, 20.0), point.conj())
    assert point[..., 2] == 0


def test_reversed_wavevector_gives_conjugate_mode(small_solver, small_params):
    k = 0.5 * np.pi / small_params.a
    x, y = np.meshgrid(np.linspace(0.0, small_params.a, 9), np.linspace(-60.0, 200.0, 7), indexing="ij")
    forward = small_solver.mode(k, 0).evaluate(x, y)
    backward = small_solver.mode(-k, 0).evaluate(x, y)
    overlap = np.vdot(forward.conj(), backward)
    phase = overlap / abs(overlap)
    np.testing.assert_allclose(backward, phase * forward.conj(), atol=1e-6 * np.abs(forward).max())

    xs, ys, zs = np.linspace(0.0, small_params.a, 5), -np.array([20.0, 60.0, 100.0]), np.array([-30.0, 0.0, 30.0])
    c_forward = ellipticity_vector(small_solver.field(k, 0).evaluate_grid(xs, ys, zs))
    c_backward = ellipticity_vector(small_solver.field(-k, 0).evaluate_grid(xs, ys, zs))
    assert np.nanmax(np.abs(c_forward)) > 0.05
    np.testing.assert_allclose(c_backward, -c_forward, atol=1e-6)
