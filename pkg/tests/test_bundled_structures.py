"""Full-supercell checks on the bundled half-W1 structures (minutes each)."""
import json

import numpy as np
import pytest

import main
from core.base import NoPlateauError
from core.data_manager import BUNDLED_DIR
from core.physics.dispersion import (
    OptimizationSpec, cost, group_index_curve, optimize, select_slow_band, window_bands,
)
from core.physics.pwe import WaveguideSolver, guided_mask
from core.settings import load_structure

pytestmark = pytest.mark.slow

NOMINAL = BUNDLED_DIR / "structure_half_w1.json"
OPTIMIZED = BUNDLED_DIR / "structure_optimized.json"
ROW_SHIFTS = np.array([42.7, 14.2, 53.8, -11.2, -3.7, -10.8])


@pytest.fixture(autouse=True)
def ledger_in_tmp(monkeypatch):
    monkeypatch.delenv("SLF_DB_URL", raising=False)
    monkeypatch.delenv("SLF_DATA_DIR", raising=False)


def run(command, config, out, capsys):
    assert main.main([command, "--config", str(config), "--out", str(out)]) == 0
    return json.loads(capsys.readouterr().out)


def plateau_nm(params, spec):
    bands = window_bands(params, spec)
    band = select_slow_band(bands, spec)
    if band is None:
        return 0.0, None
    try:
        report = group_index_curve(bands, band, spec.k_window)
    except NoPlateauError:
        return 0.0, None
    return report.plateau_width_nm, report.plateau.ng_center


def sample_bands(solver, k_over_pi_a=(0.7, 0.8, 0.9)):
    return solver.solve(np.asarray(k_over_pi_a) * np.pi / solver.params.a)


def assert_guided_matched(reference, other, rel):
    """Every guided frequency of ``reference`` has a partner in ``other`` at the same k."""
    samples = np.argwhere(guided_mask(reference))
    assert len(samples) > 0
    for ik, band in samples:
        nu = reference.freqs[ik, band]
        assert np.min(np.abs(other.freqs[ik] - nu)) / nu < rel


def test_nominal_structure_has_gap_and_edge_bands(tmp_path, capsys):
    summary = run("bands", NOMINAL, tmp_path, capsys)
    lo, hi = summary["bulk_gap_THz"]
    assert lo < 384.2 < hi
    assert len(summary["guided_bands"]) >= 2


def test_guided_frequencies_converged_in_cutoff():
    params = load_structure(NOMINAL)
    reference = sample_bands(WaveguideSolver(params, cutoff_2pi_over_a=4.0))
    finer = sample_bands(WaveguideSolver(params, cutoff_2pi_over_a=5.0, n_bands=16))
    assert_guided_matched(reference, finer, 3e-3)


def test_guided_frequencies_independent_of_row_count():
    params = load_structure(NOMINAL)
    solver = WaveguideSolver(params)
    height = solver.eps_map.cell_vectors[1]
    ny = int(round(params.grid.ny * (height + 4 * params.row_spacing) / height))
    taller = params.model_copy(update={"n_rows": 14, "grid": params.grid.model_copy(update={"ny": ny})})
    reference = sample_bands(solver)
    deeper = sample_bands(WaveguideSolver(taller, n_bands=18))
    assert_guided_matched(reference, deeper, 1e-3)


def test_row_shifts_lower_the_cost():
    params = load_structure(NOMINAL)
    spec = OptimizationSpec(target_ng=30.0)
    assert cost(params.with_perturbations(ROW_SHIFTS), spec) < cost(params, spec)


def test_optimized_structure_has_flat_band():
    width, ng_center = plateau_nm(load_structure(OPTIMIZED), OptimizationSpec(k_samples=32))
    assert width >= 4.0
    assert 24.0 <= ng_center <= 32.0


def test_optimizer_opens_plateau_from_nominal_structure():
    params = load_structure(NOMINAL)
    spec = OptimizationSpec(target_ng=30.0, k_samples=32, restarts=1)
    assert plateau_nm(params, spec)[0] < 1.0
    result = optimize(params, spec, seed=0)
    assert result.cost < cost(params, spec)
    width, ng_center = plateau_nm(result.params, spec)
    assert width >= 4.0
    assert 24.0 <= ng_center <= 32.0


def test_coupling_at_nominal_distance(tmp_path, capsys):
    summary = run("purcell", OPTIMIZED, tmp_path, capsys)
    assert 0.8 <= summary["gamma1d_over_gamma0"] <= 2.4
    assert 100.0 / 3.0 <= summary["sigma_plus_over_minus"] <= 300.0


def test_two_color_trap(tmp_path, capsys):
    summary = run("trap", OPTIMIZED, tmp_path, capsys)
    assert 1.0 <= summary["depth_mK"] <= 6.0
    assert 90.0 <= summary["r_min_nm"][1] <= 160.0
    assert 0.0 < summary["beta_thermal"] < 1.0
    assert 0.3 <= summary["intensity_offset_a"] <= 0.5


def test_counter_propagating_pairs_suppress_mf_spread(tmp_path, capsys):
    assert run("zeeman", OPTIMIZED, tmp_path, capsys)["reduction"] >= 0.9
