"""Ensembles, refinement studies, twin runs, checkpoint round trips."""

import numpy as np
import pytest

from stcns.errors import CheckpointError, StcnsError
from stcns.harness import (
    checkpoint_load,
    checkpoint_save,
    ensemble_run,
    refinement_study,
    resume_run,
    twin_run,
)
from stcns.integrator import Problem, SchemeConfig, run
from stcns.model import LogisticSpec, PotentialSpec, SystemState, TamingSpec
from stcns.noise import NoiseSpec
from stcns.spectral import ScalarField
from conftest import random_velocity


@pytest.fixture(scope="module")
def setup16():
    from stcns.spectral import TorusGrid
    grid = TorusGrid(16)
    X, Y, Z = grid.meshgrid()
    n = ScalarField.from_samples(grid, 0.6 + 0.2 * np.cos(X) + 0.1 * np.sin(Y) * np.cos(Z))
    c = ScalarField.from_samples(grid, 1.0 + 0.3 * np.sin(X) * np.cos(Y))
    initial = SystemState(n, c, random_velocity(grid, 7, band=3, amplitude=0.3))
    problem = Problem(PotentialSpec.sin_x3(grid), LogisticSpec(0.25), TamingSpec(),
                      NoiseSpec(sigma0=0.1))
    return grid, initial, problem


class TestEnsemble:
    def test_single_path_deterministic(self, setup16):
        _, initial, problem = setup16
        scheme = SchemeConfig(dt=1e-3, T=0.01)
        a = ensemble_run(initial, scheme, problem, 11, 1, p_list=(1.0, 2.0), workers=1)
        b = ensemble_run(initial, scheme, problem, 11, 1, p_list=(1.0, 2.0), workers=1)
        assert a.sup_F == b.sup_F and a.int_G == b.int_G
        assert a.sup_F_moments == b.sup_F_moments

    def test_noise_off_zero_variance(self, setup16):
        grid, initial, _ = setup16
        problem = Problem(PotentialSpec.sin_x3(grid), LogisticSpec(0.25), TamingSpec(),
                          NoiseSpec(kind="off"))
        scheme = SchemeConfig(dt=1e-3, T=0.005)
        rep = ensemble_run(initial, scheme, problem, 0, 4, workers=1)
        assert max(rep.sup_F) - min(rep.sup_F) == 0.0
        assert rep.sup_F_moments[1.0][1] == 0.0  # zero half-width

    def test_parallel_matches_serial(self, setup16):
        _, initial, problem = setup16
        scheme = SchemeConfig(dt=1e-3, T=0.005)
        serial = ensemble_run(initial, scheme, problem, 3, 4, workers=1)
        parallel = ensemble_run(initial, scheme, problem, 3, 4, workers=2)
        assert serial.sup_F == parallel.sup_F
        assert serial.int_G == parallel.int_G

    def test_path_count_validation(self, setup16):
        _, initial, problem = setup16
        with pytest.raises(ValueError):
            ensemble_run(initial, SchemeConfig(dt=1e-3, T=0.002), problem, 0, 0)


class TestRefinement:
    def test_k_axis_trivial_when_band_limited(self, setup16):
        # initial data supported strictly below every level: truncation inactive
        grid, initial, _ = setup16
        problem = Problem(PotentialSpec.sin_x3(grid), LogisticSpec(0.25), TamingSpec(),
                          NoiseSpec(sigma0=0.1))
        scheme = SchemeConfig(dt=1e-3, T=0.004, variant="truncated", k=8.0, cutoff_R=100.0)
        # band of everything (including products over a few steps) < smallest k
        report = refinement_study(initial, scheme, problem, 5, 0, "k",
                                  [100.0, 200.0, 400.0], output_times=[0.004])
        assert max(report.errors) <= 1e-12

    def test_dt_axis_order(self, setup16):
        grid, initial, _ = setup16
        problem = Problem(PotentialSpec.sin_x3(grid), LogisticSpec(0.25), TamingSpec(),
                          NoiseSpec(kind="off"))
        scheme = SchemeConfig(dt=1e-3, T=0.016)
        report = refinement_study(initial, scheme, problem, 0, 0, "dt",
                                  [4e-3, 2e-3, 1e-3, 5e-4], output_times=[0.016])
        assert report.failures == {}
        assert all(np.isfinite(report.errors))
        assert report.errors[0] > report.errors[1] > report.errors[2]
        assert report.observed_order >= 0.9

    def test_level_validation(self, setup16):
        _, initial, problem = setup16
        scheme = SchemeConfig(dt=1e-3, T=0.002)
        with pytest.raises(ValueError):
            refinement_study(initial, scheme, problem, 0, 0, "k", [4.0, 8.0])
        with pytest.raises(ValueError):
            refinement_study(initial, scheme, problem, 0, 0, "bogus", [1, 2, 3])


class TestTwin:
    def test_zero_delta_bit_identical(self, setup16):
        _, initial, problem = setup16
        scheme = SchemeConfig(dt=1e-3, T=0.01)
        rep = twin_run(initial, scheme, problem, 9, 0, 0.0)
        assert rep.digests_match
        assert max(rep.divergence) == 0.0

    def test_linear_response(self, setup16):
        # divergence curves of delta and delta/10 perturbations scale by 10
        _, initial, problem = setup16
        scheme = SchemeConfig(dt=1e-3, T=0.01)
        rep1 = twin_run(initial, scheme, problem, 9, 0, 1e-6)
        rep2 = twin_run(initial, scheme, problem, 9, 0, 1e-7)
        assert rep1.digests_match and rep2.digests_match
        assert rep1.divergence[0] == pytest.approx(1e-6, rel=1e-6)
        ratios = [a / b for a, b in zip(rep1.divergence[1:], rep2.divergence[1:])]
        for r in ratios:
            assert 8.0 <= r <= 12.0

    def test_perturbation_modes(self, setup16):
        _, initial, problem = setup16
        scheme = SchemeConfig(dt=1e-3, T=0.002)
        for mode in ("u", "n", "c"):
            rep = twin_run(initial, scheme, problem, 9, 0, 1e-6, perturbation_mode=mode)
            assert rep.divergence[0] == pytest.approx(1e-6, rel=1e-6)
        with pytest.raises(ValueError):
            twin_run(initial, scheme, problem, 9, 0, 1e-6, perturbation_mode="bogus")


class TestCheckpoint:
    def test_save_load_bit_exact(self, setup16, tmp_path):
        _, initial, problem = setup16
        scheme = SchemeConfig(dt=1e-3, T=0.004)
        traj = run(initial, scheme, problem, 4, 2, [0.004], diagnostics_mode="none")
        path = tmp_path / "state.stcn"
        checkpoint_save(traj, scheme, path)
        loaded, stored = checkpoint_load(path)
        for a, b in zip(loaded.states[0].spectral_arrays(),
                        traj.states[-1].spectral_arrays()):
            assert a.tobytes() == b.tobytes()
        assert loaded.seed == 4 and loaded.path_id == 2
        assert stored["variant"] == "exact" and stored["dt"] == 1e-3

    def test_resume_matches_unbroken(self, setup16, tmp_path):
        _, initial, problem = setup16
        full_scheme = SchemeConfig(dt=1e-3, T=0.01)
        half_scheme = SchemeConfig(dt=1e-3, T=0.005)
        full = run(initial, full_scheme, problem, 4, 0, [0.01], diagnostics_mode="entropy")
        half = run(initial, half_scheme, problem, 4, 0, [0.005], diagnostics_mode="entropy")
        path = tmp_path / "half.stcn"
        checkpoint_save(half, half_scheme, path)
        resumed = resume_run(path, full_scheme, problem, [0.01])
        for a, b in zip(resumed.states[-1].spectral_arrays(),
                        full.states[-1].spectral_arrays()):
            assert a.tobytes() == b.tobytes()
        # diagnostics after the resume point agree with the unbroken stream
        tail = [r.F_total for r in full.records if r.t > 0.005 + 1e-12]
        resumed_tail = [r.F_total for r in resumed.records if r.t > 0.005 + 1e-12]
        assert tail == resumed_tail

    def test_truncated_file_rejected(self, setup16, tmp_path):
        _, initial, problem = setup16
        scheme = SchemeConfig(dt=1e-3, T=0.002)
        traj = run(initial, scheme, problem, 0, 0, [0.002], diagnostics_mode="none")
        path = tmp_path / "x.stcn"
        checkpoint_save(traj, scheme, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-20])
        with pytest.raises(CheckpointError):
            checkpoint_load(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.stcn"
        path.write_bytes(b"NOPE" + bytes(200))
        with pytest.raises(CheckpointError):
            checkpoint_load(path)

    def test_grid_mismatch_rejected(self, setup16, tmp_path):
        from stcns.spectral import TorusGrid
        _, initial, problem = setup16
        scheme = SchemeConfig(dt=1e-3, T=0.002)
        traj = run(initial, scheme, problem, 0, 0, [0.002], diagnostics_mode="none")
        path = tmp_path / "x.stcn"
        checkpoint_save(traj, scheme, path)
        with pytest.raises(CheckpointError):
            checkpoint_load(path, expected_grid=TorusGrid(32))

    def test_scheme_mismatch_on_resume(self, setup16, tmp_path):
        _, initial, problem = setup16
        scheme = SchemeConfig(dt=1e-3, T=0.002)
        traj = run(initial, scheme, problem, 0, 0, [0.002], diagnostics_mode="none")
        path = tmp_path / "x.stcn"
        checkpoint_save(traj, scheme, path)
        with pytest.raises(CheckpointError):
            resume_run(path, SchemeConfig(dt=5e-4, T=0.004), problem, [0.004])
