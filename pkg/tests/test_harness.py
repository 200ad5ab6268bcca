import math

import pytest

from slipflat.controller import ControllerConfig, Scheme, deadbeat_build
from slipflat.dynamics import IntegratorConfig
from slipflat.harness import (
    DEADBEAT_AFTER,
    DEADBEAT_BEFORE,
    PROPOSED,
    NoiseSpec,
    RoaGridSpec,
    accumulated_apex_error,
    noise_sweep,
    roa_sweep,
)
from slipflat.model import SlipParams

P = SlipParams()
DESIRED = (1.02, 4.5)


class TestAccumulatedError:
    def test_exact_apexes_score_zero(self):
        log = [DESIRED] * 8
        assert accumulated_apex_error(log, DESIRED, 8) == 0.0

    def test_single_offset(self):
        log = [DESIRED] * 8
        log[3] = (DESIRED[0] + 0.1, DESIRED[1])
        assert accumulated_apex_error(log, DESIRED, 8) == pytest.approx(0.01)

    def test_short_log_is_infinite(self):
        log = [DESIRED] * 3
        assert math.isinf(accumulated_apex_error(log, DESIRED, 8))

    def test_counts_only_first_n(self):
        log = [DESIRED] * 8 + [(99.0, 99.0)]
        assert accumulated_apex_error(log, DESIRED, 8) == 0.0


@pytest.fixture(scope="module")
def tiny_grid():
    return RoaGridSpec(z_min=1.02, z_max=1.10, dy_min=4.3, dy_max=4.5, n_z=2, n_dy=2)


@pytest.fixture(scope="module")
def baseline():
    return deadbeat_build(P, DESIRED, IntegratorConfig())


class TestRoaSweep:
    def test_desired_cell_converges_all_scenarios(self, tiny_grid, baseline):
        cfg = ControllerConfig()
        for scenario in (PROPOSED, DEADBEAT_BEFORE, DEADBEAT_AFTER):
            grid = roa_sweep(tiny_grid, scenario, P, cfg, baseline=baseline)
            cell = next(r for r in grid.records if r.apex_z == 1.02 and abs(r.apex_dy - 4.5) < 1e-12)
            assert cell.converged, (scenario, cell)
            assert cell.steps_to_converge >= 1
            assert cell.acc_error < 1.0

    def test_records_cover_grid(self, tiny_grid, baseline):
        cfg = ControllerConfig()
        grid = roa_sweep(tiny_grid, DEADBEAT_BEFORE, P, cfg, baseline=baseline)
        assert len(grid.records) == 4
        assert len({(r.apex_z, r.apex_dy) for r in grid.records}) == 4

    def test_deterministic(self, tiny_grid, baseline):
        cfg = ControllerConfig()
        a = roa_sweep(tiny_grid, DEADBEAT_AFTER, P, cfg, seed=3, baseline=baseline)
        b = roa_sweep(tiny_grid, DEADBEAT_AFTER, P, cfg, seed=3, baseline=baseline)
        assert a.records == b.records

    def test_parallel_matches_serial(self, tiny_grid, baseline):
        cfg = ControllerConfig()
        a = roa_sweep(tiny_grid, DEADBEAT_BEFORE, P, cfg, jobs=2, baseline=baseline)
        b = roa_sweep(tiny_grid, DEADBEAT_BEFORE, P, cfg, jobs=1, baseline=baseline)
        assert a.records == b.records

    def test_unknown_scenario_rejected(self, tiny_grid):
        with pytest.raises(ValueError):
            roa_sweep(tiny_grid, "nonsense", P, ControllerConfig())


class TestNoiseSweep:
    def test_zero_level_is_tight(self):
        spec = NoiseSpec(levels=(0.0,), schemes=(Scheme.EVENT_TRIGGERED,), n_seeds=2, n_steps=8, trailing=5)
        study = noise_sweep(spec, P, ControllerConfig(), seed=0)
        s = study.stat(0.0, Scheme.EVENT_TRIGGERED)
        assert s.survived
        assert s.std_z < 1e-3
        assert s.std_dy < 1e-3
        assert s.handled

    def test_rows_exported_per_apex(self):
        spec = NoiseSpec(levels=(0.0,), schemes=(Scheme.EVENT_TRIGGERED,), n_seeds=2, n_steps=6, trailing=4)
        study = noise_sweep(spec, P, ControllerConfig(), seed=0)
        assert len(study.runs) == 2
        assert all(len(r.apexes) == 6 for r in study.runs)

    def test_deterministic_given_seed(self):
        spec = NoiseSpec(levels=(0.3,), schemes=(Scheme.EVENT_TRIGGERED,), n_seeds=2, n_steps=5, trailing=3)
        a = noise_sweep(spec, P, ControllerConfig(), seed=5)
        b = noise_sweep(spec, P, ControllerConfig(), seed=5)
        assert a.runs == b.runs
