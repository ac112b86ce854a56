"""Long runs on the shipped cases. Enable with DTCOOK_SLOW_TESTS=1."""
import os
import shutil
import tempfile
import unittest

import numpy as np

from conf import settings
from records.case import load_case
from tools.dtcook_excite import AprbsSpec, case_seeds, constant_signal, generate_aprbs
from tools.dtcook_fom import FomCase, grid_convergence
from tools.dtcook_pipeline import PipelineConfig, run_pipeline
from tools.dtcook_twin import bench_speedup, import_model, scenario_fanout, timed_predict

@unittest.skipUnless(settings._SLOW_TESTS, 'slow acceptance runs (set DTCOOK_SLOW_TESTS=1)')
class TestBenchmarkCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.case = FomCase.from_definition(load_case())
        cls.trajectory = cls.case.run()

    def test_runs_to_the_case_horizon(self):
        self.assertEqual(self.trajectory.times[-1], self.case.t_end)

    def test_moisture_balance(self):
        moisture = self.trajectory.probe('moisture_kgm2')
        loss = self.trajectory.probe('massloss_kgm2')
        self.assertAlmostEqual(moisture[0] - moisture[-1], loss[-1], delta=0.005 * loss[-1])

    def test_bounded_by_the_oven(self):
        ceiling = max(self.case.T_init, self.case.boundary.T_oven)
        for state in self.trajectory.states:
            self.assertTrue(np.all(state.T <= ceiling + 1e-9))
            s_w, s_g = state.saturations(self.case.material)
            np.testing.assert_allclose(s_w + s_g, 1.0, rtol=0.0, atol=1e-12)

    def test_evaporation_holds_the_surface_down(self):
        T = self.trajectory.probe('T_surf_K')
        wet = self.trajectory.probe('S_w_surf') > 0.25
        self.assertTrue(wet[0])
        self.assertTrue(np.all(T[wet] < 350.0))
        without = self.case.replace(material=self.case.material.replace(k_evap=0.0)).with_boundary(h_m=0.0).run()
        self.assertLess(T[-1], without.probe('T_surf_K')[-1] - 5.0)

    def test_grid_convergence(self):
        report = grid_convergence(self.case, [41, 82, 164, 328])
        self.assertLess(report.deviations[0], 1.0)

@unittest.skipUnless(settings._SLOW_TESTS, 'slow acceptance runs (set DTCOOK_SLOW_TESTS=1)')
class TestPipeline(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.directory = tempfile.mkdtemp()
        cls.definition = load_case(settings._PIPELINE_CASE_FILE)
        cls.serial = run_pipeline(PipelineConfig.from_case(cls.definition, os.path.join(cls.directory, 'serial'),
            workers=1))
        cls.parallel = run_pipeline(PipelineConfig.from_case(cls.definition, os.path.join(cls.directory, 'parallel'),
            workers=2))
        cls.model = import_model(cls.serial.model_path)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.directory)

    def test_layout(self):
        self.assertEqual(len(self.serial.report.nonlinear), 5)
        self.assertEqual(self.model.metadata['training_cases'], ['train-00', 'train-01', 'train-02', 'train-03'])

    def test_deterministic_across_workers(self):
        self.assertEqual(import_model(self.parallel.model_path).coefficients, self.model.coefficients)
        self.assertEqual([r.rmse for r in self.parallel.report.nonlinear],
            [r.rmse for r in self.serial.report.nonlinear])

    def test_training_fit(self):
        self.assertLessEqual(self.model.metadata['one_step_rmse'], 0.5)

    def test_unseen_cases(self):
        for report in self.serial.report.nonlinear:
            self.assertLessEqual(report.rmse, 2.0)
            self.assertLessEqual(report.max_abs_error, 5.0)

    def test_nonlinear_beats_linear(self):
        self.assertGreaterEqual(self.serial.report.rmse_ratio, 3.0)

    def test_prediction_speed(self):
        warmup = np.full(self.model.max_lag, self.definition.initial.T)
        oven = constant_signal(450.0, 10000.0, self.model.sampling_interval)
        _, report = timed_predict(self.model, oven, warmup)
        self.assertLess(report.wall_time, 1.0)
        hour = constant_signal(450.0, 3600.0, self.model.sampling_interval)
        _, report = timed_predict(self.model, hour, warmup)
        self.assertGreaterEqual(report.predictions_per_minute_1h, 100.0)

    def test_fanout(self):
        aprbs = self.definition.aprbs
        candidates = [generate_aprbs(AprbsSpec(aprbs.T_lo, aprbs.T_hi, aprbs.hold, aprbs.f_lo, aprbs.f_hi,
            3600.0, seed), self.model.sampling_interval) for seed in case_seeds(1, 8)]
        warmup = np.full(self.model.max_lag, self.definition.initial.T)
        results, report = scenario_fanout(self.model, candidates, warmup, workers=4)
        self.assertEqual(report.n_predictions, 8)
        self.assertEqual(len(results), 8)

    def test_speedup_against_the_full_order_model(self):
        report = bench_speedup(self.model, FomCase.from_definition(self.definition), 600.0)
        self.assertGreaterEqual(report.speedup_vs_fom, 100.0)
