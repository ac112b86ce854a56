import hashlib
import os
import shutil
import tempfile
import unittest

import numpy as np

from conf import settings
from tools.dtcook_excite import Signal, constant_signal
from tools.dtcook_sysid import NarxModel, Normalization, SysidConfig, TrainingSet, fit_linear, free_run
from tools.dtcook_twin import (BenchReport, ModelChecksumError, ModelParseError, ModelVersionError,
    decode_model, encode_model, export_model, import_model, predict, scenario_fanout, select_scenario,
    timed, timed_predict)

def first_order_model():
    """ y(k) = 0.9 y(k-1) + 0.1 u(k-1) fitted on clean data """
    pairs = []
    for seed in (1, 2):
        u = np.random.default_rng(seed).uniform(300.0, 450.0, 200)
        y = np.empty_like(u)
        y[0] = 300.0
        for k in range(1, u.size):
            y[k] = 0.9 * y[k - 1] + 0.1 * u[k - 1]
        pairs.append((Signal(u, 10.0), Signal(y, 10.0)))
    return fit_linear(TrainingSet(pairs, ['a', 'b']),
        SysidConfig(output_lags=1, input_lags=2, max_degree=1, ridge=0.0))

class TestModelFile(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.model = first_order_model()

    def setUp(self):
        self.directory = tempfile.mkdtemp()
        self.path = os.path.join(self.directory, 'model' + settings._MODEL_EXTENSION)

    def tearDown(self):
        shutil.rmtree(self.directory)

    def write(self, text):
        with open(self.path, 'w', newline='') as outfile:
            outfile.write(text)

    def test_round_trip(self):
        written = export_model(self.model, self.path)
        self.assertEqual(written.version, settings._MODEL_FORMAT_VERSION)
        self.assertEqual(len(written.checksum), 64)
        imported = import_model(self.path)
        self.assertEqual(imported, self.model)
        self.assertEqual(imported.coefficients, self.model.coefficients)

    def test_hand_built_model_round_trip(self):
        model = NarxModel(2, 1, 5.0, [(0, 0, 0), (1, 0, 1), (0, 2, 0)], [0.5, -1.25e-7, 3.0],
            Normalization(300.0, 20.0, 400.0, 50.0), 150.0, {'note': 'hand built'})
        self.assertEqual(decode_model(encode_model(model)), model)

    def test_truncated_file(self):
        text = encode_model(self.model)
        self.write(text[:len(text) // 2])
        with self.assertRaises(ModelChecksumError):
            import_model(self.path)
        self.write(text.split('\n')[0] + '\n')
        with self.assertRaises(ModelChecksumError):
            import_model(self.path)

    def test_truncated_inside_the_header(self):
        text = encode_model(self.model)
        header = text.split('\n')[0]
        for cut in range(len(header) + 1):
            with self.assertRaises(ModelChecksumError):
                decode_model(text[:cut])
        with self.assertRaises(ModelParseError):
            decode_model('time,value')

    def test_flipped_coefficient(self):
        text = encode_model(self.model)
        header, checksum, payload = text.split('\n', 2)
        self.write('\n'.join([header, checksum, payload.replace('"coefficients": [', '"coefficients": [1.0, ', 1)]))
        with self.assertRaises(ModelChecksumError):
            import_model(self.path)

    def test_unknown_version(self):
        self.write(encode_model(self.model, version=settings._MODEL_FORMAT_VERSION + 1))
        with self.assertRaises(ModelVersionError) as context:
            import_model(self.path)
        self.assertEqual(context.exception.found, settings._MODEL_FORMAT_VERSION + 1)
        self.assertEqual(context.exception.expected, settings._MODEL_FORMAT_VERSION)
        self.assertIn(self.path, str(context.exception))

    def test_not_a_model_file(self):
        self.write('time,value\n0,1\n')
        with self.assertRaises(ModelParseError):
            import_model(self.path)

    def test_payload_breaking_the_schema(self):
        model = NarxModel(1, 1, 1.0, [(1, 0)], [1.0])
        text = encode_model(model).replace('"output_lags": 1', '"output_lags": 0')
        header, _, payload = text.split('\n', 2)
        digest = hashlib.sha256(payload.encode('utf-8')).hexdigest()
        with self.assertRaises(ModelParseError):
            decode_model('%s\nsha256 %s\n%s' % (header, digest, payload))

class TestPrediction(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.model = first_order_model()

    def test_predict_matches_free_run(self):
        u = Signal(np.linspace(300.0, 450.0, 50), 10.0)
        np.testing.assert_array_equal(predict(self.model, u, [300.0]).values,
            free_run(self.model, u, [300.0]).values)

    def test_long_horizon(self):
        u = constant_signal(450.0, 1000 * 10.0, 10.0)
        prediction, report = timed_predict(self.model, u, [300.0], repetitions=2)
        self.assertEqual(len(prediction), 1001)
        self.assertEqual(report.steps, 1000)
        self.assertEqual(report.horizon, 10000.0)
        self.assertAlmostEqual(prediction.values[-1], 450.0, delta=1e-3)
        self.assertTrue(np.all(np.isfinite(prediction.values)))

    def test_zero_horizon(self):
        with self.assertRaises(ValueError):
            timed_predict(self.model, Signal([450.0], 10.0), [300.0])

    def test_timed_runs_warmup_plus_repetitions(self):
        calls = []
        result, wall_time = timed(lambda: calls.append(1) or len(calls), repetitions=3)
        self.assertEqual(len(calls), 4)
        self.assertEqual(result, 4)
        self.assertGreaterEqual(wall_time, 0.0)

class TestScenarioFanout(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.model = first_order_model()
        cls.candidates = [constant_signal(level, 3600.0, 10.0) for level in (350.0, 400.0, 450.0, 300.0)]

    def test_results_keep_candidate_order(self):
        for workers in (1, 3):
            results, report = scenario_fanout(self.model, self.candidates, [300.0], workers=workers, repetitions=1)
            self.assertEqual(len(results), 4)
            self.assertEqual(report.n_predictions, 4)
            self.assertEqual(report.failed, ())
            for candidate, output in zip(self.candidates, results):
                np.testing.assert_array_equal(output.values, free_run(self.model, candidate, [300.0]).values)

    def test_a_diverging_candidate_is_isolated(self):
        unstable = NarxModel(1, 1, 10.0, [(1, 0), (0, 1)], [0.5, 0.5], output_range=100.0)
        candidates = [constant_signal(100.0, 100.0, 10.0), constant_signal(1.0e6, 100.0, 10.0),
            constant_signal(200.0, 100.0, 10.0)]
        results, report = scenario_fanout(unstable, candidates, [100.0], workers=2, repetitions=1)
        self.assertIsNone(results[1])
        self.assertIsNotNone(results[0])
        self.assertIsNotNone(results[2])
        self.assertEqual(report.failed, (1,))
        self.assertIn('diverged candidates: 1', report.to_text())

    def test_candidates_must_be_co_sampled(self):
        with self.assertRaises(ValueError):
            scenario_fanout(self.model, [constant_signal(400.0, 100.0, 10.0), constant_signal(400.0, 50.0, 10.0)],
                [300.0])
        with self.assertRaises(ValueError):
            scenario_fanout(self.model, [], [300.0])

    def test_select_scenario(self):
        results, _ = scenario_fanout(self.model, self.candidates, [300.0], repetitions=1)
        ranks = select_scenario(results, 400.0, 3600.0)
        self.assertEqual(ranks[0].index, 1)
        self.assertAlmostEqual(ranks[0].temperature, 400.0, delta=1e-3)
        self.assertEqual([rank.index for rank in ranks], [1, 0, 2, 3])

    def test_select_scenario_skips_failures_and_breaks_ties_by_index(self):
        far = Signal([390.0, 420.0], 10.0)
        ranks = select_scenario([None, far, Signal([390.0, 390.0], 10.0), Signal([410.0, 410.0], 10.0)], 400.0, 10.0)
        self.assertEqual([rank.index for rank in ranks], [2, 3, 1])
        self.assertEqual(ranks[0].distance, 10.0)

class TestBenchReport(unittest.TestCase):

    def test_arithmetic(self):
        report = BenchReport.measure(3600.0, 0.36, 360)
        self.assertAlmostEqual(report.speedup, 10000.0, places=6)
        self.assertAlmostEqual(report.time_per_1h_prediction, 0.36, places=12)
        self.assertAlmostEqual(report.predictions_per_minute_1h, 60.0 / 0.36, places=9)

    def test_csv_row_matches_header(self):
        report = BenchReport.measure(600.0, 0.01, 60, fom_wall_time=3.0, speedup_vs_fom=300.0, label='bench')
        self.assertEqual(len(report.to_csv_row()), len(BenchReport.HEADER))
        self.assertIn('ROM speedup vs FOM', report.to_text())

    def test_zero_wall_time_is_clamped(self):
        report = BenchReport.measure(600.0, 0.0, 60)
        self.assertEqual(report.wall_time, 1e-9)

    def test_rejects_nonpositive_horizon(self):
        with self.assertRaises(ValueError):
            BenchReport.measure(0.0, 1.0, 0)
