import math

import numpy as np
from django.test import SimpleTestCase

from apps.vqccs.cs_solvers import SolverTrajectory
from apps.vqccs.eval_metrics import (
    MetricsReport,
    iteration_errors,
    mse,
    normalized_mse,
    roc_auc,
    squared_error,
    to_db,
)
from apps.vqccs.exceptions import ParameterError, UndefinedMetricError
from apps.vqccs.tests.oracles import concordance_auc


class MseTests(SimpleTestCase):
    def test_reference_values(self):
        x = np.array([1 + 1j, -2j])
        self.assertEqual(mse(x, x), 0.0)
        self.assertEqual(mse(x + np.array([1, 1j]), x), 1.0)
        self.assertAlmostEqual(mse(np.zeros(2), x), (2 + 4) / 2)

    def test_decibels(self):
        self.assertAlmostEqual(to_db(0.01), -20.0)
        self.assertEqual(to_db(0.0), -math.inf)

    def test_aggregation_is_linear(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(30, 5)) + 1j * rng.normal(size=(30, 5))
        x_hat = x + 0.1 * rng.normal(size=(30, 5))
        head, tail = mse(x_hat[:12], x[:12]), mse(x_hat[12:], x[12:])
        self.assertAlmostEqual(mse(x_hat, x), (12 * head + 18 * tail) / 30, places=14)

    def test_shape_mismatch(self):
        with self.assertRaises(ParameterError):
            squared_error(np.zeros(3), np.zeros(4))

    def test_normalized_mse(self):
        x = np.array([[2.0, 0.0]])
        self.assertAlmostEqual(normalized_mse(np.array([[1.0, 0.0]]), x), 0.25)
        with self.assertRaises(UndefinedMetricError):
            normalized_mse(x, np.zeros((1, 2)))

    def test_iteration_errors(self):
        x = np.array([[1.0, 1.0], [0.0, 2.0]])
        trajectory = SolverTrajectory(le_estimates=[x], nle_estimates=[np.zeros_like(x), x])
        errors = iteration_errors(trajectory, x)
        np.testing.assert_allclose(errors, [[1.0, 2.0], [0.0, 0.0]])


class RocTests(SimpleTestCase):
    def test_reference_cases(self):
        _, area = roc_auc([0.9, 0.4, 0.6, 0.1], [1, 0, 1, 0])
        self.assertEqual(area, 1.0)
        _, area = roc_auc([0.9, 0.6, 0.4, 0.1], [1, 0, 1, 0])
        self.assertAlmostEqual(area, 0.75, places=15)

    def test_ties_give_chance_level(self):
        curve, area = roc_auc(np.full(10, 0.3), [1, 0] * 5)
        self.assertEqual(area, 0.5)
        self.assertEqual(curve.points(), [(0.0, 0.0), (1.0, 1.0)])

    def test_matches_pairwise_concordance(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            scores = np.round(rng.random(200), 2)
            labels = rng.random(200) < 0.3
            _, area = roc_auc(scores, labels)
            self.assertAlmostEqual(area, concordance_auc(scores, labels), delta=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(2)
        scores = rng.random(300)
        labels = rng.random(300) < 0.2
        curve, area = roc_auc(scores, labels)
        for transform in (lambda s: 3 * s + 1, lambda s: s ** 3, np.exp):
            other, other_area = roc_auc(transform(scores), labels)
            self.assertEqual(other.points(), curve.points())
            self.assertEqual(other_area, area)

    def test_pooled_complex_scores(self):
        estimates = np.array([[2j, 0.1], [0.05, -1.5]])
        labels = np.array([[1, 0], [0, 1]])
        _, area = roc_auc(estimates, labels)
        self.assertEqual(area, 1.0)

    def test_points_are_monotone(self):
        rng = np.random.default_rng(3)
        curve, area = roc_auc(rng.random(100), rng.random(100) < 0.5)
        fpr, tpr = np.array(curve.points()).T
        self.assertTrue(np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0))
        self.assertTrue(0.0 <= area <= 1.0)

    def test_single_class(self):
        with self.assertRaises(UndefinedMetricError):
            roc_auc([0.1, 0.5, 0.7], [0, 0, 0])

    def test_length_mismatch(self):
        with self.assertRaises(ParameterError):
            roc_auc([0.1, 0.5], [0, 1, 1])


class ReportTests(SimpleTestCase):
    def test_summary_rows(self):
        x = np.array([[1.0, 0.0], [0.0, 2.0]])
        activity = np.array([[1, 0], [0, 1]])
        report = MetricsReport(n_samples=2)
        report.add_solver('oamp', [[2.5, 2.5], [0.01, 0.03]], x * 0.9, x, activity, runtime=0.5)
        report.add_detector('vqc_cs+mlp', np.array([[0.8, 0.1], [0.3, 0.7]]), activity)
        rows = report.summary()
        self.assertEqual([row['solver'] for row in rows], ['oamp', 'vqc_cs+mlp'])
        self.assertAlmostEqual(rows[0]['final_mse'], 0.02)
        self.assertAlmostEqual(rows[0]['final_mse_db'], 10 * math.log10(0.02))
        self.assertEqual(rows[0]['auc'], 1.0)
        self.assertEqual(report.solvers, ['oamp'])
        self.assertEqual(report.to_dict()['runtime'], {'oamp': 0.5})
