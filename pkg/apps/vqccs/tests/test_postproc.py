import math

import numpy as np
import torch
from django.test import SimpleTestCase, tag

from apps.vqccs.cs_solvers import batch_tensors, oamp
from apps.vqccs.eval_metrics import roc_auc
from apps.vqccs.exceptions import ParameterError
from apps.vqccs.postproc import (
    MlpConfig,
    MlpParams,
    bce_loss,
    detect,
    features,
    mlp_forward,
    mlp_loss_and_grad,
    train_mlp,
)
from apps.vqccs.quantum import COMPLEX, REAL
from apps.vqccs.system_model import ScenarioConfig, gen_batch


def separable_set(count, n, seed):
    rng = np.random.default_rng(seed)
    labels = rng.random((count, n)) < 0.3
    low = rng.uniform(0.0, 0.5, size=(count, n))
    high = rng.uniform(1.5, 2.0, size=(count, n))
    return np.where(labels, high, low), labels.astype(float)


class ForwardTests(SimpleTestCase):
    def test_zero_parameters_give_one_half(self):
        probs = mlp_forward(torch.rand(5, 3, dtype=REAL), MlpParams.zeros(3))
        torch.testing.assert_close(probs, torch.full((5, 3), 0.5, dtype=REAL))

    def test_single_device_by_hand(self):
        params = MlpParams.zeros(1)
        params = MlpParams([torch.ones_like(w) for w in params.weights], params.biases)
        # 1 -> four hidden units of 1 -> two units of 4 -> logit 8
        probs = mlp_forward(torch.tensor([1.0], dtype=REAL), params)
        self.assertAlmostEqual(float(probs[0]), 1 / (1 + math.exp(-8)), places=14)
        negative = mlp_forward(torch.tensor([-1.0], dtype=REAL), params)
        self.assertEqual(float(negative[0]), 0.5)

    def test_output_range(self):
        params = MlpParams.initialize(4, torch.Generator().manual_seed(0))
        probs = mlp_forward(torch.rand(100, 4, dtype=REAL) * 10, params)
        self.assertTrue(bool(((probs > 0) & (probs < 1)).all()))

    def test_features_are_magnitudes(self):
        x_hat = torch.tensor([3 + 4j, -1j], dtype=COMPLEX)
        torch.testing.assert_close(features(x_hat), torch.tensor([5.0, 1.0], dtype=REAL))

    def test_shape_chain(self):
        params = MlpParams.initialize(3)
        self.assertEqual([tuple(w.shape) for w in params.weights], [(12, 3), (6, 12), (3, 6)])
        with self.assertRaises(ParameterError):
            MlpParams(params.weights[:2], params.biases[:2])
        with self.assertRaises(ParameterError):
            MlpParams([params.weights[0], params.weights[0], params.weights[2]], params.biases)


class LossTests(SimpleTestCase):
    def test_uniform_uncertainty(self):
        self.assertAlmostEqual(float(bce_loss(torch.full((4,), 0.5), [1, 0, 1, 1])), math.log(2), places=12)

    def test_perfect_prediction(self):
        labels = torch.tensor([1.0, 0.0, 1.0])
        self.assertLess(float(bce_loss(labels, labels)), 1e-11)

    def test_matches_independent_computation(self):
        rng = np.random.default_rng(1)
        probs = rng.uniform(0.01, 0.99, size=20)
        labels = (rng.random(20) < 0.5).astype(float)
        expected = -np.mean(labels * np.log(probs) + (1 - labels) * np.log(1 - probs))
        self.assertAlmostEqual(float(bce_loss(probs, labels)), expected, delta=1e-12)

    def test_gradient_matches_finite_differences(self):
        generator = torch.Generator().manual_seed(2)
        params = MlpParams.initialize(3, generator)
        x = torch.rand(8, 3, generator=generator, dtype=REAL) * 2
        labels = (torch.rand(8, 3, generator=generator, dtype=REAL) < 0.4).to(REAL)
        _, grads = mlp_loss_and_grad(x, labels, params)
        h = 1e-6
        for k, tensor in enumerate(params.tensors()):
            for position in range(tensor.numel()):
                shifted = []
                for sign in (1, -1):
                    tensors = [t.clone() for t in params.tensors()]
                    tensors[k].view(-1)[position] += sign * h
                    shifted.append(float(bce_loss(mlp_forward(x, MlpParams.from_tensors(tensors)), labels)))
                reference = (shifted[0] - shifted[1]) / (2 * h)
                found = float(grads[k].view(-1)[position])
                self.assertLessEqual(abs(found - reference), 1e-4 * abs(reference) + 1e-8)


class TrainingTests(SimpleTestCase):
    def test_separable_features_are_learned(self):
        x, labels = separable_set(256, 2, seed=3)
        params, history = train_mlp(x, labels, MlpConfig(seed=4))
        self.assertLess(history[-1], history[0])
        predicted = detect(torch.as_tensor(x, dtype=COMPLEX), params).numpy() > 0.5
        self.assertEqual(float(np.mean(predicted == labels.astype(bool))), 1.0)

    def test_deterministic(self):
        x, labels = separable_set(64, 3, seed=5)
        cfg = MlpConfig(epochs=3, batch_size=16, seed=6)
        first, first_history = train_mlp(x, labels, cfg)
        second, second_history = train_mlp(x, labels, cfg)
        self.assertEqual(first_history, second_history)
        for a, b in zip(first.tensors(), second.tensors()):
            torch.testing.assert_close(a, b, rtol=0, atol=0)

    def test_invalid_inputs(self):
        with self.assertRaises(ParameterError):
            train_mlp(np.zeros((0, 2)), np.zeros((0, 2)))
        with self.assertRaises(ParameterError):
            train_mlp(np.zeros((4, 2)), np.zeros((4, 3)))
        with self.assertRaises(ParameterError):
            MlpConfig(learning_rate=0.0)

    @tag('slow')
    def test_detector_matches_thresholded_estimates(self):
        cfg = ScenarioConfig()
        train_batch = gen_batch(cfg, 2000, split='train')
        test_batch = gen_batch(cfg, 2000, split='test')
        estimates = {}
        for name, batch in (('train', train_batch), ('test', test_batch)):
            y, A, _, sigma2 = batch_tensors(batch)
            estimates[name] = oamp(y, A, cfg.activity_rate, sigma2, 10).final
        params, _ = train_mlp(features(estimates['train']).numpy(), train_batch.activity)
        _, thresholded = roc_auc(estimates['test'].numpy(), test_batch.activity)
        _, learned = roc_auc(detect(estimates['test'], params).numpy(), test_batch.activity)
        self.assertGreaterEqual(learned, thresholded)

    def test_round_trip(self):
        params = MlpParams.initialize(2, torch.Generator().manual_seed(7))
        restored = MlpParams.from_dict(params.to_dict())
        for a, b in zip(params.tensors(), restored.tensors()):
            torch.testing.assert_close(a, b, rtol=0, atol=0)
