import json
import tempfile
from pathlib import Path

import numpy as np
import torch
from django.test import SimpleTestCase

from apps.vqccs.config import ExperimentConfig
from apps.vqccs.exceptions import DatasetMissingError, ShapeMismatchError
from apps.vqccs.postproc import MlpParams
from apps.vqccs.storage import (
    atomic_write,
    content_hash,
    export_dataset_csv,
    load_checkpoint,
    load_dataset,
    read_csv,
    read_manifest,
    save_checkpoint,
    save_dataset,
    write_csv,
    write_manifest,
)
from apps.vqccs.system_model import ScenarioConfig, gen_batch
from apps.vqccs.training import Checkpoint, TrainConfig
from apps.vqccs.vqc_denoiser import DenoiserParams

TOY = ScenarioConfig(n_devices=4, n_measurements=3, seed=8)


class TempDirMixin:
    def setUp(self):
        super().setUp()
        directory = tempfile.TemporaryDirectory()
        self.addCleanup(directory.cleanup)
        self.tmp = Path(directory.name)


class AtomicWriteTests(TempDirMixin, SimpleTestCase):
    def test_replaces_on_success(self):
        target = self.tmp / 'out.txt'
        target.write_text('old', encoding='utf-8')
        with atomic_write(target) as handle:
            handle.write('new')
            self.assertEqual(target.read_text(encoding='utf-8'), 'old')
        self.assertEqual(target.read_text(encoding='utf-8'), 'new')

    def test_failure_keeps_previous_file(self):
        target = self.tmp / 'out.txt'
        target.write_text('old', encoding='utf-8')
        with self.assertRaises(RuntimeError):
            with atomic_write(target) as handle:
                handle.write('partial')
                raise RuntimeError('interrupted')
        self.assertEqual(target.read_text(encoding='utf-8'), 'old')
        self.assertEqual(sorted(p.name for p in self.tmp.iterdir()), ['out.txt'])


class DatasetStorageTests(TempDirMixin, SimpleTestCase):
    def test_round_trip(self):
        batch = gen_batch(TOY, 6)
        path = self.tmp / 'train.npz'
        save_dataset(path, batch, header={'config_hash': 'abc'})
        loaded = load_dataset(path)
        for name in ('pilot', 'activity', 'channel', 'signal', 'observation', 'noise_var'):
            np.testing.assert_array_equal(getattr(loaded, name), getattr(batch, name))
        self.assertEqual(loaded.meta['config_hash'], 'abc')
        self.assertEqual(loaded.meta['split'], 'train')

    def test_content_hash_ignores_container_metadata(self):
        batch = gen_batch(TOY, 4)
        save_dataset(self.tmp / 'a.npz', batch)
        save_dataset(self.tmp / 'b.npz', gen_batch(TOY, 4))
        self.assertEqual(content_hash(self.tmp / 'a.npz'), content_hash(self.tmp / 'b.npz'))
        save_dataset(self.tmp / 'c.npz', gen_batch(TOY.replace(seed=9), 4))
        self.assertNotEqual(content_hash(self.tmp / 'a.npz'), content_hash(self.tmp / 'c.npz'))

    def test_missing_file(self):
        with self.assertRaises(DatasetMissingError):
            load_dataset(self.tmp / 'absent.npz')

    def test_incomplete_container(self):
        path = self.tmp / 'broken.npz'
        np.savez(path, signal=np.zeros((2, 4)))
        with self.assertRaises(ShapeMismatchError):
            load_dataset(path)

    def test_csv_export(self):
        batch = gen_batch(TOY, 2)
        path = self.tmp / 'train.csv'
        export_dataset_csv(path, batch, header={'seed': 8})
        header, columns, rows = read_csv(path)
        self.assertEqual(header, {'seed': '8'})
        self.assertEqual(columns[:3], ['instance', 'index', 'activity'])
        self.assertEqual(len(rows), 2 * 4)
        self.assertEqual(rows[3][7], '')


class ManifestTests(TempDirMixin, SimpleTestCase):
    def test_manifest_is_reproducible(self):
        config = ExperimentConfig().replace('scenario', n_devices=4, n_measurements=3)
        manifests = []
        for name in ('first', 'second'):
            directory = self.tmp / name
            path = directory / 'train.npz'
            save_dataset(path, gen_batch(config.scenario, 3))
            manifests.append(write_manifest(directory, config, [path], {'train': 3}))
        self.assertEqual(manifests[0]['content_hash'], manifests[1]['content_hash'])
        self.assertEqual(read_manifest(self.tmp / 'first')['counts'], {'train': 3})
        self.assertEqual(manifests[0]['config_hash'], config.config_hash())

    def test_missing_manifest(self):
        with self.assertRaises(DatasetMissingError):
            read_manifest(self.tmp)


class CsvTests(TempDirMixin, SimpleTestCase):
    def test_header_lines_and_rows(self):
        path = self.tmp / 'mse.csv'
        write_csv(path, ['iteration', 'oamp'], [[0, 1.0], [1, 0.25]], header={'config_hash': 'f00', 'version': '0.1.0'})
        text = path.read_text(encoding='utf-8').splitlines()
        self.assertEqual(text[:3], ['# config_hash=f00', '# version=0.1.0', 'iteration,oamp'])
        header, columns, rows = read_csv(path)
        self.assertEqual(header['config_hash'], 'f00')
        self.assertEqual(columns, ['iteration', 'oamp'])
        self.assertEqual(rows, [['0', '1.0'], ['1', '0.25']])


class CheckpointStorageTests(TempDirMixin, SimpleTestCase):
    def checkpoint(self):
        generator = torch.Generator().manual_seed(1)
        return Checkpoint(
            params=[DenoiserParams.initialize(4, 2, generator) for _ in range(3)],
            train_config=TrainConfig(n_layers=2, n_iterations=3),
            scenario=TOY,
            loss_history=[{'epoch': 0, 'train_loss': 1.0, 'val_loss': 1.1}],
            mlp=MlpParams.initialize(4, generator),
        )

    def test_round_trip(self):
        checkpoint = self.checkpoint()
        path = self.tmp / 'checkpoint.json'
        save_checkpoint(path, checkpoint, header={'config_hash': 'abc'})
        loaded = load_checkpoint(path)
        self.assertEqual(loaded.shape, (4, 2, 3))
        self.assertEqual(loaded.scenario, TOY)
        self.assertEqual(loaded.loss_history, checkpoint.loss_history)
        for a, b in zip(checkpoint.params, loaded.params):
            for x, y in zip(a.tensors(), b.tensors()):
                torch.testing.assert_close(x, y, rtol=0, atol=0)
        for x, y in zip(checkpoint.mlp.tensors(), loaded.mlp.tensors()):
            torch.testing.assert_close(x, y, rtol=0, atol=0)
        payload = json.loads(path.read_text(encoding='utf-8'))
        self.assertEqual(payload['format'], 1)
        self.assertEqual(len(payload['circuit_templates']), 4)

    def test_tampered_templates(self):
        path = self.tmp / 'checkpoint.json'
        save_checkpoint(path, self.checkpoint())
        payload = json.loads(path.read_text(encoding='utf-8'))
        payload['circuit_templates'][0] = payload['circuit_templates'][0][1:]
        path.write_text(json.dumps(payload), encoding='utf-8')
        with self.assertRaises(ShapeMismatchError):
            load_checkpoint(path)

    def test_unsupported_format(self):
        path = self.tmp / 'checkpoint.json'
        save_checkpoint(path, self.checkpoint())
        payload = json.loads(path.read_text(encoding='utf-8'))
        payload['format'] = 99
        path.write_text(json.dumps(payload), encoding='utf-8')
        with self.assertRaises(ShapeMismatchError):
            load_checkpoint(path)

    def test_missing_checkpoint(self):
        with self.assertRaises(DatasetMissingError):
            load_checkpoint(self.tmp / 'checkpoint.json')
