import io
import tempfile
from pathlib import Path
from unittest import TestCase, main

import numpy as np
import torch

from safeaug.checkpoints import *
from safeaug.joint_model import build_model, build_optimizer, JointBatch, train_step
from safeaug.models import CATALOG_NAMES, ExperimentConfig


def trained_model():
    model = build_model('tiny', 'classification', 4, seed=0)
    optimizer = build_optimizer(model, 'sgd', 0.1)
    rng = np.random.default_rng(0)
    batch = JointBatch(torch.tensor(rng.normal(size=(4, 3, 32, 32)), dtype=torch.float32),
                       rng.integers(0, 2, size=15).astype(np.float32), torch.tensor([0, 1, 2, 3]))
    train_step(model, batch, optimizer)
    return model, optimizer


class CheckpointTest(TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.path = Path(self.directory.name) / 'checkpoint.pt'
        self.model, self.optimizer = trained_model()
        self.config = ExperimentConfig(seed=4)

    def tearDown(self):
        self.directory.cleanup()

    def _save(self):
        return save_checkpoint(self.path, self.model, self.optimizer, 'sgd', self.config.to_dict(),
                               self.config.config_hash, {'run_id': 'run', 'final_lr': 0.1})

    def test_weights_round_trip(self):
        self._save()
        checkpoint = load_checkpoint(self.path)
        original = self.model.module.state_dict()
        for name, value in checkpoint.model.module.state_dict().items():
            self.assertTrue(torch.equal(original[name], value), name)
        self.assertEqual(self.config.config_hash, checkpoint.config_hash)
        self.assertEqual('run', checkpoint.extra['run_id'])
        self.assertEqual(self.model.descriptor, checkpoint.model.descriptor)

    def test_predictions_round_trip(self):
        self._save()
        images = np.random.default_rng(1).normal(size=(3, 32, 32, 3)).astype(np.float32)
        expected = self.model.predict(images)
        restored = load_checkpoint(self.path).model.predict(images)
        for a, b in zip(expected, restored):
            np.testing.assert_array_equal(a, b)

    def test_optimizer_state(self):
        self._save()
        checkpoint = load_checkpoint(self.path)
        optimizer = build_optimizer(checkpoint.model, 'sgd', 0.5)
        self.assertTrue(checkpoint.restore_optimizer(optimizer))
        self.assertEqual(0.1, optimizer.param_groups[0]['lr'])
        with self.assertLogs('safeaug.checkpoints', level='WARNING'):
            self.assertFalse(checkpoint.restore_optimizer(build_optimizer(checkpoint.model, 'adam', 1e-3)))

    def test_tampered_file(self):
        self._save()
        content = bytearray(self.path.read_bytes())
        content[-10] ^= 0xFF
        self.path.write_bytes(bytes(content))
        with self.assertRaises(CheckpointIntegrityException):
            load_checkpoint(self.path)

    def test_not_a_checkpoint(self):
        buffer = io.BytesIO()
        torch.save(self.model.module.state_dict(), buffer)
        self.path.write_bytes(buffer.getvalue())
        with self.assertRaises(CheckpointIntegrityException):
            load_checkpoint(self.path)

    def test_catalog_mismatch(self):
        self._save()
        with self.assertRaises(CatalogMismatchException):
            load_checkpoint(self.path, catalog_names=tuple(reversed(CATALOG_NAMES)))


if __name__ == '__main__':
    main()
