import tempfile
from unittest import TestCase, main

from safeaug.models import ExperimentConfig, ExperimentRecord
from safeaug.run_registry import *


class RunRegistryTest(TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.registry = RunRegistry(self.directory.name)
        self.config = ExperimentConfig(seed=2)

    def tearDown(self):
        self.directory.cleanup()

    def test_create_run(self):
        run_id = self.registry.create_run('train', self.config, 'first')
        self.assertEqual('first', run_id)
        self.assertTrue(self.registry.has('first'))
        self.assertEqual(self.config.config_hash, self.registry.read_config('first').config_hash)

    def test_generated_run_id(self):
        run_id = self.registry.create_run('train', self.config)
        self.assertTrue(run_id.endswith('-train'))

    def test_run_exists(self):
        self.registry.create_run('train', self.config, 'first')
        with self.assertRaises(RunExistsException):
            self.registry.create_run('train', self.config, 'first')

    def test_unknown_run(self):
        with self.assertRaises(UnknownRunException):
            self.registry.checkpoint_path('missing')
        with self.assertRaises(UnknownRunException):
            self.registry.report_dir('')

    def test_record(self):
        self.registry.create_run('train', self.config, 'first')
        with self.assertRaises(UnknownRunException):
            self.registry.read_record('first')
        record = ExperimentRecord('first', 'train', self.config.to_dict(), self.config.config_hash, 2,
                                  test_metric=61.0)
        self.registry.write_record(record)
        self.assertEqual(record, self.registry.read_record('first'))

    def test_list_runs(self):
        self.assertTrue(self.registry.list_runs().empty)
        self.registry.create_run('learn_safe', self.config, 'a')
        self.registry.create_run('train', self.config, 'b')
        self.registry.write_record(ExperimentRecord('b', 'train', self.config.to_dict(), self.config.config_hash, 2,
                                                    test_metric=40.0, parent_run='a'))
        frame = self.registry.list_runs()
        self.assertListEqual(['a', 'b'], frame['run_id'].tolist())
        self.assertListEqual(['running', 'ok'], frame['status'].tolist())
        self.assertEqual(40.0, frame['value'].iloc[1])
        self.assertEqual('a', frame['parent_run'].iloc[1])


if __name__ == '__main__':
    main()
