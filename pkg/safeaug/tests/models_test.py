import doctest
import tempfile
from pathlib import Path
from unittest import TestCase, main

from safeaug import models
from safeaug.models import *


def load_tests(loader, tests, ignore):
    tests.addTests(doctest.DocTestSuite(models))
    return tests


class AugmentationSetTest(TestCase):
    def test_unknown_name(self):
        with self.assertRaises(ValueError):
            AugmentationSpec('Mosaic')

    def test_probability_range(self):
        with self.assertRaises(ValueError):
            AugmentationSpec('Blur', probability=1.5)

    def test_duplicates(self):
        with self.assertRaises(ValueError):
            AugmentationSet([AugmentationSpec('Blur'), AugmentationSpec('Blur')])

    def test_restrict_keeps_label_index(self):
        full = AugmentationSet([AugmentationSpec(name) for name in CATALOG_NAMES], CATALOG_NAMES)
        subset = full.restrict(['Blur', 'HorizontalFlip'])
        self.assertListEqual(['HorizontalFlip', 'Blur'], subset.names)
        self.assertEqual(CATALOG_NAMES.index('Blur'), subset.label_index('Blur'))
        self.assertEqual(len(CATALOG_NAMES), subset.label_count)

    def test_with_probability(self):
        aug_set = AugmentationSet([AugmentationSpec('Blur', {'blur_limit': 7})]).with_probability(1.0)
        self.assertEqual(1.0, aug_set.spec('Blur').probability)
        self.assertEqual({'blur_limit': 7}, aug_set.spec('Blur').params)

    def test_file(self):
        aug_set = AugmentationSet([AugmentationSpec('RandomCrop', {'height': 25, 'width': 25})], CATALOG_NAMES)
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'catalog.json'
            aug_set.save(path)
            self.assertEqual(aug_set.to_dict(), AugmentationSet.load(path).to_dict())

    def test_schema_version(self):
        with self.assertRaises(ValueError):
            AugmentationSet.parse_from_dict({'schema_version': 99, 'augmentations': []})


class MetricsTypesTest(TestCase):
    def test_rates_range(self):
        with self.assertRaises(ValueError):
            SafetyMetrics(['Blur'], [1.2], [0.5], [None], [1], [1], [0])

    def test_support(self):
        with self.assertRaises(ValueError):
            SafetyMetrics(['Blur'], [0.0], [0.5], [None], [0], [1], [0])

    def test_column_lengths(self):
        with self.assertRaises(ValueError):
            SafetyMetrics(['Blur', 'ToGray'], [0.0], [0.5, 0.5], [None, None], [1, 1], [1, 1], [0, 0])

    def test_thresholds_range(self):
        with self.assertRaises(ValueError):
            Thresholds(fp_max=-0.1)

    def test_safe_set_catalog(self):
        catalog = AugmentationSet([AugmentationSpec('Blur')], CATALOG_NAMES)
        with self.assertRaises(ValueError):
            SafeSet(['ToGray']).to_augmentation_set(catalog)


class ConfigTest(TestCase):
    def test_defaults_are_valid(self):
        self.assertListEqual([], ExperimentConfig().validate())

    def test_all_errors_reported(self):
        config = ExperimentConfig(p=2.0, k=16, epochs=-1, mode='random')
        with self.assertRaises(ConfigValidationException) as context:
            config.check()
        fields = [error.split(':')[0] for error in context.exception.errors]
        self.assertListEqual(['mode', 'k', 'p', 'epochs'], fields)

    def test_unknown_field(self):
        with self.assertRaises(ConfigValidationException):
            ExperimentConfig(learning_rate=0.1)

    def test_safe_mode_requires_safe_set(self):
        config = ExperimentConfig(mode='safe')
        self.assertEqual(['safe_set: is required for mode "safe"'], config.validate('train'))
        self.assertListEqual([], config.validate('learn_safe'))
        self.assertListEqual([], config.validate('explicit'))
        self.assertEqual(1, len(ExperimentConfig().validate('sweep')))

    def test_resolved_uses_dataset_defaults(self):
        config = ExperimentConfig(dataset='cityscapes').resolved()
        self.assertEqual('adam', config.optimizer)
        self.assertEqual(1e-4, config.lr)
        self.assertEqual((512, 512), config.crop_size)
        self.assertEqual(16, config.batch_size)

    def test_resolved_optimizer_override(self):
        config = ExperimentConfig(dataset='cifar10', optimizer='adam').resolved()
        self.assertEqual(1e-4, config.lr)
        config = ExperimentConfig(dataset='cifar10', lr=0.05).resolved()
        self.assertEqual(0.05, config.lr)

    def test_with_overrides_skips_none(self):
        config = ExperimentConfig(seed=3).with_overrides(seed=None, k=2)
        self.assertEqual(3, config.seed)
        self.assertEqual(2, config.k)

    def test_hash_ignores_volatile_fields(self):
        config = ExperimentConfig()
        self.assertEqual(config.config_hash, config.with_overrides(workers=4, repeats=3).config_hash)
        self.assertNotEqual(config.config_hash, config.with_overrides(seed=1).config_hash)

    def test_file(self):
        config = ExperimentConfig(dataset='svhn', crop_size=(20, 20), exclude=['Blur'])
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'config.json'
            config.save(path)
            loaded = ExperimentConfig.load(path)
        self.assertEqual((20, 20), loaded.crop_size)
        self.assertEqual(('Blur',), loaded.exclude)
        self.assertEqual(config.config_hash, loaded.config_hash)

    def test_unknown_exclusion(self):
        self.assertEqual(1, len(ExperimentConfig(exclude=['Mosaic']).validate()))


class RecordTest(TestCase):
    def test_metric_range(self):
        with self.assertRaises(ValueError):
            ExperimentRecord('run', 'train', {}, 'hash', 0, test_metric=101.0)

    def test_dict(self):
        record = ExperimentRecord('run', 'train', {'seed': 0}, 'hash', 0, test_metric=55.5, safe_set=['Blur'])
        self.assertEqual(record, ExperimentRecord.parse_from_dict(record.to_dict()))


if __name__ == '__main__':
    main()
