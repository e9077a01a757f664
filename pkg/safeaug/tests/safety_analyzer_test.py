import doctest
import json
import tempfile
from pathlib import Path
from unittest import TestCase, main

import numpy as np

from safeaug import safety_analyzer
from safeaug.models import CATALOG_NAMES, AugmentationSet, SafeSet, SafetyMetrics, Thresholds
from safeaug.safety_analyzer import *
from safeaug.transform_engine import build_catalog


def load_tests(loader, tests, ignore):
    tests.addTests(doctest.DocTestSuite(safety_analyzer))
    return tests


LABELS = len(CATALOG_NAMES)


class ConstantPredictor:
    def __init__(self, logit):
        self.logit = logit

    def predict_aug_logits(self, images):
        return np.full((len(images), LABELS), self.logit)


class CoinFlipPredictor:
    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)

    def predict_aug_logits(self, images):
        signs = np.where(self.rng.random(LABELS) < 0.5, -10.0, 10.0)
        return np.repeat(signs[np.newaxis], len(images), axis=0)


class OraclePredictor:
    """
    Знает сработавшие преобразования каждой единицы, потому что повторяет тот же сэмплер с тем же зерном
    """

    def __init__(self, units):
        self.labels = iter([labels for _, labels in units])

    def predict_aug_logits(self, images):
        labels = next(self.labels)
        return np.repeat(np.where(labels, 10.0, -10.0)[np.newaxis], len(images), axis=0)


def small_images(count=40, size=8, seed=0):
    return np.random.default_rng(seed).integers(0, 256, size=(count, size, size, 3), dtype=np.uint8)


def replay(images, catalog, seed, batch_size, passes):
    return list(iterate_augmented_units(images, catalog, seed, batch_size, passes))


class CleanFalsePositivesTest(TestCase):
    images = small_images()

    def test_always_positive(self):
        counter = evaluate_clean_false_positives(ConstantPredictor(10.0), self.images, batch_size=8)
        self.assertEqual(5, counter.units)
        np.testing.assert_array_equal(np.ones(LABELS), counter.fp_rate)

    def test_always_negative(self):
        counter = evaluate_clean_false_positives(ConstantPredictor(-10.0), self.images, batch_size=8)
        np.testing.assert_array_equal(np.zeros(LABELS), counter.fp_rate)

    def test_threshold_boundary_is_exclusive(self):
        counter = evaluate_clean_false_positives(ConstantPredictor(0.0), self.images, decision_threshold=0.5)
        np.testing.assert_array_equal(np.zeros(LABELS), counter.fp_rate)

    def test_last_partial_batch_is_a_unit(self):
        counter = evaluate_clean_false_positives(ConstantPredictor(-10.0), self.images, batch_size=16)
        self.assertEqual(3, counter.units)

    def test_coin_flip_rate(self):
        images = np.zeros((10000, 1, 1, 3), dtype=np.uint8)
        counter = evaluate_clean_false_positives(CoinFlipPredictor(0), images, batch_size=1, keep_units=True)
        self.assertEqual(10000, counter.units)
        self.assertTrue(np.all(np.abs(counter.fp_rate - 0.5) <= 0.02))
        recount = LabelCounter.recount(CATALOG_NAMES, counter.unit_predictions, counter.unit_targets)
        np.testing.assert_array_equal(recount.predicted, counter.predicted)

    def test_empty(self):
        with self.assertRaises(EmptyTestSetException):
            evaluate_clean_false_positives(ConstantPredictor(0.0), self.images[:0])


class AugmentationAccuracyTest(TestCase):
    catalog = build_catalog((4, 4))
    images = small_images()

    def _fired_fraction(self, seed, batch_size=8, passes=3):
        labels = np.array([labels for _, labels in replay(self.images, self.catalog, seed, batch_size, passes)])
        return labels.mean(axis=0)

    def test_replay_is_deterministic(self):
        first = replay(self.images, self.catalog, 3, 8, 2)
        second = replay(self.images, self.catalog, 3, 8, 2)
        self.assertEqual(len(first), len(second))
        for (images_a, labels_a), (images_b, labels_b) in zip(first, second):
            np.testing.assert_array_equal(images_a, images_b)
            np.testing.assert_array_equal(labels_a, labels_b)

    def test_units_keep_input_size(self):
        for images, _ in replay(self.images, self.catalog, 1, 8, 1):
            self.assertEqual((8, 8, 3), images.shape[1:])

    def test_always_positive(self):
        counter = evaluate_augmentation_accuracy(ConstantPredictor(10.0), self.images, self.catalog, 5, batch_size=8,
                                                 passes=3)
        self.assertEqual(15, counter.units)
        np.testing.assert_array_equal(self._fired_fraction(5), counter.accuracy)

    def test_always_negative(self):
        counter = evaluate_augmentation_accuracy(ConstantPredictor(-10.0), self.images, self.catalog, 5, batch_size=8,
                                                 passes=3)
        np.testing.assert_allclose(1 - self._fired_fraction(5), counter.accuracy)

    def test_oracle_is_perfect_for_any_seed(self):
        for seed in (0, 1, 2):
            oracle = OraclePredictor(replay(self.images, self.catalog, seed, 8, 3))
            counter = evaluate_augmentation_accuracy(oracle, self.images, self.catalog, seed, batch_size=8, passes=3)
            np.testing.assert_array_equal(np.ones(LABELS), counter.accuracy)
            for recall, fired in zip(counter.recall, counter.fired):
                self.assertEqual(None if fired == 0 else 1.0, recall)

    def test_counting_matches_recount(self):
        counter = evaluate_augmentation_accuracy(CoinFlipPredictor(4), self.images, self.catalog, 7, batch_size=4,
                                                 passes=5, keep_units=True)
        recount = LabelCounter.recount(CATALOG_NAMES, counter.unit_predictions, counter.unit_targets)
        np.testing.assert_array_equal(recount.accuracy, counter.accuracy)
        np.testing.assert_array_equal(recount.fired, counter.fired)
        self.assertListEqual(recount.recall, counter.recall)

    def test_coin_flip_accuracy(self):
        images = small_images(count=10000, size=4)
        catalog = build_catalog((2, 2))
        counter = evaluate_augmentation_accuracy(CoinFlipPredictor(1), images, catalog, 3, batch_size=1)
        self.assertEqual(10000, counter.units)
        self.assertTrue(np.all(np.abs(counter.accuracy - 0.5) <= 0.02))

    def test_counters_unite(self):
        first = evaluate_clean_false_positives(ConstantPredictor(10.0), self.images[:16], batch_size=8)
        second = evaluate_clean_false_positives(ConstantPredictor(-10.0), self.images[16:], batch_size=8)
        united = first.concat(second)
        self.assertEqual(5, united.units)
        np.testing.assert_allclose(np.full(LABELS, 0.4), united.fp_rate)


def random_metrics(rng):
    return SafetyMetrics(CATALOG_NAMES, rng.random(LABELS), rng.random(LABELS), [None] * LABELS, [10] * LABELS,
                         [10] * LABELS, [0] * LABELS)


class SelectionTest(TestCase):
    def test_thresholds(self):
        fp = [0.0] * LABELS
        acc = [0.5] * LABELS
        fp[CATALOG_NAMES.index('VerticalFlip')] = 0.2
        acc[CATALOG_NAMES.index('Transpose')] = 0.95
        metrics = SafetyMetrics(CATALOG_NAMES, fp, acc, [None] * LABELS, [1] * LABELS, [1] * LABELS, [0] * LABELS)
        safe = select_safe_set(metrics, Thresholds())
        self.assertNotIn('VerticalFlip', safe)
        self.assertNotIn('Transpose', safe)
        self.assertEqual(13, len(safe))

    def test_thresholds_are_inclusive(self):
        metrics = SafetyMetrics(CATALOG_NAMES, [0.05] * LABELS, [0.9] * LABELS, [None] * LABELS, [1] * LABELS,
                                [1] * LABELS, [0] * LABELS)
        self.assertEqual(LABELS, len(select_safe_set(metrics, Thresholds(0.05, 0.9))))

    def test_monotonicity(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            metrics = random_metrics(rng)
            fp_low, fp_high = sorted(rng.random(2))
            acc_low, acc_high = sorted(rng.random(2))
            small = select_safe_set(metrics, Thresholds(fp_low, acc_low))
            large = select_safe_set(metrics, Thresholds(fp_high, acc_high))
            self.assertTrue(set(small) <= set(large))

    def test_pure_function(self):
        metrics = random_metrics(np.random.default_rng(1))
        self.assertEqual(select_safe_set(metrics, Thresholds(0.5, 0.5)), select_safe_set(metrics, Thresholds(0.5, 0.5)))

    def test_missing_labels(self):
        metrics = SafetyMetrics(['HorizontalFlip'], [0.0], [0.5], [None], [1], [1], [0])
        with self.assertRaises(MissingLabelsException):
            select_safe_set(metrics, Thresholds())

    def test_refine(self):
        safe = SafeSet(['HorizontalFlip', 'RandomCrop', 'CenterCrop', 'Blur'], Thresholds())
        with self.assertLogs('safeaug.safety_analyzer', level='WARNING'):
            refined = refine_safe_set(safe, ['RandomCrop', 'CenterCrop', 'Mosaic'])
        self.assertEqual(('HorizontalFlip', 'Blur'), refined.members)
        self.assertEqual(['RandomCrop', 'CenterCrop'], refined.provenance['refinement'][-1]['excluded'])
        self.assertEqual(('HorizontalFlip', 'RandomCrop', 'CenterCrop', 'Blur'), safe.members)


class ReportTest(TestCase):
    def setUp(self):
        self.metrics = random_metrics(np.random.default_rng(2))
        self.safe = select_safe_set(self.metrics, Thresholds(0.5, 0.5))
        self.directory = tempfile.TemporaryDirectory()
        self.out = Path(self.directory.name)

    def tearDown(self):
        self.directory.cleanup()

    def test_round_trip(self):
        emit_report(self.metrics, self.safe, self.out, {'Blur': 70.0}, 49.60, run_id='run')
        report = parse_report(self.out)
        self.assertEqual(self.metrics, report.metrics)
        self.assertEqual(self.safe, report.safe_set)
        self.assertEqual(49.60, report.reference_accuracy)
        self.assertEqual({'Blur': 70.0}, report.task_accuracies)

    def test_all_labels_once(self):
        emit_report(self.metrics, self.safe, self.out)
        content = json.loads((self.out / REPORT_JSON).read_text(encoding='utf-8'))
        self.assertListEqual(list(CATALOG_NAMES), [row['name'] for row in content['rows']])
        self.assertEqual(list(range(LABELS)), [content['label_index'][name] for name in CATALOG_NAMES])

    def test_files(self):
        paths = emit_report(self.metrics, self.safe, self.out, catalog=build_catalog())
        for key in ('json', 'png', 'xlsx', 'html', 'safe_set'):
            self.assertTrue(paths[key].exists(), key)
        self.assertEqual(self.safe, SafeSet.load(paths['safe_set']))
        loaded = AugmentationSet.load(paths['safe_set'])
        self.assertListEqual(list(self.safe.members), loaded.names)
        self.assertEqual(CATALOG_NAMES, loaded.label_names)

    def test_report_rows_mark_safe(self):
        report = SafetyReport(self.metrics, self.safe)
        for row in report.rows():
            self.assertEqual(row['name'] in self.safe, row['safe'])


if __name__ == '__main__':
    main()
