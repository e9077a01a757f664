import doctest
from unittest import TestCase, main

import numpy as np

from safeaug import metrics
from safeaug.metrics import *


def load_tests(loader, tests, ignore):
    tests.addTests(doctest.DocTestSuite(metrics))
    return tests


class AccuracyCounterTest(TestCase):
    def test_value(self):
        counter = AccuracyCounter()
        counter.add([1, 2, 3, 4], [1, 2, 0, 0])
        self.assertEqual(50.0, counter.value)

    def test_unite_many(self):
        first, second = AccuracyCounter(), AccuracyCounter()
        first.add([1, 1], [1, 1])
        second.add([0, 0], [1, 1])
        united = AccuracyCounter.unite_many(first, second)
        self.assertEqual(4, united.total)
        self.assertEqual(50.0, united.value)
        self.assertEqual(50.0, first.concat(second).value)

    def test_empty(self):
        with self.assertRaises(ValueError):
            AccuracyCounter().value

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            AccuracyCounter().add([1, 2], [1])


class IoUCounterTest(TestCase):
    def test_toy_case_is_seven_twelfths(self):
        counter = IoUCounter(2)
        counter.add(np.array([[[0, 0], [1, 1]]]), np.array([[[0, 1], [1, 1]]]))
        self.assertAlmostEqual(100 * 7 / 12, counter.value, places=10)

    def test_perfect_prediction(self):
        masks = np.random.default_rng(0).integers(0, 19, size=(2, 8, 8))
        counter = IoUCounter(19)
        counter.add(masks, masks)
        self.assertEqual(100.0, counter.value)

    def test_ignore_index(self):
        counter = IoUCounter(2)
        counter.add(np.array([[[0, 1]]]), np.array([[[0, 255]]]))
        self.assertEqual(100.0, counter.value)

    def test_accumulates_over_batches(self):
        predictions = np.array([[[0, 0], [1, 1]]])
        masks = np.array([[[0, 1], [1, 1]]])
        whole = IoUCounter(2)
        whole.add(np.concatenate([predictions, masks]), np.concatenate([masks, masks]))
        first, second = IoUCounter(2), IoUCounter(2)
        first.add(predictions, masks)
        second.add(masks, masks)
        self.assertAlmostEqual(whole.value, first.concat(second).value)

    def test_per_class(self):
        counter = IoUCounter(3)
        counter.add(np.array([[[0, 0], [1, 1]]]), np.array([[[0, 1], [1, 1]]]))
        per_class = counter.per_class
        self.assertAlmostEqual(0.5, per_class[0])
        self.assertAlmostEqual(2 / 3, per_class[1])
        self.assertTrue(np.isnan(per_class[2]))


class MetricNameTest(TestCase):
    def test_counters(self):
        self.assertIsInstance(make_counter('classification', 10), AccuracyCounter)
        self.assertIsInstance(make_counter('segmentation', 19), IoUCounter)
        self.assertEqual('top1', metric_name('classification'))
        self.assertEqual('miou', metric_name('segmentation'))


if __name__ == '__main__':
    main()
