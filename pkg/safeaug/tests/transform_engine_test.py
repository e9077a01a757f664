import doctest
from unittest import TestCase, main

import numpy as np

from safeaug import transform_engine
from safeaug.models import CATALOG_NAMES, AugmentationSpec
from safeaug.transform_engine import *


def load_tests(loader, tests, ignore):
    tests.addTests(doctest.DocTestSuite(transform_engine))
    return tests


def random_image(seed=0, shape=(32, 32, 3)):
    return np.random.default_rng(seed).integers(0, 256, size=shape, dtype=np.uint8)


class CatalogTest(TestCase):
    def test_catalog_order_and_size(self):
        catalog = build_catalog()
        self.assertEqual(15, len(catalog))
        self.assertListEqual(list(CATALOG_NAMES), catalog.names)
        self.assertEqual(CATALOG_NAMES, catalog.label_names)

    def test_catalog_probability(self):
        catalog = build_catalog(probability=0.3)
        self.assertTrue(all(spec.probability == 0.3 for spec in catalog))

    def test_crop_size_reaches_crops(self):
        catalog = build_catalog((20, 18))
        self.assertEqual(20, catalog.spec('RandomCrop').params['height'])
        self.assertEqual(18, catalog.spec('CenterCrop').params['width'])

    def test_unknown_transform(self):
        with self.assertRaises(UnknownTransformException):
            default_params('Solarize')


class TransformTest(TestCase):
    catalog = build_catalog()

    def test_every_transform_matches_output_shape(self):
        image = random_image()
        for spec in self.catalog:
            with self.subTest(spec.name):
                result = apply_transform(image, spec, make_rng(1))
                self.assertEqual(output_shape(spec, image.shape), result.shape)
                self.assertEqual(np.uint8, result.dtype)

    def test_transpose_shape_on_rectangle(self):
        result = apply_transform(random_image(shape=(20, 30, 3)), AugmentationSpec('Transpose'), make_rng(0))
        self.assertEqual((30, 20, 3), result.shape)

    def test_flips_and_transpose_are_involutions(self):
        image = random_image(shape=(17, 23, 3))
        for name in ('HorizontalFlip', 'VerticalFlip', 'Transpose'):
            with self.subTest(name):
                spec = AugmentationSpec(name)
                twice = apply_transform(apply_transform(image, spec, make_rng(0)), spec, make_rng(0))
                np.testing.assert_array_equal(image, twice)

    def test_four_quarter_turns_are_identity(self):
        image = random_image(shape=(12, 12, 3))
        spec = AugmentationSpec('RandomRotate90', {'factor': 1})
        result = image
        for _ in range(4):
            result = apply_transform(result, spec, make_rng(0))
        np.testing.assert_array_equal(image, result)

    def test_quarter_turn_changes_pixels(self):
        image = random_image(shape=(12, 12, 3))
        for seed in range(10):
            result = apply_transform(image, self.catalog.spec('RandomRotate90'), make_rng(seed))
            self.assertFalse(np.array_equal(image, result))

    def test_determinism_under_fixed_seed(self):
        image = random_image()
        for spec in self.catalog:
            with self.subTest(spec.name):
                first = apply_transform(image, spec, make_rng(42))
                second = apply_transform(image, spec, make_rng(42))
                np.testing.assert_array_equal(first, second)

    def test_source_image_is_not_modified(self):
        image = random_image()
        copy = image.copy()
        for spec in self.catalog:
            apply_transform(image, spec, make_rng(3))
        np.testing.assert_array_equal(copy, image)

    def test_float_images_stay_in_unit_interval(self):
        image = random_image().astype(np.float32) / 255
        for spec in self.catalog:
            with self.subTest(spec.name):
                result = apply_transform(image, spec, make_rng(5))
                self.assertTrue(np.issubdtype(result.dtype, np.floating))
                self.assertGreaterEqual(result.min(), 0)
                self.assertLessEqual(result.max(), 1)

    def test_crop_larger_than_image(self):
        with self.assertRaises(CropSizeException):
            apply_transform(random_image(shape=(20, 20, 3)), self.catalog.spec('RandomCrop'), make_rng(0))
        with self.assertRaises(CropSizeException):
            output_shape(self.catalog.spec('CenterCrop'), (20, 20, 3))

    def test_gray_keeps_channels(self):
        result = apply_transform(random_image(), AugmentationSpec('ToGray'), make_rng(0))
        self.assertEqual((32, 32, 3), result.shape)
        np.testing.assert_array_equal(result[:, :, 0], result[:, :, 1])
        np.testing.assert_array_equal(result[:, :, 1], result[:, :, 2])

    def test_gray_single_channel_is_identity(self):
        image = random_image(shape=(8, 8, 1))
        np.testing.assert_array_equal(image, apply_transform(image, AugmentationSpec('ToGray'), make_rng(0)))

    def test_gray_unsupported_channels(self):
        with self.assertRaises(ChannelCountException):
            apply_transform(random_image(shape=(8, 8, 4)), AugmentationSpec('ToGray'), make_rng(0))

    def test_single_channel_geometry_keeps_channel_axis(self):
        image = random_image(shape=(32, 32, 1))
        for name in ('ShiftScaleRotate', 'RandomSizedCrop', 'Blur', 'CLAHE'):
            with self.subTest(name):
                result = apply_transform(image, self.catalog.spec(name), make_rng(0))
                self.assertEqual(3, result.ndim)
                self.assertEqual(1, result.shape[2])

    def test_brightness_changes_intensity_only(self):
        image = np.full((4, 4, 3), 100, dtype=np.uint8)
        result = apply_with_params(image, 'RandomBrightness', {'alpha': 1.2})
        self.assertTrue(np.all(result == 120))

    def test_wrong_image(self):
        with self.assertRaises(ValueError):
            apply_transform(np.zeros((4, 4), dtype=np.int32), AugmentationSpec('HorizontalFlip'), make_rng(0))
        with self.assertRaises(ValueError):
            apply_transform(np.full((4, 4), 2.0), AugmentationSpec('HorizontalFlip'), make_rng(0))


class MaskTest(TestCase):
    def test_photometric_leaves_mask(self):
        mask = np.arange(16, dtype=np.uint8).reshape(4, 4)
        for name in ('RandomBrightness', 'GaussNoise', 'Blur', 'CLAHE'):
            np.testing.assert_array_equal(mask, apply_with_params(mask, name, {}, is_mask=True))

    def test_mask_follows_flip_in_batch(self):
        catalog = build_catalog()
        images = random_image(shape=(2, 8, 8, 3))
        masks = np.arange(128, dtype=np.uint8).reshape(2, 8, 8)
        subset = SubsetSample(catalog, [catalog.names.index('HorizontalFlip')])
        batch = augment_batch(images, subset, 1.0, make_rng(0), masks)
        np.testing.assert_array_equal(masks[:, :, ::-1], batch.masks)

    def test_mask_nearest_keeps_classes(self):
        mask = np.zeros((32, 32), dtype=np.uint8)
        mask[8:24, 8:24] = 2
        params = {'angle': 30.0, 'scale': 1.05, 'dx': 0.0, 'dy': 0.0}
        result = apply_with_params(mask, 'ShiftScaleRotate', params, is_mask=True)
        self.assertTrue(set(np.unique(result)) <= {0, 2})


class CutoutTest(TestCase):
    def test_cutout_area(self):
        image = np.ones((32, 32, 3), dtype=np.float32)
        for seed in range(20):
            result = apply_cutout(image, 16, make_rng(seed))
            zeros = int((result[:, :, 0] == 0).sum())
            self.assertGreater(zeros, 0)
            self.assertLessEqual(zeros, 16 * 16)

    def test_cutout_larger_than_image(self):
        result = apply_cutout(np.ones((8, 8, 3)), 100, make_rng(0))
        self.assertTrue(np.all(result == 0))
        for seed in range(10):
            self.assertTrue(np.all(apply_cutout(np.ones((8, 8, 3)), 8, make_rng(seed)) == 0))

    def test_cutout_fill(self):
        result = apply_cutout(np.zeros((8, 8, 1)), 4, make_rng(0), fill=7)
        filled = int((result == 7).sum())
        self.assertGreater(filled, 0)
        self.assertLessEqual(filled, 16)
        self.assertTrue(np.all((result == 7) | (result == 0)))

    def test_cutout_clipped_at_borders(self):
        image = np.ones((32, 32, 1), dtype=np.float32)
        areas, corners = set(), set()
        for seed in range(200):
            erased = apply_cutout(image, 16, make_rng(seed))[:, :, 0] == 0
            areas.add(int(erased.sum()))
            rows, columns = np.nonzero(erased)
            self.assertEqual(erased.sum(), (rows.max() - rows.min() + 1) * (columns.max() - columns.min() + 1))
            corners.update({(rows.min(), columns.min()), (rows.max(), columns.max())})
        self.assertIn(16 * 16, areas)
        self.assertTrue(any(area < 16 * 16 for area in areas))
        self.assertIn((0, 0), corners)
        self.assertIn((31, 31), corners)

    def test_cutout_wrong_size(self):
        with self.assertRaises(ValueError):
            apply_cutout(np.ones((8, 8, 3)), 0, make_rng(0))

    def test_cutout_batch_zero_is_identity(self):
        images = np.ones((2, 8, 8, 3))
        rng = make_rng(0)
        state = rng.bit_generator.state
        self.assertIs(images, cutout_batch(images, 0, rng))
        self.assertEqual(state, rng.bit_generator.state)


class SamplerTest(TestCase):
    catalog = build_catalog()

    def test_random_size_distribution(self):
        rng = make_rng(0)
        draws = 100000
        counts = np.zeros(6)
        for _ in range(draws):
            counts[len(sample_subset(self.catalog, RandomSize(5), rng))] += 1
        np.testing.assert_allclose(counts / draws, np.full(6, 1 / 6), atol=0.01)

    def test_fire_rate(self):
        rng = make_rng(1)
        subset = SubsetSample(self.catalog, [0])
        image = np.zeros((1, 2, 2, 1), dtype=np.uint8)
        draws = 100000
        fired = sum(augment_batch(image, subset, 0.5, rng).labels[0] for _ in range(draws))
        self.assertAlmostEqual(0.5, fired / draws, delta=0.01)

    def test_fixed_size_unique(self):
        rng = make_rng(2)
        for _ in range(100):
            subset = sample_subset(self.catalog, FixedSize(3), rng)
            self.assertEqual(3, len(set(subset.names)))

    def test_fixed_size_zero_makes_no_draws(self):
        rng = make_rng(3)
        state = rng.bit_generator.state
        self.assertEqual(0, len(sample_subset(self.catalog, FixedSize(0), rng)))
        self.assertEqual(state, rng.bit_generator.state)

    def test_subset_larger_than_set(self):
        small = self.catalog.restrict(['HorizontalFlip', 'Blur'])
        with self.assertRaises(SubsetSizeException):
            sample_subset(small, FixedSize(3), make_rng(0))
        with self.assertRaises(SubsetSizeException):
            sample_subset(small, RandomSize(3), make_rng(0))

    def test_restricted_set_keeps_label_indices(self):
        small = self.catalog.restrict(['Blur', 'HorizontalFlip'])
        batch = augment_batch(random_image(shape=(2, 8, 8, 3)), SubsetSample(small, [0, 1]), 1.0, make_rng(0))
        self.assertEqual(15, len(batch.labels))
        self.assertEqual(1, batch.labels[CATALOG_NAMES.index('Blur')])
        self.assertEqual(1, batch.labels[CATALOG_NAMES.index('HorizontalFlip')])
        self.assertEqual(2, int(batch.labels.sum()))


class PipelineTest(TestCase):
    catalog = build_catalog()

    def test_empty_pipeline_is_identity(self):
        image = random_image()
        result, labels = apply_pipeline(image, SubsetSample(self.catalog, ()), 0.5, make_rng(0))
        np.testing.assert_array_equal(image, result)
        self.assertEqual(0, labels.sum())

    def test_probability_zero_fires_nothing(self):
        image = random_image()
        subset = SubsetSample(self.catalog, range(15))
        result, labels = apply_pipeline(image, subset, 0.0, make_rng(0))
        np.testing.assert_array_equal(image, result)
        self.assertEqual(0, labels.sum())

    def test_probability_one_labels_subset(self):
        subset = sample_subset(self.catalog, FixedSize(4), make_rng(7))
        _, labels = apply_pipeline(random_image(), subset, 1.0, make_rng(8))
        expected = np.zeros(15)
        for name in subset.names:
            expected[CATALOG_NAMES.index(name)] = 1
        np.testing.assert_array_equal(expected, labels)

    def test_batch_shares_crop(self):
        images = np.repeat(random_image()[np.newaxis], 4, axis=0)
        subset = SubsetSample(self.catalog, [self.catalog.names.index('RandomCrop')])
        batch = augment_batch(images, subset, 1.0, make_rng(0))
        self.assertEqual((4, 25, 25, 3), batch.images.shape)
        for image in batch.images[1:]:
            np.testing.assert_array_equal(batch.images[0], image)

    def test_pipeline_determinism(self):
        images = random_image(shape=(3, 32, 32, 3))
        subset = SubsetSample(self.catalog, range(15))
        first = augment_batch(images, subset, 0.5, make_rng(11))
        second = augment_batch(images, subset, 0.5, make_rng(11))
        np.testing.assert_array_equal(first.images, second.images)
        self.assertListEqual(first.fired, second.fired)

    def test_fired_follow_subset_order(self):
        subset = SubsetSample(self.catalog, [14, 0, 3])
        batch = augment_batch(random_image(shape=(1, 16, 16, 3)), subset, 1.0, make_rng(0))
        self.assertListEqual(['GaussNoise', 'HorizontalFlip', 'Transpose'], batch.fired)

    def test_wrong_probability(self):
        with self.assertRaises(ValueError):
            augment_batch(random_image(shape=(1, 8, 8, 3)), SubsetSample(self.catalog, ()), 1.5, make_rng(0))

    def test_resize_back(self):
        images = random_image(shape=(2, 25, 25, 3))
        masks = np.ones((2, 25, 25), dtype=np.uint8)
        resized, resized_masks = resize_batch(images, (32, 32), masks)
        self.assertEqual((2, 32, 32, 3), resized.shape)
        self.assertEqual((2, 32, 32), resized_masks.shape)
        self.assertTrue(np.all(resized_masks == 1))


class BaselineTest(TestCase):
    def test_recipes_keep_shape(self):
        images = random_image(shape=(4, 32, 32, 3))
        for dataset in BASELINE_RECIPES:
            with self.subTest(dataset):
                result, _ = apply_baseline(images, dataset, make_rng(0))
                self.assertEqual(images.shape, result.shape)
                self.assertEqual(np.uint8, result.dtype)

    def test_segmentation_masks_use_ignore_fill(self):
        images = random_image(shape=(8, 16, 16, 3))
        masks = np.zeros((8, 16, 16), dtype=np.uint8)
        _, result = apply_baseline(images, 'shapes', make_rng(0), masks)
        self.assertTrue(set(np.unique(result)) <= {0, IGNORE_INDEX})

    def test_unknown_dataset(self):
        with self.assertRaises(KeyError):
            apply_baseline(random_image(shape=(1, 8, 8, 3)), 'mnist', make_rng(0))


if __name__ == '__main__':
    main()
