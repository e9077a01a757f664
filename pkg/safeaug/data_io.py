"""
Датасеты: CIFAR-10/100, SVHN, Tiny ImageNet, Cityscapes, синтетический пробный датасет
с известными безопасными и небезопасными преобразованиями и синтетическая сегментация shapes.

Все изображения хранятся как uint8 N x H x W x C. Статистики нормализации считаются только по train.
"""
import hashlib
import json
from pathlib import Path

import numpy as np
import pandas as pd
from PIL import Image

from safeaug.local_path import get_data_root, get_local_path
from safeaug.log import get_logger

logger = get_logger(__name__)

CHECKSUMS_PATH = r'checksums.json'
IGNORE_INDEX = 255
CITYSCAPES_SIZE = (256, 256)
TINY_IMAGENET_DIR = 'tiny-imagenet-200'


class DatasetMissingException(Exception):
    """
    Файлы датасета не найдены или повреждены
    """
    pass


class ChecksumMismatchException(Exception):
    """
    Контрольная сумма файла датасета не совпадает с манифестом
    """
    pass


class ContradictoryProbeSpecException(ValueError):
    """
    Описание пробного датасета противоречиво
    """
    pass


class Split:
    """
    Часть датасета

    Attributes:
        images (np.ndarray): N x H x W x C uint8
        targets (np.ndarray): N классов или N x H x W масок
    """

    def __init__(self, images, targets):
        if len(images) != len(targets):
            raise ValueError(f'{len(images)} images but {len(targets)} targets')
        self.images = images
        self.targets = targets

    def __len__(self):
        return len(self.images)

    def take(self, indices):
        return Split(self.images[indices], self.targets[indices])


class NormalizationStats:
    """
    Поканальные среднее и стандартное отклонение в шкале [0, 1]

    Attributes:
        mean (np.ndarray): Средние по каналам
        std (np.ndarray): Стандартные отклонения по каналам
    """

    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        if (self.std <= 0).any():
            raise ValueError('Standard deviation must be positive')

    @staticmethod
    def compute(images):
        """
        Считает статистики по изображениям
        :param images: N x H x W x C uint8
        :rtype: NormalizationStats
        """
        values = images.reshape(-1, images.shape[-1]).astype(np.float64) / 255.0
        return NormalizationStats(values.mean(axis=0), np.maximum(values.std(axis=0), 1e-6))

    def normalize(self, images):
        """
        Переводит uint8 (или float в [0, 1]) изображения в нормализованный float32
        """
        values = images.astype(np.float64)
        if images.dtype == np.uint8:
            values /= 255.0
        return ((values - self.mean) / self.std).astype(np.float32)

    def denormalize(self, values):
        """
        Обратное преобразование в float [0, 1]
        """
        return np.asarray(values, dtype=np.float64) * self.std + self.mean

    def to_dict(self):
        return {'mean': self.mean.tolist(), 'std': self.std.tolist()}

    @staticmethod
    def parse_from_dict(row_dict):
        return NormalizationStats(row_dict['mean'], row_dict['std'])


class DatasetHandle:
    """
    Загруженный датасет

    Attributes:
        name (str): Название
        task (str): classification или segmentation
        num_classes (int): Число классов K
        train (Split): Обучающая часть
        val (Split): Валидационная часть (выделяется из train)
        test (Split): Тестовая часть
        stats (NormalizationStats): Статистики нормализации по train
        input_size (Tuple[int, int]): Разрешение изображений
        extra (dict): Дополнительные сведения (например, описание пробного датасета)
    """

    def __init__(self, name, task, num_classes, train: Split, val: Split, test: Split, stats=None, extra=None):
        self.name = name
        self.task = task
        self.num_classes = num_classes
        self.train = train
        self.val = val
        self.test = test
        self.stats = stats or NormalizationStats.compute(train.images)
        self.input_size = tuple(train.images.shape[1:3])
        self.extra = dict(extra or {})

    @property
    def channels(self):
        return self.train.images.shape[3]

    def normalize(self, images):
        return self.stats.normalize(images)

    def __repr__(self):
        return (f'DatasetHandle({self.name!r}, K={self.num_classes}, train={len(self.train)}, '
                f'val={len(self.val)}, test={len(self.test)})')


def stratified_subset(labels, size, seed):
    """
    Детерминированное стратифицированное подмножество: каждого класса size // K или size // K + 1
    :param labels: Классы всех элементов
    :param size: Размер подмножества
    :param seed: Зерно
    :return: Отсортированные индексы
    :rtype: np.ndarray
    :raises ValueError: Если size больше числа элементов
    """
    labels = np.asarray(labels)
    if not 0 <= size <= len(labels):
        raise ValueError(f'Subset size {size} exceeds split size {len(labels)}')
    rng = np.random.default_rng(seed)
    classes = np.unique(labels)
    per_class = np.full(len(classes), size // len(classes))
    per_class[rng.permutation(len(classes))[:size % len(classes)]] += 1
    chosen = []
    for cls, count in zip(classes, per_class):
        members = np.flatnonzero(labels == cls)
        chosen.append(rng.choice(members, size=min(count, len(members)), replace=False))
    chosen = np.concatenate(chosen) if chosen else np.array([], dtype=np.int64)
    if len(chosen) < size:
        # в каких-то классах не хватило элементов
        rest = np.setdiff1d(np.arange(len(labels)), chosen)
        chosen = np.concatenate([chosen, rng.choice(rest, size=size - len(chosen), replace=False)])
    return np.sort(chosen).astype(np.int64)


def _random_subset(count, size, seed):
    if not 0 <= size <= count:
        raise ValueError(f'Subset size {size} exceeds split size {count}')
    return np.sort(np.random.default_rng(seed).choice(count, size=size, replace=False))


def _subset(split: Split, size, seed, task):
    if size is None or size >= len(split):
        return split
    if task == 'classification':
        return split.take(stratified_subset(split.targets, size, seed))
    return split.take(_random_subset(len(split), size, seed))


def _train_val(split: Split, val_fraction, seed, task):
    val_size = int(round(val_fraction * len(split)))
    if val_size == 0:
        return split, split.take(np.array([], dtype=np.int64))
    if task == 'classification':
        val_indices = stratified_subset(split.targets, val_size, seed + 1)
    else:
        val_indices = _random_subset(len(split), val_size, seed + 1)
    train_indices = np.setdiff1d(np.arange(len(split)), val_indices)
    return split.take(train_indices), split.take(val_indices)


def _md5(path: Path):
    digest = hashlib.md5()
    with open(path, 'rb') as file:
        for chunk in iter(lambda: file.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def verify_checksums(root, manifest_path=None):
    """
    Проверяет контрольные суммы архивов датасетов, которые есть в папке
    :param root: Папка с данными
    :param manifest_path: Путь к манифесту (по умолчанию checksums.json пакета)
    :return: Проверенные файлы
    :rtype: List[str]
    :raises ChecksumMismatchException: Если сумма не совпала
    """
    manifest_path = Path(manifest_path) if manifest_path else get_local_path(CHECKSUMS_PATH)
    manifest = json.loads(manifest_path.read_text(encoding='utf-8'))
    checked = []
    for file_name, expected in manifest['md5'].items():
        path = Path(root) / file_name
        if not path.exists():
            continue
        actual = _md5(path)
        if actual != expected:
            raise ChecksumMismatchException(f'{file_name}: md5 {actual} does not match {expected}')
        checked.append(file_name)
    return checked


def _load_torchvision(name, root):
    import torchvision

    try:
        if name in ('cifar10', 'cifar100'):
            constructor = torchvision.datasets.CIFAR10 if name == 'cifar10' else torchvision.datasets.CIFAR100
            train = constructor(str(root), train=True, download=False)
            test = constructor(str(root), train=False, download=False)
            return (Split(train.data, np.asarray(train.targets, dtype=np.int64)),
                    Split(test.data, np.asarray(test.targets, dtype=np.int64)), len(train.classes))
        if name == 'svhn':
            train = torchvision.datasets.SVHN(str(root), split='train', download=False)
            test = torchvision.datasets.SVHN(str(root), split='test', download=False)
            return (Split(train.data.transpose(0, 2, 3, 1), np.asarray(train.labels, dtype=np.int64)),
                    Split(test.data.transpose(0, 2, 3, 1), np.asarray(test.labels, dtype=np.int64)), 10)
    except RuntimeError as e:
        raise DatasetMissingException(f'{name} not found at {root}: {e}') from e
    raise ValueError(f'Unknown dataset "{name}"')


def _read_rgb(path, size=None, resample=Image.BILINEAR):
    with Image.open(path) as image:
        image = image.convert('RGB')
        if size is not None and image.size != (size[1], size[0]):
            image = image.resize((size[1], size[0]), resample)
        return np.asarray(image, dtype=np.uint8)


def _load_tiny_imagenet(root):
    """
    Tiny ImageNet: 200 классов, 64 x 64. Метки теста закрыты, поэтому тестом служит val
    """
    directory = Path(root) / TINY_IMAGENET_DIR
    if not directory.exists():
        raise DatasetMissingException(f'Tiny ImageNet not found at {directory}')
    wnids = (directory / 'wnids.txt').read_text().split()
    class_index = {wnid: i for i, wnid in enumerate(wnids)}
    images, labels = [], []
    for wnid in wnids:
        for path in sorted((directory / 'train' / wnid / 'images').glob('*.JPEG')):
            images.append(_read_rgb(path))
            labels.append(class_index[wnid])
    annotations = pd.read_csv(directory / 'val' / 'val_annotations.txt', sep='\t', header=None,
                              usecols=[0, 1], names=['file', 'wnid'])
    test_images = [_read_rgb(directory / 'val' / 'images' / file) for file in annotations['file']]
    test_labels = annotations['wnid'].map(class_index).to_numpy(dtype=np.int64)
    return (Split(np.stack(images), np.asarray(labels, dtype=np.int64)),
            Split(np.stack(test_images), test_labels), len(wnids))


def _load_cityscapes(root):
    """
    Cityscapes (fine): 19 классов train_id, изображения приводятся к 256 x 256. Тестом служит val
    """
    import torchvision

    try:
        splits = {split: torchvision.datasets.Cityscapes(str(root), split=split, mode='fine',
                                                         target_type='semantic')
                  for split in ('train', 'val')}
    except RuntimeError as e:
        raise DatasetMissingException(f'Cityscapes not found at {root}: {e}') from e
    lookup = np.full(256, IGNORE_INDEX, dtype=np.uint8)
    for cls in torchvision.datasets.Cityscapes.classes:
        if 0 <= cls.id < 256 and cls.train_id not in (-1, 255):
            lookup[cls.id] = cls.train_id
    result = []
    for split in ('train', 'val'):
        dataset = splits[split]
        images, masks = [], []
        for image_path, target_paths in zip(dataset.images, dataset.targets):
            images.append(_read_rgb(image_path, CITYSCAPES_SIZE))
            with Image.open(target_paths[0]) as mask:
                mask = mask.resize((CITYSCAPES_SIZE[1], CITYSCAPES_SIZE[0]), Image.NEAREST)
                masks.append(lookup[np.asarray(mask, dtype=np.uint8)])
        result.append(Split(np.stack(images), np.stack(masks)))
    return result[0], result[1], 19


def load_dataset(name, root=None, subset_size=None, seed=0, val_fraction=0.1, test_subset_size=None,
                 probe_spec=None):
    """
    Загружает датасет
    :param name: cifar10, cifar100, svhn, tinyimagenet, cityscapes, probe или shapes
    :param root: Папка с данными (по умолчанию SAFEAUG_DATA_ROOT или ./data)
    :param subset_size: Размер стратифицированного подмножества train или None
    :param seed: Зерно подмножеств и синтетических данных
    :param val_fraction: Доля train для валидации
    :param test_subset_size: Размер подмножества теста или None
    :param probe_spec: Описание пробного датасета (для probe)
    :rtype: DatasetHandle
    :raises DatasetMissingException: Если файлов нет
    :raises ChecksumMismatchException: Если архив поврежден
    """
    extra = {}
    if name == 'probe':
        spec = probe_spec or SyntheticProbeSpec(sample_count=subset_size or 5000, seed=seed)
        train, test, num_classes = _generate_probe(spec)
        extra['probe_spec'] = spec.to_dict()
        task = 'classification'
    elif name == 'shapes':
        count = subset_size or 2000
        train, test = make_shapes(count, seed), make_shapes(max(1, count // 4), seed + 1)
        num_classes = len(SHAPE_CLASSES)
        task = 'segmentation'
    else:
        root = get_data_root(root)
        verify_checksums(root)
        if name == 'tinyimagenet':
            train, test, num_classes = _load_tiny_imagenet(root)
            task = 'classification'
        elif name == 'cityscapes':
            train, test, num_classes = _load_cityscapes(root)
            task = 'segmentation'
        else:
            train, test, num_classes = _load_torchvision(name, root)
            task = 'classification'
    train = _subset(train, subset_size, seed, task)
    test = _subset(test, test_subset_size, seed + 2, task)
    train, val = _train_val(train, val_fraction, seed, task)
    handle = DatasetHandle(name, task, num_classes, train, val, test, extra=extra)
    logger.info(f'Loaded {handle}')
    return handle


NUISANCE_TARGETS = {
    'brightness': 'RandomBrightness',
    'contrast': 'RandomContrast',
    'horizontal_mirror': 'HorizontalFlip',
}

ASYMMETRY_TARGETS = {
    'vertical_gradient': 'VerticalFlip',
    'horizontal_gradient': 'HorizontalFlip',
    'color_cast': 'ToGray',
}

# (fx, fy) - число периодов синусоиды по ширине и высоте для класса
CLASS_FREQUENCIES = ((2, 0), (0, 2), (2, 2), (2, -2), (4, 0), (0, 4), (4, 4), (4, -4))
BASE_INTENSITY = 130.0
GRADIENT_RANGE = (1.0, 0.45)
COLOR_CAST = (1.0, 0.65, 0.35)


class SyntheticProbeSpec:
    """
    Описание пробного датасета

    Attributes:
        sample_count (int): Количество изображений train (тест - test_fraction от него)
        image_size (int): Сторона квадратного изображения
        num_classes (int): Число классов (до 8)
        nuisances (Tuple[str]): Помехи, заложенные в сами данные (преобразование становится необнаружимым)
        asymmetries (Tuple[str]): Асимметрии данных (преобразование становится обнаружимым)
        brightness_range (Tuple[float, float]): Диапазон множителя яркости для помехи brightness
        contrast_range (Tuple[float, float]): Диапазон контраста для помехи contrast
        noise_std (float): Шум пикселей в шкале 8 бит
        test_fraction (float): Размер теста относительно train
        seed (int): Зерно генератора
    """

    def __init__(self, sample_count=5000, image_size=32, num_classes=4, nuisances=('brightness',),
                 asymmetries=('vertical_gradient',), brightness_range=(0.4, 1.6), contrast_range=(0.5, 1.5),
                 noise_std=3.0, test_fraction=0.2, seed=0):
        self.sample_count = int(sample_count)
        self.image_size = int(image_size)
        self.num_classes = int(num_classes)
        self.nuisances = tuple(nuisances)
        self.asymmetries = tuple(asymmetries)
        self.brightness_range = tuple(brightness_range)
        self.contrast_range = tuple(contrast_range)
        self.noise_std = float(noise_std)
        self.test_fraction = float(test_fraction)
        self.seed = int(seed)

    def validate(self):
        """
        Проверяет описание
        :raises ContradictoryProbeSpecException: Если помеха и асимметрия относятся к одному преобразованию
        :raises ValueError: Если значения вне допустимых диапазонов
        """
        unknown = [n for n in self.nuisances if n not in NUISANCE_TARGETS] + \
                  [a for a in self.asymmetries if a not in ASYMMETRY_TARGETS]
        if unknown:
            raise ValueError(f'Unknown probe properties {unknown}')
        nuisance_targets = {NUISANCE_TARGETS[n] for n in self.nuisances}
        conflicts = sorted(nuisance_targets & {ASYMMETRY_TARGETS[a] for a in self.asymmetries})
        if conflicts:
            raise ContradictoryProbeSpecException(f'Transforms {conflicts} are both nuisance and asymmetry')
        if not 1 <= self.num_classes <= len(CLASS_FREQUENCIES):
            raise ValueError(f'num_classes must be in 1..{len(CLASS_FREQUENCIES)}')
        if self.sample_count < self.num_classes or self.image_size < 8:
            raise ValueError('Probe needs at least one image per class and images of at least 8 pixels')
        if not 0 < self.test_fraction <= 1:
            raise ValueError('test_fraction must be in (0, 1]')

    @property
    def safe_transforms(self):
        return sorted(NUISANCE_TARGETS[n] for n in self.nuisances)

    @property
    def unsafe_transforms(self):
        return sorted(ASYMMETRY_TARGETS[a] for a in self.asymmetries)

    def to_dict(self):
        return {
            'sample_count': self.sample_count, 'image_size': self.image_size, 'num_classes': self.num_classes,
            'nuisances': list(self.nuisances), 'asymmetries': list(self.asymmetries),
            'brightness_range': list(self.brightness_range), 'contrast_range': list(self.contrast_range),
            'noise_std': self.noise_std, 'test_fraction': self.test_fraction, 'seed': self.seed,
        }

    @staticmethod
    def parse_from_dict(row_dict):
        return SyntheticProbeSpec(**row_dict)


def _probe_images(spec: SyntheticProbeSpec, labels, rng):
    size = spec.image_size
    grid = np.arange(size) / size
    xs, ys = np.meshgrid(grid, grid)
    images = np.empty((len(labels), size, size, 3), dtype=np.float64)
    for i, label in enumerate(labels):
        fx, fy = CLASS_FREQUENCIES[label]
        phase = rng.uniform(0, 2 * np.pi)
        pattern = 0.25 + 0.375 * (1 + np.sin(2 * np.pi * (fx * xs + fy * ys) + phase))
        tint = COLOR_CAST if 'color_cast' in spec.asymmetries else rng.uniform(0.95, 1.05, size=3)
        images[i] = BASE_INTENSITY * pattern[:, :, np.newaxis] * np.asarray(tint)
    # Сумма синусоиды по целому числу периодов равна нулю, поэтому средние половин не зависят от класса
    gradient = np.linspace(GRADIENT_RANGE[0], GRADIENT_RANGE[1], size)
    if 'vertical_gradient' in spec.asymmetries:
        images *= gradient[np.newaxis, :, np.newaxis, np.newaxis]
    if 'horizontal_gradient' in spec.asymmetries:
        images *= gradient[np.newaxis, np.newaxis, :, np.newaxis]
    if 'horizontal_mirror' in spec.nuisances:
        mirrored = rng.random(len(labels)) < 0.5
        images[mirrored] = images[mirrored][:, :, ::-1]
    if 'contrast' in spec.nuisances:
        alpha = rng.uniform(*spec.contrast_range, size=len(labels))[:, np.newaxis, np.newaxis, np.newaxis]
        means = images.mean(axis=(1, 2, 3), keepdims=True)
        images = images * alpha + means * (1 - alpha)
    if 'brightness' in spec.nuisances:
        images *= rng.uniform(*spec.brightness_range, size=len(labels))[:, np.newaxis, np.newaxis, np.newaxis]
    images += rng.normal(0, spec.noise_std, size=images.shape)
    return np.clip(np.rint(images), 0, 255).astype(np.uint8)


def _generate_probe(spec: SyntheticProbeSpec):
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    test_count = max(spec.num_classes, int(round(spec.sample_count * spec.test_fraction)))
    splits = []
    for count in (spec.sample_count, test_count):
        labels = np.arange(count) % spec.num_classes
        rng.shuffle(labels)
        splits.append(Split(_probe_images(spec, labels, rng), labels.astype(np.int64)))
    return splits[0], splits[1], spec.num_classes


def make_synthetic_probe(spec: SyntheticProbeSpec, val_fraction=0.1):
    """
    Создает пробный датасет, где каждая асимметрия делает свое преобразование обнаружимым,
    а каждая помеха уже присутствует в данных, и ее преобразование обнаружить нельзя
    :param spec: Описание
    :param val_fraction: Доля train для валидации
    :rtype: DatasetHandle
    :raises ContradictoryProbeSpecException: Если описание противоречиво
    """
    train, test, num_classes = _generate_probe(spec)
    train, val = _train_val(train, val_fraction, spec.seed, 'classification')
    return DatasetHandle('probe', 'classification', num_classes, train, val, test,
                         extra={'probe_spec': spec.to_dict()})


MANIFEST_NAME = 'manifest.csv'
PROBE_SPEC_NAME = 'probe_spec.json'


def save_image_directory(handle: DatasetHandle, directory):
    """
    Сохраняет датасет классификации как папку PNG изображений и манифест меток
    :param handle: Датасет
    :param directory: Папка
    :return: Путь к манифесту
    :rtype: Path
    """
    directory = Path(directory)
    rows = []
    for split_name in ('train', 'val', 'test'):
        split = getattr(handle, split_name)
        (directory / split_name).mkdir(parents=True, exist_ok=True)
        for i, (image, label) in enumerate(zip(split.images, split.targets)):
            file = f'{split_name}/{i:06d}.png'
            Image.fromarray(image).save(directory / file)
            rows.append({'file': file, 'split': split_name, 'label': int(label)})
    manifest = directory / MANIFEST_NAME
    pd.DataFrame(rows, columns=['file', 'split', 'label']).to_csv(manifest, index=False)
    (directory / PROBE_SPEC_NAME).write_text(
        json.dumps({'name': handle.name, 'num_classes': handle.num_classes, 'stats': handle.stats.to_dict(),
                    'extra': handle.extra}, indent=2), encoding='utf-8')
    return manifest


def load_image_directory(directory):
    """
    Загружает датасет, сохраненный save_image_directory
    :param directory: Папка
    :rtype: DatasetHandle
    :raises DatasetMissingException: Если манифеста нет
    """
    directory = Path(directory)
    if not (directory / MANIFEST_NAME).exists():
        raise DatasetMissingException(f'No {MANIFEST_NAME} in {directory}')
    manifest = pd.read_csv(directory / MANIFEST_NAME)
    meta = json.loads((directory / PROBE_SPEC_NAME).read_text(encoding='utf-8'))
    splits = {}
    for split_name in ('train', 'val', 'test'):
        rows = manifest[manifest['split'] == split_name]
        images = [_read_rgb(directory / file) for file in rows['file']]
        if images:
            images = np.stack(images)
        else:
            images = np.empty((0,) + splits['train'].images.shape[1:], dtype=np.uint8)
        splits[split_name] = Split(images, rows['label'].to_numpy(dtype=np.int64))
    return DatasetHandle(meta['name'], 'classification', meta['num_classes'], splits['train'], splits['val'],
                         splits['test'], NormalizationStats.parse_from_dict(meta['stats']), meta.get('extra'))


SHAPE_CLASSES = ('background', 'circle', 'square')
SHAPES_SIZE = 64


def make_shapes(count, seed, size=SHAPES_SIZE):
    """
    Синтетическая сегментация: круги и квадраты на текстурном фоне, 3 класса
    :param count: Количество изображений
    :param seed: Зерно
    :param size: Сторона изображения
    :rtype: Split
    """
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size]
    images = np.empty((count, size, size, 3), dtype=np.uint8)
    masks = np.zeros((count, size, size), dtype=np.uint8)
    for i in range(count):
        freq = rng.uniform(1, 4, size=2)
        texture = 60 + 30 * np.sin(2 * np.pi * (freq[0] * xs + freq[1] * ys) / size + rng.uniform(0, 2 * np.pi))
        image = texture[:, :, np.newaxis] * rng.uniform(0.8, 1.2, size=3) + rng.normal(0, 8, size=(size, size, 3))
        mask = masks[i]
        for _ in range(rng.integers(1, 4)):
            cls = int(rng.integers(1, len(SHAPE_CLASSES)))
            radius = int(rng.integers(size // 10, size // 4))
            cy, cx = rng.integers(radius, size - radius, size=2)
            if cls == 1:
                region = (ys - cy) ** 2 + (xs - cx) ** 2 <= radius ** 2
            else:
                region = (np.abs(ys - cy) <= radius) & (np.abs(xs - cx) <= radius)
            image[region] = rng.uniform(140, 250, size=3)
            mask[region] = cls
        images[i] = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    return Split(images, masks)
