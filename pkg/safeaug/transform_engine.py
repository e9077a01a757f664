"""
Каталог из 15 преобразований, Cutout, выбор подмножеств и применение конвейера.

Математика преобразований повторяет общепринятые определения библиотеки albumentations
(на основе OpenCV) с величинами по умолчанию:

- RandomBrightness: умножение на коэффициент из [0.8, 1.2]
- RandomContrast: alpha из [0.8, 1.2], смешивание с средней яркостью (серым)
- RandomGamma: gamma из [0.8, 1.2]
- Blur: усредняющий фильтр с нечетным ядром из {3, 5, 7}
- ShiftScaleRotate: сдвиг до 6.25%, масштаб [0.9, 1.1], поворот до 45 градусов, отражение на границах
- GaussNoise: дисперсия из [10, 50] в шкале 8 бит
- CLAHE: clip_limit из [1, 4], сетка 8x8, для RGB применяется к каналу L пространства LAB
- RandomRotate90: поворот на 1, 2 или 3 четверти (0 исключен, чтобы сработавшее преобразование меняло пиксели)
- ToGray: яркость копируется во все каналы, число каналов сохраняется

ВАЖНО: кропы и повороты меняют размер изображения. При обучении после конвейера изображения
приводятся обратно к входному разрешению модели билинейной интерполяцией (resize_batch),
маски - ближайшим соседом.

Геометрия кропа и число четвертей поворота выбираются один раз на батч, остальные параметры -
для каждого изображения.
"""
import cv2
import numpy as np

from safeaug.models import AugmentationSet, AugmentationSpec, CATALOG_NAMES

IGNORE_INDEX = 255

CROPS = frozenset({'RandomCrop', 'CenterCrop', 'RandomSizedCrop'})
GEOMETRIC = frozenset({'HorizontalFlip', 'VerticalFlip', 'RandomRotate90', 'Transpose', 'ShiftScaleRotate'}) | CROPS
PHOTOMETRIC = frozenset(CATALOG_NAMES) - GEOMETRIC
BATCH_LEVEL = CROPS | {'RandomRotate90'}

DEFAULT_CROP_SIZE = (25, 25)


def default_params(name, crop_size=DEFAULT_CROP_SIZE):
    """
    Возвращает параметры величины по умолчанию для преобразования
    :param name: Название преобразования
    :param crop_size: Размер кропов (высота, ширина)
    :rtype: dict

    >>> default_params('RandomGamma')
    {'gamma_limit': (80, 120)}
    >>> default_params('CenterCrop', (25, 25))
    {'height': 25, 'width': 25}
    """
    crop_h, crop_w = crop_size
    params = {
        'HorizontalFlip': {},
        'VerticalFlip': {},
        'RandomRotate90': {'factors': (1, 2, 3)},
        'Transpose': {},
        'ToGray': {},
        'ShiftScaleRotate': {'shift_limit': 0.0625, 'scale_limit': 0.1, 'rotate_limit': 45},
        'RandomCrop': {'height': crop_h, 'width': crop_w},
        'CenterCrop': {'height': crop_h, 'width': crop_w},
        'RandomSizedCrop': {'min_max_height': (max(1, crop_h // 2), crop_h), 'height': crop_h, 'width': crop_w,
                            'w2h_ratio': 1.0},
        'RandomContrast': {'limit': 0.2},
        'RandomBrightness': {'limit': 0.2},
        'RandomGamma': {'gamma_limit': (80, 120)},
        'CLAHE': {'clip_limit': (1.0, 4.0), 'tile_grid_size': (8, 8)},
        'Blur': {'blur_limit': 7},
        'GaussNoise': {'var_limit': (10.0, 50.0), 'mean': 0.0},
    }
    if name not in params:
        raise UnknownTransformException(f'Transform "{name}" is not in the catalog')
    return params[name]


def build_catalog(crop_size=DEFAULT_CROP_SIZE, probability=0.5):
    """
    Строит каталог A из 15 преобразований с величинами по умолчанию
    :param crop_size: Размер кропов (высота, ширина)
    :type crop_size: Tuple[int, int]
    :param probability: Вероятность применения каждого преобразования
    :type probability: float
    :rtype: AugmentationSet
    """
    return AugmentationSet([AugmentationSpec(name, default_params(name, crop_size), probability)
                            for name in CATALOG_NAMES])


class UnknownTransformException(ValueError):
    """
    Преобразования нет в каталоге
    """
    pass


class CropSizeException(ValueError):
    """
    Размер кропа больше изображения
    """
    pass


class ChannelCountException(ValueError):
    """
    Преобразование не поддерживает число каналов изображения
    """
    pass


class SubsetSizeException(ValueError):
    """
    Размер подмножества больше набора
    """
    pass


def make_rng(seed):
    """
    Создает генератор случайных чисел (состояние RngState)
    :param seed: Зерно
    :type seed: int
    :rtype: np.random.Generator
    """
    return np.random.default_rng(seed)


def check_image(image):
    """
    Проверяет изображение: H x W или H x W x C, uint8 или float в [0, 1]
    :param image: Изображение
    :type image: np.ndarray
    :return: None
    :raises ValueError: Если изображение не удовлетворяет инвариантам
    """
    if image.ndim not in (2, 3) or image.shape[0] < 1 or image.shape[1] < 1:
        raise ValueError(f'Image must be H x W x C with H, W >= 1, got shape {image.shape}')
    if image.ndim == 3 and image.shape[2] < 1:
        raise ValueError('Image must have at least one channel')
    if image.dtype == np.uint8:
        return
    if not np.issubdtype(image.dtype, np.floating):
        raise ValueError(f'Unsupported image dtype {image.dtype}')
    if image.size and (image.min() < 0 or image.max() > 1):
        raise ValueError('Float images must lie in [0, 1]')


def _channels(image):
    return 1 if image.ndim == 2 else image.shape[2]


def _max_value(image):
    return 255.0 if image.dtype == np.uint8 else 1.0


def _like(values, image):
    """
    Приводит float-результат к типу и числу измерений исходного изображения
    """
    max_value = _max_value(image)
    values = np.clip(values, 0, max_value)
    if image.dtype == np.uint8:
        values = np.rint(values)
    values = values.astype(image.dtype)
    if values.ndim == 2 and image.ndim == 3:
        values = values[:, :, np.newaxis]
    return values


def _restore_channels(result, image):
    # OpenCV убирает ось каналов у одноканальных изображений
    if result.ndim == 2 and image.ndim == 3:
        return result[:, :, np.newaxis]
    return result


def _check_crop(height, width, shape):
    if not (1 <= height <= shape[0] and 1 <= width <= shape[1]):
        raise CropSizeException(f'Crop {height}x{width} does not fit image {shape[0]}x{shape[1]}')


def sample_params(spec: AugmentationSpec, shape, rng):
    """
    Выбирает случайные параметры преобразования для изображения данной формы
    :param spec: Спецификация преобразования
    :param shape: Форма изображения (H, W) или (H, W, C)
    :param rng: Генератор случайных чисел
    :type rng: np.random.Generator
    :return: Конкретные параметры для apply_with_params
    :rtype: dict
    :raises UnknownTransformException: Если преобразования нет в каталоге
    :raises CropSizeException: Если кроп больше изображения
    """
    name = spec.name
    p = spec.params
    height, width = shape[0], shape[1]
    if name in ('HorizontalFlip', 'VerticalFlip', 'Transpose', 'ToGray'):
        return {}
    if name == 'RandomRotate90':
        factors = p.get('factors', (1, 2, 3))
        if 'factor' in p:
            return {'factor': int(p['factor'])}
        return {'factor': int(factors[rng.integers(len(factors))])}
    if name == 'ShiftScaleRotate':
        shift, scale, rotate = p.get('shift_limit', 0.0625), p.get('scale_limit', 0.1), p.get('rotate_limit', 45)
        return {
            'angle': float(rng.uniform(-rotate, rotate)),
            'scale': float(rng.uniform(1 - scale, 1 + scale)),
            'dx': float(rng.uniform(-shift, shift)),
            'dy': float(rng.uniform(-shift, shift)),
        }
    if name == 'RandomCrop':
        crop_h, crop_w = p['height'], p['width']
        _check_crop(crop_h, crop_w, shape)
        return {'top': int(rng.integers(0, height - crop_h + 1)), 'left': int(rng.integers(0, width - crop_w + 1)),
                'height': crop_h, 'width': crop_w}
    if name == 'CenterCrop':
        crop_h, crop_w = p['height'], p['width']
        _check_crop(crop_h, crop_w, shape)
        return {'top': (height - crop_h) // 2, 'left': (width - crop_w) // 2, 'height': crop_h, 'width': crop_w}
    if name == 'RandomSizedCrop':
        low, high = p['min_max_height']
        crop_h = int(rng.integers(low, high + 1))
        crop_w = max(1, int(round(crop_h * p.get('w2h_ratio', 1.0))))
        _check_crop(crop_h, crop_w, shape)
        _check_crop(1, 1, (p['height'], p['width']))
        return {'top': int(rng.integers(0, height - crop_h + 1)), 'left': int(rng.integers(0, width - crop_w + 1)),
                'crop_height': crop_h, 'crop_width': crop_w, 'height': p['height'], 'width': p['width']}
    if name in ('RandomContrast', 'RandomBrightness'):
        limit = p.get('limit', 0.2)
        if isinstance(limit, (tuple, list)):
            return {'alpha': float(rng.uniform(1 + limit[0], 1 + limit[1]))}
        return {'alpha': float(rng.uniform(1 - limit, 1 + limit))}
    if name == 'RandomGamma':
        low, high = p.get('gamma_limit', (80, 120))
        return {'gamma': float(rng.uniform(low, high)) / 100.0}
    if name == 'CLAHE':
        low, high = p.get('clip_limit', (1.0, 4.0))
        return {'clip_limit': float(rng.uniform(low, high)), 'tile_grid_size': tuple(p.get('tile_grid_size', (8, 8)))}
    if name == 'Blur':
        kernels = np.arange(3, p.get('blur_limit', 7) + 1, 2)
        return {'ksize': int(kernels[rng.integers(len(kernels))])}
    if name == 'GaussNoise':
        low, high = p.get('var_limit', (10.0, 50.0))
        var = float(rng.uniform(low, high))
        # Зерно шума выбирается здесь, чтобы параметры полностью определяли результат
        return {'std': var ** 0.5, 'mean': p.get('mean', 0.0), 'noise_seed': int(rng.integers(2 ** 31))}
    raise UnknownTransformException(f'Transform "{name}" is not in the catalog')


def apply_with_params(image, name, params, is_mask=False):
    """
    Применяет преобразование с уже выбранными параметрами
    :param image: Изображение или маска
    :type image: np.ndarray
    :param name: Название преобразования
    :param params: Параметры из sample_params
    :param is_mask: Маска сегментации: фотометрия не применяется, интерполяция - ближайший сосед
    :rtype: np.ndarray
    """
    if is_mask and name in PHOTOMETRIC:
        return image.copy()
    interpolation = cv2.INTER_NEAREST if is_mask else cv2.INTER_LINEAR

    if name == 'HorizontalFlip':
        return np.ascontiguousarray(image[:, ::-1])
    if name == 'VerticalFlip':
        return np.ascontiguousarray(image[::-1])
    if name == 'RandomRotate90':
        return np.ascontiguousarray(np.rot90(image, params['factor'], axes=(0, 1)))
    if name == 'Transpose':
        return np.ascontiguousarray(np.swapaxes(image, 0, 1))
    if name == 'ShiftScaleRotate':
        height, width = image.shape[:2]
        matrix = cv2.getRotationMatrix2D((width / 2 - 0.5, height / 2 - 0.5), params['angle'], params['scale'])
        matrix[0, 2] += params['dx'] * width
        matrix[1, 2] += params['dy'] * height
        result = cv2.warpAffine(image, matrix, (width, height), flags=interpolation,
                                borderMode=cv2.BORDER_REFLECT_101)
        return _restore_channels(result, image)
    if name in ('RandomCrop', 'CenterCrop'):
        top, left = params['top'], params['left']
        return image[top:top + params['height'], left:left + params['width']].copy()
    if name == 'RandomSizedCrop':
        top, left = params['top'], params['left']
        crop = image[top:top + params['crop_height'], left:left + params['crop_width']]
        result = cv2.resize(np.ascontiguousarray(crop), (params['width'], params['height']),
                            interpolation=interpolation)
        return _restore_channels(result, image)
    if name == 'ToGray':
        return _to_gray(image)
    if name == 'RandomBrightness':
        return _like(image.astype(np.float64) * params['alpha'], image)
    if name == 'RandomContrast':
        mean = _to_gray(image).astype(np.float64).mean()
        return _like(image.astype(np.float64) * params['alpha'] + mean * (1 - params['alpha']), image)
    if name == 'RandomGamma':
        if image.dtype == np.uint8:
            table = np.rint(np.power(np.arange(256) / 255.0, params['gamma']) * 255.0)
            return table.astype(np.uint8)[image]
        return np.power(image, params['gamma']).astype(image.dtype)
    if name == 'CLAHE':
        return _clahe(image, params['clip_limit'], params['tile_grid_size'])
    if name == 'Blur':
        result = cv2.blur(image, (params['ksize'], params['ksize']))
        return _restore_channels(result, image)
    if name == 'GaussNoise':
        noise_rng = np.random.default_rng(params['noise_seed'])
        std = params['std'] / (255.0 if image.dtype != np.uint8 else 1.0)
        mean = params['mean'] / (255.0 if image.dtype != np.uint8 else 1.0)
        noise = noise_rng.normal(mean, std, size=image.shape)
        return _like(image.astype(np.float64) + noise, image)
    raise UnknownTransformException(f'Transform "{name}" is not in the catalog')


def _to_gray(image):
    channels = _channels(image)
    if channels == 1:
        return image.copy()
    if channels != 3:
        raise ChannelCountException(f'ToGray supports 1 or 3 channels, got {channels}')
    gray = image.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    gray = _like(gray, image[:, :, 0])
    return np.repeat(gray[:, :, np.newaxis], 3, axis=2)


def _clahe(image, clip_limit, tile_grid_size):
    channels = _channels(image)
    if channels not in (1, 3):
        raise ChannelCountException(f'CLAHE supports 1 or 3 channels, got {channels}')
    is_float = image.dtype != np.uint8
    work = np.rint(image * 255.0).astype(np.uint8) if is_float else image
    clahe = cv2.createCLAHE(clipLimit=clip_limit, tileGridSize=tuple(tile_grid_size))
    if channels == 1:
        result = clahe.apply(np.ascontiguousarray(work.reshape(work.shape[0], work.shape[1])))
        result = result.reshape(image.shape)
    else:
        lab = cv2.cvtColor(np.ascontiguousarray(work), cv2.COLOR_RGB2LAB)
        lab[:, :, 0] = clahe.apply(np.ascontiguousarray(lab[:, :, 0]))
        result = cv2.cvtColor(lab, cv2.COLOR_LAB2RGB)
    if is_float:
        return (result.astype(np.float64) / 255.0).astype(image.dtype)
    return result


def apply_transform(image, spec: AugmentationSpec, rng):
    """
    Применяет одно преобразование к изображению. Исходное изображение не изменяется
    :param image: Изображение H x W x C
    :type image: np.ndarray
    :param spec: Спецификация преобразования
    :type spec: AugmentationSpec
    :param rng: Генератор случайных чисел
    :type rng: np.random.Generator
    :return: Новое изображение
    :rtype: np.ndarray
    :raises UnknownTransformException: Если преобразования нет в каталоге
    :raises CropSizeException: Если кроп больше изображения
    :raises ChannelCountException: Если число каналов не поддерживается

    >>> image = np.array([[1, 2], [3, 4]], dtype=np.uint8)
    >>> apply_transform(image, AugmentationSpec('HorizontalFlip'), make_rng(0)).tolist()
    [[2, 1], [4, 3]]
    """
    if spec.name not in CATALOG_NAMES:
        raise UnknownTransformException(f'Transform "{spec.name}" is not in the catalog')
    check_image(image)
    params = sample_params(spec, image.shape, rng)
    return apply_with_params(image, spec.name, params)


def output_shape(spec: AugmentationSpec, input_shape):
    """
    Возвращает форму изображения после преобразования
    :param spec: Спецификация преобразования
    :param input_shape: (H, W, C)
    :return: (H', W', C')
    :rtype: Tuple[int, int, int]
    :raises CropSizeException: Если кроп больше изображения
    :raises ValueError: Если форма зависит от случайного числа четвертей поворота

    >>> output_shape(AugmentationSpec('Transpose'), (50, 64, 3))
    (64, 50, 3)
    """
    height, width, channels = input_shape
    if height < 1 or width < 1 or channels < 1:
        raise ValueError(f'Invalid shape {input_shape}')
    name = spec.name
    if name not in CATALOG_NAMES:
        raise UnknownTransformException(f'Transform "{name}" is not in the catalog')
    if name in ('RandomCrop', 'CenterCrop'):
        _check_crop(spec.params['height'], spec.params['width'], input_shape)
        return spec.params['height'], spec.params['width'], channels
    if name == 'RandomSizedCrop':
        _check_crop(spec.params['min_max_height'][0], 1, input_shape)
        return spec.params['height'], spec.params['width'], channels
    if name == 'Transpose':
        return width, height, channels
    if name == 'RandomRotate90':
        factors = [spec.params['factor']] if 'factor' in spec.params else list(spec.params.get('factors', (1, 2, 3)))
        odd = {factor % 2 for factor in factors}
        if height == width or odd == {0}:
            return height, width, channels
        if odd == {1}:
            return width, height, channels
        raise ValueError('RandomRotate90 output shape depends on the drawn factor for non-square images')
    return height, width, channels


def apply_cutout(image, size, rng, fill=0):
    """
    Закрывает квадрат size x size значением fill. Центр равномерно по всему изображению,
    у границ квадрат обрезается. Квадрат со стороной не меньше изображения закрывает его целиком
    :param image: Изображение (обычно уже нормализованное, тогда fill=0 - среднее датасета)
    :type image: np.ndarray
    :param size: Сторона квадрата в пикселях
    :type size: int
    :param rng: Генератор случайных чисел
    :param fill: Значение заполнения
    :rtype: np.ndarray
    :raises ValueError: Если size < 1
    """
    if size < 1:
        raise ValueError(f'Cutout size must be positive, got {size}')
    result = image.copy()
    (top, bottom), (left, right) = _cutout_box(image.shape[0], size, rng), _cutout_box(image.shape[1], size, rng)
    result[top:bottom, left:right] = fill
    return result


def _cutout_box(length, size, rng):
    if size >= length:
        return 0, length
    center = int(rng.integers(0, length))
    start = center - size // 2
    return int(np.clip(start, 0, length)), int(np.clip(start + size, 0, length))


def cutout_batch(images, size, rng, fill=0):
    """
    Применяет Cutout к каждому изображению батча N x H x W x C
    """
    if size == 0:
        return images
    return np.stack([apply_cutout(image, size, rng, fill) for image in images])


class RandomSize:
    """
    Режим выбора подмножества: размер равномерно из {0, ..., max_size}
    """

    def __init__(self, max_size):
        self.max_size = max_size

    def __repr__(self):
        return f'RandomSize({self.max_size})'


class FixedSize:
    """
    Режим выбора подмножества: ровно k преобразований
    """

    def __init__(self, k):
        self.k = k

    def __repr__(self):
        return f'FixedSize({self.k})'


class SubsetSample:
    """
    Выбранное подмножество преобразований

    Attributes:
        aug_set (AugmentationSet): Набор, из которого выбраны преобразования
        indices (Tuple[int]): Индексы в aug_set в порядке применения
    """

    def __init__(self, aug_set: AugmentationSet, indices):
        indices = tuple(int(i) for i in indices)
        if len(set(indices)) != len(indices):
            raise ValueError(f'Subset indices must be unique, got {indices}')
        if any(not 0 <= i < len(aug_set) for i in indices):
            raise ValueError(f'Subset indices {indices} are outside the set of size {len(aug_set)}')
        self.aug_set = aug_set
        self.indices = indices

    @property
    def specs(self):
        return [self.aug_set[i] for i in self.indices]

    @property
    def names(self):
        return [spec.name for spec in self.specs]

    def __len__(self):
        return len(self.indices)


def sample_subset(aug_set: AugmentationSet, mode, rng):
    """
    Выбирает случайное подмножество преобразований
    :param aug_set: Набор преобразований
    :param mode: RandomSize(max_size) или FixedSize(k)
    :param rng: Генератор случайных чисел
    :rtype: SubsetSample
    :raises SubsetSizeException: Если max_size или k больше набора
    """
    if isinstance(mode, RandomSize):
        if not 0 <= mode.max_size <= len(aug_set):
            raise SubsetSizeException(f'Maximal subset size {mode.max_size} exceeds set size {len(aug_set)}')
        size = int(rng.integers(0, mode.max_size + 1))
    elif isinstance(mode, FixedSize):
        if not 0 <= mode.k <= len(aug_set):
            raise SubsetSizeException(f'Subset size {mode.k} exceeds set size {len(aug_set)}')
        size = mode.k
    else:
        raise TypeError(f'Unknown subset mode {mode!r}')
    if size == 0:
        return SubsetSample(aug_set, ())
    return SubsetSample(aug_set, rng.choice(len(aug_set), size=size, replace=False))


def apply_pipeline(image, subset: SubsetSample, probability, rng):
    """
    Применяет подмножество к изображению. Каждое преобразование срабатывает независимо с вероятностью p
    :param image: Изображение
    :param subset: Подмножество
    :param probability: Вероятность p срабатывания
    :param rng: Генератор случайных чисел
    :return: Кортеж (изображение, вектор меток). Метка равна 1 только у сработавших преобразований
    :rtype: Tuple[np.ndarray, np.ndarray]
    """
    check_image(image)
    batch = augment_batch(image[np.newaxis], subset, probability, rng)
    return batch.images[0], batch.labels


class AugmentedBatch:
    """
    Результат конвейера для батча

    Attributes:
        images (np.ndarray): N x H' x W' x C
        masks (np.ndarray or None): N x H' x W'
        labels (np.ndarray): Вектор меток сработавших преобразований (общий для батча)
        fired (List[str]): Названия сработавших преобразований в порядке применения
    """

    def __init__(self, images, masks, labels, fired):
        self.images = images
        self.masks = masks
        self.labels = labels
        self.fired = fired


def augment_batch(images, subset: SubsetSample, probability, rng, masks=None):
    """
    Применяет подмножество ко всему батчу. Решение о срабатывании общее для батча
    :param images: Батч N x H x W x C
    :type images: np.ndarray
    :param subset: Подмножество
    :param probability: Вероятность p срабатывания
    :param rng: Генератор случайных чисел
    :param masks: Маски N x H x W или None
    :rtype: AugmentedBatch
    """
    if not 0 <= probability <= 1:
        raise ValueError(f'Probability {probability} is outside [0, 1]')
    labels = np.zeros(subset.aug_set.label_count, dtype=np.float32)
    fired = []
    images = list(images)
    masks = None if masks is None else list(masks)
    for spec in subset.specs:
        if not rng.random() < probability:
            continue
        shared = sample_params(spec, images[0].shape, rng) if spec.name in BATCH_LEVEL else None
        for i in range(len(images)):
            params = shared if shared is not None else sample_params(spec, images[i].shape, rng)
            images[i] = apply_with_params(images[i], spec.name, params)
            if masks is not None:
                masks[i] = apply_with_params(masks[i], spec.name, params, is_mask=True)
        labels[subset.aug_set.label_index(spec.name)] = 1
        fired.append(spec.name)
    return AugmentedBatch(np.stack(images) if images else np.asarray(images),
                          None if masks is None else np.stack(masks), labels, fired)


def resize_batch(images, size, masks=None):
    """
    Приводит батч к входному разрешению модели: изображения - билинейно, маски - ближайшим соседом
    :param images: N x H x W x C
    :param size: (высота, ширина)
    :param masks: N x H x W или None
    :return: Кортеж (изображения, маски)
    """
    height, width = size
    if images.shape[1:3] == (height, width):
        return images, masks
    resized = np.stack([_restore_channels(cv2.resize(image, (width, height), interpolation=cv2.INTER_LINEAR), image)
                        for image in images])
    if masks is not None:
        masks = np.stack([cv2.resize(mask, (width, height), interpolation=cv2.INTER_NEAREST) for mask in masks])
    return resized, masks


BASELINE_RECIPES = {
    'cifar10': ('horizontal_flip', 'pad_and_crop'),
    'cifar100': ('horizontal_flip', 'pad_and_crop'),
    'svhn': ('pad_and_crop',),
    'tinyimagenet': ('horizontal_flip', 'color_jitter'),
    'cityscapes': ('horizontal_flip', 'rotate'),
    'shapes': ('horizontal_flip', 'rotate'),
    'probe': ('horizontal_flip', 'pad_and_crop'),
}

PAD = 4
ROTATION_RANGE = (0.0, 20.0)
COLOR_JITTER = 0.4


def apply_baseline(images, dataset, rng, masks=None):
    """
    Применяет базовый рецепт аугментаций датасета к каждому изображению батча
    :param images: N x H x W x C uint8
    :param dataset: Название датасета из BASELINE_RECIPES
    :param rng: Генератор случайных чисел
    :param masks: N x H x W или None
    :return: Кортеж (изображения, маски)
    :raises KeyError: Если для датасета нет рецепта
    """
    recipe = BASELINE_RECIPES[dataset]
    images = images.copy()
    masks = None if masks is None else masks.copy()
    for i in range(len(images)):
        image = images[i]
        mask = None if masks is None else masks[i]
        for step in recipe:
            if step == 'horizontal_flip' and rng.random() < 0.5:
                image = image[:, ::-1]
                mask = None if mask is None else mask[:, ::-1]
            elif step == 'pad_and_crop':
                top, left = rng.integers(0, 2 * PAD + 1, size=2)
                image = _pad_and_crop(image, top, left, 0)
                mask = None if mask is None else _pad_and_crop(mask, top, left, IGNORE_INDEX)
            elif step == 'rotate' and rng.random() < 0.5:
                angle = float(rng.uniform(*ROTATION_RANGE))
                image = _rotate(image, angle, cv2.INTER_LINEAR, 0)
                mask = None if mask is None else _rotate(mask, angle, cv2.INTER_NEAREST, IGNORE_INDEX)
            elif step == 'color_jitter':
                image = _color_jitter(image, rng)
        images[i] = image
        if masks is not None:
            masks[i] = mask
    return images, masks


def _pad_and_crop(image, top, left, fill):
    height, width = image.shape[:2]
    pad = [(PAD, PAD), (PAD, PAD)] + [(0, 0)] * (image.ndim - 2)
    padded = np.pad(image, pad, mode='constant', constant_values=fill)
    return padded[top:top + height, left:left + width]


def _rotate(image, angle, interpolation, fill):
    height, width = image.shape[:2]
    matrix = cv2.getRotationMatrix2D((width / 2 - 0.5, height / 2 - 0.5), angle, 1.0)
    result = cv2.warpAffine(np.ascontiguousarray(image), matrix, (width, height), flags=interpolation,
                            borderMode=cv2.BORDER_CONSTANT, borderValue=fill)
    return _restore_channels(result, image)


def _color_jitter(image, rng):
    brightness, contrast, saturation = rng.uniform(1 - COLOR_JITTER, 1 + COLOR_JITTER, size=3)
    values = image.astype(np.float64) * brightness
    gray = _to_gray(_like(values, image)).astype(np.float64)
    values = values * contrast + gray.mean() * (1 - contrast)
    if _channels(image) == 3:
        gray = _to_gray(_like(values, image)).astype(np.float64)
        values = values * saturation + gray * (1 - saturation)
    return _like(values, image)
