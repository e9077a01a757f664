import hashlib
import json
import math
from pathlib import Path

SCHEMA_VERSION = 1

# Порядок определяет индексы меток головы аугментаций
CATALOG_NAMES = (
    'HorizontalFlip',
    'VerticalFlip',
    'RandomRotate90',
    'Transpose',
    'ToGray',
    'ShiftScaleRotate',
    'RandomCrop',
    'CenterCrop',
    'RandomSizedCrop',
    'RandomContrast',
    'RandomBrightness',
    'RandomGamma',
    'CLAHE',
    'Blur',
    'GaussNoise',
)

MODES = ('none', 'baseline', 'safe', 'all', 'safe_v2', 'safe+baseline+cutout')
SAFE_MODES = ('safe', 'safe_v2', 'safe+baseline+cutout')
MODEL_NAMES = ('tiny', 'densenet121', 'densenet169')
OPTIMIZERS = ('sgd', 'adam')
OPTIMIZER_DEFAULT_LR = {'sgd': 0.1, 'adam': 1e-4}

# Crop-размеры больше изображения ограничиваются размером изображения (см. cityscapes)
DATASET_DEFAULTS = {
    'cifar10': {'task': 'classification', 'crop_size': (25, 25), 'cutout_size': 16, 'optimizer': 'sgd',
                'lr': 0.1, 'plateau_factor': 0.1, 'plateau_patience': 10, 'early_stopping_patience': 20,
                'batch_size': 256},
    'cifar100': {'task': 'classification', 'crop_size': (25, 25), 'cutout_size': 16, 'optimizer': 'sgd',
                 'lr': 0.1, 'plateau_factor': 0.1, 'plateau_patience': 10, 'early_stopping_patience': 20,
                 'batch_size': 256},
    'svhn': {'task': 'classification', 'crop_size': (25, 25), 'cutout_size': 20, 'optimizer': 'sgd',
             'lr': 0.1, 'plateau_factor': 0.1, 'plateau_patience': 10, 'early_stopping_patience': 20,
             'batch_size': 256},
    'tinyimagenet': {'task': 'classification', 'crop_size': (50, 50), 'cutout_size': 0, 'optimizer': 'sgd',
                     'lr': 0.1, 'plateau_factor': 0.1, 'plateau_patience': 10, 'early_stopping_patience': 20,
                     'batch_size': 256},
    'cityscapes': {'task': 'segmentation', 'crop_size': (512, 512), 'cutout_size': 0, 'optimizer': 'adam',
                   'lr': 1e-4, 'plateau_factor': 0.5, 'plateau_patience': 7, 'early_stopping_patience': 15,
                   'batch_size': 16},
    'shapes': {'task': 'segmentation', 'crop_size': (48, 48), 'cutout_size': 0, 'optimizer': 'adam',
               'lr': 1e-4, 'plateau_factor': 0.5, 'plateau_patience': 7, 'early_stopping_patience': 15,
               'batch_size': 16},
    'probe': {'task': 'classification', 'crop_size': (25, 25), 'cutout_size': 16, 'optimizer': 'adam',
              'lr': 1e-3, 'plateau_factor': 0.1, 'plateau_patience': 10, 'early_stopping_patience': 20,
              'batch_size': 64},
}


class ConfigValidationException(Exception):
    """
    Исключение с полным списком ошибок конфигурации

    Attributes:
        errors (List[str]): Ошибки в формате 'поле: описание'
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__('; '.join(self.errors))


def _check_schema(row_dict, kind):
    """
    Проверяет версию схемы сериализованного объекта
    :param row_dict: Словарь из JSON
    :param kind: Название объекта для сообщения об ошибке
    :return: None
    :raises ValueError: Если версия схемы не поддерживается
    """
    version = row_dict.get('schema_version', SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValueError(f'Unsupported {kind} schema version {version}, expected {SCHEMA_VERSION}')


def _in_unit_interval(value):
    """
    >>> _in_unit_interval(0.5)
    True
    >>> _in_unit_interval(1.5)
    False
    >>> _in_unit_interval(float('nan'))
    False
    """
    return value is not None and not math.isnan(value) and 0 <= value <= 1


class AugmentationSpec:
    """
    Класс одного преобразования каталога

    Attributes:
        name (str): Название преобразования из каталога
        params (dict): Параметры величины преобразования
        probability (float): Вероятность применения
    """

    def __init__(self, name: str, params=None, probability=0.5):
        """
        Инициализирует спецификацию преобразования
        :param name: Название из CATALOG_NAMES
        :type name: str
        :param params: Параметры величины
        :type params: dict or None
        :param probability: Вероятность применения p
        :type probability: float
        :raises ValueError: Если название не из каталога или p вне [0, 1]
        """
        if name not in CATALOG_NAMES:
            raise ValueError(f'Transform "{name}" is not in the catalog')
        if not _in_unit_interval(probability):
            raise ValueError(f'Probability {probability} is outside [0, 1]')
        self.name = name
        self.params = dict(params or {})
        self.probability = probability

    def with_params(self, **params):
        """
        Возвращает копию спецификации с замененными параметрами
        :rtype: AugmentationSpec
        """
        new_params = dict(self.params)
        new_params.update(params)
        return AugmentationSpec(self.name, new_params, self.probability)

    def to_dict(self):
        return {'name': self.name, 'params': {k: _jsonable(v) for k, v in self.params.items()},
                'probability': self.probability}

    @staticmethod
    def parse_from_dict(row_dict):
        """
        Переводит словарь из файла каталога в объект AugmentationSpec
        :param row_dict: Словарь с ключами name, params, probability
        :rtype: AugmentationSpec
        """
        params = {k: tuple(v) if isinstance(v, list) else v for k, v in row_dict.get('params', {}).items()}
        return AugmentationSpec(row_dict['name'], params, row_dict.get('probability', 0.5))

    def __eq__(self, other):
        return isinstance(other, AugmentationSpec) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f'AugmentationSpec({self.name!r}, {self.params!r}, p={self.probability})'


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


class AugmentationSet:
    """
    Упорядоченный набор преобразований с фиксированным отображением название -> индекс метки

    Attributes:
        specs (List[AugmentationSpec]): Преобразования набора
        label_names (Tuple[str]): Названия всех меток. Индекс названия - индекс метки в векторе аугментаций
    """

    def __init__(self, specs, label_names=None):
        """
        Инициализирует набор
        :param specs: Преобразования
        :type specs: Iterable[AugmentationSpec]
        :param label_names: Отображение меток. Для подмножества каталога - названия всего каталога
        :type label_names: Iterable[str] or None
        :raises ValueError: Если названия повторяются или преобразование не имеет метки
        """
        self.specs = list(specs)
        names = [spec.name for spec in self.specs]
        if len(set(names)) != len(names):
            raise ValueError(f'Duplicate transform names in set: {names}')
        self.label_names = tuple(label_names) if label_names is not None else tuple(names)
        if len(set(self.label_names)) != len(self.label_names):
            raise ValueError('Duplicate label names')
        missing = [name for name in names if name not in self.label_names]
        if missing:
            raise ValueError(f'Transforms {missing} have no label index')

    @property
    def names(self):
        return [spec.name for spec in self.specs]

    @property
    def label_count(self):
        return len(self.label_names)

    def __len__(self):
        return len(self.specs)

    def __iter__(self):
        return iter(self.specs)

    def __getitem__(self, index):
        return self.specs[index]

    def label_index(self, name):
        """
        Возвращает индекс метки преобразования
        :param name: Название преобразования
        :rtype: int
        """
        return self.label_names.index(name)

    def spec(self, name):
        for spec in self.specs:
            if spec.name == name:
                return spec
        raise KeyError(name)

    def restrict(self, names):
        """
        Возвращает поднабор с сохранением отображения меток
        :param names: Названия оставляемых преобразований
        :type names: Iterable[str]
        :rtype: AugmentationSet
        """
        keep = set(names)
        return AugmentationSet([spec for spec in self.specs if spec.name in keep], self.label_names)

    def with_probability(self, probability):
        return AugmentationSet([AugmentationSpec(s.name, s.params, probability) for s in self.specs],
                               self.label_names)

    def to_dict(self):
        return {
            'schema_version': SCHEMA_VERSION,
            'label_names': list(self.label_names),
            'augmentations': [spec.to_dict() for spec in self.specs],
        }

    @staticmethod
    def parse_from_dict(row_dict):
        _check_schema(row_dict, 'catalog')
        specs = [AugmentationSpec.parse_from_dict(d) for d in row_dict['augmentations']]
        return AugmentationSet(specs, row_dict.get('label_names'))

    def save(self, path: Path, extra=None):
        """
        Сохраняет набор в файл каталога (JSON)
        :param path: Путь к файлу
        :param extra: Дополнительные поля верхнего уровня
        :type extra: dict or None
        :return: None
        """
        content = self.to_dict()
        content.update(extra or {})
        Path(path).write_text(json.dumps(content, indent=2, ensure_ascii=False), encoding='utf-8')

    @staticmethod
    def load(path: Path):
        """
        Загружает набор из файла каталога. Подходит и для файла безопасного набора
        :param path: Путь к файлу
        :rtype: AugmentationSet
        """
        return AugmentationSet.parse_from_dict(json.loads(Path(path).read_text(encoding='utf-8')))


class Thresholds:
    """
    Пороги отбора безопасных преобразований

    Attributes:
        fp_max (float): Максимальная доля ложных срабатываний на чистом тесте
        acc_max (float): Максимальная точность распознавания на аугментированном тесте
        decision_threshold (float): Порог сигмоиды для положительного предсказания
    """

    def __init__(self, fp_max=0.05, acc_max=0.88, decision_threshold=0.5):
        for field, value in (('fp_max', fp_max), ('acc_max', acc_max), ('decision_threshold', decision_threshold)):
            if not _in_unit_interval(value):
                raise ValueError(f'{field}={value} is outside [0, 1]')
        self.fp_max = fp_max
        self.acc_max = acc_max
        self.decision_threshold = decision_threshold

    def to_dict(self):
        return {'fp_max': self.fp_max, 'acc_max': self.acc_max, 'decision_threshold': self.decision_threshold}

    @staticmethod
    def parse_from_dict(row_dict):
        return Thresholds(row_dict['fp_max'], row_dict['acc_max'], row_dict.get('decision_threshold', 0.5))

    def __eq__(self, other):
        return isinstance(other, Thresholds) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f'Thresholds({self.to_dict()})'


class SafetyMetrics:
    """
    Метрики по меткам на чистом и аугментированном тесте

    Attributes:
        label_names (Tuple[str]): Названия меток
        clean_fp_rate (List[float]): Доля ложных срабатываний на чистом тесте
        aug_accuracy (List[float]): Бинарная точность на аугментированном тесте
        aug_recall (List[float or None]): Полнота на аугментированном тесте, None если метка не срабатывала
        clean_support (List[int]): Количество единиц оценки на чистом тесте
        aug_support (List[int]): Количество единиц оценки на аугментированном тесте
        fired_counts (List[int]): Количество единиц, где преобразование сработало
    """

    def __init__(self, label_names, clean_fp_rate, aug_accuracy, aug_recall, clean_support, aug_support,
                 fired_counts):
        self.label_names = tuple(label_names)
        self.clean_fp_rate = [float(v) for v in clean_fp_rate]
        self.aug_accuracy = [float(v) for v in aug_accuracy]
        self.aug_recall = [None if v is None else float(v) for v in aug_recall]
        self.clean_support = [int(v) for v in clean_support]
        self.aug_support = [int(v) for v in aug_support]
        self.fired_counts = [int(v) for v in fired_counts]

        n = len(self.label_names)
        columns = (self.clean_fp_rate, self.aug_accuracy, self.aug_recall, self.clean_support, self.aug_support,
                   self.fired_counts)
        if any(len(column) != n for column in columns):
            raise ValueError('All per-label columns must have one value per label')
        if not all(_in_unit_interval(v) for v in self.clean_fp_rate + self.aug_accuracy):
            raise ValueError('Rates must lie in [0, 1]')
        if not all(v is None or _in_unit_interval(v) for v in self.aug_recall):
            raise ValueError('Recall must lie in [0, 1]')
        if any(v <= 0 for v in self.clean_support + self.aug_support):
            raise ValueError('Every reported label needs positive support')

    def row(self, name):
        """
        Возвращает метрики одной метки
        :param name: Название метки
        :rtype: Dict[str, any]
        """
        i = self.label_names.index(name)
        return {
            'name': name,
            'clean_fp_rate': self.clean_fp_rate[i],
            'aug_accuracy': self.aug_accuracy[i],
            'aug_recall': self.aug_recall[i],
            'clean_support': self.clean_support[i],
            'aug_support': self.aug_support[i],
            'fired_count': self.fired_counts[i],
        }

    def rows(self):
        return [self.row(name) for name in self.label_names]

    @property
    def detects_any(self):
        """
        Распознала ли голова хотя бы одно сработавшее преобразование

        >>> SafetyMetrics(['A', 'B'], [0, 0], [0.8, 1], [0.0, None], [1, 1], [1, 1], [2, 0]).detects_any
        False
        """
        return any(v is not None and v > 0 for v in self.aug_recall)

    def to_dict(self):
        return {
            'label_names': list(self.label_names),
            'clean_fp_rate': self.clean_fp_rate,
            'aug_accuracy': self.aug_accuracy,
            'aug_recall': self.aug_recall,
            'clean_support': self.clean_support,
            'aug_support': self.aug_support,
            'fired_counts': self.fired_counts,
        }

    @staticmethod
    def parse_from_dict(row_dict):
        return SafetyMetrics(row_dict['label_names'], row_dict['clean_fp_rate'], row_dict['aug_accuracy'],
                             row_dict['aug_recall'], row_dict['clean_support'], row_dict['aug_support'],
                             row_dict['fired_counts'])

    def __eq__(self, other):
        return isinstance(other, SafetyMetrics) and self.to_dict() == other.to_dict()


class SafeSet:
    """
    Выбранный набор безопасных преобразований S

    Attributes:
        members (Tuple[str]): Названия преобразований в порядке каталога
        thresholds (Thresholds or None): Пороги, по которым выбран набор
        provenance (dict): Происхождение набора (run_id, снимок метрик, ручные правки)
    """

    def __init__(self, members, thresholds=None, provenance=None):
        self.members = tuple(members)
        self.thresholds = thresholds
        self.provenance = dict(provenance or {})

    def __contains__(self, name):
        return name in self.members

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __eq__(self, other):
        return isinstance(other, SafeSet) and self.members == other.members and \
            self.thresholds == other.thresholds and self.provenance == other.provenance

    def __repr__(self):
        return f'SafeSet({list(self.members)})'

    def to_augmentation_set(self, catalog: AugmentationSet):
        """
        Возвращает преобразования каталога, входящие в набор, с отображением меток каталога
        :param catalog: Каталог преобразований
        :rtype: AugmentationSet
        :raises ValueError: Если в наборе есть названия не из каталога
        """
        unknown = [name for name in self.members if name not in catalog.names]
        if unknown:
            raise ValueError(f'Safe set members {unknown} are not in the catalog')
        return catalog.restrict(self.members)

    def to_dict(self):
        return {
            'members': list(self.members),
            'thresholds': None if self.thresholds is None else self.thresholds.to_dict(),
            'provenance': self.provenance,
        }

    @staticmethod
    def parse_from_dict(row_dict):
        thresholds = row_dict.get('thresholds')
        return SafeSet(row_dict['members'],
                       None if thresholds is None else Thresholds.parse_from_dict(thresholds),
                       row_dict.get('provenance'))

    def save(self, path: Path, catalog: AugmentationSet):
        """
        Сохраняет набор в формате каталога, который напрямую читает AugmentationSet.load
        :param path: Путь к файлу
        :param catalog: Каталог, из которого берутся параметры преобразований
        :return: None
        """
        self.to_augmentation_set(catalog).save(path, extra={'safe_set': self.to_dict()})

    @staticmethod
    def load(path: Path):
        """
        Загружает набор из файла формата каталога
        :param path: Путь к файлу
        :rtype: SafeSet
        """
        content = json.loads(Path(path).read_text(encoding='utf-8'))
        _check_schema(content, 'safe set')
        if 'safe_set' in content:
            return SafeSet.parse_from_dict(content['safe_set'])
        return SafeSet([d['name'] for d in content['augmentations']], provenance={'source': str(path)})


class ExperimentConfig:
    """
    Полное описание запуска. Поля со значением None заполняются умолчаниями датасета (DATASET_DEFAULTS)

    Поля см. в ExperimentConfig.defaults
    """

    defaults = {
        'dataset': 'probe',
        'data_root': None,
        'subset_size': None,
        'test_subset_size': None,
        'val_fraction': 0.1,
        'seed': 0,
        'model': 'tiny',
        'mode': 'all',
        'k': 3,
        'p': 0.5,
        'max_subset_size': 5,
        'optimizer': None,
        'lr': None,
        'momentum': 0.9,
        'weight_decay': 5e-4,
        'epochs': 10,
        'plateau_factor': None,
        'plateau_patience': None,
        'early_stopping_patience': None,
        'batch_size': None,
        'crop_size': None,
        'cutout_size': None,
        'fp_max': 0.05,
        'acc_max': 0.88,
        'decision_threshold': 0.5,
        'analysis_batch_size': 32,
        'analysis_passes': 20,
        'safe_set': None,
        'exclude': (),
        'finetune_lr': None,
        'repeats': 1,
        'workers': 1,
        'device': 'cpu',
    }

    # Не влияют на результат запуска
    _volatile_fields = ('data_root', 'repeats', 'workers', 'device')

    def __init__(self, **values):
        """
        Инициализирует конфигурацию
        :param values: Значения полей
        :raises ConfigValidationException: Если передано неизвестное поле
        """
        unknown = sorted(set(values) - set(self.defaults))
        if unknown:
            raise ConfigValidationException([f'{name}: unknown field' for name in unknown])
        for name, default in self.defaults.items():
            value = values.get(name, default)
            if name in ('crop_size',) and value is not None:
                value = tuple(int(v) for v in value)
            if name == 'exclude':
                value = tuple(value or ())
            setattr(self, name, value)

    @property
    def task(self):
        return DATASET_DEFAULTS.get(self.dataset, {}).get('task', 'classification')

    def resolved(self):
        """
        Возвращает копию, в которой незаполненные поля взяты из умолчаний датасета
        :rtype: ExperimentConfig
        """
        values = self.to_dict()
        dataset_defaults = DATASET_DEFAULTS.get(self.dataset, {})
        for name, value in dataset_defaults.items():
            if name in values and values[name] is None and name != 'lr':
                values[name] = value
        if values['lr'] is None:
            if values['optimizer'] == dataset_defaults.get('optimizer'):
                values['lr'] = dataset_defaults.get('lr')
            else:
                values['lr'] = OPTIMIZER_DEFAULT_LR.get(values['optimizer'])
        values.pop('schema_version')
        return ExperimentConfig(**values)

    def with_overrides(self, **overrides):
        """
        Возвращает копию с замененными полями. Значения None не переопределяют поля
        :rtype: ExperimentConfig
        """
        values = self.to_dict()
        values.pop('schema_version')
        values.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig(**values)

    def validate(self, purpose='train'):
        """
        Проверяет все поля и возвращает список ошибок
        :param purpose: learn_safe, train, finetune, sweep или explicit (набор передан явно)
        :type purpose: str
        :return: Ошибки в формате 'поле: описание', пустой список если ошибок нет
        :rtype: List[str]
        """
        errors = []

        def check(condition, field, message):
            if not condition:
                errors.append(f'{field}: {message}')

        check(self.dataset in DATASET_DEFAULTS, 'dataset', f'must be one of {sorted(DATASET_DEFAULTS)}')
        check(self.model in MODEL_NAMES, 'model', f'must be one of {list(MODEL_NAMES)}')
        check(self.mode in MODES, 'mode', f'must be one of {list(MODES)}')
        check(_is_int(self.seed), 'seed', 'must be an integer')
        check(_is_int(self.k) and 0 <= self.k <= len(CATALOG_NAMES), 'k', f'must be in 0..{len(CATALOG_NAMES)}')
        check(_is_int(self.max_subset_size) and 0 <= self.max_subset_size <= len(CATALOG_NAMES),
              'max_subset_size', f'must be in 0..{len(CATALOG_NAMES)}')
        check(_is_number(self.p) and _in_unit_interval(self.p), 'p', 'must be in [0, 1]')
        for field in ('fp_max', 'acc_max', 'decision_threshold'):
            value = getattr(self, field)
            check(_is_number(value) and _in_unit_interval(value), field, 'must be in [0, 1]')
        check(_is_int(self.epochs) and self.epochs >= 0, 'epochs', 'must be a non-negative integer')
        check(self.subset_size is None or (_is_int(self.subset_size) and self.subset_size >= 1),
              'subset_size', 'must be a positive integer')
        check(self.test_subset_size is None or (_is_int(self.test_subset_size) and self.test_subset_size >= 1),
              'test_subset_size', 'must be a positive integer')
        check(_is_number(self.val_fraction) and 0 <= self.val_fraction < 1, 'val_fraction', 'must be in [0, 1)')
        check(self.optimizer is None or self.optimizer in OPTIMIZERS, 'optimizer', f'must be one of {OPTIMIZERS}')
        check(self.lr is None or (_is_number(self.lr) and self.lr >= 0), 'lr', 'must be non-negative')
        check(self.batch_size is None or (_is_int(self.batch_size) and self.batch_size >= 1),
              'batch_size', 'must be a positive integer')
        check(self.crop_size is None or (len(self.crop_size) == 2 and min(self.crop_size) >= 1),
              'crop_size', 'must be two positive integers')
        check(self.cutout_size is None or (_is_int(self.cutout_size) and self.cutout_size >= 0),
              'cutout_size', 'must be a non-negative integer')
        check(_is_int(self.analysis_batch_size) and self.analysis_batch_size >= 1,
              'analysis_batch_size', 'must be a positive integer')
        check(_is_int(self.analysis_passes) and self.analysis_passes >= 1,
              'analysis_passes', 'must be a positive integer')
        check(_is_int(self.repeats) and self.repeats >= 1, 'repeats', 'must be a positive integer')
        check(_is_int(self.workers) and self.workers >= 1, 'workers', 'must be a positive integer')
        check(isinstance(self.device, str) and (self.device == 'cpu' or self.device.startswith('cuda')),
              'device', 'must be "cpu" or a cuda device')
        unknown_exclusions = [name for name in self.exclude if name not in CATALOG_NAMES]
        check(not unknown_exclusions, 'exclude', f'unknown transforms {unknown_exclusions}')
        if purpose in ('train', 'finetune') and self.mode in SAFE_MODES:
            check(self.safe_set is not None, 'safe_set', f'is required for mode "{self.mode}"')
        if purpose == 'sweep':
            check(self.safe_set is not None, 'safe_set', 'is required for a subset-size sweep')
        return errors

    def check(self, purpose='train'):
        """
        Проверяет конфигурацию
        :raises ConfigValidationException: Если есть хотя бы одна ошибка
        """
        errors = self.validate(purpose)
        if errors:
            raise ConfigValidationException(errors)
        return self

    def to_dict(self):
        values = {'schema_version': SCHEMA_VERSION}
        for name in self.defaults:
            values[name] = _jsonable(getattr(self, name))
        values['exclude'] = list(self.exclude)
        return values

    @staticmethod
    def parse_from_dict(row_dict):
        """
        Переводит словарь из файла конфигурации в объект ExperimentConfig
        :param row_dict: Словарь
        :rtype: ExperimentConfig
        :raises ConfigValidationException: Если есть неизвестные поля
        """
        values = dict(row_dict)
        _check_schema(values, 'config')
        values.pop('schema_version', None)
        return ExperimentConfig(**values)

    def save(self, path: Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False), encoding='utf-8')

    @staticmethod
    def load(path: Path):
        return ExperimentConfig.parse_from_dict(json.loads(Path(path).read_text(encoding='utf-8')))

    @property
    def config_hash(self):
        """
        Хэш полей, влияющих на результат запуска
        :rtype: str
        """
        values = {k: v for k, v in self.to_dict().items() if k not in self._volatile_fields}
        canonical = json.dumps(values, sort_keys=True)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


class ExperimentRecord:
    """
    Сохраняемый результат запуска

    Attributes:
        run_id (str): Идентификатор запуска в реестре
        kind (str): learn_safe, train, finetune, combined, sweep_row, per_augmentation
        config (dict): Полная разрешенная конфигурация
        config_hash (str): Хэш конфигурации
        seed (int): Зерно
        epochs (List[dict]): Потери и метрика валидации по эпохам
        metric_name (str): top1 или miou
        test_metric (float or None): Метрика на тесте в процентах
        safe_set (List[str] or None): Использованный безопасный набор
        checkpoint (str or None): Путь к чекпоинту
        wall_time (float): Время выполнения в секундах
        parent_run (str or None): Родительский запуск (для дообучения)
        label_names (List[str]): Отображение меток аугментаций
        status (str): ok или diverged
        diagnostic (str or None): Описание ошибки
        extra (dict): Дополнительные сведения
    """

    def __init__(self, run_id, kind, config, config_hash, seed, epochs=None, metric_name='top1',
                 test_metric=None, safe_set=None, checkpoint=None, wall_time=0.0, parent_run=None,
                 label_names=CATALOG_NAMES, status='ok', diagnostic=None, extra=None):
        if test_metric is not None and not 0 <= test_metric <= 100:
            raise ValueError(f'Test metric {test_metric} is outside [0, 100]')
        self.run_id = run_id
        self.kind = kind
        self.config = dict(config)
        self.config_hash = config_hash
        self.seed = seed
        self.epochs = list(epochs or [])
        self.metric_name = metric_name
        self.test_metric = test_metric
        self.safe_set = None if safe_set is None else list(safe_set)
        self.checkpoint = checkpoint
        self.wall_time = wall_time
        self.parent_run = parent_run
        self.label_names = list(label_names)
        self.status = status
        self.diagnostic = diagnostic
        self.extra = dict(extra or {})

    _fields = ('run_id', 'kind', 'config', 'config_hash', 'seed', 'epochs', 'metric_name', 'test_metric',
               'safe_set', 'checkpoint', 'wall_time', 'parent_run', 'label_names', 'status', 'diagnostic', 'extra')

    def to_dict(self):
        values = {'schema_version': SCHEMA_VERSION}
        values.update({name: getattr(self, name) for name in self._fields})
        return values

    @staticmethod
    def parse_from_dict(row_dict):
        _check_schema(row_dict, 'record')
        return ExperimentRecord(**{name: row_dict[name] for name in ExperimentRecord._fields if name in row_dict})

    def __eq__(self, other):
        return isinstance(other, ExperimentRecord) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f'ExperimentRecord({self.run_id!r}, {self.kind!r}, {self.metric_name}={self.test_metric})'
