"""
Анализ безопасности: ложные срабатывания головы аугментаций на чистом тесте, пометочная точность
на аугментированном тесте, выбор безопасного набора по порогам и отчет.

Единица предсказания - батч: логиты элементов батча усредняются и только потом сравниваются с порогом.
"""
import json
from pathlib import Path

import numpy as np

from safeaug.log import get_logger
from safeaug.report import Report
from safeaug.models import CATALOG_NAMES, SCHEMA_VERSION, AugmentationSet, SafeSet, SafetyMetrics, Thresholds, \
    _check_schema
from safeaug.transform_engine import RandomSize, augment_batch, make_rng, resize_batch, sample_subset

logger = get_logger(__name__)


class MissingLabelsException(ValueError):
    """
    В метриках нет части меток каталога
    """
    pass


class EmptyTestSetException(ValueError):
    """
    Тестовая выборка пуста
    """
    pass


def sigmoid(values):
    """
    Численно устойчивая сигмоида

    >>> sigmoid(np.array([0.0])).tolist()
    [0.5]
    """
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(values, dtype=np.float64)))


class LabelCounter:
    """
    Класс для подсчета пометочных срабатываний по единицам оценки. Счетчики складываются,
    поэтому выборку можно делить между процессами и объединять результаты в любом порядке

    Attributes:
        label_names (Tuple[str]): Названия меток
        units (int): Количество единиц оценки
        predicted (np.ndarray): Сколько раз метка предсказана положительной
        correct (np.ndarray): Сколько раз предсказание совпало с истинной меткой
        fired (np.ndarray): Сколько раз преобразование действительно сработало
        true_positive (np.ndarray): Сработало и предсказано
    """

    def __init__(self, label_names=CATALOG_NAMES, keep_units=False):
        self.label_names = tuple(label_names)
        n = len(self.label_names)
        self.units = 0
        self.predicted = np.zeros(n, dtype=np.int64)
        self.correct = np.zeros(n, dtype=np.int64)
        self.fired = np.zeros(n, dtype=np.int64)
        self.true_positive = np.zeros(n, dtype=np.int64)
        self.keep_units = keep_units
        self.unit_predictions = []
        self.unit_targets = []

    def add(self, predicted, target):
        """
        Добавляет одну единицу оценки
        :param predicted: Бинарный вектор предсказанных меток
        :param target: Бинарный вектор сработавших преобразований
        :return: None
        """
        predicted = np.asarray(predicted, dtype=bool)
        target = np.asarray(target, dtype=bool)
        if predicted.shape != (len(self.label_names),) or target.shape != predicted.shape:
            raise ValueError(f'Expected {len(self.label_names)} labels per unit')
        self.units += 1
        self.predicted += predicted
        self.correct += predicted == target
        self.fired += target
        self.true_positive += predicted & target
        if self.keep_units:
            self.unit_predictions.append(predicted)
            self.unit_targets.append(target)

    @property
    def fp_rate(self):
        """
        Доля единиц с положительным предсказанием (на чистом тесте это доля ложных срабатываний)
        """
        return self.predicted / self.units

    @property
    def accuracy(self):
        return self.correct / self.units

    @property
    def recall(self):
        """
        Полнота, None для меток, которые ни разу не срабатывали
        :rtype: List[float or None]
        """
        return [None if f == 0 else float(tp / f) for tp, f in zip(self.true_positive, self.fired)]

    def concat(self, other_counter):
        return LabelCounter.unite_many(self, other_counter)

    @staticmethod
    def unite_many(*counters):
        """
        Объединяет множество счетчиков в один
        :param counters: Счетчики с одинаковыми метками
        :type counters: LabelCounter
        :rtype: LabelCounter
        """
        counter = LabelCounter(counters[0].label_names, all(c.keep_units for c in counters))
        for c in counters:
            if c.label_names != counter.label_names:
                raise ValueError('Cannot unite counters with different labels')
            counter.units += c.units
            counter.predicted += c.predicted
            counter.correct += c.correct
            counter.fired += c.fired
            counter.true_positive += c.true_positive
            counter.unit_predictions += c.unit_predictions
            counter.unit_targets += c.unit_targets
        return counter

    @staticmethod
    def recount(label_names, unit_predictions, unit_targets):
        """
        Независимый пересчет по сохраненным предсказаниям единиц
        :param label_names: Названия меток
        :param unit_predictions: U x L бинарных предсказаний
        :param unit_targets: U x L бинарных истинных меток
        :rtype: LabelCounter
        """
        predictions = np.asarray(unit_predictions, dtype=bool).reshape(-1, len(label_names))
        targets = np.asarray(unit_targets, dtype=bool).reshape(-1, len(label_names))
        counter = LabelCounter(label_names)
        counter.units = predictions.shape[0]
        counter.predicted = predictions.sum(axis=0)
        counter.correct = (predictions == targets).sum(axis=0)
        counter.fired = targets.sum(axis=0)
        counter.true_positive = (predictions & targets).sum(axis=0)
        return counter


def predict_unit(model, images, decision_threshold):
    """
    Предсказание меток для одной единицы (батча)
    :param model: Объект с методом predict_aug_logits(images) -> N x L
    :param images: Нормализованный батч
    :param decision_threshold: Порог сигмоиды
    :return: Бинарный вектор длины L
    """
    logits = np.asarray(model.predict_aug_logits(images), dtype=np.float64)
    return sigmoid(logits.mean(axis=0)) > decision_threshold


def _batches(count, batch_size):
    for start in range(0, count, batch_size):
        yield slice(start, min(start + batch_size, count))


def _identity(images):
    return images


def evaluate_clean_false_positives(model, images, normalize=None, decision_threshold=0.5, batch_size=32,
                                   label_names=CATALOG_NAMES, keep_units=False):
    """
    Доля единиц чистого теста, где метка предсказана положительной
    :param model: Объект с методом predict_aug_logits
    :param images: Тестовые изображения без преобразований N x H x W x C
    :param normalize: Функция нормализации батча или None
    :param decision_threshold: Порог сигмоиды
    :param batch_size: Размер единицы оценки
    :param label_names: Метки головы аугментаций
    :param keep_units: Сохранять ли предсказания единиц для пересчета
    :rtype: LabelCounter
    :raises EmptyTestSetException: Если тест пуст
    """
    if len(images) == 0:
        raise EmptyTestSetException('Clean test set is empty')
    normalize = normalize or _identity
    counter = LabelCounter(label_names, keep_units)
    target = np.zeros(len(label_names), dtype=bool)
    for batch in _batches(len(images), batch_size):
        counter.add(predict_unit(model, normalize(images[batch]), decision_threshold), target)
    logger.info(f'Clean false positives over {counter.units} units: '
                f'max rate {counter.fp_rate.max():.3f}')
    return counter


def iterate_augmented_units(images, aug_set: AugmentationSet, seed, batch_size=32, passes=1, max_subset_size=5,
                            probability=1.0, input_size=None):
    """
    Генератор единиц аугментированного теста с той же процедурой, что и при обучении: на каждый батч случайное
    подмножество размера из {0, ..., max_subset_size}. Повторный вызов с тем же зерном дает те же единицы
    :param images: Изображения N x H x W x C
    :param aug_set: Набор преобразований (обычно весь каталог)
    :param seed: Зерно
    :param batch_size: Размер единицы
    :param passes: Количество проходов по выборке
    :param max_subset_size: Максимальный размер подмножества
    :param probability: Вероятность срабатывания внутри подмножества
    :param input_size: Разрешение, к которому приводятся изображения, или None (исходное)
    :return: Итератор кортежей (батч изображений, вектор сработавших меток)
    """
    rng = make_rng(seed)
    input_size = input_size or images.shape[1:3]
    for _ in range(passes):
        order = rng.permutation(len(images))
        for batch in _batches(len(images), batch_size):
            subset = sample_subset(aug_set, RandomSize(max_subset_size), rng)
            augmented = augment_batch(images[order[batch]], subset, probability, rng)
            batch_images, _ = resize_batch(augmented.images, input_size)
            yield batch_images, augmented.labels.astype(bool)


def evaluate_augmentation_accuracy(model, images, aug_set: AugmentationSet, seed, normalize=None,
                                   decision_threshold=0.5, batch_size=32, passes=1, max_subset_size=5,
                                   probability=1.0, input_size=None, keep_units=False):
    """
    Пометочная бинарная точность по всем единицам (сработавшим и нет)
    :param model: Объект с методом predict_aug_logits
    :param images: Тестовые изображения N x H x W x C
    :param aug_set: Набор преобразований
    :param seed: Зерно сэмплера
    :param normalize: Функция нормализации батча или None
    :rtype: LabelCounter
    :raises EmptyTestSetException: Если тест пуст
    """
    if len(images) == 0:
        raise EmptyTestSetException('Test set is empty')
    normalize = normalize or _identity
    counter = LabelCounter(aug_set.label_names, keep_units)
    units = iterate_augmented_units(images, aug_set, seed, batch_size, passes, max_subset_size, probability,
                                    input_size)
    for batch_images, labels in units:
        counter.add(predict_unit(model, normalize(batch_images), decision_threshold), labels)
    logger.info(f'Augmentation accuracy over {counter.units} units: '
                f'min {counter.accuracy.min():.3f}, max {counter.accuracy.max():.3f}')
    return counter


def build_metrics(clean_counter: LabelCounter, aug_counter: LabelCounter):
    """
    Собирает SafetyMetrics из счетчиков чистого и аугментированного теста
    :rtype: SafetyMetrics
    """
    if clean_counter.label_names != aug_counter.label_names:
        raise ValueError('Clean and augmented counters use different labels')
    n = len(clean_counter.label_names)
    return SafetyMetrics(clean_counter.label_names, clean_counter.fp_rate, aug_counter.accuracy, aug_counter.recall,
                         [clean_counter.units] * n, [aug_counter.units] * n, aug_counter.fired)


def select_safe_set(metrics: SafetyMetrics, thresholds: Thresholds, expected_labels=CATALOG_NAMES,
                    provenance=None):
    """
    Метка безопасна, если clean_fp_rate <= fp_max и aug_accuracy <= acc_max
    :param metrics: Метрики всех меток
    :param thresholds: Пороги
    :param expected_labels: Метки, которые обязаны присутствовать
    :param provenance: Сведения о происхождении
    :rtype: SafeSet
    :raises MissingLabelsException: Если каких-то меток нет в метриках

    >>> metrics = SafetyMetrics(['A', 'B'], [0.0, 0.5], [0.5, 0.5], [None, None], [1, 1], [1, 1], [0, 0])
    >>> select_safe_set(metrics, Thresholds(0.1, 0.9), expected_labels=['A', 'B'])
    SafeSet(['A'])
    """
    missing = [name for name in expected_labels if name not in metrics.label_names]
    if missing:
        raise MissingLabelsException(f'Metrics have no values for {missing}')
    members = [name for name, fp, acc in zip(metrics.label_names, metrics.clean_fp_rate, metrics.aug_accuracy)
               if fp <= thresholds.fp_max and acc <= thresholds.acc_max]
    provenance = dict(provenance or {})
    provenance['metrics'] = metrics.to_dict()
    return SafeSet(members, thresholds, provenance)


def refine_safe_set(safe: SafeSet, exclusions, catalog_names=CATALOG_NAMES):
    """
    Ручная правка набора: убирает перечисленные преобразования (например, кропы для Safe v2).
    Названия не из каталога пропускаются с предупреждением
    :param safe: Безопасный набор
    :param exclusions: Названия для исключения
    :rtype: SafeSet
    """
    exclusions = list(exclusions)
    unknown = [name for name in exclusions if name not in catalog_names]
    if unknown:
        logger.warning(f'Ignoring exclusions not in the catalog: {unknown}')
    excluded = [name for name in exclusions if name in catalog_names]
    provenance = dict(safe.provenance)
    provenance['refinement'] = provenance.get('refinement', []) + [{'manual': True, 'excluded': excluded}]
    return SafeSet([name for name in safe.members if name not in excluded], safe.thresholds, provenance)


class SafetyReport:
    """
    Содержимое отчета: метрики, пороги, безопасный набор и необязательная точность задачи
    при обучении с каждой аугментацией отдельно

    Attributes:
        metrics (SafetyMetrics): Метрики чистого и аугментированного теста
        safe_set (SafeSet): Безопасный набор
        task_accuracies (Dict[str, float] or None): Точность задачи по аугментациям, в процентах
        reference_accuracy (float or None): Точность задачи без аугментаций, в процентах
        run_id (str or None): Запуск, к которому относится отчет
    """

    def __init__(self, metrics: SafetyMetrics, safe_set: SafeSet, task_accuracies=None, reference_accuracy=None,
                 run_id=None):
        self.metrics = metrics
        self.safe_set = safe_set
        self.task_accuracies = None if task_accuracies is None else dict(task_accuracies)
        self.reference_accuracy = reference_accuracy
        self.run_id = run_id

    @property
    def thresholds(self):
        return self.safe_set.thresholds

    def rows(self):
        rows = []
        for row in self.metrics.rows():
            row = dict(row)
            row['safe'] = row['name'] in self.safe_set
            if self.task_accuracies is not None:
                row['task_accuracy'] = self.task_accuracies.get(row['name'])
            rows.append(row)
        return rows

    def to_dict(self):
        return {
            'schema_version': SCHEMA_VERSION,
            'run_id': self.run_id,
            'label_index': {name: i for i, name in enumerate(self.metrics.label_names)},
            'thresholds': None if self.thresholds is None else self.thresholds.to_dict(),
            'metrics': self.metrics.to_dict(),
            'safe_set': self.safe_set.to_dict(),
            'task_accuracies': self.task_accuracies,
            'reference_accuracy': self.reference_accuracy,
            'rows': self.rows(),
        }

    @staticmethod
    def parse_from_dict(row_dict):
        _check_schema(row_dict, 'report')
        return SafetyReport(SafetyMetrics.parse_from_dict(row_dict['metrics']),
                            SafeSet.parse_from_dict(row_dict['safe_set']),
                            row_dict.get('task_accuracies'), row_dict.get('reference_accuracy'),
                            row_dict.get('run_id'))

    def __eq__(self, other):
        return isinstance(other, SafetyReport) and self.to_dict() == other.to_dict()


REPORT_JSON = 'safety_report.json'
REPORT_PNG = 'safety_report.png'
REPORT_XLSX = 'safety_report.xlsx'
REPORT_HTML = 'safety_report.html'
SAFE_SET_JSON = 'safe_set.json'


def emit_report(metrics: SafetyMetrics, safe_set: SafeSet, out_dir, task_accuracies=None, reference_accuracy=None,
                catalog: AugmentationSet = None, run_id=None):
    """
    Записывает отчет: JSON (основной), PNG с графиком, XLSX, HTML и безопасный набор в формате каталога
    :param metrics: Метрики
    :param safe_set: Безопасный набор
    :param out_dir: Папка отчета
    :param task_accuracies: Точность задачи по аугментациям или None
    :param reference_accuracy: Точность без аугментаций (красная линия) или None
    :param catalog: Каталог для safe_set.json или None (тогда файл не пишется)
    :param run_id: Идентификатор запуска
    :return: Пути к записанным файлам
    :rtype: Dict[str, Path]
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = SafetyReport(metrics, safe_set, task_accuracies, reference_accuracy, run_id)
    paths = {'json': out_dir / REPORT_JSON, 'png': out_dir / REPORT_PNG, 'xlsx': out_dir / REPORT_XLSX,
             'html': out_dir / REPORT_HTML}
    paths['json'].write_text(json.dumps(report.to_dict(), indent=2, ensure_ascii=False), encoding='utf-8')
    writer = Report(report)
    writer.generate_image(paths['png'])
    writer.generate_excel(paths['xlsx'])
    writer.generate_html(paths['html'])
    if catalog is not None:
        paths['safe_set'] = out_dir / SAFE_SET_JSON
        safe_set.save(paths['safe_set'], catalog)
    logger.info(f'Report written to {out_dir}')
    return paths


def parse_report(path):
    """
    Читает JSON-отчет
    :param path: Путь к safety_report.json или к папке отчета
    :rtype: SafetyReport
    """
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_JSON
    return SafetyReport.parse_from_dict(json.loads(path.read_text(encoding='utf-8')))
