import numpy as np

IGNORE_INDEX = 255


class AccuracyCounter:
    """
    Класс для подсчета top-1 точности по батчам

    Attributes:
        value (float): Точность в процентах
    """

    def __init__(self, correct=0, total=0):
        self._correct = correct
        self._total = total

    def add(self, predictions, labels):
        """
        Добавляет предсказания батча
        :param predictions: Предсказанные классы N
        :type predictions: np.ndarray
        :param labels: Истинные классы N
        :type labels: np.ndarray
        :return: None
        """
        predictions, labels = np.asarray(predictions), np.asarray(labels)
        if predictions.shape != labels.shape:
            raise ValueError(f'Predictions {predictions.shape} and labels {labels.shape} differ')
        self._correct += int((predictions == labels).sum())
        self._total += labels.size

    @property
    def correct(self):
        return self._correct

    @property
    def total(self):
        return self._total

    @property
    def value(self):
        if self._total == 0:
            raise ValueError('No predictions were counted')
        return 100.0 * self._correct / self._total

    def concat(self, other_counter):
        return AccuracyCounter.unite_many(self, other_counter)

    @staticmethod
    def unite_many(*counters):
        return AccuracyCounter(sum(c.correct for c in counters), sum(c.total for c in counters))


class IoUCounter:
    """
    Класс для подсчета mean IoU: пересечения и объединения копятся по всей выборке,
    пиксели с ignore_index исключаются

    Attributes:
        value (float): mean IoU в процентах по классам, встретившимся в предсказаниях или разметке
    """

    def __init__(self, num_classes, ignore_index=IGNORE_INDEX):
        self.num_classes = num_classes
        self.ignore_index = ignore_index
        self.intersection = np.zeros(num_classes, dtype=np.int64)
        self.union = np.zeros(num_classes, dtype=np.int64)

    def add(self, predictions, masks):
        """
        Добавляет предсказания батча
        :param predictions: Предсказанные классы N x H x W
        :param masks: Разметка N x H x W
        :return: None
        """
        predictions, masks = np.asarray(predictions).astype(np.int64), np.asarray(masks).astype(np.int64)
        if predictions.shape != masks.shape:
            raise ValueError(f'Predictions {predictions.shape} and masks {masks.shape} differ')
        valid = masks != self.ignore_index
        predictions, masks = predictions[valid], masks[valid]
        bins, value_range = self.num_classes, (0, self.num_classes)
        area_inter, _ = np.histogram(predictions[predictions == masks], bins=bins, range=value_range)
        area_pred, _ = np.histogram(predictions, bins=bins, range=value_range)
        area_gt, _ = np.histogram(masks, bins=bins, range=value_range)
        self.intersection += area_inter
        self.union += area_pred + area_gt - area_inter

    @property
    def per_class(self):
        """
        IoU каждого класса (nan для классов без пикселей)
        :rtype: np.ndarray
        """
        with np.errstate(invalid='ignore', divide='ignore'):
            return self.intersection / self.union

    @property
    def value(self):
        """
        >>> counter = IoUCounter(2)
        >>> counter.add([[[0, 0], [1, 1]]], [[[0, 1], [1, 1]]])
        >>> round(counter.value, 4)
        58.3333
        """
        present = self.union > 0
        if not present.any():
            raise ValueError('No pixels were counted')
        return 100.0 * float(np.mean(self.intersection[present] / self.union[present]))

    def concat(self, other_counter):
        return IoUCounter.unite_many(self, other_counter)

    @staticmethod
    def unite_many(*counters):
        counter = IoUCounter(counters[0].num_classes, counters[0].ignore_index)
        counter.intersection = sum(c.intersection for c in counters)
        counter.union = sum(c.union for c in counters)
        return counter


def make_counter(task, num_classes):
    """
    Возвращает счетчик метрики задачи
    :param task: classification или segmentation
    :param num_classes: Число классов
    :rtype: AccuracyCounter or IoUCounter
    """
    if task == 'segmentation':
        return IoUCounter(num_classes)
    return AccuracyCounter()


def metric_name(task):
    return 'miou' if task == 'segmentation' else 'top1'
