"""
Сценарии экспериментов: поиск безопасных аугментаций совместным обучением,
обучение с фиксированным набором, дообучение на безопасном наборе, комбинация
Safe + Baseline + Cutout, перебор размера подмножества и оценка чекпоинта.
"""
import concurrent.futures as pool
import copy
import time
from pathlib import Path

import numpy as np
import pandas as pd
import torch

from safeaug.checkpoints import Checkpoint, load_checkpoint, save_checkpoint
from safeaug.data_io import DatasetHandle, load_dataset
from safeaug.joint_model import JointBatch, NonFiniteLossException, build_model, build_optimizer, build_scheduler, \
    current_lr, set_lr, train_step
from safeaug.log import get_logger
from safeaug.metrics import make_counter, metric_name
from safeaug.models import CATALOG_NAMES, AugmentationSet, ConfigValidationException, ExperimentConfig, \
    ExperimentRecord, SafeSet, Thresholds
from safeaug.report import SweepGraphic, generate_sweep_excel
from safeaug.run_registry import RunRegistry
from safeaug.safety_analyzer import SAFE_SET_JSON, build_metrics, emit_report, evaluate_augmentation_accuracy, \
    evaluate_clean_false_positives, refine_safe_set, select_safe_set
from safeaug.transform_engine import FixedSize, RandomSize, apply_baseline, augment_batch, build_catalog, \
    cutout_batch, make_rng, resize_batch, sample_subset

logger = get_logger(__name__)

SAFE_V2_EXCLUSIONS = ('RandomCrop', 'CenterCrop')
ANALYSIS_SEED_OFFSET = 1000


class TrainingDivergedException(Exception):
    """
    Потеря стала нечисловой. Запуск остановлен, запись с диагностикой прилагается

    Attributes:
        record (ExperimentRecord): Запись со статусом diverged
    """

    def __init__(self, record):
        super().__init__(record.diagnostic)
        self.record = record


class TaskMismatchException(ValueError):
    """
    Головы чекпоинта не подходят к задаче датасета
    """
    pass


class BatchAugmenter:
    """
    Аугментация одного сырого батча по режиму запуска. Порядок: базовый рецепт, подмножество набора,
    приведение к входному разрешению, нормализация, Cutout

    Attributes:
        dataset (DatasetHandle): Датасет (рецепт и нормализация)
        aug_set (AugmentationSet or None): Набор, из которого выбираются подмножества
        subset_mode (RandomSize or FixedSize or None): Режим выбора подмножества
        probability (float): Вероятность срабатывания внутри подмножества
        baseline (bool): Применять ли базовый рецепт
        cutout_size (int): Сторона Cutout, 0 - без Cutout
    """

    def __init__(self, dataset: DatasetHandle, aug_set=None, subset_mode=None, probability=0.5, baseline=False,
                 cutout_size=0):
        self.dataset = dataset
        self.aug_set = aug_set
        self.subset_mode = subset_mode
        self.probability = probability
        self.baseline = baseline
        self.cutout_size = cutout_size

    def __call__(self, images, masks, rng):
        """
        :param images: Сырой батч N x H x W x C uint8
        :param masks: Маски N x H x W или None
        :param rng: Генератор случайных чисел запуска
        :return: Кортеж (нормализованные изображения, маски, вектор меток сработавших преобразований)
        """
        if self.baseline:
            images, masks = apply_baseline(images, self.dataset.name, rng, masks)
        labels = np.zeros(len(CATALOG_NAMES), dtype=np.float32)
        if self.aug_set is not None and self.subset_mode is not None:
            subset = sample_subset(self.aug_set, self.subset_mode, rng)
            augmented = augment_batch(images, subset, self.probability, rng, masks)
            images, masks, labels = augmented.images, augmented.masks, augmented.labels
            images, masks = resize_batch(images, self.dataset.input_size, masks)
        normalized = self.dataset.normalize(images)
        if self.cutout_size:
            normalized = cutout_batch(normalized, self.cutout_size, rng)
        return normalized, masks, labels


def _targets(split, indices, task, masks):
    if task == 'segmentation':
        return masks
    return split.targets[indices]


def evaluate_split(model, split, dataset: DatasetHandle, batch_size=256):
    """
    Метрика задачи на части датасета: top-1 (%) или mean IoU (%)
    :rtype: float
    """
    counter = make_counter(model.task, model.num_classes)
    for start in range(0, len(split), batch_size):
        images = split.images[start:start + batch_size]
        counter.add(model.predict_task(dataset.normalize(images)), split.targets[start:start + batch_size])
    return counter.value


def fit(model, dataset: DatasetHandle, config: ExperimentConfig, augmenter: BatchAugmenter, rng, joint,
        optimizer=None, restore_best=True):
    """
    Цикл обучения: уменьшение learning rate на плато метрики валидации, ранняя остановка,
    в конце (при restore_best) восстанавливаются веса с лучшей метрикой валидации
    :param model: Модель
    :param dataset: Датасет
    :param config: Разрешенная конфигурация
    :param augmenter: Аугментация батчей
    :param rng: Генератор случайных чисел запуска
    :param joint: Совместное обучение с головой аугментаций
    :param optimizer: Оптимизатор или None (создается по конфигурации)
    :param restore_best: Восстанавливать ли веса лучшей эпохи. Метрика валидации относится только к задаче,
        поэтому при поиске безопасного набора остаются веса последней эпохи
    :return: Кортеж (история эпох, оптимизатор)
    :raises NonFiniteLossException: Если потеря стала нечисловой
    """
    optimizer = optimizer or build_optimizer(model, config.optimizer, config.lr, config.momentum, config.weight_decay)
    scheduler = build_scheduler(optimizer, config.plateau_factor, config.plateau_patience)
    train = dataset.train
    history = []
    best_metric, best_state, bad_epochs = None, None, 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        sums = {'augm': 0.0, 'task': 0.0, 'total': 0.0}
        steps = 0
        for start in range(0, len(order), config.batch_size):
            indices = order[start:start + config.batch_size]
            masks = train.targets[indices] if dataset.task == 'segmentation' else None
            images, masks, labels = augmenter(train.images[indices], masks, rng)
            batch = JointBatch(model.to_tensor(images), labels,
                               torch.from_numpy(np.asarray(_targets(train, indices, dataset.task, masks))))
            breakdown = train_step(model, batch, optimizer, joint)
            for name in sums:
                value = getattr(breakdown, name)
                sums[name] += 0.0 if value is None else value
            steps += 1
        row = {'epoch': epoch + 1, 'lr': current_lr(optimizer)}
        row.update({name: (value / steps if steps else None) for name, value in sums.items()})
        if not joint:
            row['augm'] = None
        if len(dataset.val):
            val_metric = evaluate_split(model, dataset.val, dataset)
            row['val_metric'] = val_metric
            scheduler.step(val_metric)
            if best_metric is None or val_metric > best_metric:
                best_metric, best_state, bad_epochs = val_metric, copy.deepcopy(model.module.state_dict()), 0
            else:
                bad_epochs += 1
        history.append(row)
        logger.info(f'Epoch {epoch + 1}/{config.epochs}: ' +
                    ', '.join(f'{k}={v:.4f}' for k, v in row.items() if isinstance(v, float)))
        if current_lr(optimizer) < row['lr']:
            logger.info(f'Learning rate reduced to {current_lr(optimizer)}')
        if best_state is not None and bad_epochs >= config.early_stopping_patience:
            logger.info(f'Early stopping after epoch {epoch + 1}')
            break
    if restore_best and best_state is not None:
        model.module.load_state_dict(best_state)
    return history, optimizer


def _prepare(config: ExperimentConfig, purpose, dataset=None):
    config = config.resolved().check(purpose)
    dataset = dataset or load_dataset(config.dataset, config.data_root, config.subset_size, config.seed,
                                      config.val_fraction, config.test_subset_size)
    if dataset.task != config.task:
        raise TaskMismatchException(f'Dataset {dataset.name} is {dataset.task}, config expects {config.task}')
    return config, dataset


def build_run_catalog(config: ExperimentConfig, dataset: DatasetHandle):
    """
    Каталог с размером кропов из конфигурации. Кропы больше изображения ограничиваются его размером
    :return: Кортеж (каталог, был ли ограничен размер кропов)
    """
    crop = tuple(config.crop_size)
    capped = tuple(min(c, s) for c, s in zip(crop, dataset.input_size))
    if capped != crop:
        logger.warning(f'Crop size {crop} exceeds image size {dataset.input_size}, capped to {capped}')
    return build_catalog(capped, config.p), capped != crop


def _new_model(config, dataset):
    return build_model(config.model, dataset.task, dataset.num_classes, dataset.channels, dataset.input_size,
                       CATALOG_NAMES, config.device, seed=config.seed)


def _record(config, kind, run_id, model, history, test_metric, started, **fields):
    return ExperimentRecord(run_id, kind, config.to_dict(), config.config_hash, config.seed, history,
                            metric_name(model.task), test_metric, wall_time=time.time() - started, **fields)


def _diverged(config, kind, run_id, error, started, registry):
    record = ExperimentRecord(run_id, kind, config.to_dict(), config.config_hash, config.seed, wall_time=time.time() -
                              started, status='diverged', diagnostic=str(error),
                              extra={'losses': error.breakdown.to_dict()})
    if registry is not None and run_id is not None:
        registry.write_record(record)
    logger.error(f'Run {run_id} diverged: {error}')
    return TrainingDivergedException(record)


def _save_run_checkpoint(registry, run_id, model, optimizer, config, test_metric):
    if registry is None:
        return None
    path = registry.checkpoint_path(run_id)
    save_checkpoint(path, model, optimizer, config.optimizer, config.to_dict(), config.config_hash,
                    {'run_id': run_id, 'final_lr': current_lr(optimizer), 'test_metric': test_metric})
    return str(path)


def learn_safe(config: ExperimentConfig, registry: RunRegistry = None, dataset: DatasetHandle = None):
    """
    Совместное обучение задачи и классификации аугментаций со случайным подмножеством
    размера из {0, ..., max_subset_size} (p = 1), оценка на чистом и аугментированном тесте, выбор набора
    :param config: Конфигурация
    :param registry: Реестр для артефактов или None
    :param dataset: Уже загруженный датасет или None
    :return: Кортеж (SafeSet, SafetyMetrics, ExperimentRecord)
    :raises TrainingDivergedException: Если потеря стала нечисловой
    """
    started = time.time()
    config, dataset = _prepare(config, 'learn_safe', dataset)
    run_id = registry.create_run('learn_safe', config) if registry is not None else None
    catalog, crop_capped = build_run_catalog(config, dataset)
    model = _new_model(config, dataset)
    augmenter = BatchAugmenter(dataset, catalog, RandomSize(config.max_subset_size), probability=1.0)
    try:
        history, optimizer = fit(model, dataset, config, augmenter, make_rng(config.seed), joint=True,
                                 restore_best=False)
    except NonFiniteLossException as e:
        raise _diverged(config, 'learn_safe', run_id, e, started, registry)

    clean = evaluate_clean_false_positives(model, dataset.test.images, dataset.normalize, config.decision_threshold,
                                           config.analysis_batch_size)
    augmented = evaluate_augmentation_accuracy(model, dataset.test.images, catalog,
                                               config.seed + ANALYSIS_SEED_OFFSET, dataset.normalize,
                                               config.decision_threshold, config.analysis_batch_size,
                                               config.analysis_passes, config.max_subset_size, 1.0,
                                               dataset.input_size)
    metrics = build_metrics(clean, augmented)
    if not metrics.detects_any:
        logger.warning('Augmentation head recognized no transform on the augmented test')
    thresholds = Thresholds(config.fp_max, config.acc_max, config.decision_threshold)
    safe = select_safe_set(metrics, thresholds, provenance={'run_id': run_id, 'config_hash': config.config_hash})
    if config.exclude:
        safe = refine_safe_set(safe, config.exclude)
    logger.info(f'Safe augmentations: {list(safe.members)}')

    test_metric = evaluate_split(model, dataset.test, dataset)
    checkpoint = _save_run_checkpoint(registry, run_id, model, optimizer, config, test_metric)
    record = _record(config, 'learn_safe', run_id, model, history, test_metric, started, safe_set=safe.members,
                     checkpoint=checkpoint, extra={'crop_capped': crop_capped, 'metrics': metrics.to_dict(),
                                                   'head_detects_nothing': not metrics.detects_any})
    if registry is not None:
        emit_report(metrics, safe, registry.report_dir(run_id), catalog=catalog, run_id=run_id)
        registry.write_record(record)
    return safe, metrics, record


def load_safe_set(value, registry: RunRegistry = None):
    """
    Безопасный набор из объекта, списка названий, файла safe_set.json или идентификатора запуска
    :rtype: SafeSet
    :raises ConfigValidationException: Если набор не найден
    """
    if isinstance(value, SafeSet):
        return value
    if isinstance(value, (list, tuple)):
        return SafeSet(value, provenance={'source': 'names'})
    if isinstance(value, str):
        if registry is not None and registry.has(value):
            return SafeSet.load(registry.report_dir(value) / SAFE_SET_JSON)
        path = Path(value)
        if path.is_dir():
            path = path / SAFE_SET_JSON
        if path.exists():
            return SafeSet.load(path)
    raise ConfigValidationException([f'safe_set: cannot resolve {value!r} to a safe set'])


def resolve_augmentation_set(config: ExperimentConfig, catalog: AugmentationSet, aug_set=None, registry=None):
    """
    Набор преобразований для режима запуска
    :return: AugmentationSet или None для режимов без подмножеств
    """
    if aug_set is not None:
        if isinstance(aug_set, AugmentationSet):
            return aug_set
        return load_safe_set(aug_set, registry).to_augmentation_set(catalog)
    if config.mode in ('none', 'baseline'):
        return None
    if config.mode == 'all':
        return catalog
    safe = load_safe_set(config.safe_set, registry)
    if config.mode == 'safe_v2':
        safe = refine_safe_set(safe, config.exclude or SAFE_V2_EXCLUSIONS)
    elif config.exclude:
        safe = refine_safe_set(safe, config.exclude)
    return safe.to_augmentation_set(catalog)


def _effective_k(config, aug_set):
    if aug_set is None:
        return 0
    if config.k > len(aug_set):
        logger.warning(f'Subset size {config.k} exceeds set size {len(aug_set)}, using {len(aug_set)}')
        return len(aug_set)
    return config.k


def _task_augmenter(config, dataset, aug_set):
    k = _effective_k(config, aug_set)
    return BatchAugmenter(dataset, aug_set, FixedSize(k) if aug_set is not None else None, config.p,
                          baseline=config.mode in ('baseline', 'safe+baseline+cutout'),
                          cutout_size=config.cutout_size if config.mode == 'safe+baseline+cutout' else 0), k


def train_with_set(config: ExperimentConfig, aug_set=None, registry: RunRegistry = None,
                   dataset: DatasetHandle = None, kind='train'):
    """
    Обучение задачи (без головы аугментаций) с подмножеством размера k из набора на каждый батч, p из конфигурации
    :param config: Конфигурация, режим none | baseline | safe | all | safe_v2 | safe+baseline+cutout
    :param aug_set: Набор (AugmentationSet, SafeSet, список названий) или None (из режима)
    :param registry: Реестр или None
    :param dataset: Загруженный датасет или None
    :param kind: Вид записи
    :rtype: ExperimentRecord
    """
    started = time.time()
    config, dataset = _prepare(config, 'train' if aug_set is None else 'explicit', dataset)
    catalog, crop_capped = build_run_catalog(config, dataset)
    aug_set = resolve_augmentation_set(config, catalog, aug_set, registry)
    run_id = registry.create_run(kind, config) if registry is not None else None
    model = _new_model(config, dataset)
    augmenter, k = _task_augmenter(config, dataset, aug_set)
    try:
        history, optimizer = fit(model, dataset, config, augmenter, make_rng(config.seed), joint=False)
    except NonFiniteLossException as e:
        raise _diverged(config, kind, run_id, e, started, registry)
    test_metric = evaluate_split(model, dataset.test, dataset)
    checkpoint = _save_run_checkpoint(registry, run_id, model, optimizer, config, test_metric)
    record = _record(config, kind, run_id, model, history, test_metric, started,
                     safe_set=None if aug_set is None else aug_set.names, checkpoint=checkpoint,
                     extra={'effective_k': k, 'crop_capped': crop_capped})
    if registry is not None:
        registry.write_record(record)
    logger.info(f'{kind} {config.mode}: test {record.metric_name} = {test_metric:.2f}')
    return record


def train_combined(config: ExperimentConfig, safe, registry: RunRegistry = None, dataset: DatasetHandle = None):
    """
    Базовый рецепт датасета, затем подмножество размера k безопасного набора (p из конфигурации), затем Cutout
    :rtype: ExperimentRecord
    """
    config = config.with_overrides(mode='safe+baseline+cutout')
    if not isinstance(safe, AugmentationSet):
        safe = load_safe_set(safe, registry)
    return train_with_set(config, safe, registry, dataset, kind='combined')


def finetune(checkpoint, aug_set, config: ExperimentConfig, registry: RunRegistry = None,
             dataset: DatasetHandle = None):
    """
    Дообучение модели из чекпоинта с набором (обычно безопасным) с теми же k и p.
    Learning rate продолжается с последнего значения предобучения, если не задан finetune_lr
    :param checkpoint: Путь к чекпоинту, идентификатор запуска или Checkpoint
    :param aug_set: Набор (AugmentationSet, SafeSet, список, путь) или None (из режима конфигурации)
    :param config: Конфигурация
    :rtype: ExperimentRecord
    :raises CatalogMismatchException: Если отображение меток чекпоинта другое
    """
    started = time.time()
    checkpoint = _resolve_checkpoint(checkpoint, registry, config.device)
    config, dataset = _prepare(config, 'finetune' if aug_set is None else 'explicit', dataset)
    model = checkpoint.model
    if model.task != dataset.task or model.num_classes != dataset.num_classes:
        raise TaskMismatchException(f'Checkpoint heads ({model.task}, K={model.num_classes}) do not match '
                                    f'{dataset.name} ({dataset.task}, K={dataset.num_classes})')
    catalog, crop_capped = build_run_catalog(config, dataset)
    aug_set = resolve_augmentation_set(config, catalog, aug_set, registry)
    run_id = registry.create_run('finetune', config) if registry is not None else None

    lr = config.finetune_lr if config.finetune_lr is not None else checkpoint.extra.get('final_lr', config.lr)
    optimizer = build_optimizer(model, config.optimizer, lr, config.momentum, config.weight_decay)
    checkpoint.restore_optimizer(optimizer)
    set_lr(optimizer, lr)
    augmenter, k = _task_augmenter(config, dataset, aug_set)
    try:
        history, optimizer = fit(model, dataset, config, augmenter, make_rng(config.seed), joint=False,
                                 optimizer=optimizer)
    except NonFiniteLossException as e:
        raise _diverged(config, 'finetune', run_id, e, started, registry)
    test_metric = evaluate_split(model, dataset.test, dataset)
    path = _save_run_checkpoint(registry, run_id, model, optimizer, config, test_metric)
    record = _record(config, 'finetune', run_id, model, history, test_metric, started,
                     safe_set=None if aug_set is None else aug_set.names, checkpoint=path,
                     parent_run=checkpoint.extra.get('run_id'),
                     extra={'effective_k': k, 'start_lr': lr, 'crop_capped': crop_capped})
    if registry is not None:
        registry.write_record(record)
    return record


def _resolve_checkpoint(checkpoint, registry, device):
    if isinstance(checkpoint, Checkpoint):
        return checkpoint
    if registry is not None and registry.has(str(checkpoint)):
        checkpoint = registry.checkpoint_path(str(checkpoint))
    return load_checkpoint(checkpoint, device=device)


def evaluate(checkpoint, dataset: DatasetHandle, registry: RunRegistry = None, batch_size=256):
    """
    Метрика чекпоинта на тесте: top-1 (%) для классификации, mean IoU (%) для сегментации
    :rtype: float
    :raises TaskMismatchException: Если головы чекпоинта не подходят к датасету
    """
    checkpoint = _resolve_checkpoint(checkpoint, registry, 'cpu')
    model = checkpoint.model
    if model.task != dataset.task or model.num_classes != dataset.num_classes:
        raise TaskMismatchException(f'Checkpoint heads ({model.task}, K={model.num_classes}) do not match '
                                    f'{dataset.name} ({dataset.task}, K={dataset.num_classes})')
    return evaluate_split(model, dataset.test, dataset, batch_size)


def run_repeats(workflow, config: ExperimentConfig, *args, **kwargs):
    """
    Повторяет сценарий с зернами seed, seed + 1, ..., seed + repeats - 1
    :param workflow: train_with_set, train_combined или finetune-подобная функция, возвращающая запись
    :return: Кортеж (записи, средняя метрика)
    """
    records = [workflow(config.with_overrides(seed=config.seed + i, repeats=1), *args, **kwargs)
               for i in range(config.repeats)]
    return records, float(np.mean([r.test_metric for r in records]))


def _sweep_job(config_dict, set_members, kind):
    config = ExperimentConfig.parse_from_dict(config_dict)
    return train_with_set(config, list(set_members), kind=kind).to_dict()


def subset_size_sweep(config: ExperimentConfig, sizes, registry: RunRegistry = None, out_dir=None):
    """
    Обучает по запуску на каждый (размер подмножества, набор All или Safe) и каждый повтор
    :param config: Конфигурация (safe_set обязателен)
    :param sizes: Размеры подмножества из 0..15
    :param registry: Реестр (записи пишет только этот процесс)
    :param out_dir: Папка для таблицы и графика или None
    :return: Строки {size, set, accuracy, runs}
    :rtype: List[dict]
    """
    config = config.resolved().check('sweep')
    sizes = list(sizes)
    bad = [size for size in sizes if not 0 <= size <= len(CATALOG_NAMES)]
    if bad:
        raise ConfigValidationException([f'sizes: {bad} are outside 0..{len(CATALOG_NAMES)}'])
    safe = load_safe_set(config.safe_set, registry)
    jobs = []
    for size in sizes:
        for set_name, members, mode in (('All', list(CATALOG_NAMES), 'all'), ('Safe', list(safe.members), 'safe')):
            for i in range(config.repeats):
                run_config = config.with_overrides(k=size, mode=mode, seed=config.seed + i, repeats=1, workers=1)
                jobs.append((size, set_name, run_config, members))

    config_dicts = [job[2].to_dict() for job in jobs]
    members = [job[3] for job in jobs]
    kinds = ['sweep_row'] * len(jobs)
    if config.workers > 1:
        with pool.ProcessPoolExecutor(max_workers=config.workers) as executor:
            results = [ExperimentRecord.parse_from_dict(record_dict)
                       for record_dict in executor.map(_sweep_job, config_dicts, members, kinds, timeout=None)]
    else:
        results = [ExperimentRecord.parse_from_dict(record_dict)
                   for record_dict in map(_sweep_job, config_dicts, members, kinds)]

    grouped = {}
    for (size, set_name, run_config, _), record in zip(jobs, results):
        if registry is not None:
            record.run_id = registry.create_run('sweep_row', run_config)
            registry.write_record(record)
        grouped.setdefault((size, set_name), []).append(record)
    rows = [{'size': size, 'set': set_name, 'accuracy': float(np.mean([r.test_metric for r in records])),
             'runs': [str(r.run_id) for r in records]}
            for (size, set_name), records in grouped.items()]

    if out_dir is not None:
        write_sweep_outputs(rows, out_dir, results[0].metric_name if results else 'top1')
    return rows


def write_sweep_outputs(rows, out_dir, metric='top1'):
    """
    Сохраняет таблицу перебора (CSV, XLSX) и график
    :return: Пути к файлам
    :rtype: Dict[str, Path]
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {'csv': out_dir / 'sweep.csv', 'xlsx': out_dir / 'sweep.xlsx', 'png': out_dir / 'sweep.png'}
    frame = pd.DataFrame(rows, columns=['size', 'set', 'accuracy', 'runs'])
    frame.assign(runs=frame['runs'].map(' '.join)).to_csv(paths['csv'], index=False)
    generate_sweep_excel(rows, paths['xlsx'])
    graphic = SweepGraphic()
    graphic.set_sweep_rows(rows, metric)
    graphic.save_picture(paths['png'])
    return paths


def per_augmentation_task_accuracy(config: ExperimentConfig, registry: RunRegistry = None,
                                   dataset: DatasetHandle = None, names=CATALOG_NAMES):
    """
    Точность задачи при обучении с каждой аугментацией отдельно и без аугментаций (красная линия).
    Дорогой сценарий, всегда использует маленькую сеть
    :return: Кортеж (точность по аугментациям, точность без аугментаций)
    :rtype: Tuple[Dict[str, float], float]
    """
    if config.model != 'tiny':
        logger.warning('Per-augmentation task accuracy always uses the tiny model')
    config = config.with_overrides(model='tiny', mode='none', k=1)
    config, dataset = _prepare(config, 'train', dataset)
    reference = train_with_set(config.with_overrides(mode='none'), registry=registry, dataset=dataset,
                               kind='per_augmentation').test_metric
    accuracies = {}
    for name in names:
        record = train_with_set(config.with_overrides(mode='all'), [name], registry=registry, dataset=dataset,
                                kind='per_augmentation')
        accuracies[name] = record.test_metric
    return accuracies, reference
