"""
Командная строка: learn-safe, train, finetune, sweep, report, list-transforms, probe.

Порядок заполнения конфигурации: умолчания, умолчания датасета, файл --config, флаги
"""
import argparse
import sys
from pathlib import Path

from safeaug.checkpoints import CatalogMismatchException, CheckpointIntegrityException, CheckpointSchemaException
from safeaug.data_io import ChecksumMismatchException, ContradictoryProbeSpecException, DatasetMissingException, \
    SyntheticProbeSpec, make_synthetic_probe, save_image_directory
from safeaug.joint_model import InputShapeException, LossShapeException
from safeaug.models import CATALOG_NAMES, DATASET_DEFAULTS, MODEL_NAMES, MODES, SAFE_MODES, \
    ConfigValidationException, ExperimentConfig
from safeaug.report import Report, create_catalog_table, create_runs_table, create_sweep_table
from safeaug.run_registry import DEFAULT_REGISTRY, RunExistsException, RunRegistry, UnknownRunException
from safeaug.safety_analyzer import REPORT_HTML, REPORT_PNG, REPORT_XLSX, EmptyTestSetException, \
    MissingLabelsException, emit_report, parse_report
from safeaug.transform_engine import SubsetSizeException, UnknownTransformException, build_catalog
from safeaug.workflows import TaskMismatchException, TrainingDivergedException, finetune, \
    learn_safe, per_augmentation_task_accuracy, run_repeats, subset_size_sweep, train_with_set, write_sweep_outputs

PACKAGE_EXCEPTIONS = (
    ConfigValidationException, DatasetMissingException, ChecksumMismatchException, ContradictoryProbeSpecException,
    CheckpointIntegrityException, CheckpointSchemaException, CatalogMismatchException, RunExistsException,
    UnknownRunException, TrainingDivergedException, TaskMismatchException, MissingLabelsException,
    EmptyTestSetException, UnknownTransformException, SubsetSizeException, LossShapeException, InputShapeException,
    FileNotFoundError,
)

# флаг -> поле ExperimentConfig
CONFIG_FLAGS = {
    'dataset': 'dataset',
    'data_root': 'data_root',
    'subset_size': 'subset_size',
    'test_subset_size': 'test_subset_size',
    'model': 'model',
    'mode': 'mode',
    'k': 'k',
    'p': 'p',
    'max_subset_size': 'max_subset_size',
    'epochs': 'epochs',
    'batch_size': 'batch_size',
    'lr': 'lr',
    'finetune_lr': 'finetune_lr',
    'seed': 'seed',
    'fp_max': 'fp_max',
    'acc_max': 'acc_max',
    'decision_threshold': 'decision_threshold',
    'analysis_passes': 'analysis_passes',
    'repeats': 'repeats',
    'workers': 'workers',
    'device': 'device',
    'safe_set': 'safe_set',
    'exclude': 'exclude',
}


def _names_list(value):
    return [name.strip() for name in value.split(',') if name.strip()]


def _safe_set_value(value):
    """
    Список названий через запятую остается списком, иначе это путь или идентификатор запуска

    >>> _safe_set_value('HorizontalFlip, RandomBrightness')
    ['HorizontalFlip', 'RandomBrightness']
    >>> _safe_set_value('runs/abc')
    'runs/abc'
    """
    names = _names_list(value)
    if names and all(name in CATALOG_NAMES for name in names):
        return names
    return value


def _sizes(value):
    """
    >>> _sizes('0,1,3')
    [0, 1, 3]
    """
    try:
        return [int(v) for v in _names_list(value)]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f'sizes must be integers: {value}') from e


def _add_config_flags(parser):
    group = parser.add_argument_group('конфигурация')
    group.add_argument('--config', help='JSON файл конфигурации')
    group.add_argument('--dataset', choices=sorted(DATASET_DEFAULTS))
    group.add_argument('--data-root', dest='data_root')
    group.add_argument('--subset-size', dest='subset_size', type=int)
    group.add_argument('--test-subset-size', dest='test_subset_size', type=int)
    group.add_argument('--model', choices=MODEL_NAMES)
    group.add_argument('--mode', choices=MODES)
    group.add_argument('--k', type=int)
    group.add_argument('--p', type=float)
    group.add_argument('--max-subset-size', dest='max_subset_size', type=int)
    group.add_argument('--epochs', type=int)
    group.add_argument('--batch-size', dest='batch_size', type=int)
    group.add_argument('--lr', type=float)
    group.add_argument('--finetune-lr', dest='finetune_lr', type=float)
    group.add_argument('--seed', type=int)
    group.add_argument('--fp-max', dest='fp_max', type=float)
    group.add_argument('--acc-max', dest='acc_max', type=float)
    group.add_argument('--decision-threshold', dest='decision_threshold', type=float)
    group.add_argument('--analysis-passes', dest='analysis_passes', type=int)
    group.add_argument('--repeats', type=int)
    group.add_argument('--workers', type=int)
    group.add_argument('--device')
    group.add_argument('--safe-set', dest='safe_set', type=_safe_set_value,
                       help='названия через запятую, путь к safe_set.json или идентификатор запуска')
    group.add_argument('--exclude', type=_names_list, help='исключения из безопасного набора через запятую')
    parser.add_argument('--registry', default=DEFAULT_REGISTRY, help='папка реестра запусков')


def build_parser():
    """
    Создает парсер аргументов со всеми подкомандами
    :rtype: argparse.ArgumentParser
    """
    parser = argparse.ArgumentParser('safeaug', description='Поиск безопасных аугментаций')
    subparsers = parser.add_subparsers(dest='command', required=True)

    learn = subparsers.add_parser('learn-safe', help='совместное обучение и выбор безопасного набора')
    _add_config_flags(learn)
    learn.add_argument('--with-task-accuracy', action='store_true',
                       help='дополнительно обучить маленькую сеть с каждой аугментацией отдельно')

    train = subparsers.add_parser('train', help='обучение с набором режима')
    _add_config_flags(train)

    tune = subparsers.add_parser('finetune', help='дообучение на безопасном наборе')
    _add_config_flags(tune)
    tune.add_argument('--run', help='запуск или путь к чекпоинту предобучения; без него сначала '
                                    'выполняется предобучение со всеми аугментациями')
    tune.add_argument('--pretrain-epochs', dest='pretrain_epochs', type=int)

    sweep = subparsers.add_parser('sweep', help='перебор размера подмножества для наборов All и Safe')
    _add_config_flags(sweep)
    sweep.add_argument('--sizes', type=_sizes, default=list(range(len(CATALOG_NAMES) + 1)))
    sweep.add_argument('--out', default='sweep', help='папка для таблицы и графика')

    report = subparsers.add_parser('report', help='отчет запуска или список запусков')
    report.add_argument('--run', help='идентификатор запуска learn-safe')
    report.add_argument('--out', help='папка для графика и таблиц (по умолчанию папка отчета запуска)')
    report.add_argument('--registry', default=DEFAULT_REGISTRY)

    subparsers.add_parser('list-transforms', help='каталог преобразований')

    probe = subparsers.add_parser('probe', help='сохранить пробный датасет как папку изображений')
    probe.add_argument('--out', required=True)
    probe.add_argument('--subset-size', dest='subset_size', type=int, default=5000)
    probe.add_argument('--seed', type=int, default=0)
    probe.add_argument('--nuisances', type=_names_list, default=['brightness'])
    probe.add_argument('--asymmetries', type=_names_list, default=['vertical_gradient'])
    return parser


def config_from_args(args):
    """
    Собирает конфигурацию из файла и флагов. Флаги переопределяют файл
    :rtype: ExperimentConfig
    :raises ConfigValidationException: Если в файле неизвестные поля
    """
    config = ExperimentConfig.load(args.config) if getattr(args, 'config', None) else ExperimentConfig()
    overrides = {field: getattr(args, flag, None) for flag, field in CONFIG_FLAGS.items()}
    return config.with_overrides(**overrides)


def _print_record(record):
    print(f'Запуск {record.run_id}: {record.metric_name} = {record.test_metric:.2f}%')


def command_learn_safe(args):
    registry = RunRegistry(args.registry)
    config = config_from_args(args)
    safe, metrics, record = learn_safe(config, registry)
    task_accuracies, reference = None, None
    if args.with_task_accuracy:
        task_accuracies, reference = per_augmentation_task_accuracy(config, registry)
        emit_report(metrics, safe, registry.report_dir(record.run_id), task_accuracies, reference,
                    run_id=record.run_id)
    Report(parse_report(registry.report_dir(record.run_id))).print()
    _print_record(record)
    print('Отчет:', registry.report_dir(record.run_id))
    print('Безопасный набор:', safe)


def command_train(args):
    registry = RunRegistry(args.registry)
    config = config_from_args(args)
    records, mean = run_repeats(train_with_set, config, registry=registry)
    for record in records:
        _print_record(record)
    if len(records) > 1:
        print(f'Среднее по {len(records)} запускам: {mean:.2f}%')


def command_finetune(args):
    registry = RunRegistry(args.registry)
    config = config_from_args(args)
    if args.mode is None and config.safe_set is not None and config.mode not in SAFE_MODES:
        config = config.with_overrides(mode='safe')
    parent = args.run
    if parent is None:
        pretrain = config.with_overrides(mode='all', epochs=args.pretrain_epochs)
        print('Предобучение со всеми аугментациями...')
        record = train_with_set(pretrain, registry=registry, kind='pretrain')
        _print_record(record)
        parent = record.run_id
    for i in range(config.repeats):
        record = finetune(parent, None, config.with_overrides(seed=config.seed + i, repeats=1), registry)
        _print_record(record)


def command_sweep(args):
    registry = RunRegistry(args.registry)
    config = config_from_args(args)
    rows = subset_size_sweep(config, args.sizes, registry)
    paths = write_sweep_outputs(rows, args.out)
    print(create_sweep_table(rows))
    print('Результаты:', ', '.join(str(path) for path in paths.values()))


def command_report(args):
    registry = RunRegistry(args.registry)
    if args.run is None:
        print(create_runs_table(registry.list_runs()))
        return
    report_dir = registry.report_dir(args.run)
    if not report_dir.exists():
        raise UnknownRunException(f'Run {args.run} has no safety report')
    report = Report(parse_report(report_dir))
    report.print()
    out_dir = report_dir if args.out is None else _make_dir(args.out)
    print('Формирование графика...')
    report.generate_image(out_dir / REPORT_PNG)
    print('Формирование таблицы...')
    report.generate_excel(out_dir / REPORT_XLSX)
    report.generate_html(out_dir / REPORT_HTML)
    print('Отчет готов:', out_dir)


def _make_dir(value):
    path = Path(value)
    path.mkdir(parents=True, exist_ok=True)
    return path


def command_list_transforms(args):
    print(create_catalog_table(build_catalog()))


def command_probe(args):
    spec = SyntheticProbeSpec(sample_count=args.subset_size, nuisances=tuple(args.nuisances),
                              asymmetries=tuple(args.asymmetries), seed=args.seed)
    handle = make_synthetic_probe(spec)
    manifest = save_image_directory(handle, args.out)
    print(f'Пробный датасет сохранен: {manifest}')
    print('Должны быть безопасными:', ', '.join(spec.safe_transforms) or 'нет')
    print('Должны быть опасными:', ', '.join(spec.unsafe_transforms) or 'нет')


COMMANDS = {
    'learn-safe': command_learn_safe,
    'train': command_train,
    'finetune': command_finetune,
    'sweep': command_sweep,
    'report': command_report,
    'list-transforms': command_list_transforms,
    'probe': command_probe,
}


def run(argv=None):
    """
    Выполняет подкоманду
    :param argv: Аргументы без имени программы или None (sys.argv)
    :return: Код выхода: 0 при успехе, 1 при ошибке
    :rtype: int
    """
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigValidationException as ex:
        print('Ошибка конфигурации:', file=sys.stderr)
        for error in ex.errors:
            print(f'  {error}', file=sys.stderr)
        return 1
    except PACKAGE_EXCEPTIONS as ex:
        print(f'{type(ex).__name__}: {ex}', file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())
