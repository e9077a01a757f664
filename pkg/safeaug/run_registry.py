"""
Реестр запусков: папка runs/<run_id>/ с config.json, record.json, checkpoint.pt и report/.
Папки только добавляются, запись ведет один процесс
"""
import json
from datetime import datetime
from pathlib import Path

import pandas as pd

from safeaug.log import get_logger
from safeaug.models import ExperimentConfig, ExperimentRecord

logger = get_logger(__name__)

DEFAULT_REGISTRY = 'runs'
CONFIG_NAME = 'config.json'
RECORD_NAME = 'record.json'
CHECKPOINT_NAME = 'checkpoint.pt'
REPORT_DIR = 'report'


class RunExistsException(Exception):
    """
    Папка запуска уже существует
    """
    pass


class UnknownRunException(Exception):
    """
    Запуск не найден в реестре
    """
    pass


class RunRegistry:
    """
    Класс реестра запусков

    Attributes:
        root (Path): Папка реестра
    """

    def __init__(self, root=DEFAULT_REGISTRY):
        self.root = Path(root)

    def create_run(self, kind, config: ExperimentConfig, run_id=None):
        """
        Создает папку запуска и записывает в нее разрешенную конфигурацию
        :param kind: Вид запуска
        :param config: Конфигурация
        :param run_id: Идентификатор или None (создается из времени)
        :return: Идентификатор запуска
        :rtype: str
        :raises RunExistsException: Если папка уже есть
        """
        run_id = run_id or f'{datetime.now():%Y%m%d-%H%M%S-%f}-{kind}'
        self.root.mkdir(parents=True, exist_ok=True)
        try:
            self.root.joinpath(run_id).mkdir(exist_ok=False)
        except FileExistsError as e:
            raise RunExistsException(f'Run {run_id} already exists') from e
        config.save(self.config_path(run_id))
        logger.info(f'Created run {run_id}')
        return run_id

    def has(self, run_id):
        return bool(run_id) and self.root.joinpath(run_id, CONFIG_NAME).exists()

    def run_dir(self, run_id):
        """
        :raises UnknownRunException: Если запуска нет
        """
        if not self.has(run_id):
            raise UnknownRunException(f'Run {run_id} is not in {self.root}')
        return self.root.joinpath(run_id)

    def config_path(self, run_id):
        return self.root.joinpath(run_id, CONFIG_NAME)

    def checkpoint_path(self, run_id):
        return self.run_dir(run_id).joinpath(CHECKPOINT_NAME)

    def report_dir(self, run_id):
        return self.run_dir(run_id).joinpath(REPORT_DIR)

    def write_record(self, record: ExperimentRecord):
        path = self.run_dir(record.run_id).joinpath(RECORD_NAME)
        path.write_text(json.dumps(record.to_dict(), indent=2, ensure_ascii=False), encoding='utf-8')
        return path

    def read_record(self, run_id):
        """
        :rtype: ExperimentRecord
        :raises UnknownRunException: Если у запуска нет записи
        """
        path = self.run_dir(run_id).joinpath(RECORD_NAME)
        if not path.exists():
            raise UnknownRunException(f'Run {run_id} has no record')
        return ExperimentRecord.parse_from_dict(json.loads(path.read_text(encoding='utf-8')))

    def read_config(self, run_id):
        return ExperimentConfig.load(self.run_dir(run_id).joinpath(CONFIG_NAME))

    def run_ids(self):
        if not self.root.exists():
            return []
        return sorted(path.name for path in self.root.iterdir() if path.joinpath(CONFIG_NAME).exists())

    def list_runs(self):
        """
        Таблица всех запусков реестра
        :rtype: pd.DataFrame
        """
        rows = []
        for run_id in self.run_ids():
            config = self.read_config(run_id)
            row = {'run_id': run_id, 'dataset': config.dataset, 'model': config.model, 'mode': config.mode,
                   'seed': config.seed, 'kind': None, 'metric': None, 'value': None, 'status': 'running',
                   'parent_run': None}
            if self.run_dir(run_id).joinpath(RECORD_NAME).exists():
                record = self.read_record(run_id)
                row.update({'kind': record.kind, 'metric': record.metric_name, 'value': record.test_metric,
                            'status': record.status, 'parent_run': record.parent_run})
            rows.append(row)
        return pd.DataFrame(rows, columns=['run_id', 'kind', 'dataset', 'model', 'mode', 'seed', 'metric', 'value',
                                           'status', 'parent_run'])
