"""
Чекпоинты: веса обеих голов и backbone, состояние оптимизатора, отображение меток аугментаций и хэш конфигурации.

Формат файла: MAGIC, sha256 полезной нагрузки (hex) и перевод строки, затем байты torch.save
"""
import hashlib
import io
from pathlib import Path

import torch

from safeaug.joint_model import build_model
from safeaug.log import get_logger
from safeaug.models import CATALOG_NAMES, SCHEMA_VERSION

logger = get_logger(__name__)

MAGIC = b'SAFEAUG-CHECKPOINT\n'


class CheckpointIntegrityException(Exception):
    """
    Файл чекпоинта поврежден или изменен
    """
    pass


class CheckpointSchemaException(Exception):
    """
    Версия схемы чекпоинта не поддерживается
    """
    pass


class CatalogMismatchException(Exception):
    """
    Отображение меток чекпоинта не совпадает с текущим каталогом
    """
    pass


class Checkpoint:
    """
    Загруженный чекпоинт

    Attributes:
        model (ModelHandle): Модель с восстановленными весами
        optimizer_name (str or None): sgd или adam
        optimizer_state (dict or None): Состояние оптимизатора
        config (dict): Конфигурация запуска
        config_hash (str or None): Хэш конфигурации
        extra (dict): run_id, final_lr, test_metric и т.п.
    """

    def __init__(self, model, optimizer_name, optimizer_state, config, config_hash, extra):
        self.model = model
        self.optimizer_name = optimizer_name
        self.optimizer_state = optimizer_state
        self.config = dict(config or {})
        self.config_hash = config_hash
        self.extra = dict(extra or {})

    def restore_optimizer(self, optimizer):
        """
        Загружает состояние оптимизатора, если он того же типа
        :return: True, если состояние загружено
        :rtype: bool
        """
        if self.optimizer_state is None:
            return False
        expected = {'sgd': torch.optim.SGD, 'adam': torch.optim.Adam}.get(self.optimizer_name)
        if expected is None or not isinstance(optimizer, expected):
            logger.warning('Optimizer type changed, optimizer state is not restored')
            return False
        optimizer.load_state_dict(self.optimizer_state)
        return True


def save_checkpoint(path, model, optimizer=None, optimizer_name=None, config=None, config_hash=None, extra=None):
    """
    Сохраняет чекпоинт
    :param path: Путь к файлу
    :param model: Модель
    :type model: ModelHandle
    :param optimizer: Оптимизатор torch или None
    :param optimizer_name: sgd или adam
    :param config: Конфигурация (словарь)
    :param config_hash: Хэш конфигурации
    :param extra: Дополнительные сведения
    :return: sha256 полезной нагрузки
    :rtype: str
    """
    payload = {
        'schema_version': SCHEMA_VERSION,
        'descriptor': model.descriptor,
        'state_dict': model.module.state_dict(),
        'optimizer_name': optimizer_name,
        'optimizer_state': None if optimizer is None else optimizer.state_dict(),
        'config': config,
        'config_hash': config_hash,
        'extra': extra or {},
    }
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    data = buffer.getvalue()
    digest = hashlib.sha256(data).hexdigest()
    Path(path).write_bytes(MAGIC + digest.encode('ascii') + b'\n' + data)
    return digest


def load_checkpoint(path, catalog_names=CATALOG_NAMES, device='cpu'):
    """
    Загружает чекпоинт и проверяет целостность, схему и отображение меток
    :param path: Путь к файлу
    :param catalog_names: Текущий каталог
    :param device: Устройство модели
    :rtype: Checkpoint
    :raises CheckpointIntegrityException: Если файл поврежден
    :raises CheckpointSchemaException: Если схема не поддерживается
    :raises CatalogMismatchException: Если отображение меток другое
    """
    content = Path(path).read_bytes()
    if not content.startswith(MAGIC):
        raise CheckpointIntegrityException(f'{path} is not a checkpoint file')
    header_end = content.find(b'\n', len(MAGIC))
    if header_end < 0:
        raise CheckpointIntegrityException(f'{path} has a truncated header')
    expected = content[len(MAGIC):header_end].decode('ascii', errors='replace')
    data = content[header_end + 1:]
    if hashlib.sha256(data).hexdigest() != expected:
        raise CheckpointIntegrityException(f'{path} failed the integrity check')

    # полезная нагрузка содержит словари конфигурации, не только тензоры
    payload = torch.load(io.BytesIO(data), map_location=device, weights_only=False)
    if payload.get('schema_version') != SCHEMA_VERSION:
        raise CheckpointSchemaException(f'Unsupported checkpoint schema {payload.get("schema_version")}')
    descriptor = payload['descriptor']
    if tuple(descriptor['label_names']) != tuple(catalog_names):
        raise CatalogMismatchException(f'Checkpoint labels {descriptor["label_names"]} do not match the catalog')

    model = build_model(descriptor['backbone'], descriptor['task'], descriptor['num_classes'],
                        descriptor['in_channels'], descriptor['input_size'], descriptor['label_names'], device)
    model.module.load_state_dict(payload['state_dict'])
    return Checkpoint(model, payload['optimizer_name'], payload['optimizer_state'], payload['config'],
                      payload['config_hash'], payload['extra'])
