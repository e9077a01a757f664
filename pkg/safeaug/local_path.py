import os
from pathlib import Path

DATA_ROOT_ENV = 'SAFEAUG_DATA_ROOT'


def get_local_path(value: str) -> Path:
    """
    Преобразует строковый локальный путь в объект Path
    :param value: строковый локальный путь относительно папки safeaug
    :return: объект Path
    """
    return Path(__file__).parent.joinpath(value)


def get_data_root(value=None) -> Path:
    """
    Возвращает папку с датасетами. Приоритет: переданное значение, переменная окружения SAFEAUG_DATA_ROOT,
    папка ./data в текущей директории
    :param value: Явно указанный путь или None
    :type value: str or Path or None
    :return: Путь к папке с данными
    :rtype: Path
    """
    if value is not None:
        return Path(value)
    env_value = os.environ.get(DATA_ROOT_ENV)
    if env_value:
        return Path(env_value)
    return Path.cwd().joinpath('data')
