import logging

LOG_FORMAT = '[%(asctime)s %(levelname)s %(filename)s line %(lineno)d] %(message)s'


def get_logger(name='safeaug'):
    """
    Возвращает логгер пакета с одним обработчиком потока.
    Повторный вызов не добавляет обработчики
    :param name: Имя логгера
    :type name: str
    :rtype: logging.Logger
    """
    logger = logging.getLogger(name)
    root = logging.getLogger('safeaug')
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
        root.setLevel(logging.INFO)
    return logger
