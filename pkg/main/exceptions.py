# main/exceptions.py
"""
Иерархия ошибок пайплайна.

Management-команды сопоставляют ConfigError с кодом выхода 2,
а StageError с кодом выхода 3.
"""
from typing import Optional


class WeakLabelError(Exception):
    """Базовая ошибка приложения."""


class CorpusParseError(WeakLabelError, ValueError):
    """
    Ошибка разбора аннотированного корпуса.

    Attributes:
        line_no: Номер строки .ann/.jsonl файла (1-based), если известен
    """

    def __init__(self, message: str, line_no: Optional[int] = None):
        if line_no is not None:
            message = f"строка {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ConfigError(WeakLabelError, ValueError):
    """Некорректная конфигурация прогона, отсутствующий снапшот или дрейф конфига."""


class PromptError(WeakLabelError, ValueError):
    """Ошибка построения промпта или SFT-записи."""


class GatewayError(WeakLabelError, RuntimeError):
    """
    Ошибка обращения к серверу генерации.

    Attributes:
        attempts: Сколько попыток было сделано
        status: HTTP статус ответа (для не-2xx)
        body: Начало тела ответа
    """

    def __init__(self, message: str, attempts: int = 1,
                 status: Optional[int] = None, body: str = ""):
        super().__init__(message)
        self.attempts = attempts
        self.status = status
        self.body = body


class TransportError(WeakLabelError, ConnectionError):
    """Сбой транспорта (таймаут, обрыв соединения). Повторяется с backoff."""


class ExportError(WeakLabelError, ValueError):
    """
    Ошибка экспорта обучающих данных или чтения BIO файла.

    Attributes:
        line_no: Номер строки BIO файла (1-based), если известен
    """

    def __init__(self, message: str, line_no: Optional[int] = None):
        if line_no is not None:
            message = f"строка {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class EvaluationError(WeakLabelError, ValueError):
    """
    Ошибка оценки предсказаний.

    Attributes:
        line_no: Номер строки файла предсказаний (1-based), если известен
    """

    def __init__(self, message: str, line_no: Optional[int] = None):
        if line_no is not None:
            message = f"строка {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class CostModelError(WeakLabelError, ValueError):
    """Вырожденные данные для модели стоимости."""


class StageError(WeakLabelError, RuntimeError):
    """
    Сбой одного из этапов пайплайна.

    Attributes:
        stage: Имя упавшего этапа
    """

    def __init__(self, stage: str, message: str):
        super().__init__(f"этап '{stage}': {message}")
        self.stage = stage
