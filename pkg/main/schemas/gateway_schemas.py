# main/schemas/gateway_schemas.py
"""
Pydantic схемы для обращения к серверу генерации текста.
"""
from enum import Enum
from typing import Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class GenerationRequest(BaseModel):
    """
    Параметры одного вызова LLM.

    Attributes:
        model_id: Идентификатор модели (чекпоинт SFT или исходная модель)
        prompt: Полностью отрендеренный промпт
        max_new_tokens: Лимит генерации (128 токенов)
        top_k: Параметр top-k (1 = жадное декодирование)
        stop: Стоп-последовательности
    """
    model_config = ConfigDict(frozen=True)

    model_id: str
    prompt: str
    max_new_tokens: int = Field(default=128, ge=1)
    top_k: int = Field(default=1, ge=1)
    stop: Tuple[str, ...] = ("</s>",)

    def canonical(self) -> dict:
        """Каноническое представление для ключа кэша и файла кэша."""
        return {
            "model_id": self.model_id,
            "prompt": self.prompt,
            "max_new_tokens": self.max_new_tokens,
            "top_k": self.top_k,
            "stop": list(self.stop),
        }


class GenerationResult(BaseModel):
    """
    Результат вызова. Для упавшего слота text пустой, latency None, error заполнен.
    """
    model_config = ConfigDict(frozen=True)

    text: str = ""
    latency: Optional[float] = Field(default=None, ge=0)
    from_cache: bool = False
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class MockMode(str, Enum):
    ECHO_GOLD = "echo_gold"
    FIXED = "fixed"
    FILE_SCRIPTED = "file_scripted"
    FAULT_INJECT = "fault_inject"


class MockScript(BaseModel):
    """
    Описание детерминированного mock-бэкенда.

    Attributes:
        mode: Режим mock
        fault_rate: Доля отказов (только для fault_inject)
        seed: Зерно для воспроизводимого паттерна отказов
        text: Ответ для режима fixed
        script: Словарь предложение -> сырой ответ для file_scripted
        latency: Фиксированная "задержка" ответа в секундах
    """
    model_config = ConfigDict(frozen=True)

    mode: MockMode
    fault_rate: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    seed: int = 0
    text: str = "[]"
    script: Dict[str, str] = Field(default_factory=dict)
    latency: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _check_fault_rate(self) -> "MockScript":
        if self.mode == MockMode.FAULT_INJECT and self.fault_rate is None:
            raise ValueError("для fault_inject нужно задать fault_rate")
        if self.mode != MockMode.FAULT_INJECT and self.fault_rate is not None:
            raise ValueError("fault_rate допустим только для режима fault_inject")
        return self
