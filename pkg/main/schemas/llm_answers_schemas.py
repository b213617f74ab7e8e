# main/schemas/llm_answers_schemas.py
"""
Pydantic схемы для ответов LLM после пост-обработки.

Используются для хранения weak разметки по предложениям и учёта
провалов пост-обработки (строка "Post-processing failed" в отчёте).
"""
from enum import Enum
from typing import Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .corpus_schemas import DistributionSummary, Entity


class RawParsedEntity(BaseModel):
    """
    JSON-объект из ответа LLM до проверки span и типа.

    Attributes:
        text: Текст сущности (ключ "entity")
        entity_type: Тип сущности (ключ "entity_type"), не проверен по схеме
    """
    model_config = ConfigDict(frozen=True)

    text: str = Field(min_length=1, description="the text of entity: entity")
    entity_type: str = Field(min_length=1, description="the entity type: entity_type")


class WeakLabelStatus(str, Enum):
    OK = "ok"
    EMPTY = "empty"
    FAILED = "failed"


class WeakLabelResult(BaseModel):
    """
    Итог пост-обработки одного предложения.

    Attributes:
        note_id: Заметка
        sentence_index: Номер предложения в заметке
        status: ok / empty / failed
        entities: Weak сущности со смещениями уровня заметки
        parsed_count: Сколько объектов извлечено из ответа
        skipped_objects: Фрагменты в скобках без строковых entity/entity_type
        dropped_unrecovered: Тексты, не найденные в предложении
        dropped_bad_type: Сущности с типами вне схемы
        raw_text: Исходный ответ модели
        error: Ошибка транспорта, если запрос не удался
        latency: Время генерации в секундах
        from_cache: Ответ взят из кэша
    """
    model_config = ConfigDict(frozen=True)

    note_id: str
    sentence_index: int = Field(ge=0)
    status: WeakLabelStatus
    entities: Tuple[Entity, ...] = ()
    parsed_count: int = Field(default=0, ge=0)
    skipped_objects: int = Field(default=0, ge=0)
    dropped_unrecovered: int = Field(default=0, ge=0)
    dropped_bad_type: int = Field(default=0, ge=0)
    raw_text: str = ""
    error: Optional[str] = None
    latency: Optional[float] = Field(default=None, ge=0)
    from_cache: bool = False

    @model_validator(mode="after")
    def _check_status(self) -> "WeakLabelResult":
        if self.status != WeakLabelStatus.OK and self.entities:
            raise ValueError(f"статус {self.status.value} несовместим с непустым списком сущностей")
        return self

    @property
    def key(self) -> Tuple[str, int]:
        return self.note_id, self.sentence_index


class WeakLabelSet(BaseModel):
    """
    Weak разметка набора заметок: не более одного результата на предложение.

    Attributes:
        results: Результаты, упорядоченные по (note_id, sentence_index)
        provenance: model_id, digest шаблона и параметры генерации
    """
    model_config = ConfigDict(frozen=True)

    results: Tuple[WeakLabelResult, ...] = ()
    provenance: Dict[str, object] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_unique(self) -> "WeakLabelSet":
        keys = [r.key for r in self.results]
        if len(set(keys)) != len(keys):
            raise ValueError("несколько результатов для одного предложения")
        return self

    def by_key(self) -> Dict[Tuple[str, int], WeakLabelResult]:
        return {r.key: r for r in self.results}


class WeakLabelSummary(BaseModel):
    """Сводка weak разметки плюс счётчики пост-обработки."""
    model_config = ConfigDict(frozen=True)

    notes: int
    sentences: int
    ok_sentences: int
    empty_sentences: int
    failed_sentences: int
    failed_pct: float
    total_entities: int
    per_sentence: DistributionSummary
    per_note: DistributionSummary
    parsed_objects: int
    skipped_objects: int
    dropped_unrecovered: int
    dropped_bad_type: int
    transport_errors: int
    cache_hits: int
    data_origin: str = "non-paper data"

    def table_rows(self) -> Dict[str, str]:
        """Строки для CSV отчёта статистики."""
        return {
            "Notes": str(self.notes),
            "Sentences": str(self.sentences),
            "Total entities": str(self.total_entities),
            "Entities per sentence, median [Q1, Q3]": self.per_sentence.as_median_iqr(),
            "Entities per sentence, mean (Std Dev)": self.per_sentence.as_mean_sd(),
            "Entities per note, median [Q1, Q3]": self.per_note.as_median_iqr(),
            "Post-processing failed, sentences (%)": f"{self.failed_sentences} ({self.failed_pct:.2f}%)",
        }
