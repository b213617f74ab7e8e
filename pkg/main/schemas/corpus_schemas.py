# main/schemas/corpus_schemas.py
"""
Pydantic схемы документной модели корпуса.

Note / Sentence / Entity привязаны к символьным смещениям (Unicode code
points, не байты) и используются и для gold, и для weak разметки.
Все модели неизменяемы после создания.
"""
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class EntitySource(str, Enum):
    """Происхождение сущности: ручная (gold) или сгенерированная LLM (weak)."""
    GOLD = "gold"
    WEAK = "weak"


class TaskSchema(BaseModel):
    """
    Описание задачи NER для одного бенчмарка.

    Attributes:
        task_id: Идентификатор бенчмарка ("2012", "2014", "2018")
        entity_types: Упорядоченный набор типов сущностей (регистр важен)
        instruction: Текст инструкции для промпта
        system_prompt: Системный промпт (роль модели)
    """
    model_config = ConfigDict(frozen=True)

    task_id: str
    entity_types: Tuple[str, ...]
    instruction: str
    system_prompt: str

    @field_validator("entity_types")
    @classmethod
    def _check_types(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        if not value:
            raise ValueError("entity_types не может быть пустым")
        if len(set(value)) != len(value):
            raise ValueError(f"entity_types содержит дубликаты: {value}")
        if any(not t for t in value):
            raise ValueError("пустое имя типа сущности")
        return value

    def has_type(self, entity_type: str) -> bool:
        return entity_type in self.entity_types


class Entity(BaseModel):
    """
    Сущность, привязанная к полуинтервалу [start, end) текста.

    Attributes:
        start: Смещение начала (включительно, 0-based)
        end: Смещение конца (не включительно)
        text: Поверхностная строка, len(text) == end - start
        entity_type: Тип сущности
        source: gold или weak
    """
    model_config = ConfigDict(frozen=True)

    start: int = Field(ge=0)
    end: int
    text: str
    entity_type: str
    source: EntitySource = EntitySource.GOLD

    @model_validator(mode="after")
    def _check_span(self) -> "Entity":
        if self.end <= self.start:
            raise ValueError(f"пустой или обратный span [{self.start}, {self.end})")
        if len(self.text) != self.end - self.start:
            raise ValueError(
                f"длина текста '{self.text}' не совпадает со span [{self.start}, {self.end})"
            )
        return self

    @property
    def key(self) -> Tuple[int, int, str]:
        """Ключ строгого сравнения (start, end, type)."""
        return self.start, self.end, self.entity_type

    def shifted(self, offset: int) -> "Entity":
        """Копия сущности, сдвинутая на offset символов."""
        return self.model_copy(update={"start": self.start + offset, "end": self.end + offset})


class Sentence(BaseModel):
    """Предложение заметки: полуинтервал [start, end) и его текст."""
    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=0)
    start: int = Field(ge=0)
    end: int
    text: str

    @model_validator(mode="after")
    def _check_span(self) -> "Sentence":
        if self.end < self.start or len(self.text) != self.end - self.start:
            raise ValueError(f"некорректный span предложения [{self.start}, {self.end})")
        return self

    def contains(self, entity: Entity) -> bool:
        return self.start <= entity.start and entity.end <= self.end


class Note(BaseModel):
    """
    Клиническая заметка с сегментацией и gold-разметкой.

    Attributes:
        note_id: Идентификатор заметки (имя файла без расширения)
        text: Полный текст документа
        sentences: Предложения (пусто до segment_sentences)
        gold_entities: Gold сущности, отсортированные по (start, end)
    """
    model_config = ConfigDict(frozen=True)

    note_id: str
    text: str
    sentences: Tuple[Sentence, ...] = ()
    gold_entities: Tuple[Entity, ...] = ()

    @model_validator(mode="after")
    def _check_entities(self) -> "Note":
        previous = None
        for entity in self.gold_entities:
            if entity.end > len(self.text):
                raise ValueError(f"{self.note_id}: сущность [{entity.start}, {entity.end}) за пределами текста")
            if self.text[entity.start:entity.end] != entity.text:
                raise ValueError(
                    f"{self.note_id}: текст сущности '{entity.text}' не совпадает "
                    f"с подстрокой [{entity.start}, {entity.end})"
                )
            if previous is not None and (entity.start, entity.end) < previous:
                raise ValueError(f"{self.note_id}: gold сущности не отсортированы по (start, end)")
            previous = (entity.start, entity.end)
        for sentence in self.sentences:
            if self.text[sentence.start:sentence.end] != sentence.text:
                raise ValueError(f"{self.note_id}: текст предложения {sentence.index} не совпадает с заметкой")
        return self

    @property
    def is_segmented(self) -> bool:
        return bool(self.sentences)

    def sentence_entities(self, index: int) -> List[Entity]:
        """Gold сущности, целиком лежащие внутри предложения index."""
        sentence = self.sentences[index]
        return [e for e in self.gold_entities if sentence.contains(e)]

    def crossing_entities(self) -> List[Entity]:
        """Gold сущности, не попадающие целиком ни в одно предложение."""
        return [e for e in self.gold_entities if not any(s.contains(e) for s in self.sentences)]


class DistributionSummary(BaseModel):
    """Сводка распределения счётчиков: медиана, квартили, среднее, SD."""
    model_config = ConfigDict(frozen=True)

    median: float
    q1: float
    q3: float
    mean: float
    sd: float = Field(ge=0)

    def as_median_iqr(self) -> str:
        """Формат 'median [Q1, Q3]'."""
        return f"{_fmt(self.median)} [{_fmt(self.q1)}, {_fmt(self.q3)}]"

    def as_mean_sd(self) -> str:
        """Формат 'mean (Std Dev)'."""
        return f"{self.mean:.2f} ({self.sd:.2f})"


class EntityStats(BaseModel):
    """
    Сводная статистика корпуса или weak разметки.

    Attributes:
        note_count: Количество заметок
        sentence_count: Количество предложений
        total_entities: Сумма сущностей по заметкам
        per_sentence: Распределение числа сущностей на предложение
        per_note: Распределение числа сущностей на заметку
        failed_sentence_pct: Доля предложений с провалом пост-обработки (только для weak)
        crossing_entities: Gold сущности, пересекающие границу предложения
        per_type: Количество сущностей по типам
    """
    model_config = ConfigDict(frozen=True)

    note_count: int
    sentence_count: int
    total_entities: int
    per_sentence: DistributionSummary
    per_note: DistributionSummary
    failed_sentence_pct: Optional[float] = None
    crossing_entities: int = 0
    per_type: Dict[str, int] = Field(default_factory=dict)


def _fmt(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else f"{value:g}"
