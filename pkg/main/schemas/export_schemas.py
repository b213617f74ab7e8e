# main/schemas/export_schemas.py
"""
Pydantic схемы экспорта обучающих данных: subword токены, BIO примеры
и двухэтапный манифест дообучения (weak, затем gold).
"""
import re
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

_TAG_RE = re.compile(r"^(O|[BI]-.+)$")


class SubwordToken(BaseModel):
    """
    Кусок WordPiece со смещениями относительно предложения.

    Attributes:
        text: Кусок словаря (с префиксом ## для продолжений) или [UNK]
        start: Начало в тексте предложения
        end: Конец (не включительно)
        is_continuation: Продолжение слова
    """
    model_config = ConfigDict(frozen=True)

    text: str
    start: int = Field(ge=0)
    end: int
    is_continuation: bool = False

    @model_validator(mode="after")
    def _check_span(self) -> "SubwordToken":
        if self.end <= self.start:
            raise ValueError(f"пустой span токена [{self.start}, {self.end})")
        return self


class BioExample(BaseModel):
    """
    Одно предложение в BIO разметке.

    Attributes:
        note_id: Заметка
        sentence_index: Номер предложения
        sentence_start: Смещение предложения в заметке
        sentence_text: Текст предложения (нужен для from_bio)
        tokens: Subword токены (смещения относительно предложения)
        tags: O / B-<type> / I-<type>, по одному на токен
        truncated: Пример обрезан до max_tokens
        dropped_overlap: Сущности, отброшенные при разрешении пересечений
        dropped_truncated: Сущности, частично попавшие за обрезку
        dropped_no_tokens: Сущности, не покрывающие ни одного токена (только пробелы)
    """
    model_config = ConfigDict(frozen=True)

    note_id: str
    sentence_index: int = Field(ge=0)
    sentence_start: int = Field(default=0, ge=0)
    sentence_text: str
    tokens: Tuple[SubwordToken, ...]
    tags: Tuple[str, ...]
    truncated: bool = False
    dropped_overlap: int = Field(default=0, ge=0)
    dropped_truncated: int = Field(default=0, ge=0)
    dropped_no_tokens: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_lengths(self) -> "BioExample":
        if len(self.tokens) != len(self.tags):
            raise ValueError(f"число тегов {len(self.tags)} != числу токенов {len(self.tokens)}")
        bad = [t for t in self.tags if not _TAG_RE.match(t)]
        if bad:
            raise ValueError(f"некорректные теги: {bad[:3]}")
        return self


class StageHyperparameters(BaseModel):
    """Строка каталога гиперпараметров."""
    model_config = ConfigDict(frozen=True)

    validation_ratio: float
    input_token_length: int = 256
    learning_rate: float = 2e-6
    batch_size: int


class TrainingStage(BaseModel):
    """
    Этап дообучения энкодера.

    Attributes:
        name: "weak" или "gold"
        run_name: Имя прогона, например Bert_gold3
        source: Путь к BIO файлу относительно директории прогона
        notes: Заметки этапа
        train_notes: Заметки обучающей части
        validation_notes: Заметки валидационной части
        sentence_count: Число BIO примеров в файле
    """
    model_config = ConfigDict(frozen=True)

    name: str
    run_name: str
    source: str
    notes: Tuple[str, ...]
    train_notes: Tuple[str, ...] = ()
    validation_notes: Tuple[str, ...] = ()
    sentence_count: int = 0
    hyperparameters: StageHyperparameters


class TrainingManifest(BaseModel):
    """
    Двухэтапный рецепт: сначала weak, затем gold. Обучение выполняется вне пакета.
    """
    model_config = ConfigDict(frozen=True)

    benchmark_id: str
    n_s: int
    variant: str
    stages: Tuple[TrainingStage, ...]
    early_stop_patience: int = 8
    checkpoint_selection: str = "best-validation"
    excluded_failed_sentences: int = 0
    dropped_overlap: int = 0
    dropped_truncated: int = 0
    dropped_no_tokens: int = 0
    truncated_examples: int = 0
    data_origin: str = "non-paper data"

    @model_validator(mode="after")
    def _check_order(self) -> "TrainingManifest":
        names = [s.name for s in self.stages]
        if names not in (["weak", "gold"], ["gold"], ["weak"]):
            raise ValueError(f"недопустимый порядок этапов: {names}")
        return self

    def stage(self, name: str) -> Optional[TrainingStage]:
        return next((s for s in self.stages if s.name == name), None)
