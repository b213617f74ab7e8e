# main/schemas/selection_schemas.py
"""
Pydantic схема выбора репрезентативного gold-подмножества заметок.
"""
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class SubsetSelection(BaseModel):
    """
    Результат отбора: gold заметки и остальные (weak) заметки.

    Attributes:
        n_s: Запрошенный размер gold-подмножества
        median_entities: Медиана числа gold сущностей по всем заметкам
        gold_ids: Отобранные заметки в порядке ранжирования
        weak_ids: Остальные заметки, отсортированные по note_id
        warning: Предупреждение (например, n_s больше числа заметок)
    """
    model_config = ConfigDict(frozen=True)

    n_s: int = Field(ge=1)
    median_entities: float
    gold_ids: Tuple[str, ...]
    weak_ids: Tuple[str, ...]
    warning: Optional[str] = None

    @model_validator(mode="after")
    def _check_partition(self) -> "SubsetSelection":
        if set(self.gold_ids) & set(self.weak_ids):
            raise ValueError("gold_ids и weak_ids пересекаются")
        if len(set(self.gold_ids)) != len(self.gold_ids) or len(set(self.weak_ids)) != len(self.weak_ids):
            raise ValueError("повторяющиеся идентификаторы заметок в выборке")
        return self

    @property
    def all_ids(self) -> Tuple[str, ...]:
        return tuple(sorted(self.gold_ids + self.weak_ids))
