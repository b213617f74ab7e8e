# main/schemas/eval_schemas.py
"""
Pydantic схемы отчётов strict / lenient micro F1.
"""
from enum import Enum
from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field


class MatchMode(str, Enum):
    STRICT = "strict"
    LENIENT = "lenient"


MATCH_RULES = {
    MatchMode.STRICT: "exact (start, end, type)",
    MatchMode.LENIENT: "character overlap >= 1 and same type, one-to-one",
}


class MatchCounts(BaseModel):
    """Счётчики tp / fp / fn и производные метрики."""
    model_config = ConfigDict(frozen=True)

    tp: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)

    @property
    def precision(self) -> float:
        denominator = self.tp + self.fp
        return self.tp / denominator if denominator else 0.0

    @property
    def recall(self) -> float:
        denominator = self.tp + self.fn
        return self.tp / denominator if denominator else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(tp=self.tp + other.tp, fp=self.fp + other.fp, fn=self.fn + other.fn)

    def as_row(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
        }


class EvalReport(BaseModel):
    """
    Отчёт оценки для одного режима сопоставления.

    Attributes:
        mode: strict или lenient
        label: Текстовое описание правила сопоставления
        per_type: Счётчики по типам сущностей
        micro: Счётчики, просуммированные по всем заметкам
        per_note: Опциональная разбивка по заметкам
    """
    model_config = ConfigDict(frozen=True)

    mode: MatchMode
    label: str
    per_type: Dict[str, MatchCounts]
    micro: MatchCounts
    per_note: Optional[Dict[str, MatchCounts]] = None
    data_origin: str = "non-paper data"

    @property
    def f1(self) -> float:
        return self.micro.f1

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "label": self.label,
            "data_origin": self.data_origin,
            "per_type": {t: c.as_row() for t, c in self.per_type.items()},
            "micro": self.micro.as_row(),
            "per_note": None if self.per_note is None else {n: c.as_row() for n, c in self.per_note.items()},
        }
