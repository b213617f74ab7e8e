# main/schemas/cost_schemas.py
"""
Pydantic схемы модели стоимости инференса.
"""
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field


class DecoderCostSpec(BaseModel):
    """
    Константы трансформера-декодера для оценки FLOPs.

    Attributes:
        n_params: Полное число параметров N
        n_layer: Число слоёв
        n_ctx: Длина контекста в токенах (длина шаблона промпта)
        d_attn: Размерность выхода внимания
        n_tokens_out: Число генерируемых токенов
    """
    model_config = ConfigDict(frozen=True)

    n_params: int = Field(ge=0)
    n_layer: int = Field(ge=0)
    n_ctx: int = Field(ge=0)
    d_attn: int = Field(ge=0)
    n_tokens_out: int = Field(ge=0)

    @classmethod
    def llama2_13b(cls) -> "DecoderCostSpec":
        return cls(n_params=13_015_864_320, n_layer=40, n_ctx=400, d_attn=4096, n_tokens_out=128)


class CostSample(BaseModel):
    """Замер: сколько GPU-секунд заняли note_count заметок."""
    model_config = ConfigDict(frozen=True)

    note_count: int = Field(ge=0)
    gpu_seconds: float = Field(ge=0)


class LinearFit(BaseModel):
    """Результат OLS: seconds = intercept + slope * notes."""
    model_config = ConfigDict(frozen=True)

    intercept: float
    slope: float
    r_squared: float

    def predict(self, notes: float) -> float:
        return self.intercept + self.slope * notes


class GpuTimeProjection(BaseModel):
    model_config = ConfigDict(frozen=True)

    notes: int = Field(ge=0)
    seconds: float = Field(ge=0)
    human: str
    clamped: bool = False


class LatencySummary(BaseModel):
    """Медиана и квартили времени на одну заметку."""
    model_config = ConfigDict(frozen=True)

    notes: int
    median: float
    q1: float
    q3: float


class CostReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    flops_per_sentence: int
    encoder_flops_per_sentence: int
    spec: DecoderCostSpec
    samples: Tuple[CostSample, ...] = ()
    fit: Optional[LinearFit] = None
    projection: Optional[GpuTimeProjection] = None
    encoder_projection: Optional[GpuTimeProjection] = None
    note_latency: Optional[LatencySummary] = None
    warnings: List[str] = Field(default_factory=list)
    data_origin: str = "non-paper data"
