# main/schemas/pipeline_schemas.py
"""
Pydantic схемы конфигурации прогона (TOML) и отчёта о прогоне.
"""
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .gateway_schemas import MockMode


class CorpusSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    train_dir: str
    test_dir: Optional[str] = None


class TaskSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    benchmark_id: str = "2018"
    few_shot_k: int = Field(default=8, ge=0)
    require_entities: bool = False


class SelectionSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_s: int = Field(default=3, ge=1)
    seed: int = 0


class GatewaySection(BaseModel):
    """
    Бэкенд генерации: ровно один из url / mock.

    Attributes:
        url: Адрес completions-сервера
        model_id: Чекпоинт (SFT или исходная модель)
        mock: Режим mock-бэкенда
        mock_text: Ответ для режима fixed
        mock_script: JSON файл предложение -> ответ для file_scripted
        fault_rate: Доля отказов для fault_inject
        mock_latency: Фиксированная задержка mock-ответа
        parallelism: Максимум одновременных запросов
        cache_dir: Общий кэш (по умолчанию <run_dir>/cache)
    """
    model_config = ConfigDict(extra="forbid")

    url: Optional[str] = None
    model_id: str = "llama2-13b-chat"
    mock: Optional[MockMode] = None
    mock_text: str = "[]"
    mock_script: Optional[str] = None
    fault_rate: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    mock_latency: float = Field(default=0.0, ge=0)
    parallelism: int = Field(default=4, ge=1)
    max_new_tokens: int = Field(default=128, ge=1)
    top_k: int = Field(default=1, ge=1)
    timeout: float = Field(default=120.0, gt=0)
    cache_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check_backend(self) -> "GatewaySection":
        if bool(self.url) == (self.mock is not None):
            raise ValueError("нужно задать ровно один бэкенд: [gateway] url или [gateway] mock")
        if self.mock == MockMode.FILE_SCRIPTED and not self.mock_script:
            raise ValueError("режим file_scripted требует mock_script")
        if self.mock == MockMode.FAULT_INJECT and self.fault_rate is None:
            raise ValueError("режим fault_inject требует fault_rate")
        if self.mock != MockMode.FAULT_INJECT and self.fault_rate is not None:
            raise ValueError("fault_rate допустим только для fault_inject")
        return self


class ExportSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    vocab_path: str
    max_tokens: int = Field(default=256, ge=1)
    include_failed: bool = False
    variant: str = Field(default="sft", pattern="^(sft|compact)$")
    model_label: str = "llama2-13B"


class CostSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_params: int = Field(default=13_015_864_320, ge=0)
    n_layer: int = Field(default=40, ge=0)
    n_ctx: int = Field(default=400, ge=0)
    d_attn: int = Field(default=4096, ge=0)
    n_tokens_out: int = Field(default=128, ge=0)
    encoder_flops: int = Field(default=44_000_000_000, ge=0)
    target_notes: int = Field(default=59_652, ge=0)
    sample_sizes: List[int] = Field(default_factory=list)


class RunConfig(BaseModel):
    """
    Полная конфигурация прогона.

    run_dir не входит в снапшот и хэш: снапшот лежит внутри run_dir.
    """
    model_config = ConfigDict(extra="forbid")

    run_dir: Optional[str] = None
    corpus: CorpusSection
    task: TaskSection = Field(default_factory=TaskSection)
    selection: SelectionSection = Field(default_factory=SelectionSection)
    gateway: GatewaySection
    export: ExportSection
    cost: CostSection = Field(default_factory=CostSection)

    def snapshot_data(self) -> dict:
        return self.model_dump(mode="json", exclude={"run_dir"}, exclude_none=True)


class StageStatus(str, Enum):
    COMPLETED = "completed"
    SKIPPED = "skipped"
    FAILED = "failed"


class StageReport(BaseModel):
    name: str
    status: StageStatus
    duration_s: float = 0.0
    summary: Dict[str, object] = Field(default_factory=dict)
    error: Optional[str] = None


class RunReport(BaseModel):
    """
    Отчёт о прогоне: этапы в порядке пайплайна и сводки артефактов.
    """
    run_dir: str
    config_hash: str
    stages: List[StageReport] = Field(default_factory=list)
    selection: Optional[dict] = None
    weak_labels: Optional[dict] = None
    export: Optional[dict] = None
    cost: Optional[dict] = None
    evaluations: Dict[str, dict] = Field(default_factory=dict)
    flags: List[str] = Field(default_factory=list)
    data_origin: str = "non-paper data"

    @property
    def failed_stage(self) -> Optional[StageReport]:
        return next((s for s in self.stages if s.status == StageStatus.FAILED), None)

    def stage(self, name: str) -> Optional[StageReport]:
        return next((s for s in self.stages if s.name == name), None)
