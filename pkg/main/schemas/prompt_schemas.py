# main/schemas/prompt_schemas.py
"""
Pydantic схемы шаблонов промптов в чат-формате Llama2 и SFT-записей.
"""
from typing import List, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .corpus_schemas import Note, TaskSchema

# Спецтокены чат-формата
BOS = "<s>"
EOS = "</s>"
INST_OPEN = "[INST]"
INST_CLOSE = "[/INST]"
SYS_OPEN = "<<SYS>>"
SYS_CLOSE = "<</SYS>>"
SPECIAL_TOKENS = (INST_OPEN, INST_CLOSE, SYS_OPEN, SYS_CLOSE)

ACKNOWLEDGEMENT = "Sure, I'd be happy to help!"
INPUT_PLACEHOLDER = "{input}"


class FewShotExample(BaseModel):
    """
    Пример для few-shot промпта: предложение и его gold сущности.

    Attributes:
        sentence_text: Текст предложения
        entities: Пары (текст сущности, тип) в порядке gold
    """
    model_config = ConfigDict(frozen=True)

    sentence_text: str
    entities: Tuple[Tuple[str, str], ...] = ()

    @model_validator(mode="after")
    def _check_substrings(self) -> "FewShotExample":
        for text, _ in self.entities:
            if text not in self.sentence_text:
                raise ValueError(f"текст сущности '{text}' не найден в предложении примера")
        return self

    @classmethod
    def from_sentence(cls, note: Note, index: int) -> "FewShotExample":
        """Строит пример из предложения заметки и её gold сущностей."""
        return cls(
            sentence_text=note.sentences[index].text,
            entities=tuple((e.text, e.entity_type) for e in note.sentence_entities(index)),
        )


class PromptTemplate(BaseModel):
    """
    Шаблон промпта: системный блок, инструкция и фиксированные примеры.

    Примеры отбираются один раз на прогон и переиспользуются для всех предложений.
    """
    model_config = ConfigDict(frozen=True)

    task: TaskSchema = Field(description="Схема задачи (типы сущностей и инструкция)")
    system_prompt: str
    instruction: str
    examples: Tuple[FewShotExample, ...] = ()

    @classmethod
    def for_task(cls, task: TaskSchema, examples: List[FewShotExample] = ()) -> "PromptTemplate":
        return cls(
            task=task,
            system_prompt=task.system_prompt,
            instruction=task.instruction,
            examples=tuple(examples),
        )


class SftRecord(BaseModel):
    """Одна запись SFT датасета: промпт до [/INST] включительно и completion."""
    model_config = ConfigDict(frozen=True)

    prompt: str
    completion: str


class SftManifest(BaseModel):
    """
    Манифест SFT датасета с гиперпараметрами дообучения Llama2.

    Attributes:
        record_count: Число записей (по одной на предложение gold-подмножества)
        note_ids: Заметки gold-подмножества
        template_digest: SHA-256 отрендеренного шаблона
    """
    model_config = ConfigDict(frozen=True)

    lr: float = 2e-5
    schedule: str = "cosine"
    weight_decay: float = 0.1
    seq_len: int = 4096
    epochs: int = 2
    batch_size: int = 1
    record_count: int
    note_ids: Tuple[str, ...]
    template_digest: str
    data_origin: str = "non-paper data"
