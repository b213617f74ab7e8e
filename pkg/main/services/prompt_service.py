# main/services/prompt_service.py
"""
Сервис построения промптов в чат-формате Llama2.

Предоставляет функциональность для:
- Отбора few-shot примеров из gold-подмножества
- Рендеринга промпта для инференса и SFT-записей
- Экспорта SFT датасета с манифестом гиперпараметров
"""
import hashlib
import json
import logging
import random
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

from ..exceptions import PromptError
from ..schemas.corpus_schemas import Entity, Note
from ..schemas.prompt_schemas import (
    ACKNOWLEDGEMENT,
    BOS,
    EOS,
    INPUT_PLACEHOLDER,
    INST_CLOSE,
    INST_OPEN,
    SPECIAL_TOKENS,
    SYS_CLOSE,
    SYS_OPEN,
    FewShotExample,
    PromptTemplate,
    SftManifest,
    SftRecord,
)

logger = logging.getLogger(__name__)

LabelPairs = Iterable[Tuple[str, str]]


def serialize_labels(pairs: LabelPairs) -> str:
    """
    Сериализует пары (текст, тип) в JSON список шаблона.

    Формат байт-в-байт: [{"entity": "X", "entity_type": "Y"}, ...]
    """
    return json.dumps(
        [{"entity": text, "entity_type": entity_type} for text, entity_type in pairs],
        ensure_ascii=False,
    )


def _guard(text: str, what: str) -> None:
    found = [token for token in SPECIAL_TOKENS if token in text]
    if found:
        raise PromptError(f"{what} содержит спецтокены {found}: экранирование не поддерживается")


class PromptService:
    """Рендеринг шаблонов и SFT датасетов. Все методы чистые."""

    @staticmethod
    def sample_few_shot(corpus: Sequence[Note], k: int, seed: int,
                        require_entities: bool = False) -> List[FewShotExample]:
        """
        Отбирает k различных предложений с их gold сущностями.

        Args:
            corpus: Сегментированные заметки (обычно gold-подмножество)
            k: Число примеров (8 по умолчанию в конфиге)
            seed: Зерно генератора
            require_entities: Брать только предложения с сущностями

        Returns:
            list[FewShotExample]: Детерминированно по (corpus, k, seed)

        Raises:
            PromptError: Подходящих предложений меньше k

        Note:
            Предложения, которые задевает сущность через границу, и
            предложения со спецтокенами в примеры не попадают.
        """
        if k < 0:
            raise PromptError(f"k должно быть >= 0, получено {k}")
        if k == 0:
            return []

        candidates = []
        for note in sorted(corpus, key=lambda n: n.note_id):
            crossing = note.crossing_entities()
            for sentence in note.sentences:
                if any(e.start < sentence.end and sentence.start < e.end for e in crossing):
                    continue
                if any(token in sentence.text for token in SPECIAL_TOKENS):
                    continue
                if require_entities and not note.sentence_entities(sentence.index):
                    continue
                candidates.append((note, sentence.index))

        if len(candidates) < k:
            raise PromptError(f"Недостаточно предложений для {k} примеров: доступно {len(candidates)}")

        picked = random.Random(seed).sample(candidates, k)
        logger.debug(f"Отобрано {k} few-shot примеров (seed={seed})")
        return [FewShotExample.from_sentence(note, index) for note, index in picked]

    @staticmethod
    def render_head(template: PromptTemplate) -> str:
        """Системный блок, инструкция, подтверждение и все примеры."""
        parts = [
            f"{BOS}{INST_OPEN} {SYS_OPEN}\n{template.system_prompt}\n{SYS_CLOSE}\n"
            f"{template.instruction}{INST_CLOSE}\n\n{ACKNOWLEDGEMENT} {EOS}\n\n"
        ]
        for example in template.examples:
            parts.append(
                f"{BOS}{INST_OPEN} {example.sentence_text} {INST_CLOSE}\n\n"
                f"{serialize_labels(example.entities)} {EOS}\n\n"
            )
        return "".join(parts)

    @staticmethod
    def render_template(template: PromptTemplate) -> str:
        """Шаблон с плейсхолдером {input} (снапшот в директории прогона)."""
        return f"{PromptService.render_head(template)}{BOS}{INST_OPEN} {INPUT_PLACEHOLDER} {INST_CLOSE}"

    @staticmethod
    def template_digest(template: PromptTemplate) -> str:
        return hashlib.sha256(PromptService.render_template(template).encode("utf-8")).hexdigest()

    @staticmethod
    def render_inference_prompt(template: PromptTemplate, sentence: str) -> str:
        """
        Промпт для одного предложения; заканчивается на `[/INST]`.

        Raises:
            PromptError: Пустое предложение или спецтокен внутри него
        """
        if not sentence:
            raise PromptError("Пустое предложение нельзя подставить в промпт")
        _guard(sentence, "Предложение")
        return f"{PromptService.render_head(template)}{BOS}{INST_OPEN} {sentence} {INST_CLOSE}"

    @staticmethod
    def render_sft_record(template: PromptTemplate, sentence: str,
                          gold: Sequence[Entity]) -> SftRecord:
        """
        SFT-запись: промпт инференса плюс gold метки после `[/INST]`.

        Raises:
            PromptError: Текст gold сущности отсутствует в предложении
        """
        for entity in gold:
            if entity.text not in sentence:
                raise PromptError(f"Gold сущность '{entity.text}' отсутствует в предложении")
        prompt = PromptService.render_inference_prompt(template, sentence)
        completion = f"{serialize_labels((e.text, e.entity_type) for e in gold)} {EOS}"
        return SftRecord(prompt=prompt, completion=completion)

    @staticmethod
    def export_sft_dataset(notes: Sequence[Note], template: PromptTemplate, path) -> SftManifest:
        """
        Пишет SFT датасет (JSON-Lines {"prompt", "completion"}) по gold-подмножеству.

        Returns:
            SftManifest: Гиперпараметры SFT и число записей

        Raises:
            PromptError: Пустое подмножество
        """
        if not notes:
            raise PromptError("Пустое gold-подмножество: нечего экспортировать для SFT")

        ordered = sorted(notes, key=lambda n: n.note_id)
        count = 0
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            for note in ordered:
                for sentence in note.sentences:
                    record = PromptService.render_sft_record(
                        template, sentence.text, note.sentence_entities(sentence.index)
                    )
                    handle.write(json.dumps(record.model_dump(), ensure_ascii=False) + "\n")
                    count += 1

        logger.info(f"SFT датасет: {count} записей из {len(ordered)} заметок -> {path}")
        return SftManifest(
            record_count=count,
            note_ids=tuple(n.note_id for n in ordered),
            template_digest=PromptService.template_digest(template),
        )


def template_to_json(template: PromptTemplate) -> str:
    return template.model_dump_json(indent=2)


def template_from_json(payload: Union[str, bytes]) -> PromptTemplate:
    return PromptTemplate.model_validate_json(payload)


def write_template(template: PromptTemplate, directory) -> None:
    """Сохраняет шаблон как текст (для аудита) и как JSON (для resume)."""
    directory = Path(directory)
    (directory / "template.txt").write_text(PromptService.render_template(template), encoding="utf-8")
    (directory / "template.json").write_text(template_to_json(template), encoding="utf-8")


def read_template(directory) -> PromptTemplate:
    return template_from_json((Path(directory) / "template.json").read_text(encoding="utf-8"))
