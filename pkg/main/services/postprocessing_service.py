# main/services/postprocessing_service.py
"""
Пост-обработка ответов LLM в weak сущности.

Четыре шага:
1. Текст после последнего `[/INST]`, обрезанный на новом `[INST]` или `</s>`
2. Поиск фрагментов `{...}` (нежадно) и разбор каждого как JSON-объекта
3. Поиск span по точному, регистрозависимому совпадению текста
4. Отбрасывание типов, которых нет в схеме задачи
"""
import json
import logging
import re
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from ..schemas.corpus_schemas import Entity, EntitySource, Sentence, TaskSchema
from ..schemas.gateway_schemas import GenerationResult
from ..schemas.llm_answers_schemas import (
    RawParsedEntity,
    WeakLabelResult,
    WeakLabelSet,
    WeakLabelStatus,
    WeakLabelSummary,
)
from ..schemas.prompt_schemas import EOS, INST_CLOSE, INST_OPEN
from .corpus_service import read_text_file, summarize_counts

logger = logging.getLogger(__name__)

_OBJECT_RE = re.compile(r"\{.*?\}", re.DOTALL)
_EMPTY_LIST_RE = re.compile(r"^\s*\[\s*\]\s*$")


class PostprocessingService:
    """Шаги пост-обработки и их композиция. Все методы чистые."""

    @staticmethod
    def extract_generated(raw: str) -> str:
        """Шаг 1: текст после последнего `[/INST]` до первого `[INST]` или `</s>`."""
        anchor = raw.rfind(INST_CLOSE)
        payload = raw[anchor + len(INST_CLOSE):] if anchor >= 0 else raw
        cuts = [i for i in (payload.find(INST_OPEN), payload.find(EOS)) if i >= 0]
        return payload[:min(cuts)] if cuts else payload

    @staticmethod
    def mine_json_objects(payload: str) -> Tuple[List[RawParsedEntity], int]:
        """
        Шаг 2 со счётчиком пропусков.

        Returns:
            (объекты по порядку, число фрагментов без строковых entity/entity_type)
        """
        parsed = []
        skipped = 0
        for match in _OBJECT_RE.finditer(payload):
            try:
                candidate = json.loads(match.group(0))
            except ValueError:
                skipped += 1
                continue
            text = candidate.get("entity") if isinstance(candidate, dict) else None
            entity_type = candidate.get("entity_type") if isinstance(candidate, dict) else None
            if not isinstance(text, str) or not isinstance(entity_type, str) or not text or not entity_type:
                skipped += 1
                continue
            parsed.append(RawParsedEntity(text=text, entity_type=entity_type))
        return parsed, skipped

    @staticmethod
    def extract_json_objects(payload: str) -> List[RawParsedEntity]:
        """Шаг 2: объекты `{...}` с ключами entity и entity_type, порядок сохраняется."""
        return PostprocessingService.mine_json_objects(payload)[0]

    @staticmethod
    def recover_spans(sentence: Union[str, Sentence],
                      parsed: Sequence[RawParsedEntity]) -> Tuple[List[Entity], int]:
        """
        Шаг 3: находит span каждого текста в предложении.

        Для повторяющегося текста берётся самое левое вхождение, начало которого
        ещё не занято тем же текстом. Смещения уровня заметки, если передан
        Sentence, иначе относительно строки.

        Returns:
            (сущности, число ненайденных текстов)
        """
        text, offset = (sentence.text, sentence.start) if isinstance(sentence, Sentence) else (sentence, 0)
        consumed: Dict[str, set] = {}
        entities = []
        dropped = 0

        for item in parsed:
            used = consumed.setdefault(item.text, set())
            position = text.find(item.text)
            while position >= 0 and position in used:
                position = text.find(item.text, position + 1)
            if position < 0:
                dropped += 1
                continue
            used.add(position)
            entities.append(Entity(
                start=offset + position,
                end=offset + position + len(item.text),
                text=item.text,
                entity_type=item.entity_type,
                source=EntitySource.WEAK,
            ))
        return entities, dropped

    @staticmethod
    def filter_types(entities: Sequence[Entity], schema: TaskSchema) -> Tuple[List[Entity], int]:
        """Шаг 4: оставляет только типы из схемы."""
        kept = [e for e in entities if schema.has_type(e.entity_type)]
        return kept, len(entities) - len(kept)

    @staticmethod
    def distill_sentence(note_id: str, sentence: Sentence, raw: str, schema: TaskSchema) -> WeakLabelResult:
        """
        Композиция шагов 1-4 для одного предложения. Никогда не бросает исключений.

        Статусы:
            empty: объектов нет, а ответ совпадает с пустым списком `[]`
            failed: объектов нет, а ответ непустой и не `[]`
            ok: иначе (в том числе когда все объекты отброшены или ответ пуст)
        """
        payload = PostprocessingService.extract_generated(raw)
        parsed, skipped = PostprocessingService.mine_json_objects(payload)
        recovered, dropped_unrecovered = PostprocessingService.recover_spans(sentence, parsed)
        kept, dropped_bad_type = PostprocessingService.filter_types(recovered, schema)

        if parsed:
            status = WeakLabelStatus.OK
        elif _EMPTY_LIST_RE.match(payload):
            status = WeakLabelStatus.EMPTY
        elif payload.strip():
            status = WeakLabelStatus.FAILED
        else:
            # пустой ответ: ни провал, ни пустой список
            status = WeakLabelStatus.OK

        return WeakLabelResult(
            note_id=note_id,
            sentence_index=sentence.index,
            status=status,
            entities=tuple(kept) if status == WeakLabelStatus.OK else (),
            parsed_count=len(parsed),
            skipped_objects=skipped,
            dropped_unrecovered=dropped_unrecovered,
            dropped_bad_type=dropped_bad_type,
            raw_text=raw,
        )

    @staticmethod
    def distill_batch(items: Sequence[Tuple[str, Sentence]], results: Sequence[GenerationResult],
                      schema: TaskSchema, provenance: Optional[dict] = None) -> WeakLabelSet:
        """
        Превращает результаты пакетной генерации в WeakLabelSet.

        Упавшие слоты (ошибка транспорта) получают статус failed и текст ошибки.
        """
        if len(items) != len(results):
            raise ValueError(f"число предложений {len(items)} != числу результатов {len(results)}")

        distilled = []
        for (note_id, sentence), generation in zip(items, results):
            if not generation.ok:
                distilled.append(WeakLabelResult(
                    note_id=note_id,
                    sentence_index=sentence.index,
                    status=WeakLabelStatus.FAILED,
                    error=generation.error,
                ))
                continue
            result = PostprocessingService.distill_sentence(note_id, sentence, generation.text, schema)
            distilled.append(result.model_copy(update={
                "latency": generation.latency,
                "from_cache": generation.from_cache,
            }))

        distilled.sort(key=lambda r: r.key)
        return WeakLabelSet(results=tuple(distilled), provenance=provenance or {})


def summarize_weak_labels(results: Iterable[WeakLabelResult]) -> WeakLabelSummary:
    """Сводка weak разметки с учётом провалов пост-обработки."""
    results = list(results)
    per_note: Dict[str, int] = {}
    for result in results:
        per_note[result.note_id] = per_note.get(result.note_id, 0) + len(result.entities)

    failed = sum(1 for r in results if r.status == WeakLabelStatus.FAILED)
    return WeakLabelSummary(
        notes=len(per_note),
        sentences=len(results),
        ok_sentences=sum(1 for r in results if r.status == WeakLabelStatus.OK),
        empty_sentences=sum(1 for r in results if r.status == WeakLabelStatus.EMPTY),
        failed_sentences=failed,
        failed_pct=100.0 * failed / len(results) if results else 0.0,
        total_entities=sum(per_note.values()),
        per_sentence=summarize_counts(len(r.entities) for r in results),
        per_note=summarize_counts(per_note.values()),
        parsed_objects=sum(r.parsed_count for r in results),
        skipped_objects=sum(r.skipped_objects for r in results),
        dropped_unrecovered=sum(r.dropped_unrecovered for r in results),
        dropped_bad_type=sum(r.dropped_bad_type for r in results),
        transport_errors=sum(1 for r in results if r.error is not None),
        cache_hits=sum(1 for r in results if r.from_cache),
    )


def write_weak_label_set(weak: WeakLabelSet, jsonl_path, summary_path) -> WeakLabelSummary:
    """
    Пишет результаты по предложениям (JSON-Lines) и сводку (JSON).

    Returns:
        WeakLabelSummary: Записанная сводка
    """
    with open(jsonl_path, "w", encoding="utf-8", newline="\n") as handle:
        for result in weak.results:
            record = {
                "note_id": result.note_id,
                "sentence_index": result.sentence_index,
                "status": result.status.value,
                "entities": [
                    {"start": e.start, "end": e.end, "text": e.text, "type": e.entity_type, "source": e.source.value}
                    for e in result.entities
                ],
                "parsed_count": result.parsed_count,
                "skipped_objects": result.skipped_objects,
                "dropped_unrecovered": result.dropped_unrecovered,
                "dropped_bad_type": result.dropped_bad_type,
                "raw_text": result.raw_text,
                "error": result.error,
                "latency": result.latency,
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")

    summary = summarize_weak_labels(weak.results)
    payload = {
        "provenance": weak.provenance,
        "table": summary.table_rows(),
        "summary": summary.model_dump(mode="json", exclude={"cache_hits"}),
    }
    Path(summary_path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return summary


def read_weak_label_set(jsonl_path, summary_path=None) -> WeakLabelSet:
    """Читает WeakLabelSet, записанный write_weak_label_set."""
    results = []
    for line in read_text_file(Path(jsonl_path)).splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        results.append(WeakLabelResult(
            note_id=record["note_id"],
            sentence_index=record["sentence_index"],
            status=record["status"],
            entities=tuple(
                Entity(start=e["start"], end=e["end"], text=e["text"], entity_type=e["type"], source=e["source"])
                for e in record["entities"]
            ),
            parsed_count=record.get("parsed_count", 0),
            skipped_objects=record.get("skipped_objects", 0),
            dropped_unrecovered=record["dropped_unrecovered"],
            dropped_bad_type=record["dropped_bad_type"],
            raw_text=record.get("raw_text", ""),
            error=record.get("error"),
            latency=record.get("latency"),
        ))

    provenance = {}
    if summary_path is not None and Path(summary_path).exists():
        provenance = json.loads(Path(summary_path).read_text(encoding="utf-8")).get("provenance", {})
    return WeakLabelSet(results=tuple(results), provenance=provenance)
