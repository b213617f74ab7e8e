# main/services/evaluation_service.py
"""
Оценка предсказаний: strict и lenient micro precision / recall / F1.

strict: совпадают (start, end, type).
lenient: span пересекаются хотя бы на один символ и тип совпадает;
сопоставление один-к-одному максимальной мощности.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from ..exceptions import EvaluationError, ExportError
from ..schemas.corpus_schemas import Entity, EntitySource, Note
from ..schemas.eval_schemas import MATCH_RULES, EvalReport, MatchCounts, MatchMode
from .corpus_service import read_text_file
from .export_service import ExportService, read_bio_file

logger = logging.getLogger(__name__)

Pairs = List[Tuple[int, int]]
EntitiesByNote = Dict[str, List[Entity]]


def _overlap(a: Entity, b: Entity) -> int:
    return min(a.end, b.end) - max(a.start, b.start)


class EvaluationService:
    """Сопоставление сущностей и micro-усреднение."""

    @staticmethod
    def match_entities(gold: Sequence[Entity], pred: Sequence[Entity],
                       mode: MatchMode) -> Tuple[int, int, int, Pairs]:
        """
        Сопоставляет сущности одной заметки один-к-одному.

        Returns:
            (tp, fp, fn, пары (индекс gold, индекс pred))
        """
        mode = MatchMode(mode)
        if mode == MatchMode.STRICT:
            pairs = EvaluationService._strict_pairs(gold, pred)
        else:
            pairs = EvaluationService._lenient_pairs(gold, pred)
        tp = len(pairs)
        return tp, len(pred) - tp, len(gold) - tp, pairs

    @staticmethod
    def _strict_pairs(gold: Sequence[Entity], pred: Sequence[Entity]) -> Pairs:
        free: Dict[tuple, List[int]] = {}
        for j, entity in enumerate(pred):
            free.setdefault(entity.key, []).append(j)
        pairs = []
        for i, entity in enumerate(gold):
            candidates = free.get(entity.key)
            if candidates:
                pairs.append((i, candidates.pop(0)))
        return pairs

    @staticmethod
    def _lenient_pairs(gold: Sequence[Entity], pred: Sequence[Entity]) -> Pairs:
        # кандидаты в порядке предпочтения: большее пересечение, затем раннее начало
        candidates = [
            sorted(
                (j for j, p in enumerate(pred) if p.entity_type == g.entity_type and _overlap(g, p) >= 1),
                key=lambda j, g=g: (-_overlap(g, pred[j]), pred[j].start, j),
            )
            for g in gold
        ]

        owner: Dict[int, int] = {}
        for i, options in enumerate(candidates):
            for j in options:
                if j not in owner:
                    owner[j] = i
                    break

        matched = set(owner.values())

        def _augment(i: int, visited: set) -> bool:
            for j in candidates[i]:
                if j in visited:
                    continue
                visited.add(j)
                if j not in owner or _augment(owner[j], visited):
                    owner[j] = i
                    return True
            return False

        for i in range(len(gold)):
            if i not in matched and candidates[i] and _augment(i, set()):
                matched = set(owner.values())

        return sorted((i, j) for j, i in owner.items())

    @staticmethod
    def micro_scores(gold: Mapping[str, Sequence[Entity]], pred: Mapping[str, Sequence[Entity]],
                     mode: MatchMode, per_note: bool = False) -> EvalReport:
        """
        Micro-усреднённые метрики: счётчики суммируются по заметкам до расчёта P/R/F1.

        Args:
            gold: Gold сущности по note_id
            pred: Предсказания по note_id (отсутствующие заметки = нет предсказаний)
            mode: strict или lenient
            per_note: Добавить разбивку по заметкам

        Raises:
            EvaluationError: Предсказание для заметки, которой нет в gold
        """
        mode = MatchMode(mode)
        unknown = sorted(set(pred) - set(gold))
        if unknown:
            raise EvaluationError(f"Предсказания для неизвестных заметок: {', '.join(unknown)}")

        per_type: Dict[str, MatchCounts] = {}
        notes: Dict[str, MatchCounts] = {}
        total = MatchCounts()

        def _bump(entity_type: str, **counts) -> None:
            per_type[entity_type] = per_type.get(entity_type, MatchCounts()) + MatchCounts(**counts)

        for note_id in sorted(gold):
            g = list(gold[note_id])
            p = list(pred.get(note_id, ()))
            tp, fp, fn, pairs = EvaluationService.match_entities(g, p, mode)
            matched_gold = {i for i, _ in pairs}
            matched_pred = {j for _, j in pairs}
            for i, entity in enumerate(g):
                _bump(entity.entity_type, **({"tp": 1} if i in matched_gold else {"fn": 1}))
            for j, entity in enumerate(p):
                if j not in matched_pred:
                    _bump(entity.entity_type, fp=1)
            counts = MatchCounts(tp=tp, fp=fp, fn=fn)
            notes[note_id] = counts
            total = total + counts

        logger.info(f"Оценка ({mode.value}): tp={total.tp} fp={total.fp} fn={total.fn} F1={total.f1:.4f}")
        return EvalReport(
            mode=mode,
            label=MATCH_RULES[mode],
            per_type=dict(sorted(per_type.items())),
            micro=total,
            per_note=notes if per_note else None,
        )


def gold_by_note(corpus: Sequence[Note]) -> EntitiesByNote:
    return {note.note_id: list(note.gold_entities) for note in corpus}


def load_predictions(path, texts: Optional[Mapping[str, str]] = None) -> EntitiesByNote:
    """
    Загружает предсказания из JSON-Lines (формат корпуса) или BIO файла.

    Args:
        path: Файл предсказаний
        texts: Тексты заметок; нужны для BIO и для проверки текста сущностей

    Raises:
        EvaluationError: Битая строка (с номером) или BIO без текстов заметок
    """
    content = read_text_file(Path(path))
    first = next((line for line in content.splitlines() if line.strip()), "")
    if first and not first.lstrip().startswith("{"):
        return _load_bio_predictions(path, texts)

    predictions: EntitiesByNote = {}
    for line_no, line in enumerate(content.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            note_id = record["note_id"]
            text = record.get("text") or (texts or {}).get(note_id)
            entities = []
            for item in record.get("entities", []):
                entity = Entity(
                    start=item["start"],
                    end=item["end"],
                    text=item["text"],
                    entity_type=item["type"],
                    source=item.get("source", EntitySource.WEAK.value),
                )
                if text is not None and text[entity.start:entity.end] != entity.text:
                    raise ValueError(f"текст '{entity.text}' не совпадает с заметкой {note_id}")
                entities.append(entity)
        except (ValueError, KeyError, TypeError) as e:
            raise EvaluationError(f"некорректная строка предсказаний: {e}", line_no) from e
        predictions.setdefault(note_id, []).extend(entities)

    return {note_id: sorted(items, key=lambda e: (e.start, e.end)) for note_id, items in predictions.items()}


def _load_bio_predictions(path, texts: Optional[Mapping[str, str]]) -> EntitiesByNote:
    if texts is None:
        raise EvaluationError("Для BIO предсказаний нужны тексты заметок")
    try:
        examples = read_bio_file(path, texts)
    except ExportError as e:
        raise EvaluationError(str(e)) from e

    predictions: EntitiesByNote = {}
    for example in examples:
        predictions.setdefault(example.note_id, []).extend(ExportService.from_bio(example, EntitySource.WEAK))
    return predictions


def write_eval_report(report: EvalReport, csv_path, json_path) -> None:
    """CSV `mode,type,tp,fp,fn,precision,recall,f1` со строкой micro и JSON-зеркало."""
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["mode", "type", "tp", "fp", "fn", "precision", "recall", "f1"])
        rows = list(report.per_type.items()) + [("micro", report.micro)]
        for entity_type, counts in rows:
            writer.writerow([
                report.mode.value, entity_type, counts.tp, counts.fp, counts.fn,
                f"{counts.precision:.4f}", f"{counts.recall:.4f}", f"{counts.f1:.4f}",
            ])
    Path(json_path).write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
