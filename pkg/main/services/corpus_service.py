# main/services/corpus_service.py
"""
Сервис для работы с аннотированным корпусом.

Предоставляет функциональность для:
- Разбора standoff-аннотаций (<id>.txt + <id>.ann) и обратной сериализации
- Сегментации заметок на предложения
- Загрузки корпуса из директории и обмена через JSON-Lines
- Расчёта сводной статистики корпуса (заметки, предложения, сущности по типам)
"""
import csv
import json
import logging
import re
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import CorpusParseError
from ..schemas.corpus_schemas import (
    DistributionSummary,
    Entity,
    EntitySource,
    EntityStats,
    Note,
    Sentence,
    TaskSchema,
)

logger = logging.getLogger(__name__)

Corpus = List[Note]

# Граница предложения: терминатор перед пробельным символом или пустая строка
_BOUNDARY_RE = re.compile(r"[.!?](?=\s)|\n[ \t\r\f\v]*\n")
_T_LINE_RE = re.compile(r"^(?P<type>\S+) (?P<start>\d+) (?P<end>\d+)$")

DATA_ORIGIN = "non-paper data"


def read_text_file(path: Path) -> str:
    """Читает UTF-8 файл без преобразования переводов строк (смещения важны)."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        return handle.read()


class CorpusService:
    """
    Разбор, сегментация и статистика корпуса.

    Все методы чистые и статические: Note неизменяемы, поэтому их можно
    разбирать и считать параллельно.
    """

    @staticmethod
    def parse_standoff(text_doc: str, ann_doc: str, note_id: str = "") -> Note:
        """
        Разбирает пару (текст, standoff-аннотация) в Note.

        Args:
            text_doc: Полный текст заметки
            ann_doc: Содержимое .ann файла, строки `T<k>\\t<TYPE> <start> <end>\\t<surface>`
            note_id: Идентификатор заметки

        Returns:
            Note: Заметка с gold сущностями, отсортированными по (start, end).
                  Предложения не заполнены (см. segment_sentences).

        Raises:
            CorpusParseError: Смещения вне текста, несовпадение surface с
                              подстрокой текста, повтор T-id, битая строка.

        Note:
            Строки-комментарии (#) и строки других типов (R, E, A, N, M)
            пропускаются: отношения не входят в задачу.
        """
        entities = []
        seen_ids = set()

        for line_no, raw_line in enumerate(ann_doc.splitlines(), start=1):
            line = raw_line.rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            if not line.startswith("T"):
                logger.debug(f"{note_id}: строка {line_no} не является T-аннотацией, пропускаем")
                continue

            parts = line.split("\t", 2)
            if len(parts) != 3:
                raise CorpusParseError(f"{note_id}: ожидалось 3 поля через TAB: '{line}'", line_no)
            tid, span_field, surface = parts

            if tid in seen_ids:
                raise CorpusParseError(f"{note_id}: повторяющийся идентификатор {tid}", line_no)
            seen_ids.add(tid)

            if ";" in span_field:
                raise CorpusParseError(f"{note_id}: разрывные сущности не поддерживаются ({tid})", line_no)
            match = _T_LINE_RE.match(span_field)
            if not match:
                raise CorpusParseError(f"{note_id}: не удалось разобрать '{span_field}'", line_no)

            start, end = int(match.group("start")), int(match.group("end"))
            if not 0 <= start < end <= len(text_doc):
                raise CorpusParseError(
                    f"{note_id}: смещения [{start}, {end}) вне текста длиной {len(text_doc)} ({tid})",
                    line_no,
                )
            if text_doc[start:end] != surface:
                raise CorpusParseError(
                    f"{note_id}: surface '{surface}' не совпадает с текстом "
                    f"'{text_doc[start:end]}' ({tid})",
                    line_no,
                )

            entities.append(Entity(
                start=start,
                end=end,
                text=surface,
                entity_type=match.group("type"),
                source=EntitySource.GOLD,
            ))

        entities.sort(key=lambda e: (e.start, e.end))
        return Note(note_id=note_id, text=text_doc, gold_entities=tuple(entities))

    @staticmethod
    def serialize_standoff(note: Note) -> Tuple[str, str]:
        """
        Сериализует Note обратно в пару (текст, .ann).

        T-идентификаторы перенумеровываются T1..Tn в порядке gold сущностей.
        """
        lines = [
            f"T{index}\t{entity.entity_type} {entity.start} {entity.end}\t{entity.text}\n"
            for index, entity in enumerate(note.gold_entities, start=1)
        ]
        return note.text, "".join(lines)

    @staticmethod
    def segment_sentences(note: Note) -> Note:
        """
        Делит заметку на предложения.

        Граница ставится после `.`, `!`, `?`, за которыми следует пробельный
        символ, и на пустых строках. Крайние пробелы в предложение не входят,
        промежутки между предложениями состоят только из пробельных символов.
        Если границ нет, весь текст становится одним предложением.

        Returns:
            Note: Копия заметки с заполненными sentences
        """
        text = note.text
        cuts = [0] + [m.end() for m in _BOUNDARY_RE.finditer(text)] + [len(text)]

        sentences = []
        for left, right in zip(cuts, cuts[1:]):
            chunk = text[left:right]
            stripped = chunk.strip()
            if not stripped:
                continue
            start = left + (len(chunk) - len(chunk.lstrip()))
            end = start + len(stripped)
            sentences.append(Sentence(index=len(sentences), start=start, end=end, text=stripped))

        segmented = note.model_copy(update={"sentences": tuple(sentences)})
        crossing = segmented.crossing_entities()
        if crossing:
            logger.warning(
                f"{note.note_id}: {len(crossing)} gold сущностей пересекают границу предложения"
            )
        return segmented

    @staticmethod
    def load_corpus(directory, schema: TaskSchema) -> Corpus:
        """
        Загружает корпус из директории с парами `<id>.txt` / `<id>.ann`.

        Args:
            directory: Путь к директории корпуса
            schema: Схема задачи для проверки типов сущностей

        Returns:
            list[Note]: Сегментированные заметки, отсортированные по note_id

        Raises:
            CorpusParseError: Непарный файл, неизвестные типы сущностей,
                              пустая директория или ошибка разбора файла
        """
        directory = Path(directory)
        if not directory.is_dir():
            raise CorpusParseError(f"Директория корпуса не найдена: {directory}")

        texts = {p.stem: p for p in directory.glob("*.txt")}
        anns = {p.stem: p for p in directory.glob("*.ann")}

        unpaired = sorted(
            [f"{stem}.ann" for stem in texts.keys() - anns.keys()]
            + [f"{stem}.txt" for stem in anns.keys() - texts.keys()]
        )
        if unpaired:
            raise CorpusParseError(f"Нет пары для файлов, отсутствуют: {', '.join(unpaired)}")
        if not texts:
            raise CorpusParseError(f"В директории {directory} нет аннотированных заметок")

        logger.info(f"Загрузка корпуса {directory}: {len(texts)} заметок (схема {schema.task_id})")

        notes = []
        unknown_types = set()
        for note_id in sorted(texts):
            note = CorpusService.parse_standoff(
                read_text_file(texts[note_id]), read_text_file(anns[note_id]), note_id
            )
            unknown_types.update(e.entity_type for e in note.gold_entities if not schema.has_type(e.entity_type))
            notes.append(CorpusService.segment_sentences(note))

        if unknown_types:
            raise CorpusParseError(
                f"Типы сущностей не из схемы {schema.task_id}: {', '.join(sorted(unknown_types))}"
            )
        return notes

    @staticmethod
    def corpus_stats(corpus: Sequence[Note], weak=None) -> EntityStats:
        """
        Считает сводную статистику корпуса.

        Args:
            corpus: Заметки (несегментированные будут сегментированы)
            weak: Опционально WeakLabelSet; тогда статистика считается по
                  weak сущностям заметок из набора, плюс доля провалов

        Returns:
            EntityStats: Счётчики, медианы и квартили (линейная интерполяция)

        Raises:
            CorpusParseError: Пустой корпус
        """
        if not corpus:
            raise CorpusParseError("Пустой корпус: статистика не определена")

        notes = [n if n.is_segmented else CorpusService.segment_sentences(n) for n in corpus]

        if weak is not None:
            return CorpusService._weak_stats(notes, weak)

        per_sentence = [len(n.sentence_entities(i)) for n in notes for i in range(len(n.sentences))]
        per_note = [len(n.gold_entities) for n in notes]
        per_type: Dict[str, int] = {}
        for note in notes:
            for entity in note.gold_entities:
                per_type[entity.entity_type] = per_type.get(entity.entity_type, 0) + 1

        return EntityStats(
            note_count=len(notes),
            sentence_count=len(per_sentence),
            total_entities=sum(per_note),
            per_sentence=summarize_counts(per_sentence),
            per_note=summarize_counts(per_note),
            crossing_entities=sum(len(n.crossing_entities()) for n in notes),
            per_type=dict(sorted(per_type.items())),
        )

    @staticmethod
    def _weak_stats(notes: Sequence[Note], weak) -> EntityStats:
        known = {n.note_id for n in notes}
        results = [r for r in weak.results if r.note_id in known]
        if not results:
            raise CorpusParseError("WeakLabelSet не покрывает ни одной заметки корпуса")

        per_note_counts: Dict[str, int] = {}
        per_type: Dict[str, int] = {}
        for result in results:
            per_note_counts[result.note_id] = per_note_counts.get(result.note_id, 0) + len(result.entities)
            for entity in result.entities:
                per_type[entity.entity_type] = per_type.get(entity.entity_type, 0) + 1

        failed = sum(1 for r in results if r.status == "failed")
        per_note = list(per_note_counts.values())
        return EntityStats(
            note_count=len(per_note_counts),
            sentence_count=len(results),
            total_entities=sum(per_note),
            per_sentence=summarize_counts([len(r.entities) for r in results]),
            per_note=summarize_counts(per_note),
            failed_sentence_pct=100.0 * failed / len(results),
            per_type=dict(sorted(per_type.items())),
        )


def summarize_counts(counts: Iterable[float]) -> DistributionSummary:
    """
    Медиана, квартили (линейная интерполяция между порядковыми статистиками),
    среднее и популяционное стандартное отклонение.
    """
    values = np.asarray(list(counts), dtype=float)
    if values.size == 0:
        return DistributionSummary(median=0.0, q1=0.0, q3=0.0, mean=0.0, sd=0.0)
    q1, median, q3 = np.percentile(values, [25, 50, 75], method="linear")
    return DistributionSummary(
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        mean=float(values.mean()),
        sd=float(values.std(ddof=0)),
    )


# --- JSON-Lines обмен ---

def note_to_record(note: Note) -> dict:
    return {
        "note_id": note.note_id,
        "text": note.text,
        "sentences": [{"start": s.start, "end": s.end} for s in note.sentences],
        "entities": [
            {"start": e.start, "end": e.end, "text": e.text, "type": e.entity_type, "source": e.source.value}
            for e in note.gold_entities
        ],
    }


def note_from_record(record: dict, line_no: Optional[int] = None) -> Note:
    """
    Восстанавливает Note из JSON-записи канонического формата.

    Raises:
        CorpusParseError: Отсутствующие поля или нарушенные инварианты
    """
    try:
        text = record["text"]
        sentences = tuple(
            Sentence(index=i, start=s["start"], end=s["end"], text=text[s["start"]:s["end"]])
            for i, s in enumerate(record.get("sentences", []))
        )
        entities = tuple(sorted(
            (
                Entity(
                    start=e["start"],
                    end=e["end"],
                    text=e["text"],
                    entity_type=e["type"],
                    source=e.get("source", EntitySource.GOLD.value),
                )
                for e in record.get("entities", [])
            ),
            key=lambda e: (e.start, e.end),
        ))
        return Note(note_id=record["note_id"], text=text, sentences=sentences, gold_entities=entities)
    except (KeyError, TypeError, ValueError) as e:
        raise CorpusParseError(f"некорректная запись заметки: {e}", line_no) from e


def write_corpus_jsonl(notes: Iterable[Note], path) -> None:
    """Пишет корпус в JSON-Lines: одна заметка на строку."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for note in notes:
            handle.write(json.dumps(note_to_record(note), ensure_ascii=False) + "\n")


def read_corpus_jsonl(path) -> Corpus:
    """Читает корпус из JSON-Lines (см. write_corpus_jsonl)."""
    notes = []
    for line_no, line in enumerate(read_text_file(Path(path)).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusParseError(f"битый JSON: {e.msg}", line_no) from e
        notes.append(note_from_record(record, line_no))
    return sorted(notes, key=lambda n: n.note_id)


# --- Отчёт статистики ---

def stats_rows(stats: EntityStats) -> List[Tuple[str, str]]:
    """Строки CSV отчёта статистики: подпись признака и значения по колонкам."""
    failed = "" if stats.failed_sentence_pct is None else f"{stats.failed_sentence_pct:g}"
    rows = [
        ("Notes", str(stats.note_count)),
        ("Sentences", str(stats.sentence_count)),
        ("Total entities", str(stats.total_entities)),
        ("Entities per sentence, median [Q1, Q3]", stats.per_sentence.as_median_iqr()),
        ("Entities per sentence, mean (Std Dev)", stats.per_sentence.as_mean_sd()),
        ("Entities per note, median [Q1, Q3]", stats.per_note.as_median_iqr()),
        ("Post-processing failed, sentences (%)", failed),
        ("Boundary-crossing entities", str(stats.crossing_entities)),
    ]
    rows.extend((f"Entities of type {t}", str(c)) for t, c in stats.per_type.items())
    return rows


def write_stats_csv(sections: Dict[str, EntityStats], path) -> None:
    """
    Пишет CSV отчёт: одна колонка на секцию (например, gold и weak).

    Последняя строка помечает происхождение данных ("non-paper data").
    """
    labels: List[str] = []
    values: Dict[str, Dict[str, str]] = {}
    for name, stats in sections.items():
        values[name] = {}
        for label, value in stats_rows(stats):
            if label not in labels:
                labels.append(label)
            values[name][label] = value

    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["Features", *sections.keys()])
        for label in labels:
            writer.writerow([label, *(values[name].get(label, "") for name in sections)])
        writer.writerow(["data_origin", *([DATA_ORIGIN] * len(sections))])
