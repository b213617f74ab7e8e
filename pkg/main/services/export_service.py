# main/services/export_service.py
"""
Сервис экспорта обучающих данных для энкодера.

Предоставляет функциональность для:
- Перевода сущностей в BIO теги поверх кусков WordPiece и обратно
- Записи и чтения BIO файлов в стиле CoNLL
- Каталога гиперпараметров обучения и двухэтапного манифеста (weak, затем gold)
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from ..exceptions import ExportError
from ..schemas.corpus_schemas import Entity, EntitySource, Note, Sentence
from ..schemas.export_schemas import (
    BioExample,
    StageHyperparameters,
    SubwordToken,
    TrainingManifest,
    TrainingStage,
)
from ..schemas.llm_answers_schemas import WeakLabelSet, WeakLabelStatus
from ..schemas.selection_schemas import SubsetSelection
from .corpus_service import read_text_file
from .subset_service import SubsetService
from .tokenizer_service import TokenizerService, WordPieceVocab

logger = logging.getLogger(__name__)

MAX_TOKENS = 256
DEFAULT_MODEL_LABEL = "llama2-13B"
DOCSTART = "-DOCSTART-"

BENCHMARKS = ("2012", "2014", "2018")
CATALOG_SIZES = (3, 5, 10, 50)


# --- каталог гиперпараметров ---

def _gold_hyperparameters(n_s: int) -> StageHyperparameters:
    if n_s == 3:
        return StageHyperparameters(validation_ratio=0.34, batch_size=1)
    return StageHyperparameters(validation_ratio=0.2, batch_size=2)


_WEAK_HYPERPARAMETERS = StageHyperparameters(validation_ratio=0.2, batch_size=32)


def run_names(variant: str, n_s: int, model_label: str = DEFAULT_MODEL_LABEL) -> Tuple[str, str]:
    """
    Имена прогонов (weak, gold), например Bert_weak_sft+gold3.

    variant "sft": LLM дообучена на тех же n_s заметках;
    variant "compact": LLM используется без дообучения.
    """
    if variant == "sft":
        gold = f"{model_label}_gold{n_s}_Bert_gold{n_s}"
    elif variant == "compact":
        gold = f"{model_label}_Bert_gold{n_s}"
    else:
        raise ExportError(f"Неизвестный вариант '{variant}': ожидается sft или compact")
    return f"{gold}_ws", gold


def _build_catalog() -> Dict[Tuple[str, str], StageHyperparameters]:
    catalog = {}
    for benchmark in BENCHMARKS:
        catalog[(benchmark, "Bert_gold100%")] = _WEAK_HYPERPARAMETERS
        catalog[(benchmark, f"{DEFAULT_MODEL_LABEL}_Bert_gold0")] = _WEAK_HYPERPARAMETERS
        for n_s in CATALOG_SIZES:
            catalog[(benchmark, f"Bert_gold{n_s}")] = _gold_hyperparameters(n_s)
            for variant in ("sft", "compact"):
                weak, gold = run_names(variant, n_s)
                catalog[(benchmark, weak)] = _WEAK_HYPERPARAMETERS
                catalog[(benchmark, gold)] = _gold_hyperparameters(n_s)
    return catalog


HYPERPARAMETER_CATALOG: Dict[Tuple[str, str], StageHyperparameters] = _build_catalog()


def lookup_hyperparameters(benchmark_id: str, run_name: str) -> StageHyperparameters:
    """
    Raises:
        ExportError: Строки (benchmark, run_name) нет в каталоге
    """
    try:
        return HYPERPARAMETER_CATALOG[(str(benchmark_id), run_name)]
    except KeyError:
        raise ExportError(f"Нет строки каталога для {benchmark_id} / {run_name}") from None


def stage_hyperparameters(benchmark_id: str, run_name: str, n_s: int, stage: str) -> StageHyperparameters:
    """Строка каталога, а для n_s вне пресетов - то же правило, что в каталоге."""
    if (str(benchmark_id), run_name) in HYPERPARAMETER_CATALOG:
        return HYPERPARAMETER_CATALOG[(str(benchmark_id), run_name)]
    logger.warning(f"{run_name} нет в каталоге {benchmark_id}: гиперпараметры выведены по правилу")
    return _WEAK_HYPERPARAMETERS if stage == "weak" else _gold_hyperparameters(n_s)


# --- BIO ---

def resolve_overlaps(entities: Sequence[Entity]) -> Tuple[List[Entity], int]:
    """
    Оставляет непересекающиеся сущности.

    Порядок: начало по возрастанию, длина по убыванию; сущность берётся,
    если не пересекается с уже взятыми.

    Returns:
        (сущности по порядку начала, число отброшенных)
    """
    kept = []
    last_end = -1
    for entity in sorted(entities, key=lambda e: (e.start, -(e.end - e.start), e.entity_type)):
        if entity.start >= last_end:
            kept.append(entity)
            last_end = entity.end
    return kept, len(entities) - len(kept)


def check_bio_wellformed(tags: Sequence[str]) -> bool:
    """Нет I-X после O, в начале или после B-Y / I-Y с Y != X."""
    previous = "O"
    for tag in tags:
        if tag.startswith("I-") and previous[2:] != tag[2:]:
            return False
        if tag != "O" and not tag.startswith(("B-", "I-")):
            return False
        previous = tag
    return True


class ExportService:
    """Перевод разметки в BIO и сборка двухэтапного манифеста."""

    @staticmethod
    def to_bio(note_id: str, sentence: Sentence, tokens: Sequence[SubwordToken],
               entities: Sequence[Entity], max_tokens: int = MAX_TOKENS) -> BioExample:
        """
        Строит BIO пример для предложения.

        Args:
            note_id: Заметка
            sentence: Предложение (смещения уровня заметки)
            tokens: Куски предложения (смещения относительно предложения)
            entities: Сущности со смещениями уровня заметки
            max_tokens: Длина входа энкодера

        Returns:
            BioExample: Токен внутри сущности, если его span с ней пересекается;
            первый такой токен B-, остальные I-
        """
        relative = [e.shifted(-sentence.start) for e in entities]
        resolved, dropped_overlap = resolve_overlaps(relative)

        truncated = len(tokens) > max_tokens
        tokens = list(tokens[:max_tokens])

        tags = ["O"] * len(tokens)
        kept_end = tokens[-1].end if tokens else 0
        dropped_truncated = dropped_no_tokens = 0
        for entity in resolved:
            covered = [i for i, t in enumerate(tokens) if t.start < entity.end and entity.start < t.end]
            if truncated and entity.end > kept_end:
                dropped_truncated += 1
                continue
            if not covered:
                dropped_no_tokens += 1
                continue
            # токен уже занят предыдущей сущностью
            if any(tags[i] != "O" for i in covered):
                dropped_overlap += 1
                continue
            tags[covered[0]] = f"B-{entity.entity_type}"
            for i in covered[1:]:
                tags[i] = f"I-{entity.entity_type}"

        return BioExample(
            note_id=note_id,
            sentence_index=sentence.index,
            sentence_start=sentence.start,
            sentence_text=sentence.text,
            tokens=tuple(tokens),
            tags=tuple(tags),
            truncated=truncated,
            dropped_overlap=dropped_overlap,
            dropped_truncated=dropped_truncated,
            dropped_no_tokens=dropped_no_tokens,
        )

    @staticmethod
    def from_bio(example: BioExample, source: EntitySource = EntitySource.GOLD) -> List[Entity]:
        """
        Декодирует максимальные серии B/I в сущности уровня заметки.

        Осиротевший I-X (после O или другого типа) начинает новую сущность.
        """
        spans = []
        current = None
        for token, tag in zip(example.tokens, example.tags):
            if tag == "O":
                current = None
                continue
            prefix, entity_type = tag[0], tag[2:]
            if prefix == "I" and current is not None and current[2] == entity_type:
                current[1] = token.end
                continue
            current = [token.start, token.end, entity_type]
            spans.append(current)

        return [
            Entity(
                start=example.sentence_start + start,
                end=example.sentence_start + end,
                text=example.sentence_text[start:end],
                entity_type=entity_type,
                source=source,
            )
            for start, end, entity_type in spans
        ]

    @staticmethod
    def export_stage_datasets(
            corpus: Sequence[Note],
            weak_set: WeakLabelSet,
            selection: SubsetSelection,
            benchmark_id: str,
            n_s: int,
            vocab: WordPieceVocab,
            out_dir,
            variant: str = "sft",
            model_label: str = DEFAULT_MODEL_LABEL,
            include_failed: bool = False,
            max_tokens: int = MAX_TOKENS,
            seed: int = 0,
    ) -> TrainingManifest:
        """
        Пишет weak.bio, gold.bio и manifest.json в out_dir.

        Weak этап: weak сущности заметок weak_ids; предложения с пустым
        ответом дают примеры из одних O, упавшие исключаются (или идут как
        O при include_failed). Gold этап: gold сущности заметок gold_ids.

        Raises:
            ExportError: Для каких-то предложений weak заметок нет результатов
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        notes = {note.note_id: note for note in corpus}
        weak_ws, gold_ws = run_names(variant, n_s, model_label)

        missing_notes = sorted(set(selection.all_ids) - set(notes))
        if missing_notes:
            raise ExportError(f"Заметки выборки отсутствуют в корпусе: {', '.join(missing_notes)}")

        stages = []
        excluded_failed = 0
        counters = {"dropped_overlap": 0, "dropped_truncated": 0, "dropped_no_tokens": 0, "truncated": 0}

        def _count(examples: List[BioExample]) -> None:
            for example in examples:
                counters["dropped_overlap"] += example.dropped_overlap
                counters["dropped_truncated"] += example.dropped_truncated
                counters["dropped_no_tokens"] += example.dropped_no_tokens
                counters["truncated"] += int(example.truncated)

        if selection.weak_ids:
            by_key = weak_set.by_key()
            missing = sorted({
                note_id for note_id in selection.weak_ids
                for sentence in notes[note_id].sentences
                if (note_id, sentence.index) not in by_key
            })
            if missing:
                raise ExportError(f"Нет weak разметки для заметок: {', '.join(missing)}")

            weak_examples = []
            for note_id in selection.weak_ids:
                for sentence in notes[note_id].sentences:
                    result = by_key[(note_id, sentence.index)]
                    if result.status == WeakLabelStatus.FAILED and not include_failed:
                        excluded_failed += 1
                        continue
                    tokens = TokenizerService.tokenize_subwords(sentence.text, vocab)
                    weak_examples.append(ExportService.to_bio(note_id, sentence, tokens, result.entities, max_tokens))
            _count(weak_examples)
            write_bio_file(weak_examples, out_dir / "weak.bio")

            hyper = stage_hyperparameters(benchmark_id, weak_ws, n_s, "weak")
            train, validation = SubsetService.split_validation(selection.weak_ids, hyper.validation_ratio, seed)
            stages.append(TrainingStage(
                name="weak", run_name=weak_ws, source="weak.bio", notes=selection.weak_ids,
                train_notes=tuple(train), validation_notes=tuple(validation),
                sentence_count=len(weak_examples), hyperparameters=hyper,
            ))

        gold_examples = ExportService.gold_examples([notes[i] for i in selection.gold_ids], vocab, max_tokens)
        _count(gold_examples)
        write_bio_file(gold_examples, out_dir / "gold.bio")

        hyper = stage_hyperparameters(benchmark_id, gold_ws, n_s, "gold")
        train, validation = SubsetService.split_validation(selection.gold_ids, hyper.validation_ratio, seed)
        stages.append(TrainingStage(
            name="gold", run_name=gold_ws, source="gold.bio", notes=selection.gold_ids,
            train_notes=tuple(train), validation_notes=tuple(validation),
            sentence_count=len(gold_examples), hyperparameters=hyper,
        ))

        manifest = TrainingManifest(
            benchmark_id=str(benchmark_id),
            n_s=n_s,
            variant=variant,
            stages=tuple(stages),
            excluded_failed_sentences=excluded_failed,
            dropped_overlap=counters["dropped_overlap"],
            dropped_truncated=counters["dropped_truncated"],
            dropped_no_tokens=counters["dropped_no_tokens"],
            truncated_examples=counters["truncated"],
        )
        write_manifest(manifest, out_dir / "manifest.json")
        logger.info(
            f"Экспорт: {[s.name for s in stages]}, исключено упавших предложений {excluded_failed}, "
            f"отброшено пересечений {counters['dropped_overlap']}"
        )
        return manifest

    @staticmethod
    def gold_examples(notes: Sequence[Note], vocab: WordPieceVocab,
                      max_tokens: int = MAX_TOKENS) -> List[BioExample]:
        """BIO примеры по gold сущностям (пересекающие границу не попадают)."""
        examples = []
        for note in sorted(notes, key=lambda n: n.note_id):
            for sentence in note.sentences:
                tokens = TokenizerService.tokenize_subwords(sentence.text, vocab)
                examples.append(ExportService.to_bio(
                    note.note_id, sentence, tokens, note.sentence_entities(sentence.index), max_tokens
                ))
        return examples

    @staticmethod
    def export_baseline_manifest(corpus: Sequence[Note], selection: SubsetSelection, benchmark_id: str,
                                 vocab: WordPieceVocab, out_dir, max_tokens: int = MAX_TOKENS,
                                 seed: int = 0) -> TrainingManifest:
        """Манифест базовой модели Bert_gold{n}: только gold этап, файл baseline_gold.bio."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        notes = {note.note_id: note for note in corpus}
        examples = ExportService.gold_examples([notes[i] for i in selection.gold_ids], vocab, max_tokens)
        write_bio_file(examples, out_dir / "baseline_gold.bio")

        run_name = f"Bert_gold{selection.n_s}"
        hyper = stage_hyperparameters(benchmark_id, run_name, selection.n_s, "gold")
        train, validation = SubsetService.split_validation(selection.gold_ids, hyper.validation_ratio, seed)
        manifest = TrainingManifest(
            benchmark_id=str(benchmark_id),
            n_s=selection.n_s,
            variant="baseline",
            stages=(TrainingStage(
                name="gold", run_name=run_name, source="baseline_gold.bio", notes=selection.gold_ids,
                train_notes=tuple(train), validation_notes=tuple(validation),
                sentence_count=len(examples), hyperparameters=hyper,
            ),),
            dropped_overlap=sum(e.dropped_overlap for e in examples),
            dropped_truncated=sum(e.dropped_truncated for e in examples),
            dropped_no_tokens=sum(e.dropped_no_tokens for e in examples),
            truncated_examples=sum(int(e.truncated) for e in examples),
        )
        write_manifest(manifest, out_dir / "manifest_baseline.json")
        return manifest


# --- файлы ---

def write_manifest(manifest: TrainingManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")


def read_manifest(path) -> TrainingManifest:
    return TrainingManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))


def write_bio_file(examples: Sequence[BioExample], path) -> None:
    """
    Пишет BIO файл: `piece<TAB>start<TAB>end<TAB>tag`, смещения уровня заметки,
    пустая строка между предложениями, `-DOCSTART- <note_id>` перед заметкой.
    """
    ordered = sorted(examples, key=lambda e: (e.note_id, e.sentence_index))
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        current = None
        for example in ordered:
            if example.note_id != current:
                handle.write(f"{DOCSTART} {example.note_id}\n\n")
                current = example.note_id
            for token, tag in zip(example.tokens, example.tags):
                start = example.sentence_start + token.start
                end = example.sentence_start + token.end
                handle.write(f"{token.text}\t{start}\t{end}\t{tag}\n")
            handle.write("\n")


def read_bio_file(path, texts: Mapping[str, str]) -> List[BioExample]:
    """
    Читает BIO файл обратно в BioExample.

    Args:
        path: Путь к файлу
        texts: Тексты заметок по note_id (нужны для текста сущностей)

    Returns:
        list[BioExample]: Смещения уровня заметки (sentence_start = 0,
        sentence_text = весь текст заметки), sentence_index по порядку в файле

    Raises:
        ExportError: Битая строка, токен вне документа или неизвестная заметка
    """
    examples: List[BioExample] = []
    note_id: Optional[str] = None
    tokens: List[SubwordToken] = []
    tags: List[str] = []
    ordinal = 0

    def _flush():
        nonlocal tokens, tags, ordinal
        if tokens:
            examples.append(BioExample(
                note_id=note_id, sentence_index=ordinal, sentence_start=0,
                sentence_text=texts[note_id], tokens=tuple(tokens), tags=tuple(tags),
            ))
            ordinal += 1
        tokens, tags = [], []

    for line_no, line in enumerate(read_text_file(Path(path)).splitlines(), start=1):
        if not line.strip():
            _flush()
            continue
        if line.startswith(DOCSTART):
            _flush()
            note_id = line[len(DOCSTART):].strip()
            ordinal = 0
            if note_id not in texts:
                raise ExportError(f"неизвестная заметка '{note_id}'", line_no)
            continue
        if note_id is None:
            raise ExportError("токен до строки -DOCSTART-", line_no)

        fields = line.split("\t")
        if len(fields) != 4:
            raise ExportError(f"ожидалось 4 поля через TAB, получено {len(fields)}", line_no)
        piece, start, end, tag = fields
        try:
            start, end = int(start), int(end)
            token = SubwordToken(text=piece, start=start, end=end)
        except ValueError as e:
            raise ExportError(f"некорректные смещения: {e}", line_no) from e
        if end > len(texts[note_id]):
            raise ExportError(f"токен [{start}, {end}) за пределами заметки {note_id}", line_no)
        if tag != "O" and not tag.startswith(("B-", "I-")):
            raise ExportError(f"некорректный тег '{tag}'", line_no)
        tokens.append(token)
        tags.append(tag)

    _flush()
    return examples
