# main/services/subset_service.py
"""
Сервис отбора gold-подмножества заметок.

Отбирает n_s заметок с числом сущностей, ближайшим к медиане по всему
обучающему корпусу; остальные заметки получают weak разметку от LLM.
"""
import json
import logging
import random
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from ..exceptions import CorpusParseError
from ..schemas.corpus_schemas import Note
from ..schemas.selection_schemas import SubsetSelection

logger = logging.getLogger(__name__)

PRESET_SIZES = (3, 5, 10, 50)


class SubsetService:
    """Отбор gold подмножества и разбиение заметок на обучение / валидацию."""

    @staticmethod
    def entity_count_median(corpus: Sequence[Note]) -> float:
        """
        Медиана числа gold сущностей на заметку.

        Raises:
            CorpusParseError: Пустой корпус
        """
        if not corpus:
            raise CorpusParseError("Пустой корпус: медиана не определена")
        return float(np.median([len(note.gold_entities) for note in corpus]))

    @staticmethod
    def select_gold_subset(corpus: Sequence[Note], n_s: int) -> SubsetSelection:
        """
        Отбирает n_s заметок с наименьшим |count - median|.

        Args:
            corpus: Заметки официального обучающего набора
            n_s: Размер gold-подмножества (пресеты 3, 5, 10, 50)

        Returns:
            SubsetSelection: gold_ids в порядке ранжирования, weak_ids по note_id

        Note:
            При равенстве |count - median| побеждает меньший note_id, поэтому
            порядок заметок на входе не влияет на результат.
        """
        if n_s < 1:
            raise ValueError(f"n_s должно быть >= 1, получено {n_s}")

        median = SubsetService.entity_count_median(corpus)
        ranked = sorted(corpus, key=lambda n: (abs(len(n.gold_entities) - median), n.note_id))

        warning = None
        if n_s > len(ranked):
            warning = f"n_s={n_s} больше числа заметок ({len(ranked)}): все заметки становятся gold"
            logger.warning(warning)

        gold_ids = tuple(n.note_id for n in ranked[:n_s])
        weak_ids = tuple(sorted(n.note_id for n in ranked[n_s:]))
        logger.info(f"Отобрано {len(gold_ids)} gold заметок (медиана {median:g}), weak заметок: {len(weak_ids)}")

        return SubsetSelection(
            n_s=n_s,
            median_entities=median,
            gold_ids=gold_ids,
            weak_ids=weak_ids,
            warning=warning,
        )

    @staticmethod
    def split_validation(note_ids: Sequence[str], ratio: float, seed: int) -> Tuple[List[str], List[str]]:
        """
        Делит заметки на обучающую и валидационную части.

        Валидационных заметок round_half_up(ratio * n), но не меньше одной
        при n >= 2 и ни одной при n < 2.

        Returns:
            (train_ids, validation_ids), каждая часть отсортирована по note_id
        """
        ids = sorted(note_ids)
        n = len(ids)
        if n < 2:
            return ids, []

        size = int((Decimal(str(ratio)) * n).quantize(Decimal("1"), rounding=ROUND_HALF_UP))
        size = min(max(size, 1), n - 1)

        shuffled = list(ids)
        random.Random(seed).shuffle(shuffled)
        validation = sorted(shuffled[:size])
        train = sorted(shuffled[size:])
        return train, validation


def write_selection_manifest(selection: SubsetSelection, path) -> None:
    """Пишет selection.json: {n_s, median, gold_ids, weak_ids}."""
    payload = {
        "n_s": selection.n_s,
        "median": selection.median_entities,
        "gold_ids": list(selection.gold_ids),
        "weak_ids": list(selection.weak_ids),
        "warning": selection.warning,
    }
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def read_selection_manifest(path) -> SubsetSelection:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return SubsetSelection(
        n_s=payload["n_s"],
        median_entities=payload["median"],
        gold_ids=tuple(payload["gold_ids"]),
        weak_ids=tuple(payload["weak_ids"]),
        warning=payload.get("warning"),
    )
