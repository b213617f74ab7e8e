# main/services/tokenizer_service.py
"""
WordPiece токенизатор с символьными смещениями.

Словарь задаётся файлом (один кусок на строку, префикс ## у продолжений).
Слово режется жадно по самому длинному префиксу; слово, которое не
удалось разрезать целиком, становится одним [UNK].
"""
import logging
import re
from pathlib import Path
from typing import FrozenSet, Iterable, List

from ..exceptions import ExportError
from ..schemas.export_schemas import SubwordToken

logger = logging.getLogger(__name__)

UNK = "[UNK]"
CONTINUATION = "##"
MAX_WORD_CHARS = 100

_WORD_RE = re.compile(r"\S+")


class WordPieceVocab:
    """
    Неизменяемый словарь кусков.

    Attributes:
        pieces: Множество кусков
        unk_token: Символ неизвестного куска
    """

    def __init__(self, pieces: Iterable[str], unk_token: str = UNK):
        self.pieces: FrozenSet[str] = frozenset(p for p in pieces if p)
        self.unk_token = unk_token
        if not self.pieces:
            raise ExportError("Пустой словарь WordPiece")
        self.max_piece_len = max(len(p) for p in self.pieces)

    def __contains__(self, piece: str) -> bool:
        return piece in self.pieces

    def __len__(self) -> int:
        return len(self.pieces)

    @classmethod
    def from_file(cls, path) -> "WordPieceVocab":
        """
        Загружает словарь из файла: один кусок на строку.

        Raises:
            ExportError: Файл не найден или пуст
        """
        path = Path(path)
        if not path.exists():
            raise ExportError(f"Файл словаря не найден: {path}")
        pieces = [line.strip() for line in path.read_text(encoding="utf-8").splitlines()]
        vocab = cls(pieces)
        logger.debug(f"Загружен словарь {path}: {len(vocab)} кусков")
        return vocab


class TokenizerService:
    """Разбиение текста на куски WordPiece."""

    @staticmethod
    def wordpiece(word: str, vocab: WordPieceVocab) -> List[tuple]:
        """
        Жадное разбиение одного слова.

        Returns:
            list[(piece, start, end)]: Смещения относительно слова;
            [(UNK, 0, len(word))], если разбить не удалось
        """
        if len(word) > MAX_WORD_CHARS:
            return [(vocab.unk_token, 0, len(word))]

        pieces = []
        start = 0
        while start < len(word):
            end = min(len(word), start + vocab.max_piece_len)
            found = None
            while start < end:
                candidate = word[start:end] if start == 0 else CONTINUATION + word[start:end]
                if candidate in vocab:
                    found = candidate
                    break
                end -= 1
            if found is None:
                return [(vocab.unk_token, 0, len(word))]
            pieces.append((found, start, end))
            start = end
        return pieces

    @staticmethod
    def tokenize_subwords(text: str, vocab: WordPieceVocab) -> List[SubwordToken]:
        """
        Делит текст по пробелам, затем каждое слово жадно по словарю.

        Args:
            text: Текст предложения
            vocab: Словарь кусков

        Returns:
            list[SubwordToken]: Смещения относительно text; куски покрывают
            все непробельные символы по порядку
        """
        tokens = []
        for match in _WORD_RE.finditer(text):
            offset = match.start()
            for position, (piece, start, end) in enumerate(TokenizerService.wordpiece(match.group(0), vocab)):
                tokens.append(SubwordToken(
                    text=piece,
                    start=offset + start,
                    end=offset + end,
                    is_continuation=position > 0,
                ))
        return tokens
