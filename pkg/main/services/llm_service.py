# main/services/llm_service.py
"""
Сервис для генерации текста LLM.

Предоставляет функциональность для:
- Вызова удалённого completions-сервера (сырой промпт на входе, текст на выходе)
- Детерминированных mock-бэкендов для проверки пайплайна без GPU
- Кэширования ответов по SHA-256 ключу запроса
- Пакетной генерации с ограниченным параллелизмом
"""
import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import requests
from tenacity import RetryError, Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from ..exceptions import GatewayError, PromptError, TransportError
from ..schemas.corpus_schemas import Note
from ..schemas.gateway_schemas import GenerationRequest, GenerationResult, MockMode, MockScript
from ..schemas.prompt_schemas import BOS, INST_CLOSE, INST_OPEN, PromptTemplate
from .prompt_service import PromptService, serialize_labels

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 5
BODY_EXCERPT = 500


def cache_key(request: GenerationRequest) -> str:
    """SHA-256 канонического JSON (model_id, prompt, max_new_tokens, top_k, stop)."""
    payload = json.dumps(request.canonical(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def extract_input_sentence(prompt: str) -> str:
    """Достаёт предложение из последнего хода `<s>[INST] ... [/INST]`."""
    opener = f"{BOS}{INST_OPEN} "
    start = prompt.rfind(opener)
    tail = prompt[start + len(opener):] if start >= 0 else prompt
    closer = f" {INST_CLOSE}"
    return tail[:-len(closer)] if tail.endswith(closer) else tail


def build_gold_lookup(notes: Sequence[Note]) -> Dict[str, str]:
    """
    Словарь текст предложения -> JSON gold меток (для режима echo_gold).

    При повторе одинакового текста в разных заметках берётся первый.
    """
    lookup: Dict[str, str] = {}
    for note in sorted(notes, key=lambda n: n.note_id):
        for sentence in note.sentences:
            labels = serialize_labels((e.text, e.entity_type) for e in note.sentence_entities(sentence.index))
            if lookup.setdefault(sentence.text, labels) != labels:
                logger.debug(f"{note.note_id}: предложение уже встречалось с другой разметкой")
    return lookup


class LLMGateway:
    """
    Единый интерфейс генерации поверх удалённого сервера и mock-бэкенда.

    Экземпляр можно разделять между потоками: кэш пишется атомарно
    (временный файл + rename), неудачные ответы не кэшируются.

    Attributes:
        base_url: Адрес completions-сервера (если не задан mock)
        mock: Описание mock-бэкенда
        cache_dir: Директория кэша или None
        timeout: Таймаут одного HTTP запроса в секундах
    """

    def __init__(
            self,
            base_url: Optional[str] = None,
            mock: Optional[MockScript] = None,
            cache_dir=None,
            timeout: float = 120.0,
            gold_lookup: Optional[Dict[str, str]] = None,
            sleep: Callable[[float], None] = time.sleep,
            session: Optional[requests.Session] = None,
    ):
        """
        Args:
            base_url: URL сервера, например http://localhost:8000
            mock: Mock-скрипт; ровно один из base_url / mock должен быть задан
            cache_dir: Куда складывать кэш `<first2>/<digest>.json`
            timeout: Таймаут запроса (120 с по умолчанию)
            gold_lookup: Gold метки по тексту предложения для echo_gold / fault_inject
            sleep: Функция ожидания между попытками (подменяется в тестах)
            session: HTTP сессия requests; переданная сессия используется всеми
                потоками run_batch, иначе у каждого потока своя

        Raises:
            GatewayError: Не задан ни один бэкенд или заданы оба
        """
        if bool(base_url) == bool(mock):
            raise GatewayError("Нужно задать ровно один бэкенд: url сервера или mock")

        self.base_url = base_url.rstrip("/") if base_url else None
        self.mock = mock
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.timeout = timeout
        self.gold_lookup = gold_lookup or {}
        self._sleep = sleep
        self._session = session
        self._local = threading.local()

        backend = f"mock:{mock.mode.value}" if mock else self.base_url
        logger.info(f"Инициализация LLMGateway (бэкенд: {backend}, кэш: {self.cache_dir})")

    # --- кэш ---

    def _cache_path(self, key: str) -> Optional[Path]:
        if self.cache_dir is None:
            return None
        return self.cache_dir / key[:2] / f"{key}.json"

    def _read_cache(self, key: str) -> Optional[GenerationResult]:
        path = self._cache_path(key)
        if path is None or not path.exists():
            return None
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
            return GenerationResult(text=payload["text"], latency=payload["latency"], from_cache=True)
        except (OSError, ValueError, KeyError) as e:
            logger.warning(f"Повреждённый файл кэша {path}: {e}; запрос будет выполнен заново")
            return None

    def _write_cache(self, key: str, request: GenerationRequest, text: str, latency: float) -> None:
        path = self._cache_path(key)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(
            {"request": request.canonical(), "text": text, "latency": latency},
            ensure_ascii=False, sort_keys=True,
        )
        with tempfile.NamedTemporaryFile("w", encoding="utf-8", dir=path.parent,
                                         suffix=".tmp", delete=False) as handle:
            handle.write(payload)
        os.replace(handle.name, path)

    # --- бэкенды ---

    def _get_session(self) -> requests.Session:
        if self._session is not None:
            return self._session
        session = getattr(self._local, "session", None)
        if session is None:
            session = self._local.session = requests.Session()
        return session

    def _post_completion(self, request: GenerationRequest) -> str:
        body = {
            "model": request.model_id,
            "prompt": request.prompt,
            "max_tokens": request.max_new_tokens,
            "top_k": request.top_k,
            "stop": list(request.stop),
        }
        try:
            response = self._get_session().post(f"{self.base_url}/v1/completions", json=body, timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as e:
            logger.warning(f"Сбой транспорта при обращении к {self.base_url}: {e}")
            raise TransportError(str(e)) from e
        except requests.RequestException as e:
            logger.error(f"Ошибка HTTP запроса к {self.base_url}: {e!r}")
            raise GatewayError(f"Ошибка HTTP запроса: {e!r}", attempts=1) from e

        if not 200 <= response.status_code < 300:
            excerpt = response.text[:BODY_EXCERPT]
            raise GatewayError(
                f"Сервер вернул HTTP {response.status_code}: {excerpt}",
                status=response.status_code,
                body=excerpt,
            )
        try:
            return response.json()["choices"][0]["text"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise GatewayError(
                f"Неожиданный формат ответа сервера: {e}",
                status=response.status_code,
                body=response.text[:BODY_EXCERPT],
            ) from e

    def _call_remote(self, request: GenerationRequest) -> str:
        retrying = Retrying(
            stop=stop_after_attempt(MAX_ATTEMPTS),
            wait=wait_exponential(multiplier=1, exp_base=2),
            retry=retry_if_exception_type(TransportError),
            sleep=self._sleep,
        )
        try:
            return retrying(self._post_completion, request)
        except RetryError as e:
            attempts = e.last_attempt.attempt_number
            raise GatewayError(
                f"Сервер недоступен после {attempts} попыток: {e.last_attempt.exception()}",
                attempts=attempts,
            ) from e

    def _fault_draw(self, key: str) -> float:
        digest = hashlib.sha256(f"{self.mock.seed}:{key}".encode("utf-8")).hexdigest()
        return int(digest[:16], 16) / float(16 ** 16)

    def _call_mock(self, request: GenerationRequest, key: str) -> str:
        mode = self.mock.mode
        sentence = extract_input_sentence(request.prompt)

        if mode == MockMode.FIXED:
            return self.mock.text
        if mode == MockMode.FILE_SCRIPTED:
            return self.mock.script.get(sentence, "[]")
        if mode == MockMode.FAULT_INJECT and self._fault_draw(key) < self.mock.fault_rate:
            raise GatewayError("mock fault_inject: запрос отклонён", attempts=1)
        return self.gold_lookup.get(sentence, "[]")

    def _call_backend(self, request: GenerationRequest, key: str) -> Tuple[str, float]:
        """Возвращает (текст, задержка в секундах)."""
        if self.mock is not None:
            return self._call_mock(request, key), self.mock.latency
        started = time.perf_counter()
        text = self._call_remote(request)
        return text, time.perf_counter() - started

    # --- публичный API ---

    def generate(self, request: GenerationRequest) -> GenerationResult:
        """
        Выполняет один запрос с учётом кэша.

        Returns:
            GenerationResult: from_cache=True при попадании в кэш

        Raises:
            GatewayError: Исчерпаны попытки (attempts) или ответ не-2xx (status, body)
        """
        key = cache_key(request)
        cached = self._read_cache(key)
        if cached is not None:
            return cached

        text, latency = self._call_backend(request, key)
        self._write_cache(key, request, text, latency)
        return GenerationResult(text=text, latency=latency, from_cache=False)

    def run_batch(self, sentences: Sequence[str], template: PromptTemplate,
                  params: GenerationRequest, parallelism: int = 1) -> List[GenerationResult]:
        """
        Генерирует ответы для списка предложений.

        Args:
            sentences: Тексты предложений
            template: Шаблон промпта
            params: Параметры генерации (поле prompt игнорируется)
            parallelism: Максимум одновременных запросов

        Returns:
            list[GenerationResult]: В порядке входа; ошибки записаны в слот (error)
        """
        if parallelism < 1:
            raise ValueError(f"parallelism должно быть >= 1, получено {parallelism}")

        def _one(sentence: str) -> GenerationResult:
            try:
                prompt = PromptService.render_inference_prompt(template, sentence)
                return self.generate(params.model_copy(update={"prompt": prompt}))
            except (GatewayError, PromptError) as e:
                logger.error(f"Ошибка генерации для предложения '{sentence[:60]}': {e}")
                return GenerationResult(error=str(e))

        logger.info(f"Пакетная генерация: {len(sentences)} предложений, параллелизм {parallelism}")
        with ThreadPoolExecutor(max_workers=parallelism) as executor:
            results = list(executor.map(_one, sentences))

        failed = sum(1 for r in results if not r.ok)
        cached = sum(1 for r in results if r.from_cache)
        logger.info(f"Генерация завершена: ошибок {failed}, из кэша {cached}")
        return results
