# main/repository/run_directory.py
"""
Репозиторий директории прогона.

Знает раскладку артефактов и маркеры этапов:
- config.snapshot.toml, config.sha256, selection.json
- corpus/, sft/, cache/, weak/, export/, reports/
- stage.<name>.done
"""
import json
import logging
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

logger = logging.getLogger(__name__)

SUBDIRS = ("corpus", "sft", "cache", "weak", "export", "reports")


class RunDirectory:
    """
    Доступ к файлам одного прогона.

    Attributes:
        root: Корень директории прогона
    """

    def __init__(self, root):
        self.root = Path(root).resolve()

    def __repr__(self) -> str:
        return f"RunDirectory({self.root})"

    def ensure_layout(self) -> None:
        """Создаёт корень и все поддиректории."""
        for name in SUBDIRS:
            (self.root / name).mkdir(parents=True, exist_ok=True)

    # --- пути артефактов ---

    @property
    def selection_path(self) -> Path:
        return self.root / "selection.json"

    @property
    def train_corpus_path(self) -> Path:
        return self.root / "corpus" / "train.jsonl"

    @property
    def test_corpus_path(self) -> Path:
        return self.root / "corpus" / "test.jsonl"

    @property
    def sft_dir(self) -> Path:
        return self.root / "sft"

    @property
    def cache_dir(self) -> Path:
        return self.root / "cache"

    @property
    def weak_labels_path(self) -> Path:
        return self.root / "weak" / "weak_labels.jsonl"

    @property
    def weak_summary_path(self) -> Path:
        return self.root / "weak" / "summary.json"

    @property
    def export_dir(self) -> Path:
        return self.root / "export"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    @property
    def run_report_path(self) -> Path:
        return self.reports_dir / "run_report.json"

    # --- маркеры этапов ---

    def marker_path(self, stage: str) -> Path:
        return self.root / f"stage.{stage}.done"

    def is_done(self, stage: str) -> bool:
        return self.marker_path(stage).exists()

    def mark_done(self, stage: str) -> None:
        self.write_json(self.marker_path(stage), {
            "stage": stage,
            "completed_at": datetime.now(timezone.utc).isoformat(),
        })

    def clear_marker(self, stage: str) -> None:
        path = self.marker_path(stage)
        if path.exists():
            path.unlink()
            logger.debug(f"Маркер этапа {stage} удалён")

    # --- запись ---

    @staticmethod
    def write_text(path: Path, content: str) -> None:
        """Атомарная запись: временный файл в той же директории, затем rename."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile("w", encoding="utf-8", newline="\n", dir=path.parent,
                                         suffix=".tmp", delete=False) as handle:
            handle.write(content)
        os.replace(handle.name, path)

    @staticmethod
    def write_json(path: Path, payload) -> None:
        RunDirectory.write_text(path, json.dumps(payload, indent=2, ensure_ascii=False) + "\n")

    @staticmethod
    def read_json(path: Path) -> Optional[dict]:
        path = Path(path)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))
