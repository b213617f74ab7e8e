from pathlib import Path

FIXTURES_DIR = Path(__file__).resolve().parent.parent / "fixtures"
CORPUS_2018_DIR = FIXTURES_DIR / "corpus_2018"
VOCAB_PATH = FIXTURES_DIR / "vocab.txt"
RUN_CONFIG_PATH = FIXTURES_DIR / "run_fixture.toml"
