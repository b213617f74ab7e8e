# main/benchmarks.py
"""
Встроенные схемы задач для трёх бенчмарков i2b2/n2c2.

- 2012: события и временные выражения (EVENT, TIMEX3)
- 2014: 23 подтипа PHI для де-идентификации
- 2018: лекарства и их свойства, нежелательные реакции (ADE)

Тексты системного промпта и инструкций совпадают с опубликованными
шаблонами промптов (однострочная раскладка, одна строка на пункт).
"""
from typing import Dict

from .exceptions import ConfigError
from .schemas.corpus_schemas import TaskSchema

SYSTEM_PROMPT = (
    "You are a medical professional who has excellent medical knowledge "
    "and is happy to review and annotate medical notes."
)

OUTPUT_SPEC = (
    "The output should have:\n"
    "1. the text of entity: entity\n"
    "2. the entity type: entity_type"
)

_INTRO = "This is a named entity recognition task. Given a medical note, annotate the"

# Порядок групп и подтипов PHI важен: он же задаёт порядок entity_types
PHI_GROUPS = (
    ("NAME", ("NAME_PATIENT", "NAME_DOCTOR", "NAME_USERNAME")),
    ("PROFESSION", ()),
    ("LOCATION", (
        "LOCATION_HOSPITAL", "LOCATION_ORGANIZATION", "LOCATION_STREET", "LOCATION_CITY",
        "LOCATION_STATE", "LOCATION_COUNTRY", "LOCATION_ZIP", "LOCATION_LOCATION-OTHER",
    )),
    ("AGE", ()),
    ("DATE", ()),
    ("CONTACT", ("CONTACT_PHONE", "CONTACT_FAX", "CONTACT_EMAIL", "CONTACT_URL")),
    ("ID", ("ID_BIOID", "ID_DEVICE", "ID_HEALTHPLAN", "ID_IDNUM", "ID_MEDICALRECORD")),
)

MEDICATION_TYPES = (
    "Drug", "Form", "Strength", "Frequency", "Route", "Dosage", "Reason", "ADE", "Duration",
)


def _phi_instruction() -> str:
    lines = [f"{_INTRO} Protected Health Information (PHI):"]
    for number, (group, subtypes) in enumerate(PHI_GROUPS, start=1):
        lines.append(f"{number}. {group}")
        for letter, subtype in zip("abcdefgh", subtypes):
            lines.append(f" - {letter}. {subtype}")
    lines.append(OUTPUT_SPEC)
    return "\n".join(lines)


def _phi_types() -> tuple:
    types = []
    for group, subtypes in PHI_GROUPS:
        types.extend(subtypes or (group,))
    return tuple(types)


BUILTIN_SCHEMAS: Dict[str, TaskSchema] = {
    "2012": TaskSchema(
        task_id="2012",
        entity_types=("EVENT", "TIMEX3"),
        instruction=f"{_INTRO} events (EVENT) and time expressions (TIMEX3):\n{OUTPUT_SPEC}",
        system_prompt=SYSTEM_PROMPT,
    ),
    "2014": TaskSchema(
        task_id="2014",
        entity_types=_phi_types(),
        instruction=_phi_instruction(),
        system_prompt=SYSTEM_PROMPT,
    ),
    "2018": TaskSchema(
        task_id="2018",
        entity_types=MEDICATION_TYPES,
        instruction=(
            f"{_INTRO} Drug, Form, Strength, Frequency, Route, Dosage, "
            f"Reason, ADE, and Duration.\n{OUTPUT_SPEC}"
        ),
        system_prompt=SYSTEM_PROMPT,
    ),
}


def get_task_schema(benchmark_id: str) -> TaskSchema:
    """
    Возвращает встроенную схему задачи по идентификатору бенчмарка.

    Raises:
        ConfigError: Если бенчмарк неизвестен
    """
    try:
        return BUILTIN_SCHEMAS[str(benchmark_id)]
    except KeyError:
        raise ConfigError(
            f"Неизвестный бенчмарк '{benchmark_id}'. Доступны: {', '.join(BUILTIN_SCHEMAS)}"
        ) from None
