"""
Сервис работы со списками сотрудников (roster).
Модель данных, загрузка CSV и нормализация имён.
"""
from __future__ import annotations

import csv
import logging
import re
import unicodedata
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import pandas as pd

logger = logging.getLogger(__name__)


class EmptyAfterNormalization(ValueError):
    """После нормализации от имени ничего не осталось"""


class SchemaError(ValueError):
    """Во входных данных нет обязательной колонки"""


class ParseError(ValueError):
    """Строку не удалось разобрать"""

    def __init__(self, row: int, message: str):
        super().__init__(f"строка {row}: {message}")
        self.row = row


class Gender(str, Enum):
    F = "F"
    M = "M"
    UNKNOWN = "Unknown"


class NameField(str, Enum):
    LAST = "last"
    FIRST = "first"


@dataclass(frozen=True)
class NormalizationPolicy:
    uppercase: bool = True
    strip_spaces_apostrophes: bool = True
    hyphen_keep_first: bool = True
    drop_parenthetical: bool = True


DEFAULT_POLICY = NormalizationPolicy()
# Итальянские данные: только верхний регистр и удаление пробелов/апострофов
ITALY_POLICY = NormalizationPolicy(hyphen_keep_first=False, drop_parenthetical=False)
# Британские данные: плюс двойные фамилии и "(NEE ...)"
UK_POLICY = NormalizationPolicy()

POLICIES = {"default": DEFAULT_POLICY, "italy": ITALY_POLICY, "uk": UK_POLICY}

_PAREN_RE = re.compile(r"\([^()]*\)")
_APOSTROPHES = "'’‘`´"


def _drop_parenthetical(text: str) -> str:
    # вложенные скобки снимаем изнутри наружу
    prev = None
    while prev != text:
        prev = text
        text = _PAREN_RE.sub(" ", text)
    # незакрытая скобка: всё после неё считаем пояснением
    if "(" in text:
        text = text.split("(", 1)[0]
    return text.replace(")", " ")


def _transliterate(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(c for c in decomposed if not unicodedata.combining(c))


def normalize_name(raw: str, policy: NormalizationPolicy = DEFAULT_POLICY) -> str:
    """
    Приводит имя к ключу сравнения.

    Порядок правил фиксирован: (1) убрать текст в скобках, (2) у двойного имени
    через дефис оставить первую часть, (3) верхний регистр, (4) убрать пробелы
    и апострофы. Затем диакритика снимается, прочие символы вне A-Z выкидываются.

    Raises:
        EmptyAfterNormalization: если ничего не осталось
    """
    text = raw or ""
    if policy.drop_parenthetical:
        text = _drop_parenthetical(text)
    if policy.hyphen_keep_first:
        parts = [p for p in re.split(r"[-‐‑–]", text) if p.strip()]
        text = parts[0] if parts else ""
    if policy.uppercase:
        text = text.upper()
    if policy.strip_spaces_apostrophes:
        text = re.sub(r"\s+", "", text)
        text = "".join(c for c in text if c not in _APOSTROPHES)

    text = _transliterate(text)
    if policy.uppercase:
        # NFKD может дать строчные буквы: "ª" -> "a"
        text = text.upper()
    if policy.strip_spaces_apostrophes:
        text = re.sub(r"[^A-Za-z]", "", text)
    else:
        text = re.sub(r"[^A-Za-z'\s]", "", text)
        text = re.sub(r"\s+", " ", text).strip()

    if not text:
        raise EmptyAfterNormalization(f"имя {raw!r} пустое после нормализации")
    return text


def normalize_initials(raw: Optional[str]) -> Optional[str]:
    """Инициалы: только буквы в верхнем регистре ("j. k." -> "JK")"""
    if raw is None:
        return None
    letters = re.sub(r"[^A-Z]", "", _transliterate(raw).upper())
    return letters or None


def parse_gender(raw: Optional[str]) -> Gender:
    value = (raw or "").strip().upper()
    if value in ("", "U", "UNKNOWN"):
        return Gender.UNKNOWN
    if value == "F":
        return Gender.F
    if value == "M":
        return Gender.M
    raise ValueError(f"неизвестный пол {raw!r} (ожидается F/M/пусто)")


@dataclass(frozen=True)
class Person:
    """Одна запись списка"""
    last_name_raw: str
    last_name: str
    group: str  # дисциплина / unit of assessment
    first_name_raw: Optional[str] = None
    first_name: Optional[str] = None
    gender: Gender = Gender.UNKNOWN
    region: Optional[str] = None
    institution: Optional[str] = None
    initials: Optional[str] = None

    def name(self, selector: NameField) -> Optional[str]:
        return self.first_name if selector is NameField.FIRST else self.last_name


class Roster:
    """
    Неизменяемый список сотрудников с индексом по группам.

    field_selector задаёт, какое поле имени читают все анализы.
    """

    __slots__ = ("_persons", "_group_index", "_field")

    def __init__(self, persons: Iterable[Person], field_selector: NameField = NameField.LAST):
        persons = tuple(persons)
        if field_selector is NameField.FIRST:
            missing = sum(1 for p in persons if not p.first_name)
            if missing:
                raise ValueError(f"{missing} записей без имени, нельзя анализировать поле first")

        index: Dict[str, List[int]] = {}
        for i, person in enumerate(persons):
            index.setdefault(person.group, []).append(i)

        self._persons = persons
        self._group_index = MappingProxyType({g: tuple(ix) for g, ix in index.items()})
        self._field = field_selector

    @property
    def persons(self) -> Tuple[Person, ...]:
        return self._persons

    @property
    def group_index(self) -> Mapping[str, Tuple[int, ...]]:
        return self._group_index

    @property
    def field_selector(self) -> NameField:
        return self._field

    def __len__(self) -> int:
        return len(self._persons)

    def __iter__(self):
        return iter(self._persons)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Roster):
            return NotImplemented
        return self._field is other._field and self._persons == other._persons

    def __hash__(self) -> int:
        return hash((self._field, self._persons))

    def __repr__(self) -> str:
        return f"Roster(persons={len(self)}, groups={len(self._group_index)}, field={self._field.value})"

    def groups(self) -> List[str]:
        """Метки групп в детерминированном (лексикографическом) порядке"""
        return sorted(self._group_index)

    def names(self) -> List[str]:
        return [p.name(self._field) for p in self._persons]

    def group_names(self, group: str) -> List[str]:
        return [self._persons[i].name(self._field) for i in self._group_index.get(group, ())]

    def group_size(self, group: str) -> int:
        return len(self._group_index.get(group, ()))

    def filter(self, predicate: Callable[[Person], bool]) -> "Roster":
        """Подсписок с сохранением порядка; пул и группы строятся заново"""
        return Roster((p for p in self._persons if predicate(p)), self._field)

    def select_field(self, selector: NameField) -> "Roster":
        """
        Переключает анализируемое поле. Для first выкидывает записи без имени.
        """
        if selector is NameField.FIRST:
            kept = [p for p in self._persons if p.first_name]
            dropped = len(self._persons) - len(kept)
            if dropped:
                logger.warning(f"⚠️ {dropped} записей без имени исключены из анализа имён")
            return Roster(kept, selector)
        return Roster(self._persons, selector)


# ============== Загрузка ==============

CANONICAL_COLUMNS = ("last_name", "first_name", "gender", "group", "region", "institution", "initials")
REQUIRED_COLUMNS = ("last_name", "group")


@dataclass(frozen=True)
class ColumnSchema:
    """Соответствие поле Person -> имя колонки во входном файле"""
    last_name: str = "last_name"
    first_name: str = "first_name"
    gender: str = "gender"
    group: str = "group"
    region: str = "region"
    institution: str = "institution"
    initials: str = "initials"

    @classmethod
    def parse(cls, text: Optional[str]) -> "ColumnSchema":
        """
        Разбирает строку вида "last_name=Cognome,group=SSD".
        """
        if not text:
            return cls()
        known = {f.name for f in fields(cls)}
        mapping: Dict[str, str] = {}
        for item in text.split(","):
            item = item.strip()
            if not item:
                continue
            if "=" not in item:
                raise SchemaError(f"ожидается поле=колонка, получено {item!r}")
            key, column = (s.strip() for s in item.split("=", 1))
            if key not in known:
                raise SchemaError(f"неизвестное поле {key!r}, допустимо: {', '.join(sorted(known))}")
            mapping[key] = column
        return cls(**mapping)


@dataclass
class IngestionReport:
    rows_read: int = 0
    rows_kept: int = 0
    rows_dropped: int = 0
    drop_reasons: Dict[str, int] = field(default_factory=dict)

    def drop(self, reason: str) -> None:
        self.rows_dropped += 1
        self.drop_reasons[reason] = self.drop_reasons.get(reason, 0) + 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rows_read": self.rows_read,
            "rows_kept": self.rows_kept,
            "rows_dropped": self.rows_dropped,
            "drop_reasons": dict(sorted(self.drop_reasons.items())),
        }


RosterSource = Union[str, Path, pd.DataFrame, Iterable[Mapping[str, Any]]]


def _read_frame(source: RosterSource, delimiter: str) -> pd.DataFrame:
    if isinstance(source, pd.DataFrame):
        return source.fillna("").astype(str)
    if isinstance(source, (str, Path)) or hasattr(source, "read"):
        try:
            return pd.read_csv(
                source,
                sep=delimiter,
                dtype=str,
                keep_default_na=False,
                encoding="utf-8",
                skipinitialspace=False,
            )
        except pd.errors.EmptyDataError as e:
            raise SchemaError(f"нет строки заголовка: {e}") from e
        except pd.errors.ParserError as e:
            row = _parser_error_row(str(e))
            raise ParseError(row, str(e)) from e
    return pd.DataFrame(list(source)).fillna("").astype(str)


def _parser_error_row(message: str) -> int:
    m = re.search(r"line (\d+)", message)
    return int(m.group(1)) if m else 0


def _cell(row: Mapping[str, Any], column: str, present: set) -> str:
    if column not in present:
        return ""
    value = row[column]
    return "" if value is None else str(value).strip()


def ingest_roster(
    source: RosterSource,
    policy: NormalizationPolicy = DEFAULT_POLICY,
    schema: Optional[ColumnSchema] = None,
    delimiter: str = ",",
    field_selector: NameField = NameField.LAST,
) -> Tuple[Roster, IngestionReport]:
    """
    Загружает список из CSV (или потока словарей) и нормализует имена.

    Записи, которые не прошли нормализацию, выкидываются и считаются в отчёте.

    Returns:
        (Roster, IngestionReport)

    Raises:
        SchemaError: нет обязательной колонки
        ParseError: строка не разбирается (номер строки в ошибке)
    """
    schema = schema or ColumnSchema()
    frame = _read_frame(source, delimiter)
    present = set(frame.columns)

    for name in REQUIRED_COLUMNS:
        column = getattr(schema, name)
        if column not in present:
            raise SchemaError(f"нет обязательной колонки {column!r} (поле {name})")

    report = IngestionReport()
    persons: List[Person] = []

    # строка 1 - заголовок, данные начинаются со второй
    for row_no, row in enumerate(frame.to_dict(orient="records"), start=2):
        report.rows_read += 1

        group = _cell(row, schema.group, present)
        if not group:
            report.drop("empty_group")
            continue

        last_raw = _cell(row, schema.last_name, present)
        try:
            last_name = normalize_name(last_raw, policy)
        except EmptyAfterNormalization:
            report.drop("empty_last_name")
            continue

        first_raw = _cell(row, schema.first_name, present) or None
        first_name = None
        if first_raw is not None:
            try:
                first_name = normalize_name(first_raw, policy)
            except EmptyAfterNormalization:
                first_name = None

        try:
            gender = parse_gender(_cell(row, schema.gender, present))
        except ValueError as e:
            raise ParseError(row_no, str(e)) from e

        persons.append(
            Person(
                last_name_raw=last_raw,
                last_name=last_name,
                group=group,
                first_name_raw=first_raw,
                first_name=first_name,
                gender=gender,
                region=_cell(row, schema.region, present) or None,
                institution=_cell(row, schema.institution, present) or None,
                initials=normalize_initials(_cell(row, schema.initials, present) or None),
            )
        )

    report.rows_kept = len(persons)
    logger.info(
        f"📥 Загружено {report.rows_kept} из {report.rows_read} записей"
        + (f", выкинуто {report.rows_dropped}: {report.drop_reasons}" if report.rows_dropped else "")
    )

    roster = Roster(persons)
    if field_selector is not NameField.LAST:
        roster = roster.select_field(field_selector)
    return roster, report


def write_roster(roster: Roster, path: Union[str, Path], delimiter: str = ",") -> None:
    """
    Пишет список в каноническую CSV-схему (сырые значения, чтобы повторная
    загрузка дала тот же Roster).
    """
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter=delimiter, lineterminator="\n")
        writer.writerow(CANONICAL_COLUMNS)
        for p in roster:
            writer.writerow([
                p.last_name_raw,
                p.first_name_raw or "",
                "" if p.gender is Gender.UNKNOWN else p.gender.value,
                p.group,
                p.region or "",
                p.institution or "",
                p.initials or "",
            ])


def dedup_uk(roster: Roster) -> Roster:
    """
    Убирает повторные записи одного профессора: одинаковые фамилия, инициалы
    и дисциплина. Остаётся первая запись. Пустые инициалы - тоже ключ.
    """
    seen = set()
    kept: List[Person] = []
    for p in roster:
        key = (p.last_name, p.initials or "", p.group)
        if key in seen:
            continue
        seen.add(key)
        kept.append(p)

    removed = len(roster) - len(kept)
    if removed:
        logger.info(f"🧹 Удалено дублей: {removed}")
    return Roster(kept, roster.field_selector)


def distinct_count(names: Iterable[str]) -> int:
    """Число различных имён"""
    return len(set(names))
