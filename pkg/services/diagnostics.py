"""
Диагностика: logit(p) против доли женщин (МНК), частоты имён, самые частые
имена по группам.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.special import logit

from services.roster import Gender, Roster

logger = logging.getLogger(__name__)

CLAMP_EPSILON = 1e-6


class DegenerateDesign(ValueError):
    """Все значения ковариаты одинаковы"""


@dataclass(frozen=True)
class LogitPoint:
    covariate: float
    p: float
    logit_p: float  # logit от обрезанного p
    clamped: bool
    label: Optional[str] = None


@dataclass(frozen=True)
class LogitFit:
    slope: float
    intercept: float
    r_squared: float
    clamp_epsilon: float
    points: List[LogitPoint]

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "clamp_epsilon": self.clamp_epsilon,
            "n_points": len(self.points),
            "n_clamped": sum(1 for pt in self.points if pt.clamped),
        }


def logit_regression(
    points: Sequence[Tuple[float, float]],
    epsilon: float = CLAMP_EPSILON,
    labels: Optional[Sequence[str]] = None,
) -> LogitFit:
    """
    МНК по точкам (ковариата, logit(p)). Это диагностика, а не модель для
    выводов: если доля женщин объясняет p-values, точки ложатся на прямую.

    Raises:
        DegenerateDesign: меньше 2 точек или все ковариаты равны
    """
    if len(points) < 2:
        raise DegenerateDesign("нужно минимум 2 точки")
    x = np.asarray([float(c) for c, _ in points], dtype=np.float64)
    raw_p = np.asarray([float(p) for _, p in points], dtype=np.float64)
    if np.unique(x).size < 2:
        raise DegenerateDesign("все значения ковариаты одинаковы")

    clamped_p = np.clip(raw_p, epsilon, 1.0 - epsilon)
    y = logit(clamped_p)

    fit = stats.linregress(x, y)
    r2 = float(fit.rvalue) ** 2 if np.isfinite(fit.rvalue) else 0.0
    r2 = min(1.0, max(0.0, r2))

    labels = list(labels) if labels is not None else [None] * len(points)
    pts = [
        LogitPoint(
            covariate=float(x[i]),
            p=float(raw_p[i]),
            logit_p=float(y[i]),
            clamped=bool(clamped_p[i] != raw_p[i]),
            label=labels[i],
        )
        for i in range(len(points))
    ]
    return LogitFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=r2,
        clamp_epsilon=epsilon,
        points=pts,
    )


@dataclass(frozen=True)
class NameFrequencyTable:
    scope: str  # "*" для всего списка или метка группы
    persons: int
    distinct: int
    top: List[Tuple[str, int]]
    counts: List[Tuple[str, int]]  # полная таблица, тот же порядок

    @property
    def names_per_person(self) -> float:
        return self.distinct / self.persons if self.persons else float("nan")


WHOLE_SCOPE = "*"


def _frequency_table(scope: str, names: Sequence[str], k: int) -> NameFrequencyTable:
    # по убыванию частоты, при равенстве - по алфавиту
    ordered = sorted(Counter(names).items(), key=lambda kv: (-kv[1], kv[0]))
    return NameFrequencyTable(
        scope=scope,
        persons=len(names),
        distinct=len(ordered),
        top=ordered[:k],
        counts=ordered,
    )


def name_frequencies(
    roster: Roster,
    scope: Literal["whole", "group"] = "whole",
    k: int = 10,
) -> Dict[str, NameFrequencyTable]:
    """Частоты анализируемого имени по всему списку или по группам"""
    if k < 1:
        raise ValueError("k должно быть >= 1")
    if scope == "whole":
        return {WHOLE_SCOPE: _frequency_table(WHOLE_SCOPE, roster.names(), k)}
    if scope == "group":
        return {g: _frequency_table(g, roster.group_names(g), k) for g in roster.groups()}
    raise ValueError(f"неизвестный scope {scope!r}")


@dataclass(frozen=True)
class GenderShare:
    n_female: int
    n_male: int
    n_unknown: int

    @property
    def fraction(self) -> Optional[float]:
        known = self.n_female + self.n_male
        return self.n_female / known if known else None


def women_fraction(roster: Roster) -> Dict[str, GenderShare]:
    """Доля женщин F/(F+M) по группам; Unknown в знаменатель не входит"""
    out: Dict[str, GenderShare] = {}
    for group in roster.groups():
        genders = Counter(roster.persons[i].gender for i in roster.group_index[group])
        out[group] = GenderShare(
            n_female=genders.get(Gender.F, 0),
            n_male=genders.get(Gender.M, 0),
            n_unknown=genders.get(Gender.UNKNOWN, 0),
        )
    unknown = sum(s.n_unknown for s in out.values())
    if unknown:
        logger.info(f"ℹ️ Без пола: {unknown} записей (не входят в долю женщин)")
    return out


def gendered_name_ratio(roster: Roster) -> Dict[str, float]:
    """
    Различных имён на человека по полу.
    """
    out: Dict[str, float] = {}
    for gender in (Gender.F, Gender.M):
        names = [p.name(roster.field_selector) for p in roster if p.gender is gender]
        if names:
            out[gender.value] = len(set(names)) / len(names)
    return out
