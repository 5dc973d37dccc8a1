"""
Стратифицированный анализ: регионы и макрорегионы, пол, фильтр частых имён,
исключение групп, сводка по доле регионов с низким p.

Все операции - композиция фильтра списка и обычного analyze_groups:
каждый слой тянет выборки из своего собственного пула, если pool не задан.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from config import ALPHA
from services.roster import (
    DEFAULT_POLICY,
    EmptyAfterNormalization,
    Gender,
    NormalizationPolicy,
    Person,
    Roster,
    normalize_name,
)
from services.scarcity import NamePool, ScarcityResult, TestConfig, analyze_groups

logger = logging.getLogger(__name__)


class MacroRegion(str, Enum):
    NORTH = "North"
    CENTER = "Center"
    SOUTH = "South"
    SARDINIA = "Sardinia"
    SICILY = "Sicily"


# 20 регионов -> 5 макрорегионов
ITALIAN_MACRO_REGIONS: Dict[str, MacroRegion] = {
    "Aosta Valley": MacroRegion.NORTH,
    "Liguria": MacroRegion.NORTH,
    "Lombardy": MacroRegion.NORTH,
    "Piedmont": MacroRegion.NORTH,
    "Emilia-Romagna": MacroRegion.NORTH,
    "Friuli-Venezia Giulia": MacroRegion.NORTH,
    "Trentino-Alto Adige": MacroRegion.NORTH,
    "Veneto": MacroRegion.NORTH,
    "Lazio": MacroRegion.CENTER,
    "Marche": MacroRegion.CENTER,
    "Tuscany": MacroRegion.CENTER,
    "Umbria": MacroRegion.CENTER,
    "Abruzzo": MacroRegion.SOUTH,
    "Apulia": MacroRegion.SOUTH,
    "Basilicata": MacroRegion.SOUTH,
    "Calabria": MacroRegion.SOUTH,
    "Campania": MacroRegion.SOUTH,
    "Molise": MacroRegion.SOUTH,
    "Sardinia": MacroRegion.SARDINIA,
    "Sicily": MacroRegion.SICILY,
}


def _region_key(region: str) -> str:
    return " ".join(region.replace("_", " ").split()).casefold()


class MacroRegionMap:
    """Регион -> макрорегион. Сравнение названий без учёта регистра"""

    def __init__(self, mapping: Mapping[str, MacroRegion]):
        self._labels = dict(mapping)
        self._by_key = {_region_key(r): m for r, m in mapping.items()}
        if len(self._by_key) != len(self._labels):
            raise ValueError("регионы в карте повторяются")

    def __len__(self) -> int:
        return len(self._labels)

    @property
    def regions(self) -> List[str]:
        return list(self._labels)

    def macro_of(self, region: Optional[str]) -> Optional[MacroRegion]:
        if not region:
            return None
        return self._by_key.get(_region_key(region))

    def regions_of(self, macro: MacroRegion) -> List[str]:
        return [r for r, m in self._labels.items() if m is macro]


def italian_macro_map() -> MacroRegionMap:
    return MacroRegionMap(ITALIAN_MACRO_REGIONS)


def load_macro_map(path: Union[str, Path]) -> MacroRegionMap:
    """
    Файл "регион=макрорегион", по строке. Пустые строки и # пропускаются.
    """
    known = {m.value.casefold(): m for m in MacroRegion}
    mapping: Dict[str, MacroRegion] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: ожидается регион=макрорегион")
            region, macro = (s.strip() for s in line.split("=", 1))
            if macro.casefold() not in known:
                allowed = ", ".join(m.value for m in MacroRegion)
                raise ValueError(f"{path}:{line_no}: неизвестный макрорегион {macro!r} ({allowed})")
            mapping[region] = known[macro.casefold()]
    return MacroRegionMap(mapping)


@dataclass(frozen=True)
class CommonNameList:
    names: FrozenSet[str]
    label: str = "common"

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def __len__(self) -> int:
        return len(self.names)


def load_common_names(
    path: Union[str, Path],
    policy: NormalizationPolicy = DEFAULT_POLICY,
    label: Optional[str] = None,
) -> CommonNameList:
    """Одно сырое имя на строку; нормализуется активной политикой"""
    names = set()
    skipped = 0
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            try:
                names.add(normalize_name(line.strip(), policy))
            except EmptyAfterNormalization:
                skipped += 1
    if skipped:
        logger.warning(f"⚠️ {path}: пропущено {skipped} строк без букв")
    logger.info(f"📖 Список частых имён: {len(names)}")
    return CommonNameList(names=frozenset(names), label=label or Path(path).stem)


# ============== Фильтры ==============

def restrict(roster: Roster, predicate: Callable[[Person], bool]) -> Roster:
    """Подсписок по предикату; группы и пул строятся заново"""
    return roster.filter(predicate)


def by_region(region: str) -> Callable[[Person], bool]:
    key = _region_key(region)
    return lambda p: bool(p.region) and _region_key(p.region) == key


def by_macro_region(macro: MacroRegion, macro_map: MacroRegionMap) -> Callable[[Person], bool]:
    return lambda p: macro_map.macro_of(p.region) is macro


def by_gender(gender: Gender) -> Callable[[Person], bool]:
    return lambda p: p.gender is gender


def filter_common(roster: Roster, common: CommonNameList) -> Roster:
    """Оставляет только людей, чьё анализируемое имя есть в списке"""
    if not len(common):
        raise ValueError("список частых имён пуст")
    selector = roster.field_selector
    return roster.filter(lambda p: p.name(selector) in common)


def exclude_groups(roster: Roster, labels: Iterable[str]) -> Roster:
    labels = set(labels)
    if not labels:
        return roster
    return roster.filter(lambda p: p.group not in labels)


# ============== Анализы по слоям ==============

PoolOverride = Union[Roster, NamePool, None]


def _stratum_pool(sub: Roster, shared: Optional[NamePool]) -> Union[Roster, NamePool]:
    # по умолчанию слой тянет выборки из своего пула
    return sub if shared is None else shared


def _shared_pool(pool: PoolOverride) -> Optional[NamePool]:
    if pool is None:
        return None
    shared = NamePool.coerce(pool)
    logger.info(f"🔁 Общий пул для всех слоёв: {shared.size} чел. / {shared.n_names} имён")
    return shared


def gender_split_analyze(
    roster: Roster,
    cfg: TestConfig,
    workers: int = 1,
    pool: PoolOverride = None,
) -> Tuple[List[ScarcityResult], List[ScarcityResult]]:
    """
    Два независимых анализа: женщины и мужчины, каждый со своим пулом.
    Пол Unknown не участвует. pool заменяет пул слоя (проверка устойчивости).
    """
    shared = _shared_pool(pool)
    out = []
    for gender in (Gender.F, Gender.M):
        sub = restrict(roster, by_gender(gender))
        if not len(sub):
            logger.info(f"ℹ️ Пол {gender.value}: нет записей")
            out.append([])
            continue
        out.append(analyze_groups(sub, _stratum_pool(sub, shared), cfg, workers=workers, stratum=gender.value))
    return out[0], out[1]


def macro_sweep(
    roster: Roster,
    cfg: TestConfig,
    macro_map: Optional[MacroRegionMap] = None,
    workers: int = 1,
    pool: PoolOverride = None,
) -> Dict[MacroRegion, List[ScarcityResult]]:
    """Пять макрорегиональных анализов с макрорегиональными пулами"""
    macro_map = macro_map or italian_macro_map()
    shared = _shared_pool(pool)
    out: Dict[MacroRegion, List[ScarcityResult]] = {}
    for macro in MacroRegion:
        sub = restrict(roster, by_macro_region(macro, macro_map))
        if not len(sub):
            out[macro] = []
            continue
        out[macro] = analyze_groups(sub, _stratum_pool(sub, shared), cfg, workers=workers, stratum=macro.value)
    return out


@dataclass(frozen=True)
class RegionCount:
    n_regions_tested: int
    n_regions_low_p: int

    @property
    def proportion(self) -> Optional[float]:
        if self.n_regions_tested == 0:
            return None
        return self.n_regions_low_p / self.n_regions_tested

    @property
    def label(self) -> str:
        """Как в колонке "Count": "8/16" """
        return f"{self.n_regions_low_p}/{self.n_regions_tested}"


@dataclass
class RegionSummary:
    alpha: float
    counts: Dict[str, RegionCount]
    cells: List[ScarcityResult] = field(default_factory=list)

    def ranking(self) -> List[str]:
        """Группы по убыванию доли регионов с низким p (без протестированных - в конце)"""
        def key(group):
            prop = self.counts[group].proportion
            return (prop is None, -(prop or 0.0), group)

        return sorted(self.counts, key=key)

    def flagged_cells(self) -> List[ScarcityResult]:
        return [c for c in self.cells if not c.skipped and c.p_hat <= self.alpha]


def region_sweep(
    roster: Roster,
    cfg: TestConfig,
    alpha: float = ALPHA,
    workers: int = 1,
    pool: PoolOverride = None,
) -> RegionSummary:
    """
    Для каждого региона - анализ с региональным пулом и порогом размера.
    Считаем, в скольких регионах группа получила p <= alpha.
    Регионы сравниваются без учёта регистра, как в by_region.
    """
    labels: Dict[str, str] = {}
    for name in sorted({p.region for p in roster if p.region}):
        labels.setdefault(_region_key(name), name)
    missing = sum(1 for p in roster if not p.region)
    if missing:
        logger.warning(f"⚠️ {missing} записей без региона не участвуют в региональном анализе")

    shared = _shared_pool(pool)
    tested = {g: 0 for g in roster.groups()}
    low = {g: 0 for g in roster.groups()}
    cells: List[ScarcityResult] = []

    for key in sorted(labels):
        region = labels[key]
        sub = restrict(roster, by_region(region))
        for result in analyze_groups(sub, _stratum_pool(sub, shared), cfg, workers=workers, stratum=region):
            cells.append(result)
            if result.skipped:
                continue
            tested[result.group] += 1
            if result.p_hat <= alpha:
                low[result.group] += 1

    counts = {g: RegionCount(tested[g], low[g]) for g in roster.groups()}
    logger.info(f"🗺️ Регионов: {len(labels)}, ячеек с p <= {alpha}: {sum(low.values())}")
    return RegionSummary(alpha=alpha, counts=counts, cells=cells)


# ============== Доля частых имён ==============

@dataclass(frozen=True)
class CommonalityReport:
    fractions: Dict[str, float]
    mean: float
    cutoff: float  # эмпирический 5-й перцентиль
    low_groups: FrozenSet[str]


def common_name_proportion(
    roster: Roster,
    common: CommonNameList,
    percentile: float = 5.0,
) -> CommonalityReport:
    """
    Доля частых имён в каждой группе, среднее по группам и группы ниже
    нижних 5% распределения (кандидаты на иммиграцию).
    """
    selector = roster.field_selector
    fractions: Dict[str, float] = {}
    for group in roster.groups():
        idx = roster.group_index[group]
        hits = sum(1 for i in idx if roster.persons[i].name(selector) in common)
        fractions[group] = hits / len(idx)

    if not fractions:
        return CommonalityReport(fractions={}, mean=float("nan"), cutoff=float("nan"), low_groups=frozenset())

    values = np.fromiter(fractions.values(), dtype=np.float64)
    cutoff = float(np.percentile(values, percentile))
    low = frozenset(g for g, f in fractions.items() if f < cutoff)
    return CommonalityReport(fractions=fractions, mean=float(values.mean()), cutoff=cutoff, low_groups=low)
