"""
Сервис теста на дефицит фамилий.

Для группы из N человек с L различными именами тянем N человек без
возвращения из пула и считаем p = P(L' <= L). Монте-Карло + точный DP-оракул
для маленьких пулов.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Dict, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import gammaln

from config import EXACT_MAX_KINDS, EXACT_MAX_TOTAL, SCARCITY_MIN_GROUP_SIZE, SCARCITY_SEED, SCARCITY_SIMS
from services.roster import Roster, distinct_count
from services.sampling import distinct_histogram, stream_key

logger = logging.getLogger(__name__)


class SampleLargerThanPool(ValueError):
    """Размер выборки больше пула"""


class InvalidObservedCount(ValueError):
    """Наблюдаемое L больше размера выборки"""


class InstanceTooLarge(RuntimeError):
    """Задача слишком велика для точного DP"""


class EmptyPool(ValueError):
    """Пул имён пуст"""


class TestConfig(BaseModel):
    """Параметры теста (неизменяемые)"""
    model_config = ConfigDict(frozen=True)

    n_sims: int = Field(default=SCARCITY_SIMS, ge=1)
    min_group_size: int = Field(default=SCARCITY_MIN_GROUP_SIZE, ge=1)
    seed: int = Field(default=SCARCITY_SEED, ge=0, lt=2**64)
    # событие всегда включающее: L' <= L
    inclusive: Literal[True] = True

    # pytest не должен принимать класс за набор тестов
    __test__ = False


@dataclass(frozen=True)
class ScarcityResult:
    """Результат теста для одной группы"""
    group: str
    n_people: int  # N
    n_distinct: int  # L
    p_hat: Optional[float]  # None для пропущенных групп
    n_sims: int
    seed: int
    pool_size: int
    pool_distinct: int
    skipped: bool = False
    p_excess: Optional[float] = None  # P(L' >= L): избыток имён
    mean_distinct: Optional[float] = None  # среднее L' по симуляциям
    stratum: Optional[str] = None  # регион / пол / и т.п.

    def to_dict(self) -> Dict:
        return {
            "group": self.group,
            "stratum": self.stratum,
            "n_people": self.n_people,
            "n_distinct": self.n_distinct,
            "p_hat": self.p_hat,
            "p_excess": self.p_excess,
            "mean_distinct": self.mean_distinct,
            "n_sims": self.n_sims,
            "seed": self.seed,
            "pool_size": self.pool_size,
            "pool_distinct": self.pool_distinct,
            "skipped": self.skipped,
        }


class NamePool:
    """
    Пул имён, закодированный целыми числами. Только чтение - можно делить
    между потоками.
    """

    __slots__ = ("codes", "n_names", "vocabulary")

    def __init__(self, names: Sequence[str]):
        if len(names) == 0:
            raise EmptyPool("пул имён пуст")
        vocabulary, codes = np.unique(np.asarray(names, dtype=object).astype(str), return_inverse=True)
        self.codes = codes.astype(np.int64).ravel()
        self.n_names = int(len(vocabulary))
        self.vocabulary = vocabulary

    @property
    def size(self) -> int:
        return int(self.codes.shape[0])

    @classmethod
    def coerce(cls, pool: Union["NamePool", Roster, Sequence[str]]) -> "NamePool":
        if isinstance(pool, NamePool):
            return pool
        if isinstance(pool, Roster):
            return cls(pool.names())
        return cls(list(pool))


def _p_from_histogram(hist: np.ndarray, l_obs: int, n_sims: int) -> tuple:
    at_most = int(hist[: l_obs + 1].sum())
    at_least = int(hist[l_obs:].sum())
    p_hat = (1 + at_most) / (1 + n_sims)
    p_excess = (1 + at_least) / (1 + n_sims)
    mean = float(np.dot(np.arange(hist.shape[0]), hist) / n_sims)
    return p_hat, p_excess, mean


def mc_pvalue(
    pool: Union[NamePool, Roster, Sequence[str]],
    n: int,
    l_obs: int,
    cfg: TestConfig,
    group: str = "",
    workers: int = 1,
    stratum: Optional[str] = None,
) -> ScarcityResult:
    """
    Монте-Карло оценка P(L' <= l_obs) для выборки размера n без возвращения.

    p_hat = (1 + #{L' <= l_obs}) / (1 + n_sims), нулём не бывает.
    Результат зависит только от (pool, n, l_obs, seed, n_sims, group, stratum).

    Raises:
        SampleLargerThanPool, InvalidObservedCount
    """
    name_pool = NamePool.coerce(pool)
    if n < 1 or n > name_pool.size:
        raise SampleLargerThanPool(f"выборка {n} при пуле {name_pool.size}")
    if l_obs < 0 or l_obs > n:
        raise InvalidObservedCount(f"L={l_obs} при N={n}")

    key = stream_key(cfg.seed, group, stratum)
    hist = distinct_histogram(name_pool.codes, name_pool.n_names, n, key, cfg.n_sims, workers)
    p_hat, p_excess, mean = _p_from_histogram(hist, l_obs, cfg.n_sims)

    return ScarcityResult(
        group=group,
        n_people=n,
        n_distinct=l_obs,
        p_hat=p_hat,
        n_sims=cfg.n_sims,
        seed=cfg.seed,
        pool_size=name_pool.size,
        pool_distinct=name_pool.n_names,
        p_excess=p_excess,
        mean_distinct=mean,
        stratum=stratum,
    )


# ============== Точный оракул ==============

def _check_exact(multiplicities: Sequence[int], n: int, max_total: int, max_kinds: int) -> List[int]:
    mults = [int(m) for m in multiplicities if int(m) > 0]
    total = sum(mults)
    if total > max_total or len(mults) > max_kinds:
        raise InstanceTooLarge(f"пул {total} / имён {len(mults)} больше лимита {max_total} / {max_kinds}")
    if n < 0 or n > total:
        raise SampleLargerThanPool(f"выборка {n} при пуле {total}")
    return mults


def _binomials(top: int, n: int) -> np.ndarray:
    """C(j, n) для j = 0..top, целые Python"""
    out = np.zeros(top + 1, dtype=object)
    if n > top:
        return out
    value = 1
    out[n] = value
    for j in range(n, top):
        value = value * (j + 1) // (j + 1 - n)
        out[j + 1] = value
    return out


def exact_distribution(
    multiplicities: Sequence[int],
    n: int,
    max_total: int = EXACT_MAX_TOTAL,
    max_kinds: int = EXACT_MAX_KINDS,
) -> List[Fraction]:
    """
    Точное распределение L' (индекс = число различных имён).

    Производящая функция: prod_i (1 + y((1 + x)^m_i - 1)); коэффициент при
    x^n y^d - число выборок с d различными именами. DP ведётся по z = 1 + x,
    тогда каждое имя - это сдвиг на m_i и вычитание. В конце коэффициенты
    по z переводятся в коэффициент при x^n через C(j, n).
    """
    mults = _check_exact(multiplicities, n, max_total, max_kinds)
    k = len(mults)
    total = sum(mults)

    ways = np.zeros((k + 1, total + 1), dtype=object)
    ways[0, 0] = 1
    mass = 0
    for used, m in enumerate(mults):
        mass += m
        # d по убыванию: ways[d] ещё не обновлён
        for d in range(used, -1, -1):
            row = ways[d, : mass - m + 1]
            ways[d + 1, m : mass + 1] += row
            ways[d + 1, : mass - m + 1] -= row

    binoms = _binomials(total, n)
    denom = comb(total, n)
    return [Fraction(int(ways[d].dot(binoms)), denom) for d in range(k + 1)]


def exact_pvalue(
    multiplicities: Sequence[int],
    n: int,
    l_obs: int,
    max_total: int = EXACT_MAX_TOTAL,
    max_kinds: int = EXACT_MAX_KINDS,
) -> Fraction:
    """
    Точное P(L' <= l_obs). Число Fraction; float(...) при необходимости.

    Raises:
        InstanceTooLarge
    """
    dist = exact_distribution(multiplicities, n, max_total, max_kinds)
    return sum(dist[: l_obs + 1], Fraction(0))


def multiplicities_of(names: Sequence[str]) -> List[int]:
    return sorted(Counter(names).values(), reverse=True)


def expected_distinct(multiplicities: Sequence[int], n: int) -> float:
    """
    Разрежение (rarefaction): E[L'] = sum_i [1 - C(T - m_i, n) / C(T, n)].
    """
    mults = np.asarray([m for m in multiplicities if m > 0], dtype=np.float64)
    total = float(mults.sum())
    if n > total:
        raise SampleLargerThanPool(f"выборка {n} при пуле {int(total)}")

    def lncomb(a, b):
        return gammaln(a + 1) - gammaln(b + 1) - gammaln(a - b + 1)

    rest = total - mults
    safe = np.maximum(rest, n)
    absent = np.where(rest >= n, np.exp(lncomb(safe, n) - lncomb(total, n)), 0.0)
    return float(np.sum(1.0 - absent))


# ============== Анализ групп ==============

def analyze_groups(
    roster: Roster,
    pool: Union[NamePool, Roster, Sequence[str], None],
    cfg: TestConfig,
    workers: int = 1,
    stratum: Optional[str] = None,
) -> List[ScarcityResult]:
    """
    Тест для каждой группы списка. Группы меньше min_group_size помечаются
    skipped. Поток случайных чисел группы зависит только от (seed, слой, метка группы).

    Args:
        roster: анализируемые группы
        pool: пул имён (None = сам roster)
        cfg: параметры теста
        workers: число потоков на симуляции
        stratum: тег слоя для результатов

    Raises:
        EmptyPool
    """
    name_pool = NamePool.coerce(roster if pool is None else pool)
    logger.info(
        f"🎲 Анализ {len(roster.group_index)} групп"
        + (f" [{stratum}]" if stratum else "")
        + f": пул {name_pool.size} чел. / {name_pool.n_names} имён, S={cfg.n_sims}"
    )

    results: List[ScarcityResult] = []
    for group in roster.groups():
        names = roster.group_names(group)
        n = len(names)
        l_obs = distinct_count(names)

        if n < cfg.min_group_size:
            results.append(
                ScarcityResult(
                    group=group,
                    n_people=n,
                    n_distinct=l_obs,
                    p_hat=None,
                    n_sims=cfg.n_sims,
                    seed=cfg.seed,
                    pool_size=name_pool.size,
                    pool_distinct=name_pool.n_names,
                    skipped=True,
                    stratum=stratum,
                )
            )
            continue

        result = mc_pvalue(name_pool, n, l_obs, cfg, group=group, workers=workers, stratum=stratum)
        results.append(result)
        logger.debug(f"  {group}: N={n} L={l_obs} p={result.p_hat:.3g}")

    tested = sum(1 for r in results if not r.skipped)
    logger.info(f"✅ Протестировано групп: {tested}, пропущено (малые): {len(results) - tested}")
    return results
