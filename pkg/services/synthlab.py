"""
Лаборатория синтетических списков: законы частот имён, непотизм по отцовской
линии, приток иммигрантов с редкими именами, перекос по полу. Плюс кривые
мощности теста.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, FrozenSet, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.stats import zipfian

from config import COMMON_LIST_SIZE
from services.roster import (
    DEFAULT_POLICY,
    EmptyAfterNormalization,
    Gender,
    Person,
    Roster,
    normalize_name,
)
from services.scarcity import NamePool, TestConfig, mc_pvalue
from services.strata import CommonNameList, by_gender, restrict

logger = logging.getLogger(__name__)


class InvalidConfig(ValueError):
    """Некорректные параметры генератора"""


class SynthConfig(BaseModel):
    """
    Параметры генератора. По умолчанию Zipf(s=1) откалиброван так, чтобы на
    61 340 человек приходилось ~44% различных фамилий.
    """
    model_config = ConfigDict(frozen=True)

    n_people: int = Field(default=61340, ge=1)

    # закон частот фамилий
    name_law: Literal["zipf", "uniform", "empirical"] = "zipf"
    zipf_s: float = Field(default=1.0, gt=0)
    alphabet_size: int = Field(default=2_000_000, ge=1)
    empirical_file: Optional[str] = None

    # группы
    n_groups: int = Field(default=20, ge=1)
    group_size_law: Literal["equal", "multinomial"] = "equal"
    group_sizes: Optional[List[int]] = None

    # регион -> вес
    regions: Dict[str, float] = Field(default_factory=dict)

    # пол
    female_fraction: float = Field(default=0.35, ge=0, le=1)
    group_female_fraction: Dict[str, float] = Field(default_factory=dict)

    # непотизм: доля наймов, копирующих фамилию мужчины той же группы
    nepotism_rate: float = Field(default=0.0, ge=0, le=1)
    nepotism_group_rates: Dict[str, float] = Field(default_factory=dict)
    nepotism_regions: Optional[List[str]] = None

    # иммиграция: имена из непересекающегося резерва редких имён
    immigrant_rate: float = Field(default=0.0, ge=0, le=1)
    immigrant_group_rates: Dict[str, float] = Field(default_factory=dict)
    rare_reservoir_size: int = Field(default=100_000, ge=1)

    # имена (first name), отдельные алфавиты для мужчин и женщин
    first_name_alphabet: int = Field(default=3000, ge=1)
    first_name_s: float = Field(default=1.0, gt=0)

    common_list_size: int = Field(default=COMMON_LIST_SIZE, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @property
    def group_labels(self) -> List[str]:
        width = max(2, len(str(self.n_groups)))
        return [f"G{i + 1:0{width}d}" for i in range(self.n_groups)]

    @model_validator(mode="after")
    def _check(self) -> "SynthConfig":
        labels = set(self.group_labels)
        if self.group_sizes is not None:
            if len(self.group_sizes) != self.n_groups:
                raise ValueError("group_sizes: нужно ровно n_groups значений")
            if any(s < 0 for s in self.group_sizes) or sum(self.group_sizes) != self.n_people:
                raise ValueError("group_sizes: сумма должна быть равна n_people")
        for name in ("group_female_fraction", "nepotism_group_rates", "immigrant_group_rates"):
            rates = getattr(self, name)
            unknown = set(rates) - labels
            if unknown:
                raise ValueError(f"{name}: неизвестные группы {sorted(unknown)}")
            if any(not 0.0 <= v <= 1.0 for v in rates.values()):
                raise ValueError(f"{name}: доли должны быть в [0, 1]")
        if any(w < 0 for w in self.regions.values()) or (self.regions and sum(self.regions.values()) <= 0):
            raise ValueError("regions: веса должны быть неотрицательны и не все нулевые")
        if self.nepotism_regions is not None and self.regions:
            unknown = set(self.nepotism_regions) - set(self.regions)
            if unknown:
                raise ValueError(f"nepotism_regions: неизвестные регионы {sorted(unknown)}")
        if self.name_law == "empirical" and not self.empirical_file:
            raise ValueError("name_law=empirical требует empirical_file")
        return self


def make_synth_config(**params) -> SynthConfig:
    """SynthConfig с ошибками валидации в виде InvalidConfig"""
    try:
        return SynthConfig(**params)
    except ValidationError as e:
        raise InvalidConfig(str(e)) from e


_LIST_FIELDS = {"group_sizes", "nepotism_regions"}
_MAP_FIELDS = {"regions", "group_female_fraction", "nepotism_group_rates", "immigrant_group_rates"}


def _parse_map(value: str) -> Dict[str, float]:
    out: Dict[str, float] = {}
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise InvalidConfig(f"ожидается ключ:значение, получено {item!r}")
        key, num = item.rsplit(":", 1)
        out[key.strip()] = float(num)
    return out


def load_synth_config(path: Union[str, Path], **overrides) -> SynthConfig:
    """
    Читает SynthConfig из key-value файла (формат .env).
    Ключи без учёта регистра: N_PEOPLE=10000, NEPOTISM_GROUP_RATES=G01:0.3,...
    """
    if not Path(path).exists():
        raise InvalidConfig(f"файл конфигурации не найден: {path}")
    raw = dotenv_values(path)
    params: Dict[str, object] = {}
    known = set(SynthConfig.model_fields)
    for key, value in raw.items():
        name = key.strip().lower()
        if name not in known:
            raise InvalidConfig(f"неизвестный параметр {key!r}")
        if value is None or value.strip() == "":
            continue
        try:
            if name in _MAP_FIELDS:
                params[name] = _parse_map(value)
            elif name in _LIST_FIELDS:
                items = [v.strip() for v in value.split(",") if v.strip()]
                params[name] = [int(v) for v in items] if name == "group_sizes" else items
            else:
                params[name] = value.strip()
        except ValueError as e:
            raise InvalidConfig(f"{key}: {e}") from e
    params.update({k: v for k, v in overrides.items() if v is not None})
    return make_synth_config(**params)


# ============== Законы частот ==============

def _letters(i: int) -> str:
    """Биективная запись по основанию 26: 0 -> A, 25 -> Z, 26 -> AA"""
    i += 1
    out = []
    while i > 0:
        i -= 1
        out.append(chr(65 + i % 26))
        i //= 26
    return "".join(reversed(out))


def native_name(i: int) -> str:
    return "N" + _letters(i)


def rare_name(i: int) -> str:
    return "X" + _letters(i)


@lru_cache(maxsize=16)
def _zipf_cdf(s: float, k: int) -> np.ndarray:
    pmf = zipfian.pmf(np.arange(1, k + 1), s, k)
    cdf = np.cumsum(pmf)
    cdf /= cdf[-1]
    return cdf


@lru_cache(maxsize=4)
def _empirical_law(path: str) -> Tuple[Tuple[str, ...], np.ndarray]:
    frame = pd.read_csv(path, dtype={"name": str}, keep_default_na=False)
    if not {"name", "count"} <= set(frame.columns):
        raise InvalidConfig(f"{path}: нужны колонки name,count")
    names, counts = [], []
    for raw, count in zip(frame["name"], frame["count"]):
        try:
            names.append(normalize_name(raw, DEFAULT_POLICY))
        except EmptyAfterNormalization:
            continue
        counts.append(float(count))
    if not names:
        raise InvalidConfig(f"{path}: нет ни одного имени")
    table = pd.DataFrame({"name": names, "count": counts}).groupby("name", as_index=False)["count"].sum()
    table = table.sort_values(["count", "name"], ascending=[False, True])
    cdf = np.cumsum(table["count"].to_numpy(dtype=np.float64))
    cdf /= cdf[-1]
    return tuple(table["name"]), cdf


class _NameLaw:
    """Закон частот: индекс имени -> строка, ранжированный по убыванию частоты"""

    def __init__(self, cfg: SynthConfig):
        self._vocab: Optional[Tuple[str, ...]] = None
        self._vocab_set: FrozenSet[str] = frozenset()
        if cfg.name_law == "zipf":
            self.cdf = _zipf_cdf(float(cfg.zipf_s), int(cfg.alphabet_size))
        elif cfg.name_law == "uniform":
            k = int(cfg.alphabet_size)
            self.cdf = np.arange(1, k + 1, dtype=np.float64) / k
        else:
            if not Path(cfg.empirical_file).exists():
                raise InvalidConfig(f"файл частот не найден: {cfg.empirical_file}")
            self._vocab, self.cdf = _empirical_law(str(cfg.empirical_file))
            self._vocab_set = frozenset(self._vocab)

    @property
    def size(self) -> int:
        return int(self.cdf.shape[0])

    def draw(self, u: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.cdf, u, side="right")
        return np.minimum(idx, self.size - 1)

    def name(self, i: int) -> str:
        return self._vocab[i] if self._vocab is not None else native_name(i)

    def is_native(self, name: str) -> bool:
        if self._vocab is not None:
            return name in self._vocab_set
        return name.startswith("N")


def _rare_label(i: int, law: _NameLaw) -> str:
    name = rare_name(i)
    # эмпирический словарь может случайно содержать такое же имя
    while law.is_native(name):
        name += "X"
    return name


def _group_sizes(cfg: SynthConfig, rng: np.random.Generator) -> List[int]:
    if cfg.group_sizes is not None:
        return list(cfg.group_sizes)
    if cfg.group_size_law == "multinomial":
        return [int(x) for x in rng.multinomial(cfg.n_people, [1.0 / cfg.n_groups] * cfg.n_groups)]
    base, extra = divmod(cfg.n_people, cfg.n_groups)
    return [base + (1 if i < extra else 0) for i in range(cfg.n_groups)]


def generate(cfg: SynthConfig) -> Roster:
    """
    Детерминированный синтетический список.

    Базовые атрибуты, имена, иммиграция и непотизм тянутся из отдельных
    потоков, так что при одном seed смена nepotism_rate меняет только
    "непотистские" наймы (общие случайные числа, парные сравнения).

    Непотистский найм копирует фамилию случайного уже нанятого мужчины той же
    группы (и того же региона) и сам становится мужчиной.
    """
    streams = np.random.SeedSequence(cfg.seed).spawn(5)
    base_rng, name_rng, imm_rng, nep_rng, first_rng = (np.random.default_rng(s) for s in streams)

    law = _NameLaw(cfg)
    first_cdf = _zipf_cdf(float(cfg.first_name_s), int(cfg.first_name_alphabet))

    labels = cfg.group_labels
    sizes = _group_sizes(cfg, base_rng)
    n = int(sum(sizes))
    group_of = np.repeat(np.arange(cfg.n_groups), sizes)

    female_frac = np.array([cfg.group_female_fraction.get(g, cfg.female_fraction) for g in labels])
    is_female = base_rng.random(n) < female_frac[group_of]

    region_labels = list(cfg.regions)
    if region_labels:
        weights = np.array([cfg.regions[r] for r in region_labels], dtype=np.float64)
        region_of = base_rng.choice(len(region_labels), size=n, p=weights / weights.sum())
    else:
        region_of = np.full(n, -1)

    native_idx = law.draw(name_rng.random(n))

    imm_frac = np.array([cfg.immigrant_group_rates.get(g, cfg.immigrant_rate) for g in labels])
    is_immigrant = imm_rng.random(n) < imm_frac[group_of]
    rare_last = imm_rng.integers(0, cfg.rare_reservoir_size, n)
    rare_first = imm_rng.integers(0, cfg.rare_reservoir_size, n)

    first_m = np.minimum(np.searchsorted(first_cdf, first_rng.random(n), side="right"), first_cdf.size - 1)
    first_f = np.minimum(np.searchsorted(first_cdf, first_rng.random(n), side="right"), first_cdf.size - 1)

    nep_u = nep_rng.random(n)
    nep_v = nep_rng.random(n)
    nep_frac = np.array([cfg.nepotism_group_rates.get(g, cfg.nepotism_rate) for g in labels])
    nep_regions = None if cfg.nepotism_regions is None else set(cfg.nepotism_regions)

    last = [
        _rare_label(int(rare_last[i]), law) if is_immigrant[i] else law.name(int(native_idx[i]))
        for i in range(n)
    ]
    first = [
        rare_name(int(rare_first[i])) if is_immigrant[i]
        else ("F" + _letters(int(first_f[i])) if is_female[i] else "M" + _letters(int(first_m[i])))
        for i in range(n)
    ]
    female = is_female.tolist()

    injected = 0
    candidates: Dict[Tuple[int, int], List[int]] = {}
    for i in range(n):
        key = (int(group_of[i]), int(region_of[i]))
        region = region_labels[region_of[i]] if region_of[i] >= 0 else None
        rate = nep_frac[group_of[i]]
        eligible = nep_regions is None or region in nep_regions
        pool = candidates.setdefault(key, [])
        if rate > 0 and eligible and pool and nep_u[i] < rate:
            father = pool[int(nep_v[i] * len(pool))]
            last[i] = last[father]
            female[i] = False
            first[i] = "M" + _letters(int(first_m[i]))
            injected += 1
        if not female[i]:
            pool.append(i)

    persons = [
        Person(
            last_name_raw=last[i],
            last_name=last[i],
            group=labels[group_of[i]],
            first_name_raw=first[i],
            first_name=first[i],
            gender=Gender.F if female[i] else Gender.M,
            region=region_labels[region_of[i]] if region_of[i] >= 0 else None,
            initials=first[i][1],
        )
        for i in range(n)
    ]
    logger.info(
        f"🧪 Сгенерировано {n} чел. в {cfg.n_groups} группах: иммигрантов {int(is_immigrant.sum())}, "
        f"непотистских наймов {injected}"
    )
    return Roster(persons)


def common_names(cfg: SynthConfig) -> CommonNameList:
    """Первые common_list_size имён закона частот (аналог телефонного справочника)"""
    law = _NameLaw(cfg)
    size = min(cfg.common_list_size, law.size)
    return CommonNameList(names=frozenset(law.name(i) for i in range(size)), label="synthetic-common")


# ============== Кривая мощности ==============

@dataclass(frozen=True)
class PowerPoint:
    rho: float
    detections: int
    n_trials: int

    @property
    def rate(self) -> float:
        return self.detections / self.n_trials

    @property
    def std_error(self) -> float:
        r = self.rate
        return float(np.sqrt(r * (1.0 - r) / self.n_trials))


@dataclass(frozen=True)
class PowerCurve:
    target_group: str
    alpha: float
    gender: Optional[str]
    points: List[PowerPoint]

    def to_dict(self) -> dict:
        return {
            "target_group": self.target_group,
            "alpha": self.alpha,
            "gender": self.gender,
            "points": [
                {"rho": p.rho, "detections": p.detections, "n_trials": p.n_trials,
                 "rate": p.rate, "std_error": p.std_error}
                for p in self.points
            ],
        }


def trial_seed(seed: int, trial: int) -> int:
    state = np.random.SeedSequence([seed, trial]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def power_curve(
    base: SynthConfig,
    rho_grid: Sequence[float],
    n_trials: int,
    cfg: TestConfig,
    alpha: float,
    target_group: Optional[str] = None,
    gender: Optional[Gender] = None,
    workers: int = 1,
) -> PowerCurve:
    """
    Доля испытаний, в которых группа с внедрённым непотизмом rho получает
    p <= alpha. Для каждого испытания один seed на все rho (общие случайные
    числа), поэтому кривая монотонна с точностью до шума.

    Args:
        gender: анализировать только этот пол (пул тоже только этого пола)
    """
    grid = [float(r) for r in rho_grid]
    if grid != sorted(grid):
        raise ValueError("rho_grid должна быть возрастающей")
    if n_trials < 1:
        raise ValueError("n_trials должно быть >= 1")
    target = target_group or base.group_labels[0]
    if target not in base.group_labels:
        raise InvalidConfig(f"нет группы {target!r}")

    detections = [0] * len(grid)
    for trial in range(n_trials):
        seed = trial_seed(base.seed, trial)
        for j, rho in enumerate(grid):
            rates = dict(base.nepotism_group_rates)
            rates[target] = rho
            roster = generate(base.model_copy(update={"seed": seed, "nepotism_group_rates": rates}))
            if gender is not None:
                roster = restrict(roster, by_gender(gender))
            names = roster.group_names(target)
            if not names:
                continue
            result = mc_pvalue(NamePool(roster.names()), len(names), len(set(names)), cfg, group=target, workers=workers)
            if result.p_hat <= alpha:
                detections[j] += 1
        logger.debug(f"  испытание {trial + 1}/{n_trials}: {detections}")

    points = [PowerPoint(rho=r, detections=d, n_trials=n_trials) for r, d in zip(grid, detections)]
    logger.info("📈 Мощность: " + ", ".join(f"rho={p.rho:g} -> {p.rate:.2f}" for p in points))
    return PowerCurve(
        target_group=target,
        alpha=alpha,
        gender=gender.value if gender is not None else None,
        points=points,
    )
