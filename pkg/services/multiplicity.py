"""
Поправка на множественные сравнения: q-values по Стори (pi0 с бутстрепом)
и классификация "высоко значимых" результатов.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from config import ALPHA, QVALUE_BOOTSTRAPS
from services.scarcity import ScarcityResult

logger = logging.getLogger(__name__)

# 0.00, 0.05, ..., 0.90
DEFAULT_LAMBDA_GRID = tuple(round(0.05 * i, 2) for i in range(19))


class EmptyInput(ValueError):
    """Пустой вектор p-values"""


class InvalidPValue(ValueError):
    """p-value вне (0, 1]"""


class LabelMismatch(ValueError):
    """Метки результатов и отчёта q-values не совпадают"""


@dataclass(frozen=True)
class QValueEntry:
    group: str
    p: float
    q: float
    highly_significant: bool = False


@dataclass
class QValueReport:
    entries: List[QValueEntry]
    pi0_hat: float
    lambda_grid: List[float]
    n_bootstrap: int
    pi0_forced: bool = False

    def q_for(self, group: str) -> float:
        for entry in self.entries:
            if entry.group == group:
                return entry.q
        raise LabelMismatch(f"нет q-value для группы {group!r}")

    @property
    def qvalues(self) -> List[float]:
        return [e.q for e in self.entries]

    def to_dict(self) -> dict:
        return {
            "pi0_hat": self.pi0_hat,
            "pi0_forced": self.pi0_forced,
            "lambda_grid": list(self.lambda_grid),
            "n_bootstrap": self.n_bootstrap,
            "entries": [
                {"group": e.group, "p": e.p, "q": e.q, "highly_significant": e.highly_significant}
                for e in self.entries
            ],
        }


def pi0_by_lambda(pvals: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """pi0(lambda) = #{p > lambda} / (m (1 - lambda)), без обрезки"""
    m = pvals.shape[0]
    above = (pvals[None, :] > lambdas[:, None]).sum(axis=1)
    return above / (m * (1.0 - lambdas))


def estimate_pi0(
    pvals: np.ndarray,
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    n_bootstrap: int = QVALUE_BOOTSTRAPS,
    seed: int = 0,
) -> float:
    """
    Оценка доли нулевых гипотез. lambda выбирается бутстрепом: минимум
    среднеквадратичного отклонения pi0*(lambda) от min pi0(lambda).
    Результат обрезается в [1/m, 1].
    """
    m = pvals.shape[0]
    lambdas = np.asarray(lambda_grid, dtype=np.float64)
    pi0s = pi0_by_lambda(pvals, lambdas)
    target = pi0s.min()

    rng = np.random.default_rng(seed)
    mse = np.zeros_like(lambdas)
    for _ in range(n_bootstrap):
        boot = rng.choice(pvals, size=m, replace=True)
        mse += np.square(pi0_by_lambda(boot, lambdas) - target)

    best = int(np.argmin(mse))
    pi0 = float(pi0s[best])
    return float(min(1.0, max(1.0 / m, pi0)))


def _validate(pvals: Sequence[float]) -> np.ndarray:
    arr = np.asarray(pvals, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("нет p-values для поправки")
    bad = ~((arr > 0.0) & (arr <= 1.0))
    if bad.any():
        raise InvalidPValue(f"p-value вне (0, 1]: {arr[bad][:5].tolist()}")
    return arr


def qvalues(
    pvals: Sequence[float],
    lambda_grid: Optional[Sequence[float]] = None,
    n_bootstrap: int = QVALUE_BOOTSTRAPS,
    seed: int = 0,
    labels: Optional[Sequence[str]] = None,
    pi0: Optional[float] = None,
) -> QValueReport:
    """
    q-values по Стори.

    q_i = min_{p_j >= p_i} pi0 * m * p_j / rank(p_j) - кумулятивный минимум
    по отсортированному вектору. При pi0 = 1 совпадает с поправкой BH.

    Args:
        pvals: p-values в (0, 1]
        lambda_grid: сетка lambda (по умолчанию 0.00..0.90 шаг 0.05)
        n_bootstrap: число бутстреп-выборок для выбора lambda
        seed: seed бутстрепа
        labels: метки групп (по умолчанию позиции)
        pi0: зафиксировать pi0 вместо оценки

    Raises:
        EmptyInput, InvalidPValue
    """
    arr = _validate(pvals)
    m = arr.shape[0]
    grid = list(DEFAULT_LAMBDA_GRID if lambda_grid is None else lambda_grid)
    if any(not 0.0 <= lam <= 0.95 for lam in grid) or grid != sorted(grid):
        raise ValueError("сетка lambda должна быть возрастающей и лежать в [0, 0.95]")

    if pi0 is None:
        pi0_hat = estimate_pi0(arr, grid, n_bootstrap, seed)
        forced = False
    else:
        if not 0.0 < pi0 <= 1.0:
            raise ValueError("pi0 должен быть в (0, 1]")
        pi0_hat = float(pi0)
        forced = True

    order = np.argsort(arr, kind="mergesort")
    ranks = np.arange(1, m + 1, dtype=np.float64)
    raw = pi0_hat * m * arr[order] / ranks
    q_sorted = np.minimum.accumulate(raw[::-1])[::-1]
    q_sorted = np.minimum(q_sorted, 1.0)

    q = np.empty(m, dtype=np.float64)
    q[order] = q_sorted

    labels = [str(i) for i in range(m)] if labels is None else list(labels)
    if len(labels) != m:
        raise LabelMismatch(f"меток {len(labels)}, p-values {m}")

    entries = [QValueEntry(group=labels[i], p=float(arr[i]), q=float(q[i])) for i in range(m)]
    logger.info(f"📐 q-values: m={m}, pi0={pi0_hat:.3f}" + (" (задан)" if forced else ""))
    return QValueReport(entries=entries, pi0_hat=pi0_hat, lambda_grid=grid, n_bootstrap=n_bootstrap, pi0_forced=forced)


def qvalues_for_results(
    results: Sequence[ScarcityResult],
    lambda_grid: Optional[Sequence[float]] = None,
    n_bootstrap: int = QVALUE_BOOTSTRAPS,
    seed: int = 0,
    pi0: Optional[float] = None,
) -> Optional[QValueReport]:
    """
    q-values для одной пачки анализа. Пропущенные группы в вектор не входят.
    Возвращает None, если протестированных групп нет.
    """
    tested = [r for r in results if not r.skipped]
    if not tested:
        return None
    return qvalues(
        [r.p_hat for r in tested],
        lambda_grid=lambda_grid,
        n_bootstrap=n_bootstrap,
        seed=seed,
        labels=[r.group for r in tested],
        pi0=pi0,
    )


@dataclass(frozen=True)
class ClassifiedResult:
    result: ScarcityResult
    q: Optional[float]
    highly_significant: bool


def classify(
    results: Sequence[ScarcityResult],
    qreport: Optional[QValueReport],
    alpha: float = ALPHA,
) -> List[ClassifiedResult]:
    """
    Высоко значимый результат: p <= alpha и q <= alpha одновременно.
    Пропущенные группы значимыми не бывают.

    Raises:
        LabelMismatch: метки протестированных групп и отчёта расходятся
    """
    q_by_group = {}
    if qreport is not None:
        q_by_group = {e.group: e.q for e in qreport.entries}
        if len(q_by_group) != len(qreport.entries):
            raise LabelMismatch("повторяющиеся метки в отчёте q-values")

    tested = {r.group for r in results if not r.skipped}
    if tested != set(q_by_group):
        missing = sorted(tested.symmetric_difference(q_by_group))
        raise LabelMismatch(f"метки не совпадают: {missing[:5]}")

    out: List[ClassifiedResult] = []
    for r in results:
        if r.skipped:
            out.append(ClassifiedResult(result=r, q=None, highly_significant=False))
            continue
        q = q_by_group[r.group]
        out.append(ClassifiedResult(result=r, q=q, highly_significant=(r.p_hat <= alpha and q <= alpha)))

    if qreport is not None:
        flags = {c.result.group: c.highly_significant for c in out if not c.result.skipped}
        qreport.entries = [
            QValueEntry(group=e.group, p=e.p, q=e.q, highly_significant=flags[e.group]) for e in qreport.entries
        ]
    return out
