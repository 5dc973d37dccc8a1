from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from services.multiplicity import ClassifiedResult, QValueReport


# Колонки таблицы анализа (фиксированный набор)
ANALYSIS_COLUMNS = (
    "stratum",
    "group",
    "code",
    "n_people",
    "n_distinct",
    "p",
    "p_excess",
    "mean_distinct",
    "q",
    "highly_significant",
    "skipped",
)

# Сравнение слоёв: p / Common-p / F-p / M-p
COMPARISON_COLUMNS = ("group", "p", "Common-p", "F-p", "M-p")


@dataclass(frozen=True)
class ReportRow:
    group: str
    code: str  # код группы; во входных данных метка и код совпадают
    n_people: int
    n_distinct: int
    p: Optional[float]
    q: Optional[float]
    highly_significant: bool
    stratum: Optional[str] = None
    p_excess: Optional[float] = None
    mean_distinct: Optional[float] = None
    skipped: bool = False

    @classmethod
    def from_classified(cls, item: ClassifiedResult) -> "ReportRow":
        r = item.result
        return cls(
            group=r.group,
            code=r.group,
            n_people=r.n_people,
            n_distinct=r.n_distinct,
            p=r.p_hat,
            q=item.q,
            highly_significant=item.highly_significant,
            stratum=r.stratum,
            p_excess=r.p_excess,
            mean_distinct=r.mean_distinct,
            skipped=r.skipped,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "stratum": self.stratum,
            "group": self.group,
            "code": self.code,
            "n_people": self.n_people,
            "n_distinct": self.n_distinct,
            "p": self.p,
            "p_excess": self.p_excess,
            "mean_distinct": self.mean_distinct,
            "q": self.q,
            "highly_significant": self.highly_significant,
            "skipped": self.skipped,
        }


@dataclass
class AnalysisReport:
    """
    Отчёт одного анализа (одного слоя).

    metadata - полный набор эффективных параметров, достаточный для
    повторного запуска.
    """

    kind: str
    rows: List[ReportRow]
    metadata: Dict[str, Any] = field(default_factory=dict)
    qvalues: Optional[QValueReport] = None

    @classmethod
    def build(
        cls,
        kind: str,
        classified: Sequence[ClassifiedResult],
        metadata: Dict[str, Any],
        qreport: Optional[QValueReport] = None,
    ) -> "AnalysisReport":
        return cls(
            kind=kind,
            rows=[ReportRow.from_classified(c) for c in classified],
            metadata=dict(metadata),
            qvalues=qreport,
        )

    @property
    def n_sims(self) -> int:
        return int(self.metadata.get("n_sims", 0))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "columns": list(ANALYSIS_COLUMNS),
            "metadata": self.metadata,
            "rows": [r.to_dict() for r in self.rows],
            "qvalues": self.qvalues.to_dict() if self.qvalues is not None else None,
        }
