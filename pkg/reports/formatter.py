from __future__ import annotations

import math
from typing import Dict, List, Mapping, Optional, Sequence

import pandas as pd

from services.multiplicity import QValueReport
from services.scarcity import ScarcityResult
from services.strata import RegionSummary

from .types import COMPARISON_COLUMNS, AnalysisReport


def format_pvalue(p: Optional[float], n_sims: int) -> str:
    """
    p для человека. Если ни одна симуляция не дала L' <= L, p = 1/(1+S):
    показываем "<0.001" (ближайшая степень десяти сверху).
    Пропущенная группа - "-".
    """
    if p is None:
        return "-"
    floor = 1.0 / (1 + n_sims)
    if n_sims >= 9 and p <= floor * (1 + 1e-9):
        k = int(math.floor(math.log10(1 + n_sims)))
        return f"<{10.0 ** -k:.{k}f}"
    if p >= 0.001:
        return f"{p:.3f}"
    return f"{p:.2e}"


def _q(q: Optional[float]) -> str:
    if q is None:
        return "-"
    return f"{q:.3f}" if q >= 0.001 else f"{q:.2e}"


def _table(rows: List[Dict[str, str]], columns: Sequence[str]) -> str:
    if not rows:
        return "(нет строк)"
    return pd.DataFrame(rows, columns=list(columns)).to_string(index=False)


def format_analysis_table(report: AnalysisReport, header: Optional[Mapping[str, object]] = None) -> str:
    """Выровненная таблица: группа, N, L, p, q, высоко значимо"""
    n_sims = report.n_sims
    lines = [f"# {report.kind}"]
    for key, value in sorted({**report.metadata, **(header or {})}.items()):
        lines.append(f"# {key}: {value}")
    if report.qvalues is not None:
        lines.append(f"# pi0: {report.qvalues.pi0_hat:.4f}")

    rows = [
        {
            "group": r.group,
            "N": str(r.n_people),
            "L": str(r.n_distinct),
            "p": format_pvalue(r.p, n_sims),
            "p_excess": format_pvalue(r.p_excess, n_sims),
            "q": _q(r.q),
            "**": "**" if r.highly_significant else "",
        }
        for r in report.rows
    ]
    lines.append(_table(rows, ["group", "N", "L", "p", "p_excess", "q", "**"]))
    return "\n".join(lines) + "\n"


def comparison_rows(sections: Mapping[str, Sequence[ScarcityResult]]) -> List[Dict[str, Optional[float]]]:
    """
    Сводит несколько анализов в одну строку на группу. Ключи sections -
    названия колонок ("p", "Common-p", "F-p", "M-p").
    """
    by_section = {name: {r.group: r.p_hat for r in results} for name, results in sections.items()}
    groups = sorted({g for values in by_section.values() for g in values})
    return [
        {"group": g, **{name: by_section.get(name, {}).get(g) for name in COMPARISON_COLUMNS[1:]}}
        for g in groups
    ]


def format_comparison_table(rows: Sequence[Mapping[str, Optional[float]]], n_sims: int) -> str:
    table = [
        {"group": r["group"], **{c: format_pvalue(r.get(c), n_sims) for c in COMPARISON_COLUMNS[1:]}}
        for r in rows
    ]
    return _table(table, COMPARISON_COLUMNS) + "\n"


def format_region_summary(summary: RegionSummary) -> str:
    rows = []
    for group in summary.ranking():
        count = summary.counts[group]
        prop = count.proportion
        rows.append({
            "group": group,
            "Count": count.label,
            "share": "-" if prop is None else f"{prop:.2f}",
        })
    return f"# regions with p <= {summary.alpha}\n" + _table(rows, ["group", "Count", "share"]) + "\n"


def format_qvalue_table(report: QValueReport) -> str:
    rows = [
        {"group": e.group, "p": f"{e.p:.4g}", "q": _q(e.q)}
        for e in report.entries
    ]
    mode = "задан" if report.pi0_forced else f"бутстреп, B={report.n_bootstrap}"
    return f"# pi0: {report.pi0_hat:.4f} ({mode})\n" + _table(rows, ["group", "p", "q"]) + "\n"
