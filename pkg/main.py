"""
Главный файл приложения.
CLI теста на дефицит фамилий.

Запуск:
    python main.py analyze --field last --sims 100000 --min-size 50 --seed 42 roster.csv
    python main.py simulate --config synth.env --rho-grid 0,0.05,0.1,0.2,0.4
    python main.py diagnose roster.csv --p-values first_names_p.csv
    python main.py qvalues pvalues.csv --pi0 1

Коды выхода: 0 - ок, 1 - непредвиденная ошибка, 2 - неверные аргументы,
3 - схема/разбор входных данных, 4 - ввод-вывод, 5 - конфигурация.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import ValidationError

from config import (
    ALPHA,
    CSV_DELIMITER,
    DEBUG,
    OUTPUT_DIR,
    QVALUE_BOOTSTRAPS,
    SCARCITY_MIN_GROUP_SIZE,
    SCARCITY_SEED,
    SCARCITY_SIMS,
    SCARCITY_WORKERS,
    validate_config,
)
from reports.formatter import (
    comparison_rows,
    format_analysis_table,
    format_comparison_table,
    format_qvalue_table,
    format_region_summary,
)
from reports.types import ANALYSIS_COLUMNS, COMPARISON_COLUMNS, AnalysisReport
from reports.writer import ensure_dir, now_utc, provenance, safe_stem, write_csv, write_json, write_text
from services.diagnostics import DegenerateDesign, gendered_name_ratio, logit_regression, name_frequencies, women_fraction
from services.multiplicity import (
    DEFAULT_LAMBDA_GRID,
    EmptyInput,
    InvalidPValue,
    QValueEntry,
    classify,
    qvalues,
    qvalues_for_results,
)
from services.roster import (
    POLICIES,
    ColumnSchema,
    EmptyAfterNormalization,
    Gender,
    NameField,
    ParseError,
    Roster,
    SchemaError,
    dedup_uk,
    ingest_roster,
    write_roster,
)
from services.scarcity import ScarcityResult, TestConfig, analyze_groups
from services.strata import (
    common_name_proportion,
    exclude_groups,
    filter_common,
    gender_split_analyze,
    italian_macro_map,
    load_common_names,
    load_macro_map,
    macro_sweep,
    region_sweep,
)
from services.synthlab import InvalidConfig, common_names, generate, load_synth_config, make_synth_config, power_curve

# Настраиваем логирование
logging.basicConfig(
    level=logging.DEBUG if DEBUG else logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_SCHEMA = 3
EXIT_IO = 4
EXIT_CONFIG = 5


# ============== Общие шаги ==============

def _split_list(value: Optional[str]) -> List[str]:
    if not value:
        return []
    return [item.strip() for item in value.split(",") if item.strip()]


def _lambda_grid(lambda_max: float) -> List[float]:
    grid = [lam for lam in DEFAULT_LAMBDA_GRID if lam <= lambda_max + 1e-12]
    if not grid:
        raise InvalidConfig(f"--lambda-max {lambda_max}: сетка lambda пуста")
    return grid


def _test_config(args) -> TestConfig:
    return TestConfig(n_sims=args.sims, min_group_size=args.min_size, seed=args.seed)


def _load_roster(args) -> Tuple[Roster, dict]:
    roster, report = ingest_roster(
        args.roster,
        policy=POLICIES[args.policy],
        schema=ColumnSchema.parse(args.schema),
        delimiter=args.delimiter,
        field_selector=NameField(args.field),
    )
    if args.dedup:
        roster = dedup_uk(roster)
    return roster, report.to_dict()


def _base_params(args, cfg: TestConfig, ingestion: dict) -> Dict:
    """Эффективные параметры запуска. workers сюда не входит: на результат он не влияет."""
    return {
        "command": args.command,
        "input": str(args.roster),
        "field": args.field,
        "policy": args.policy,
        "schema": args.schema or "",
        "delimiter": args.delimiter,
        "dedup": bool(args.dedup),
        "n_sims": cfg.n_sims,
        "min_group_size": cfg.min_group_size,
        "seed": cfg.seed,
        "alpha": args.alpha,
        "n_bootstrap": args.bootstraps,
        "lambda_max": args.lambda_max,
        "pi0": args.pi0,
        "ingestion": ingestion,
    }


def _build_report(kind: str, results: Sequence[ScarcityResult], params: Dict, args) -> AnalysisReport:
    """q-values считаются отдельно для каждой пачки (слоя) анализа"""
    qreport = qvalues_for_results(
        results,
        lambda_grid=_lambda_grid(args.lambda_max),
        n_bootstrap=args.bootstraps,
        seed=args.seed,
        pi0=args.pi0,
    )
    classified = classify(results, qreport, alpha=args.alpha)
    return AnalysisReport.build(kind, classified, provenance({**params, "report": kind}), qreport)


def _emit_report(out_dir: Path, stem: str, report: AnalysisReport, args) -> None:
    write_json(out_dir / f"{stem}.json", report.to_dict())
    write_csv(out_dir / f"{stem}.csv", [r.to_dict() for r in report.rows], ANALYSIS_COLUMNS)
    header = {"generated_at": now_utc(), "workers": args.workers}
    write_text(out_dir / f"{stem}.txt", format_analysis_table(report, header))
    flagged = sum(1 for r in report.rows if r.highly_significant)
    logger.info(f"📊 {report.kind}: строк {len(report.rows)}, высоко значимых {flagged}")


# ============== analyze ==============

def _national_pool(args, roster: Roster) -> Optional[Roster]:
    """None - каждый слой со своим пулом; иначе весь список как общий пул"""
    return roster if args.pool == "national" else None


def cmd_analyze(args) -> int:
    """Основной анализ + слои (регионы, частые имена, пол) + сравнительная таблица"""
    cfg = _test_config(args)
    roster, ingestion = _load_roster(args)
    excluded = _split_list(args.exclude_groups)
    if excluded:
        roster = exclude_groups(roster, excluded)
    out_dir = ensure_dir(args.out_dir)

    params = _base_params(args, cfg, ingestion)
    params.update({
        "stratify": args.stratify,
        "gender_split": bool(args.gender_split),
        "filter_common": str(args.filter_common) if args.filter_common else None,
        "exclude_groups": excluded,
        "macro_map": str(args.macro_map) if args.macro_map else None,
        "pool": args.pool,
    })

    logger.info(f"🚀 Анализ: {len(roster)} чел., {len(roster.group_index)} групп, S={cfg.n_sims}")
    results = analyze_groups(roster, None, cfg, workers=args.workers)
    _emit_report(out_dir, "analysis", _build_report("analysis", results, params, args), args)
    sections: Dict[str, Sequence[ScarcityResult]] = {"p": results}

    # Слой "частые имена": и группы, и пул только из списка
    base = roster
    if args.filter_common:
        common = load_common_names(args.filter_common, POLICIES[args.policy])
        share = common_name_proportion(roster, common)
        write_json(out_dir / "common_proportion.json", {
            "metadata": provenance(params),
            "mean": share.mean,
            "cutoff": share.cutoff,
            "low_groups": sorted(share.low_groups),
            "fractions": share.fractions,
        })
        write_csv(
            out_dir / "common_proportion.csv",
            [{"group": g, "fraction": f, "low": g in share.low_groups} for g, f in share.fractions.items()],
            ["group", "fraction", "low"],
        )
        base = filter_common(roster, common)
        common_results = analyze_groups(base, None, cfg, workers=args.workers, stratum="common")
        _emit_report(out_dir, "analysis_common", _build_report("common", common_results, params, args), args)
        sections["Common-p"] = common_results

    if args.gender_split:
        female, male = gender_split_analyze(base, cfg, workers=args.workers, pool=_national_pool(args, base))
        _emit_report(out_dir, "analysis_female", _build_report("female", female, params, args), args)
        _emit_report(out_dir, "analysis_male", _build_report("male", male, params, args), args)
        sections["F-p"] = female
        sections["M-p"] = male

    if args.stratify == "macro-region":
        macro_map = load_macro_map(args.macro_map) if args.macro_map else italian_macro_map()
        sweep = macro_sweep(roster, cfg, macro_map, workers=args.workers, pool=_national_pool(args, roster))
        for macro, macro_results in sweep.items():
            report = _build_report(f"macro:{macro.value}", macro_results, params, args)
            _emit_report(out_dir, f"macro_{safe_stem(macro.value)}", report, args)
    elif args.stratify == "region":
        summary = region_sweep(roster, cfg, alpha=args.alpha, workers=args.workers, pool=_national_pool(args, roster))
        by_region: Dict[str, List[ScarcityResult]] = {}
        for cell in summary.cells:
            by_region.setdefault(cell.stratum, []).append(cell)
        cells = []
        for region in sorted(by_region):
            report = _build_report(f"region:{region}", by_region[region], params, args)
            cells.extend(r.to_dict() for r in report.rows)
        write_csv(out_dir / "region_cells.csv", cells, ANALYSIS_COLUMNS)
        counts = [
            {"group": g, "count": summary.counts[g].label, "proportion": summary.counts[g].proportion}
            for g in summary.ranking()
        ]
        write_csv(out_dir / "regions.csv", counts, ["group", "count", "proportion"])
        write_json(out_dir / "regions.json", {
            "metadata": provenance(params),
            "alpha": summary.alpha,
            "ranking": counts,
            "cells": cells,
        })
        write_text(out_dir / "regions.txt", format_region_summary(summary))

    if len(sections) > 1:
        rows = comparison_rows(sections)
        write_csv(out_dir / "comparison.csv", rows, COMPARISON_COLUMNS)
        write_json(out_dir / "comparison.json", {"metadata": provenance(params), "rows": rows})
        write_text(out_dir / "comparison.txt", format_comparison_table(rows, cfg.n_sims))

    logger.info(f"✅ Отчёты записаны в {out_dir}")
    return EXIT_OK


# ============== simulate ==============

def _rho_grid(value: Optional[str]) -> List[float]:
    try:
        return [float(x) for x in _split_list(value)]
    except ValueError as e:
        raise InvalidConfig(f"--rho-grid: {e}") from e


def cmd_simulate(args) -> int:
    """Синтетический список + список частых имён + кривая мощности"""
    overrides = {"seed": args.synth_seed, "n_people": args.n_people}
    if args.config:
        synth = load_synth_config(args.config, **overrides)
    else:
        synth = make_synth_config(**{k: v for k, v in overrides.items() if v is not None})
    out_dir = ensure_dir(args.out_dir)

    roster = generate(synth)
    write_roster(roster, out_dir / "roster.csv", delimiter=args.delimiter)
    common = common_names(synth)
    write_text(out_dir / "common_names.txt", "".join(f"{name}\n" for name in sorted(common.names)))
    write_json(out_dir / "synth_config.json", {"metadata": provenance({"command": "simulate"}), "config": synth.model_dump()})

    grid = _rho_grid(args.rho_grid)
    if grid:
        cfg = TestConfig(n_sims=args.sims, min_group_size=1, seed=args.seed)
        gender = Gender(args.power_gender) if args.power_gender else None
        curve = power_curve(
            synth, grid, args.trials, cfg, args.alpha,
            target_group=args.target_group, gender=gender, workers=args.workers,
        )
        payload = curve.to_dict()
        write_csv(out_dir / "power_curve.csv", payload["points"], ["rho", "detections", "n_trials", "rate", "std_error"])
        write_json(out_dir / "power_curve.json", {
            "metadata": provenance({
                "command": "simulate",
                "n_sims": cfg.n_sims,
                "seed": cfg.seed,
                "trials": args.trials,
                "synth": synth.model_dump(),
            }),
            **payload,
        })

    logger.info(f"✅ Симуляция записана в {out_dir}")
    return EXIT_OK


# ============== diagnose ==============

def _read_pvalues(path: str, delimiter: str) -> Dict[str, float]:
    """CSV с колонками group,p"""
    try:
        frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise SchemaError(f"{path}: нет строки заголовка") from e
    missing = {"group", "p"} - set(frame.columns)
    if missing:
        raise SchemaError(f"{path}: нет колонок {sorted(missing)}")
    out: Dict[str, float] = {}
    for row_no, (group, raw) in enumerate(zip(frame["group"], frame["p"]), start=2):
        try:
            out[str(group)] = float(raw)
        except ValueError as e:
            raise ParseError(row_no, f"p={raw!r} не число") from e
    return out


def cmd_diagnose(args) -> int:
    """Частоты имён, доля женщин, logit(p) против доли женщин"""
    roster, ingestion = _load_roster(args)
    out_dir = ensure_dir(args.out_dir)

    tables = name_frequencies(roster, scope=args.scope, k=args.top_k)
    freq_rows = [
        {"scope": scope, "rank": rank, "name": name, "count": count, "share": count / table.persons}
        for scope, table in tables.items()
        for rank, (name, count) in enumerate(table.top, start=1)
    ]
    write_csv(out_dir / "frequencies.csv", freq_rows, ["scope", "rank", "name", "count", "share"])

    shares = women_fraction(roster)
    write_csv(
        out_dir / "women_fraction.csv",
        [
            {"group": g, "n_female": s.n_female, "n_male": s.n_male, "n_unknown": s.n_unknown, "fraction": s.fraction}
            for g, s in shares.items()
        ],
        ["group", "n_female", "n_male", "n_unknown", "fraction"],
    )

    if args.p_values:
        pvals = _read_pvalues(args.p_values, args.delimiter)
        p_source = str(args.p_values)
    else:
        # p-values по именам (first name), как в диагностике пола
        cfg = _test_config(args)
        first = roster.select_field(NameField.FIRST)
        pvals = {}
        if len(first):
            pvals = {r.group: r.p_hat for r in analyze_groups(first, None, cfg, workers=args.workers) if not r.skipped}
        p_source = "first-name analysis"

    labels = [g for g in shares if shares[g].fraction is not None and g in pvals]
    fit_payload = None
    try:
        fit = logit_regression(
            [(shares[g].fraction, pvals[g]) for g in labels],
            epsilon=args.epsilon,
            labels=labels,
        )
        write_csv(
            out_dir / "logit_points.csv",
            [
                {"group": pt.label, "women_fraction": pt.covariate, "p": pt.p, "logit_p": pt.logit_p, "clamped": pt.clamped}
                for pt in fit.points
            ],
            ["group", "women_fraction", "p", "logit_p", "clamped"],
        )
        fit_payload = fit.to_dict()
        logger.info(f"📉 logit(p) = {fit.intercept:.3f} + {fit.slope:.3f} * w, r2={fit.r_squared:.3f}")
    except DegenerateDesign as e:
        logger.warning(f"⚠️ Регрессия не построена: {e}")

    write_json(out_dir / "diagnose.json", {
        "metadata": provenance({
            "command": "diagnose",
            "input": str(args.roster),
            "field": args.field,
            "policy": args.policy,
            "dedup": bool(args.dedup),
            "scope": args.scope,
            "top_k": args.top_k,
            "epsilon": args.epsilon,
            "p_values": p_source,
            "n_sims": args.sims,
            "min_group_size": args.min_size,
            "seed": args.seed,
            "ingestion": ingestion,
        }),
        "names_per_person": {scope: t.names_per_person for scope, t in tables.items()},
        "gendered_name_ratio": gendered_name_ratio(roster),
        "logit_fit": fit_payload,
    })
    logger.info(f"✅ Диагностика записана в {out_dir}")
    return EXIT_OK


# ============== qvalues ==============

def cmd_qvalues(args) -> int:
    """q-values для произвольного CSV group,p"""
    pvals = _read_pvalues(args.pvalues, args.delimiter)
    if not pvals:
        raise EmptyInput(f"{args.pvalues}: нет строк")
    out_dir = ensure_dir(args.out_dir)

    report = qvalues(
        list(pvals.values()),
        lambda_grid=_lambda_grid(args.lambda_max),
        n_bootstrap=args.bootstraps,
        seed=args.seed,
        labels=list(pvals),
        pi0=args.pi0,
    )
    report.entries = [
        QValueEntry(group=e.group, p=e.p, q=e.q, highly_significant=e.p <= args.alpha and e.q <= args.alpha)
        for e in report.entries
    ]
    write_json(out_dir / "qvalues.json", {
        "metadata": provenance({
            "command": "qvalues",
            "input": str(args.pvalues),
            "alpha": args.alpha,
            "seed": args.seed,
        }),
        **report.to_dict(),
    })
    write_csv(
        out_dir / "qvalues.csv",
        [{"group": e.group, "p": e.p, "q": e.q, "highly_significant": e.highly_significant} for e in report.entries],
        ["group", "p", "q", "highly_significant"],
    )
    write_text(out_dir / "qvalues.txt", format_qvalue_table(report))
    return EXIT_OK


# ============== argparse ==============

def _add_test_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sims", type=int, default=SCARCITY_SIMS, help="число симуляций на группу")
    p.add_argument("--min-size", type=int, default=SCARCITY_MIN_GROUP_SIZE, help="минимальный размер группы")
    p.add_argument("--seed", type=int, default=SCARCITY_SEED)
    p.add_argument("--workers", type=int, default=SCARCITY_WORKERS, help="потоки (на результат не влияют)")
    p.add_argument("--alpha", type=float, default=ALPHA)
    p.add_argument("--out-dir", default=OUTPUT_DIR)
    p.add_argument("--delimiter", default=CSV_DELIMITER)


def _add_multiplicity_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bootstraps", type=int, default=QVALUE_BOOTSTRAPS)
    p.add_argument("--lambda-max", type=float, default=max(DEFAULT_LAMBDA_GRID))
    p.add_argument("--pi0", type=float, default=None, help="зафиксировать pi0 (1 = BH)")


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("roster", help="CSV со списком")
    p.add_argument("--field", choices=[f.value for f in NameField], default=NameField.LAST.value)
    p.add_argument("--schema", default=None, help='соответствие колонок, напр. "last_name=Cognome,group=SSD"')
    p.add_argument("--policy", choices=sorted(POLICIES), default="default")
    p.add_argument("--dedup", action="store_true", help="удалить дубли (фамилия, инициалы, группа)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surname-scarcity", description="Тест на дефицит фамилий")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="p-values и q-values по группам")
    _add_input_flags(analyze)
    _add_test_flags(analyze)
    _add_multiplicity_flags(analyze)
    analyze.add_argument("--stratify", choices=["none", "region", "macro-region"], default="none")
    analyze.add_argument("--gender-split", action="store_true")
    analyze.add_argument("--filter-common", default=None, metavar="FILE")
    analyze.add_argument("--exclude-groups", default=None, metavar="LIST")
    analyze.add_argument("--macro-map", default=None, metavar="FILE")
    analyze.add_argument(
        "--pool",
        choices=["stratum", "national"],
        default="stratum",
        help="пул для слоёв: свой пул слоя или весь список (проверка устойчивости)",
    )
    analyze.set_defaults(handler=cmd_analyze)

    simulate = sub.add_parser("simulate", help="синтетический список и кривая мощности")
    _add_test_flags(simulate)
    simulate.add_argument("--config", default=None, metavar="FILE", help="параметры генератора (KEY=VALUE)")
    simulate.add_argument("--synth-seed", type=int, default=None)
    simulate.add_argument("--n-people", type=int, default=None)
    simulate.add_argument("--rho-grid", default="", help='напр. "0,0.05,0.1,0.2,0.4"; пусто - без кривой')
    simulate.add_argument("--trials", type=int, default=100)
    simulate.add_argument("--target-group", default=None)
    simulate.add_argument("--power-gender", choices=[Gender.F.value, Gender.M.value], default=None)
    simulate.set_defaults(handler=cmd_simulate)

    diagnose = sub.add_parser("diagnose", help="частоты имён и logit-диагностика")
    _add_input_flags(diagnose)
    _add_test_flags(diagnose)
    diagnose.add_argument("--p-values", default=None, metavar="FILE", help="CSV group,p (иначе считаются по именам)")
    diagnose.add_argument("--scope", choices=["whole", "group"], default="group")
    diagnose.add_argument("--top-k", type=int, default=1)
    diagnose.add_argument("--epsilon", type=float, default=1e-6)
    diagnose.set_defaults(handler=cmd_diagnose)

    qv = sub.add_parser("qvalues", help="q-values для CSV group,p")
    qv.add_argument("pvalues")
    _add_test_flags(qv)
    _add_multiplicity_flags(qv)
    qv.set_defaults(handler=cmd_qvalues)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    problems = validate_config()
    if problems:
        logger.warning(f"⚠️ Проблемы в переменных окружения: {', '.join(problems)}")

    try:
        return args.handler(args)
    except (SchemaError, ParseError, EmptyAfterNormalization, EmptyInput, InvalidPValue) as e:
        logger.error(f"❌ Ошибка входных данных: {e}")
        return EXIT_SCHEMA
    except OSError as e:
        logger.error(f"❌ Ошибка ввода-вывода: {e}")
        return EXIT_IO
    except (InvalidConfig, ValidationError, ValueError) as e:
        logger.error(f"❌ Ошибка конфигурации: {e}")
        return EXIT_CONFIG
    except Exception as e:
        logger.exception(f"❌ Непредвиденная ошибка: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
