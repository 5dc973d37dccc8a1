"""
Запись отчётов: JSON (точные значения + provenance), CSV, текст.
"""
from __future__ import annotations

import json
import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Union

import pandas as pd

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def report_timestamp() -> Optional[str]:
    """
    Время для JSON-отчёта. Берётся только из SOURCE_DATE_EPOCH, иначе None:
    одинаковые запуски должны давать побайтно одинаковый JSON.
    """
    epoch = os.getenv("SOURCE_DATE_EPOCH")
    if not epoch:
        return None
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()


def now_utc() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_json(path: PathLike, payload: Mapping[str, Any]) -> Path:
    path = Path(path)
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info(f"💾 {path}")
    return path


def write_csv(path: PathLike, rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> Path:
    path = Path(path)
    frame = pd.DataFrame(list(rows), columns=list(columns))
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    logger.info(f"💾 {path}")
    return path


def write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    logger.info(f"💾 {path}")
    return path


def ensure_dir(path: PathLike) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def safe_stem(label: str) -> str:
    """Имя файла из метки слоя: "Emilia-Romagna" -> "emilia-romagna" """
    out = "".join(c.lower() if c.isalnum() or c in "-_" else "_" for c in label.strip())
    return out or "stratum"


def provenance(params: Dict[str, Any]) -> Dict[str, Any]:
    """Метаданные отчёта: эффективные параметры + отметка времени"""
    return {**params, "timestamp": report_timestamp()}
