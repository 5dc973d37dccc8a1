"""
Конфигурация приложения.
Значения по умолчанию берутся из переменных окружения (или .env для локальной работы),
флаги CLI их переопределяют.
"""
import os
from dotenv import load_dotenv

# Загружаем .env файл для локальной разработки
load_dotenv()

# ============== Монте-Карло тест ==============
# Число симуляций на группу
SCARCITY_SIMS = int(os.getenv("SCARCITY_SIMS", "100000"))
# Порог размера группы: p-value считаем только для групп от 50 человек
SCARCITY_MIN_GROUP_SIZE = int(os.getenv("SCARCITY_MIN_GROUP_SIZE", "50"))
SCARCITY_SEED = int(os.getenv("SCARCITY_SEED", "42"))
# Количество потоков для симуляций (на результат не влияет)
SCARCITY_WORKERS = int(os.getenv("SCARCITY_WORKERS", "1"))

# ============== Точный DP (оракул) ==============
EXACT_MAX_TOTAL = int(os.getenv("EXACT_MAX_TOTAL", "5000"))
EXACT_MAX_KINDS = int(os.getenv("EXACT_MAX_KINDS", "64"))

# ============== q-values ==============
QVALUE_BOOTSTRAPS = int(os.getenv("QVALUE_BOOTSTRAPS", "100"))
ALPHA = float(os.getenv("ALPHA", "0.05"))

# ============== Ввод / вывод ==============
CSV_DELIMITER = os.getenv("CSV_DELIMITER", ",")
OUTPUT_DIR = os.getenv("OUTPUT_DIR", "reports_out")

# Размер списка "частых" фамилий (телефонный справочник)
COMMON_LIST_SIZE = int(os.getenv("COMMON_LIST_SIZE", "7500"))

# ============== Приложение ==============
DEBUG = os.getenv("DEBUG", "false").lower() == "true"


def validate_config():
    """
    Проверяет конфигурацию.

    Процесс не валим: CLI решает сам, какие значения ему реально нужны.
    Возвращает список проблем (пустой список = всё ок).
    """
    problems = []

    if SCARCITY_SIMS < 1:
        problems.append("SCARCITY_SIMS должен быть >= 1")
    if SCARCITY_MIN_GROUP_SIZE < 1:
        problems.append("SCARCITY_MIN_GROUP_SIZE должен быть >= 1")
    if not 0 <= SCARCITY_SEED < 2**64:
        problems.append("SCARCITY_SEED должен помещаться в 64 бита")
    if SCARCITY_WORKERS < 1:
        problems.append("SCARCITY_WORKERS должен быть >= 1")
    if not 0.0 < ALPHA < 1.0:
        problems.append("ALPHA должен быть в (0, 1)")
    if QVALUE_BOOTSTRAPS < 1:
        problems.append("QVALUE_BOOTSTRAPS должен быть >= 1")
    if len(CSV_DELIMITER) != 1:
        problems.append("CSV_DELIMITER должен быть одним символом")

    return problems
