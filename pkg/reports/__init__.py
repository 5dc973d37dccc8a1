"""
Отчёты: строки результатов (types), текстовые таблицы (formatter),
запись JSON / CSV (writer).
"""
