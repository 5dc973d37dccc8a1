"""
Сервисы теста на дефицит фамилий: список (roster), выборки, тест,
множественные сравнения, слои, диагностика, синтетика.
"""
