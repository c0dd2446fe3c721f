import os
import logging
from dotenv import load_dotenv

# Загружаем переменные из .env
load_dotenv()


def _env_float(name: str, default: str) -> float:
    raw = os.getenv(name, default)
    try:
        value = float(raw)
    except ValueError:
        raise SystemExit(f"{name} должен быть числом, получено: {raw!r}. Проверь .env файл.")
    if value <= 0:
        raise SystemExit(f"{name} должен быть положительным, получено: {raw!r}. Проверь .env файл.")
    return value


# Шаг интегрирования и горизонт по умолчанию (сек)
DEFAULT_DT = _env_float("RISE_DEFAULT_DT", "0.001")
DEFAULT_T_END = _env_float("RISE_DEFAULT_T_END", "40.0")

# Любая норма состояния выше этого порога считается расходимостью
DIVERGENCE_LIMIT = _env_float("RISE_DIVERGENCE_LIMIT", "1e9")

# Куда CLI складывает CSV/JSON, если --out не указан
DEFAULT_OUTPUT_DIR = os.getenv("RISE_OUTPUT_DIR", "runs")

LOG_LEVEL = os.getenv("RISE_LOG_LEVEL", "INFO").upper()

# Логирование
logging.basicConfig(
    level=LOG_LEVEL,
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)
