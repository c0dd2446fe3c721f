import csv
import json
import logging
import os
import re
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, TextIO

import numpy as np

from services.controller import Branch
from services.simulation import TrajectoryRecord

logger = logging.getLogger(__name__)

# Векторные сигналы в порядке столбцов CSV; размерность "n" или "p" (= n + m)
VECTOR_COLUMNS = (
    ("x", "n"),
    ("xd", "n"),
    ("e", "n"),
    ("r", "n"),
    ("u", "n"),
    ("theta", "p"),
    ("theta_hat", "p"),
    ("theta_tilde", "p"),
    ("mu", "n"),
)
SCALAR_COLUMNS = ("P", "V_L")
FLAG_COLUMNS = ("branch", "switching_flag")


class RecordFormatError(Exception):
    pass


@contextmanager
def open_artifact(path: str) -> Iterator[TextIO]:
    """
    Пишем во временный файл рядом с целевым и атомарно подменяем его.
    При ошибке временный файл удаляется, а исключение уходит выше.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    fh = os.fdopen(fd, "w", encoding="utf-8", newline="")
    try:
        yield fh
        fh.close()
        os.replace(tmp_path, path)
    except Exception:
        fh.close()
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        logger.exception("Ошибка при записи %s, временный файл удалён", path)
        raise


# ================== CSV ==================


def csv_header(n: int, m: int) -> List[str]:
    sizes = {"n": n, "p": n + m}
    header = ["t"]
    for prefix, size in VECTOR_COLUMNS:
        header.extend(f"{prefix}{i}" for i in range(1, sizes[size] + 1))
    header.extend(SCALAR_COLUMNS)
    header.extend(FLAG_COLUMNS)
    return header


def _fmt(value: float) -> str:
    # repr даёт кратчайшую запись, которая читается обратно без потерь
    return repr(float(value))


def write_trajectory_csv(record: TrajectoryRecord, path: str) -> str:
    """Одна строка на отсчёт; RFC-4180 (CRLF, минимальное экранирование)."""
    with open_artifact(path) as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(csv_header(record.n, record.m))
        for k in range(len(record)):
            row = [_fmt(record.t[k])]
            for prefix, _ in VECTOR_COLUMNS:
                row.extend(_fmt(v) for v in getattr(record, prefix)[k])
            row.append(_fmt(record.P[k]))
            row.append(_fmt(record.V_L[k]))
            row.append(Branch.BOUNDARY.value if record.boundary[k] else Branch.INTERIOR.value)
            row.append("1" if record.switching[k] else "0")
            writer.writerow(row)
    logger.info("trajectory written: %s (%d rows)", path, len(record))
    return path


@dataclass(frozen=True)
class CsvTrajectory:
    """Прочитанный CSV: числовые столбцы по именам, ветка как bool-массив."""

    path: str
    header: List[str]
    n: int
    m: int
    columns: Dict[str, np.ndarray]
    boundary: np.ndarray
    switching: np.ndarray

    def group(self, prefix: str) -> np.ndarray:
        """Столбцы prefix1..prefixK, сложенные в матрицу (строки — отсчёты)."""
        size = self.n + self.m if prefix in ("theta", "theta_hat", "theta_tilde") else self.n
        return np.column_stack([self.columns[f"{prefix}{i}"] for i in range(1, size + 1)])


def _count(header: List[str], prefix: str) -> int:
    pattern = re.compile(rf"^{re.escape(prefix)}(\d+)$")
    return sum(1 for name in header if pattern.match(name))


def read_trajectory_csv(path: str) -> CsvTrajectory:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise RecordFormatError(f"{path}: cannot read record: {exc}") from exc
    except csv.Error as exc:
        raise RecordFormatError(f"{path}: malformed CSV: {exc}") from exc

    if len(rows) < 2:
        raise RecordFormatError(f"{path}: record has no samples")

    header = rows[0]
    n = _count(header, "x")
    m = _count(header, "theta") - n
    if n < 1 or m < 1:
        raise RecordFormatError(f"{path}: header does not describe a trajectory record")
    expected = csv_header(n, m)
    if header != expected:
        missing = [name for name in expected if name not in header]
        raise RecordFormatError(f"{path}: unexpected header; missing columns: {missing or 'order differs'}")

    numeric = header[: -len(FLAG_COLUMNS)]
    data = np.zeros((len(rows) - 1, len(numeric)))
    boundary = np.zeros(len(rows) - 1, dtype=bool)
    switching = np.zeros(len(rows) - 1, dtype=bool)
    allowed_branches = {b.value for b in Branch}

    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != len(header):
            raise RecordFormatError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        try:
            data[i] = [float(v) for v in row[: len(numeric)]]
        except ValueError as exc:
            raise RecordFormatError(f"{path}:{line}: {exc}") from exc
        branch, flag = row[-2], row[-1]
        if branch not in allowed_branches or flag not in ("0", "1"):
            raise RecordFormatError(f"{path}:{line}: bad branch/switching_flag {branch!r}/{flag!r}")
        boundary[i] = branch == Branch.BOUNDARY.value
        switching[i] = flag == "1"

    columns = {name: data[:, j] for j, name in enumerate(numeric)}
    return CsvTrajectory(
        path=path, header=header, n=n, m=m, columns=columns, boundary=boundary, switching=switching
    )


# ================== JSON ==================


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def write_summary_json(payload: Dict[str, Any], path: str) -> str:
    """Ключи отсортированы, чтобы сводки разных прогонов нормально сравнивались diff-ом."""
    with open_artifact(path) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    logger.info("summary written: %s", path)
    return path
