# handlers/__init__.py

import argparse

from .basic import EXIT_CERTIFICATE, EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, register_basic_handlers
from .run import register_run_handlers
from .verify import register_verify_handlers
from .plot import register_plot_handlers


def register_all_handlers(subparsers: argparse._SubParsersAction) -> None:
    # Прогон и сравнение регуляторов
    register_run_handlers(subparsers)

    # Полный набор проверок
    register_verify_handlers(subparsers)

    # Графики по готовым CSV
    register_plot_handlers(subparsers)

    # Справка по встроенным сценариям
    register_basic_handlers(subparsers)


__all__ = [
    "register_all_handlers",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_CERTIFICATE",
    "EXIT_DIVERGED",
]
