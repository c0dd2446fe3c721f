"""
Генератор скрипта для графиков (matplotlib).

Сами картинки не рисуем: на выходе самодостаточный .py, который читает CSV
прогонов и сохраняет PNG. Маркеры смены ветки проекции попадают в скрипт
только если в записях были переключения.
"""

import logging
import os
from typing import Dict, List, Optional, Sequence

from records import CsvTrajectory, open_artifact

logger = logging.getLogger(__name__)

# (ключ, подпись оси)
PANELS = (
    ("e", "tracking error e(t)"),
    ("theta_tilde_norm", "||theta_tilde(t)||"),
    ("u", "control input u(t)"),
    ("P", "P(t)"),
    ("V_L", "V_L(t)"),
    ("branch", "projection branch (1 = boundary)"),
)

_SCRIPT_BODY = '''

def load(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {name: [row[name] for row in rows] for name in rows[0]}


def numbers(cols, name):
    return [float(v) for v in cols[name]]


def indexed(cols, prefix):
    names = sorted(
        (name for name in cols if name.startswith(prefix) and name[len(prefix):].isdigit()),
        key=lambda name: int(name[len(prefix):]),
    )
    return [(name, numbers(cols, name)) for name in names]


def series(cols, key):
    if key in ("e", "u"):
        return indexed(cols, key)
    if key == "theta_tilde_norm":
        parts = [values for _, values in indexed(cols, "theta_tilde")]
        return [("||theta_tilde||", [math.sqrt(sum(v * v for v in row)) for row in zip(*parts)])]
    if key == "branch":
        return [("branch", [1.0 if b == "boundary" else 0.0 for b in cols["branch"]])]
    return [(key, numbers(cols, key))]


def main():
    fig, axes = plt.subplots(len(PANELS), 1, sharex=True, figsize=(9, 2.2 * len(PANELS)))
    for label, path in RECORDS:
        cols = load(path)
        t = numbers(cols, "t")
        for axis, (key, title) in zip(axes, PANELS):
            for name, values in series(cols, key):
                axis.plot(t, values, linewidth=0.9, label=f"{label}: {name}" if len(RECORDS) > 1 else name)
            axis.set_ylabel(title, fontsize=8)
'''

_MARKERS = '''
    for axis in axes:
        for label, times in SWITCH_TIMES.items():
            for ts in times:
                axis.axvline(ts, color="grey", linestyle=":", linewidth=0.6)
'''

_SCRIPT_TAIL = '''
    for axis in axes:
        axis.grid(True, alpha=0.3)
    if len(RECORDS) > 1:
        for axis in axes:
            axis.legend(fontsize=7, loc="upper right")
    axes[-1].set_xlabel("t, s")
    fig.tight_layout()
    fig.savefig(OUTPUT, dpi=150)


if __name__ == "__main__":
    main()
'''


def switch_times(record: CsvTrajectory) -> List[float]:
    t = record.columns["t"]
    return [float(t[k]) for k in range(len(t)) if record.switching[k]]


def render_plot_script(
    records: Sequence[CsvTrajectory],
    labels: Optional[Sequence[str]] = None,
    image_path: str = "trajectory.png",
) -> str:
    if not records:
        raise ValueError("at least one record is required")
    if labels is None:
        labels = [os.path.splitext(os.path.basename(r.path))[0] for r in records]

    entries = [(label, os.path.abspath(r.path)) for label, r in zip(labels, records)]
    switches: Dict[str, List[float]] = {
        label: times for label, r in zip(labels, records) if (times := switch_times(r))
    }

    lines = [
        f'"""Plots for {len(records)} trajectory record(s): {", ".join(labels)}."""',
        "import csv",
        "import math",
        "",
        "import matplotlib",
        "",
        'matplotlib.use("Agg")',
        "import matplotlib.pyplot as plt  # noqa: E402",
        "",
        f"RECORDS = {entries!r}",
        f"OUTPUT = {image_path!r}",
        f"PANELS = {list(PANELS)!r}",
    ]
    if switches:
        lines.append(f"SWITCH_TIMES = {switches!r}")

    script = "\n".join(lines) + _SCRIPT_BODY
    if switches:
        script += _MARKERS
    return script + _SCRIPT_TAIL


def write_plot_script(
    records: Sequence[CsvTrajectory],
    path: str,
    labels: Optional[Sequence[str]] = None,
) -> str:
    image_path = os.path.splitext(os.path.abspath(path))[0] + ".png"
    script = render_plot_script(records, labels, image_path)
    with open_artifact(path) as fh:
        fh.write(script)
    logger.info("plot script written: %s", path)
    return path
