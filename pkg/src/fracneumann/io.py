"""Writers for results: JSON with provenance, RFC-4180 CSV and two-column plot data.

Numbers are written with ``repr`` (shortest round-trip form) everywhere, so a
value read back from the CSV equals the one in the JSON bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
import os
import platform
from pathlib import Path

import numpy as np

OUTPUT_ROOT_ENV = "FRACNEUMANN_OUTPUT_ROOT"


class OutputError(OSError):
    pass


def resolve_output_dir(path: str) -> Path:
    """Relative paths hang off $FRACNEUMANN_OUTPUT_ROOT when it is set."""
    root = os.environ.get(OUTPUT_ROOT_ENV)
    p = Path(path)
    if root and not p.is_absolute():
        p = Path(root) / p
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"output directory {p} not writable: {exc.strerror}") from None
    if not os.access(p, os.W_OK):
        raise OutputError(f"output directory {p} not writable")
    return p


def plain(v):
    """JSON-ready copy: numpy scalars and arrays become Python numbers and lists."""
    if isinstance(v, dict):
        return {str(k): plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return [plain(x) for x in v.tolist()]
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def provenance(config_echo: dict, seed: int) -> dict:
    import scipy

    from . import __version__

    return {
        "config": plain(config_echo),
        "seed": int(seed),
        "versions": {
            "fracneumann": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def write_json(path: Path, obj: dict) -> Path:
    text = json.dumps(plain(obj), indent=2, sort_keys=True, allow_nan=True)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, columns, rows) -> Path:
    """Header row plus one line per row dict; CRLF line ends and minimal quoting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(columns)
        for r in rows:
            w.writerow([format_cell(r.get(c)) for c in columns])
    return path


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_plot_data(path: Path, x, y, comments=()) -> Path:
    """``x y`` per line; comment lines start with ``#``."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("plot data needs equal-length x and y")
    lines = [f"# {c}" for c in comments]
    lines += [f"{repr(float(a))} {repr(float(b))}" for a, b in zip(x, y)]
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


def read_plot_data(path: Path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.size == 0:
        return np.empty(0), np.empty(0)
    return data[:, 0], data[:, 1]


def finite_rows(rows, columns) -> list[str]:
    """Names of numeric cells that are not finite (empty list when all are)."""
    bad = []
    for k, r in enumerate(rows):
        for c in columns:
            v = r.get(c)
            if isinstance(v, (float, np.floating)) and not math.isfinite(v):
                bad.append(f"row {k} column {c}")
    return bad
