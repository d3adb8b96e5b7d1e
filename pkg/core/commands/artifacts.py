"""Deterministic CSV / JSON writers: 9 significant digits, fixed ordering."""
import json
import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

SIGNIFICANT_DIGITS = 9
FLOAT_FORMAT = "%.8e"


def round_significant(value: Any) -> Any:
    """Recursively round floats to 9 significant digits; NaN and inf become null."""
    if isinstance(value, dict):
        return {str(k): round_significant(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_significant(v) for v in value]
    if isinstance(value, np.ndarray):
        return [round_significant(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.{SIGNIFICANT_DIGITS - 1}e}")
    return value


def write_json(data: Any, path: Path) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(round_significant(data), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path
