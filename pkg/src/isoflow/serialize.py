"""JSON/CSV float formatting shared by every report.

JSON uses the shortest round-trip representation (``repr``); CSV uses a
fixed 17 significant digits. Infinities are written as the strings
``"inf"``/``"-inf"``; NaN is refused.
"""

from __future__ import annotations

import json
import math

import numpy as np


class NaNInOutput(ValueError):
    pass


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            raise NaNInOutput("NaN in output")
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        raise NaNInOutput("NaN in output")
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def csv_row(values) -> list:
    return [fmt(v) for v in values]
