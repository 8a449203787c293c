"""
JSON/CSV helpers shared by the commands.

- Converts numpy / pandas values into plain Python types for JSON
- Writes byte-stable JSON (sorted keys, fixed indent, trailing newline)
- Writes CSV tables with a schema version column and a fixed float format
"""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
CSV_FLOAT_FORMAT = "%.12g"


def convert_numpy_types(obj):
    """Recursively convert numpy / pandas / enum values to Python native types for JSON."""
    if isinstance(obj, dict):
        return {str(k): convert_numpy_types(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [convert_numpy_types(v) for v in obj]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.ndarray,)):
        return convert_numpy_types(obj.tolist())
    if isinstance(obj, pd.Series):
        return convert_numpy_types(obj.to_list())
    if isinstance(obj, Path):
        return str(obj)
    return obj


def safe_json(obj):
    """Return a JSON-safe object (no numpy, no NaN/inf)."""
    clean = convert_numpy_types(obj)
    return json.loads(json.dumps(clean, allow_nan=False))


def dumps_json(obj) -> str:
    return json.dumps(safe_json(obj), sort_keys=True, indent=2) + "\n"


def dump_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(obj), encoding="utf-8")
    logger.debug("Wrote JSON %s", path)
    return path


def load_json(path) -> Dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_table(rows: List[Dict[str, Any]], path, columns: List[str]) -> Path:
    """Write rows as CSV with a header row and a leading schema_version column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(rows, columns=columns)
    df.insert(0, "schema_version", CSV_SCHEMA_VERSION)
    df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logger.debug("Wrote CSV %s (%s rows)", path, len(df))
    return path
