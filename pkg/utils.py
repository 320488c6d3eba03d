"""
Utility functions shared by the pdmp_lab package
"""
import json
import math
import re
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np


def format_float(value: float) -> str:
    """
    Format a float with 17 significant digits (bit-exact round trip)

    Args:
        value: Float to format

    Returns:
        Decimal string, 'inf'/'-inf'/'nan' for non-finite values
    """
    value = float(value)
    if math.isnan(value):
        return 'nan'
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return '%.17g' % value


def to_jsonable(obj: Any) -> Any:
    """
    Convert numpy scalars/arrays (recursively) into plain JSON types

    Non-finite floats become strings so the output stays strict JSON.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if math.isfinite(value):
            return value
        return format_float(value)
    return obj


def write_json(data: Union[Dict, List], path: Union[str, Path]) -> Path:
    """
    Write JSON data to disk (UTF-8, indented)

    Args:
        data: Data to write (dict or list)
        path: Destination file

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    json_data = json.dumps(to_jsonable(data), ensure_ascii=False, indent=2)
    path.write_text(json_data + '\n', encoding='utf-8')
    return path


def ensure_dir(path: Union[str, Path]) -> Path:
    """Create a directory (and parents) if missing"""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def safe_name(label: str) -> str:
    """
    Make a label safe for file names and S3 keys

    Args:
        label: Free-form label (e.g. 'contracting-lines / run 1')

    Returns:
        Label with path separators and whitespace replaced
    """
    return re.sub(r'[\s/\\]+', '_', label.strip())


def date_partition(target_date: date) -> str:
    """Build a 'year=YYYY/month=MM/day=DD' partition path"""
    return f"year={target_date.year}/month={target_date.month:02d}/day={target_date.day:02d}"


def list_files(directory: Union[str, Path]) -> List[Path]:
    """List files under a directory, sorted for deterministic iteration"""
    directory = Path(directory)
    if not directory.exists():
        return []
    return sorted(p for p in directory.rglob('*') if p.is_file())
