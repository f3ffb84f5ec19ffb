"""
Reporting - CSV and JSON report files with provenance
Writes are atomic (temp file in the target directory, then os.replace).
"""

import csv
import io
import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence

from modules import __version__
from modules.operators import GENERATOR_NAME

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'


def provenance(config_sha256: str, seed: int) -> Dict[str, Any]:
    return {
        'config_sha256': config_sha256,
        'generator': GENERATOR_NAME,
        'seed': seed,
        'version': __version__,
    }


def atomic_write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f'.{path.name}.', dir=path.parent)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.debug(f"wrote {path}")
    return path


def _jsonable(value: Any) -> Any:
    """Non-finite floats become the strings 'inf', '-inf', 'nan'"""
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, 'item'):
        return _jsonable(value.item())
    return value


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False)
    return atomic_write_text(path, text + '\n')


def format_cell(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return FLOAT_FORMAT % value
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\r\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    return atomic_write_text(path, buffer.getvalue())
