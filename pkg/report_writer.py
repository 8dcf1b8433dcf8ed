import json
import logging
import math
import os
from typing import Any

import numpy as np

from data_utils import format_iso_datetime, get_utc_now

SCHEMA = 'cpcm-report/1'
SOFTWARE_VERSION = '1.0.0'


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings 'inf', '-inf', 'nan'"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isfinite(value):
            return value
        return 'nan' if math.isnan(value) else ('inf' if value > 0 else '-inf')
    return value


def build_report(command: str, body: dict) -> dict:
    return {'schema': SCHEMA, 'software_version': SOFTWARE_VERSION, 'command': command, **body}


def write_json(path: str, payload: dict):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(to_jsonable(payload), f, indent=2, sort_keys=True)
        f.write('\n')


def write_report(path: str, command: str, body: dict, run_info: dict = None) -> str:
    """Deterministic report at path; wall-clock details go to <path>.run.json"""
    write_json(path, build_report(command, body))
    stem, _ = os.path.splitext(path)
    run_path = f"{stem}.run.json"
    write_json(run_path, {'report': os.path.basename(path), 'finished_at': format_iso_datetime(get_utc_now()),
                          **(run_info or {})})
    logging.info(f"Report written to {path}")
    return path
