"""CSV, summary and console output for experiment runs."""

import json
import math
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from schauder_lab.logging_config import get_logger

logger = get_logger(__name__)

FLOAT_FORMAT = "%.17g"


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _clean(value: Any) -> Any:
    """Replace non-finite floats by strings so the summary stays valid JSON."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (float, np.floating)) and not math.isfinite(float(value)):
        return str(float(value))
    return value


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """Write ``frame`` with 17 significant digits so reruns compare byte for byte."""
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {len(frame)} row(s) to {path}")
    return path


def write_summary(summary: Dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(summary), indent=2, sort_keys=True, default=_to_builtin) + "\n")
    return path


def read_report(path: Path) -> Optional[pd.DataFrame]:
    """Read a report CSV back; ``None`` when it is missing or empty."""
    try:
        frame = pd.read_csv(path)
    except (FileNotFoundError, pd.errors.EmptyDataError) as e:
        logger.warning(f"Cannot read report {path}: {e}")
        return None
    return None if frame.empty else frame


def render_markdown(title: str, frame: pd.DataFrame) -> str:
    return f"### {title}\n\n{frame.to_markdown(index=False)}\n"


def print_report(title: str, frame: pd.DataFrame) -> None:
    if frame.empty:
        logger.warning(f"Report {title} is empty")
        return
    print(render_markdown(title, frame))
