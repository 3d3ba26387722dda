"""Line-oriented report records (JSON lines) and their field formatting."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Mapping

from .assumption import BOTTOM


def hexstr(value: int, bits: int) -> str:
    if value == BOTTOM:
        return "bot"
    width = max(1, (bits + 3) // 4)
    return format(int(value), f"0{width}x")


def parse_hex(text: str) -> int:
    return BOTTOM if text == "bot" else int(text, 16)


def _clean(obj):
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            return str(obj)
        return obj
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalar
        return _clean(obj.item())
    return obj


def dumps(record: Mapping) -> str:
    """Canonical one-line JSON (sorted keys, shortest round-trip floats)."""
    return json.dumps(_clean(record), sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def write_jsonl(path: Path, records: Iterable[Mapping]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps(rec))
            fh.write("\n")


def read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(path: Path, doc: Mapping) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(_clean(doc), sort_keys=True, indent=2, ensure_ascii=True))
        fh.write("\n")
