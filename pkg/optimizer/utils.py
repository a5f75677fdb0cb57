"""Common numeric helpers."""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any

# 浮動小数点の丸め誤差を吸収する許容値
EPS = 1e-9


def clamp(value: float, low: float, high: float) -> float:
    return max(low, min(high, value))


def round_half_up(value: float) -> int:
    """0.5 は切り上げる（Python の round は偶数丸め）"""
    return int(math.floor(value + 0.5))


def ceil_tol(value: float, tol: float = EPS) -> int:
    """誤差を許容した切り上げ: 2.0000000001 → 2"""
    return int(math.ceil(value - tol))


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_digest(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def fmt_number(value: float) -> str:
    """LP ファイル用の決定的な数値表現"""
    if value == 0:
        return "0"
    text = format(value, ".12g")
    return text
