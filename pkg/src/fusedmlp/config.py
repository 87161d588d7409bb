"""Line-based ``key = value`` configuration files."""
from __future__ import annotations

import os


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


def load_config(path: str | os.PathLike | None) -> dict[str, str]:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def parse_int_list(value: str) -> list[int]:
    """``"2048,4096"`` or a power-of-two range ``"2^11..2^14"``."""
    value = value.strip()
    if ".." in value:
        lo, hi = (int(v.strip().split("^")[1]) if "^" in v else int(v).bit_length() - 1
                  for v in value.split(".."))
        return [1 << e for e in range(lo, hi + 1)]
    return [int(v) for v in value.split(",") if v.strip()]
