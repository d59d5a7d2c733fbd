"""TOML-like config files: [section] headers with JSON-typed values.

Values parse as JSON where possible (numbers, booleans, quoted strings,
bracketed lists); anything else is kept as a bare string. Consumers
validate their own sections against declared key sets, so unknown keys
fail loudly instead of being ignored.
"""

from __future__ import annotations

import configparser
import json
from pathlib import Path


class ConfigError(ValueError):
    pass


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw.strip()


def parse_config_file(path: str | Path) -> dict[str, dict[str, object]]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str  # keep key case
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    return {
        section: {key: _parse_value(raw) for key, raw in parser[section].items()}
        for section in parser.sections()
    }


def check_declared(
    tree: dict[str, dict[str, object]], declared: dict[str, set[str]]
) -> None:
    """Reject any section or key that no consumer declares."""
    for section, keys in tree.items():
        if section not in declared:
            raise ConfigError(f"unknown config section [{section}]")
        unknown = set(keys) - declared[section]
        if unknown:
            raise ConfigError(
                f"unknown config key [{section}] {sorted(unknown)[0]}"
            )


def merge_overrides(
    tree: dict[str, dict[str, object]], overrides: list[str]
) -> dict[str, dict[str, object]]:
    """Apply ``section.key=value`` command-line overrides onto the tree."""
    merged = {s: dict(kv) for s, kv in tree.items()}
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        merged.setdefault(section, {})[key] = _parse_value(raw)
    return merged


def write_config_file(tree: dict[str, dict[str, object]], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for section in sorted(tree):
        lines.append(f"[{section}]")
        for key in sorted(tree[section]):
            lines.append(f"{key} = {json.dumps(tree[section][key])}")
        lines.append("")
    path.write_text("\n".join(lines), encoding="utf-8")
    return path
