"""Structured-text experiment records: flat `key = value` lines with
dotted sections.

Grammar (shared by config files, system specs, and schedule specs):

    record    := line*
    line      := blank | comment | binding
    comment   := '#' ...
    binding   := key '=' value
    key       := segment ('.' segment)*      # e.g. system.left.alpha
    value     := whitespace-separated tokens up to end of line

Unknown and duplicate keys are rejected with the offending line and
column; every run is fully determined by (config, seed).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from . import dynsys


class ConfigError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        where = f" (line {line}, column {col})" if line else ""
        super().__init__(f"{message}{where}")


@dataclass(frozen=True)
class Binding:
    line: int
    col: int
    key: str
    value: str


_KEY_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")


def parse_bindings(text: str) -> list[Binding]:
    out = []
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno, 1)
        key, _, value = line.partition("=")
        if not key.strip():
            raise ConfigError("missing key before '='", lineno, 1)
        col = raw.index(key.strip()[0]) + 1
        key = key.strip()
        value = value.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"malformed key {key!r}", lineno, col)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}", lineno, col)
        seen[key] = lineno
        out.append(Binding(lineno, col, key, value))
    return out


def validate_keys(bindings: Sequence[Binding], allowed: Sequence[str]) -> None:
    """Reject keys not matching any allowed regex (full match)."""
    pats = [re.compile(p + r"$") for p in allowed]
    for b in bindings:
        if not any(p.match(b.key) for p in pats):
            raise ConfigError(f"unknown key {b.key!r}", b.line, b.col)


def to_nested(bindings: Sequence[Binding]) -> dict:
    root: dict = {}
    for b in bindings:
        parts = b.key.split(".")
        node = root
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(
                    f"key {b.key!r} conflicts with an earlier scalar", b.line, b.col
                )
            node = nxt
        if parts[-1] in node:
            raise ConfigError(f"key {b.key!r} set twice", b.line, b.col)
        node[parts[-1]] = b.value
    return root


def parse_record(text: str, allowed: Sequence[str]) -> dict:
    bindings = parse_bindings(text)
    validate_keys(bindings, allowed)
    return to_nested(bindings)


def flatten(nested: Mapping, prefix: str = "") -> list[tuple[str, str]]:
    out = []
    for key in sorted(nested):
        val = nested[key]
        full = f"{prefix}{key}"
        if isinstance(val, Mapping):
            out.extend(flatten(val, full + "."))
        else:
            out.append((full, _token(val)))
    return out


def _token(val) -> str:
    if isinstance(val, (list, tuple)):
        return " ".join(_token(v) for v in val)
    if isinstance(val, float):
        return repr(val)
    return str(val)


def to_record(nested: Mapping, prefix: str = "") -> str:
    return "\n".join(f"{k} = {v}" for k, v in flatten(nested, prefix)) + "\n"


# Allowed-key patterns shared by the CLI commands.  Products nest one
# system record under left./right.; pullbacks nest one cocycle record
# under inner.
SYSTEM_KEYS = r"system(\.left|\.right)*\.(kind|alpha|p|matrix|halfwidth)"
COCYCLE_KEYS = (
    r"cocycle(\.inner)*\.(kind|entries|function|scale|lambda|p|phi|factor)"
)
PROBE_KEYS = (
    r"probes\.(count|seed|angles|periodic_words|periodic_count"
    r"|witness_base|witness_count)"
)
PARTITION_KEYS = r"partition\.(bins|window)"
OUT_KEYS = r"out\.dir"


def system_record(system: dynsys.SystemDescriptor) -> str:
    """Serialize a system spec; parse_record + make_system round-trips it."""
    return to_record({"system": system.params})


def parse_system_record(text: str) -> dynsys.SystemDescriptor:
    nested = parse_record(text, [SYSTEM_KEYS])
    if "system" not in nested:
        raise ConfigError("record has no system.* keys")
    return dynsys.make_system(nested["system"])
