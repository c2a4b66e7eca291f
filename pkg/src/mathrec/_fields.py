"""Field-level type checks for config dataclasses loaded from text files."""

from __future__ import annotations

import dataclasses
from typing import Any, Mapping

from mathrec.errors import ConfigError

_SCALARS = {"int": int, "float": (int, float), "bool": bool, "str": str}


def _ok(annotation: str, value: Any) -> bool:
    annotation = annotation.replace("Optional[", "").rstrip("]") if annotation.startswith(
        "Optional[") else annotation
    if value is None:
        return True
    if annotation in _SCALARS:
        if annotation != "bool" and isinstance(value, bool):
            return False
        return isinstance(value, _SCALARS[annotation])
    if annotation.startswith(("tuple[int", "list[int", "Sequence[int")):
        return isinstance(value, (list, tuple)) and all(
            isinstance(v, int) and not isinstance(v, bool) for v in value)
    return True


def check_fields(cls, data: Mapping, section: str, partial: bool = False) -> None:
    """Raise :class:`ConfigError` naming the first unknown or mistyped field.

    With ``partial`` set, required fields may be absent (they are filled in later).
    """
    if not isinstance(data, Mapping):
        raise ConfigError(f"{section}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"{section}.{key}: unknown field")
        annotation = fields[key].type if isinstance(fields[key].type, str) else getattr(
            fields[key].type, "__name__", "")
        if not _ok(annotation, value):
            raise ConfigError(
                f"{section}.{key}: expected {annotation}, got {type(value).__name__} {value!r}")
    missing = [f.name for f in fields.values()
               if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
               and f.name not in data and f.init]
    if missing and not partial:
        raise ConfigError(f"{section}.{missing[0]}: required field missing")
