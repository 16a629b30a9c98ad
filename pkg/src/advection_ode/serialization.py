"""Nested dataclass <-> plain dict conversion with field-path diagnostics."""

import dataclasses
import typing

from .errors import ConfigError


def to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_dict(x) for x in obj]
    if isinstance(obj, dict):
        return {k: to_dict(v) for k, v in obj.items()}
    return obj


def _coerce(tp, value, path):
    # YAML 1.1 reads "1e-3" as a string; accept it where a float is expected
    if isinstance(value, str) and float in (typing.get_args(tp) or (tp,)):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"expected a number, got {value!r}", path) from None
    return value


def from_dict(cls, data, path=""):
    """Build dataclass ``cls`` from ``data``; unknown keys are errors."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping, got {type(data).__name__}", path or None)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError("unknown field", f"{path}.{key}" if path else key)
    kwargs = {}
    for name, value in data.items():
        sub = f"{path}.{name}" if path else name
        tp = hints.get(name)
        if dataclasses.is_dataclass(tp):
            kwargs[name] = from_dict(tp, value, sub)
        else:
            kwargs[name] = _coerce(tp, value, sub)
    try:
        return cls(**kwargs)
    except ConfigError as e:
        if e.path and path and not e.path.startswith(path):
            raise ConfigError(str(e).split(": ", 1)[-1], f"{path}.{e.path.split('.')[-1]}") from None
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), path or None) from None
