"""YAML configuration files with line-numbered diagnostics.

A configuration is a nested mapping.  Recognised top-level keys::

    seed, replications, cap, workers, target_arl0, tolerance, schedule,
    budget, parameter, shifts, cusum_convention, recalibrate_band,
    scenario, scenarios, chart, charts, h_table, process, subgroup_size,
    data, calibration, convention_report

Unknown keys are rejected with the line they appear on.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from . import charts
from .datagen import Scenario


class ConfigFileError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = path or "<config>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")


class LineDict(dict):
    """Mapping that remembers the 1-based source line of each key."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.lines: dict = {}
        self.line: int | None = None


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = LineDict()
    out.line = node.start_mark.line + 1
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise ConfigFileError(f"duplicate key {key!r}", line=key_node.start_mark.line + 1)
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = key_node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)

TOP_LEVEL_KEYS = {
    "command", "seed", "replications", "cap", "workers", "target_arl0", "tolerance",
    "schedule", "budget", "parameter", "shifts", "cusum_convention", "recalibrate_band",
    "scenario", "scenarios", "chart", "charts", "h_table", "process", "subgroup_size",
    "data", "calibration", "convention_report", "title",
}

PRESET_DIR = "presets"


def preset_names() -> list:
    root = resources.files(__package__) / PRESET_DIR
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_path(name: str) -> Path:
    """A filesystem path, or the packaged preset with that name."""
    path = Path(name)
    if path.exists():
        return path
    candidate = resources.files(__package__) / PRESET_DIR / f"{name}.yaml"
    if candidate.is_file():
        return Path(str(candidate))
    raise ConfigFileError(f"no such config file or preset (presets: {', '.join(preset_names())})", name)


def load(name: str) -> LineDict:
    path = resolve_path(name)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigFileError(exc.strerror or str(exc), str(path)) from None
    return loads(text, str(path))


def loads(text: str, path: str | None = None) -> LineDict:
    try:
        data = yaml.load(text, Loader=_Loader)
    except ConfigFileError as exc:
        raise ConfigFileError(str(exc).split(": ", 1)[1], path, exc.line) from None
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigFileError(
            exc.problem or str(exc), path, mark.line + 1 if mark else None
        ) from None
    if data is None:
        data = LineDict()
    if not isinstance(data, LineDict):
        raise ConfigFileError("top level must be a mapping", path, 1)
    for key in data:
        if key not in TOP_LEVEL_KEYS:
            raise ConfigFileError(f"unknown key {key!r}", path, data.lines.get(key))
    data.path = path  # type: ignore[attr-defined]
    return data


def _where(cfg, key=None):
    path = getattr(cfg, "path", None)
    line = None
    if isinstance(cfg, LineDict):
        line = cfg.lines.get(key) if key is not None else cfg.line
    return path, line


def fail(cfg, key, message) -> ConfigFileError:
    path, line = _where(cfg, key)
    return ConfigFileError(message, path, line)


def chart_config(section, root) -> Any:
    if not isinstance(section, dict):
        raise ConfigFileError("chart section must be a mapping", getattr(root, "path", None),
                              getattr(section, "line", None))
    try:
        return charts.chart_from_dict(section)
    except (charts.ConfigError, ValueError, TypeError) as exc:
        line = getattr(section, "line", None)
        raise ConfigFileError(str(exc), getattr(root, "path", None), line) from None


def scenario_config(section, root) -> Scenario:
    if section is None:
        return Scenario()
    if isinstance(section, str):
        named = {"clean": Scenario(), "contaminated": Scenario(theta=0.06, sigma2_c=6.25)}
        if section not in named:
            raise ConfigFileError(f"unknown scenario preset {section!r}", getattr(root, "path", None))
        return named[section]
    if not isinstance(section, dict):
        raise ConfigFileError("scenario must be a mapping", getattr(root, "path", None))
    try:
        return Scenario.from_dict(dict(section))
    except (ValueError, TypeError) as exc:
        raise ConfigFileError(str(exc), getattr(root, "path", None),
                              getattr(section, "line", None)) from None


def get(cfg, key, default, kind):
    if key not in cfg:
        return default
    value = cfg[key]
    try:
        if kind is int:
            if isinstance(value, bool) or int(value) != value:
                raise ValueError
            return int(value)
        if kind is float:
            return float(value)
        if kind is str:
            if not isinstance(value, str):
                raise ValueError
            return value
        return kind(value)
    except (TypeError, ValueError):
        raise fail(cfg, key, f"{key} must be {kind.__name__}, got {value!r}") from None


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return obj.item()
    return obj


def dumps(data: dict) -> str:
    return yaml.safe_dump(_plain(data), sort_keys=False, default_flow_style=None, width=100)
