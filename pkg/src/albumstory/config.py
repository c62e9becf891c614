"""Run-config loading: one structured file (YAML or JSON), flag overrides win."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .model import RunConfig

_KNOWN_KEYS = frozenset(RunConfig.__dataclass_fields__)


def load_run_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Build the RunConfig from an optional config file plus CLI overrides.

    Overrides with value None mean "flag not given" and are dropped.
    """
    data: dict[str, Any] = {}
    if path is not None:
        raw = Path(path).read_text(encoding="utf-8")
        loaded = yaml.safe_load(raw)  # YAML is a JSON superset
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {path} must hold a mapping")
        unknown = sorted(set(loaded) - _KNOWN_KEYS)
        if unknown:
            raise ValueError(f"config file {path} has unknown keys: {unknown}")
        data.update(loaded)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return RunConfig.from_dict(data)
