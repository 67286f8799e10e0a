"""Builtin scenario files shipped with the package."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from .config import ScenarioConfig, load_config, loads_config
from .errors import ParseError

_PACKAGE = "tdmetric.scenarios"


def list_scenarios() -> list:
    return sorted(
        p.name[: -len(".json")] for p in resources.files(_PACKAGE).iterdir() if p.name.endswith(".json")
    )


def scenario_text(name: str) -> str:
    if name not in list_scenarios():
        raise ParseError(f"no builtin scenario {name!r}; available: {', '.join(list_scenarios())}")
    return resources.files(_PACKAGE).joinpath(f"{name}.json").read_text(encoding="utf-8")


def load_builtin(name: str) -> ScenarioConfig:
    return loads_config(scenario_text(name), default_name=name)


def resolve_config(ref) -> ScenarioConfig:
    """Load ``ref`` as a file path if it exists, else as a builtin name."""
    path = Path(ref)
    if path.exists() or path.suffix == ".json" or len(path.parts) > 1:
        return load_config(path)
    return load_builtin(str(ref))
