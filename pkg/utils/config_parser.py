from __future__ import annotations

import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, TypedDict

import yaml

from entitylib import PVDMConfig, TrainConfig
from entitylib.types import LOAD_MODES, OovPolicy
from entitylib.utils import atomic_write

if sys.version_info >= (3, 11):
    from typing import NotRequired, Self
else:
    from typing_extensions import NotRequired, Self

LOGGER = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Raised for unreadable config files and unknown or invalid options."""


def _check_keys(section: str, data: Any, allowed: set[str]) -> Mapping[str, Any]:
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"Config section '{section}' must be a mapping")
    if unknown := set(data) - allowed:
        listed = ", ".join(sorted(unknown))
        raise ConfigError(f"Unknown key(s) in config section '{section}': {listed}")
    return data


@dataclass(frozen=True)
class RunConfig:
    """Run configuration, parsed from a YAML file with sections `data`, `embeddings`,
    `training`, `pvdm` and `thresholds`. Use `RunConfig.from_yaml_file` to parse a file and
    `with_overrides` to apply command-line flags on top of it."""

    data: RunConfig.Data = field(default_factory=lambda: RunConfig.Data())
    embeddings: RunConfig.Embeddings = field(default_factory=lambda: RunConfig.Embeddings())
    training: TrainConfig = field(default_factory=TrainConfig)
    pvdm: PVDMConfig = field(default_factory=PVDMConfig)
    thresholds: RunConfig.Thresholds = field(default_factory=lambda: RunConfig.Thresholds())

    class YamlData(TypedDict):
        """YAML dict: Data files."""

        train: NotRequired[str | None]
        dev: NotRequired[str | None]
        test: NotRequired[str | None]
        documents: NotRequired[str | None]
        unknown_types: NotRequired[str]

    class YamlEmbeddings(TypedDict):
        """YAML dict: Vector files and lookup policy."""

        word_vectors: NotRequired[str | None]
        doc_vectors: NotRequired[str | None]
        oov_policy: NotRequired[str]
        word_dim: NotRequired[int | None]

    class YamlThresholds(TypedDict):
        """YAML dict: Threshold tuning options."""

        max_passes: NotRequired[int]
        joint_search_limit: NotRequired[int]

    class YamlConfig(TypedDict):
        """YAML dict: Top-level configuration."""

        data: NotRequired[RunConfig.YamlData]
        embeddings: NotRequired[RunConfig.YamlEmbeddings]
        training: NotRequired[dict[str, Any]]
        pvdm: NotRequired[dict[str, Any]]
        thresholds: NotRequired[RunConfig.YamlThresholds]

    @dataclass(frozen=True)
    class Data:
        train: str | None = None
        dev: str | None = None
        test: str | None = None
        documents: str | None = None
        unknown_types: str = "strict"

        def __post_init__(self) -> None:
            if self.unknown_types not in ("strict", "keep"):
                raise ConfigError(
                    f"data.unknown_types must be 'strict' or 'keep' (got '{self.unknown_types}'): "
                    f"{LOAD_MODES.get(self.unknown_types, 'unknown mode')}"
                )

    @dataclass(frozen=True)
    class Embeddings:
        word_vectors: str | None = None
        doc_vectors: str | None = None
        oov_policy: str = OovPolicy.LOWERCASE.value
        word_dim: int | None = None
        """Expected word vector dimension (default: inferred from the file)."""

        def __post_init__(self) -> None:
            try:
                OovPolicy.from_str(self.oov_policy)
            except ValueError as e:
                raise ConfigError(str(e)) from None

    @dataclass(frozen=True)
    class Thresholds:
        max_passes: int = 10
        joint_search_limit: int = 4096

    _SECTIONS = ("data", "embeddings", "training", "pvdm", "thresholds")

    @classmethod
    def from_dict(cls, data: RunConfig.YamlConfig | Any) -> Self:
        """Builds a `RunConfig` from a dict; every section and key is optional, but unknown
        sections and keys are rejected."""
        data = _check_keys("<top level>", data, set(cls._SECTIONS))
        sections: dict[str, Any] = {}
        try:
            for name, section_cls in (
                ("data", RunConfig.Data),
                ("embeddings", RunConfig.Embeddings),
                ("training", TrainConfig),
                ("pvdm", PVDMConfig),
                ("thresholds", RunConfig.Thresholds),
            ):
                allowed = {f.name for f in fields(section_cls)}
                values = _check_keys(name, data.get(name), allowed)
                sections[name] = section_cls(**values)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Invalid configuration: {e}") from None
        return cls(**sections)

    @classmethod
    def from_yaml_file(cls, yaml_file_path: str | Path) -> Self:
        """Parses a YAML config file. A missing or malformed file raises `ConfigError`."""
        try:
            with open(yaml_file_path, "r", encoding="utf-8") as file:
                data: RunConfig.YamlConfig | Any = yaml.safe_load(file)
        except FileNotFoundError:
            raise ConfigError(f"Config file '{yaml_file_path}' not found") from None
        except yaml.YAMLError as e:
            raise ConfigError(f"Config file '{yaml_file_path}' is not valid YAML: {e}") from None
        LOGGER.info(f"Loaded configuration from {yaml_file_path}")
        return cls.from_dict(data)

    def with_overrides(self, section: str, **values: Any) -> RunConfig:
        """Returns a copy with `values` replacing the keys of `section`."""
        if section not in self._SECTIONS:
            raise ConfigError(f"Unknown config section '{section}'")
        if not values:
            return self
        try:
            updated = replace(getattr(self, section), **values)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid value for '{section}': {e}") from None
        return replace(self, **{section: updated})

    def to_dict(self) -> dict[str, Any]:
        return {name: asdict(getattr(self, name)) for name in self._SECTIONS}

    def to_yaml_file(self, path: str | Path) -> None:
        with atomic_write(path) as file:
            yaml.safe_dump(self.to_dict(), file, sort_keys=False)
