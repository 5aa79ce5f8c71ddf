"""Run configuration: a declarative TOML file plus per-flag CLI overrides.

Sections mirror the pipeline: [catalog], [output], [textmine], [llm],
[embed], [search], [evaluate]. Every CLI flag overrides its config key;
dumps_config/load round-trip losslessly.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from metabench.errors import ConfigError
from metabench.llmgen import GenBackendConfig
from metabench.textmine import TextmineParams


@dataclass
class RunConfig:
    catalog: str = ""
    catalog_format: str = "array-json"
    data_dir: str = ""
    sample_head: int = 3
    sample_tail: int = 3
    out: str = "out"
    textmine: TextmineParams = field(default_factory=TextmineParams)
    llm: GenBackendConfig = field(default_factory=GenBackendConfig)
    embed_provider: str = "hash"
    embed_dim: int = 256
    embed_seed: int = 42
    embed_endpoint: str = ""
    embed_api_key_env: str = "MAB_EMBED_API_KEY"
    search_k: int = 5
    conditions: list[str] = field(default_factory=lambda: ["all"])


_SECTION_MAP = {
    "catalog": {"path": "catalog", "format": "catalog_format", "data_dir": "data_dir",
                "sample_head": "sample_head", "sample_tail": "sample_tail"},
    "output": {"dir": "out"},
    "embed": {
        "provider": "embed_provider",
        "dim": "embed_dim",
        "seed": "embed_seed",
        "endpoint": "embed_endpoint",
        "api_key_env": "embed_api_key_env",
    },
    "search": {"k": "search_k"},
    "evaluate": {"conditions": "conditions"},
}


def _apply_section(obj, section: str, values: dict, allowed: dict[str, str] | None = None):
    for key, value in values.items():
        if allowed and key not in allowed:
            raise ConfigError(f"unknown config key [{section}] {key}")
        attr = allowed[key] if allowed else key
        if not hasattr(obj, attr):
            raise ConfigError(f"unknown config key [{section}] {key}")
        setattr(obj, attr, value)


def config_from_dict(data: dict) -> RunConfig:
    cfg = RunConfig()
    for section, values in data.items():
        if not isinstance(values, dict):
            raise ConfigError(f"config section [{section}] must be a table")
        if section in _SECTION_MAP:
            _apply_section(cfg, section, values, _SECTION_MAP[section])
        elif section == "textmine":
            known = {f.name for f in dc_fields(TextmineParams)}
            for key in values:
                if key not in known:
                    raise ConfigError(f"unknown config key [textmine] {key}")
            _apply_section(cfg.textmine, section, values)
        elif section == "llm":
            known = {f.name for f in dc_fields(GenBackendConfig)}
            for key in values:
                if key not in known:
                    raise ConfigError(f"unknown config key [llm] {key}")
            _apply_section(cfg.llm, section, values)
        else:
            raise ConfigError(f"unknown config section [{section}]")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    return config_from_dict(data)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize config value {value!r}")


def dumps_config(cfg: RunConfig) -> str:
    """Serialize a RunConfig to TOML; load_config round-trips it exactly."""
    lines: list[str] = []

    def section(name: str, pairs: list[tuple[str, object]]):
        lines.append(f"[{name}]")
        for key, value in pairs:
            if value is not None:
                lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")

    section("catalog", [("path", cfg.catalog), ("format", cfg.catalog_format),
                        ("data_dir", cfg.data_dir), ("sample_head", cfg.sample_head),
                        ("sample_tail", cfg.sample_tail)])
    section("output", [("dir", cfg.out)])
    section("textmine", [(f.name, getattr(cfg.textmine, f.name))
                         for f in dc_fields(TextmineParams)])
    section("llm", [(f.name, getattr(cfg.llm, f.name))
                    for f in dc_fields(GenBackendConfig)])
    section("embed", [("provider", cfg.embed_provider), ("dim", cfg.embed_dim),
                      ("seed", cfg.embed_seed), ("endpoint", cfg.embed_endpoint),
                      ("api_key_env", cfg.embed_api_key_env)])
    section("search", [("k", cfg.search_k)])
    section("evaluate", [("conditions", cfg.conditions)])
    return "\n".join(lines)
