import os
import json
import hashlib
from typing import Any, List, Optional, Tuple


def ensure_dir(path: str):
    """Create directory if it does not exist."""
    os.makedirs(path, exist_ok=True)


class MapVlcError(Exception):
    """Base class for every error the simulator raises on purpose."""


class ConfigReadError(MapVlcError):
    """Config file cannot be opened or read."""


class ConfigParseError(MapVlcError):
    """Config file is not a JSON object."""


class ConfigError(MapVlcError):
    """Config violates an invariant (or the world it describes cannot be sampled)."""

    def __init__(self, violations: List[Tuple[str, str, str]]):
        self.violations = list(violations)
        lines = [f"[{section}] {field}: {message}" for section, field, message in self.violations]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))

    def __reduce__(self):
        return self.__class__, (self.violations,)


class OutputError(MapVlcError):
    """Results could not be written."""


class ManifestError(MapVlcError):
    """Run manifest does not match the config it claims to describe."""


class TraceIndexError(MapVlcError):
    """Instance or slot index out of range for a trace."""


def sanitize_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "_-" else "_" for c in name).strip()


def canonical_json(tree: Any) -> str:
    return json.dumps(tree, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def content_hash(tree: Any) -> str:
    """sha256 of the canonical JSON form of a config tree."""
    return hashlib.sha256(canonical_json(tree).encode("utf-8")).hexdigest()


def write_json_atomic(path: str, data: Any):
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(data, f, ensure_ascii=False, indent=2)
        os.replace(tmp, path)
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e


def read_json(path: str, what: Optional[str] = None) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise ConfigReadError(f"cannot read {what or path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigParseError(f"{what or path} is not valid JSON: {e}") from e
