"""Run configuration: flat dotted-key JSON files, flag overrides, provenance hash."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import ConfigError
from .pretrain.configs import MODEL_NAMES

ARTIFACT_VERSION = 1


class RunConfig:
    """Flat dotted-key configuration with mandatory seed.

    Values come from a JSON object of dotted keys ({"corpus.num_speakers": 20})
    optionally overridden by CLI flags. The hash of the resolved mapping is
    embedded in every output for provenance.
    """

    def __init__(self, values: dict | None = None):
        self.values: dict = dict(values or {})

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            obj = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(obj, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls(obj)

    def override(self, key: str, value) -> None:
        if value is not None:
            self.values[key] = value

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def require(self, key: str):
        if key not in self.values or self.values[key] is None:
            raise ConfigError(f"missing required config key {key!r}")
        return self.values[key]

    def get_int(self, key: str, default=None) -> int | None:
        v = self.get(key, default)
        if v is None:
            return None
        try:
            return int(v)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r} must be an integer, got {v!r}")

    def get_float(self, key: str, default=None) -> float | None:
        v = self.get(key, default)
        if v is None:
            return None
        try:
            return float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r} must be a number, got {v!r}")

    @property
    def seed(self) -> int:
        seed = self.get_int("seed")
        if seed is None:
            raise ConfigError("a seed is mandatory (--seed or config key 'seed')")
        return seed

    def model_names(self, default: list[str] | None = None) -> list[str]:
        raw = self.get("models", default)
        if raw is None:
            raise ConfigError("no models selected (--models or config key 'models')")
        names = raw.split(",") if isinstance(raw, str) else list(raw)
        names = [n.strip() for n in names if n.strip()]
        for n in names:
            if n not in MODEL_NAMES:
                raise ConfigError(f"unknown model {n!r}; known: {', '.join(MODEL_NAMES)}")
        return names

    def content_hash(self) -> str:
        # The hash identifies the computation; the output location is not
        # part of it, so reruns into different directories stay comparable.
        values = {k: v for k, v in self.values.items() if k != "out"}
        blob = json.dumps(values, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def provenance_lines(self) -> list[str]:
        return [
            f"provenance config={self.content_hash()} seed={self.seed} "
            f"version={ARTIFACT_VERSION}"
        ]

    def provenance_dict(self) -> dict:
        return {
            "config_hash": self.content_hash(),
            "seed": self.seed,
            "version": ARTIFACT_VERSION,
        }
