"""Engine configuration: JSON config file with one-for-one env overrides.

Scalar keys use dotted paths (``facets.n``, ``concurrency.limit``); the
matching environment variable is the path upper-cased with dots replaced
by underscores and a ``LITSYNTH_`` prefix (``LITSYNTH_FACETS_N``).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .provider.client import HttpBackend, ModelProfile, Provider
from .provider.transcript import Transcript

ENV_PREFIX = "LITSYNTH_"

REASONING_PROFILE = "reasoning"
FAST_EXTRACT_PROFILE = "fast-extract"


def default_profiles() -> dict[str, ModelProfile]:
    return {
        REASONING_PROFILE: ModelProfile(
            name=REASONING_PROFILE, model="o3-mini", reasoning_effort="low"
        ),
        FAST_EXTRACT_PROFILE: ModelProfile(name=FAST_EXTRACT_PROFILE, model="gpt-4o-mini"),
    }


@dataclass(frozen=True)
class ProviderSettings:
    mode: str = "live"
    chat_endpoint: str = "https://api.openai.com/v1/chat/completions"
    embeddings_endpoint: str = "https://api.openai.com/v1/embeddings"
    api_key: str = ""
    transcript_path: str | None = None
    embedding_model: str = "all-MiniLM-L6-v2"
    profiles: Mapping[str, ModelProfile] = field(default_factory=default_profiles)


@dataclass(frozen=True)
class FacetSettings:
    n: int = 4
    k: int = 4
    max: int = 20
    seed: int = 0


@dataclass(frozen=True)
class ExtractionSettings:
    context_budget: int = 60000


@dataclass(frozen=True)
class TaxonomySettings:
    max_roots: int = 10


@dataclass(frozen=True)
class SynthesisSettings:
    length_constraint: str = "between 300 and 500 words"


@dataclass(frozen=True)
class ConcurrencySettings:
    limit: int = 8


@dataclass(frozen=True)
class Config:
    provider: ProviderSettings = field(default_factory=ProviderSettings)
    facets: FacetSettings = field(default_factory=FacetSettings)
    extraction: ExtractionSettings = field(default_factory=ExtractionSettings)
    taxonomy: TaxonomySettings = field(default_factory=TaxonomySettings)
    synthesis: SynthesisSettings = field(default_factory=SynthesisSettings)
    concurrency: ConcurrencySettings = field(default_factory=ConcurrencySettings)
    workspace_root: str = "workspace"


def _coerce(raw: str, like) -> object:
    if isinstance(like, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    return raw


def _apply_env(section: str, values: dict, defaults, env: Mapping[str, str]) -> dict:
    for key, default in values.items():
        env_key = f"{ENV_PREFIX}{section.upper()}_{key.upper()}"
        if env_key in env:
            values[key] = _coerce(env[env_key], getattr(defaults, key))
    return values


def _section(data: Mapping, name: str, defaults, env: Mapping[str, str], skip=()) -> dict:
    raw = dict(data.get(name) or {})
    values = {}
    for key in defaults.__dataclass_fields__:
        if key in skip:
            continue
        values[key] = raw.get(key, getattr(defaults, key))
    return _apply_env(name, values, defaults, env)


def _profiles_from(raw: Mapping | None) -> dict[str, ModelProfile]:
    profiles = default_profiles()
    for name, spec in (raw or {}).items():
        profiles[name] = ModelProfile(
            name=name,
            model=spec["model"],
            reasoning_effort=spec.get("reasoning_effort"),
            temperature=spec.get("temperature"),
        )
    return profiles


def load_config(
    path: str | Path | None = None, env: Mapping[str, str] | None = None
) -> Config:
    env = os.environ if env is None else env
    data: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)

    provider_raw = dict(data.get("provider") or {})
    provider_values = _section(data, "provider", ProviderSettings(), env, skip=("profiles",))
    provider = ProviderSettings(
        **provider_values, profiles=_profiles_from(provider_raw.get("profiles"))
    )

    workspace_root = data.get("workspace_root", Config.workspace_root)
    if f"{ENV_PREFIX}WORKSPACE_ROOT" in env:
        workspace_root = env[f"{ENV_PREFIX}WORKSPACE_ROOT"]

    return Config(
        provider=provider,
        facets=FacetSettings(**_section(data, "facets", FacetSettings(), env)),
        extraction=ExtractionSettings(**_section(data, "extraction", ExtractionSettings(), env)),
        taxonomy=TaxonomySettings(**_section(data, "taxonomy", TaxonomySettings(), env)),
        synthesis=SynthesisSettings(**_section(data, "synthesis", SynthesisSettings(), env)),
        concurrency=ConcurrencySettings(
            **_section(data, "concurrency", ConcurrencySettings(), env)
        ),
        workspace_root=workspace_root,
    )


def build_provider(settings: ProviderSettings, backend=None) -> Provider:
    """Construct a Provider from settings; an explicit backend wins over HTTP."""
    transcript = None
    if settings.mode in ("record", "replay"):
        if not settings.transcript_path:
            raise ValueError(f"provider mode {settings.mode!r} requires transcript_path")
        transcript = Transcript(settings.transcript_path, settings.mode)
    if backend is None and settings.mode in ("live", "record"):
        backend = HttpBackend(
            chat_endpoint=settings.chat_endpoint,
            embeddings_endpoint=settings.embeddings_endpoint,
            api_key=settings.api_key,
        )
    return Provider(
        settings.mode,
        backend=backend,
        transcript=transcript,
        embedding_model=settings.embedding_model,
    )
