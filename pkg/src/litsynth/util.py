"""Small shared helpers: stable ids, filesystem-safe names, canonical JSON."""

from __future__ import annotations

import hashlib
import json
import re

_SLUG_RE = re.compile(r"[^a-z0-9]+")
_FS_RE = re.compile(r"[^A-Za-z0-9._-]")


def slugify(text: str, max_len: int = 40) -> str:
    slug = _SLUG_RE.sub("-", text.lower()).strip("-")
    return slug[:max_len].rstrip("-") or "x"


def stable_hash(*parts: str) -> str:
    return hashlib.sha1("\x1f".join(parts).encode("utf-8")).hexdigest()


def stable_id(prefix: str, *parts: str) -> str:
    """Deterministic id: readable slug of the first part plus a content hash."""
    return f"{prefix}-{slugify(parts[0])}-{stable_hash(*parts)[:8]}"


def fs_slug(name: str) -> str:
    """Filesystem-safe file stem for an arbitrary identifier.

    The hash suffix keeps distinct ids distinct even when sanitization or
    case-insensitive filesystems would otherwise collide them.
    """
    return f"{_FS_RE.sub('_', name)[:60]}-{stable_hash(name)[:8]}"


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
