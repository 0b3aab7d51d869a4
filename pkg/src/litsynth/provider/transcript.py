"""Append-only transcripts of provider exchanges, keyed by request fingerprint.

Fingerprints are stable across processes: a hash of the template id, the
variable map canonicalized by sorted key order, and the model profile. The
rendered prompt (and any repair preamble appended to it) is deliberately
excluded, so repeated requests with the same logical inputs share a
fingerprint; replay serves such repeats in recorded order and keeps serving
the final response once the recorded sequence is exhausted.
"""

from __future__ import annotations

import hashlib
import json
import threading
from collections import deque
from pathlib import Path

from ..errors import TranscriptError, TranscriptMissError
from ..util import canonical_json

RECORD = "record"
REPLAY = "replay"


def request_fingerprint(template_id: str, variables, profile_key: dict) -> str:
    payload = canonical_json(
        {
            "template_id": template_id,
            "variables": {str(k): str(v) for k, v in dict(variables).items()},
            "profile": profile_key,
        }
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def embedding_fingerprint(model: str, text: str) -> str:
    payload = canonical_json({"embed": model, "text": text})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Transcript:
    def __init__(self, path: str | Path, mode: str):
        if mode not in (RECORD, REPLAY):
            raise ValueError(f"transcript mode must be 'record' or 'replay', got {mode!r}")
        self.path = Path(path)
        self.mode = mode
        self._lock = threading.Lock()
        self._fh = None
        self._queues: dict[str, deque[str]] = {}
        if mode == REPLAY:
            self._load()

    def _load(self) -> None:
        if not self.path.exists():
            raise TranscriptError(f"transcript file not found: {self.path}")
        with open(self.path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise TranscriptError(f"{self.path}:{line_no}: invalid entry: {exc}") from exc
                self._queues.setdefault(entry["fingerprint"], deque()).append(
                    entry["raw_response"]
                )

    def lookup(self, fingerprint: str) -> str:
        if self.mode != REPLAY:
            raise TranscriptError("lookup is only available in replay mode")
        with self._lock:
            queue = self._queues.get(fingerprint)
            if not queue:
                raise TranscriptMissError(fingerprint)
            if len(queue) > 1:
                return queue.popleft()
            return queue[0]

    def record(self, fingerprint: str, template_id: str, raw_response: str) -> None:
        if self.mode != RECORD:
            raise TranscriptError("record is only available in record mode")
        with self._lock:
            if self._fh is None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self._fh = open(self.path, "a", encoding="utf-8")
            entry = {
                "fingerprint": fingerprint,
                "template_id": template_id,
                "raw_response": raw_response,
            }
            self._fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def __enter__(self) -> "Transcript":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
