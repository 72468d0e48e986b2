"""Minimal-identifier registry: stable names for immutable content.

Each minid binds a checksum to one or more retrieval locations.  The binding
to the checksum is permanent; locations may be repointed as content moves,
and tombstoning withdraws all locations while keeping the checksum so stale
references remain detectable forever.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .authz import CURATOR, WRITER, Principal
from .errors import (
    AccessDenied,
    InvalidDigest,
    NoLocations,
    Tombstoned,
    UnknownIdentifier,
)
from .rid import encode

MINID_PREFIX = "minid:"
ACTIVE = "active"
TOMBSTONED = "tombstoned"
_SUFFIX_WIDTH = 10
_MINID_RE = re.compile(r"^minid:[0-9A-HJKMNP-TV-Z]{10}$")
_SHA256_RE = re.compile(r"^[0-9a-f]{64}$")


def is_minid(value: str) -> bool:
    return bool(_MINID_RE.match(value))


@dataclass(frozen=True)
class MinidRecord:
    identifier: str
    title: str
    content_sha256: str
    length: Optional[int]
    locations: tuple[str, ...]
    creator: str
    created_at: str
    status: str = ACTIVE

    @property
    def tombstoned(self) -> bool:
        return self.status == TOMBSTONED

    def to_doc(self) -> dict:
        return {
            "identifier": self.identifier,
            "title": self.title,
            "content_sha256": self.content_sha256,
            "length": self.length,
            "locations": list(self.locations),
            "creator": self.creator,
            "created_at": self.created_at,
            "status": self.status,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "MinidRecord":
        return cls(
            identifier=doc["identifier"],
            title=doc["title"],
            content_sha256=doc["content_sha256"],
            length=doc.get("length"),
            locations=tuple(doc.get("locations", [])),
            creator=doc["creator"],
            created_at=doc["created_at"],
            status=doc.get("status", ACTIVE),
        )


class MinidRegistry:
    """Append-only journaled registry; state is rebuilt by replay on open."""

    def __init__(self, journal_path: Path):
        self.journal_path = Path(journal_path)
        self._records: dict[str, MinidRecord] = {}
        self._counter = 0
        self._lock = threading.RLock()
        self._replay()

    def _replay(self) -> None:
        if not self.journal_path.exists():
            return
        with open(self.journal_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self._apply(json.loads(line))

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "register":
            record = MinidRecord.from_doc(event["record"])
            self._records[record.identifier] = record
            self._counter = event["counter"]
        elif kind == "update_locations":
            record = self._records[event["identifier"]]
            self._records[event["identifier"]] = replace(
                record, locations=tuple(event["locations"]))
        elif kind == "tombstone":
            record = self._records[event["identifier"]]
            self._records[event["identifier"]] = replace(
                record, locations=(), status=TOMBSTONED)
        else:
            raise ValueError(f"unknown journal event {kind!r}")

    def _append(self, event: dict) -> None:
        self.journal_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.journal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
        self._apply(event)

    # -- operations ---------------------------------------------------------

    def register(
        self,
        title: str,
        content_sha256: str,
        locations: list[str],
        principal: Principal,
        length: Optional[int] = None,
    ) -> MinidRecord:
        if not (principal.has(WRITER) or principal.has(CURATOR)):
            raise AccessDenied("minid minting requires writer role",
                               rule="minid-mint-requires-writer")
        if not _SHA256_RE.match(content_sha256):
            raise InvalidDigest(f"not a sha256 hex digest: {content_sha256!r}")
        if not locations:
            raise NoLocations("a minid needs at least one location")
        with self._lock:
            counter = self._counter + 1
            identifier = MINID_PREFIX + encode(counter, width=_SUFFIX_WIDTH)
            record = MinidRecord(
                identifier=identifier,
                title=title,
                content_sha256=content_sha256,
                length=length,
                locations=tuple(locations),
                creator=principal.id,
                created_at=datetime.now(timezone.utc).isoformat(),
            )
            self._append({"event": "register", "counter": counter,
                          "record": record.to_doc()})
        return record

    def resolve(self, identifier: str) -> MinidRecord:
        if not is_minid(identifier):
            raise UnknownIdentifier(f"not a minid: {identifier!r}")
        record = self._records.get(identifier)
        if record is None:
            raise UnknownIdentifier(f"unregistered minid {identifier}")
        return record

    def update_locations(
        self, identifier: str, locations: list[str], principal: Principal
    ) -> MinidRecord:
        with self._lock:
            record = self.resolve(identifier)
            if not (principal.has(CURATOR) or record.creator == principal.id):
                raise AccessDenied("locations may be changed by creator or curator",
                                   rule="minid-update-creator-only")
            if record.tombstoned:
                raise Tombstoned(f"{identifier} is tombstoned")
            if not locations:
                raise NoLocations("a live minid needs at least one location")
            self._append({"event": "update_locations", "identifier": identifier,
                          "locations": list(locations)})
            return self._records[identifier]

    def tombstone(self, identifier: str, principal: Principal) -> MinidRecord:
        if not principal.has(CURATOR):
            raise AccessDenied("minid tombstone requires curator role",
                               rule="minid-tombstone-curator-only")
        with self._lock:
            record = self.resolve(identifier)
            if record.tombstoned:
                raise Tombstoned(f"{identifier} is already tombstoned")
            self._append({"event": "tombstone", "identifier": identifier})
            return self._records[identifier]

    def list_all(self) -> list[MinidRecord]:
        with self._lock:
            return sorted(self._records.values(), key=lambda r: r.identifier)
