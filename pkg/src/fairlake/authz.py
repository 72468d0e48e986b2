"""Self-curation access control.

Three roles. Writers own and curate what they created and may share it by
releasing; readers see released content only; curators see and change
everything, including the model. Every decision names the policy clause that
produced it so denials are explainable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import InvalidToken

READER = "reader"
WRITER = "writer"
CURATOR = "curator"
ROLES = (READER, WRITER, CURATOR)

READ = "read"
CREATE = "create"
UPDATE = "update"
DELETE = "delete"
MODEL_CHANGE = "model_change"
ACTIONS = (READ, CREATE, UPDATE, DELETE, MODEL_CHANGE)


@dataclass(frozen=True)
class Principal:
    id: str
    display_name: str = ""
    roles: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        unknown = self.roles - set(ROLES)
        if unknown:
            raise ValueError(f"unknown roles: {sorted(unknown)}")

    def has(self, role: str) -> bool:
        return role in self.roles


@dataclass(frozen=True)
class AccessDecision:
    allowed: bool
    rule: str

    def to_doc(self) -> dict:
        return {"allowed": self.allowed, "rule": self.rule}


@dataclass(frozen=True)
class RecordContext:
    """What the policy needs to know about the record under the action."""
    created_by: str
    released: bool


def authorize(principal: Principal, action: str,
              context: Optional[RecordContext] = None) -> AccessDecision:
    """Total decision function over role x action x ownership x release state.

    ``context`` is required for read/update/delete and ignored for
    create/model_change, which carry no record.
    """
    if action not in ACTIONS:
        raise ValueError(f"unknown action {action!r}")
    if principal.has(CURATOR):
        return AccessDecision(True, "curator-all")

    if action == MODEL_CHANGE:
        return AccessDecision(False, "model-change-curator-only")

    if action == CREATE:
        if principal.has(WRITER):
            return AccessDecision(True, "writer-create")
        return AccessDecision(False, "reader-read-only")

    if context is None:
        raise ValueError(f"action {action!r} needs a record context")
    owns = context.created_by == principal.id

    if action == READ:
        if context.released:
            return AccessDecision(True, "released-read")
        if principal.has(WRITER) and owns:
            return AccessDecision(True, "self-curation-owner")
        return AccessDecision(False, "pending-hidden")

    # update / delete
    if principal.has(WRITER):
        if not owns:
            return AccessDecision(False, "writer-not-owner")
        if context.released:
            # Releasing is a one-way door; owners hand curation to curators.
            return AccessDecision(False, "released-read")
        return AccessDecision(True, "self-curation-owner")
    return AccessDecision(False, "reader-read-only")


# --- token registry -----------------------------------------------------------

class TokenRegistry:
    """Static bearer tokens mapped to principals, loaded from a JSON file:
    {"<token>": {"id": ..., "display_name": ..., "roles": [...]}}.
    """

    def __init__(self, tokens: dict[str, Principal]):
        self._tokens = dict(tokens)

    @staticmethod
    def load(path: Path) -> "TokenRegistry":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        tokens = {
            token: Principal(
                id=entry["id"],
                display_name=entry.get("display_name", entry["id"]),
                roles=frozenset(entry.get("roles", [])),
            )
            for token, entry in data.items()
        }
        return TokenRegistry(tokens)

    @staticmethod
    def write(path: Path, entries: dict[str, dict]) -> None:
        Path(path).write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    def authenticate(self, token: str) -> Principal:
        principal = self._tokens.get(token)
        if principal is None:
            raise InvalidToken("unknown bearer token")
        return principal
