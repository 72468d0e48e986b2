import json

import pytest

from fairlake.authz import (
    ACTIONS,
    CREATE,
    CURATOR,
    DELETE,
    MODEL_CHANGE,
    READ,
    READER,
    UPDATE,
    WRITER,
    Principal,
    RecordContext,
    TokenRegistry,
    authorize,
)
from fairlake.errors import InvalidToken
from fairlake.store import check_store_access

CAROL = Principal("carol", "Carol", frozenset({CURATOR}))
ALICE = Principal("alice", "Alice", frozenset({WRITER}))
BOB = Principal("bob", "Bob", frozenset({READER}))

PRINCIPALS = {"curator": CAROL, "writer": ALICE, "reader": BOB}


def _context(kind: str, principal: Principal) -> RecordContext:
    if kind == "own-pending":
        return RecordContext(created_by=principal.id, released=False)
    if kind == "other-pending":
        return RecordContext(created_by="someone-else", released=False)
    return RecordContext(created_by="someone-else", released=True)


# Hand-derived oracle: every (role, action, ownership x release-state) cell
# of the self-curation policy, written out without reference to the
# implementation.  36 rows = 3 roles x 4 actions x 3 record contexts.
MATRIX = [
    # role      action   context           allowed  rule
    ("curator", "read",   "own-pending",    True,  "curator-all"),
    ("curator", "read",   "other-pending",  True,  "curator-all"),
    ("curator", "read",   "other-released", True,  "curator-all"),
    ("curator", "create", "own-pending",    True,  "curator-all"),
    ("curator", "create", "other-pending",  True,  "curator-all"),
    ("curator", "create", "other-released", True,  "curator-all"),
    ("curator", "update", "own-pending",    True,  "curator-all"),
    ("curator", "update", "other-pending",  True,  "curator-all"),
    ("curator", "update", "other-released", True,  "curator-all"),
    ("curator", "delete", "own-pending",    True,  "curator-all"),
    ("curator", "delete", "other-pending",  True,  "curator-all"),
    ("curator", "delete", "other-released", True,  "curator-all"),
    ("writer",  "read",   "own-pending",    True,  "self-curation-owner"),
    ("writer",  "read",   "other-pending",  False, "pending-hidden"),
    ("writer",  "read",   "other-released", True,  "released-read"),
    ("writer",  "create", "own-pending",    True,  "writer-create"),
    ("writer",  "create", "other-pending",  True,  "writer-create"),
    ("writer",  "create", "other-released", True,  "writer-create"),
    ("writer",  "update", "own-pending",    True,  "self-curation-owner"),
    ("writer",  "update", "other-pending",  False, "writer-not-owner"),
    ("writer",  "update", "other-released", False, "writer-not-owner"),
    ("writer",  "delete", "own-pending",    True,  "self-curation-owner"),
    ("writer",  "delete", "other-pending",  False, "writer-not-owner"),
    ("writer",  "delete", "other-released", False, "writer-not-owner"),
    ("reader",  "read",   "own-pending",    False, "pending-hidden"),
    ("reader",  "read",   "other-pending",  False, "pending-hidden"),
    ("reader",  "read",   "other-released", True,  "released-read"),
    ("reader",  "create", "own-pending",    False, "reader-read-only"),
    ("reader",  "create", "other-pending",  False, "reader-read-only"),
    ("reader",  "create", "other-released", False, "reader-read-only"),
    ("reader",  "update", "own-pending",    False, "reader-read-only"),
    ("reader",  "update", "other-pending",  False, "reader-read-only"),
    ("reader",  "update", "other-released", False, "reader-read-only"),
    ("reader",  "delete", "own-pending",    False, "reader-read-only"),
    ("reader",  "delete", "other-pending",  False, "reader-read-only"),
    ("reader",  "delete", "other-released", False, "reader-read-only"),
]


def test_matrix_has_36_cells():
    assert len(MATRIX) == 36
    assert len(set((r, a, c) for r, a, c, _, _ in MATRIX)) == 36


@pytest.mark.parametrize("role,action,context_kind,allowed,rule", MATRIX)
def test_decision_matrix(role, action, context_kind, allowed, rule):
    principal = PRINCIPALS[role]
    decision = authorize(principal, action, _context(context_kind, principal))
    assert decision.allowed is allowed
    assert decision.rule == rule


def test_model_change_is_curator_only():
    assert authorize(CAROL, MODEL_CHANGE).allowed
    for principal in (ALICE, BOB):
        decision = authorize(principal, MODEL_CHANGE)
        assert not decision.allowed
        assert decision.rule == "model-change-curator-only"


def test_decisions_are_total():
    contexts = [RecordContext("alice", False), RecordContext("alice", True),
                RecordContext("x", False), RecordContext("x", True)]
    for principal in (CAROL, ALICE, BOB):
        for action in ACTIONS:
            for context in contexts:
                decision = authorize(principal, action, context)
                assert isinstance(decision.allowed, bool)
                assert decision.rule


def test_unknown_action_rejected():
    with pytest.raises(ValueError):
        authorize(ALICE, "transmogrify", RecordContext("alice", False))


def test_read_without_context_rejected():
    with pytest.raises(ValueError):
        authorize(ALICE, READ)


# Store actions sit outside record ownership.
STORE_MATRIX = [
    ("curator", "read",   True,  "curator-all"),
    ("curator", "put",    True,  "curator-all"),
    ("curator", "delete", True,  "curator-all"),
    ("writer",  "read",   True,  "store-read"),
    ("writer",  "put",    True,  "store-writer-put"),
    ("writer",  "delete", False, "store-delete-curator-only"),
    ("reader",  "read",   True,  "store-read"),
    ("reader",  "put",    False, "store-put-requires-writer"),
    ("reader",  "delete", False, "store-delete-curator-only"),
]


@pytest.mark.parametrize("role,action,allowed,rule", STORE_MATRIX)
def test_store_matrix(role, action, allowed, rule):
    decision = check_store_access(PRINCIPALS[role], action)
    assert decision.allowed is allowed
    assert decision.rule == rule


def test_token_registry_round_trip(tmp_path):
    path = tmp_path / "tokens.json"
    path.write_text(json.dumps({
        "tk-1": {"id": "carol", "display_name": "Carol",
                 "roles": ["curator"]},
        "tk-2": {"id": "bob", "display_name": "Bob", "roles": ["reader"]},
    }))
    registry = TokenRegistry.load(path)
    carol = registry.authenticate("tk-1")
    assert carol.id == "carol" and carol.has(CURATOR)
    with pytest.raises(InvalidToken):
        registry.authenticate("tk-nope")
    with pytest.raises(InvalidToken):
        registry.authenticate("")


def test_action_constants_cover_crud_and_model_change():
    assert set(ACTIONS) == {READ, CREATE, UPDATE, DELETE, MODEL_CHANGE}
