"""The metadata catalog: schemas, records, vocabulary terms, and queries.

State lives in memory and is rebuilt by replaying an append-only JSON-lines
event journal, so a catalog reopened on the same journal is byte-for-byte
the catalog that wrote it.  Every mutating operation authorizes first,
validates second, journals third, and only then touches state; batches are
all-or-nothing.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional

from . import erm
from .authz import (
    CREATE,
    DELETE,
    MODEL_CHANGE,
    READ,
    UPDATE,
    Principal,
    RecordContext,
    authorize,
)
from .errors import (
    AccessDenied,
    AlreadyBootstrapped,
    BreakingChange,
    DuplicateTerm,
    InvalidQuery,
    InvalidSpec,
    NameCollision,
    NoLinkTarget,
    NotAVocabulary,
    NotBootstrapped,
    NotFound,
    StaleWrite,
    UnknownEntityType,
    ValidationFailed,
)
from .rid import RidMinter, canonical

_CURIE_WIDTH = 4


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


# -- queries --------------------------------------------------------------------

_OP_ALIASES = {"=": "eq", "!=": "ne", "<": "lt", ">": "gt", "in": "in", "null": "null",
               "eq": "eq", "ne": "ne", "lt": "lt", "gt": "gt"}


@dataclass(frozen=True)
class Filter:
    attribute: str
    op: str  # eq | ne | lt | gt | in | null
    value: Any = None


@dataclass(frozen=True)
class JoinHop:
    """One step along a declared foreign key.

    ``out`` follows the current type's own FK attribute to its target;
    ``in`` steps to the records of (schema, type) whose FK attribute
    references the current row.
    """

    kind: str  # "out" | "in"
    attribute: str
    schema: Optional[str] = None
    type_name: Optional[str] = None


@dataclass
class QuerySpec:
    schema: str
    entity_type: str
    filters: list[Filter] = field(default_factory=list)
    joins: list[JoinHop] = field(default_factory=list)
    projection: Optional[list[str]] = None
    limit: Optional[int] = None
    offset: int = 0


def parse_filter(text: str) -> Filter:
    """Wire form "Attribute:op:value"; value is a JSON literal (bare strings
    tolerated); the null op takes true/false; in takes a JSON list."""
    parts = text.split(":", 2)
    if len(parts) < 2:
        raise InvalidQuery(f"filter needs attribute:op[:value], got {text!r}")
    attribute, op = parts[0], parts[1]
    if op not in _OP_ALIASES:
        raise InvalidQuery(f"unknown filter op {op!r}")
    op = _OP_ALIASES[op]
    raw = parts[2] if len(parts) == 3 else None
    if op == "null":
        value = raw is None or raw.lower() not in ("false", "0")
    elif raw is None:
        raise InvalidQuery(f"filter op {op!r} needs a value")
    else:
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
    if op == "in" and not isinstance(value, list):
        raise InvalidQuery("the in op takes a JSON list value")
    return Filter(attribute, op, value)


def parse_join(text: str, default_schema: str) -> list[JoinHop]:
    """Wire form "hop/hop/..."; an outbound hop is a bare FK attribute name,
    an inbound hop is "[schema:]Type.attribute"."""
    hops: list[JoinHop] = []
    for part in text.split("/"):
        part = part.strip()
        if not part:
            raise InvalidQuery("empty join hop")
        if "." in part:
            qualified, _, attr = part.rpartition(".")
            if ":" in qualified:
                schema, _, type_name = qualified.partition(":")
            else:
                schema, type_name = default_schema, qualified
            hops.append(JoinHop("in", attr, schema, type_name))
        else:
            hops.append(JoinHop("out", part))
    return hops


def _compare(op: str, actual: Any, wanted: Any) -> bool:
    if op == "null":
        return (actual is None) == bool(wanted)
    if op == "eq":
        return actual == wanted
    if op == "ne":
        return actual != wanted
    if op == "in":
        return actual in wanted
    if actual is None:
        return False
    try:
        return actual < wanted if op == "lt" else actual > wanted
    except TypeError:
        return False


# -- the catalog -----------------------------------------------------------------


class Catalog:
    def __init__(self, journal_path: Path):
        self.journal_path = Path(journal_path)
        self.schemas: dict[str, erm.SchemaDef] = {}
        self._schema_order: list[str] = []
        self.records: dict[tuple[str, str], dict[str, erm.Record]] = {}
        self.annotations: dict[str, str] = {}
        self.prefix: Optional[str] = None
        self.model_version = 0
        self._minter = RidMinter()
        self._curie_counter = 0
        self._lock = threading.RLock()
        self._replay()

    # -- persistence ------------------------------------------------------------

    def _replay(self) -> None:
        if not self.journal_path.exists():
            return
        with open(self.journal_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self._apply(json.loads(line))

    def _commit(self, event: dict) -> None:
        self.journal_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.journal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
        self._apply(event)

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "bootstrap":
            schema = erm.build_ml_schema()
            self.schemas = {schema.name: schema}
            self._schema_order = [schema.name]
            self.prefix = event["prefix"]
            self.annotations = dict(event.get("annotations", {}))
            self.model_version = event["model_version"]
        elif kind == "define_schema":
            schema = erm.SchemaDef.from_doc(event["schema"])
            self.schemas[schema.name] = schema
            self._schema_order.append(schema.name)
            self._bind_link_target(schema.name, schema.link_target)
            self.model_version = event["model_version"]
        elif kind == "evolve_schema":
            for name, doc in event["schemas"].items():
                rebuilt = erm.SchemaDef.from_doc(doc)
                if name not in self.schemas:
                    self._schema_order.append(name)
                self.schemas[name] = rebuilt
            self.model_version = event["model_version"]
        elif kind == "insert":
            table = self.records.setdefault((event["schema"], event["type"]), {})
            for doc in event["records"]:
                record = erm.Record.from_doc(doc)
                table[record.rid] = record
            self._minter.restore(event["rid_counter"])
        elif kind == "update":
            table = self.records[(event["schema"], event["type"])]
            for doc in event["records"]:
                record = erm.Record.from_doc(doc)
                table[record.rid] = record
        elif kind == "delete":
            table = self.records[(event["schema"], event["type"])]
            for doc in event["records"]:
                record = erm.Record.from_doc(doc)
                table[record.rid] = record
        elif kind == "add_term":
            table = self.records.setdefault((event["schema"], event["type"]), {})
            record = erm.Record.from_doc(event["record"])
            table[record.rid] = record
            self._minter.restore(event["rid_counter"])
            self._curie_counter = event["curie_counter"]
        elif kind == "set_annotation":
            self.annotations[event["key"]] = event["value"]
        else:
            raise ValueError(f"unknown journal event {kind!r}")

    def _bind_link_target(self, schema_name: str, link_target: Optional[str]) -> None:
        if link_target is None:
            return
        member_type = self.schemas[erm.ML_SCHEMA].entity_type("Dataset_Member")
        member_type.foreign_keys = [
            erm.ForeignKey("Member", schema_name, link_target)
            if fk.from_attr == "Member" else fk
            for fk in member_type.foreign_keys
        ]

    # -- lookups ----------------------------------------------------------------

    @property
    def bootstrapped(self) -> bool:
        return erm.ML_SCHEMA in self.schemas

    def _require_bootstrap(self) -> None:
        if not self.bootstrapped:
            raise NotBootstrapped("catalog has no ml schema yet")

    def entity_type(self, schema: str, type_name: str) -> erm.EntityTypeDef:
        sd = self.schemas.get(schema)
        et = sd.entity_type(type_name) if sd else None
        if et is None:
            raise UnknownEntityType(f"no entity type {schema}:{type_name}")
        return et

    def _table(self, schema: str, type_name: str) -> dict[str, erm.Record]:
        return self.records.setdefault((schema, type_name), {})

    def record_exists(self, schema: str, type_name: str, rid: str) -> bool:
        record = self.records.get((schema, type_name), {}).get(rid)
        return record is not None and not record.deleted

    def term_exists(self, vocab_name: str, value: str) -> bool:
        for schema_name in self._schema_order:
            et = self.schemas[schema_name].entity_type(vocab_name)
            if et is None or not et.is_vocabulary:
                continue
            for record in self._table(schema_name, vocab_name).values():
                if record.deleted:
                    continue
                if record.values.get("Name") == value:
                    return True
                if value in (record.values.get("Synonyms") or []):
                    return True
        return False

    def live_records(self, schema: str, type_name: str) -> list[erm.Record]:
        return [r for r in self._table(schema, type_name).values() if not r.deleted]

    def link_target(self) -> Optional[tuple[str, str]]:
        member_type = self.entity_type(erm.ML_SCHEMA, "Dataset_Member")
        fk = member_type.foreign_key_for("Member")
        if fk is not None and fk.bound:
            return fk.to_schema, fk.to_type
        return None

    # -- model operations ---------------------------------------------------------

    def bootstrap(self, prefix: str, principal: Principal,
                  annotations: Optional[dict[str, str]] = None) -> erm.SchemaDef:
        with self._lock:
            decision = authorize(principal, MODEL_CHANGE)
            if not decision.allowed:
                raise AccessDenied("bootstrap is a model change", rule=decision.rule)
            if self.bootstrapped:
                raise AlreadyBootstrapped("catalog already has an ml schema")
            if not prefix or not prefix.isalnum():
                raise InvalidSpec(f"curie prefix must be alphanumeric, got {prefix!r}")
            self._commit({"event": "bootstrap", "prefix": prefix,
                          "annotations": dict(annotations or {}), "model_version": 1})
            return self.schemas[erm.ML_SCHEMA]

    def define_domain_schema(self, doc: dict, principal: Principal) -> erm.SchemaDef:
        with self._lock:
            decision = authorize(principal, MODEL_CHANGE)
            if not decision.allowed:
                raise AccessDenied("schema definition is a model change", rule=decision.rule)
            self._require_bootstrap()
            schema = erm.SchemaDef.from_doc(doc)
            if schema.kind != "domain":
                raise InvalidSpec(f"expected a domain schema, got kind {schema.kind!r}")
            if schema.name in self.schemas:
                raise InvalidSpec(f"schema {schema.name!r} already exists")
            if any(sd.kind == "domain" for sd in self.schemas.values()):
                raise InvalidSpec("this catalog already has its domain schema; "
                                  "grow it with schema evolution")
            if schema.link_target is None:
                raise NoLinkTarget("domain schema must designate a dataset-membership "
                                   "link target entity type")
            schema.entity_types = [erm.normalize_entity_type(et)
                                   for et in schema.entity_types]
            if schema.entity_type(schema.link_target) is None:
                raise NoLinkTarget(f"link target {schema.link_target!r} is not an "
                                   f"entity type of schema {schema.name!r}")

            def resolve(s: str, t: str) -> Optional[erm.EntityTypeDef]:
                if s == schema.name:
                    return schema.entity_type(t)
                sd = self.schemas.get(s)
                return sd.entity_type(t) if sd else None

            erm.check_schema(schema, resolve)
            self._commit({"event": "define_schema", "schema": schema.to_doc(),
                          "model_version": self.model_version + 1})
            return self.schemas[schema.name]

    def evolve_schema(self, changes: Iterable[erm.SchemaChange | dict],
                      principal: Principal) -> int:
        """Apply one or more additive changes as a single atomic step."""
        with self._lock:
            decision = authorize(principal, MODEL_CHANGE)
            if not decision.allowed:
                raise AccessDenied("schema evolution is a model change", rule=decision.rule)
            self._require_bootstrap()
            parsed = [erm.change_from_doc(c) if isinstance(c, dict) else c
                      for c in changes]
            if not parsed:
                raise InvalidSpec("no schema changes supplied")

            staged = {name: erm.SchemaDef.from_doc(sd.to_doc())
                      for name, sd in self.schemas.items()}
            touched: set[str] = set()
            for change in parsed:
                sd = staged.get(change.schema)
                if sd is None:
                    raise UnknownEntityType(f"no schema {change.schema!r}")
                touched.add(change.schema)
                if isinstance(change, erm.AddEntityType):
                    et = erm.normalize_entity_type(change.entity_type)
                    if sd.entity_type(et.name) is not None:
                        raise NameCollision(f"{change.schema} already has entity "
                                            f"type {et.name!r}")
                    sd.entity_types.append(et)
                elif isinstance(change, erm.AddAttribute):
                    et = sd.entity_type(change.entity_type)
                    if et is None:
                        raise UnknownEntityType(
                            f"no entity type {change.schema}:{change.entity_type}")
                    attr = change.attribute
                    if et.attribute(attr.name) is not None:
                        raise NameCollision(f"{et.name} already has attribute {attr.name!r}")
                    populated = bool(self.live_records(change.schema, change.entity_type))
                    if populated and not attr.nullable and attr.default is None:
                        raise BreakingChange(
                            f"adding required attribute {attr.name!r} with no default "
                            f"would invalidate existing {et.name} records")
                    et.attributes.append(attr)
                else:
                    et = sd.entity_type(change.entity_type)
                    if et is None:
                        raise UnknownEntityType(
                            f"no entity type {change.schema}:{change.entity_type}")
                    fk = change.foreign_key
                    if et.foreign_key_for(fk.from_attr) is not None:
                        raise NameCollision(f"{et.name}.{fk.from_attr} already has a "
                                            f"foreign key")
                    if et.attribute(fk.from_attr) is None:
                        populated = bool(self.live_records(change.schema, change.entity_type))
                        et.attributes.append(erm.AttributeDef(
                            fk.from_attr, erm.ValueKind.RID_REF, nullable=populated))
                    et.foreign_keys.append(fk)

            def resolve(s: str, t: str) -> Optional[erm.EntityTypeDef]:
                sd = staged.get(s)
                return sd.entity_type(t) if sd else None

            for name in touched:
                erm.check_schema(staged[name], resolve)
            self._commit({
                "event": "evolve_schema",
                "changes": [erm.change_to_doc(c) for c in parsed],
                "schemas": {name: staged[name].to_doc() for name in touched},
                "model_version": self.model_version + 1,
            })
            return self.model_version

    def set_annotation(self, key: str, value: str, principal: Principal) -> None:
        with self._lock:
            decision = authorize(principal, MODEL_CHANGE)
            if not decision.allowed:
                raise AccessDenied("annotations are model-level metadata",
                                   rule=decision.rule)
            self._require_bootstrap()
            self._commit({"event": "set_annotation", "key": key, "value": value})

    def introspect_model(self) -> dict:
        with self._lock:
            self._require_bootstrap()
            return {
                "model_version": self.model_version,
                "prefix": self.prefix,
                "annotations": dict(self.annotations),
                "schemas": [self.schemas[name].to_doc() for name in self._schema_order],
            }

    # -- vocabulary terms -----------------------------------------------------------

    def add_vocabulary_term(
        self,
        schema: str,
        vocab: str,
        name: str,
        principal: Principal,
        synonyms: Optional[list[str]] = None,
        description: Optional[str] = None,
    ) -> erm.Record:
        with self._lock:
            et = self.entity_type(schema, vocab)
            if not et.is_vocabulary:
                raise NotAVocabulary(f"{schema}:{vocab} is not a vocabulary type")
            decision = authorize(principal, CREATE)
            if not decision.allowed:
                raise AccessDenied("adding terms requires writer role", rule=decision.rule)
            synonyms = list(synonyms or [])
            incoming = {name, *synonyms}
            if len(incoming) < 1 + len(synonyms):
                raise DuplicateTerm(f"term {name!r} repeats one of its own synonyms")
            for record in self.live_records(schema, vocab):
                known = {record.values.get("Name"), *(record.values.get("Synonyms") or [])}
                clash = incoming & known
                if clash:
                    raise DuplicateTerm(
                        f"{schema}:{vocab} already carries {sorted(clash)!r}")
            self._curie_counter += 1
            curie = f"{self.prefix}:{self._curie_counter:0{_CURIE_WIDTH}d}"
            now = _now()
            record = erm.Record(
                rid=self._minter.mint(),
                values={"Name": name, "Synonyms": synonyms,
                        "Description": description, "ID": curie},
                created_by=principal.id,
                created_at=now,
                modified_at=now,
                release_state=erm.RELEASED,
            )
            self._commit({"event": "add_term", "schema": schema, "type": vocab,
                          "record": record.to_doc(), "rid_counter": self._minter.last_counter,
                          "curie_counter": self._curie_counter})
            return record

    def find_term(self, schema: str, vocab: str, name: str) -> Optional[erm.Record]:
        for record in self.live_records(schema, vocab):
            if record.values.get("Name") == name or name in (record.values.get("Synonyms") or []):
                return record
        return None

    # -- record mutation --------------------------------------------------------------

    def _validate_rows(self, et: erm.EntityTypeDef,
                       rows: list[dict[str, Any]]) -> list[dict[str, Any]]:
        prepared: list[dict[str, Any]] = []
        failures: list[dict] = []
        for index, row in enumerate(rows):
            merged = erm.apply_defaults(et, row)
            violations = erm.validate_values(et, merged, self.record_exists,
                                             self.term_exists)
            if violations:
                failures.append({"index": index,
                                 "violations": [v.to_doc() for v in violations]})
            prepared.append(merged)
        if failures:
            raise ValidationFailed(f"{len(failures)} of {len(rows)} records invalid",
                                   report=failures)
        return prepared

    def insert_records(self, schema: str, type_name: str, rows: list[dict[str, Any]],
                       principal: Principal) -> list[erm.Record]:
        with self._lock:
            self._require_bootstrap()
            et = self.entity_type(schema, type_name)
            decision = authorize(principal, CREATE)
            if not decision.allowed:
                raise AccessDenied("insert denied", rule=decision.rule)
            if et.is_vocabulary:
                # Vocabulary rows route through term creation to get curies.
                return [self.add_vocabulary_term(
                    schema, type_name, row.get("Name", ""), principal,
                    synonyms=row.get("Synonyms"), description=row.get("Description"))
                    for row in rows]
            prepared = self._validate_rows(et, rows)
            now = _now()
            records = [erm.Record(
                rid=self._minter.mint(),
                values=values,
                created_by=principal.id,
                created_at=now,
                modified_at=now,
                release_state=erm.PENDING,
            ) for values in prepared]
            self._commit({"event": "insert", "schema": schema, "type": type_name,
                          "records": [r.to_doc() for r in records],
                          "rid_counter": self._minter.last_counter})
            return records

    def _live_record(self, schema: str, type_name: str, rid: str) -> erm.Record:
        record = self._table(schema, type_name).get(rid)
        if record is None or record.deleted:
            raise NotFound(f"no {schema}:{type_name} record {rid}")
        return record

    def update_records(self, schema: str, type_name: str, updates: list[dict],
                       principal: Principal) -> list[erm.Record]:
        """Each update: {"rid", "revision", "values"?, "release_state"?}.
        The whole batch applies or none of it does."""
        with self._lock:
            self._require_bootstrap()
            et = self.entity_type(schema, type_name)
            staged: list[erm.Record] = []
            for upd in updates:
                rid = upd.get("rid")
                record = self._live_record(schema, type_name, rid)
                context = RecordContext(record.created_by,
                                        record.release_state == erm.RELEASED)
                decision = authorize(principal, UPDATE, context)
                if not decision.allowed:
                    raise AccessDenied(f"update of {rid} denied", rule=decision.rule)
                if upd.get("revision") != record.revision:
                    raise StaleWrite(
                        f"{rid} is at revision {record.revision}, "
                        f"update expected {upd.get('revision')}",
                        current_revision=record.revision)
                values = record.values
                if upd.get("values"):
                    values = erm.apply_defaults(et, {**record.values, **upd["values"]})
                    violations = erm.validate_values(et, values, self.record_exists,
                                                     self.term_exists)
                    if violations:
                        raise ValidationFailed(
                            f"update of {rid} invalid",
                            report=[{"rid": rid,
                                     "violations": [v.to_doc() for v in violations]}])
                release_state = record.release_state
                if upd.get("release_state") is not None:
                    wanted = upd["release_state"]
                    if wanted not in (erm.PENDING, erm.RELEASED):
                        raise ValidationFailed(f"unknown release state {wanted!r}")
                    if et.is_vocabulary and wanted != erm.RELEASED:
                        raise ValidationFailed("vocabulary terms are always released")
                    release_state = wanted
                staged.append(replace(record, values=values, release_state=release_state,
                                      revision=record.revision + 1, modified_at=_now()))
            self._commit({"event": "update", "schema": schema, "type": type_name,
                          "records": [r.to_doc() for r in staged]})
            return staged

    def delete_records(self, schema: str, type_name: str, deletes: list[dict],
                       principal: Principal) -> list[erm.Record]:
        """Each delete: {"rid", "revision"}.  Tombstones, never erasure."""
        with self._lock:
            self._require_bootstrap()
            self.entity_type(schema, type_name)
            staged: list[erm.Record] = []
            for dele in deletes:
                rid = dele.get("rid")
                record = self._live_record(schema, type_name, rid)
                context = RecordContext(record.created_by,
                                        record.release_state == erm.RELEASED)
                decision = authorize(principal, DELETE, context)
                if not decision.allowed:
                    raise AccessDenied(f"delete of {rid} denied", rule=decision.rule)
                if dele.get("revision") != record.revision:
                    raise StaleWrite(
                        f"{rid} is at revision {record.revision}, "
                        f"delete expected {dele.get('revision')}",
                        current_revision=record.revision)
                staged.append(replace(record, deleted=True,
                                      revision=record.revision + 1, modified_at=_now()))
            self._commit({"event": "delete", "schema": schema, "type": type_name,
                          "records": [r.to_doc() for r in staged]})
            return staged

    # -- reads ---------------------------------------------------------------------

    def _visible(self, principal: Principal, record: erm.Record) -> bool:
        if record.deleted:
            return False
        context = RecordContext(record.created_by, record.release_state == erm.RELEASED)
        return authorize(principal, READ, context).allowed

    def get_record(self, schema: str, type_name: str, rid: str,
                   principal: Principal) -> erm.Record:
        with self._lock:
            self.entity_type(schema, type_name)
            record = self._table(schema, type_name).get(rid)
            # Hidden pending records look exactly like absent ones.
            if record is None or not self._visible(principal, record):
                raise NotFound(f"no {schema}:{type_name} record {rid}")
            return record

    def _filter_matches(self, et: erm.EntityTypeDef, record: erm.Record,
                        flt: Filter) -> bool:
        if flt.attribute == "RID":
            actual: Any = record.rid
        else:
            if et.attribute(flt.attribute) is None:
                raise InvalidQuery(f"{et.name} has no attribute {flt.attribute!r}")
            actual = record.values.get(flt.attribute)
        return _compare(flt.op, actual, flt.value)

    def query(self, principal: Principal,
              spec: QuerySpec) -> tuple[list[erm.Record], int]:
        with self._lock:
            self._require_bootstrap()
            base_et = self.entity_type(spec.schema, spec.entity_type)
            base_rows = [r for r in self._table(spec.schema, spec.entity_type).values()
                         if self._visible(principal, r)]

            current = (spec.schema, spec.entity_type)
            current_et = base_et
            frontier: dict[str, list[erm.Record]] = {r.rid: [r] for r in base_rows}
            for hop in spec.joins:
                if hop.kind == "out":
                    fk = current_et.foreign_key_for(hop.attribute)
                    if fk is None or not fk.bound:
                        raise InvalidQuery(
                            f"{current[1]}.{hop.attribute} is not a foreign key")
                    next_type = (fk.to_schema, fk.to_type)
                    next_et = self.entity_type(*next_type)
                    table = self._table(*next_type)
                    for rid, rows in frontier.items():
                        hopped = []
                        for row in rows:
                            target = table.get(row.values.get(hop.attribute))
                            if target is not None and self._visible(principal, target):
                                hopped.append(target)
                        frontier[rid] = hopped
                else:
                    next_type = (hop.schema, hop.type_name)
                    next_et = self.entity_type(*next_type)
                    fk = next_et.foreign_key_for(hop.attribute)
                    if fk is None or not fk.bound or (fk.to_schema, fk.to_type) != current:
                        raise InvalidQuery(
                            f"{hop.type_name}.{hop.attribute} does not reference "
                            f"{current[0]}:{current[1]}")
                    inbound: dict[str, list[erm.Record]] = {}
                    for candidate in self._table(*next_type).values():
                        if self._visible(principal, candidate):
                            inbound.setdefault(
                                candidate.values.get(hop.attribute), []).append(candidate)
                    for rid, rows in frontier.items():
                        hopped = []
                        for row in rows:
                            hopped.extend(inbound.get(row.rid, []))
                        frontier[rid] = hopped
                current, current_et = next_type, next_et

            survivors = []
            for row in base_rows:
                candidates = frontier[row.rid]
                if any(all(self._filter_matches(current_et, c, f) for f in spec.filters)
                       for c in candidates):
                    survivors.append(row)

            survivors.sort(key=lambda r: canonical(r.rid))
            count = len(survivors)
            page = survivors[spec.offset:]
            if spec.limit is not None:
                page = page[:spec.limit]
            if spec.projection is not None:
                for name in spec.projection:
                    if name != "RID" and base_et.attribute(name) is None:
                        raise InvalidQuery(
                            f"{base_et.name} has no attribute {name!r} to project")
                page = [replace(r, values={k: v for k, v in r.values.items()
                                           if k in spec.projection})
                        for r in page]
            return page, count
