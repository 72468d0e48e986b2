"""Entity-Relationship Model core.

Schemas split into one reusable ``ml`` schema (datasets, workflows,
executions, their assets and metadata, and the controlled vocabularies that
describe them) and any number of evolving domain schemas.  The two sides meet
at exactly one point: the member end of ``Dataset_Member``, bound when the
first domain schema is defined.

Entity types come in three flavors: plain data elements, asset types (which
always carry the five-attribute asset core), and vocabulary types (which
always carry the four-attribute term core).  Schema evolution is strictly
additive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Callable, Optional

from . import rid as ridlib
from .errors import InvalidSpec

ML_SCHEMA = "ml"
RELEASED = "released"
PENDING = "pending"

# Fixed cores stamped onto vocabulary and asset entity types.
VOCAB_ATTRIBUTES = ("Name", "Synonyms", "Description", "ID")
ASSET_ATTRIBUTES = ("URL", "Filename", "Length", "SHA256", "Description")


class ValueKind(str, Enum):
    TEXT = "text"
    INTEGER = "integer"
    FLOAT = "float"
    BOOLEAN = "boolean"
    TIMESTAMP = "timestamp"
    JSON = "json"
    RID_REF = "rid_ref"
    TERM_REF = "term_ref"


@dataclass(frozen=True)
class AttributeDef:
    name: str
    value_kind: ValueKind
    nullable: bool = True
    default: Any = None
    # Vocabulary entity type constraining a term_ref attribute.
    term_type: Optional[str] = None

    def to_doc(self) -> dict:
        doc = {
            "name": self.name,
            "value_kind": self.value_kind.value,
            "nullable": self.nullable,
            "default": self.default,
        }
        if self.term_type is not None:
            doc["term_type"] = self.term_type
        return doc

    @staticmethod
    def from_doc(doc: dict) -> "AttributeDef":
        try:
            kind = ValueKind(doc["value_kind"])
        except (KeyError, ValueError):
            raise InvalidSpec(f"attribute {doc.get('name')!r} has unknown value_kind "
                              f"{doc.get('value_kind')!r}")
        return AttributeDef(
            name=doc["name"],
            value_kind=kind,
            nullable=bool(doc.get("nullable", True)),
            default=doc.get("default"),
            term_type=doc.get("term_type"),
        )


@dataclass(frozen=True)
class ForeignKey:
    from_attr: str
    to_schema: Optional[str]
    to_type: Optional[str]

    @property
    def bound(self) -> bool:
        return self.to_schema is not None and self.to_type is not None

    def to_doc(self) -> dict:
        return {"from": self.from_attr, "to_schema": self.to_schema, "to_type": self.to_type}

    @staticmethod
    def from_doc(doc: dict) -> "ForeignKey":
        return ForeignKey(doc["from"], doc.get("to_schema"), doc.get("to_type"))


@dataclass
class EntityTypeDef:
    name: str
    attributes: list[AttributeDef] = field(default_factory=list)
    foreign_keys: list[ForeignKey] = field(default_factory=list)
    is_vocabulary: bool = False
    is_asset: bool = False

    def attribute(self, name: str) -> Optional[AttributeDef]:
        for attr in self.attributes:
            if attr.name == name:
                return attr
        return None

    def foreign_key_for(self, attr_name: str) -> Optional[ForeignKey]:
        for fk in self.foreign_keys:
            if fk.from_attr == attr_name:
                return fk
        return None

    def to_doc(self) -> dict:
        return {
            "name": self.name,
            "is_vocabulary": self.is_vocabulary,
            "is_asset": self.is_asset,
            "attributes": [a.to_doc() for a in self.attributes],
            "foreign_keys": [fk.to_doc() for fk in self.foreign_keys],
        }

    @staticmethod
    def from_doc(doc: dict) -> "EntityTypeDef":
        return EntityTypeDef(
            name=doc["name"],
            attributes=[AttributeDef.from_doc(a) for a in doc.get("attributes", [])],
            foreign_keys=[ForeignKey.from_doc(f) for f in doc.get("foreign_keys", [])],
            is_vocabulary=bool(doc.get("is_vocabulary", False)),
            is_asset=bool(doc.get("is_asset", False)),
        )


@dataclass
class SchemaDef:
    name: str
    kind: str  # "ml" | "domain"
    entity_types: list[EntityTypeDef] = field(default_factory=list)
    # Domain entity type designated as the dataset-membership target.
    link_target: Optional[str] = None

    def entity_type(self, name: str) -> Optional[EntityTypeDef]:
        for et in self.entity_types:
            if et.name == name:
                return et
        return None

    def to_doc(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "link_target": self.link_target,
            "entity_types": [et.to_doc() for et in self.entity_types],
        }

    @staticmethod
    def from_doc(doc: dict) -> "SchemaDef":
        kind = doc.get("kind")
        if kind not in ("ml", "domain"):
            raise InvalidSpec(f"schema kind must be 'ml' or 'domain', got {kind!r}")
        return SchemaDef(
            name=doc["name"],
            kind=kind,
            entity_types=[EntityTypeDef.from_doc(d) for d in doc.get("entity_types", [])],
            link_target=doc.get("link_target"),
        )


# --- fixed attribute cores ---------------------------------------------------

def vocabulary_core() -> list[AttributeDef]:
    return [
        AttributeDef("Name", ValueKind.TEXT, nullable=False),
        AttributeDef("Synonyms", ValueKind.JSON, nullable=True, default=[]),
        AttributeDef("Description", ValueKind.TEXT, nullable=True),
        AttributeDef("ID", ValueKind.TEXT, nullable=False),
    ]


def asset_core() -> list[AttributeDef]:
    return [
        AttributeDef("URL", ValueKind.TEXT, nullable=False),
        AttributeDef("Filename", ValueKind.TEXT, nullable=False),
        AttributeDef("Length", ValueKind.INTEGER, nullable=False),
        AttributeDef("SHA256", ValueKind.TEXT, nullable=False),
        AttributeDef("Description", ValueKind.TEXT, nullable=True),
    ]


def _merge_core(et: EntityTypeDef, core: list[AttributeDef]) -> EntityTypeDef:
    """Prepend the fixed core, keeping author-declared extras."""
    declared = {a.name: a for a in et.attributes}
    merged: list[AttributeDef] = []
    for core_attr in core:
        own = declared.pop(core_attr.name, None)
        if own is not None and own.value_kind != core_attr.value_kind:
            raise InvalidSpec(
                f"{et.name}.{core_attr.name} conflicts with the fixed "
                f"{'vocabulary' if et.is_vocabulary else 'asset'} core "
                f"({own.value_kind.value} vs {core_attr.value_kind.value})")
        merged.append(own or core_attr)
    merged.extend(a for a in et.attributes if a.name in declared)
    return replace_entity_attributes(et, merged)


def replace_entity_attributes(et: EntityTypeDef, attributes: list[AttributeDef]) -> EntityTypeDef:
    return EntityTypeDef(
        name=et.name,
        attributes=attributes,
        foreign_keys=list(et.foreign_keys),
        is_vocabulary=et.is_vocabulary,
        is_asset=et.is_asset,
    )


def normalize_entity_type(et: EntityTypeDef) -> EntityTypeDef:
    """Apply fixed cores and materialize attributes for declared foreign keys."""
    if et.is_vocabulary and et.is_asset:
        raise InvalidSpec(f"{et.name}: an entity type cannot be both vocabulary and asset")
    if et.is_vocabulary:
        et = _merge_core(et, vocabulary_core())
    if et.is_asset:
        et = _merge_core(et, asset_core())
    attrs = list(et.attributes)
    names = [a.name for a in attrs]
    for fk in et.foreign_keys:
        if fk.from_attr not in names:
            attrs.append(AttributeDef(fk.from_attr, ValueKind.RID_REF, nullable=False))
            names.append(fk.from_attr)
    return replace_entity_attributes(et, attrs)


# --- structural validation ---------------------------------------------------

def check_schema(schema: SchemaDef, resolve_type: Callable[[str, str], Optional[EntityTypeDef]]) -> None:
    """Validate internal consistency; ``resolve_type(schema, type)`` must also
    see the schema under validation so intra-schema FKs resolve.

    Raises InvalidSpec on the first structural problem found.
    """
    seen_types: set[str] = set()
    for et in schema.entity_types:
        if et.name in seen_types:
            raise InvalidSpec(f"duplicate entity type {et.name!r} in schema {schema.name!r}")
        seen_types.add(et.name)

        seen_attrs: set[str] = set()
        for attr in et.attributes:
            if attr.name in seen_attrs:
                raise InvalidSpec(f"duplicate attribute {et.name}.{attr.name}")
            seen_attrs.add(attr.name)

        for fk in et.foreign_keys:
            if fk.from_attr not in seen_attrs:
                raise InvalidSpec(f"foreign key {et.name}.{fk.from_attr} names no attribute")
            if not fk.bound:
                continue  # the single open linkage point
            if resolve_type(fk.to_schema, fk.to_type) is None:
                raise InvalidSpec(
                    f"foreign key {et.name}.{fk.from_attr} targets missing "
                    f"{fk.to_schema}:{fk.to_type}")
        for attr in et.attributes:
            if attr.value_kind is ValueKind.TERM_REF:
                if not attr.term_type:
                    raise InvalidSpec(f"{et.name}.{attr.name}: term_ref needs a term_type")
                target = _find_vocab(attr.term_type, schema, resolve_type)
                if target is None:
                    raise InvalidSpec(
                        f"{et.name}.{attr.name}: term_type {attr.term_type!r} "
                        f"is not a known vocabulary type")
            if attr.value_kind is ValueKind.RID_REF and et.foreign_key_for(attr.name) is None:
                raise InvalidSpec(f"{et.name}.{attr.name}: rid_ref without a declared foreign key")


def _find_vocab(name, schema, resolve_type):
    et = schema.entity_type(name)
    if et is None:
        et = resolve_type(ML_SCHEMA, name)
    if et is not None and et.is_vocabulary:
        return et
    return None


# --- the reusable ML schema ---------------------------------------------------

def build_ml_schema() -> SchemaDef:
    """The fixed ML-process schema: five core entities, four vocabularies,
    three associations.  The member end of Dataset_Member stays unbound until
    a domain schema designates its link target.
    """
    def vocab(name: str) -> EntityTypeDef:
        return normalize_entity_type(EntityTypeDef(name, is_vocabulary=True))

    text = ValueKind.TEXT
    dataset = EntityTypeDef("Dataset", attributes=[
        AttributeDef("Description", text, nullable=True),
        AttributeDef("Dataset_Types", ValueKind.JSON, nullable=True, default=[]),
        AttributeDef("Version", ValueKind.INTEGER, nullable=False, default=1),
        AttributeDef("Minid", text, nullable=True),
        AttributeDef("Bag_Hash", text, nullable=True),
    ])
    workflow = EntityTypeDef("Workflow", attributes=[
        AttributeDef("Name", text, nullable=False),
        AttributeDef("Workflow_Type", ValueKind.TERM_REF, nullable=True, term_type="Workflow_Type"),
        AttributeDef("Code_URI", text, nullable=False),
        AttributeDef("Code_Checksum", text, nullable=False),
    ])
    execution = EntityTypeDef("Execution", attributes=[
        AttributeDef("Workflow", ValueKind.RID_REF, nullable=False),
        AttributeDef("Status", text, nullable=False, default="initiated"),
        AttributeDef("Status_Detail", text, nullable=True),
        AttributeDef("Started_At", ValueKind.TIMESTAMP, nullable=True),
        AttributeDef("Stopped_At", ValueKind.TIMESTAMP, nullable=True),
        AttributeDef("Duration", ValueKind.FLOAT, nullable=True),
        AttributeDef("Description", text, nullable=True),
    ], foreign_keys=[ForeignKey("Workflow", ML_SCHEMA, "Workflow")])
    exec_asset = EntityTypeDef("Execution_Asset", is_asset=True, attributes=[
        AttributeDef("Execution_Asset_Type", ValueKind.TERM_REF, nullable=False,
                     term_type="Execution_Asset_Type"),
        AttributeDef("Store_Path", text, nullable=True),
        AttributeDef("Store_Version", text, nullable=True),
        AttributeDef("Produced_By", ValueKind.RID_REF, nullable=False),
    ], foreign_keys=[ForeignKey("Produced_By", ML_SCHEMA, "Execution")])
    exec_meta = EntityTypeDef("Execution_Metadata", is_asset=True, attributes=[
        AttributeDef("Execution_Metadata_Type", ValueKind.TERM_REF, nullable=False,
                     term_type="Execution_Metadata_Type"),
        AttributeDef("Store_Path", text, nullable=True),
        AttributeDef("Store_Version", text, nullable=True),
        AttributeDef("Execution", ValueKind.RID_REF, nullable=False),
    ], foreign_keys=[ForeignKey("Execution", ML_SCHEMA, "Execution")])

    dataset_member = EntityTypeDef("Dataset_Member", attributes=[
        AttributeDef("Dataset", ValueKind.RID_REF, nullable=False),
        AttributeDef("Member", ValueKind.RID_REF, nullable=False),
    ], foreign_keys=[
        ForeignKey("Dataset", ML_SCHEMA, "Dataset"),
        ForeignKey("Member", None, None),  # bound by define_domain_schema
    ])
    execution_dataset = EntityTypeDef("Execution_Dataset", attributes=[
        AttributeDef("Execution", ValueKind.RID_REF, nullable=False),
        AttributeDef("Dataset", ValueKind.RID_REF, nullable=False),
    ], foreign_keys=[
        ForeignKey("Execution", ML_SCHEMA, "Execution"),
        ForeignKey("Dataset", ML_SCHEMA, "Dataset"),
    ])
    execution_asset_link = EntityTypeDef("Execution_Asset_Link", attributes=[
        AttributeDef("Execution", ValueKind.RID_REF, nullable=False),
        AttributeDef("Execution_Asset", ValueKind.RID_REF, nullable=False),
        AttributeDef("Role", text, nullable=False),  # input | output
    ], foreign_keys=[
        ForeignKey("Execution", ML_SCHEMA, "Execution"),
        ForeignKey("Execution_Asset", ML_SCHEMA, "Execution_Asset"),
    ])

    core = [normalize_entity_type(et) for et in
            (dataset, workflow, execution, exec_asset, exec_meta)]
    vocabs = [vocab(n) for n in ("Dataset_Type", "Workflow_Type",
                                 "Execution_Asset_Type", "Execution_Metadata_Type")]
    associations = [normalize_entity_type(et) for et in
                    (dataset_member, execution_dataset, execution_asset_link)]
    return SchemaDef(name=ML_SCHEMA, kind="ml", entity_types=core + vocabs + associations)


ML_ASSOCIATIONS = ("Dataset_Member", "Execution_Dataset", "Execution_Asset_Link")
ML_VOCABULARIES = ("Dataset_Type", "Workflow_Type", "Execution_Asset_Type", "Execution_Metadata_Type")
ML_CORE_ENTITIES = ("Dataset", "Workflow", "Execution", "Execution_Asset", "Execution_Metadata")


# --- evolution ----------------------------------------------------------------

@dataclass(frozen=True)
class AddEntityType:
    schema: str
    entity_type: EntityTypeDef


@dataclass(frozen=True)
class AddAttribute:
    schema: str
    entity_type: str
    attribute: AttributeDef


@dataclass(frozen=True)
class AddForeignKey:
    schema: str
    entity_type: str
    foreign_key: ForeignKey


SchemaChange = AddEntityType | AddAttribute | AddForeignKey


def change_from_doc(doc: dict) -> SchemaChange:
    kind = doc.get("kind")
    if kind == "add_entity_type":
        return AddEntityType(doc["schema"], EntityTypeDef.from_doc(doc["entity_type"]))
    if kind == "add_attribute":
        return AddAttribute(doc["schema"], doc["entity_type"], AttributeDef.from_doc(doc["attribute"]))
    if kind == "add_foreign_key":
        return AddForeignKey(doc["schema"], doc["entity_type"], ForeignKey.from_doc(doc["foreign_key"]))
    raise InvalidSpec(f"unknown schema change kind {kind!r}")


def change_to_doc(change: SchemaChange) -> dict:
    if isinstance(change, AddEntityType):
        return {"kind": "add_entity_type", "schema": change.schema,
                "entity_type": change.entity_type.to_doc()}
    if isinstance(change, AddAttribute):
        return {"kind": "add_attribute", "schema": change.schema,
                "entity_type": change.entity_type, "attribute": change.attribute.to_doc()}
    return {"kind": "add_foreign_key", "schema": change.schema,
            "entity_type": change.entity_type, "foreign_key": change.foreign_key.to_doc()}


# --- records and validation ----------------------------------------------------

@dataclass
class Record:
    rid: str
    values: dict[str, Any]
    created_by: str
    created_at: str
    modified_at: str
    revision: int = 1
    release_state: str = PENDING
    deleted: bool = False

    def to_doc(self) -> dict:
        return {
            "rid": self.rid,
            "values": self.values,
            "created_by": self.created_by,
            "created_at": self.created_at,
            "modified_at": self.modified_at,
            "revision": self.revision,
            "release_state": self.release_state,
            "deleted": self.deleted,
        }

    @staticmethod
    def from_doc(doc: dict) -> "Record":
        return Record(
            rid=doc["rid"],
            values=dict(doc["values"]),
            created_by=doc["created_by"],
            created_at=doc["created_at"],
            modified_at=doc["modified_at"],
            revision=int(doc.get("revision", 1)),
            release_state=doc.get("release_state", PENDING),
            deleted=bool(doc.get("deleted", False)),
        )


@dataclass(frozen=True)
class Violation:
    attribute: str
    rule: str
    message: str

    def to_doc(self) -> dict:
        return {"attribute": self.attribute, "rule": self.rule, "message": self.message}


def _is_timestamp(value: Any) -> bool:
    if not isinstance(value, str):
        return False
    try:
        datetime.fromisoformat(value.replace("Z", "+00:00"))
        return True
    except ValueError:
        return False


def _kind_ok(kind: ValueKind, value: Any) -> bool:
    if kind is ValueKind.TEXT:
        return isinstance(value, str)
    if kind is ValueKind.INTEGER:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind is ValueKind.FLOAT:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is ValueKind.BOOLEAN:
        return isinstance(value, bool)
    if kind is ValueKind.TIMESTAMP:
        return _is_timestamp(value)
    if kind is ValueKind.JSON:
        try:
            json.dumps(value)
            return True
        except (TypeError, ValueError):
            return False
    if kind in (ValueKind.RID_REF, ValueKind.TERM_REF):
        return isinstance(value, str)
    return False


def validate_values(
    entity_type: EntityTypeDef,
    values: dict[str, Any],
    record_exists: Callable[[str, str, str], bool],
    term_exists: Callable[[str, str], bool],
) -> list[Violation]:
    """One violation per broken Record invariant; empty report means valid.

    ``record_exists(schema, type, rid)`` and ``term_exists(vocab_type, name)``
    supply the catalog context for reference checks.
    """
    report: list[Violation] = []
    known = {a.name for a in entity_type.attributes}
    for name in values:
        if name not in known:
            report.append(Violation(name, "unknown-attribute",
                                    f"{entity_type.name} has no attribute {name!r}"))
    for attr in entity_type.attributes:
        value = values.get(attr.name)
        if value is None:
            if not attr.nullable and attr.default is None:
                report.append(Violation(attr.name, "nullable",
                                        f"{attr.name} is required and has no default"))
            continue
        if not _kind_ok(attr.value_kind, value):
            report.append(Violation(attr.name, "value-kind",
                                    f"{attr.name} must be {attr.value_kind.value}"))
            continue
        if attr.value_kind is ValueKind.RID_REF:
            fk = entity_type.foreign_key_for(attr.name)
            if fk is None or not fk.bound:
                report.append(Violation(attr.name, "unbound-reference",
                                        f"{attr.name} has no bound foreign key target"))
            elif not ridlib.is_valid(value):
                report.append(Violation(attr.name, "rid-format", f"{value!r} is not a RID"))
            elif not record_exists(fk.to_schema, fk.to_type, value):
                report.append(Violation(attr.name, "dangling-reference",
                                        f"no {fk.to_schema}:{fk.to_type} record {value}"))
        elif attr.value_kind is ValueKind.TERM_REF:
            if not term_exists(attr.term_type or "", value):
                report.append(Violation(attr.name, "unknown-term",
                                        f"{value!r} is not a term of {attr.term_type}"))
    return report


def apply_defaults(entity_type: EntityTypeDef, values: dict[str, Any]) -> dict[str, Any]:
    out = dict(values)
    for attr in entity_type.attributes:
        if out.get(attr.name) is None and attr.default is not None:
            out[attr.name] = attr.default
    return out
