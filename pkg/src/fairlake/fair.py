"""FAIR-practice assessment of a live catalog.

Each metric is evaluated mechanically against the running service: the
checks probe real behavior (identifier resolution, access control, model
introspection, package validation) rather than trusting declarations,
except where a declaration is the artifact being checked (licenses).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Callable, Optional

import httpx

from .client import FairlakeClient
from .datasets import ML_SCHEMA, BagCache
from .errors import FairlakeError
from .minids import is_minid
from . import bags

_KNOWN_VALUE_KINDS = {"text", "integer", "float", "boolean", "timestamp",
                      "json", "rid_ref", "term_ref"}

METRIC_NAMES = (
    "Globally unique identifier",
    "Persistent identifier",
    "Machine-readable metadata",
    "Standardized metadata",
    "Resource identifier in metadata",
    "Resource discovery through web search",
    "Open, Free, Standardized Access protocol",
    "Protocol to access restricted content",
    "Persistence of resource and metadata",
    "Resource uses formal language",
    "FAIR vocabulary",
    "Linked",
    "Digital resource license",
    "Metadata license",
    "Provenance scheme",
    "Certi. of compliance to comm. standard",
)


@dataclass(frozen=True)
class MetricResult:
    name: str
    satisfied: bool
    evidence: str

    def to_doc(self) -> dict:
        return {"name": self.name, "satisfied": self.satisfied,
                "evidence": self.evidence}


@dataclass(frozen=True)
class FairReport:
    rows: tuple[MetricResult, ...]

    @property
    def satisfied_count(self) -> int:
        return sum(1 for r in self.rows if r.satisfied)

    def to_doc(self) -> dict:
        return {"metrics": [r.to_doc() for r in self.rows],
                "satisfied": self.satisfied_count,
                "total": len(self.rows)}

    def render_text(self) -> str:
        width = max(len(r.name) for r in self.rows)
        lines = []
        for row in self.rows:
            mark = "yes" if row.satisfied else "NO "
            lines.append(f"[{mark}] {row.name.ljust(width)}  {row.evidence}")
        lines.append(f"{self.satisfied_count}/{len(self.rows)} "
                     f"practices satisfied")
        return "\n".join(lines)


class _Assessor:
    def __init__(self, client: FairlakeClient,
                 cache: Optional[BagCache] = None,
                 dataset_rid: Optional[str] = None):
        self.client = client
        self.cache = cache
        self.dataset_rid = dataset_rid
        self.model = client.get_model()
        self.schemas = {s["name"]: s for s in self.model["schemas"]}
        self.prefix = self.model["prefix"]
        self.annotations = self.model.get("annotations", {})
        self.datasets, _ = client.query(ML_SCHEMA, "Dataset")
        if dataset_rid:
            self.datasets = [d for d in self.datasets
                             if d["rid"] == dataset_rid]

    def _sample_records(self, limit_per_type: int = 25) -> list[dict]:
        sample: list[dict] = []
        for schema in self.model["schemas"]:
            for et in schema["entity_types"]:
                rows, _ = self.client.query(schema["name"], et["name"],
                                            limit=limit_per_type)
                sample.extend(rows)
        return sample

    def _all_terms(self) -> list[dict]:
        terms: list[dict] = []
        for schema in self.model["schemas"]:
            for et in schema["entity_types"]:
                if et.get("is_vocabulary"):
                    rows, _ = self.client.query(schema["name"], et["name"])
                    terms.extend(rows)
        return terms

    # -- individual checks, in table order --------------------------------------

    def globally_unique_identifier(self) -> MetricResult:
        sample = self._sample_records()
        rids = [r["rid"] for r in sample]
        pattern = re.compile(r"^[0-9A-HJKMNP-TV-Z]{1,4}(-[0-9A-HJKMNP-TV-Z]{4})*$")
        bad = [r for r in rids if not pattern.match(r)]
        unique = len(set(rids)) == len(rids)
        ok = not bad and unique and bool(rids)
        return MetricResult(
            METRIC_NAMES[0], ok,
            f"sampled {len(rids)} records; all carry distinct well-formed "
            f"record ids" if ok else
            f"problems: {len(bad)} malformed, unique={unique}, n={len(rids)}")

    def persistent_identifier(self) -> MetricResult:
        with_minid = [d for d in self.datasets
                      if d["values"].get("Minid")]
        if not with_minid:
            return MetricResult(METRIC_NAMES[1], False,
                                "no dataset carries a resolvable identifier")
        failures = []
        for d in with_minid:
            try:
                record = self.client.minid_resolve(d["values"]["Minid"])
                if not record.get("content_sha256"):
                    failures.append(d["rid"])
            except FairlakeError:
                failures.append(d["rid"])
        ok = not failures
        return MetricResult(
            METRIC_NAMES[1], ok,
            f"{len(with_minid)} dataset identifier(s) resolve to registered "
            f"digests and locations" if ok else
            f"unresolvable identifiers on: {failures}")

    def machine_readable_metadata(self) -> MetricResult:
        ok = (isinstance(self.model, dict) and "schemas" in self.model
              and all(isinstance(s.get("entity_types"), list)
                      for s in self.model["schemas"]))
        return MetricResult(
            METRIC_NAMES[2], ok,
            "model and records are served as structured JSON documents"
            if ok else "model introspection did not return a JSON model")

    def standardized_metadata(self) -> MetricResult:
        problems = []
        for schema in self.model["schemas"]:
            for et in schema["entity_types"]:
                for attr in et["attributes"]:
                    if attr.get("value_kind") not in _KNOWN_VALUE_KINDS:
                        problems.append(f"{et['name']}.{attr['name']}")
        ok = not problems
        return MetricResult(
            METRIC_NAMES[3], ok,
            "every attribute declares a standard value kind" if ok else
            f"nonstandard attribute kinds: {problems[:5]}")

    def resource_identifier_in_metadata(self) -> MetricResult:
        with_minid = [d for d in self.datasets if d["values"].get("Minid")]
        missing = [d["rid"] for d in self.datasets
                   if not d["values"].get("Minid")]
        ok = bool(with_minid) and not missing
        return MetricResult(
            METRIC_NAMES[4], ok,
            f"all {len(with_minid)} dataset record(s) embed their "
            f"identifier" if ok else
            f"datasets without embedded identifier: {missing or 'none exist'}")

    def resource_discovery(self) -> MetricResult:
        try:
            rows, count = self.client.query(ML_SCHEMA, "Dataset", limit=5)
            ok = isinstance(count, int)
        except FairlakeError as exc:
            return MetricResult(METRIC_NAMES[5], False,
                                f"query endpoint failed: {exc}")
        return MetricResult(
            METRIC_NAMES[5], ok,
            "released records are discoverable through the HTTP query "
            "interface")

    def open_access_protocol(self) -> MetricResult:
        base = self.client.base_url
        ok = base.startswith("http://") or base.startswith("https://")
        return MetricResult(
            METRIC_NAMES[6], ok,
            f"service speaks plain HTTP at {base}" if ok else
            f"unrecognized protocol: {base}")

    def restricted_content_protocol(self) -> MetricResult:
        try:
            response = httpx.get(f"{self.client.base_url}/model", timeout=30)
        except httpx.HTTPError as exc:
            return MetricResult(METRIC_NAMES[7], False,
                                f"could not probe the service: {exc}")
        ok = response.status_code == 401
        return MetricResult(
            METRIC_NAMES[7], ok,
            "unauthenticated access is refused with a structured challenge; "
            "bearer tokens gate restricted content" if ok else
            f"tokenless request returned {response.status_code}, not 401")

    def persistence_of_resource(self) -> MetricResult:
        sample = self._sample_records()
        missing = [r["rid"] for r in sample
                   if "revision" not in r or "modified_at" not in r]
        minid_ok = True
        for d in self.datasets:
            identifier = d["values"].get("Minid")
            if not identifier:
                continue
            try:
                record = self.client.minid_resolve(identifier)
                if not record.get("content_sha256"):
                    minid_ok = False
            except FairlakeError:
                minid_ok = False
        ok = not missing and minid_ok and bool(sample)
        return MetricResult(
            METRIC_NAMES[8], ok,
            "records keep revision history and identifiers stay resolvable, "
            "retaining digests even after removal" if ok else
            f"persistence gaps: records={missing[:3]}, identifiers ok="
            f"{minid_ok}")

    def formal_language(self) -> MetricResult:
        has_fk = any(et["foreign_keys"]
                     for s in self.model["schemas"]
                     for et in s["entity_types"])
        has_domain = any(s["kind"] == "domain" for s in self.model["schemas"])
        ok = has_fk and has_domain
        return MetricResult(
            METRIC_NAMES[9], ok,
            "resources are described by a typed entity-relationship model "
            "with declared keys and references" if ok else
            f"model incomplete: foreign_keys={has_fk}, domain={has_domain}")

    def fair_vocabulary(self) -> MetricResult:
        terms = self._all_terms()
        curie = re.compile(rf"^{re.escape(self.prefix)}:\d{{4}}$")
        bad = [t["values"].get("Name") for t in terms
               if not curie.match(t["values"].get("ID") or "")]
        ok = bool(terms) and not bad
        return MetricResult(
            METRIC_NAMES[10], ok,
            f"{len(terms)} controlled vocabulary term(s), each with a "
            f"curie-style identifier" if ok else
            (f"terms without curies: {bad[:5]}" if terms
             else "no vocabulary terms defined"))

    def linked(self) -> MetricResult:
        if "linked_data_context" in self.annotations:
            return MetricResult(
                METRIC_NAMES[11], True,
                "catalog declares a linked-data context for qualified "
                "external references")
        external = []
        for term in self._all_terms():
            values = term["values"]
            candidates = [values.get("Description") or ""]
            candidates += [s for s in (values.get("Synonyms") or [])
                           if isinstance(s, str)]
            for c in candidates:
                if c.startswith("http://") or c.startswith("https://"):
                    external.append(values.get("Name"))
                    break
        if external:
            return MetricResult(
                METRIC_NAMES[11], True,
                f"vocabulary terms reference external authorities: "
                f"{external[:3]}")
        return MetricResult(
            METRIC_NAMES[11], False,
            "term identifiers are catalog-local curies; no qualified "
            "references to external vocabularies or resources")

    def resource_license(self) -> MetricResult:
        value = self.annotations.get("license")
        return MetricResult(
            METRIC_NAMES[12], bool(value),
            f"data license declared: {value}" if value else
            "no data license annotation on the catalog")

    def metadata_license(self) -> MetricResult:
        value = self.annotations.get("metadata_license")
        return MetricResult(
            METRIC_NAMES[13], bool(value),
            f"metadata license declared: {value}" if value else
            "no metadata license annotation on the catalog")

    def provenance_scheme(self) -> MetricResult:
        ml = self.schemas.get(ML_SCHEMA, {})
        types = {t["name"]: t for t in ml.get("entity_types", [])}
        needed = ("Workflow", "Execution", "Execution_Asset",
                  "Execution_Metadata", "Execution_Dataset",
                  "Execution_Asset_Link")
        missing = [n for n in needed if n not in types]
        linked = False
        if not missing:
            exec_fks = {(fk["to_schema"], fk["to_type"])
                        for fk in types["Execution"]["foreign_keys"]}
            asset_fks = {(fk["to_schema"], fk["to_type"])
                         for fk in types["Execution_Asset"]["foreign_keys"]}
            linked = ((ML_SCHEMA, "Workflow") in exec_fks
                      and (ML_SCHEMA, "Execution") in asset_fks)
        ok = not missing and linked
        return MetricResult(
            METRIC_NAMES[14], ok,
            "assets trace to executions, executions to workflows and input "
            "datasets" if ok else
            f"provenance model incomplete: missing={missing}, linked={linked}")

    def compliance(self) -> MetricResult:
        declared = self.annotations.get("compliance_standard")
        if not declared:
            return MetricResult(
                METRIC_NAMES[15], False,
                "no packaging/compliance standard declared")
        if self.cache is not None and self.dataset_rid and self.datasets:
            identifier = self.datasets[0]["values"].get("Minid")
            if identifier:
                try:
                    bag_dir = self.cache.materialize(identifier)
                    report = bags.validate_bag(bag_dir, mode=bags.VALID)
                except FairlakeError as exc:
                    return MetricResult(
                        METRIC_NAMES[15], False,
                        f"package for {self.dataset_rid} could not be "
                        f"checked: {exc}")
                if not report.ok:
                    return MetricResult(
                        METRIC_NAMES[15], False,
                        f"package violates {declared}: {report.summary}")
                return MetricResult(
                    METRIC_NAMES[15], True,
                    f"declared {declared}; dataset package validated "
                    f"against it")
        return MetricResult(METRIC_NAMES[15], True,
                            f"declared standard: {declared}")

    def run(self) -> FairReport:
        checks: list[Callable[[], MetricResult]] = [
            self.globally_unique_identifier,
            self.persistent_identifier,
            self.machine_readable_metadata,
            self.standardized_metadata,
            self.resource_identifier_in_metadata,
            self.resource_discovery,
            self.open_access_protocol,
            self.restricted_content_protocol,
            self.persistence_of_resource,
            self.formal_language,
            self.fair_vocabulary,
            self.linked,
            self.resource_license,
            self.metadata_license,
            self.provenance_scheme,
            self.compliance,
        ]
        rows = tuple(check() for check in checks)
        assert tuple(r.name for r in rows) == METRIC_NAMES
        return FairReport(rows)


def assess(client: FairlakeClient, cache: Optional[BagCache] = None,
           dataset_rid: Optional[str] = None) -> FairReport:
    return _Assessor(client, cache, dataset_rid).run()
