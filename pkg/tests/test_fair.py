"""Tests for the FAIR-practice assessment report."""

import json

from fairlake import fair
from fairlake.examples import eye_exam_schema, seed_mouse_scan

EXPECTED_NAMES = (
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


def by_name(report):
    return {row.name: row for row in report.rows}


def test_metric_table_is_fixed():
    assert fair.METRIC_NAMES == EXPECTED_NAMES
    assert len(fair.METRIC_NAMES) == 16


def test_populated_catalog_satisfies_all_but_linked(eye_service):
    report = fair.assess(eye_service.curator)
    assert len(report.rows) == 16
    unsatisfied = [r.name for r in report.rows if not r.satisfied]
    assert unsatisfied == ["Linked"]
    assert report.satisfied_count == 15


def test_mouse_catalog_satisfies_all_but_linked(service):
    seed_mouse_scan(service.curator)
    report = fair.assess(service.curator)
    unsatisfied = [r.name for r in report.rows if not r.satisfied]
    assert unsatisfied == ["Linked"]


def test_render_text_layout(eye_service):
    report = fair.assess(eye_service.curator)
    lines = report.render_text().splitlines()
    assert len(lines) == 17
    assert lines[-1] == "15/16 practices satisfied"
    width = max(len(n) for n in EXPECTED_NAMES)
    for line, name in zip(lines, EXPECTED_NAMES):
        assert line.startswith("[yes] ") or line.startswith("[NO ] ")
        # name column is padded so evidence aligns
        assert line[6:6 + width] == name.ljust(width)
    marks = [line[1:4] for line in lines[:16]]
    assert marks.count("yes") == 15
    assert marks.count("NO ") == 1


def test_report_document_shape(eye_service):
    doc = fair.assess(eye_service.curator).to_doc()
    assert doc["total"] == 16
    assert doc["satisfied"] == 15
    assert [m["name"] for m in doc["metrics"]] == list(EXPECTED_NAMES)
    for metric in doc["metrics"]:
        assert isinstance(metric["satisfied"], bool)
        assert metric["evidence"]
    json.dumps(doc)


def test_missing_annotations_fail_license_rows(service):
    service.curator.bootstrap("GAP", annotations={})
    service.curator.define_schema(eye_exam_schema())
    service.curator.add_term("eyeai", "Image_Side", "Left")
    rows = by_name(fair.assess(service.curator))
    assert not rows["Digital resource license"].satisfied
    assert "no data license" in rows["Digital resource license"].evidence
    assert not rows["Metadata license"].satisfied
    assert not rows["Certi. of compliance to comm. standard"].satisfied


def test_catalog_without_datasets_fails_identifier_rows(service):
    service.curator.bootstrap("GAP", annotations={})
    service.curator.define_schema(eye_exam_schema())
    service.curator.add_term("eyeai", "Image_Side", "Left")
    rows = by_name(fair.assess(service.curator))
    assert not rows["Persistent identifier"].satisfied
    assert not rows["Resource identifier in metadata"].satisfied


def test_linked_satisfied_by_context_annotation(eye_service):
    eye_service.curator.set_annotation(
        "linked_data_context", "https://example.org/context.jsonld")
    report = fair.assess(eye_service.curator)
    row = by_name(report)["Linked"]
    assert row.satisfied
    assert "linked-data context" in row.evidence
    assert report.satisfied_count == 16
    assert report.render_text().splitlines()[-1] == "16/16 practices satisfied"


def test_linked_satisfied_by_external_term_reference(eye_service):
    eye_service.curator.add_term(
        "eyeai", "Diagnosis_Tag", "Suspect Glaucoma",
        description="https://purl.obolibrary.org/obo/HP_0000501")
    row = by_name(fair.assess(eye_service.curator))["Linked"]
    assert row.satisfied
    assert "Suspect Glaucoma" in row.evidence


def test_dataset_scope_validates_the_package(eye_service):
    cache = eye_service.cache()
    report = fair.assess(eye_service.curator, cache=cache,
                         dataset_rid=eye_service.seed["dataset"])
    row = by_name(report)["Certi. of compliance to comm. standard"]
    assert row.satisfied
    assert "validated" in row.evidence


def test_dataset_scope_limits_assessment_to_that_dataset(eye_service):
    rows = by_name(fair.assess(eye_service.curator,
                               dataset_rid="0-0000-0000-0000"))
    assert not rows["Persistent identifier"].satisfied
