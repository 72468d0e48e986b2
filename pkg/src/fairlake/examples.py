"""Ready-made example domains: an eye-exam imaging study and a mouse
micro-CT study.

These builders exercise the full surface (schema definition, vocabularies,
asset upload, record release, dataset packaging) and give tests and demos
a populated catalog to point at.
"""

from __future__ import annotations

import hashlib
import json
import random
from pathlib import Path
from typing import Optional, Sequence

from .client import FairlakeClient
from .datasets import create_dataset

DEFAULT_TOKENS = {
    "tk-curator-carol": {"id": "carol", "display_name": "Carol Curator",
                         "roles": ["curator"]},
    "tk-writer-alice": {"id": "alice", "display_name": "Alice Writer",
                        "roles": ["writer"]},
    "tk-writer-wendy": {"id": "wendy", "display_name": "Wendy Writer",
                        "roles": ["writer"]},
    "tk-reader-bob": {"id": "bob", "display_name": "Bob Reader",
                      "roles": ["reader"]},
}

CATALOG_ANNOTATIONS = {
    "license": "CC-BY-4.0",
    "metadata_license": "CC0-1.0",
    "compliance_standard": "RFC 8493 bag packaging",
}


def write_tokens(path: Path | str) -> Path:
    path = Path(path)
    path.write_text(json.dumps(DEFAULT_TOKENS, indent=2), encoding="utf-8")
    return path


def _attr(name: str, kind: str, nullable: bool = True,
          term_type: Optional[str] = None, default=None) -> dict:
    doc = {"name": name, "value_kind": kind, "nullable": nullable,
           "default": default}
    if term_type:
        doc["term_type"] = term_type
    return doc


def release(client: FairlakeClient, schema: str, type_name: str,
            rids: Optional[Sequence[str]] = None) -> None:
    rows, _ = client.query(schema, type_name)
    for row in rows:
        if rids is not None and row["rid"] not in rids:
            continue
        if row["release_state"] != "released":
            client.update(schema, type_name, row["rid"], row["revision"],
                          release_state="released")


def upload_asset_bytes(client: FairlakeClient, store_path: str, data: bytes,
                       content_type: str = "application/octet-stream") -> dict:
    digest = hashlib.sha256(data).hexdigest()
    parent = store_path.rsplit("/", 1)[0]
    client.ensure_namespace(parent)
    put = client.store_put(store_path, data, content_sha256=digest,
                           content_type=content_type)
    return {"URL": client.store_url(store_path), "Length": len(data),
            "SHA256": digest, "store_version": put["version_id"]}


# ---------------------------------------------------------------------------
# eye-exam imaging study


def eye_exam_schema() -> dict:
    return {
        "name": "eyeai",
        "kind": "domain",
        "link_target": "Subject",
        "entity_types": [
            {"name": "Image_Side", "is_vocabulary": True, "is_asset": False,
             "attributes": [], "foreign_keys": []},
            {"name": "Diagnosis_Tag", "is_vocabulary": True,
             "is_asset": False, "attributes": [], "foreign_keys": []},
            {"name": "Subject", "is_vocabulary": False, "is_asset": False,
             "attributes": [
                 _attr("Name", "text", nullable=False),
                 _attr("Diagnosis", "term_ref", term_type="Diagnosis_Tag"),
             ],
             "foreign_keys": []},
            {"name": "Observation", "is_vocabulary": False, "is_asset": False,
             "attributes": [
                 _attr("Subject", "rid_ref", nullable=False),
                 _attr("Phase", "text"),
             ],
             "foreign_keys": [
                 {"from": "Subject", "to_schema": "eyeai",
                  "to_type": "Subject"}]},
            {"name": "Image", "is_vocabulary": False, "is_asset": True,
             "attributes": [
                 _attr("Observation", "rid_ref", nullable=False),
                 _attr("Image_Side", "term_ref", term_type="Image_Side"),
                 _attr("Angle", "text"),
                 _attr("Diagnosis", "term_ref", term_type="Diagnosis_Tag"),
             ],
             "foreign_keys": [
                 {"from": "Observation", "to_schema": "eyeai",
                  "to_type": "Observation"}]},
        ],
    }


EYE_DIAGNOSES = ("Referable Glaucoma", "No Glaucoma", "Unknown")


def seed_eye_exam(curator: FairlakeClient, subjects: int = 5,
                  rng_seed: int = 7, make_dataset: bool = True) -> dict:
    """Bootstrap + populate an eye-exam catalog; returns the created ids."""
    curator.bootstrap("EYE", annotations=CATALOG_ANNOTATIONS)
    curator.define_schema(eye_exam_schema())
    for name in ("Left", "Right"):
        curator.add_term("eyeai", "Image_Side", name)
    for name in EYE_DIAGNOSES:
        curator.add_term("eyeai", "Diagnosis_Tag", name)
    for name in ("Training", "Testing", "Complete"):
        curator.add_term("ml", "Dataset_Type", name)

    rng = random.Random(rng_seed)
    subject_rids: list[str] = []
    image_rids: list[str] = []
    observation_rids: list[str] = []
    for i in range(subjects):
        diagnosis = EYE_DIAGNOSES[i % len(EYE_DIAGNOSES)]
        subject = curator.insert("eyeai", "Subject", [{
            "Name": f"Subject {i + 1:03d}", "Diagnosis": diagnosis}])[0]
        subject_rids.append(subject["rid"])
        observation = curator.insert("eyeai", "Observation", [{
            "Subject": subject["rid"], "Phase": "baseline"}])[0]
        observation_rids.append(observation["rid"])
        for side in ("Left", "Right"):
            data = rng.randbytes(rng.randint(400, 900))
            filename = f"fundus_{i + 1:03d}_{side.lower()}.png"
            asset = upload_asset_bytes(
                curator, f"/raw/eyeai/{filename}", data, "image/png")
            image = curator.insert("eyeai", "Image", [{
                "Observation": observation["rid"],
                "Image_Side": side,
                "Angle": "2",
                "Diagnosis": diagnosis,
                "URL": asset["URL"],
                "Filename": filename,
                "Length": asset["Length"],
                "SHA256": asset["SHA256"],
            }])[0]
            image_rids.append(image["rid"])
    for type_name in ("Subject", "Observation", "Image"):
        release(curator, "eyeai", type_name)

    summary = {
        "schema": "eyeai",
        "subjects": subject_rids,
        "observations": observation_rids,
        "images": image_rids,
    }
    if make_dataset:
        dataset = create_dataset(
            curator, subject_rids,
            description="Complete eye-exam study",
            dataset_types=["Complete"])
        release(curator, "ml", "Dataset", [dataset["rid"]])
        summary["dataset"] = dataset["rid"]
        summary["minid"] = dataset["values"]["Minid"]
        summary["bag_hash"] = dataset["values"]["Bag_Hash"]
    return summary


# ---------------------------------------------------------------------------
# mouse micro-CT study


def mouse_scan_schema() -> dict:
    return {
        "name": "musmorph",
        "kind": "domain",
        "link_target": "Biosample",
        "entity_types": [
            {"name": "Genotype", "is_vocabulary": True, "is_asset": False,
             "attributes": [], "foreign_keys": []},
            {"name": "Biosample", "is_vocabulary": False, "is_asset": False,
             "attributes": [
                 _attr("Name", "text", nullable=False),
                 _attr("Genotype", "term_ref", term_type="Genotype"),
             ],
             "foreign_keys": []},
            {"name": "Scan", "is_vocabulary": False, "is_asset": True,
             "attributes": [
                 _attr("Biosample", "rid_ref", nullable=False),
                 _attr("Voxel_Size", "float"),
             ],
             "foreign_keys": [
                 {"from": "Biosample", "to_schema": "musmorph",
                  "to_type": "Biosample"}]},
        ],
    }


MOUSE_GENOTYPES = ("Wild Type", "Crf4 Null")


def seed_mouse_scan(curator: FairlakeClient, biosamples: int = 4,
                    rng_seed: int = 11, make_dataset: bool = True) -> dict:
    curator.bootstrap("MUS", annotations=CATALOG_ANNOTATIONS)
    curator.define_schema(mouse_scan_schema())
    for name in MOUSE_GENOTYPES:
        curator.add_term("musmorph", "Genotype", name)
    curator.add_term("ml", "Dataset_Type", "Complete")

    rng = random.Random(rng_seed)
    sample_rids: list[str] = []
    scan_rids: list[str] = []
    for i in range(biosamples):
        sample = curator.insert("musmorph", "Biosample", [{
            "Name": f"Sample {i + 1:03d}",
            "Genotype": MOUSE_GENOTYPES[i % len(MOUSE_GENOTYPES)]}])[0]
        sample_rids.append(sample["rid"])
        data = rng.randbytes(rng.randint(500, 1200))
        filename = f"scan_{i + 1:03d}.nii"
        asset = upload_asset_bytes(
            curator, f"/raw/musmorph/{filename}", data)
        scan = curator.insert("musmorph", "Scan", [{
            "Biosample": sample["rid"],
            "Voxel_Size": 0.035,
            "URL": asset["URL"],
            "Filename": filename,
            "Length": asset["Length"],
            "SHA256": asset["SHA256"],
        }])[0]
        scan_rids.append(scan["rid"])
    release(curator, "musmorph", "Biosample")
    release(curator, "musmorph", "Scan")

    summary = {"schema": "musmorph", "biosamples": sample_rids,
               "scans": scan_rids}
    if make_dataset:
        dataset = create_dataset(
            curator, sample_rids,
            description="Complete micro-CT study",
            dataset_types=["Complete"])
        release(curator, "ml", "Dataset", [dataset["rid"]])
        summary["dataset"] = dataset["rid"]
        summary["minid"] = dataset["values"]["Minid"]
        summary["bag_hash"] = dataset["values"]["Bag_Hash"]
    return summary
