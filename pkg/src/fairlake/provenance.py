"""Execution provenance for ML runs.

Every run is described before it starts (workflow identity, input datasets,
input assets, parameters), executed inside a scope that records status and
timing, and closed out by uploading its outputs as catalog assets.  The
resulting records let any run be traced back to the exact code and bytes
it consumed, and its inputs re-materialized byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import re
import socket
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import bags, rid as ridlib
from .client import FairlakeClient
from .datasets import ML_SCHEMA, BagCache
from .errors import (
    ConfigInvalid,
    DigestMismatch,
    FairlakeError,
    InvalidState,
    NotFound,
    PartialUpload,
    WorkloadFailed,
)
from .minids import is_minid

CONFIG_METADATA_TYPE = "Execution Config"
ENVIRONMENT_METADATA_TYPE = "Runtime Environment"

INITIATED = "initiated"
RUNNING = "running"
COMPLETED = "completed"
FAILED = "failed"

_SLUG_RE = re.compile(r"[^A-Za-z0-9._-]+")


def _slug(name: str) -> str:
    return _SLUG_RE.sub("-", name).strip("-") or "untyped"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def runtime_environment() -> dict:
    return {
        "host": socket.gethostname(),
        "os": f"{platform.system()} {platform.release()}",
        "started_at": _now(),
        "tool_versions": {"python": platform.python_version()},
        "env": sorted(os.environ.keys()),
    }


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExecutionConfig:
    workflow_name: str
    workflow_type: str
    code_uri: str
    code_checksum: str
    datasets: tuple[str, ...] = ()
    assets: tuple[str, ...] = ()
    parameters: dict = field(default_factory=dict)
    description: str = ""

    def to_doc(self) -> dict:
        return {
            "workflow": {
                "name": self.workflow_name,
                "type": self.workflow_type,
                "code_uri": self.code_uri,
                "code_checksum": self.code_checksum,
            },
            "datasets": list(self.datasets),
            "assets": list(self.assets),
            "parameters": dict(self.parameters),
            "description": self.description,
        }


def parse_execution_config(doc: dict) -> ExecutionConfig:
    problems: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigInvalid("execution config must be a JSON object")
    workflow = doc.get("workflow")
    if not isinstance(workflow, dict):
        problems.append("workflow: required object with name/type/code_uri/"
                        "code_checksum")
        workflow = {}
    for key in ("name", "type", "code_uri", "code_checksum"):
        value = workflow.get(key)
        if not isinstance(value, str) or not value:
            problems.append(f"workflow.{key}: required non-empty string")
    datasets = doc.get("datasets", [])
    if not isinstance(datasets, list):
        problems.append("datasets: must be a list of identifiers")
        datasets = []
    else:
        for item in datasets:
            if not isinstance(item, str) or not is_minid(item):
                problems.append(f"datasets: {item!r} is not a minid")
    assets = doc.get("assets", [])
    if not isinstance(assets, list):
        problems.append("assets: must be a list of record ids")
        assets = []
    else:
        for item in assets:
            if not isinstance(item, str) or not ridlib.is_valid(item):
                problems.append(f"assets: {item!r} is not a record id")
    parameters = doc.get("parameters", {})
    if not isinstance(parameters, dict):
        problems.append("parameters: must be an object")
        parameters = {}
    description = doc.get("description", "")
    if description is not None and not isinstance(description, str):
        problems.append("description: must be a string")
    if problems:
        raise ConfigInvalid("execution config is invalid", problems=problems)
    return ExecutionConfig(
        workflow_name=workflow["name"], workflow_type=workflow["type"],
        code_uri=workflow["code_uri"], code_checksum=workflow["code_checksum"],
        datasets=tuple(datasets), assets=tuple(assets),
        parameters=parameters, description=description or "")


# ---------------------------------------------------------------------------
# session


@dataclass
class ExecutionHandle:
    rid: str
    revision: int
    workflow_rid: str
    config: ExecutionConfig
    workdir: Path
    dataset_dirs: dict[str, Path] = field(default_factory=dict)
    asset_paths: dict[str, Path] = field(default_factory=dict)
    status: str = INITIATED
    started_at: Optional[datetime] = None

    @property
    def outputs_dir(self) -> Path:
        return self.workdir / "outputs"

    def asset_output_dir(self, type_name: str) -> Path:
        path = self.outputs_dir / "execution_assets" / type_name
        path.mkdir(parents=True, exist_ok=True)
        return path

    def metadata_output_dir(self, type_name: str) -> Path:
        path = self.outputs_dir / "execution_metadata" / type_name
        path.mkdir(parents=True, exist_ok=True)
        return path


class MLSession:
    """Drives the catalog side of an ML run."""

    def __init__(self, client: FairlakeClient, cache: BagCache):
        self.client = client
        self.cache = cache

    # -- workflows -------------------------------------------------------------

    def register_workflow(self, name: str, workflow_type: str, code_uri: str,
                          code_checksum: str) -> dict:
        """Reuse the existing workflow record when the same code identity
        was registered before."""
        rows, _ = self.client.query(
            ML_SCHEMA, "Workflow",
            filters=[f"Code_URI:eq:{json.dumps(code_uri)}",
                     f"Code_Checksum:eq:{json.dumps(code_checksum)}"])
        if rows:
            return rows[0]
        self.client.ensure_term(ML_SCHEMA, "Workflow_Type", workflow_type)
        return self.client.insert(ML_SCHEMA, "Workflow", [{
            "Name": name, "Workflow_Type": workflow_type,
            "Code_URI": code_uri, "Code_Checksum": code_checksum,
        }])[0]

    # -- lifecycle ------------------------------------------------------------------

    def _dataset_for_minid(self, identifier: str) -> dict:
        rows, _ = self.client.query(
            ML_SCHEMA, "Dataset",
            filters=[f"Minid:eq:{json.dumps(identifier)}"])
        if not rows:
            raise NotFound(f"no dataset is registered under {identifier}")
        return rows[0]

    def execution_init(self, config: ExecutionConfig,
                       workdir: Path | str) -> ExecutionHandle:
        """Create the execution record along with its input linkage, and
        stage every declared input under the working directory."""
        workdir = Path(workdir)
        workdir.mkdir(parents=True, exist_ok=True)
        workflow = self.register_workflow(
            config.workflow_name, config.workflow_type,
            config.code_uri, config.code_checksum)
        execution = self.client.insert(ML_SCHEMA, "Execution", [{
            "Workflow": workflow["rid"],
            "Status": INITIATED,
            "Description": config.description or None,
        }])[0]
        handle = ExecutionHandle(
            rid=execution["rid"], revision=execution["revision"],
            workflow_rid=workflow["rid"], config=config, workdir=workdir)

        inputs = workdir / "inputs"
        (inputs / "datasets").mkdir(parents=True, exist_ok=True)
        (inputs / "assets").mkdir(parents=True, exist_ok=True)
        handle.outputs_dir.mkdir(parents=True, exist_ok=True)

        for identifier in config.datasets:
            dataset = self._dataset_for_minid(identifier)
            self.client.insert(ML_SCHEMA, "Execution_Dataset", [{
                "Execution": handle.rid, "Dataset": dataset["rid"]}])
            bag_dir = self.cache.materialize(identifier)
            link = inputs / "datasets" / identifier.split(":", 1)[1]
            if link.is_symlink() or link.exists():
                link.unlink()
            link.symlink_to(bag_dir)
            handle.dataset_dirs[identifier] = bag_dir
        if config.datasets:
            data_link = workdir / "data"
            if data_link.is_symlink() or data_link.exists():
                data_link.unlink()
            data_link.symlink_to(
                handle.dataset_dirs[config.datasets[0]] / "data")

        for asset_rid in config.assets:
            record = self.client.get(ML_SCHEMA, "Execution_Asset", asset_rid)
            values = record["values"]
            data = self.client.fetch_url(values["URL"])
            digest = hashlib.sha256(data).hexdigest()
            if digest != values["SHA256"]:
                raise DigestMismatch(
                    f"asset {asset_rid} content does not match its recorded "
                    f"digest", asset=asset_rid)
            path = inputs / "assets" / values["Filename"]
            path.write_bytes(data)
            handle.asset_paths[asset_rid] = path
            self.link_asset(handle.rid, asset_rid, "input")

        manifest = {
            "execution": handle.rid,
            "workflow": handle.workflow_rid,
            "datasets": {m: f"inputs/datasets/{m.split(':', 1)[1]}"
                         for m in config.datasets},
            "assets": {r: f"inputs/assets/{p.name}"
                       for r, p in handle.asset_paths.items()},
            "parameters": config.parameters,
        }
        (inputs / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")

        self._upload_metadata_file(
            handle, CONFIG_METADATA_TYPE, "config.json",
            json.dumps(config.to_doc(), indent=2, sort_keys=True).encode())
        return handle

    def _set_status(self, handle: ExecutionHandle, status: str,
                    **extra_values) -> None:
        values = {"Status": status, **extra_values}
        updated = self.client.update(ML_SCHEMA, "Execution", handle.rid,
                                     handle.revision, values=values)
        handle.revision = updated["revision"]
        handle.status = status

    @contextmanager
    def execution_scope(self, handle: ExecutionHandle):
        """Run the workload between status transitions.

        A failure is recorded on the execution record before it propagates,
        and the runtime environment is captured either way.
        """
        if handle.status != INITIATED:
            raise InvalidState(
                f"execution {handle.rid} is {handle.status}; a scope can "
                f"only be entered once, from the initiated state")
        started = datetime.now(timezone.utc)
        handle.started_at = started
        self._set_status(handle, RUNNING, Started_At=started.isoformat())
        environment = runtime_environment()
        try:
            yield handle
        except BaseException as exc:
            stopped = datetime.now(timezone.utc)
            self._set_status(
                handle, FAILED,
                Status_Detail=f"{type(exc).__name__}: {exc}",
                Stopped_At=stopped.isoformat(),
                Duration=(stopped - started).total_seconds())
            self._capture_environment(handle, environment)
            raise
        else:
            stopped = datetime.now(timezone.utc)
            self._set_status(
                handle, COMPLETED,
                Stopped_At=stopped.isoformat(),
                Duration=(stopped - started).total_seconds())
            self._capture_environment(handle, environment)

    def _capture_environment(self, handle: ExecutionHandle,
                             environment: dict) -> None:
        self._upload_metadata_file(
            handle, ENVIRONMENT_METADATA_TYPE, "environment.json",
            json.dumps(environment, indent=2, sort_keys=True).encode())

    # -- uploads ---------------------------------------------------------------------

    def _store_file(self, handle: ExecutionHandle, kind: str, type_name: str,
                    filename: str, data: bytes) -> tuple[str, dict, str]:
        digest = hashlib.sha256(data).hexdigest()
        folder = f"/executions/{handle.rid}/{kind}/{_slug(type_name)}"
        self.client.ensure_namespace(folder)
        path = f"{folder}/{filename}"
        put = self.client.store_put(path, data, content_sha256=digest)
        return digest, put, path

    def _upload_metadata_file(self, handle: ExecutionHandle, type_name: str,
                              filename: str, data: bytes) -> dict:
        existing, _ = self.client.query(
            ML_SCHEMA, "Execution_Metadata",
            filters=[f"Execution:eq:{json.dumps(handle.rid)}",
                     f"Filename:eq:{json.dumps(filename)}",
                     f"SHA256:eq:{json.dumps(hashlib.sha256(data).hexdigest())}"])
        if existing:
            return existing[0]
        digest, put, path = self._store_file(
            handle, "metadata", type_name, filename, data)
        self.client.ensure_term(ML_SCHEMA, "Execution_Metadata_Type", type_name)
        return self.client.insert(ML_SCHEMA, "Execution_Metadata", [{
            "Execution_Metadata_Type": type_name,
            "Execution": handle.rid,
            "URL": self.client.store_url(path),
            "Filename": filename,
            "Length": len(data),
            "SHA256": digest,
            "Store_Path": path,
            "Store_Version": put["version_id"],
        }])[0]

    def _upload_asset_file(self, handle: ExecutionHandle, type_name: str,
                           filename: str, data: bytes) -> dict:
        digest = hashlib.sha256(data).hexdigest()
        existing, _ = self.client.query(
            ML_SCHEMA, "Execution_Asset",
            filters=[f"Produced_By:eq:{json.dumps(handle.rid)}",
                     f"Filename:eq:{json.dumps(filename)}",
                     f"SHA256:eq:{json.dumps(digest)}"])
        if existing:
            return existing[0]
        digest, put, path = self._store_file(
            handle, "assets", type_name, filename, data)
        self.client.ensure_term(ML_SCHEMA, "Execution_Asset_Type", type_name)
        record = self.client.insert(ML_SCHEMA, "Execution_Asset", [{
            "Execution_Asset_Type": type_name,
            "Produced_By": handle.rid,
            "URL": self.client.store_url(path),
            "Filename": filename,
            "Length": len(data),
            "SHA256": digest,
            "Store_Path": path,
            "Store_Version": put["version_id"],
        }])[0]
        self.link_asset(handle.rid, record["rid"], "output")
        return record

    def execution_upload(self, handle: ExecutionHandle) -> dict:
        """Walk the outputs tree and register every file.

        Files that fail to upload are reported, not fatal; re-running skips
        files that already made it (matched by name and digest), so an
        interrupted upload resumes where it stopped.
        """
        if handle.status == INITIATED:
            raise InvalidState(
                f"execution {handle.rid} has not entered its scope yet")
        uploaded: list[dict] = []
        failures: list[dict] = []

        def walk(root: Path, kind: str):
            if not root.is_dir():
                return
            for type_dir in sorted(p for p in root.iterdir() if p.is_dir()):
                for file_path in sorted(p for p in type_dir.rglob("*")
                                        if p.is_file()):
                    yield kind, type_dir.name, file_path

        jobs = list(walk(handle.outputs_dir / "execution_assets", "asset"))
        jobs += list(walk(handle.outputs_dir / "execution_metadata",
                          "metadata"))
        for kind, type_name, file_path in jobs:
            try:
                data = file_path.read_bytes()
                if kind == "asset":
                    record = self._upload_asset_file(
                        handle, type_name, file_path.name, data)
                else:
                    record = self._upload_metadata_file(
                        handle, type_name, file_path.name, data)
                uploaded.append({"kind": kind, "type": type_name,
                                 "file": file_path.name,
                                 "rid": record["rid"]})
            except (FairlakeError, OSError) as exc:
                failures.append({"kind": kind, "type": type_name,
                                 "file": file_path.name,
                                 "error": str(exc)})
        report = {"execution": handle.rid, "uploaded": uploaded,
                  "failures": failures}
        if failures:
            raise PartialUpload(
                f"{len(failures)} of {len(jobs)} output files failed to "
                f"upload; re-run the upload to resume", report=report)
        return report

    def link_asset(self, execution_rid: str, asset_rid: str,
                   role: str) -> dict:
        if role not in ("input", "output"):
            raise ConfigInvalid(f"asset role must be input or output, "
                                f"got {role!r}")
        existing, _ = self.client.query(
            ML_SCHEMA, "Execution_Asset_Link",
            filters=[f"Execution:eq:{json.dumps(execution_rid)}",
                     f"Execution_Asset:eq:{json.dumps(asset_rid)}",
                     f"Role:eq:{json.dumps(role)}"])
        if existing:
            return existing[0]
        return self.client.insert(ML_SCHEMA, "Execution_Asset_Link", [{
            "Execution": execution_rid, "Execution_Asset": asset_rid,
            "Role": role}])[0]

    # -- inventory -------------------------------------------------------------------

    def execution_inventory(self, execution_rid: str) -> dict:
        """Everything the catalog knows about one run: the workflow, the
        input datasets, and every produced or consumed file."""
        execution = self.client.get(ML_SCHEMA, "Execution", execution_rid)
        workflow = self.client.get(ML_SCHEMA, "Workflow",
                                   execution["values"]["Workflow"])
        ds_rows, _ = self.client.query(
            ML_SCHEMA, "Execution_Dataset",
            filters=[f"Execution:eq:{json.dumps(execution_rid)}"])
        datasets = [self.client.get(ML_SCHEMA, "Dataset",
                                    row["values"]["Dataset"])
                    for row in ds_rows]
        assets, _ = self.client.query(
            ML_SCHEMA, "Execution_Asset",
            filters=[f"Produced_By:eq:{json.dumps(execution_rid)}"])
        metadata, _ = self.client.query(
            ML_SCHEMA, "Execution_Metadata",
            filters=[f"Execution:eq:{json.dumps(execution_rid)}"])
        links, _ = self.client.query(
            ML_SCHEMA, "Execution_Asset_Link",
            filters=[f"Execution:eq:{json.dumps(execution_rid)}"])
        return {"execution": execution, "workflow": workflow,
                "datasets": datasets, "assets": assets,
                "metadata": metadata, "links": links}


def reproduce_execution_inputs(client: FairlakeClient, cache: BagCache,
                               execution_rid: str) -> dict:
    """Prove a past run's inputs can be rebuilt byte for byte.

    For each input dataset this walks the full chain: rebuild the package
    from live catalog state and compare its archive bytes against the
    digest registered under the dataset's identifier, then materialize the
    stored copy and compare its content hash against the one recorded on
    the dataset record.
    """
    from .datasets import build_dataset_payload, dataset_members

    ds_rows, _ = client.query(
        ML_SCHEMA, "Execution_Dataset",
        filters=[f"Execution:eq:{json.dumps(execution_rid)}"])
    inputs = []
    for row in ds_rows:
        dataset = client.get(ML_SCHEMA, "Dataset", row["values"]["Dataset"])
        identifier = dataset["values"]["Minid"]
        registered = client.minid_resolve(identifier)
        members = dataset_members(client, dataset["rid"])
        payload = build_dataset_payload(client, members)
        with tempfile.TemporaryDirectory(prefix="fairlake-repro-") as tmp:
            rebuilt = Path(tmp) / "bag"
            bags.build_bag(rebuilt, payload, info={}, reproducible=True)
            rebuilt_hash = bags.bag_content_hash(rebuilt)
            archive_sha = bags.archive_bag(rebuilt, Path(tmp) / "a.tgz")
        materialized = cache.materialize(identifier)
        materialized_hash = bags.bag_content_hash(materialized)
        inputs.append({
            "dataset": dataset["rid"],
            "minid": identifier,
            "rebuilt_bag_hash": rebuilt_hash,
            "materialized_bag_hash": materialized_hash,
            "recorded_bag_hash": dataset["values"].get("Bag_Hash"),
            "rebuilt_archive_sha256": archive_sha,
            "registered_sha256": registered["content_sha256"],
            "byte_identical": archive_sha == registered["content_sha256"],
            "content_match": (
                materialized_hash == dataset["values"].get("Bag_Hash")
                == rebuilt_hash),
        })
    return {"execution": execution_rid, "inputs": inputs,
            "ok": all(i["byte_identical"] and i["content_match"]
                      for i in inputs)}
