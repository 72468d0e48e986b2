"""Content-checksummed, versioned object store on the local filesystem.

Objects live under namespace directories mirroring their path; every put
appends an immutable version whose SHA-256 is computed while the bytes are
streamed to a staging file and atomically renamed into place.  Deletion
tombstones a version: metadata stays, bytes are withheld, version ids are
never reused.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import BinaryIO, Iterator, Optional, Union

from .authz import CURATOR, WRITER, AccessDecision, Principal
from .errors import (
    AccessDenied,
    ChecksumMismatch,
    NamespaceMissing,
    NotFound,
    VersionDeleted,
    VersionNotFound,
)

_SEGMENT_RE = re.compile(r"^[A-Za-z0-9._-]+$")
_NAMESPACE_MARKER = ".fairlake-namespace"
_OBJECT_SUFFIX = ".obj"
_CHUNK = 1 << 20

BytesSource = Union[bytes, bytearray, BinaryIO]


def split_path(path: str) -> list[str]:
    segments = [s for s in path.strip("/").split("/") if s]
    if not segments:
        raise NotFound("empty object path")
    for seg in segments:
        if not _SEGMENT_RE.match(seg) or seg.endswith(_OBJECT_SUFFIX):
            raise NamespaceMissing(f"illegal path segment {seg!r}")
    return segments


def join_path(segments: list[str]) -> str:
    return "/" + "/".join(segments)


@dataclass(frozen=True)
class ObjectVersion:
    path: str
    version_id: str
    content_sha256: str
    length: int
    content_type: str
    created_by: str
    created_at: str
    deleted: bool = False

    def to_doc(self) -> dict:
        return {
            "path": self.path,
            "version_id": self.version_id,
            "content_sha256": self.content_sha256,
            "length": self.length,
            "content_type": self.content_type,
            "created_by": self.created_by,
            "created_at": self.created_at,
            "deleted": self.deleted,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def check_store_access(principal: Principal, action: str) -> AccessDecision:
    """Store actions sit outside record ownership: any role may read, writers
    and curators may put, only curators may delete."""
    if principal.has(CURATOR):
        return AccessDecision(True, "curator-all")
    if action == "read":
        if principal.roles:
            return AccessDecision(True, "store-read")
        return AccessDecision(False, "store-no-role")
    if action == "put":
        if principal.has(WRITER):
            return AccessDecision(True, "store-writer-put")
        return AccessDecision(False, "store-put-requires-writer")
    if action == "delete":
        return AccessDecision(False, "store-delete-curator-only")
    raise ValueError(f"unknown store action {action!r}")


class ObjectStore:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / ".staging").mkdir(exist_ok=True)
        self._lock = threading.RLock()
        self._staging_seq = 0

    # -- namespaces -------------------------------------------------------

    def _namespace_dir(self, segments: list[str]) -> Path:
        return self.root.joinpath(*segments)

    def namespace_exists(self, path: str) -> bool:
        segments = [s for s in path.strip("/").split("/") if s]
        if not segments:
            return True  # root
        d = self._namespace_dir(segments)
        return (d / _NAMESPACE_MARKER).exists()

    def create_namespace(self, path: str, principal: Principal, exist_ok: bool = True) -> str:
        decision = check_store_access(principal, "put")
        if not decision.allowed:
            raise AccessDenied("namespace creation denied", rule=decision.rule)
        segments = split_path(path)
        with self._lock:
            parent = join_path(segments[:-1]) if len(segments) > 1 else "/"
            if parent != "/" and not self.namespace_exists(parent):
                raise NamespaceMissing(f"parent namespace {parent} does not exist")
            d = self._namespace_dir(segments)
            marker = d / _NAMESPACE_MARKER
            if marker.exists():
                if exist_ok:
                    return join_path(segments)
                raise NamespaceMissing(f"namespace {path} already exists")
            d.mkdir(parents=True, exist_ok=True)
            marker.touch()
        return join_path(segments)

    def ensure_namespace(self, path: str, principal: Principal) -> None:
        """Create every missing namespace along the path."""
        segments = split_path(path)
        for i in range(1, len(segments) + 1):
            prefix = join_path(segments[:i])
            if not self.namespace_exists(prefix):
                self.create_namespace(prefix, principal)

    # -- object internals ---------------------------------------------------

    def _object_dir(self, segments: list[str]) -> Path:
        return self.root.joinpath(*segments[:-1], segments[-1] + _OBJECT_SUFFIX)

    def _load_meta(self, obj_dir: Path) -> list[dict]:
        meta_file = obj_dir / "meta.json"
        if not meta_file.exists():
            return []
        return json.loads(meta_file.read_text(encoding="utf-8"))

    def _write_meta(self, obj_dir: Path, versions: list[dict]) -> None:
        tmp = obj_dir / "meta.json.tmp"
        tmp.write_text(json.dumps(versions, indent=2) + "\n", encoding="utf-8")
        os.replace(tmp, obj_dir / "meta.json")

    def _stage(self, source: BytesSource) -> tuple[Path, str, int]:
        """Stream to a staging file, hashing one pass; returns (file, digest, length)."""
        with self._lock:
            self._staging_seq += 1
            staged = self.root / ".staging" / f"put-{os.getpid()}-{self._staging_seq}"
        digest = hashlib.sha256()
        length = 0
        with open(staged, "wb") as out:
            if isinstance(source, (bytes, bytearray)):
                chunks: Iterator[bytes] = iter([bytes(source)])
            else:
                chunks = iter(lambda: source.read(_CHUNK), b"")
            for chunk in chunks:
                digest.update(chunk)
                length += len(chunk)
                out.write(chunk)
        return staged, digest.hexdigest(), length

    # -- operations ---------------------------------------------------------

    def put_object(
        self,
        path: str,
        source: BytesSource,
        principal: Principal,
        declared_sha256: Optional[str] = None,
        content_type: str = "application/octet-stream",
    ) -> ObjectVersion:
        decision = check_store_access(principal, "put")
        if not decision.allowed:
            raise AccessDenied("store put denied", rule=decision.rule)
        segments = split_path(path)
        parent = join_path(segments[:-1]) if len(segments) > 1 else "/"
        if parent != "/" and not self.namespace_exists(parent):
            raise NamespaceMissing(f"namespace {parent} does not exist")

        staged, digest, length = self._stage(source)
        if declared_sha256 is not None and declared_sha256.lower() != digest:
            staged.unlink()
            raise ChecksumMismatch(
                f"declared sha256 {declared_sha256} != received {digest}")

        with self._lock:
            obj_dir = self._object_dir(segments)
            obj_dir.mkdir(parents=True, exist_ok=True)
            versions = self._load_meta(obj_dir)
            version_id = f"v{len(versions) + 1:05d}"
            os.replace(staged, obj_dir / f"{version_id}.bin")
            version = ObjectVersion(
                path=join_path(segments),
                version_id=version_id,
                content_sha256=digest,
                length=length,
                content_type=content_type,
                created_by=principal.id,
                created_at=_now(),
            )
            versions.append(version.to_doc())
            self._write_meta(obj_dir, versions)
        return version

    def _find(self, path: str, version_id: Optional[str]) -> tuple[Path, ObjectVersion]:
        segments = split_path(path)
        obj_dir = self._object_dir(segments)
        versions = self._load_meta(obj_dir)
        if not versions:
            raise NotFound(f"no object at {path}")
        if version_id is None:
            live = [v for v in versions if not v["deleted"]]
            if not live:
                raise NotFound(f"all versions of {path} are deleted")
            doc = live[-1]
        else:
            matches = [v for v in versions if v["version_id"] == version_id]
            if not matches:
                raise VersionNotFound(f"{path} has no version {version_id}")
            doc = matches[0]
        return obj_dir, ObjectVersion(**doc)

    def get_object(
        self, path: str, principal: Principal, version_id: Optional[str] = None
    ) -> tuple[ObjectVersion, bytes]:
        decision = check_store_access(principal, "read")
        if not decision.allowed:
            raise AccessDenied("store read denied", rule=decision.rule)
        obj_dir, version = self._find(path, version_id)
        if version.deleted:
            raise VersionDeleted(f"{path} version {version.version_id} deleted",
                                 metadata=version.to_doc())
        data = (obj_dir / f"{version.version_id}.bin").read_bytes()
        return version, data

    def head_object(self, path: str, version_id: Optional[str] = None) -> ObjectVersion:
        _, version = self._find(path, version_id)
        return version

    def list_versions(self, path: str) -> list[ObjectVersion]:
        segments = split_path(path)
        versions = self._load_meta(self._object_dir(segments))
        if not versions:
            raise NotFound(f"no object at {path}")
        return [ObjectVersion(**doc) for doc in versions]

    def delete_object(self, path: str, version_id: str, principal: Principal) -> ObjectVersion:
        decision = check_store_access(principal, "delete")
        if not decision.allowed:
            raise AccessDenied("store delete denied", rule=decision.rule)
        with self._lock:
            segments = split_path(path)
            obj_dir, version = self._find(path, version_id)
            if version.deleted:
                raise VersionDeleted(f"{path} version {version_id} already deleted",
                                     metadata=version.to_doc())
            versions = self._load_meta(obj_dir)
            tombstone = None
            for doc in versions:
                if doc["version_id"] == version_id:
                    doc["deleted"] = True
                    tombstone = ObjectVersion(**doc)
            self._write_meta(obj_dir, versions)
            payload = obj_dir / f"{version_id}.bin"
            if payload.exists():
                payload.unlink()
        return tombstone
