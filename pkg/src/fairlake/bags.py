"""BagIt packaging: reproducible bag serialization, validation, holey-bag
materialization, and deterministic tar.gz archives.

Bags follow RFC 8493 layout: bagit.txt, data/, manifest-sha256.txt,
bag-info.txt, optional fetch.txt for remote payload, and a
tagmanifest-sha256.txt sealing the tag files.  Reproducible mode omits
volatile metadata (Bagging-Date, Bag-Software-Agent) so that equal payload
and equal descriptive metadata serialize to byte-identical bags.
"""

from __future__ import annotations

import gzip
import hashlib
import re
import tarfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Union

from .errors import (
    BadBagPath,
    DuplicatePath,
    IncompleteBag,
    MissingDigest,
    NotReproducible,
)

BAGIT_TXT = "BagIt-Version: 1.0\nTag-File-Character-Encoding: UTF-8\n"
VOLATILE_INFO_KEYS = frozenset({"Bagging-Date", "Bag-Software-Agent"})
SOFTWARE_AGENT = "fairlake bag builder"

COMPLETE = "complete"
VALID = "valid"

_MANIFEST_LINE = re.compile(r"^([0-9a-f]{64})\s+(.+)$")
_MD5_LINE = re.compile(r"^([0-9a-f]{32})\s+(.+)$")
_SHA256_RE = re.compile(r"^[0-9a-f]{64}$")

_CHUNK = 1 << 20


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(_CHUNK), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _check_payload_path(relpath: str) -> str:
    if not relpath or relpath.startswith("/") or "\\" in relpath:
        raise BadBagPath(f"illegal payload path {relpath!r}")
    parts = relpath.split("/")
    if any(p in ("", ".", "..") for p in parts):
        raise BadBagPath(f"illegal payload path {relpath!r}")
    return relpath


@dataclass(frozen=True)
class LocalPayload:
    """A payload file shipped inside the bag."""

    relpath: str  # path under data/, forward slashes
    data: bytes

    @property
    def sha256(self) -> str:
        return sha256_bytes(self.data)

    @property
    def length(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class RemotePayload:
    """A payload file referenced through fetch.txt instead of shipped."""

    relpath: str
    url: str
    length: int
    sha256: str


PayloadItem = Union[LocalPayload, RemotePayload]


def build_bag(
    dest: Path,
    payload: Iterable[PayloadItem],
    info: Optional[Mapping[str, str]] = None,
    reproducible: bool = True,
) -> Path:
    """Write a bag into ``dest`` (created if missing, must be empty)."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    if any(dest.iterdir()):
        raise BadBagPath(f"bag directory {dest} is not empty")

    items = list(payload)
    seen: set[str] = set()
    for item in items:
        _check_payload_path(item.relpath)
        if item.relpath in seen:
            raise DuplicatePath(f"payload path {item.relpath} appears twice")
        seen.add(item.relpath)
        if isinstance(item, RemotePayload):
            if not _SHA256_RE.match(item.sha256 or ""):
                raise MissingDigest(f"remote entry {item.relpath} lacks a sha256 digest")
            if item.length < 0:
                raise MissingDigest(f"remote entry {item.relpath} lacks a length")

    (dest / "bagit.txt").write_text(BAGIT_TXT, encoding="utf-8")

    data_dir = dest / "data"
    data_dir.mkdir()
    manifest: dict[str, str] = {}
    fetch_entries: list[RemotePayload] = []
    octets = 0
    for item in sorted(items, key=lambda i: i.relpath):
        bag_path = "data/" + item.relpath
        manifest[bag_path] = item.sha256
        octets += item.length
        if isinstance(item, LocalPayload):
            target = data_dir / item.relpath
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(item.data)
        else:
            fetch_entries.append(item)

    manifest_lines = [f"{digest}  {path}" for path, digest in sorted(manifest.items())]
    (dest / "manifest-sha256.txt").write_text(
        "".join(line + "\n" for line in manifest_lines), encoding="utf-8")

    if fetch_entries:
        fetch_lines = [
            f"{e.url} {e.length} data/{e.relpath}"
            for e in sorted(fetch_entries, key=lambda e: e.relpath)
        ]
        (dest / "fetch.txt").write_text(
            "".join(line + "\n" for line in fetch_lines), encoding="utf-8")

    info_pairs: dict[str, str] = dict(info or {})
    for key in info_pairs:
        if ":" in key or key != key.strip():
            raise BadBagPath(f"illegal bag-info key {key!r}")
    info_pairs["Payload-Oxum"] = f"{octets}.{len(items)}"
    if not reproducible:
        from datetime import date

        info_pairs["Bagging-Date"] = date.today().isoformat()
        info_pairs["Bag-Software-Agent"] = SOFTWARE_AGENT
    info_lines = [f"{key}: {info_pairs[key]}" for key in sorted(info_pairs)]
    (dest / "bag-info.txt").write_text(
        "".join(line + "\n" for line in info_lines), encoding="utf-8")

    _write_tagmanifest(dest)
    return dest


def _tag_files(bag_dir: Path) -> list[str]:
    names = []
    for name in ("bagit.txt", "bag-info.txt", "fetch.txt", "manifest-sha256.txt",
                 "manifest-md5.txt"):
        if (bag_dir / name).exists():
            names.append(name)
    return sorted(names)


def _write_tagmanifest(bag_dir: Path) -> None:
    lines = [f"{sha256_file(bag_dir / name)}  {name}" for name in _tag_files(bag_dir)]
    (bag_dir / "tagmanifest-sha256.txt").write_text(
        "".join(line + "\n" for line in lines), encoding="utf-8")


# -- parsing ----------------------------------------------------------------


def parse_manifest(text: str, line_re: re.Pattern = _MANIFEST_LINE) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        m = line_re.match(line)
        if not m:
            raise ValueError(f"malformed manifest line {lineno}: {line!r}")
        digest, path = m.group(1), m.group(2)
        if path in entries:
            raise ValueError(f"duplicate manifest path {path!r}")
        entries[path] = digest
    return entries


def parse_bag_info(text: str) -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line[0] in (" ", "\t"):
            if not pairs:
                raise ValueError(f"continuation line {lineno} without a key")
            key, value = pairs[-1]
            pairs[-1] = (key, value + " " + line.strip())
            continue
        if ": " not in line and not line.endswith(":"):
            raise ValueError(f"malformed bag-info line {lineno}: {line!r}")
        key, _, value = line.partition(":")
        pairs.append((key.strip(), value.strip()))
    return pairs


@dataclass(frozen=True)
class FetchEntry:
    url: str
    length: Optional[int]  # None when listed as "-" (unknown)
    path: str


def parse_fetch(text: str) -> list[FetchEntry]:
    entries: list[FetchEntry] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(" ", 2)
        if len(parts) != 3 or not (parts[1].isdigit() or parts[1] == "-"):
            raise ValueError(f"malformed fetch line {lineno}: {line!r}")
        url, length, path = parts
        if path in seen:
            raise ValueError(f"duplicate fetch path {path!r}")
        seen.add(path)
        entries.append(FetchEntry(url, None if length == "-" else int(length), path))
    return entries


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class BagProblem:
    code: str
    detail: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.detail}"


@dataclass
class BagReport:
    mode: str
    problems: list[BagProblem] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def flag(self, code: str, detail: str) -> None:
        self.problems.append(BagProblem(code, detail))

    @property
    def summary(self) -> str:
        if self.ok:
            return f"bag passes {self.mode} validation"
        return "; ".join(str(p) for p in self.problems)


def validate_bag(bag_dir: Path, mode: str = VALID) -> BagReport:
    """Validate a bag on disk.

    ``complete`` mode checks structure and presence, tolerating unfilled
    fetch.txt entries.  ``valid`` mode additionally re-hashes every present
    file against the manifests and reports unfilled entries as missing.
    """
    if mode not in (COMPLETE, VALID):
        raise ValueError(f"mode must be {COMPLETE!r} or {VALID!r}, got {mode!r}")
    bag_dir = Path(bag_dir)
    report = BagReport(mode)
    rehash = mode == VALID

    bagit = bag_dir / "bagit.txt"
    if not bagit.exists():
        report.flag("missing-bagit", "bagit.txt not found")
    else:
        try:
            decl = dict(parse_bag_info(bagit.read_text(encoding="utf-8")))
            if "BagIt-Version" not in decl:
                report.flag("bad-bagit", "bagit.txt lacks BagIt-Version")
            if decl.get("Tag-File-Character-Encoding") != "UTF-8":
                report.flag("bad-bagit", "tag file encoding must be UTF-8")
        except (ValueError, UnicodeDecodeError) as exc:
            report.flag("bad-bagit", str(exc))

    manifest: dict[str, str] = {}
    manifest_file = bag_dir / "manifest-sha256.txt"
    if not manifest_file.exists():
        report.flag("missing-manifest", "manifest-sha256.txt not found")
    else:
        try:
            manifest = parse_manifest(manifest_file.read_text(encoding="utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            report.flag("bad-manifest", str(exc))
        for path in manifest:
            parts = path.split("/")
            if parts[0] != "data" or any(p in ("", ".", "..") for p in parts):
                report.flag("bad-manifest-path", f"illegal payload path {path!r}")

    fetch_entries: list[FetchEntry] = []
    fetch_file = bag_dir / "fetch.txt"
    if fetch_file.exists():
        try:
            fetch_entries = parse_fetch(fetch_file.read_text(encoding="utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            report.flag("bad-fetch", str(exc))
        for entry in fetch_entries:
            if entry.path not in manifest:
                report.flag("fetch-not-in-manifest",
                            f"fetch entry {entry.path} missing from manifest")
    fetch_by_path = {e.path: e for e in fetch_entries}

    octets = 0
    count = 0
    for path, digest in sorted(manifest.items()):
        local = bag_dir / Path(*path.split("/"))
        count += 1
        if local.exists():
            octets += local.stat().st_size
            if rehash:
                actual = sha256_file(local)
                if actual != digest:
                    report.flag("payload-digest",
                                f"{path}: manifest says {digest}, file is {actual}")
        elif path in fetch_by_path:
            octets += fetch_by_path[path].length or 0
            if rehash:
                report.flag("missing-payload", f"{path} not fetched yet")
        else:
            report.flag("missing-payload", f"{path} absent and not in fetch.txt")

    data_dir = bag_dir / "data"
    if data_dir.exists():
        for found in sorted(p for p in data_dir.rglob("*") if p.is_file()):
            rel = found.relative_to(bag_dir).as_posix()
            if rel not in manifest:
                report.flag("unexpected-payload", f"{rel} not in manifest")

    info_file = bag_dir / "bag-info.txt"
    if not info_file.exists():
        report.flag("missing-bag-info", "bag-info.txt not found")
    else:
        try:
            pairs = parse_bag_info(info_file.read_text(encoding="utf-8"))
            oxum = [v for k, v in pairs if k == "Payload-Oxum"]
            if oxum:
                expected = f"{octets}.{count}"
                if oxum[0] != expected:
                    report.flag("payload-oxum",
                                f"Payload-Oxum {oxum[0]} != computed {expected}")
        except (ValueError, UnicodeDecodeError) as exc:
            report.flag("bad-bag-info", str(exc))

    tagmanifest_file = bag_dir / "tagmanifest-sha256.txt"
    tag_entries: dict[str, str] = {}
    if not tagmanifest_file.exists():
        report.flag("missing-tagmanifest", "tagmanifest-sha256.txt not found")
    else:
        try:
            tag_entries = parse_manifest(tagmanifest_file.read_text(encoding="utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            report.flag("bad-tagmanifest", str(exc))
        for name, digest in sorted(tag_entries.items()):
            if "/" in name:
                report.flag("bad-tagmanifest", f"nested tag path {name!r}")
                continue
            tag_path = bag_dir / name
            if not tag_path.exists():
                report.flag("missing-tag-file", f"{name} listed but absent")
                continue
            if rehash:
                actual = sha256_file(tag_path)
                if actual != digest:
                    report.flag("tag-digest",
                                f"{name}: tagmanifest says {digest}, file is {actual}")
        for name in _tag_files(bag_dir):
            if name not in tag_entries:
                report.flag("unsealed-tag-file", f"{name} not in tagmanifest")
    for entry in sorted(bag_dir.iterdir()):
        if entry.is_dir():
            if entry.name != "data":
                report.flag("unexpected-entry", f"stray directory {entry.name}")
            continue
        if entry.name == "tagmanifest-sha256.txt" or entry.name in tag_entries:
            continue
        report.flag("unexpected-entry", f"stray file {entry.name}")

    md5_file = bag_dir / "manifest-md5.txt"
    if rehash and md5_file.exists():
        try:
            md5_manifest = parse_manifest(md5_file.read_text(encoding="utf-8"), _MD5_LINE)
        except (ValueError, UnicodeDecodeError) as exc:
            md5_manifest = {}
            report.flag("bad-manifest", f"manifest-md5.txt: {exc}")
        for path, digest in sorted(md5_manifest.items()):
            local = bag_dir / Path(*path.split("/"))
            if local.exists():
                actual = hashlib.md5(local.read_bytes()).hexdigest()
                if actual != digest:
                    report.flag("payload-digest",
                                f"{path}: md5 manifest says {digest}, file is {actual}")

    return report


def bag_content_hash(bag_dir: Path) -> str:
    """Content identity of a bag: SHA-256 over the sorted payload manifest
    lines followed by the sorted non-volatile bag-info lines.

    Independent of fetch-versus-local payload placement and of volatile
    bagging metadata, so two bags with equal content hash carry identical
    payload and descriptive metadata.
    """
    bag_dir = Path(bag_dir)
    structure = validate_bag(bag_dir, mode=COMPLETE)
    if not structure.ok:
        raise IncompleteBag(f"bag {bag_dir} is not complete: {structure.summary}")
    manifest = parse_manifest((bag_dir / "manifest-sha256.txt").read_text(encoding="utf-8"))
    lines = [f"{digest}  {path}" for path, digest in sorted(manifest.items())]
    pairs = parse_bag_info((bag_dir / "bag-info.txt").read_text(encoding="utf-8"))
    lines.extend(sorted(
        f"{key}: {value}" for key, value in pairs if key not in VOLATILE_INFO_KEYS))
    digest = hashlib.sha256()
    for line in lines:
        digest.update(line.encode("utf-8") + b"\n")
    return digest.hexdigest()


# -- holey-bag materialization ---------------------------------------------------


@dataclass(frozen=True)
class FetchOutcome:
    path: str
    ok: bool
    detail: str


@dataclass
class FetchResolution:
    outcomes: list[FetchOutcome] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(o.ok for o in self.outcomes)

    @property
    def filled(self) -> list[str]:
        return [o.path for o in self.outcomes if o.ok and o.detail == "fetched"]

    @property
    def failures(self) -> list[FetchOutcome]:
        return [o for o in self.outcomes if not o.ok]


def resolve_fetch(bag_dir: Path, fetcher: Callable[[str], bytes]) -> FetchResolution:
    """Download every unfilled fetch.txt entry into the payload directory.

    Each download must match the length in fetch.txt and the digest in the
    payload manifest before it lands; a failing entry leaves no file behind
    and does not stop the others.
    """
    bag_dir = Path(bag_dir)
    resolution = FetchResolution()
    fetch_file = bag_dir / "fetch.txt"
    if not fetch_file.exists():
        return resolution
    manifest = parse_manifest((bag_dir / "manifest-sha256.txt").read_text(encoding="utf-8"))
    for entry in parse_fetch(fetch_file.read_text(encoding="utf-8")):
        target = bag_dir / Path(*entry.path.split("/"))
        if target.exists():
            resolution.outcomes.append(FetchOutcome(entry.path, True, "already present"))
            continue
        if entry.path not in manifest:
            resolution.outcomes.append(
                FetchOutcome(entry.path, False, "no manifest digest for this entry"))
            continue
        try:
            data = fetcher(entry.url)
        except Exception as exc:
            resolution.outcomes.append(
                FetchOutcome(entry.path, False, f"fetch failed: {exc}"))
            continue
        if entry.length is not None and len(data) != entry.length:
            resolution.outcomes.append(FetchOutcome(
                entry.path, False,
                f"fetched {len(data)} bytes, fetch.txt says {entry.length}"))
            continue
        actual = sha256_bytes(data)
        if actual != manifest[entry.path]:
            resolution.outcomes.append(FetchOutcome(
                entry.path, False,
                f"fetched sha256 {actual} != manifest {manifest[entry.path]}"))
            continue
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        resolution.outcomes.append(FetchOutcome(entry.path, True, "fetched"))
    return resolution


# -- deterministic archives ----------------------------------------------------

ARCHIVE_ROOT = "bag"


def archive_bag(bag_dir: Path, out_path: Path) -> str:
    """Serialize a bag directory to a deterministic .tgz; returns its SHA-256.

    Entry order, ownership, permissions, and all timestamps are pinned so
    equal directory content yields identical archive bytes anywhere.  Only
    reproducible bags (no volatile bag-info keys) may be archived.
    """
    bag_dir = Path(bag_dir)
    out_path = Path(out_path)
    info_file = bag_dir / "bag-info.txt"
    if info_file.exists():
        volatile = [k for k, _ in parse_bag_info(info_file.read_text(encoding="utf-8"))
                    if k in VOLATILE_INFO_KEYS]
        if volatile:
            raise NotReproducible(
                f"bag carries volatile metadata {sorted(volatile)}; "
                f"rebuild with reproducible=True to archive")
    out_path.parent.mkdir(parents=True, exist_ok=True)

    entries: list[tuple[str, Path]] = [(ARCHIVE_ROOT, bag_dir)]
    for child in sorted(bag_dir.rglob("*"), key=lambda p: p.relative_to(bag_dir).as_posix()):
        entries.append((f"{ARCHIVE_ROOT}/{child.relative_to(bag_dir).as_posix()}", child))

    with open(out_path, "wb") as raw:
        with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0,
                           compresslevel=9) as gz:
            with tarfile.open(fileobj=gz, mode="w", format=tarfile.GNU_FORMAT) as tar:
                for name, path in entries:
                    info = tarfile.TarInfo(name)
                    info.mtime = 0
                    info.uid = info.gid = 0
                    info.uname = info.gname = ""
                    if path.is_dir():
                        info.type = tarfile.DIRTYPE
                        info.mode = 0o755
                        tar.addfile(info)
                    else:
                        info.type = tarfile.REGTYPE
                        info.mode = 0o644
                        info.size = path.stat().st_size
                        with open(path, "rb") as fh:
                            tar.addfile(info, fh)
    return sha256_file(out_path)


def extract_bag_archive(archive: Path, dest_dir: Path) -> Path:
    """Unpack a bag archive; returns the extracted bag directory."""
    dest_dir = Path(dest_dir)
    dest_dir.mkdir(parents=True, exist_ok=True)
    with tarfile.open(archive, mode="r:gz") as tar:
        for member in tar.getmembers():
            parts = member.name.split("/")
            if parts[0] != ARCHIVE_ROOT or any(p in ("", ".", "..") for p in parts):
                raise BadBagPath(f"archive entry escapes bag root: {member.name}")
            if not (member.isreg() or member.isdir()):
                raise BadBagPath(f"unsupported archive entry type: {member.name}")
        tar.extractall(dest_dir)
    return dest_dir / ARCHIVE_ROOT
