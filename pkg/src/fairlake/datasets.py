"""Dataset assembly, caching, and stratified partitioning.

A dataset is a catalog record plus a packaged snapshot of its members: the
member rows, every domain record reachable from them through foreign keys,
and fetch references for member file content.  The package is rebuilt from
catalog state, so equal membership and content always yields the same bytes,
and the stored checksum can later detect drift.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import shutil
import tempfile
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Optional, Sequence

from filelock import FileLock

from . import bags
from .client import FairlakeClient
from .errors import (
    ChecksumDrift,
    DigestMismatch,
    EmptyMembership,
    FairlakeError,
    InvalidSpec,
    NonDisjointLabels,
    WrongMemberType,
)
from .transfer import Fetcher

ML_SCHEMA = "ml"
DATASET_STORE_ROOT = "/datasets"
_QUERY_CHUNK = 100


# ---------------------------------------------------------------------------
# model helpers


def _domain_schema(model_doc: dict) -> dict:
    for schema in model_doc["schemas"]:
        if schema["kind"] == "domain":
            return schema
    raise InvalidSpec("catalog has no domain schema yet")


def _entity_types(schema_doc: dict) -> dict[str, dict]:
    return {t["name"]: t for t in schema_doc["entity_types"]}


def _chunked(items: Sequence[str], size: int = _QUERY_CHUNK):
    for i in range(0, len(items), size):
        yield list(items[i:i + size])


def _fetch_records(client: FairlakeClient, schema: str, type_name: str,
                   rids: Sequence[str]) -> dict[str, dict]:
    found: dict[str, dict] = {}
    for chunk in _chunked(sorted(set(rids))):
        rows, _ = client.query(schema, type_name,
                               filters=[f"RID:in:{json.dumps(chunk)}"])
        for row in rows:
            found[row["rid"]] = row
    return found


# ---------------------------------------------------------------------------
# deterministic payload rendering


def _cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def _records_csv(type_doc: dict, records: Mapping[str, dict]) -> bytes:
    columns = sorted(a["name"] for a in type_doc["attributes"])
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["RID"] + columns)
    for rid in sorted(records):
        values = records[rid]["values"]
        writer.writerow([rid] + [_cell(values.get(c)) for c in columns])
    return out.getvalue().encode("utf-8")


def _collect_closure(client: FairlakeClient, domain: dict,
                     member_rids: Sequence[str]) -> dict[str, dict[str, dict]]:
    """All domain records reachable from the members via foreign keys,
    walked in both directions, grouped by entity type."""
    types = _entity_types(domain)
    target = domain["link_target"]
    inbound: dict[str, list[tuple[str, str]]] = {name: [] for name in types}
    for name, doc in types.items():
        for fk in doc["foreign_keys"]:
            if fk["to_schema"] == domain["name"] and fk["to_type"] in types:
                inbound[fk["to_type"]].append((name, fk["from"]))

    seen: dict[str, dict[str, dict]] = {name: {} for name in types}
    frontier: list[tuple[str, str]] = []

    def admit(type_name: str, row: dict) -> None:
        if row["rid"] not in seen[type_name]:
            seen[type_name][row["rid"]] = row
            frontier.append((type_name, row["rid"]))

    for row in _fetch_records(client, domain["name"], target,
                              member_rids).values():
        admit(target, row)

    while frontier:
        batch = frontier
        frontier = []
        wanted_out: dict[str, set[str]] = {}
        wanted_in: dict[tuple[str, str], set[str]] = {}
        for type_name, rid in batch:
            row = seen[type_name][rid]
            for fk in types[type_name]["foreign_keys"]:
                if fk["to_schema"] != domain["name"] or fk["to_type"] not in types:
                    continue
                ref = row["values"].get(fk["from"])
                if ref and ref not in seen[fk["to_type"]]:
                    wanted_out.setdefault(fk["to_type"], set()).add(ref)
            for (ref_type, attr) in inbound[type_name]:
                wanted_in.setdefault((ref_type, attr), set()).add(rid)
        for type_name, rids in wanted_out.items():
            for row in _fetch_records(client, domain["name"], type_name,
                                      sorted(rids)).values():
                admit(type_name, row)
        for (ref_type, attr), targets in wanted_in.items():
            for chunk in _chunked(sorted(targets)):
                rows, _ = client.query(
                    domain["name"], ref_type,
                    filters=[f"{attr}:in:{json.dumps(chunk)}"])
                for row in rows:
                    admit(ref_type, row)
    return {name: rows for name, rows in seen.items() if rows}


def build_dataset_payload(client: FairlakeClient, member_rids: Sequence[str],
                          ) -> list[bags.LocalPayload | bags.RemotePayload]:
    model = client.get_model()
    domain = _domain_schema(model)
    types = _entity_types(domain)
    target = domain["link_target"]

    closure = _collect_closure(client, domain, member_rids)
    members = closure.get(target, {})
    missing = sorted(set(member_rids) - set(members))
    if missing:
        raise WrongMemberType(
            f"members must be live {target} records; not found: "
            f"{', '.join(missing)}", missing=missing)
    member_rows = {rid: members[rid] for rid in member_rids}

    payload: list[bags.LocalPayload | bags.RemotePayload] = [
        bags.LocalPayload("members.csv",
                          _records_csv(types[target], member_rows))]
    for type_name in sorted(closure):
        rows = closure[type_name]
        if type_name != target:
            payload.append(bags.LocalPayload(
                f"records/{type_name}.csv",
                _records_csv(types[type_name], rows)))
        if not types[type_name]["is_asset"]:
            continue
        for rid in sorted(rows):
            values = rows[rid]["values"]
            url, digest, length = (values.get("URL"), values.get("SHA256"),
                                   values.get("Length"))
            if not url or not digest or length is None:
                continue
            filename = values.get("Filename") or f"{rid}.bin"
            payload.append(bags.RemotePayload(
                f"assets/{type_name}/{rid}_{filename}", url,
                int(length), digest))
    return payload


# ---------------------------------------------------------------------------
# dataset lifecycle


def _build_and_register_bag(client: FairlakeClient, dataset_rid: str,
                            version: int,
                            member_rids: Sequence[str]) -> tuple[str, str]:
    """Package the dataset, archive it into the store, and mint an
    identifier over the archive.  Returns (minid, bag_hash)."""
    payload = build_dataset_payload(client, member_rids)
    with tempfile.TemporaryDirectory(prefix="fairlake-bag-") as tmp:
        bag_dir = Path(tmp) / "bag"
        bags.build_bag(bag_dir, payload, info={}, reproducible=True)
        bag_hash = bags.bag_content_hash(bag_dir)
        archive = Path(tmp) / f"{bag_hash}.tgz"
        archive_sha = bags.archive_bag(bag_dir, archive)
        data = archive.read_bytes()
    client.ensure_namespace(DATASET_STORE_ROOT)
    store_path = f"{DATASET_STORE_ROOT}/{bag_hash}.tgz"
    client.store_put(store_path, data, content_sha256=archive_sha,
                     content_type="application/gzip")
    minted = client.minid_mint(
        title=f"Dataset {dataset_rid} v{version}",
        content_sha256=archive_sha,
        locations=[client.store_url(store_path)],
        length=len(data))
    return minted["identifier"], bag_hash


def create_dataset(client: FairlakeClient, member_rids: Sequence[str],
                   description: str = "",
                   dataset_types: Sequence[str] = (),
                   allow_empty: bool = False) -> dict:
    member_rids = list(dict.fromkeys(member_rids))
    if not member_rids and not allow_empty:
        raise EmptyMembership("a dataset needs at least one member")
    dataset = client.insert(ML_SCHEMA, "Dataset", [{
        "Description": description,
        "Dataset_Types": sorted(dataset_types),
        "Version": 1,
    }])[0]
    try:
        if member_rids:
            client.insert(ML_SCHEMA, "Dataset_Member", [
                {"Dataset": dataset["rid"], "Member": rid}
                for rid in member_rids])
        minid, bag_hash = _build_and_register_bag(
            client, dataset["rid"], 1, member_rids)
    except FairlakeError:
        # an identifier-less dataset record is useless debris; take it
        # back out before reporting the failure
        client.delete(ML_SCHEMA, "Dataset", dataset["rid"],
                      dataset["revision"])
        raise
    return client.update(ML_SCHEMA, "Dataset", dataset["rid"],
                         dataset["revision"],
                         values={"Minid": minid, "Bag_Hash": bag_hash})


def dataset_members(client: FairlakeClient, dataset_rid: str) -> list[str]:
    rows, _ = client.query(
        ML_SCHEMA, "Dataset_Member",
        filters=[f"Dataset:eq:{json.dumps(dataset_rid)}"])
    return [row["values"]["Member"] for row in rows]


def update_dataset_members(client: FairlakeClient, dataset_rid: str,
                           member_rids: Sequence[str]) -> dict:
    """Replace the membership, bump the version, and re-package."""
    member_rids = list(dict.fromkeys(member_rids))
    if not member_rids:
        raise EmptyMembership("a dataset needs at least one member")
    dataset = client.get(ML_SCHEMA, "Dataset", dataset_rid)
    rows, _ = client.query(
        ML_SCHEMA, "Dataset_Member",
        filters=[f"Dataset:eq:{json.dumps(dataset_rid)}"])
    for row in rows:
        client.delete(ML_SCHEMA, "Dataset_Member", row["rid"], row["revision"])
    client.insert(ML_SCHEMA, "Dataset_Member", [
        {"Dataset": dataset_rid, "Member": rid} for rid in member_rids])
    version = int(dataset["values"]["Version"]) + 1
    minid, bag_hash = _build_and_register_bag(
        client, dataset_rid, version, member_rids)
    return client.update(ML_SCHEMA, "Dataset", dataset_rid,
                         dataset["revision"],
                         values={"Minid": minid, "Bag_Hash": bag_hash,
                                 "Version": version})


def dataset_checksum(client: FairlakeClient, dataset_rid: str) -> str:
    """Recompute the package hash from live catalog state and compare it
    with the hash recorded at packaging time."""
    dataset = client.get(ML_SCHEMA, "Dataset", dataset_rid)
    recorded = dataset["values"].get("Bag_Hash")
    members = dataset_members(client, dataset_rid)
    payload = build_dataset_payload(client, members)
    with tempfile.TemporaryDirectory(prefix="fairlake-check-") as tmp:
        bag_dir = Path(tmp) / "bag"
        bags.build_bag(bag_dir, payload, info={}, reproducible=True)
        current = bags.bag_content_hash(bag_dir)
    if recorded and current != recorded:
        raise ChecksumDrift(
            f"dataset {dataset_rid} content no longer matches its recorded "
            f"checksum", dataset=dataset_rid, recorded=recorded,
            current=current)
    return current


# ---------------------------------------------------------------------------
# content-keyed cache


class BagCache:
    """Materializes dataset packages on local disk, keyed by content.

    Identifiers minted at different times over identical content share the
    same archive digest, so they hit the same cache entry.  Entries are
    revalidated on every hit; a tampered entry is evicted and refetched.
    """

    STATE_SUFFIX = ".state"

    def __init__(self, cache_root: Path | str, fetcher: Fetcher):
        self.root = Path(cache_root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.fetcher = fetcher
        self._lock = FileLock(str(self.root / ".cache.lock"))

    def _state_files(self) -> list[Path]:
        return sorted(self.root.glob(f"*{self.STATE_SUFFIX}"))

    def _read_state(self, path: Path) -> Optional[dict]:
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return None

    def _entry_dir(self, bag_hash: str) -> Path:
        return self.root / bag_hash

    def _evict(self, bag_hash: str) -> None:
        shutil.rmtree(self._entry_dir(bag_hash), ignore_errors=True)
        state = self.root / f"{bag_hash}{self.STATE_SUFFIX}"
        state.unlink(missing_ok=True)

    def _find_by_archive(self, archive_sha256: str) -> Optional[dict]:
        for path in self._state_files():
            state = self._read_state(path)
            if state and state.get("archive_sha256") == archive_sha256:
                return state
        return None

    def _touch(self, state: dict) -> None:
        state["last_used"] = time.time()
        path = self.root / f"{state['bag_hash']}{self.STATE_SUFFIX}"
        path.write_text(json.dumps(state, sort_keys=True), encoding="utf-8")

    def materialize(self, identifier: str) -> Path:
        """Return a local bag directory whose content matches the
        identifier's registered digest, fetching only when needed."""
        record = self.fetcher.client.minid_resolve(identifier)
        digest = record["content_sha256"]
        with self._lock:
            state = self._find_by_archive(digest)
            if state is not None:
                bag_dir = self._entry_dir(state["bag_hash"]) / "bag"
                report = bags.validate_bag(bag_dir, mode=bags.VALID)
                if report.ok:
                    self._touch(state)
                    return bag_dir
                self._evict(state["bag_hash"])
            return self._fill(identifier, digest)

    def _fill(self, identifier: str, digest: str) -> Path:
        data = self.fetcher.fetch(identifier)
        actual = hashlib.sha256(data).hexdigest()
        if actual != digest:
            raise DigestMismatch(
                f"fetched archive digest {actual} does not match the "
                f"registered {digest}", identifier=identifier)
        with tempfile.TemporaryDirectory(dir=self.root,
                                         prefix=".incoming-") as tmp:
            archive = Path(tmp) / "archive.tgz"
            archive.write_bytes(data)
            bag_dir = bags.extract_bag_archive(archive, Path(tmp) / "x")
            resolution = bags.resolve_fetch(bag_dir, self.fetcher.fetch)
            if not resolution.ok:
                failed = ", ".join(o.path for o in resolution.outcomes
                                   if not o.ok)
                raise DigestMismatch(
                    f"could not fill referenced content: {failed}",
                    identifier=identifier)
            report = bags.validate_bag(bag_dir, mode=bags.VALID)
            if not report.ok:
                raise DigestMismatch(
                    f"materialized bag failed validation: {report.summary}",
                    identifier=identifier)
            bag_hash = bags.bag_content_hash(bag_dir)
            entry = self._entry_dir(bag_hash)
            if entry.exists():
                shutil.rmtree(entry)
            entry.mkdir(parents=True)
            shutil.move(str(bag_dir), str(entry / "bag"))
        size = sum(p.stat().st_size for p in (entry / "bag").rglob("*")
                   if p.is_file())
        self._touch({"bag_hash": bag_hash, "archive_sha256": digest,
                     "identifier": identifier, "size_bytes": size,
                     "created_at": time.time()})
        return entry / "bag"

    def entries(self) -> list[dict]:
        states = [self._read_state(p) for p in self._state_files()]
        return [s for s in states if s]

    def evict_to_budget(self, max_bytes: int) -> list[str]:
        """Drop least recently used entries until total size fits."""
        with self._lock:
            states = sorted(self.entries(),
                            key=lambda s: s.get("last_used", 0.0))
            total = sum(s.get("size_bytes", 0) for s in states)
            evicted = []
            for state in states:
                if total <= max_bytes:
                    break
                self._evict(state["bag_hash"])
                total -= state.get("size_bytes", 0)
                evicted.append(state["bag_hash"])
            return evicted


def default_cache_root() -> Path:
    env = os.environ.get("FAIRLAKE_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "fairlake"


def download_dataset(cache: BagCache, identifier: str, dest: Path) -> Path:
    bag_dir = cache.materialize(identifier)
    dest = Path(dest)
    if dest.exists():
        raise InvalidSpec(f"destination already exists: {dest}")
    shutil.copytree(bag_dir, dest)
    return dest


# ---------------------------------------------------------------------------
# stratified partitioning


@dataclass(frozen=True)
class PartitionSpec:
    names: tuple[str, ...]
    fractions: tuple[Fraction, ...]
    seed: int
    by: str

    @staticmethod
    def build(names: Sequence[str], fractions: Sequence[float | str],
              seed: int, by: str) -> "PartitionSpec":
        if len(names) != len(fractions):
            raise InvalidSpec("need one fraction per partition name")
        if len(set(names)) != len(names):
            raise InvalidSpec("partition names must be unique")
        if not names:
            raise InvalidSpec("need at least one partition")
        exact = tuple(Fraction(str(f)) for f in fractions)
        if any(f < 0 for f in exact):
            raise InvalidSpec("fractions must be non-negative")
        if sum(exact) != 1:
            raise InvalidSpec(
                f"fractions must sum to exactly 1, got {float(sum(exact))}")
        return PartitionSpec(tuple(names), exact, seed, by)


def _shuffle_key(seed: int, label: str, rid: str) -> str:
    return hashlib.sha256(f"{seed}|{label}|{rid}".encode("utf-8")).hexdigest()


def apportion(count: int, fractions: Sequence[Fraction]) -> list[int]:
    """Split `count` into integer shares proportional to `fractions`,
    assigning leftovers to the largest fractional remainders (ties go to
    the earlier partition)."""
    quotas = [count * f for f in fractions]
    base = [int(q) for q in quotas]
    leftover = count - sum(base)
    order = sorted(range(len(fractions)),
                   key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def assign_partitions(labels: Mapping[str, str],
                      spec: PartitionSpec) -> tuple[dict[str, list[str]], list[str]]:
    """Deterministically split labeled members into partitions, keeping
    each label's proportions exact via largest-remainder apportionment.
    Returns the assignment and any small-stratum warnings."""
    strata: dict[str, list[str]] = {}
    for rid, label in labels.items():
        strata.setdefault(label, []).append(rid)
    assignment: dict[str, list[str]] = {name: [] for name in spec.names}
    warnings: list[str] = []
    for label in sorted(strata):
        rids = sorted(strata[label],
                      key=lambda r: (_shuffle_key(spec.seed, label, r), r))
        if len(rids) < len(spec.names):
            warnings.append(
                f"stratum '{label}' has only {len(rids)} member(s) for "
                f"{len(spec.names)} partitions")
        shares = apportion(len(rids), spec.fractions)
        cursor = 0
        for name, share in zip(spec.names, shares):
            assignment[name].extend(rids[cursor:cursor + share])
            cursor += share
    for name in assignment:
        assignment[name].sort()
    return assignment, warnings


def member_labels(client: FairlakeClient, member_rids: Sequence[str],
                  by: str) -> dict[str, str]:
    """Resolve each member's stratum label.

    `by` is either an attribute of the member type, or
    "<Type>.<fk_attr>:<label_attr>" to read the label off records that
    reference the member.  Every member must resolve to exactly one label.
    """
    model = client.get_model()
    domain = _domain_schema(model)
    target = domain["link_target"]
    labels: dict[str, str] = {}
    if "." in by:
        head, _, label_attr = by.partition(":")
        ref_type, _, fk_attr = head.partition(".")
        if not label_attr or not fk_attr:
            raise InvalidSpec(
                "label path must look like Type.fk_attr:Label_Attr")
        found: dict[str, set[str]] = {rid: set() for rid in member_rids}
        for chunk in _chunked(sorted(set(member_rids))):
            rows, _ = client.query(
                domain["name"], ref_type,
                filters=[f"{fk_attr}:in:{json.dumps(chunk)}"])
            for row in rows:
                owner = row["values"].get(fk_attr)
                value = row["values"].get(label_attr)
                if owner in found and value is not None:
                    found[owner].add(_cell(value))
        for rid, values in found.items():
            if len(values) != 1:
                raise NonDisjointLabels(
                    f"member {rid} resolves to {len(values)} labels via "
                    f"'{by}'; stratification needs exactly one", rid=rid)
            labels[rid] = values.pop()
        return labels
    records = _fetch_records(client, domain["name"], target, member_rids)
    for rid in member_rids:
        row = records.get(rid)
        if row is None:
            raise WrongMemberType(
                f"member {rid} is not a live {target} record", missing=[rid])
        value = row["values"].get(by)
        if value is None:
            raise NonDisjointLabels(
                f"member {rid} has no '{by}' label; stratification needs "
                f"exactly one", rid=rid)
        if isinstance(value, list):
            if len(value) != 1:
                raise NonDisjointLabels(
                    f"member {rid} has {len(value)} '{by}' labels; "
                    f"stratification needs exactly one", rid=rid)
            value = value[0]
        labels[rid] = _cell(value)
    return labels


def partition_dataset(client: FairlakeClient, dataset_rid: str,
                      spec: PartitionSpec) -> list[dict]:
    """Split a dataset into child datasets, stratified by label so each
    child preserves the parent's label proportions."""
    parent = client.get(ML_SCHEMA, "Dataset", dataset_rid)
    members = dataset_members(client, dataset_rid)
    if not members:
        raise EmptyMembership(f"dataset {dataset_rid} has no members")
    labels = member_labels(client, members, spec.by)
    assignment, warnings = assign_partitions(labels, spec)
    note = ("; ".join(warnings)) if warnings else ""
    results = []
    for name in spec.names:
        description = (f"{name} partition of {dataset_rid} "
                       f"(by={spec.by}, seed={spec.seed})")
        if note:
            description += f" [warning: {note}]"
        child = create_dataset(
            client, assignment[name], description=description,
            dataset_types=list(parent["values"].get("Dataset_Types") or []),
            allow_empty=True)
        results.append({"name": name, "rid": child["rid"],
                        "minid": child["values"]["Minid"],
                        "members": assignment[name],
                        "warnings": warnings})
    return results
