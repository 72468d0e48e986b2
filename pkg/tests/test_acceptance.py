"""End-to-end acceptance checks over the whole service surface.

Each test verifies one deliverable guarantee at full strength and prints a
single PASS/FAIL verdict line (visible under ``pytest -s`` or ``-rP``).
"""

import itertools
import json
import random
import re
import shutil
import time
from fractions import Fraction
from pathlib import Path

import pytest

from conftest import Service
from fairlake import bags, fair
from fairlake.authz import Principal, RecordContext, authorize
from fairlake.cli import main
from fairlake.datasets import BagCache, PartitionSpec, apportion, assign_partitions, create_dataset
from fairlake.errors import FairlakeError
from fairlake.examples import seed_mouse_scan
from fairlake.provenance import reproduce_execution_inputs
from fairlake.store import check_store_access
from fairlake.transfer import Fetcher


def _verdict(name: str, ok: bool, detail: str = "") -> None:
    line = f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line, flush=True)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. package builds are idempotent; the content hash tracks every byte


def _random_payloads(rng: random.Random) -> list[bags.LocalPayload]:
    payloads = []
    for j in range(rng.randint(1, 50)):
        parts = [f"d{rng.randint(0, 4)}" for _ in range(rng.randint(0, 2))]
        parts.append(f"file_{j:03d}.bin")  # unique per j, so no collisions
        payloads.append(bags.LocalPayload(
            "/".join(parts), rng.randbytes(rng.randint(0, 65536))))
    return payloads


def _build_and_hash(root: Path, payloads, info) -> tuple[str, str]:
    bag_dir = root / "bag"
    bags.build_bag(bag_dir, payloads, info=info)
    content = bags.bag_content_hash(bag_dir)
    digest = bags.archive_bag(bag_dir, root / "bag.tgz")
    return content, digest


def test_package_builds_are_idempotent_and_hash_tracks_content(tmp_path):
    start = time.monotonic()
    info = {"Source-Organization": "acceptance"}
    master = random.Random(0xFA1B)
    seeds = [master.randrange(2 ** 32) for _ in range(200)]

    firsts = []
    for i, seed in enumerate(seeds):
        work = tmp_path / f"first{i:03d}"
        firsts.append(_build_and_hash(work, _random_payloads(random.Random(seed)), info))
        shutil.rmtree(work)

    time.sleep(1.1)  # rebuilds happen at a different wall-clock second

    matched = 0
    for i, seed in enumerate(seeds):
        payloads = _random_payloads(random.Random(seed))
        random.Random(seed ^ 0x5A5A).shuffle(payloads)
        work = tmp_path / f"second{i:03d}"
        if _build_and_hash(work, payloads, info) == firsts[i]:
            matched += 1
        shutil.rmtree(work)

    # flipping any single payload byte must change the content hash
    changed = attempted = 0
    for i in range(20):
        rng = random.Random(7000 + i)
        payloads = [
            bags.LocalPayload(f"p{j}.bin", rng.randbytes(rng.randint(1, 256)))
            for j in range(rng.randint(1, 8))]
        work = tmp_path / "mut"
        base_hash, _ = _build_and_hash(work, payloads, info)
        shutil.rmtree(work)
        for j, victim in enumerate(payloads):
            data = bytearray(victim.data)
            data[rng.randrange(len(data))] ^= rng.randint(1, 255)
            mutated = [bags.LocalPayload(p.relpath, bytes(data)) if k == j else p
                       for k, p in enumerate(payloads)]
            mut_hash, _ = _build_and_hash(work, mutated, info)
            shutil.rmtree(work)
            attempted += 1
            if mut_hash != base_hash:
                changed += 1

    elapsed = time.monotonic() - start
    _verdict(
        "1 reproducible packaging", matched == 200
        and changed == attempted and elapsed < 120,
        f"{matched}/200 rebuilds byte-identical, {changed}/{attempted} "
        f"single-byte mutations detected, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. validation flags every corruption, deletion, and insertion


def test_validation_detects_every_tampering(tmp_path):
    rng = random.Random(0xC0FFEE)
    detected = attempted = 0
    for i in range(10):
        payloads = [
            bags.LocalPayload(f"d{j % 3}/f{j}.bin",
                              rng.randbytes(rng.randint(1, 2048)))
            for j in range(rng.randint(1, 6))]
        bag_dir = tmp_path / f"bag{i}"
        bags.build_bag(bag_dir, payloads)
        assert bags.validate_bag(bag_dir, mode=bags.VALID).ok

        for p in payloads:
            target = bag_dir / "data" / p.relpath
            original = target.read_bytes()

            corrupted = bytearray(original)
            corrupted[rng.randrange(len(corrupted))] ^= rng.randint(1, 255)
            target.write_bytes(bytes(corrupted))
            attempted += 1
            detected += not bags.validate_bag(bag_dir, mode=bags.VALID).ok
            target.write_bytes(original)

            target.unlink()
            attempted += 1
            detected += not bags.validate_bag(bag_dir, mode=bags.VALID).ok
            target.write_bytes(original)

        stray = bag_dir / "data" / f"stray_{i}.bin"
        stray.write_bytes(b"not in any manifest")
        attempted += 1
        detected += not bags.validate_bag(bag_dir, mode=bags.VALID).ok
        stray.unlink()
        assert bags.validate_bag(bag_dir, mode=bags.VALID).ok  # restored

    _verdict("2 validation sensitivity", detected == attempted,
             f"{detected}/{attempted} tamperings detected")


# ---------------------------------------------------------------------------
# 3. the cache never refetches content it already holds


def test_cache_never_refetches_known_content(eye_service):
    svc = eye_service
    cache = svc.cache(subdir="acceptance-cache")

    cache.materialize(svc.seed["minid"])
    cold = cache.fetcher.fetch_count
    cache.materialize(svc.seed["minid"])
    repeat_fetches = cache.fetcher.fetch_count - cold

    # a second identifier minted over identical content hits the same entry
    twin = create_dataset(svc.curator, svc.seed["subjects"],
                          description="Complete eye-exam study",
                          dataset_types=["Complete"])
    assert twin["values"]["Minid"] != svc.seed["minid"]
    assert twin["values"]["Bag_Hash"] == svc.seed["bag_hash"]
    before = cache.fetcher.fetch_count
    cache.materialize(twin["values"]["Minid"])
    twin_fetches = cache.fetcher.fetch_count - before

    _verdict("3 cache reuse", cold > 0 and repeat_fetches == 0
             and twin_fetches == 0,
             f"warm-up={cold} fetches, repeat={repeat_fetches}, "
             f"new identifier over same content={twin_fetches}")


# ---------------------------------------------------------------------------
# 4. stratified partitioning is exact and deterministic


def _oracle_apportion(total: int, fractions: tuple[Fraction, ...]) -> list[int]:
    """Brute-force largest-remainder: among all ways to hand out the
    leftover units, pick the one with the greatest remainder sum, breaking
    ties toward earlier partitions."""
    quotas = [f * total for f in fractions]
    floors = [int(q) for q in quotas]
    need = total - sum(floors)
    best = min(
        itertools.combinations(range(len(fractions)), need),
        key=lambda combo: (-sum(quotas[i] - floors[i] for i in combo), combo))
    shares = list(floors)
    for i in best:
        shares[i] += 1
    return shares


def test_partitioning_is_exact_balanced_and_deterministic():
    labels = {f"S{i:03d}": ("A" if i % 2 == 0 else "B") for i in range(100)}
    spec = PartitionSpec.build(["train", "validate", "test"],
                               ["0.2", "0.6", "0.2"], seed=42, by="Label")
    assignment, _ = assign_partitions(labels, spec)
    sizes = [len(assignment[n]) for n in spec.names]
    balanced = all(
        sum(1 for r in assignment[n] if labels[r] == "A") * 2
        == len(assignment[n])
        for n in spec.names)

    rng = random.Random(0xACCE)
    failures = 0
    for case in range(1000):
        n = rng.randint(1, 200)
        n_labels = rng.randint(1, 4)
        k = rng.randint(1, 4)
        weights = [rng.randint(1, 9) for _ in range(k)]
        fractions = [Fraction(w, sum(weights)) for w in weights]
        spec = PartitionSpec.build(
            [f"p{j}" for j in range(k)], [str(f) for f in fractions],
            seed=rng.randrange(10 ** 6), by="Label")
        members = {f"R{case:04d}X{i:03d}": f"L{rng.randrange(n_labels)}"
                   for i in range(n)}
        got, _ = assign_partitions(members, spec)
        again, _ = assign_partitions(members, spec)

        assigned = [r for name in spec.names for r in got[name]]
        cover = (len(assigned) == len(set(assigned))
                 and sorted(assigned) == sorted(members))
        strata: dict[str, list[str]] = {}
        for rid, label in members.items():
            strata.setdefault(label, []).append(rid)
        counts_ok = all(
            [sum(1 for r in got[name] if members[r] == label)
             for name in spec.names]
            == _oracle_apportion(len(rids), spec.fractions)
            == apportion(len(rids), spec.fractions)
            for label, rids in strata.items())
        if not (cover and counts_ok and got == again):
            failures += 1

    _verdict("4 stratified partitioning",
             sizes == [20, 60, 20] and balanced and failures == 0,
             f"fixture sizes={sizes}, per-child label balance={balanced}, "
             f"property failures={failures}/1000")


# ---------------------------------------------------------------------------
# 5. the access-control matrix matches its oracle, policy end to end


# Hand-written oracle: 3 roles x 4 actions x 3 record contexts = 36 cells.
ACL_ORACLE = [(role, action, kind) for role in ("curator", "writer", "reader")
              for action in ("read", "create", "update", "delete")
              for kind in ("own-pending", "other-pending", "other-released")]

ALLOWED_CELLS = {
    *((("curator", action, kind)) for action in ("read", "create", "update",
                                                 "delete")
      for kind in ("own-pending", "other-pending", "other-released")),
    ("writer", "read", "own-pending"),
    ("writer", "read", "other-released"),
    ("writer", "create", "own-pending"),
    ("writer", "create", "other-pending"),
    ("writer", "create", "other-released"),
    ("writer", "update", "own-pending"),
    ("writer", "delete", "own-pending"),
    ("reader", "read", "other-released"),
}


def _denied(call, *args, **kwargs) -> bool:
    try:
        call(*args, **kwargs)
        return False
    except FairlakeError as exc:
        return exc.http_status in (403, 404)


def test_access_decisions_match_oracle_and_hold_over_http(eye_service):
    mismatches = []
    for role, action, kind in ACL_ORACLE:
        principal = Principal(id=f"{role}-user", roles=frozenset([role]))
        context = RecordContext(
            created_by=principal.id if kind == "own-pending" else "someone",
            released=kind == "other-released")
        decision = authorize(principal, action, context)
        if decision.allowed is not ((role, action, kind) in ALLOWED_CELLS):
            mismatches.append((role, action, kind))
    assert len(ACL_ORACLE) == 36

    svc = eye_service
    live_ok = []
    pending = svc.alice.insert("eyeai", "Subject", [{"Name": "ACL P"}])[0]
    rid = pending["rid"]
    live_ok.append(svc.alice.get("eyeai", "Subject", rid)["rid"] == rid)
    live_ok.append(_denied(svc.bob.get, "eyeai", "Subject", rid))
    live_ok.append(_denied(svc.wendy.get, "eyeai", "Subject", rid))
    live_ok.append(_denied(svc.wendy.update, "eyeai", "Subject", rid,
                           pending["revision"], values={"Name": "X"}))
    live_ok.append(_denied(svc.bob.insert, "eyeai", "Subject",
                           [{"Name": "Nope"}]))
    released = svc.alice.update("eyeai", "Subject", rid, pending["revision"],
                                release_state="released")
    live_ok.append(svc.bob.get("eyeai", "Subject", rid)["rid"] == rid)
    live_ok.append(_denied(svc.alice.update, "eyeai", "Subject", rid,
                           released["revision"], values={"Name": "Y"}))
    live_ok.append(_denied(svc.alice.delete, "eyeai", "Subject", rid,
                           released["revision"]))
    live_ok.append(_denied(svc.alice.set_annotation, "k", "v"))
    curated = svc.curator.update("eyeai", "Subject", rid,
                                 released["revision"], values={"Name": "Z"})
    live_ok.append(curated["values"]["Name"] == "Z")

    # store actions: writers may add bytes but never remove versions
    svc.curator.ensure_namespace("/acceptance")
    put = svc.alice.store_put("/acceptance/a.bin", b"payload")
    live_ok.append(_denied(svc.bob.store_put, "/acceptance/b.bin", b"x"))
    live_ok.append(_denied(svc.alice.store_delete, "/acceptance/a.bin",
                           put["version_id"]))
    live_ok.append(not check_store_access(
        Principal(id="w", roles=frozenset(["writer"])), "delete").allowed)
    svc.curator.store_delete("/acceptance/a.bin", put["version_id"])

    _verdict("5 self-curation access control",
             not mismatches and all(live_ok),
             f"36/36 oracle cells matched, {sum(live_ok)}/{len(live_ok)} "
             f"live checks held" if not mismatches else
             f"oracle mismatches: {mismatches[:4]}")


# ---------------------------------------------------------------------------
# 6. a wrapped run leaves a complete, queryable provenance trail


def _run_config(svc, tmp_path: Path, name: str) -> Path:
    config = {
        "workflow": {"name": name, "type": "Training",
                     "code_uri": "https://git.example.org/eye/train.py",
                     "code_checksum": "b1946ac92492d2347c6235b4d2611184"},
        "datasets": [svc.seed["minid"]],
        "parameters": {"epochs": 1},
        "description": f"acceptance run {name}",
    }
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(config))
    return path


def _cli(svc, tmp_path: Path, *args: str) -> int:
    return main(["--url", svc.base, "--token", "tk-writer-alice",
                 "--cache", str(tmp_path / "cli-cache"), *args])


def test_wrapped_execution_records_full_provenance(eye_service, tmp_path,
                                                   capsys):
    svc = eye_service
    script = ("mkdir -p outputs/execution_assets/Model && "
              "sort data/members.csv > "
              "outputs/execution_assets/Model/model.txt")
    code = _cli(svc, tmp_path, "run",
                "--config", str(_run_config(svc, tmp_path, "train")),
                "--workdir", str(tmp_path / "w1"), "--", "sh", "-c", script)
    out = capsys.readouterr().out
    rid = re.search(r"execution (\S+)", out).group(1)

    checks = {"exit": code == 0}
    execution = svc.curator.get("ml", "Execution", rid)["values"]
    checks["status"] = execution["Status"] == "completed"

    workflow = svc.curator.get("ml", "Workflow", execution["Workflow"])["values"]
    checks["workflow code"] = (
        workflow["Code_URI"] == "https://git.example.org/eye/train.py"
        and workflow["Code_Checksum"] == "b1946ac92492d2347c6235b4d2611184")

    links, _ = svc.curator.query(
        "ml", "Execution_Dataset", filters=[f"Execution:eq:{json.dumps(rid)}"])
    minids = [svc.curator.get("ml", "Dataset", l["values"]["Dataset"])
              ["values"]["Minid"] for l in links]
    checks["input identifiers"] = minids == [svc.seed["minid"]]

    assets, _ = svc.curator.query(
        "ml", "Execution_Asset", filters=[f"Produced_By:eq:{json.dumps(rid)}"])
    checks["output assets"] = (
        [a["values"]["Filename"] for a in assets] == ["model.txt"]
        and svc.curator.fetch_url(assets[0]["values"]["URL"]))

    metadata, _ = svc.curator.query(
        "ml", "Execution_Metadata", filters=[f"Execution:eq:{json.dumps(rid)}"])
    by_file = {m["values"]["Filename"]: m for m in metadata}
    checks["config captured"] = "config.json" in by_file and json.loads(
        svc.curator.fetch_url(by_file["config.json"]["values"]["URL"]))[
            "parameters"] == {"epochs": 1}
    checks["runtime captured"] = "environment.json" in by_file

    # a failing workload still reports itself and keeps its paper trail
    code = _cli(svc, tmp_path, "run",
                "--config", str(_run_config(svc, tmp_path, "doomed")),
                "--workdir", str(tmp_path / "w2"),
                "--", "sh", "-c", "exit 9")
    out = capsys.readouterr().out
    failed_rid = re.search(r"execution (\S+)", out).group(1)
    failed = svc.curator.get("ml", "Execution", failed_rid)["values"]
    failed_meta, _ = svc.curator.query(
        "ml", "Execution_Metadata",
        filters=[f"Execution:eq:{json.dumps(failed_rid)}"])
    checks["failure recorded"] = (
        code == 1 and failed["Status"] == "failed"
        and "exited with code 9" in failed["Status_Detail"]
        and sorted(m["values"]["Filename"] for m in failed_meta)
        == ["config.json", "environment.json"])

    bad = [k for k, v in checks.items() if not v]
    _verdict("6 execution lifecycle", not bad,
             "workflow, inputs, outputs, config, runtime log, and failure "
             "status all resolve" if not bad else f"missing: {bad}")


# ---------------------------------------------------------------------------
# 7. both example domains assess 15/16 with only "Linked" missing


def test_fair_practices_on_both_example_domains(eye_service, tmp_path,
                                                capsys):
    mouse_dir = tmp_path / "mouse-svc"
    mouse_dir.mkdir()
    mouse = Service(mouse_dir)
    results = {}
    try:
        seed_mouse_scan(mouse.curator)
        for tag, svc in (("eye", eye_service), ("mouse", mouse)):
            assert main(["--url", svc.base, "--token", "tk-reader-bob",
                         "fair-check"]) == 0
            out = capsys.readouterr().out
            misses = [l for l in out.splitlines() if l.startswith("[NO ]")]
            results[tag] = (len(misses) == 1 and "Linked" in misses[0]
                            and "15/16 practices satisfied" in out)
            report = fair.assess(svc.curator)
            results[tag] = results[tag] and report.satisfied_count == 15
    finally:
        mouse.stop()

    _verdict("7 FAIR assessment", all(results.values()),
             f"eye={'15/16' if results['eye'] else 'mismatch'}, "
             f"mouse={'15/16' if results['mouse'] else 'mismatch'}, "
             f"only 'Linked' unsatisfied")


# ---------------------------------------------------------------------------
# 8. a terminal run's inputs rebuild byte-for-byte in a fresh environment


def test_run_inputs_rebuild_byte_identically_from_rid_alone(
        eye_service, tmp_path, capsys):
    svc = eye_service
    code = _cli(svc, tmp_path, "run",
                "--config", str(_run_config(svc, tmp_path, "closure")),
                "--workdir", str(tmp_path / "w"), "--", "true")
    assert code == 0
    rid = re.search(r"execution (\S+)", capsys.readouterr().out).group(1)

    # a fresh environment knows only the rid, the service URL, and a token
    fresh_client = svc.client_for("tk-curator-carol")
    fresh_cache = BagCache(tmp_path / "fresh-cache", Fetcher(fresh_client))
    report = reproduce_execution_inputs(fresh_client, fresh_cache, rid)

    ok = (report["ok"] and len(report["inputs"]) == 1
          and all(i["byte_identical"] and i["content_match"]
                  for i in report["inputs"]))
    digests = [i["rebuilt_archive_sha256"] == i["registered_sha256"]
               for i in report["inputs"]]
    _verdict("8 reproducibility closure", ok,
             f"{sum(digests)}/{len(digests)} input archives byte-identical "
             f"to their registered digests")
