"""Operator command line: catalog administration, bulk asset upload,
dataset operations, execution wrapping, and FAIR assessment.

Exit codes: 0 success, 1 workload or row failure, 2 configuration or
usage error.
"""

from __future__ import annotations

import hashlib
import json
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import click

from . import bags, fair
from .client import FairlakeClient
from .datasets import (
    BagCache,
    PartitionSpec,
    create_dataset,
    default_cache_root,
    download_dataset,
    partition_dataset,
)
from .errors import ConfigInvalid, FairlakeError, WorkloadFailed
from .provenance import MLSession, parse_execution_config
from .transfer import Fetcher


class CliState:
    def __init__(self, url: str, token: str, cache_root: Optional[str]):
        self.url = url
        self.token = token
        self.cache_root = cache_root
        self._client: Optional[FairlakeClient] = None

    @property
    def client(self) -> FairlakeClient:
        if self._client is None:
            if not self.token:
                raise click.UsageError(
                    "no token; pass --token or set FAIRLAKE_TOKEN")
            self._client = FairlakeClient(self.url, self.token)
        return self._client

    def cache(self) -> BagCache:
        root = Path(self.cache_root) if self.cache_root else default_cache_root()
        return BagCache(root, Fetcher(self.client))


@click.group()
@click.option("--url", envvar="FAIRLAKE_URL", default="http://127.0.0.1:8000",
              show_default=True, help="Service base URL.")
@click.option("--token", envvar="FAIRLAKE_TOKEN", default="",
              help="Bearer token.")
@click.option("--cache", "cache_root", envvar="FAIRLAKE_CACHE", default=None,
              type=click.Path(), help="Dataset cache directory.")
@click.pass_context
def cli(ctx: click.Context, url: str, token: str,
        cache_root: Optional[str]) -> None:
    ctx.obj = CliState(url, token, cache_root)


def _parse_kv(pairs: tuple[str, ...], what: str) -> dict[str, str]:
    out = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise click.UsageError(f"{what} must look like key=value: {pair}")
        out[key] = value
    return out


@cli.command("init-catalog")
@click.option("--prefix", required=True, help="Curie prefix for this catalog.")
@click.option("--annotation", "annotations", multiple=True,
              help="key=value catalog annotation; repeatable.")
@click.pass_obj
def init_catalog(state: CliState, prefix: str,
                 annotations: tuple[str, ...]) -> None:
    state.client.bootstrap(prefix, _parse_kv(annotations, "--annotation"))
    model = state.client.get_model()
    click.echo(f"catalog ready: prefix={model['prefix']} "
               f"model_version={model['model_version']}")


@cli.group()
def schema() -> None:
    """Schema administration."""


@schema.command("define")
@click.argument("schema_file", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def schema_define(state: CliState, schema_file: str) -> None:
    doc = json.loads(Path(schema_file).read_text(encoding="utf-8"))
    result = state.client.define_schema(doc)
    model = state.client.get_model()
    click.echo(f"schema {result['name']} defined; "
               f"model_version={model['model_version']}")


@cli.group()
def vocab() -> None:
    """Controlled vocabulary administration."""


@vocab.command("add")
@click.argument("vocab_ref")
@click.argument("name")
@click.option("--synonym", "synonyms", multiple=True)
@click.option("--description", default=None)
@click.pass_obj
def vocab_add(state: CliState, vocab_ref: str, name: str,
              synonyms: tuple[str, ...], description: Optional[str]) -> None:
    schema_name, sep, type_name = vocab_ref.partition(":")
    if not sep:
        raise click.UsageError("vocabulary must be schema:Type")
    term = state.client.add_term(schema_name, type_name, name,
                                 list(synonyms), description)
    click.echo(f"term {term['values']['Name']} -> {term['values']['ID']} "
               f"(rid {term['rid']})")


# ---------------------------------------------------------------------------
# bulk upload


def _parse_manifest_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def read_manifest(path: Path) -> list[dict]:
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"local_path", "store_path", "entity_type"}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise ConfigInvalid(
                f"manifest is missing columns: {sorted(missing)}")
        rows = []
        for row in reader:
            attrs = {k: _parse_manifest_value(v)
                     for k, v in row.items()
                     if k not in required and v not in (None, "")}
            rows.append({"local_path": row["local_path"],
                         "store_path": row["store_path"],
                         "entity_type": row["entity_type"],
                         "attributes": attrs})
    return rows


def upload_assets(client: FairlakeClient, rows: list[dict],
                  jobs: int = 1) -> dict:
    """Upload files and register their asset records, pairing each store
    put with its catalog insert.  Rows whose bytes and record already
    exist are skipped, so reruns only retry what failed."""
    model = client.get_model()
    asset_types = {}
    for schema_doc in model["schemas"]:
        for et in schema_doc["entity_types"]:
            if et["is_asset"]:
                asset_types[f"{schema_doc['name']}:{et['name']}"] = et

    def one(row: dict) -> dict:
        local = Path(row["local_path"])
        spec = row["entity_type"]
        try:
            if spec not in asset_types:
                raise ConfigInvalid(f"{spec} is not an asset entity type")
            schema_name, type_name = spec.split(":", 1)
            data = local.read_bytes()
            digest = hashlib.sha256(data).hexdigest()
            store_path = row["store_path"]
            url = client.store_url(store_path)
            existing, _ = client.query(
                schema_name, type_name,
                filters=[f"URL:eq:{json.dumps(url)}",
                         f"SHA256:eq:{json.dumps(digest)}"])
            if existing:
                return {"row": row["local_path"], "status": "skipped",
                        "rid": existing[0]["rid"]}
            in_store = False
            try:
                in_store = any(v["content_sha256"] == digest and
                               not v["deleted"]
                               for v in client.store_meta(store_path))
            except FairlakeError:
                in_store = False
            if not in_store:
                client.ensure_namespace(store_path.rsplit("/", 1)[0])
                client.store_put(store_path, data, content_sha256=digest)
            values = {"URL": url, "Filename": local.name,
                      "Length": len(data), "SHA256": digest,
                      **row["attributes"]}
            # csv cells that look numeric parse as ints, but rid_ref wants
            # the string form of the record id
            for attr in asset_types[spec]["attributes"]:
                name = attr["name"]
                if attr["value_kind"] == "rid_ref" and isinstance(
                        values.get(name), int):
                    values[name] = str(values[name])
            record = client.insert(schema_name, type_name, [values])[0]
            return {"row": row["local_path"], "status": "uploaded",
                    "rid": record["rid"]}
        except (FairlakeError, OSError, ValueError) as exc:
            error = str(exc)
            report = getattr(exc, "details", {}).get("report") or []
            for entry in report:
                for violation in entry.get("violations", []):
                    error += f"; {violation['message']}"
            return {"row": row["local_path"], "status": "failed",
                    "error": error}

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, rows))
    else:
        results = [one(row) for row in rows]
    failed = [r for r in results if r["status"] == "failed"]
    return {"rows": results, "failed": len(failed),
            "uploaded": sum(1 for r in results if r["status"] == "uploaded"),
            "skipped": sum(1 for r in results if r["status"] == "skipped")}


@cli.command("upload")
@click.option("--manifest", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--jobs", default=1, show_default=True)
@click.pass_obj
def upload(state: CliState, manifest: str, jobs: int) -> int:
    rows = read_manifest(Path(manifest))
    report = upload_assets(state.client, rows, jobs=jobs)
    for result in report["rows"]:
        line = f"{result['status']:8s} {result['row']}"
        if "rid" in result:
            line += f" -> {result['rid']}"
        if "error" in result:
            line += f" ({result['error']})"
        click.echo(line)
    click.echo(f"uploaded={report['uploaded']} skipped={report['skipped']} "
               f"failed={report['failed']}")
    return 1 if report["failed"] else 0


# ---------------------------------------------------------------------------
# datasets


@cli.group()
def dataset() -> None:
    """Dataset packaging and movement."""


@dataset.command("create")
@click.option("--member", "members", multiple=True, required=True,
              help="Member record id; repeatable.")
@click.option("--description", default="")
@click.option("--type", "types", multiple=True,
              help="Dataset type label; repeatable.")
@click.pass_obj
def dataset_create(state: CliState, members: tuple[str, ...],
                   description: str, types: tuple[str, ...]) -> None:
    record = create_dataset(state.client, list(members), description,
                            list(types))
    click.echo(f"dataset {record['rid']} minid={record['values']['Minid']} "
               f"bag_hash={record['values']['Bag_Hash']}")


@dataset.command("partition")
@click.argument("dataset_rid")
@click.option("--by", required=True, help="Stratification label attribute.")
@click.option("--part", "parts", multiple=True, required=True,
              help="name=fraction; repeatable, fractions must sum to 1.")
@click.option("--seed", default=0, show_default=True)
@click.pass_obj
def dataset_partition(state: CliState, dataset_rid: str, by: str,
                      parts: tuple[str, ...], seed: int) -> None:
    names, fractions = [], []
    for part in parts:
        name, sep, fraction = part.partition("=")
        if not sep:
            raise click.UsageError(f"--part must be name=fraction: {part}")
        names.append(name)
        fractions.append(fraction)
    spec = PartitionSpec.build(names, fractions, seed, by)
    children = partition_dataset(state.client, dataset_rid, spec)
    for child in children:
        click.echo(f"{child['name']}: {child['rid']} "
                   f"minid={child['minid']} members={len(child['members'])}")
        for warning in child.get("warnings") or []:
            click.echo(f"  warning: {warning}")


@dataset.command("download")
@click.argument("identifier")
@click.argument("dest", type=click.Path())
@click.pass_obj
def dataset_download(state: CliState, identifier: str, dest: str) -> None:
    path = download_dataset(state.cache(), identifier, Path(dest))
    click.echo(f"materialized {identifier} at {path}")


# ---------------------------------------------------------------------------
# identifiers and bags


@cli.group()
def minid() -> None:
    """Persistent identifier operations."""


@minid.command("mint")
@click.option("--title", required=True)
@click.option("--sha256", "content_sha256", required=True)
@click.option("--location", "locations", multiple=True, required=True)
@click.option("--length", type=int, default=None)
@click.pass_obj
def minid_mint(state: CliState, title: str, content_sha256: str,
               locations: tuple[str, ...], length: Optional[int]) -> None:
    record = state.client.minid_mint(title, content_sha256, list(locations),
                                     length)
    click.echo(record["identifier"])


@minid.command("resolve")
@click.argument("identifier")
@click.pass_obj
def minid_resolve(state: CliState, identifier: str) -> None:
    record = state.client.minid_resolve(identifier)
    click.echo(json.dumps(record, indent=2, sort_keys=True))


@cli.group()
def bag() -> None:
    """Bag inspection."""


@bag.command("validate")
@click.argument("bag_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--mode", type=click.Choice([bags.COMPLETE, bags.VALID]),
              default=bags.VALID, show_default=True)
def bag_validate(bag_dir: str, mode: str) -> int:
    report = bags.validate_bag(Path(bag_dir), mode=mode)
    for problem in report.problems:
        click.echo(f"{problem.code}: {problem.detail}")
    click.echo(report.summary)
    return 0 if report.ok else 1


# ---------------------------------------------------------------------------
# execution wrapping


@cli.command("run")
@click.option("--config", "config_file", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--workdir", default=None, type=click.Path(),
              help="Working directory for the run (default: a fresh one).")
@click.argument("command", nargs=-1, required=True)
@click.pass_obj
def run(state: CliState, config_file: str, workdir: Optional[str],
        command: tuple[str, ...]) -> int:
    try:
        doc = json.loads(Path(config_file).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config file is not valid JSON: {exc}")
    config = parse_execution_config(doc)
    session = MLSession(state.client, state.cache())
    if workdir is None:
        import tempfile

        workdir = tempfile.mkdtemp(prefix="fairlake-run-")
    handle = session.execution_init(config, Path(workdir))
    click.echo(f"execution {handle.rid}")
    click.echo(f"workdir {handle.workdir}")
    env = dict(os.environ)
    env.update({
        "FAIRLAKE_WORKDIR": str(handle.workdir),
        "FAIRLAKE_EXECUTION_RID": handle.rid,
        "FAIRLAKE_INPUTS": str(handle.workdir / "inputs"),
        "FAIRLAKE_OUTPUTS": str(handle.outputs_dir),
    })
    exit_code = 0
    try:
        try:
            with session.execution_scope(handle):
                proc = subprocess.run(list(command), cwd=handle.workdir,
                                      env=env)
                if proc.returncode != 0:
                    raise WorkloadFailed(
                        f"workload exited with code {proc.returncode}",
                        exit_code=proc.returncode)
        finally:
            report = session.execution_upload(handle)
            for item in report["uploaded"]:
                click.echo(f"uploaded {item['kind']} {item['type']}/"
                           f"{item['file']} -> {item['rid']}")
    except WorkloadFailed as exc:
        click.echo(f"workload failed: {exc}", err=True)
        exit_code = 1
    click.echo(f"status {handle.status}")
    return exit_code


# ---------------------------------------------------------------------------
# FAIR assessment


@cli.command("fair-check")
@click.option("--dataset", "dataset_minid", default=None,
              help="Scope the check to one dataset identifier.")
@click.pass_obj
def fair_check(state: CliState, dataset_minid: Optional[str]) -> None:
    dataset_rid = None
    cache = None
    if dataset_minid:
        rows, _ = state.client.query(
            "ml", "Dataset",
            filters=[f"Minid:eq:{json.dumps(dataset_minid)}"])
        if not rows:
            raise ConfigInvalid(
                f"no dataset is registered under {dataset_minid}")
        dataset_rid = rows[0]["rid"]
        cache = state.cache()
    report = fair.assess(state.client, cache, dataset_rid)
    click.echo(report.render_text())


# ---------------------------------------------------------------------------
# service


@cli.command("serve")
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--tokens", "tokens_file", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(data_dir: str, tokens_file: str, host: str, port: int) -> None:
    import uvicorn

    from .server import System, create_app

    system = System(Path(data_dir), Path(tokens_file))
    uvicorn.run(create_app(system), host=host, port=port)


def main(argv: Optional[list[str]] = None) -> int:
    try:
        rv = cli.main(args=argv, standalone_mode=False)
        return rv if isinstance(rv, int) else 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.ClickException as exc:
        exc.show()
        return 1
    except ConfigInvalid as exc:
        click.echo(json.dumps(exc.to_payload(), sort_keys=True), err=True)
        return 2
    except FairlakeError as exc:
        click.echo(json.dumps(exc.to_payload(), sort_keys=True), err=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
