"""HTTP surface bundling the catalog, object store, and minid registry.

One FastAPI app per data directory.  Every request authenticates a bearer
token to a principal; every error is a serialized FairlakeError the client
re-raises as the same class.  Entity responses share the envelope
{"data": [...], "count": n, "model_version": v}.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path
from typing import Callable, Optional

from fastapi import Depends, FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .authz import Principal, TokenRegistry
from .catalog import Catalog, QuerySpec, parse_filter, parse_join
from .errors import FairlakeError, InvalidQuery, InvalidToken
from .minids import MinidRegistry
from .store import ObjectStore


class System:
    """The three persistent components rooted in one data directory."""

    def __init__(self, data_dir: Path, tokens_path: Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.catalog = Catalog(self.data_dir / "catalog.jsonl")
        self.store = ObjectStore(self.data_dir / "store")
        self.minids = MinidRegistry(self.data_dir / "minids.jsonl")
        self.tokens = TokenRegistry.load(tokens_path)


def _split_type(spec: str) -> tuple[str, str]:
    schema, sep, type_name = spec.partition(":")
    if not sep or not schema or not type_name:
        raise InvalidQuery(f"entity path must be schema:Type, got {spec!r}")
    return schema, type_name


def create_app(system: System) -> FastAPI:
    app = FastAPI(title="fairlake", docs_url=None, redoc_url=None)
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"], expose_headers=["*"])
    catalog, store, minids = system.catalog, system.store, system.minids

    @app.exception_handler(FairlakeError)
    async def _fairlake_error(_request: Request, exc: FairlakeError):
        return JSONResponse(status_code=exc.http_status, content=exc.to_payload())

    def principal(request: Request) -> Principal:
        header = request.headers.get("Authorization", "")
        scheme, _, token = header.partition(" ")
        if scheme.lower() != "bearer" or not token:
            raise InvalidToken("missing bearer token")
        return system.tokens.authenticate(token.strip())

    def envelope(docs: list[dict], count: Optional[int] = None) -> dict:
        return {"data": docs, "count": len(docs) if count is None else count,
                "model_version": catalog.model_version}

    # -- identity and model --------------------------------------------------

    @app.get("/me")
    async def me(who: Principal = Depends(principal)):
        return envelope([{"id": who.id, "display_name": who.display_name,
                          "roles": sorted(who.roles)}])

    @app.post("/catalog")
    async def bootstrap(request: Request, who: Principal = Depends(principal)):
        body = await request.json()
        schema = catalog.bootstrap(body["prefix"], who,
                                   annotations=body.get("annotations"))
        return envelope([schema.to_doc()])

    @app.get("/model")
    async def model(_who: Principal = Depends(principal)):
        return catalog.introspect_model()

    @app.post("/schema")
    async def define_schema(request: Request, who: Principal = Depends(principal)):
        schema = catalog.define_domain_schema(await request.json(), who)
        return envelope([schema.to_doc()])

    @app.post("/schema/evolve")
    async def evolve_schema(request: Request, who: Principal = Depends(principal)):
        body = await request.json()
        catalog.evolve_schema(body.get("changes", []), who)
        return envelope([])

    @app.post("/annotation")
    async def set_annotation(request: Request, who: Principal = Depends(principal)):
        body = await request.json()
        catalog.set_annotation(body["key"], body["value"], who)
        return envelope([])

    # -- records ---------------------------------------------------------------

    @app.post("/entity/{spec}")
    async def insert(spec: str, request: Request, who: Principal = Depends(principal)):
        schema, type_name = _split_type(spec)
        body = await request.json()
        rows = body["records"] if isinstance(body, dict) else body
        records = catalog.insert_records(schema, type_name, rows, who)
        return envelope([r.to_doc() for r in records])

    @app.put("/entity/{spec}")
    async def update(spec: str, request: Request, who: Principal = Depends(principal)):
        schema, type_name = _split_type(spec)
        body = await request.json()
        updates = body["records"] if "records" in body else [body]
        records = catalog.update_records(schema, type_name, updates, who)
        return envelope([r.to_doc() for r in records])

    @app.delete("/entity/{spec}")
    async def delete(spec: str, request: Request, rid: Optional[str] = None,
                     revision: Optional[int] = None,
                     who: Principal = Depends(principal)):
        schema, type_name = _split_type(spec)
        if rid is not None:
            deletes = [{"rid": rid, "revision": revision}]
        else:
            body = await request.json()
            deletes = body["records"] if "records" in body else [body]
        records = catalog.delete_records(schema, type_name, deletes, who)
        return envelope([r.to_doc() for r in records])

    @app.get("/entity/{spec}")
    async def query(spec: str, request: Request, who: Principal = Depends(principal)):
        schema, type_name = _split_type(spec)
        params = request.query_params
        filters = [parse_filter(f) for f in params.getlist("filter")]
        joins = []
        for j in params.getlist("join"):
            joins.extend(parse_join(j, schema))
        projection = None
        if "projection" in params:
            projection = [p for p in params["projection"].split(",") if p]
        try:
            limit = int(params["limit"]) if "limit" in params else None
            offset = int(params.get("offset", 0))
        except ValueError:
            raise InvalidQuery("limit and offset must be integers")
        qspec = QuerySpec(schema=schema, entity_type=type_name, filters=filters,
                          joins=joins, projection=projection, limit=limit,
                          offset=offset)
        page, count = catalog.query(who, qspec)
        return envelope([r.to_doc() for r in page], count=count)

    @app.get("/entity/{spec}/{rid}")
    async def get_one(spec: str, rid: str, who: Principal = Depends(principal)):
        schema, type_name = _split_type(spec)
        record = catalog.get_record(schema, type_name, rid, who)
        return envelope([record.to_doc()])

    # -- object store -------------------------------------------------------------

    @app.post("/store-namespace")
    async def make_namespace(request: Request, who: Principal = Depends(principal)):
        body = await request.json()
        path = store.create_namespace(body["path"], who)
        return {"path": path}

    @app.put("/store/{path:path}")
    async def put_object(path: str, request: Request,
                         who: Principal = Depends(principal)):
        data = await request.body()
        version = store.put_object(
            "/" + path, data, who,
            declared_sha256=request.headers.get("Content-SHA256"),
            content_type=request.headers.get("Content-Type",
                                             "application/octet-stream"))
        return JSONResponse(version.to_doc(), headers={
            "X-Version-Id": version.version_id,
            "X-Content-SHA256": version.content_sha256,
            "X-Content-Length": str(version.length),
        })

    @app.get("/store/{path:path}")
    async def get_object(path: str, version: Optional[str] = None,
                         who: Principal = Depends(principal)):
        meta, data = store.get_object("/" + path, who, version_id=version)
        return Response(content=data, media_type=meta.content_type, headers={
            "X-Version-Id": meta.version_id,
            "X-Content-SHA256": meta.content_sha256,
        })

    @app.get("/store-meta/{path:path}")
    async def object_meta(path: str, _who: Principal = Depends(principal)):
        versions = store.list_versions("/" + path)
        return {"versions": [v.to_doc() for v in versions]}

    @app.delete("/store/{path:path}")
    async def delete_object(path: str, version: str,
                            who: Principal = Depends(principal)):
        tombstone = store.delete_object("/" + path, version, who)
        return tombstone.to_doc()

    # -- minids ---------------------------------------------------------------------

    @app.post("/minid")
    async def mint_minid(request: Request, who: Principal = Depends(principal)):
        body = await request.json()
        record = minids.register(body["title"], body["content_sha256"],
                                 body["locations"], who, length=body.get("length"))
        return record.to_doc()

    @app.get("/minid/{identifier}")
    async def resolve_minid(identifier: str, _who: Principal = Depends(principal)):
        return minids.resolve(identifier).to_doc()

    @app.put("/minid/{identifier}/locations")
    async def update_minid(identifier: str, request: Request,
                           who: Principal = Depends(principal)):
        body = await request.json()
        return minids.update_locations(identifier, body["locations"], who).to_doc()

    @app.delete("/minid/{identifier}")
    async def tombstone_minid(identifier: str, who: Principal = Depends(principal)):
        return minids.tombstone(identifier, who).to_doc()

    return app


def serve_in_thread(app: FastAPI, host: str = "127.0.0.1",
                    port: int = 0) -> tuple[str, Callable[[], None]]:
    """Run the app on a background thread; returns (base_url, stop)."""
    import uvicorn

    config = uvicorn.Config(app, host=host, port=port, log_level="warning",
                            access_log=False)
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start within 15s")
        if not thread.is_alive():
            raise RuntimeError("server thread died during startup")
        time.sleep(0.01)
    bound_port = server.servers[0].sockets[0].getsockname()[1]

    def stop() -> None:
        server.should_exit = True
        thread.join(timeout=10)

    return f"http://{host}:{bound_port}", stop
