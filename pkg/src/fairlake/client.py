"""Typed HTTP client for the fairlake service.

Error responses are deserialized back into the same exception classes the
server raised, so client code handles one exception hierarchy regardless of
whether the catalog is in-process or across the wire.
"""

from __future__ import annotations

import json
from typing import Any, Iterable, Optional

import httpx

from .errors import FairlakeError, from_payload


class FairlakeClient:
    def __init__(self, base_url: str, token: str, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self._http = httpx.Client(
            base_url=self.base_url, timeout=timeout,
            headers={"Authorization": f"Bearer {token}"})

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "FairlakeClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _request(self, method: str, path: str, **kwargs) -> httpx.Response:
        response = self._http.request(method, path, **kwargs)
        if response.status_code >= 400:
            try:
                payload = response.json()
            except json.JSONDecodeError:
                raise FairlakeError(
                    f"{method} {path} failed with HTTP {response.status_code}")
            raise from_payload(payload)
        return response

    # -- identity and model -----------------------------------------------------

    def whoami(self) -> dict:
        return self._request("GET", "/me").json()["data"][0]

    def bootstrap(self, prefix: str,
                  annotations: Optional[dict[str, str]] = None) -> dict:
        body = {"prefix": prefix, "annotations": annotations or {}}
        return self._request("POST", "/catalog", json=body).json()["data"][0]

    def get_model(self) -> dict:
        return self._request("GET", "/model").json()

    def define_schema(self, schema_doc: dict) -> dict:
        return self._request("POST", "/schema", json=schema_doc).json()["data"][0]

    def evolve_schema(self, changes: list[dict]) -> int:
        response = self._request("POST", "/schema/evolve", json={"changes": changes})
        return response.json()["model_version"]

    def set_annotation(self, key: str, value: str) -> None:
        self._request("POST", "/annotation", json={"key": key, "value": value})

    # -- records ------------------------------------------------------------------

    def insert(self, schema: str, type_name: str, rows: list[dict]) -> list[dict]:
        response = self._request("POST", f"/entity/{schema}:{type_name}",
                                 json={"records": rows})
        return response.json()["data"]

    def update(self, schema: str, type_name: str, rid: str, revision: int,
               values: Optional[dict] = None,
               release_state: Optional[str] = None) -> dict:
        body: dict[str, Any] = {"rid": rid, "revision": revision}
        if values is not None:
            body["values"] = values
        if release_state is not None:
            body["release_state"] = release_state
        response = self._request("PUT", f"/entity/{schema}:{type_name}", json=body)
        return response.json()["data"][0]

    def delete(self, schema: str, type_name: str, rid: str, revision: int) -> dict:
        response = self._request("DELETE", f"/entity/{schema}:{type_name}",
                                 params={"rid": rid, "revision": revision})
        return response.json()["data"][0]

    def query(self, schema: str, type_name: str,
              filters: Optional[Iterable[str]] = None,
              join: Optional[str] = None,
              limit: Optional[int] = None, offset: Optional[int] = None,
              projection: Optional[Iterable[str]] = None) -> tuple[list[dict], int]:
        params: list[tuple[str, str]] = [("filter", f) for f in (filters or [])]
        if join:
            params.append(("join", join))
        if limit is not None:
            params.append(("limit", str(limit)))
        if offset is not None:
            params.append(("offset", str(offset)))
        if projection:
            params.append(("projection", ",".join(projection)))
        payload = self._request("GET", f"/entity/{schema}:{type_name}",
                                params=params).json()
        return payload["data"], payload["count"]

    def get(self, schema: str, type_name: str, rid: str) -> dict:
        response = self._request("GET", f"/entity/{schema}:{type_name}/{rid}")
        return response.json()["data"][0]

    def add_term(self, schema: str, vocab: str, name: str,
                 synonyms: Optional[list[str]] = None,
                 description: Optional[str] = None) -> dict:
        row = {"Name": name, "Synonyms": synonyms or [],
               "Description": description}
        return self.insert(schema, vocab, [row])[0]

    def find_term(self, schema: str, vocab: str, name: str) -> Optional[dict]:
        rows, _ = self.query(schema, vocab, filters=[f"Name:eq:{json.dumps(name)}"])
        return rows[0] if rows else None

    def ensure_term(self, schema: str, vocab: str, name: str,
                    description: Optional[str] = None) -> dict:
        existing = self.find_term(schema, vocab, name)
        if existing is not None:
            return existing
        return self.add_term(schema, vocab, name, description=description)

    # -- object store ----------------------------------------------------------------

    def store_mkdir(self, path: str) -> None:
        self._request("POST", "/store-namespace", json={"path": path})

    def ensure_namespace(self, path: str) -> None:
        segments = [s for s in path.strip("/").split("/") if s]
        for i in range(1, len(segments) + 1):
            self.store_mkdir("/" + "/".join(segments[:i]))

    def store_put(self, path: str, data: bytes, content_sha256: Optional[str] = None,
                  content_type: str = "application/octet-stream") -> dict:
        headers = {"Content-Type": content_type}
        if content_sha256:
            headers["Content-SHA256"] = content_sha256
        response = self._request("PUT", f"/store/{path.lstrip('/')}",
                                 content=data, headers=headers)
        return response.json()

    def store_get(self, path: str, version: Optional[str] = None) -> tuple[dict, bytes]:
        params = {"version": version} if version else None
        response = self._request("GET", f"/store/{path.lstrip('/')}", params=params)
        meta = {"version_id": response.headers.get("X-Version-Id"),
                "content_sha256": response.headers.get("X-Content-SHA256")}
        return meta, response.content

    def store_meta(self, path: str) -> list[dict]:
        response = self._request("GET", f"/store-meta/{path.lstrip('/')}")
        return response.json()["versions"]

    def store_delete(self, path: str, version: str) -> dict:
        return self._request("DELETE", f"/store/{path.lstrip('/')}",
                             params={"version": version}).json()

    def store_url(self, path: str, version: Optional[str] = None) -> str:
        url = f"{self.base_url}/store/{path.lstrip('/')}"
        return f"{url}?version={version}" if version else url

    def fetch_url(self, url: str) -> bytes:
        """GET an absolute URL, reusing this client's auth when it points at
        the same service."""
        if url.startswith(self.base_url + "/"):
            return self._request("GET", url[len(self.base_url):]).content
        response = httpx.get(url, timeout=60.0, follow_redirects=True)
        response.raise_for_status()
        return response.content

    # -- minids ------------------------------------------------------------------------

    def minid_mint(self, title: str, content_sha256: str, locations: list[str],
                   length: Optional[int] = None) -> dict:
        body = {"title": title, "content_sha256": content_sha256,
                "locations": locations, "length": length}
        return self._request("POST", "/minid", json=body).json()

    def minid_resolve(self, identifier: str) -> dict:
        return self._request("GET", f"/minid/{identifier}").json()

    def minid_update_locations(self, identifier: str, locations: list[str]) -> dict:
        return self._request("PUT", f"/minid/{identifier}/locations",
                             json={"locations": locations}).json()

    def minid_tombstone(self, identifier: str) -> dict:
        return self._request("DELETE", f"/minid/{identifier}").json()
