"""Content transfer with fetch accounting.

The cache layer needs to prove that repeat materializations perform zero
remote transfers, so every byte download is funneled through one Fetcher
whose counter tests can observe.  Identifier resolution (metadata lookup)
is not a content transfer and is not counted.
"""

from __future__ import annotations

from typing import Optional

from .client import FairlakeClient
from .errors import FetchFailed, UnresolvableMinid
from .minids import is_minid


class Fetcher:
    """Downloads bytes for http(s) URLs and minid: identifiers."""

    def __init__(self, client: FairlakeClient):
        self.client = client
        self.fetch_count = 0

    def resolve_locations(self, identifier: str) -> list[str]:
        record = self.client.minid_resolve(identifier)
        return list(record.get("locations", []))

    def fetch(self, url: str) -> bytes:
        if is_minid(url):
            return self._fetch_minid(url)
        if url.startswith("http://") or url.startswith("https://"):
            self.fetch_count += 1
            try:
                return self.client.fetch_url(url)
            except Exception as exc:
                raise FetchFailed(f"could not fetch {url}: {exc}", url=url)
        raise FetchFailed(f"unsupported URL scheme: {url}", url=url)

    def _fetch_minid(self, identifier: str) -> bytes:
        locations = self.resolve_locations(identifier)
        if not locations:
            raise UnresolvableMinid(
                f"{identifier} has no locations to fetch from",
                identifier=identifier)
        last_error: Optional[Exception] = None
        for url in locations:
            self.fetch_count += 1
            try:
                return self.client.fetch_url(url)
            except Exception as exc:
                last_error = exc
        raise FetchFailed(
            f"all locations for {identifier} failed: {last_error}",
            identifier=identifier)
