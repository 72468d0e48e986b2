import pytest

from fairlake.client import FairlakeClient
from fairlake.datasets import BagCache
from fairlake.examples import write_tokens
from fairlake.server import System, create_app, serve_in_thread
from fairlake.transfer import Fetcher


class Service:
    def __init__(self, tmp_path):
        self.tmp = tmp_path
        self.tokens_path = write_tokens(tmp_path / "tokens.json")
        self.data_dir = tmp_path / "data"
        self.system = System(self.data_dir, self.tokens_path)
        self.base, self._stop = serve_in_thread(create_app(self.system))
        self.curator = FairlakeClient(self.base, "tk-curator-carol")
        self.alice = FairlakeClient(self.base, "tk-writer-alice")
        self.wendy = FairlakeClient(self.base, "tk-writer-wendy")
        self.bob = FairlakeClient(self.base, "tk-reader-bob")

    def client_for(self, token: str) -> FairlakeClient:
        return FairlakeClient(self.base, token)

    def cache(self, client=None, subdir="cache") -> BagCache:
        client = client or self.curator
        return BagCache(self.tmp / subdir, Fetcher(client))

    def stop(self):
        for client in (self.curator, self.alice, self.wendy, self.bob):
            client.close()
        self._stop()


@pytest.fixture
def service(tmp_path):
    svc = Service(tmp_path)
    yield svc
    svc.stop()


@pytest.fixture
def eye_service(tmp_path):
    from fairlake.examples import seed_eye_exam

    svc = Service(tmp_path)
    svc.seed = seed_eye_exam(svc.curator, subjects=5)
    yield svc
    svc.stop()
