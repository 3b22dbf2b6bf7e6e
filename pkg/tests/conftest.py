import pytest

from parcelfuzz.harness import build_manifest, manifest_fingerprints
from parcelfuzz.recorder import build_dependency_graph, record_session


@pytest.fixture(scope="session")
def corpus():
    """The full shipped scenario set, recorded once per test run."""
    return record_session(["all"])


@pytest.fixture(scope="session")
def graph(corpus):
    return build_dependency_graph(corpus)


@pytest.fixture(scope="session")
def manifest():
    return build_manifest()


@pytest.fixture(scope="session")
def manifest_fps(manifest):
    return manifest_fingerprints(manifest)
