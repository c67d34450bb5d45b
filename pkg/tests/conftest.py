import pytest

from resumepipe.backend import BackendConfig, ChatClient
from resumepipe.ingest import ingest_documents, load_bundled_corpus


@pytest.fixture(scope="session")
def bundled_docs():
    return load_bundled_corpus()


@pytest.fixture(scope="session")
def bundled_records(bundled_docs):
    return ingest_documents(bundled_docs)


@pytest.fixture
def mock_client():
    return ChatClient(BackendConfig(kind="mock"))
