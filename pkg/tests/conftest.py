import pathlib

import pytest

from kglf.kg import load_graph
from kglf.nel import load_dialogs

DATA = pathlib.Path(__file__).parent / "data"

TRIPLES = DATA / "minikg_triples.jsonl"
LABELS = DATA / "minikg_labels.jsonl"
MICRO_DIALOGS = DATA / "micro_dialogs.jsonl"


@pytest.fixture(scope="session")
def minikg():
    return load_graph(TRIPLES, LABELS)


@pytest.fixture(scope="session")
def micro_dialogs(minikg):
    return load_dialogs(MICRO_DIALOGS, minikg)


@pytest.fixture()
def data_dir():
    return DATA
