import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from javafb.datagen import read_triplets
from javafb.taxonomy import load_reference_taxonomy, reference_taxonomy_path

REFERENCE_CORPUS = Path(__file__).parent.parent / "src" / "javafb" / "data" / "reference_corpus.jsonl"


@pytest.fixture(scope="session")
def taxonomy():
    return load_reference_taxonomy()


@pytest.fixture(scope="session")
def taxonomy_path():
    return reference_taxonomy_path()


@pytest.fixture(scope="session")
def reference_corpus():
    return read_triplets(REFERENCE_CORPUS)


@pytest.fixture()
def vehicle_car_response():
    fixture = Path(__file__).parent.parent / "src" / "javafb" / "data" / "fixtures" / "sample_triplet_response.txt"
    return fixture.read_text(encoding="utf-8")
