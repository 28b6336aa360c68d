import pathlib
import sys

import pytest

SRC = pathlib.Path(__file__).resolve().parents[1] / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from ontoparse.ontology import load_ontology  # noqa: E402

DATA = SRC / "ontoparse" / "data"


@pytest.fixture(scope="session")
def restaurant():
    return load_ontology(DATA / "restaurant.json")


@pytest.fixture(scope="session")
def bistro():
    return load_ontology(DATA / "toy_bistro.json")


@pytest.fixture(scope="session")
def library():
    return load_ontology(DATA / "toy_library.json")
