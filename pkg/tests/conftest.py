import json

import pytest

from bacurve.curve import parse_spectral_data
from bacurve.datasets import dataset_text


@pytest.fixture(scope="session")
def example1():
    return parse_spectral_data(dataset_text("example1"))


@pytest.fixture(scope="session")
def example2():
    return parse_spectral_data(dataset_text("example2"))


@pytest.fixture(scope="session")
def example3():
    return parse_spectral_data(dataset_text("example3"))


def example_doc(name: str) -> dict:
    return json.loads(dataset_text(name))


def with_lambda(name: str, lam: complex) -> dict:
    """Bundled document with conjugate-paired gluing constants and s re-solved."""
    doc = example_doc(name)
    doc["nodes"][0]["lambda"] = [lam.real, lam.imag]
    doc["nodes"][1]["lambda"] = [lam.real, -lam.imag]
    doc["parameters"]["s"] = "solve"
    return doc


def parse_doc(doc: dict):
    return parse_spectral_data(json.dumps(doc))
