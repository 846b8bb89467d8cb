import random

import pytest

from progsearch.registry import load_registry


TINY_DOC = {
    "types": ["ObjectSet", "Integer", "Boolean"],
    "answer_types": ["Integer", "Boolean"],
    "modules": [
        {"name": "scene", "inputs": [], "output": "ObjectSet"},
        {"name": "count", "inputs": [["ObjectSet"]], "output": "Integer"},
        {"name": "exist", "inputs": [["ObjectSet"]], "output": "Boolean"},
        {"name": "filter_red", "inputs": [["ObjectSet"]], "output": "ObjectSet"},
    ],
}


@pytest.fixture(scope="session")
def tiny_registry():
    """Four modules: scene/0, count/1, exist/1, filter_red/1."""
    return load_registry(TINY_DOC)


@pytest.fixture(scope="session")
def mw10():
    return load_registry("microworld10")


@pytest.fixture(scope="session")
def mw39():
    return load_registry("microworld39")


@pytest.fixture()
def rng():
    return random.Random(12345)


class StubPredictor:
    """Predictor double: fixed prediction, prescribed probabilities."""

    def __init__(self, prediction, probabilities=None, default=0.25):
        self._prediction = prediction
        self._probabilities = dict(probabilities or {})
        self._default = default

    def predict(self, question=None, registry=None):
        return self._prediction

    def probability(self, question, program, registry=None):
        return self._probabilities.get(program.key, self._default)

    def scorer(self, question, registry=None):
        outer = self

        class _Scorer:
            def probability(self, program):
                return outer.probability(question, program, registry)

            def predict(self, max_len=20):
                return outer._prediction

        return _Scorer()


@pytest.fixture()
def stub_predictor_factory():
    return StubPredictor
