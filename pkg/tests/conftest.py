from fractions import Fraction as F
from pathlib import Path

import pytest

from pdpomdp.model import normalize, redirect_belief, validate
from pdpomdp.modelio import parse_document

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def corpus_path(name):
    return CORPUS / f"{name}.pdp"


def load(name):
    return parse_document(corpus_path(name).read_text())


def load_normalized(name):
    doc = load(name)
    nm = normalize(doc.model, doc.targets)
    return doc, nm, redirect_belief(nm, doc.init)


def build(states, actions, observations, trans):
    return validate(
        {"states": states, "actions": actions, "observations": observations, "trans": trans}
    )


def scenario2_gadget():
    """q1 loops on o1; q2 leaks to q3 on o2; q3 absorbing."""
    return build(
        ["q1", "q2", "q3"],
        ["a"],
        ["o1", "o2"],
        {
            ("q1", "a"): [("o1", "q1", 1)],
            ("q2", "a"): [("o1", "q2", F(1, 2)), ("o2", "q3", F(1, 2))],
            ("q3", "a"): [("o1", "q3", 1)],
        },
    )


@pytest.fixture
def gadget2():
    return scenario2_gadget()


@pytest.fixture
def scenario1():
    return load_normalized("scenario1")
