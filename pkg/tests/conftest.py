from __future__ import annotations

import json
from pathlib import Path

import pytest

from absforge.pddl import parse_domain, parse_instance
from absforge.proposer import parse_abstraction_doc, validate_doc

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def gripper_domain():
    path = FIXTURES / "gripper" / "domain.pddl"
    return parse_domain(path.read_text(encoding="utf-8"), str(path))


def _instance(dom, rel: str):
    path = FIXTURES / "gripper" / rel
    return parse_instance(path.read_text(encoding="utf-8"), dom, str(path))


@pytest.fixture(scope="session")
def example1(gripper_domain):
    return _instance(gripper_domain, "special/example1.pddl")


@pytest.fixture(scope="session")
def oneball(gripper_domain):
    return _instance(gripper_domain, "special/oneball.pddl")


@pytest.fixture(scope="session")
def delivered(gripper_domain):
    return _instance(gripper_domain, "special/delivered.pddl")


@pytest.fixture(scope="session")
def training(gripper_domain):
    return [
        _instance(gripper_domain, "training/train1.pddl"),
        _instance(gripper_domain, "training/train2.pddl"),
    ]


@pytest.fixture(scope="session")
def reference_doc(gripper_domain):
    text = (FIXTURES / "gripper" / "reference.json").read_text(encoding="utf-8")
    return parse_abstraction_doc(text, gripper_domain)


@pytest.fixture(scope="session")
def reference_abstraction(reference_doc, gripper_domain):
    built = validate_doc(reference_doc, gripper_domain)
    assert hasattr(built, "qnp"), built
    return built


@pytest.fixture()
def reference_json() -> dict:
    return json.loads((FIXTURES / "gripper" / "reference.json").read_text(encoding="utf-8"))
