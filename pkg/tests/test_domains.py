"""Oracle tests for the non-gripper fixture corpus: each committed reference
abstraction must survive the staged checks and refine on its evaluation
instances; spanner and forest are pinned negative fixtures."""

from __future__ import annotations

import pytest

from absforge.harness import evaluate_abstraction
from absforge.pddl import parse_domain, parse_instance, validate_plan
from absforge.pipeline import Stage, run_pipeline
from absforge.proposer import parse_abstraction_doc, validate_doc
from conftest import FIXTURES

POSITIVE = ["ferry", "delivery", "miconic", "heavy"]


def load(name: str, abstraction: str):
    root = FIXTURES / name
    dom = parse_domain((root / "domain.pddl").read_text(), f"{name}.pddl")
    doc = parse_abstraction_doc((root / abstraction).read_text(), dom)
    built = validate_doc(doc, dom)
    assert hasattr(built, "qnp"), getattr(built, "payload", None)
    return root, dom, built


def instances(root, dom, sub: str):
    return [
        parse_instance(p.read_text(), dom, str(p))
        for p in sorted((root / sub).glob("*.pddl"))
    ]


@pytest.mark.parametrize("name", POSITIVE)
def test_reference_accepted_on_training(name):
    root, dom, built = load(name, "reference.json")
    training = instances(root, dom, "training")
    assert len(training) == 2
    outcome = run_pipeline(built, training)
    assert outcome.accepted, outcome.report and outcome.report.to_json_dict()
    for inst in training:
        assert validate_plan(inst, outcome.plans[inst.name]) == (True, None)


@pytest.mark.parametrize("name", POSITIVE)
def test_reference_covers_evaluation(name):
    root, dom, built = load(name, "reference.json")
    outcome = run_pipeline(built, instances(root, dom, "training"))
    evals = instances(root, dom, "evaluation")
    coverage, details = evaluate_abstraction(built, outcome.policy, evals)
    assert coverage == 1.0, details


@pytest.mark.parametrize("name", POSITIVE)
def test_fixture_instances_within_object_budget(name):
    root = FIXTURES / name
    dom = parse_domain((root / "domain.pddl").read_text())
    for sub in ("training", "evaluation"):
        for inst in instances(root, dom, sub):
            assert 10 <= len(inst.objects) <= 30, inst.name


def test_heavy_requires_backtracking():
    # train2 names the heaviest item last, so the first packing choice the
    # search tries is wrong and it must back out
    root, dom, built = load("heavy", "reference.json")
    inst = [
        i for i in instances(root, dom, "training") if i.name == "heavy-train2"
    ][0]
    outcome = run_pipeline(built, [inst])
    assert outcome.accepted
    plan = outcome.plans[inst.name]
    assert plan.steps[0].args[0] == "i10"  # heaviest item, despite sorting last


def test_spanner_negative_fixture():
    root, dom, built = load("spanner", "best_effort.json")
    inst = parse_instance((root / "instance1.pddl").read_text(), dom)
    outcome = run_pipeline(built, [inst])
    assert not outcome.accepted
    assert outcome.report.stage is Stage.HLPRC_NO_REFINEMENT


def test_forest_negative_fixture():
    root, dom, built = load("forest", "best_effort.json")
    inst = parse_instance((root / "instance1.pddl").read_text(), dom)
    outcome = run_pipeline(built, [inst])
    assert not outcome.accepted
    assert outcome.report.stage is Stage.HLPRC_NO_REFINEMENT
    # the blocked action is the single-step walk that should have been a path
    assert outcome.report.payload["hl_action"] == "Step-To-Goal"
