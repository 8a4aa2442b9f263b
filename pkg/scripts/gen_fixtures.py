#!/usr/bin/env python3
"""Regenerate the hand-parameterized instance fixtures.

Each domain follows the same layout: dedicated source and target locations per
movable, a bare start location, and 10 to 30 objects per instance. Run from
the repository root; writes under fixtures/.
"""

from __future__ import annotations

from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "fixtures"


def write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def gripper_instance(name: str, n: int, spare_rooms: int = 0) -> str:
    rooms = ["r0"] + [f"s{i}" for i in range(1, n + 1)] + [f"t{i}" for i in range(1, n + 1)]
    rooms += [f"x{i}" for i in range(1, spare_rooms + 1)]
    balls = [f"b{i}" for i in range(1, n + 1)]
    init = ["(at-robby r0)", "(free g1)", "(free g2)"]
    goal = []
    for i in range(1, n + 1):
        init.append(f"(at b{i} s{i})")
        init.append(f"(goal-at b{i} t{i})")
        goal.append(f"(at b{i} t{i})")
    return (
        f"(define (problem {name})\n"
        f"  (:domain gripper)\n"
        f"  (:objects {' '.join(rooms)} - room {' '.join(balls)} - ball g1 g2 - gripper)\n"
        f"  (:init {' '.join(init)})\n"
        f"  (:goal (and {' '.join(goal)})))\n"
    )


def ferry_instance(name: str, n: int, spare_locs: int = 0) -> str:
    locs = ["l0"] + [f"s{i}" for i in range(1, n + 1)] + [f"t{i}" for i in range(1, n + 1)]
    locs += [f"x{i}" for i in range(1, spare_locs + 1)]
    cars = [f"c{i}" for i in range(1, n + 1)]
    init = ["(at-ferry l0)", "(empty-ferry)"]
    goal = []
    for i in range(1, n + 1):
        init.append(f"(at c{i} s{i})")
        init.append(f"(goal-at c{i} t{i})")
        goal.append(f"(at c{i} t{i})")
    return (
        f"(define (problem {name})\n"
        f"  (:domain ferry)\n"
        f"  (:objects {' '.join(locs)} - location {' '.join(cars)} - car)\n"
        f"  (:init {' '.join(init)})\n"
        f"  (:goal (and {' '.join(goal)})))\n"
    )


def delivery_instance(name: str, n: int, spare_locs: int = 0, spare_papers: int = 0) -> str:
    locs = ["home"] + [f"loc{i}" for i in range(1, n + 1)]
    locs += [f"x{i}" for i in range(1, spare_locs + 1)]
    papers = [f"p{i}" for i in range(1, n + spare_papers + 1)]
    init = ["(at home)", "(is-home-base home)"]
    init += [f"(unpacked p{i})" for i in range(1, n + spare_papers + 1)]
    goal = []
    for i in range(1, n + 1):
        init.append(f"(wants-paper loc{i})")
        goal.append(f"(satisfied loc{i})")
    return (
        f"(define (problem {name})\n"
        f"  (:domain delivery)\n"
        f"  (:objects {' '.join(locs)} - loc {' '.join(papers)} - paper)\n"
        f"  (:init {' '.join(init)})\n"
        f"  (:goal (and {' '.join(goal)})))\n"
    )


def miconic_instance(name: str, n: int, spare_floors: int = 0) -> str:
    floors = ["f0"] + [f"o{i}" for i in range(1, n + 1)] + [f"d{i}" for i in range(1, n + 1)]
    floors += [f"x{i}" for i in range(1, spare_floors + 1)]
    passengers = [f"p{i}" for i in range(1, n + 1)]
    init = ["(lift-at f0)"]
    goal = []
    for i in range(1, n + 1):
        init.append(f"(origin p{i} o{i})")
        init.append(f"(destin p{i} d{i})")
        init.append(f"(waiting p{i})")
        goal.append(f"(served p{i})")
    return (
        f"(define (problem {name})\n"
        f"  (:domain miconic)\n"
        f"  (:objects {' '.join(floors)} - floor {' '.join(passengers)} - passenger)\n"
        f"  (:init {' '.join(init)})\n"
        f"  (:goal (and {' '.join(goal)})))\n"
    )


def heavy_instance(name: str, n: int, heaviest_first: bool = True) -> str:
    """Items i01..i<n>; weight order follows the name order unless flipped,
    which forces the refinement search to backtrack."""
    items = [f"i{k:02d}" for k in range(1, n + 1)]
    order = list(items) if heaviest_first else list(reversed(items))
    init = ["(box-empty)"] + [f"(unpacked {i})" for i in items]
    for hi in range(len(order)):
        for lo in range(hi + 1, len(order)):
            init.append(f"(heavier {order[hi]} {order[lo]})")
    goal = [f"(packed {i})" for i in items]
    return (
        f"(define (problem {name})\n"
        f"  (:domain heavy)\n"
        f"  (:objects {' '.join(items)} - item)\n"
        f"  (:init {' '.join(init)})\n"
        f"  (:goal (and {' '.join(goal)})))\n"
    )


def main() -> None:
    g = ROOT / "gripper"
    write(g / "training" / "train1.pddl", gripper_instance("gripper-train1", 2, spare_rooms=1))
    write(g / "training" / "train2.pddl", gripper_instance("gripper-train2", 3, spare_rooms=1))
    evals = [(2, 1), (3, 0), (3, 2), (4, 0), (4, 2), (5, 0), (6, 0), (7, 0), (8, 0), (9, 0)]
    for idx, (n, spare) in enumerate(evals, start=1):
        write(
            g / "evaluation" / f"eval{idx:02d}.pddl",
            gripper_instance(f"gripper-eval{idx:02d}", n, spare_rooms=spare),
        )

    f = ROOT / "ferry"
    write(f / "training" / "train1.pddl", ferry_instance("ferry-train1", 3))
    write(f / "training" / "train2.pddl", ferry_instance("ferry-train2", 4))
    write(f / "evaluation" / "eval01.pddl", ferry_instance("ferry-eval01", 5))
    write(f / "evaluation" / "eval02.pddl", ferry_instance("ferry-eval02", 8, spare_locs=2))

    d = ROOT / "delivery"
    write(d / "training" / "train1.pddl", delivery_instance("delivery-train1", 5))
    write(d / "training" / "train2.pddl", delivery_instance("delivery-train2", 6, spare_papers=1))
    write(d / "evaluation" / "eval01.pddl", delivery_instance("delivery-eval01", 7))
    write(d / "evaluation" / "eval02.pddl", delivery_instance("delivery-eval02", 9, spare_locs=2, spare_papers=2))

    m = ROOT / "miconic"
    write(m / "training" / "train1.pddl", miconic_instance("miconic-train1", 3))
    write(m / "training" / "train2.pddl", miconic_instance("miconic-train2", 4))
    write(m / "evaluation" / "eval01.pddl", miconic_instance("miconic-eval01", 5))
    write(m / "evaluation" / "eval02.pddl", miconic_instance("miconic-eval02", 9, spare_floors=2))

    h = ROOT / "heavy"
    write(h / "training" / "train1.pddl", heavy_instance("heavy-train1", 10))
    write(h / "training" / "train2.pddl", heavy_instance("heavy-train2", 10, heaviest_first=False))
    write(h / "evaluation" / "eval01.pddl", heavy_instance("heavy-eval01", 12))
    write(h / "evaluation" / "eval02.pddl", heavy_instance("heavy-eval02", 14, heaviest_first=False))


if __name__ == "__main__":
    main()
