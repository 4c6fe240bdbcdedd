#!/usr/bin/env python3
"""Writes data/transcripts/<task>/{icl,no_icl}.json.

Each file holds ten variants; trial i of a suite replays variant i % 10.
A variant is either the task's correct plan or one with a typical flaw.
With --good-only DIR, writes single-variant files holding just the correct
plan for both modes (used by the tests).
"""
import argparse
import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "data" / "transcripts"

TASKS = {
    "insert_pen": {
        "scene": "A pen lies flat on the table. An empty pen holder stands to its right, behind it.",
        "objects": ["pen", "pen holder"],
        "steps": [
            "Move above the pen.",
            "Lower onto the pen and grasp it.",
            "Lift the pen.",
            "Turn the pen upright.",
            "Carry it above the pen holder.",
            "Lower it into the holder and release.",
            "Move the gripper up.",
        ],
        "good": [
            "opened, move to, above, pen, opened",
            "opened, move to, on, pen, closed",
            "closed, move to, up, , closed",
            "closed, rotate to, up, , closed",
            "closed, move to, above, pen holder, closed",
            "closed, move to, into, pen holder, opened",
            "opened, move to, up, , opened",
        ],
    },
    "clean_floor": {
        "scene": "A paper ball and a soda can lie on the floor. A trash bin stands to the right.",
        "objects": ["paper ball", "soda can", "trash bin"],
        "steps": [
            "Pick up the paper ball.",
            "Drop it into the trash bin.",
            "Pick up the soda can.",
            "Drop it into the trash bin.",
        ],
        "good": [
            "opened, move to, above, paper ball, opened",
            "opened, move to, on, paper ball, closed",
            "closed, move to, up, , closed",
            "closed, move to, above, trash bin, closed",
            "closed, move to, into, trash bin, opened",
            "opened, move to, up, , opened",
            "opened, move to, above, soda can, opened",
            "opened, move to, on, soda can, closed",
            "closed, move to, up, , closed",
            "closed, move to, above, trash bin, closed",
            "closed, move to, into, trash bin, opened",
            "opened, move to, up, , opened",
        ],
    },
    "open_drawer": {
        "scene": "A closed cabinet drawer with a handle on its front faces the robot.",
        "objects": ["drawer handle"],
        "steps": [
            "Reach the front of the drawer handle and grasp it.",
            "Pull the handle toward the robot.",
            "Keep pulling, then release.",
        ],
        "good": [
            "opened, move to, front on, drawer handle, closed",
            "closed, move to, backward, , closed",
            "closed, move to, backward, , opened",
        ],
    },
    "make_coffee": {
        "scene": "A mug stands on the table to the left of a coffee machine. The machine has a drip tray "
                 "in front and a start button on its front face.",
        "objects": ["mug", "drip tray", "start button"],
        "steps": [
            "Pick up the mug.",
            "Place it on the drip tray.",
            "Press the start button.",
            "Move back.",
        ],
        "good": [
            "opened, move to, above, mug, opened",
            "opened, move to, on, mug, closed",
            "closed, move to, up, , closed",
            "closed, move to, above, drip tray, closed",
            "closed, move to, on, drip tray, opened",
            "opened, move to, up, , opened",
            "opened, move to, front on, start button, closed",
            "closed, move to, backward, , opened",
        ],
    },
}

# Flawed plans; "repair" is what the model answers to the repair prompt.
FLAWS = {
    "insert_pen": {
        "no_rotation": [l for i, l in enumerate(TASKS["insert_pen"]["good"]) if i != 3],
        "drop_flat": [
            "opened, move to, above, pen, opened",
            "opened, move to, on, pen, closed",
            "closed, move to, up, , closed",
            "closed, move to, above, pen holder, opened",
        ],
        "unknown_object": [l.replace("pen holder", "pen cup") for l in TASKS["insert_pen"]["good"]],
        "broken_chain": [
            "opened, move to, above, pen, opened",
            "opened, move to, on, pen, closed",
            "opened, move to, up, , closed",
            "closed, move to, into, pen holder, opened",
        ],
        "redundant_down": [
            "opened, move to, above, pen, opened",
            "opened, move to, on, pen, closed",
            "closed, move to, down, , closed",
            "closed, move to, above, pen holder, closed",
            "closed, move to, into, pen holder, opened",
        ],
    },
    "clean_floor": {
        "one_item": TASKS["clean_floor"]["good"][:6],
        "wrong_target": TASKS["clean_floor"]["good"][:6] + [
            "opened, move to, above, soda can, opened",
            "opened, move to, on, soda can, closed",
            "closed, move to, up, , closed",
            "closed, move to, forward, , opened",
        ],
        "unknown_object": [l.replace("trash bin", "garbage can") for l in TASKS["clean_floor"]["good"]],
        "broken_chain": [
            "opened, move to, above, paper ball, opened",
            "opened, move to, on, paper ball, closed",
            "opened, move to, above, trash bin, opened",
        ],
        "redundant_down": [
            "opened, move to, above, paper ball, opened",
            "opened, move to, on, paper ball, closed",
            "closed, move to, down, , closed",
        ] + TASKS["clean_floor"]["good"][3:],
    },
    "open_drawer": {
        "single_pull": [
            "opened, move to, front on, drawer handle, closed",
            "closed, move to, backward, , opened",
        ],
        "push": [
            "opened, move to, front on, drawer handle, closed",
            "closed, move to, forward, , closed",
            "closed, move to, backward, , opened",
        ],
        "unknown_object": [l.replace("drawer handle", "drawer") for l in TASKS["open_drawer"]["good"]],
        "broken_chain": [
            "opened, move to, front on, drawer handle, closed",
            "opened, move to, backward, , opened",
        ],
        "no_grasp": [
            "opened, move to, above, drawer handle, closed",
            "closed, move to, backward, , closed",
            "closed, move to, backward, , opened",
        ],
    },
    "make_coffee": {
        "no_press": TASKS["make_coffee"]["good"][:6],
        "mug_left_behind": [
            "opened, move to, front on, start button, closed",
            "closed, move to, backward, , opened",
        ],
        "unknown_object": [l.replace("start button", "power switch") for l in TASKS["make_coffee"]["good"]],
        "broken_chain": [
            "opened, move to, above, mug, opened",
            "opened, move to, on, mug, closed",
            "opened, move to, above, drip tray, opened",
        ],
        "redundant_down": [
            "opened, move to, above, mug, opened",
            "opened, move to, on, mug, closed",
            "closed, move to, down, , closed",
        ] + TASKS["make_coffee"]["good"][3:],
    },
}

# Variant order per file; "good" marks the correct plan.
ORDER = {
    ("insert_pen", "no_icl"): ["no_rotation", "drop_flat", "unknown_object", "good", "broken_chain",
                               "redundant_down", "no_rotation", "missing_reply", "drop_flat", "unknown_object"],
    ("insert_pen", "icl"): ["good", "no_rotation", "good", "drop_flat", "good",
                            "redundant_down", "good", "no_rotation", "unknown_object", "broken_chain"],
    ("clean_floor", "no_icl"): ["one_item", "unknown_object", "wrong_target", "broken_chain", "good",
                                "redundant_down", "one_item", "unknown_object", "missing_reply", "wrong_target"],
    ("clean_floor", "icl"): ["good", "good", "one_item", "good", "good",
                             "good", "good", "redundant_down", "good", "good"],
    ("open_drawer", "no_icl"): ["single_pull", "good", "push", "unknown_object", "no_grasp",
                                "broken_chain", "good", "single_pull", "push", "missing_reply"],
    ("open_drawer", "icl"): ["good", "single_pull", "push", "good", "no_grasp",
                             "single_pull", "good", "unknown_object", "push", "single_pull"],
    ("make_coffee", "no_icl"): ["no_press", "mug_left_behind", "unknown_object", "redundant_down", "good",
                                "broken_chain", "no_press", "missing_reply", "mug_left_behind", "unknown_object"],
    ("make_coffee", "icl"): ["good", "no_press", "redundant_down", "mug_left_behind", "good",
                             "no_press", "unknown_object", "mug_left_behind", "broken_chain", "no_press"],
}


def fenced(lines):
    return "Meta-actions:\n```meta-actions\n" + "\n".join(lines) + "\n```"


def variant(task, kind):
    t = TASKS[task]
    plan = t["good"] if kind in ("good", "missing_reply") else FLAWS[task][kind]
    records = [
        {"stage": 1, "reply": t["scene"]},
        {"stage": 2, "reply": "Relevant objects:\n" + "\n".join("- " + o for o in t["objects"])},
        {"stage": 3, "reply": "\n".join(f"{i + 1}. {s}" for i, s in enumerate(t["steps"]))},
    ]
    if kind != "missing_reply":
        records.append({"stage": 4, "reply": "The sequence is reasonable. Final steps:\n" + records[2]["reply"]})
        records.append({"stage": 5, "reply": fenced(plan)})
    if kind == "broken_chain":
        records.append({"stage": "repair", "reply": fenced(plan)})
    for i, line in enumerate(plan):
        if line.startswith("closed, rotate to, up, ,"):
            records.append({"stage": "locate", "action": i, "reply": "rotate 0 1 0 90"})
    return {"label": kind, "records": records}


def write(out, task, mode, order):
    doc = {
        "version": 1,
        "label": f"scripted-{task}-{mode}",
        "defaults": {"select": "0", "retrieve": "1", "locate": "default"},
        "variants": [variant(task, k) for k in order],
    }
    path = out / task / f"{mode}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1) + "\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--good-only", type=pathlib.Path)
    args = ap.parse_args()
    if args.good_only:
        for task, mode in ORDER:
            write(args.good_only, task, mode, ["good"])
        return
    for (task, mode), order in ORDER.items():
        write(OUT, task, mode, order)


if __name__ == "__main__":
    main()
