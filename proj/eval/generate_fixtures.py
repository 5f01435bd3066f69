# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes the labelled evaluation logs under eval/logs and eval/labels.json.

The step logs carry 51 steps over 8 tasks; the grounding logs carry one localization
call per labelled sample for each model profile. Counts are chosen so the published
aggregate rows fall out of the fold; nothing here stores a percentage.
"""

import hashlib
import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent

TASKS = {
    "task01": ("How to make pour-over coffee?", "R2R", [
        "Place the paper filter in the dripper", "Rinse the filter with hot water", "Grind the beans to medium coarseness",
        "Pour the grounds into the filter", "Pour water in slow circles", "Serve the coffee in a cup"]),
    "task02": ("How to fold a paper boat?", "V2R", [
        "Fold the paper in half from top to bottom", "Fold the top corners down to the center line",
        "Fold the bottom strips up on both sides", "Open the middle and flatten it into a square",
        "Fold the bottom corners up to the top", "Pull the sides apart to open the boat", "Shape the hull flat"]),
    "task03": ("How do I craft a wooden pickaxe in the game?", "V2V", [
        "Open the crafting table menu", "Drag three planks into the top row", "Drag two sticks into the middle column",
        "Collect the pickaxe from the result slot", "Move the pickaxe to the hotbar", "Close the crafting menu"]),
    "task04": ("How do I paint a sunset sky in the drawing app?", "R2V", [
        "Select the brush tool", "Pick the orange color from the palette", "Paint a horizontal stroke across the canvas",
        "Pick the purple color", "Paint the upper sky", "Blend the two colors with the smudge tool", "Save the picture"]),
    "task05": ("How to repot a small plant?", "R2R", [
        "Put soil in the new pot", "Squeeze the old pot to loosen the plant", "Lift the plant out by the base",
        "Set the plant in the new pot", "Fill the gaps with soil", "Water the plant"]),
    "task06": ("How to set a timer on the microwave?", "R2R", [
        "Open the microwave door", "Place the bowl in the center", "Close the door", "Press the timer button",
        "Turn the dial to two minutes", "Press start"]),
    "task07": ("How do I crop a photo in the editor?", "R2V", [
        "Open the photo from the file menu", "Select the crop tool", "Drag the top handle down", "Drag the side handle inward",
        "Rotate the frame slightly", "Press enter to apply", "Export the photo"]),
    "task08": ("How to tie a bowline knot?", "V2R", [
        "Make a small loop in the rope", "Pass the end up through the loop", "Wrap the end behind the standing part",
        "Pass the end back down through the loop", "Pull the knot tight", "Check the knot holds"]),
}

# Step-quality failures per metric; a step is correct overall only when it fails none.
FAILURES = {"textInstruction": 6, "visualType": 10, "keyComponent": 5, "imageRelevance": 12, "verification": 9}
FAULTY_STEPS = 13
# Guidance types present on each step: (steps using the type, steps where it was wrong).
GUIDANCE = {"targetConfigPreview": (13, 2), "motion": (24, 4), "staticObject": (38, 6), "action": (33, 5)}

# Localization samples: leaf type -> (calls, correct, mean latency in seconds).
GROUNDING = {
    "fast": {"tcp": (37, 30, 2.85), "translation": (9, 6, 2.81), "rotation": (2, 2, 3.65),
             "staticObject": (37, 20, 3.83), "tool": (42, 16, 4.65), "gesture": (20, 16, 2.68)},
    "strong": {"tcp": (11, 7, 20.83), "translation": (12, 10, 16.19), "rotation": (2, 2, 20.23),
               "staticObject": (31, 23, 23.29), "tool": (24, 16, 28.72), "gesture": (20, 14, 19.89)},
}


def event(seq, kind, payload):
    return {"seq": seq, "timestamp": float(seq), "kind": kind, "payload": payload}


def write_log(path, events):
    with open(path, "w") as out:
        for e in events:
            out.write(json.dumps(e, separators=(",", ":")) + "\n")


def step_logs(logs_dir):
    keys = []
    for session, (prompt, step_type, steps) in TASKS.items():
        plan_steps = [{"index": i, "id": i, "instruction": text, "check": "", "stepType": step_type,
                       "status": "Active" if i == 0 else "Pending", "parent": None, "skipped": False, "viz": None,
                       "label": str(i + 1)} for i, text in enumerate(steps)]
        events = [event(1, "SessionStarted", {"clientSeq": 1, "prompt": prompt}),
                  event(2, "PlanReady", {"goal": prompt, "steps": plan_steps, "activeIndex": 0, "flags": [], "done": False})]
        write_log(logs_dir / f"{session}.events.jsonl", events)
        keys += [(session, str(i + 1)) for i in range(len(steps))]
    return keys


def step_labels(keys):
    n = len(keys)
    assert n == 51, n
    labels = [{"session": s, "step": st, **{m: True for m in FAILURES}, "guidance": {}} for s, st in keys]
    faulty = list(range(n - FAULTY_STEPS, n))
    offset = 0
    for metric, count in FAILURES.items():
        for j in range(count):
            labels[faulty[(offset + j) % FAULTY_STEPS]][metric] = False
        offset += count
    assert all(any(not labels[i][m] for m in FAILURES) for i in faulty)
    for k, (name, (used, wrong)) in enumerate(GUIDANCE.items()):
        users = [(k * 7 + 5 * i) % n for i in range(n)]
        users = list(dict.fromkeys(users))[:used]
        for j, i in enumerate(users):
            labels[i]["guidance"][name] = j >= wrong
    return labels


def latencies(count, mean):
    # Symmetric spread around the mean, in whole hundredths.
    out = []
    for k in range(count // 2):
        d = round(0.07 * (k % 5 + 1), 2)
        out += [round(mean + d, 2), round(mean - d, 2)]
    if count % 2:
        out.append(mean)
    return out


def grounding_log(logs_dir, profile, leaves):
    rng = random.Random(f"grounding-{profile}")
    samples = []
    for leaf, (calls, correct, mean) in leaves.items():
        lat = latencies(calls, mean)
        samples += [(leaf, i < correct, lat[i]) for i in range(calls)]
    rng.shuffle(samples)
    session = f"grounding-{profile}"
    events = [event(1, "SessionStarted", {"clientSeq": 1, "prompt": "Localization benchmark"})]
    labels = []
    for call, (leaf, correct, latency) in enumerate(samples):
        kind = "RotationLocalize" if leaf == "rotation" else "TransformLocalize"
        digest = hashlib.sha256(f"{session}:{call}".encode()).hexdigest()
        events.append(event(len(events) + 1, "ModelCall", {"kind": kind, "contextHash": digest, "profile": profile, "latency": latency}))
        labels.append({"session": session, "call": call, "type": leaf, "correct": correct})
    write_log(logs_dir / f"{session}.events.jsonl", events)
    return labels


def main():
    logs_dir = HERE / "logs"
    logs_dir.mkdir(exist_ok=True)
    keys = step_logs(logs_dir)
    labels = {"steps": step_labels(keys), "localization": []}
    for profile, leaves in GROUNDING.items():
        labels["localization"] += grounding_log(logs_dir, profile, leaves)
    with open(HERE / "labels.json", "w") as out:
        json.dump(labels, out, indent=1)
        out.write("\n")


if __name__ == "__main__":
    main()
