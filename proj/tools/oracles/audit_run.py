"""Audits a finished run over an oracle corpus against the 3D ground truth.

usage: audit_run.py <corpus_dir> [run_subdir]

Reads gt.jsonl and scenes.jsonl from the corpus, the stage2 scenes and qa
shards from the run, maps extracted object ids back to truth objects by exact
box match and checks every relational answer. Prints per-task counts; exits 1
on any contradiction.
"""
import glob
import json
import os
import sys
from collections import Counter, defaultdict


def load_jsonl(pattern):
    out = []
    for path in sorted(glob.glob(pattern)):
        with open(path, encoding="utf-8") as f:
            out.extend(json.loads(line) for line in f if line.strip())
    return out


def main():
    corpus = sys.argv[1]
    run = os.path.join(corpus, sys.argv[2] if len(sys.argv) > 2 else "run")
    truth = {s["image"]["image_id"]: s for s in load_jsonl(os.path.join(corpus, "scenes.jsonl"))}
    gt = {g["image_id"]: g["ground_truth"] for g in load_jsonl(os.path.join(corpus, "gt.jsonl"))}
    extracted = {s["image"]["image_id"]: s for s in load_jsonl(os.path.join(run, "stage2_scenes", "shard-*.jsonl"))}
    records = load_jsonl(os.path.join(run, "qa", "shard-*.jsonl"))

    def truth_id(image_id, object_id):
        obj = next(o for o in extracted[image_id]["objects"] if o["object_id"] == object_id)
        for t in truth[image_id]["objects"]:
            if t["bbox"] == obj["bbox"] and t["category"] == obj["category"]:
                return t["object_id"]
        raise KeyError((image_id, object_id))

    problems = []
    counts = Counter()
    seen = set()
    for r in records:
        task, image_id = r["task"], r["image"]["image_id"]
        counts[task] += 1
        if not r["verified"]:
            problems.append("unverified " + r["qa_id"])
        if r["qa_id"] in seen:
            problems.append("duplicate " + r["qa_id"])
        seen.add(r["qa_id"])
        g = gt[image_id]
        pairs = {(p["a"], p["b"]): p for p in g["pairs"]}
        if task == "counting":
            n = int(r["answer"])
            cat = r["qa_id"].rsplit("/", 1)[1]
            actual = sum(1 for o in extracted[image_id]["objects"] if o["category"] == cat)
            if n <= 1 or n != actual:
                problems.append("count %s: %d vs %d" % (r["qa_id"], n, actual))
        elif task in ("near_far", "left_right"):
            a, b = (truth_id(image_id, i) for i in r["object_ids"])
            p = pairs.get((min(a, b), max(a, b)))
            if p is None:
                problems.append("no truth pair for " + r["qa_id"])
                continue
            flipped = a > b
            if task == "near_far":
                if r["attributes"]["depth_class"] not in ("A", "B", "C"):
                    problems.append("class D emitted " + r["qa_id"])
                truth_near = p.get("near")
                claimed = "a" if r["attributes"]["relation"] == "a_nearer" else "b"
                if flipped:
                    claimed = "b" if claimed == "a" else "a"
                if truth_near is not None and truth_near != claimed:
                    problems.append("near/far contradiction " + r["qa_id"])
            else:
                truth_lr = p.get("left_right")
                claimed = r["attributes"]["relation"]
                if flipped:
                    claimed = {"left": "right", "right": "left"}[claimed]
                if truth_lr is not None and truth_lr != claimed:
                    problems.append("left/right contradiction " + r["qa_id"])
        elif task == "perspective":
            s, t = (truth_id(image_id, i) for i in r["object_ids"])
            want = [p for p in g["perspectives"] if p["subject"] == s and p["target"] == t]
            if want and want[0]["allocentric"] != r["answer"]:
                problems.append("perspective contradiction " + r["qa_id"])

    with open(os.path.join(run, "stats.json"), encoding="utf-8") as f:
        stats = json.load(f)
    per_task = defaultdict(int)
    for row in stats["emitted"].values():
        for k, v in row.items():
            per_task[k] += v
    for task, n in counts.items():
        if per_task[task] != n:
            problems.append("stats %s: %d vs recount %d" % (task, per_task[task], n))

    print("records:", len(records), dict(sorted(counts.items())))
    for p in problems:
        print("PROBLEM", p)
    sys.exit(1 if problems else 0)


if __name__ == "__main__":
    main()
