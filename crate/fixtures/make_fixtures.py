"""Build the synthetic fixture corpora and their golden conflict subsets.

The golden lists are computed here by a direct recount that shares no code
with the Rust implementation. Run from the repository root:

    python3 fixtures/make_fixtures.py
"""

import json
import random
from collections import Counter, defaultdict
from pathlib import Path

ROOT = Path(__file__).resolve().parent
RELATIONS = ["before", "after", "equal", "vague"]
THRESHOLDS = {"before": 0.3, "after": 0.3, "equal": 0.1}

# lemma -> (surface, POS)
VERBS = {
    "say": ("said", "VBD"),
    "tell": ("told", "VBD"),
    "offer": ("offer", "VB"),
    "attack": ("attacked", "VBD"),
    "die": ("died", "VBD"),
    "win": ("won", "VBD"),
    "celebrate": ("celebrating", "VBG"),
    "sign": ("signed", "VBN"),
    "approve": ("approve", "VB"),
    "announce": ("announces", "VBZ"),
    "leave": ("leave", "VBP"),
    "meet": ("meeting", "NN"),
}

# (lemma1, lemma2, preferred relation)
PAIRS = [
    ("say", "offer", "after"),
    ("tell", "offer", "before"),
    ("attack", "die", "before"),
    ("win", "celebrate", "before"),
    ("sign", "approve", "after"),
    ("announce", "leave", "equal"),
    ("say", "meet", "after"),
    ("tell", "leave", "vague"),
]

DEPS = ["ccomp", "xcomp", "advcl", "conj", None]
FILLER = ["Officials", "the", "deal", "and", "then", "quietly", "soon", "."]


def mention(surface, lemma, pos, tokens, index):
    start = sum(len(t) + 1 for t in tokens[:index])
    return {
        "surface": surface,
        "lemma": lemma,
        "token_index": index,
        "char_start": start,
        "char_end": start + len(surface),
        "pos_tag": pos,
        "sentence_index": 0,
    }


def make_pair(rng, idx, prefix):
    l1, l2, pref = rng.choice(PAIRS)
    gold = pref if rng.random() < 0.6 else rng.choice(RELATIONS)
    s1, p1 = VERBS[l1]
    s2, p2 = VERBS[l2]
    if rng.random() < 0.15:
        p2 = "UNK"
    tokens = list(FILLER)
    i1, i2 = (1, 5) if rng.random() < 0.6 else (5, 1)
    tokens[i1] = s1
    tokens[i2] = s2
    rec = {
        "id": f"{prefix}{idx:03d}",
        "context": " ".join(tokens),
        "e1": mention(s1, l1, p1, tokens, i1),
        "e2": mention(s2, l2, p2, tokens, i2),
        "gold": gold,
    }
    dep = rng.choice(DEPS)
    if dep:
        rec["dep_label"] = dep
    return rec


def keys(rec):
    """(bias_type, key) observations of one pairwise record."""
    e1, e2, gold = rec["e1"], rec["e2"], rec["gold"]
    out = [("rel_prior", (e1["lemma"], e2["lemma"]))]
    if gold in ("before", "after", "equal") and e1["token_index"] != e2["token_index"]:
        order = "lt" if e1["token_index"] < e2["token_index"] else "gt"
        out.append(("narrative", order))
    if e1["pos_tag"] != "UNK" and e2["pos_tag"] != "UNK":
        out.append(("tense", (e1["pos_tag"], e2["pos_tag"])))
    if rec.get("dep_label"):
        out.append(("dependency", rec["dep_label"]))
    return out


def golden(train, dev):
    counts = defaultdict(Counter)
    for rec in train:
        for bt, key in keys(rec):
            counts[(bt, key)][rec["gold"]] += 1
    marg = Counter(r["gold"] for r in train)
    total = sum(marg.values())
    for r, t in THRESHOLDS.items():
        assert t <= marg[r] / total, (r, marg[r] / total)

    subsets = defaultdict(list)
    for rec in dev:
        gold = rec["gold"]
        for bt, key in keys(rec):
            if bt == "narrative":
                order = key
                clash = (order == "lt" and gold in ("after", "equal")) or (
                    order == "gt" and gold in ("before", "equal")
                )
                if clash:
                    subsets[bt].append(rec["id"])
                continue
            if gold not in THRESHOLDS:
                continue
            c = counts.get((bt, key))
            if not c:
                continue
            score = c[gold] / sum(c.values())
            if score < THRESHOLDS[gold]:
                subsets[bt].append(rec["id"])
    return {bt: sorted(subsets[bt]) for bt in ["rel_prior", "narrative", "tense", "dependency"]}


def write_jsonl(path, records):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


def matres():
    rng = random.Random(7)
    train = [make_pair(rng, i, "tr") for i in range(40)]
    dev = [make_pair(rng, i, "dv") for i in range(20)]
    base = ROOT / "matres"
    write_jsonl(base / "train.jsonl", train)
    write_jsonl(base / "dev.jsonl", dev)
    for bt, ids in golden(train, dev).items():
        (base / "golden").mkdir(parents=True, exist_ok=True)
        (base / "golden" / f"{bt}.txt").write_text("".join(i + "\n" for i in ids))


def rc_record(rid, words, question, answers, deps=()):
    tokens = [w for w, _, _ in words]
    cands = []
    for i, (w, lemma, pos) in enumerate(words):
        if lemma:
            cands.append(mention(w, lemma, pos, tokens, i))
    surfaces = [c["surface"] for c in cands]
    return {
        "id": rid,
        "passage": " ".join(tokens),
        "question": question,
        "candidates": cands,
        "gold_answer_indices": [surfaces.index(a) for a in answers],
        **({"dependencies": [dict(head=h, dependent=d, label=l) for h, d, l in deps]} if deps else {}),
    }


def torque():
    def story(a, b, c):
        return [
            ("They", None, None),
            (a[0], a[1], a[2]),
            ("and", None, None),
            (b[0], b[1], b[2]),
            ("before", None, None),
            ("they", None, None),
            (c[0], c[1], c[2]),
            (".", None, None),
        ]

    won = ("won", "win", "VBD")
    cel = ("celebrated", "celebrate", "VBD")
    slept = ("slept", "sleep", "VBD")
    ate = ("ate", "eat", "VBD")
    will = ("leave", "leave", "VB")
    train = [
        rc_record("t000", story(won, cel, slept), "What happened after they won?", ["celebrated", "slept"], [(0, 1, "conj")]),
        rc_record("t001", story(won, cel, ate), "What happened after they won?", ["celebrated", "ate"]),
        rc_record("t002", story(won, cel, slept), "What happened before they slept?", ["won", "celebrated"]),
        rc_record("t003", story(ate, cel, slept), "What happened while they celebrated?", ["ate"]),
        rc_record("t004", story(won, cel, will), "What have happened?", ["won", "celebrated"]),
        rc_record("t005", story(won, cel, will), "What will happen in the future?", ["leave"]),
        rc_record("t006", story(won, ate, slept), "What happened before they ate?", ["won"]),
        rc_record("t007", story(won, cel, slept), "What might happen if they won?", []),
    ]
    dev = [
        rc_record("d000", story(won, cel, slept), "What happened before they won?", ["celebrated"]),
        rc_record("d001", story(won, cel, ate), "What happened after they won?", ["celebrated", "ate"]),
        rc_record("d002", story(won, cel, will), "What will happen in the future?", ["celebrated"]),
        rc_record("d003", story(ate, cel, slept), "What happened while they ate?", ["celebrated"]),
    ]
    base = ROOT / "torque"
    write_jsonl(base / "train.jsonl", train)
    write_jsonl(base / "dev.jsonl", dev)


def synthetic():
    rng = random.Random(11)
    write_jsonl(ROOT / "synthetic" / "pairs.jsonl", [make_pair(rng, i, "sy") for i in range(800)])


if __name__ == "__main__":
    matres()
    torque()
    synthetic()
